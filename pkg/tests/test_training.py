import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.spatial.transform import Rotation

from engine.tensor import Tensor
from popup.model import load_network
from tests.support import tiny_model_config, tiny_train_config
from tools.config import TrainConfig
from tools.errors import ConfigError, DataError, NumericError, ShapeError, TrainingDivergedError
from training.augment import AugmentationRanges, TrainSample, augment_sample
from training.losses import loss_center, loss_class, loss_offset, total_loss
from training.trainer import Trainer, learning_rate, train


@pytest.fixture
def samples(tiny_templates):
    rng = np.random.default_rng(8)
    out = []
    for i in range(10):
        class_id = i % 2
        cloud = rng.normal(0.0, 0.3, size=(60, 3)) + np.array([0.0, 0.0, 1.0])
        center = cloud.mean(axis=0) + rng.normal(0.0, 0.05, 3)
        R = Rotation.random(random_state=i).as_matrix()
        keypoints = tiny_templates[class_id].keypoints @ R.T + center
        out.append(
            TrainSample(cloud, class_id, center, keypoints, R, sequence_id=f"s{i // 5}", frame_index=i % 5)
        )
    return out


# ============================================================
# Perdas
# ============================================================


class TestLosses:
    def test_center(self, rng):
        assert loss_center([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
        assert loss_center([1.0, 0.0, 0.0], [0.0, 0.0, 0.0]) == pytest.approx(1.0)
        a, b = rng.normal(size=3), rng.normal(size=3)
        assert loss_center(a, b) == pytest.approx(sum((x - y) ** 2 for x, y in zip(a, b)))

    def test_offset(self, rng):
        d = rng.normal(size=(1500, 3))
        assert loss_offset(d, d) == 0.0
        assert loss_offset(d + np.array([0.0, 0.0, 1.0]), d) == pytest.approx(1500.0)
        e = rng.normal(size=(1500, 3))
        assert loss_offset(d, e) == pytest.approx(np.sum((d - e) ** 2))

    def test_offset_shape_mismatch(self):
        with pytest.raises(ShapeError):
            loss_offset(np.zeros((4, 3)), np.zeros((5, 3)))

    def test_tensor_path_matches_array_path(self, rng):
        d, e = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
        assert loss_offset(Tensor(d), e).item() == pytest.approx(loss_offset(d, e))

    def test_total(self):
        assert total_loss(1.0, 1.0, None, 10.0) == pytest.approx(11.0)
        assert total_loss(0.0, 0.0, 0.0, 100.0) == 0.0
        assert total_loss(0.5, 0.2, 0.3, 100.0) == pytest.approx(20.8)

    def test_total_rejects_negative(self):
        with pytest.raises(NumericError):
            total_loss(-1.0, 0.0)

    def test_class_loss(self):
        logits = Tensor(np.array([2.0, 0.0]))
        expected = -np.log(np.exp(2.0) / (np.exp(2.0) + 1.0))
        assert loss_class(logits, 0).item() == pytest.approx(expected)


# ============================================================
# Aumento de dados
# ============================================================


class TestAugment:
    def test_zero_ranges(self, samples, rng):
        sample = samples[0]
        assert augment_sample(sample, rng, AugmentationRanges(0.0, 0.0)) is sample

    def test_translation_only(self, samples, rng):
        sample = samples[0]
        out = augment_sample(sample, rng, AugmentationRanges(0.05, 0.0))
        v = out.gt_center - sample.gt_center
        assert np.all(np.abs(v) <= 0.05)
        assert_allclose(out.gt_keypoints, sample.gt_keypoints + v, atol=1e-12)

    def test_rotation_only_preserves_distances(self, samples, rng):
        sample = samples[1]
        out = augment_sample(sample, rng, AugmentationRanges(0.0, 15.0))
        assert_array_equal(out.gt_center, sample.gt_center)
        before = np.linalg.norm(sample.gt_keypoints - sample.gt_center, axis=1)
        after = np.linalg.norm(out.gt_keypoints - out.gt_center, axis=1)
        assert_allclose(after, before, atol=1e-9)
        R = out.gt_rotation @ sample.gt_rotation.T
        assert np.degrees(Rotation.from_matrix(R).magnitude()) <= 15.0 + 1e-9

    def test_cloud_untouched(self, samples, rng):
        sample = samples[2]
        before = sample.cloud.tobytes()
        out = augment_sample(sample, rng, AugmentationRanges())
        assert out.cloud.tobytes() == before

    def test_gt_offsets_against_center_used(self, samples, tiny_templates):
        sample = samples[0]
        K = tiny_templates[0].keypoints
        used = np.array([0.1, 0.2, 0.3])
        assert_allclose(sample.gt_offsets(K, used) + K + used, sample.gt_keypoints)


# ============================================================
# Agenda e configuração
# ============================================================


class TestSchedule:
    def test_default_lr_ranges(self):
        cfg = TrainConfig()
        for epoch, expected in ((0, 1e-4), (29, 1e-4), (30, 1e-5), (39, 1e-5), (40, 1e-6), (59, 1e-6)):
            assert learning_rate(epoch, cfg) == pytest.approx(expected)

    def test_alpha_follows_class_head(self):
        cfg = TrainConfig()
        assert cfg.resolved_alpha(False) == 10.0
        assert cfg.resolved_alpha(True) == 100.0
        assert TrainConfig(alpha=3.0).resolved_alpha(True) == 3.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epochs": 10, "warmup_epochs_gt_center": 10},
            {"epochs": 10, "warmup_epochs_gt_center": 2, "lr_decay_epochs": (10,)},
            {"alpha": 0.0},
            {"lr": -1.0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)


# ============================================================
# Laço de treino
# ============================================================


class TestTrainer:
    def test_smoke_run(self, tmp_path, tiny_templates, samples):
        result = train(tiny_model_config(), tiny_train_config(epochs=2), tiny_templates, samples, str(tmp_path))
        assert len(result.log) == 2
        lines = (tmp_path / "train_log.jsonl").read_text(encoding="utf-8").splitlines()
        assert [json.loads(line)["epoch"] for line in lines] == [0, 1]
        assert (tmp_path / "loss_curve.csv").exists()

        net, templates, ckpt = load_network(result.checkpoint_path)
        for name, value in result.network.state_dict().items():
            assert_array_equal(net.state_dict()[name], value)
        assert ckpt.metadata["epoch"] == 1
        assert ckpt.optimizer.step > 0

    def test_same_seed_same_parameters(self, tmp_path, tiny_templates, samples):
        a = train(tiny_model_config(), tiny_train_config(epochs=2), tiny_templates, samples, str(tmp_path / "a"))
        b = train(tiny_model_config(), tiny_train_config(epochs=2), tiny_templates, samples, str(tmp_path / "b"))
        for name, value in a.network.state_dict().items():
            assert_array_equal(b.network.state_dict()[name], value)

    def test_warmup_switch(self, tmp_path, tiny_templates, samples):
        trainer = Trainer(tiny_model_config(), tiny_train_config(epochs=4, warmup_epochs_gt_center=2), tiny_templates, str(tmp_path))
        # cabeça de centro propositalmente errada: centro previsto longe do verdadeiro
        last = trainer.net.center_head.layers[-1]
        last.weight.data = np.zeros(last.weight.shape)
        last.bias.data = np.array([0.4, -0.4, 0.2])
        sample = samples[0]

        before = trainer.forward_sample(sample, epoch=1)
        after = trainer.forward_sample(sample, epoch=2)
        assert_array_equal(before.center_used, sample.gt_center)
        assert_allclose(after.center_used, [0.4, -0.4, 0.2])
        assert not np.allclose(before.f_local.data, after.f_local.data)

    def test_validation_reports_center_error(self, tmp_path, tiny_templates, samples):
        result = train(tiny_model_config(), tiny_train_config(epochs=2), tiny_templates, samples[:6], str(tmp_path), samples[6:])
        assert all(r.val_e_c is not None and r.val_e_c > 0 for r in result.log)

    def test_divergence_keeps_last_good_checkpoint(self, tmp_path, tiny_templates, samples, monkeypatch):
        original = Trainer.sample_losses

        def exploding(self, sample, epoch):
            total, l_c, l_off, l_cls = original(self, sample, epoch)
            if epoch == 1:
                total = total * float("nan")
            return total, l_c, l_off, l_cls

        monkeypatch.setattr(Trainer, "sample_losses", exploding)
        with pytest.raises(TrainingDivergedError) as info:
            train(tiny_model_config(), tiny_train_config(epochs=3), tiny_templates, samples, str(tmp_path))
        assert info.value.checkpoint_path.endswith("checkpoint_last.npz")
        _, _, ckpt = load_network(info.value.checkpoint_path)
        assert ckpt.metadata["epoch"] == 0

    def test_non_finite_parameter_aborts_with_checkpoint(self, tmp_path, tiny_templates, samples):
        trainer = Trainer(tiny_model_config(), tiny_train_config(epochs=2), tiny_templates, str(tmp_path))
        first = trainer.net.center_head.layers[0]
        first.weight.data[0, 0] = np.inf
        with pytest.raises(TrainingDivergedError) as info:
            trainer.run(samples)
        assert info.value.checkpoint_path.endswith("checkpoint_last.npz")
        assert (tmp_path / "checkpoint_last.npz").exists()
        assert "época 0" in str(info.value)

    def test_ablation_flags_reach_the_network(self, tmp_path, tiny_templates):
        trainer = Trainer(
            tiny_model_config(), tiny_train_config(direct_rt=True, no_local_features=True), tiny_templates, str(tmp_path)
        )
        assert trainer.net.rt_head is not None
        assert trainer.net.local_sa is None

    def test_empty_training_set(self, tmp_path, tiny_templates):
        with pytest.raises(DataError):
            train(tiny_model_config(), tiny_train_config(), tiny_templates, [], str(tmp_path))
