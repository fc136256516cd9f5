import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from engine.gradcheck import numerical_gradient, relative_error
from engine.tensor import Tensor
from popup.layers import positional_encoding, posenc_dim
from popup.model import PopupNetwork, load_network, rotation_from_6d, save_network
from popup.templates import ClassEncoding, build_templates, one_hot, template_mesh
from tests.support import randomize_parameters, tiny_model_config
from tools.errors import CheckpointError, ConfigError, GeometryError, NumericError
from training.losses import loss_center, loss_class, loss_offset, total_loss


def assert_gradients_match(fn, tensors: dict, max_entries: int = 4, seed: int = 0):
    """Diferenças finitas vs backward; gradientes nulos comparados em absoluto."""
    rng = np.random.default_rng(seed)
    for t in tensors.values():
        t.zero_grad()
    fn().backward()
    for name, t in tensors.items():
        analytic = (t.grad if t.grad is not None else np.zeros_like(t.data)).ravel()
        assert np.all(np.isfinite(analytic)), name
        indices = np.arange(t.size) if t.size <= max_entries else np.sort(rng.choice(t.size, max_entries, replace=False))
        numeric = numerical_gradient(fn, t, indices=indices)
        a = analytic[indices]
        if np.max(np.abs(a)) < 1e-8 and np.max(np.abs(numeric)) < 1e-6:
            continue
        assert relative_error(a, numeric) < 1e-4, f"{name}: {a} vs {numeric}"


# ============================================================
# Templates e classe
# ============================================================


class TestTemplates:
    def test_keypoints_on_box_surface(self):
        (box,) = build_templates(["box"], 200, seed=1)
        half = np.abs(template_mesh("box").vertices).max(axis=0)
        on_face = np.isclose(np.abs(box.keypoints), half, atol=1e-6)
        assert on_face.any(axis=1).all()

    def test_keypoints_fixed_per_seed(self):
        a = build_templates(["ball", "stick"], 50, seed=2)
        b = build_templates(["ball", "stick"], 50, seed=2)
        for x, y in zip(a, b):
            assert_array_equal(x.keypoints, y.keypoints)

    def test_unknown_class_gets_box(self):
        mesh = template_mesh("cadeira")
        assert len(mesh.faces) == 12

    def test_one_hot(self):
        enc = one_hot(2, 4)
        assert_array_equal(enc.one_hot, [0, 0, 1, 0])
        assert enc.class_id == 2
        with pytest.raises(ConfigError):
            one_hot(4, 4)
        with pytest.raises(ConfigError):
            ClassEncoding(np.array([1.0, 1.0]))


# ============================================================
# Codificadores
# ============================================================


class TestEncodeGlobal:
    def test_permutation_invariance(self, tiny_network, human_cloud, rng):
        center, features = tiny_network.encode_global(human_cloud)
        for _ in range(20):
            perm = rng.permutation(len(human_cloud))
            c2, f2 = tiny_network.encode_global(human_cloud[perm])
            assert_allclose(c2.data, center.data, rtol=0, atol=1e-9)
            assert_allclose(f2.data, features.data, rtol=0, atol=1e-9)

    def test_deterministic_and_finite(self, tiny_config, human_cloud):
        a = PopupNetwork(tiny_config).encode_global(human_cloud)
        b = PopupNetwork(tiny_config).encode_global(human_cloud)
        assert_array_equal(a[0].data, b[0].data)
        assert np.all(np.isfinite(a[1].data))
        assert a[1].shape == (tiny_config.global_feature_dim,)

    def test_nan_activation_names_layer(self, tiny_network, human_cloud):
        layer = tiny_network.global_sa1.mlp.layers[0]
        layer.weight.data = np.full(layer.weight.shape, np.nan)
        with pytest.raises(NumericError, match="global_sa1.0"):
            tiny_network.encode_global(human_cloud)

    def test_empty_cloud(self, tiny_network):
        with pytest.raises(GeometryError):
            tiny_network.encode_global(np.zeros((0, 3)))


class TestEncodeLocal:
    @pytest.fixture
    def inputs(self, tiny_templates, human_cloud):
        center = human_cloud.mean(axis=0)
        return tiny_templates[0].keypoints + center, human_cloud[:30]

    def test_permuting_local_cloud(self, tiny_network, inputs, rng):
        keypoints, local = inputs
        base = tiny_network.encode_local(keypoints, local).data
        permuted = tiny_network.encode_local(keypoints, local[rng.permutation(len(local))]).data
        assert_allclose(permuted, base, rtol=0, atol=1e-12)

    def test_duplicated_points(self, tiny_network, inputs):
        keypoints, local = inputs
        base = tiny_network.encode_local(keypoints, local).data
        doubled = tiny_network.encode_local(keypoints, np.concatenate([local, local])).data
        assert_array_equal(doubled, base)

    def test_shape_follows_keypoints(self, tiny_network, tiny_config, inputs):
        keypoints, local = inputs
        out = tiny_network.encode_local(keypoints, local)
        assert out.shape == (tiny_config.num_keypoints, tiny_config.local_feature_dim)

    def test_empty_local_cloud(self, tiny_network, inputs):
        with pytest.raises(GeometryError):
            tiny_network.encode_local(inputs[0], np.zeros((0, 3)))

    def test_disabled_local_encoder(self, inputs):
        net = PopupNetwork(tiny_model_config(no_local_features=True))
        with pytest.raises(ConfigError):
            net.encode_local(*inputs)


# ============================================================
# Cabeças
# ============================================================


class TestDecodeOffsets:
    @pytest.fixture
    def parts(self, tiny_network, tiny_config, rng):
        k = tiny_config.num_keypoints
        keypoints = rng.normal(0.0, 0.1, size=(k, 3))
        f_global = Tensor(rng.normal(size=tiny_config.global_feature_dim))
        f_local = rng.normal(size=(k, tiny_config.local_feature_dim))
        return keypoints, f_global, f_local

    def test_identical_rows_identical_offsets(self, tiny_network, parts):
        keypoints, f_global, f_local = parts
        keypoints[3] = keypoints[5]
        f_local[3] = f_local[5]
        out = tiny_network.decode_offsets(keypoints, f_global, Tensor(f_local), 1).data
        assert_allclose(out[3], out[5], rtol=0, atol=1e-12)

    def test_row_swap_swaps_outputs(self, tiny_network, parts):
        keypoints, f_global, f_local = parts
        base = tiny_network.decode_offsets(keypoints, f_global, Tensor(f_local), 0).data
        perm = np.arange(len(keypoints))
        perm[[1, 7]] = perm[[7, 1]]
        swapped = tiny_network.decode_offsets(keypoints[perm], f_global, Tensor(f_local[perm]), 0).data
        assert_allclose(swapped, base[perm], rtol=0, atol=1e-12)

    def test_zero_final_layer(self, tiny_network, parts):
        keypoints, f_global, f_local = parts
        last = tiny_network.decoder.layers[-1]
        last.weight.data = np.zeros(last.weight.shape)
        last.bias.data = np.zeros(last.bias.shape)
        out = tiny_network.decode_offsets(keypoints, f_global, Tensor(f_local), 0)
        assert_array_equal(out.data, 0.0)

    def test_class_out_of_range(self, tiny_network, parts):
        keypoints, f_global, f_local = parts
        with pytest.raises(ConfigError):
            tiny_network.decode_offsets(keypoints, f_global, Tensor(f_local), 5)

    def test_positional_encoding_width(self, rng):
        out = positional_encoding(Tensor(rng.normal(size=(4, 3))), 6)
        assert out.shape == (4, posenc_dim(6)) == (4, 39)


class TestPredictClass:
    def test_distribution(self, tiny_network, human_cloud):
        _, f_global = tiny_network.encode_global(human_cloud)
        probs = tiny_network.predict_class(f_global).data
        assert probs.sum() == pytest.approx(1.0)
        assert np.all(probs >= 0)

    def test_uniform_logits(self, tiny_network, human_cloud):
        last = tiny_network.class_head.layers[-1]
        last.weight.data = np.zeros(last.weight.shape)
        last.bias.data = np.zeros(last.bias.shape)
        _, f_global = tiny_network.encode_global(human_cloud)
        assert_allclose(tiny_network.predict_class(f_global).data, [0.5, 0.5])

    def test_global_local_variant(self, human_cloud, tiny_templates):
        net = PopupNetwork(tiny_model_config(class_head_input="global_local"))
        out = net.forward(human_cloud, tiny_templates[0].keypoints)
        assert out.logits.shape == (2,)
        assert out.class_id == int(np.argmax(out.logits.data))

    def test_head_disabled(self, human_cloud):
        net = PopupNetwork(tiny_model_config(class_head=False))
        _, f_global = net.encode_global(human_cloud)
        with pytest.raises(ConfigError):
            net.predict_class(f_global)


class TestDirectRtHead:
    def test_rotation_is_orthonormal(self, human_cloud, tiny_templates):
        net = PopupNetwork(tiny_model_config(direct_rt=True))
        randomize_parameters(net, seed=4)
        out = net.forward(human_cloud, tiny_templates[1].keypoints, 1)
        R = out.rotation.data
        assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)

    def test_zero_weights_give_identity(self, human_cloud, tiny_templates):
        net = PopupNetwork(tiny_model_config(direct_rt=True))
        last = net.rt_head.layers[-1]
        last.weight.data = np.zeros(last.weight.shape)
        last.bias.data = np.zeros(last.bias.shape)
        out = net.forward(human_cloud, tiny_templates[0].keypoints, 0)
        assert_allclose(out.rotation.data, np.eye(3), atol=1e-12)
        assert_allclose(out.translation.data, 0.0)
        assert_allclose(out.predicted_keypoints.data, tiny_templates[0].keypoints + out.center_used, atol=1e-12)

    def test_disabled(self, tiny_network, human_cloud):
        _, f_global = tiny_network.encode_global(human_cloud)
        with pytest.raises(ConfigError):
            tiny_network.direct_rt_head(f_global, None, 0)

    def test_gram_schmidt(self, rng):
        R = rotation_from_6d(Tensor(rng.normal(size=9))).data
        assert_allclose(R.T @ R, np.eye(3), atol=1e-12)


# ============================================================
# Passo completo e gradientes
# ============================================================


class TestForward:
    def test_cloud_permutation(self, tiny_network, human_cloud, tiny_templates, rng):
        K = tiny_templates[0].keypoints
        a = tiny_network.forward(human_cloud, K, 0)
        b = tiny_network.forward(human_cloud[rng.permutation(len(human_cloud))], K, 0)
        assert_allclose(b.offsets.data, a.offsets.data, rtol=0, atol=1e-9)

    def test_center_override_is_used(self, tiny_network, human_cloud, tiny_templates):
        override = np.array([0.2, 0.1, 0.9])
        out = tiny_network.forward(human_cloud, tiny_templates[0].keypoints, 0, center_used=override)
        assert_array_equal(out.center_used, override)
        assert_allclose(out.keypoints_at_center, tiny_templates[0].keypoints + override)

    def test_wrong_keypoint_count(self, tiny_network, human_cloud):
        with pytest.raises(ConfigError):
            tiny_network.forward(human_cloud, np.zeros((5, 3)), 0)

    def test_class_required_without_head(self, human_cloud, tiny_templates):
        net = PopupNetwork(tiny_model_config(class_head=False))
        with pytest.raises(ConfigError):
            net.forward(human_cloud, tiny_templates[0].keypoints)


class TestGradients:
    @pytest.fixture
    def toy(self):
        rng = np.random.default_rng(21)
        config = tiny_model_config(num_keypoints=4, local_k=8)
        net = PopupNetwork(config)
        randomize_parameters(net, seed=5, scale=0.3)
        templates = build_templates(["ball", "board"], 4, seed=3)
        cloud = rng.normal(0.0, 0.3, size=(10, 3))
        gt_center = np.array([0.05, -0.02, 0.1])
        gt_keypoints = templates[1].keypoints + gt_center + rng.normal(0.0, 0.01, size=(4, 3))
        return net, templates, cloud, gt_center, gt_keypoints

    def _loss(self, net, K, cloud, gt_center, gt_keypoints):
        # centro usado fixo: o centro previsto não propaga gradiente
        out = net.forward(cloud, K, 1, center_used=gt_center)
        l_c = loss_center(out.center, gt_center)
        l_off = loss_offset(out.offsets, gt_keypoints - (K + gt_center))
        return total_loss(l_c, l_off, loss_class(out.logits, 1), alpha=100.0)

    def test_wrt_parameters(self, toy):
        net, templates, cloud, gt_center, gt_keypoints = toy
        K = templates[1].keypoints
        assert_gradients_match(lambda: self._loss(net, K, cloud, gt_center, gt_keypoints), net.parameters())

    def test_wrt_input_points(self, toy):
        net, templates, cloud, gt_center, gt_keypoints = toy
        K = templates[1].keypoints
        P = Tensor(cloud, requires_grad=True)
        assert_gradients_match(
            lambda: self._loss(net, K, P, gt_center, gt_keypoints), {"cloud": P}, max_entries=30
        )


# ============================================================
# Persistência
# ============================================================


class TestPersistence:
    def test_save_and_load(self, tmp_path, tiny_network, tiny_templates, human_cloud):
        path = str(tmp_path / "net.npz")
        save_network(path, tiny_network, tiny_templates, metadata={"epoch": 1})
        net, templates, ckpt = load_network(path)
        assert [t.name for t in templates] == ["ball", "board"]
        for name, value in tiny_network.state_dict().items():
            assert_array_equal(net.state_dict()[name], value)
        K = templates[0].keypoints
        assert_array_equal(net.forward(human_cloud, K, 0).offsets.data, tiny_network.forward(human_cloud, K, 0).offsets.data)
        assert ckpt.metadata["epoch"] == 1

    def test_shape_mismatch_on_load(self, tiny_network):
        state = tiny_network.state_dict()
        name = next(iter(state))
        state[name] = np.zeros((1, 1))
        with pytest.raises(CheckpointError):
            tiny_network.load_state_dict(state)

    def test_missing_parameter(self, tiny_network):
        state = tiny_network.state_dict()
        state.pop(next(iter(state)))
        with pytest.raises(CheckpointError):
            tiny_network.load_state_dict(state)
