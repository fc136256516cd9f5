import dataclasses
import json
import logging
import shutil

import numpy as np
import pandas as pd
import pytest

from data.dataset import downsample_indices, downsample_sequence, load_dataset, read_frame_sequence
from data.synthetic import HAND_SEGMENTS, build_layout, generate_synthetic
from evaluation.baseline import nn_retrieve
from geometry.mesh_io import write_xyz
from geometry.pointcloud import PointCloud
from inference.pipeline import FrameSequence, PopupPredictor
from popup.model import PopupNetwork
from tests.support import TINY_DATA, tiny_model_config
from tools.errors import ConfigError, DataError, DatasetError, NotApplicableError
from tools.tools import sha256_file


@pytest.fixture
def dataset_copy(tiny_dataset_dir, tmp_path):
    target = tmp_path / "copy"
    shutil.copytree(tiny_dataset_dir, target)
    return target


def _rewrite_manifest(root, change):
    path = root / "manifest.json"
    manifest = json.loads(path.read_text(encoding="utf-8"))
    change(manifest)
    path.write_text(json.dumps(manifest), encoding="utf-8")


class TestGenerateSynthetic:
    def test_manifest(self, tiny_dataset_dir):
        manifest = json.loads((tiny_dataset_dir / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["classes"] == ["box", "stick", "ball", "board"]
        assert len(manifest["sequences"]) == TINY_DATA.sequences
        assert manifest["points"] == TINY_DATA.points
        assert manifest["fps"] == TINY_DATA.fps
        for rel, digest in manifest["files"].items():
            assert sha256_file(str(tiny_dataset_dir / rel)) == digest

    def test_splits_disjoint_and_stratified(self, tiny_dataset):
        seen = []
        for split in ("train", "val", "test"):
            ids = tiny_dataset.sequence_ids(split)
            seen += ids
            # 3 sequências por classe: uma em cada split
            assert sorted(tiny_dataset.class_id(s) for s in ids) == [0, 1, 2, 3]
        assert len(seen) == len(set(seen)) == TINY_DATA.sequences

    def test_same_seed_is_byte_identical(self, tiny_dataset_dir, tmp_path):
        generate_synthetic(TINY_DATA, str(tmp_path))
        assert (tmp_path / "manifest.json").read_bytes() == (tiny_dataset_dir / "manifest.json").read_bytes()
        manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
        for rel in manifest["files"]:
            assert (tmp_path / rel).read_bytes() == (tiny_dataset_dir / rel).read_bytes()

    def test_other_seed_differs(self, tiny_dataset_dir, tmp_path):
        generate_synthetic(TINY_DATA, str(tmp_path), seed=TINY_DATA.seed + 1)
        a = np.load(tiny_dataset_dir / "sequences" / "seq_0000.npy")
        b = np.load(tmp_path / "sequences" / "seq_0000.npy")
        assert not np.array_equal(a, b)

    def test_workers_do_not_change_output(self, tiny_dataset_dir, tmp_path):
        generate_synthetic(dataclasses.replace(TINY_DATA, workers=3), str(tmp_path))
        assert (tmp_path / "manifest.json").read_bytes() == (tiny_dataset_dir / "manifest.json").read_bytes()

    def test_object_near_anchor(self, tiny_dataset_dir, tiny_dataset):
        for sequence_id in tiny_dataset.sequence_ids():
            poses = pd.read_csv(tiny_dataset_dir / "sequences" / f"{sequence_id}_poses.csv")
            center = poses[["tx", "ty", "tz"]].to_numpy()
            anchor = poses[["anchor_x", "anchor_y", "anchor_z"]].to_numpy()
            distance = np.linalg.norm(center - anchor, axis=1)
            assert np.all(distance <= TINY_DATA.interaction_distance)

    def test_rotations_valid(self, tiny_dataset):
        for sequence_id in tiny_dataset.sequence_ids():
            for frame in range(TINY_DATA.frames):
                R = tiny_dataset.transform(sequence_id, frame).R
                np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
                assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)

    def test_single_interaction_mode_rejected(self, tmp_path):
        config = dataclasses.replace(TINY_DATA, classes=("ball", "stick"))
        with pytest.raises(ConfigError):
            generate_synthetic(config, str(tmp_path))

    def test_write_ply_frames(self, tmp_path):
        config = dataclasses.replace(TINY_DATA, sequences=2, frames=2, write_ply=True)
        generate_synthetic(config, str(tmp_path))
        assert (tmp_path / "sequences" / "seq_0000" / "frame_0001.ply").exists()


class TestLoadDataset:
    def test_clouds_and_templates(self, tiny_dataset):
        sequence_id = tiny_dataset.sequence_ids("train")[0]
        clouds = tiny_dataset.clouds(sequence_id)
        assert clouds.shape == (TINY_DATA.frames, TINY_DATA.points, 3)
        cloud = tiny_dataset.cloud(sequence_id, 2)
        assert cloud.dtype == np.float64
        np.testing.assert_array_equal(cloud, clouds[2].astype(np.float64))
        assert [t.name for t in tiny_dataset.templates] == ["box", "stick", "ball", "board"]
        assert all(t.keypoints.shape == (TINY_DATA.num_keypoints, 3) for t in tiny_dataset.templates)

    def test_manifest_path_or_directory(self, tiny_dataset_dir):
        a = load_dataset(str(tiny_dataset_dir))
        b = load_dataset(str(tiny_dataset_dir / "manifest.json"))
        assert a.sequence_ids() == b.sequence_ids()

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError, match="Manifesto"):
            load_dataset(str(tmp_path))

    def test_missing_key(self, dataset_copy):
        _rewrite_manifest(dataset_copy, lambda m: m.pop("splits"))
        with pytest.raises(DatasetError, match="splits"):
            load_dataset(str(dataset_copy))

    def test_overlapping_splits_rejected(self, dataset_copy):
        def overlap(manifest):
            manifest["splits"]["test"].append(manifest["splits"]["train"][0])

        _rewrite_manifest(dataset_copy, overlap)
        with pytest.raises(DatasetError, match="aparece nos splits"):
            load_dataset(str(dataset_copy))

    def test_corrupted_template_names_file(self, dataset_copy):
        path = dataset_copy / "templates" / "ball.obj"
        path.write_text(path.read_text(encoding="utf-8") + "\n# alterado\n", encoding="utf-8")
        with pytest.raises(DatasetError, match="ball.obj"):
            load_dataset(str(dataset_copy))

    def test_corrupted_sequence_names_file(self, dataset_copy):
        dataset = load_dataset(str(dataset_copy))
        sequence_id = dataset.sequence_ids("test")[0]
        path = dataset_copy / "sequences" / f"{sequence_id}.npy"
        payload = bytearray(path.read_bytes())
        payload[-1] ^= 0xFF
        path.write_bytes(bytes(payload))
        with pytest.raises(DatasetError, match=f"{sequence_id}.npy"):
            dataset.cloud(sequence_id, 0)

    def test_unknown_split_and_sequence(self, tiny_dataset):
        with pytest.raises(DatasetError):
            tiny_dataset.sequence_ids("holdout")
        with pytest.raises(DatasetError):
            tiny_dataset.clouds("seq_9999")


class TestSamples:
    def test_train_samples_downsampled(self, tiny_dataset):
        samples = tiny_dataset.train_samples("train", fps=10.0)
        # 6 quadros a 30 fps -> quadros 0 e 3
        assert len(samples) == 2 * len(tiny_dataset.sequence_ids("train"))
        assert [s.frame_index for s in samples[:2]] == [0, 3]

    def test_train_sample_ground_truth(self, tiny_dataset):
        sequence_id = tiny_dataset.sequence_ids("train")[0]
        sample = tiny_dataset.train_sample(sequence_id, 3)
        transform = tiny_dataset.transform(sequence_id, 3)
        template = tiny_dataset.templates[sample.class_id]
        np.testing.assert_array_equal(sample.gt_center, transform.t)
        np.testing.assert_allclose(sample.gt_keypoints, transform.apply(template.keypoints))
        np.testing.assert_array_equal(sample.gt_rotation, transform.R)

    def test_eval_samples(self, tiny_dataset):
        samples = tiny_dataset.eval_samples("test")
        assert len(samples) == len(tiny_dataset.sequence_ids("test")) * TINY_DATA.frames
        assert {s.sequence_id for s in samples} == set(tiny_dataset.sequence_ids("test"))

    def test_train_bank(self, tiny_dataset):
        bank = tiny_dataset.train_bank()
        assert len(bank) == len(tiny_dataset.sequence_ids("train")) * TINY_DATA.frames
        assert bank.point_count == TINY_DATA.points

    def test_frame_sequence(self, tiny_dataset):
        sequence_id = tiny_dataset.sequence_ids("val")[0]
        seq = tiny_dataset.frame_sequence(sequence_id, fps=10.0)
        assert len(seq) == 2
        assert seq.fps == pytest.approx(10.0)
        assert seq.frame_indices == [0, 3]
        _, truth = seq.frames[1]
        assert truth.class_id == tiny_dataset.class_id(sequence_id)


class TestDownsample:
    def test_every_third_frame(self):
        assert downsample_indices(9, 30.0, 10.0) == [0, 3, 6]

    def test_same_rate_is_identity(self):
        assert downsample_indices(7, 30.0, 30.0) == list(range(7))
        assert downsample_indices(7, 30.0, None) == list(range(7))

    def test_quarter_rate(self):
        assert len(downsample_indices(120, 120.0, 30.0)) == 30

    def test_non_integer_stride_rounds(self, caplog):
        with caplog.at_level(logging.WARNING):
            indices = downsample_indices(20, 30.0, 7.0)
        assert indices == [0, 4, 8, 12, 16]
        assert "passo 4" in caplog.text

    def test_invalid_target(self):
        with pytest.raises(DatasetError):
            downsample_indices(10, 30.0, 0.0)

    def test_sequence(self):
        frames = [(PointCloud(np.full((4, 3), float(i))), None) for i in range(9)]
        seq = downsample_sequence(FrameSequence(frames, fps=30.0), 10.0)
        assert len(seq) == 3
        assert seq.fps == pytest.approx(10.0)
        assert seq.frame_indices == [0, 3, 6]
        np.testing.assert_array_equal(seq.frames[2][0].points, 6.0)


class TestReadFrameSequence:
    def test_npy_stack(self, tmp_path, rng):
        stack = rng.normal(size=(4, 10, 3))
        np.save(tmp_path / "frames.npy", stack)
        seq = read_frame_sequence(str(tmp_path / "frames.npy"), fps=15.0)
        assert len(seq) == 4
        assert seq.fps == 15.0
        np.testing.assert_array_equal(seq.frames[3][0].points, stack[3])
        assert all(truth is None for _, truth in seq.frames)

    def test_directory_sorted(self, tmp_path, rng):
        frames = [rng.normal(size=(5, 3)) for _ in range(3)]
        for i, points in enumerate(frames):
            write_xyz(str(tmp_path / f"frame_{i:04d}.xyz"), points)
        (tmp_path / "notes.md").write_text("ignorado", encoding="utf-8")
        seq = read_frame_sequence(str(tmp_path), fps=30.0)
        assert len(seq) == 3
        np.testing.assert_allclose(seq.frames[1][0].points, frames[1])

    def test_bad_inputs(self, tmp_path):
        np.save(tmp_path / "flat.npy", np.zeros((4, 3)))
        with pytest.raises(DataError):
            read_frame_sequence(str(tmp_path / "flat.npy"), fps=30.0)
        with pytest.raises(DataError):
            read_frame_sequence(str(tmp_path / "missing.npy"), fps=30.0)
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(DataError):
            read_frame_sequence(str(empty), fps=30.0)


class TestInputVariants:
    def test_rest_hands_only_moves_fingers(self, tmp_path):
        config = dataclasses.replace(TINY_DATA, sequences=4, frames=3)
        generate_synthetic(config, str(tmp_path / "full"))
        generate_synthetic(dataclasses.replace(config, input_variant="rest_hands"), str(tmp_path / "rest"))
        layout = build_layout(config.points, np.random.default_rng([config.seed, 0]), "full")
        fingers = np.array([layout.segments[s][0].startswith("finger_") for s in layout.segment])

        full = np.load(tmp_path / "full" / "sequences" / "seq_0002.npy")
        rest = np.load(tmp_path / "rest" / "sequences" / "seq_0002.npy")
        np.testing.assert_array_equal(full[:, ~fingers], rest[:, ~fingers])
        assert not np.array_equal(full[:, fingers], rest[:, fingers])

    def test_hands_layout(self, tmp_path):
        layout = build_layout(500, np.random.default_rng(0), "hands")
        assert len(layout) == 500
        assert {s[0] for s in layout.segments} == HAND_SEGMENTS

        config = dataclasses.replace(TINY_DATA, sequences=4, frames=2, input_variant="hands")
        generate_synthetic(config, str(tmp_path))
        dataset = load_dataset(str(tmp_path))
        assert dataset.manifest["input_variant"] == "hands"
        assert dataset.cloud("seq_0000", 1).shape == (TINY_DATA.points, 3)


class TestRawScans:
    @pytest.fixture
    def raw_dataset(self, tmp_path):
        config = dataclasses.replace(TINY_DATA, frames=2, raw_scans=True, raw_points=400, raw_noise=0.004)
        generate_synthetic(config, str(tmp_path))
        return load_dataset(str(tmp_path))

    def test_dense_noisy_copy_of_first_frame(self, raw_dataset):
        sequence_id = raw_dataset.sequence_ids("test")[0]
        raw = raw_dataset.raw_scan(sequence_id)
        assert raw.shape == (400, 3)
        frame = raw_dataset.cloud(sequence_id, 0)
        # mesma figura: cada ponto da varredura fica perto da nuvem do quadro 0
        nearest = np.min(np.linalg.norm(raw[:, None, :] - frame[None, :, :], axis=2), axis=1)
        assert np.median(nearest) < 0.1

    def test_popup_accepts_baseline_rejects(self, raw_dataset):
        sequence_id = raw_dataset.sequence_ids("test")[0]
        raw = raw_dataset.raw_scan(sequence_id)
        net = PopupNetwork(tiny_model_config(num_classes=len(raw_dataset.classes)))
        estimate = PopupPredictor(net, raw_dataset.templates).popup_single(raw, raw_dataset.class_id(sequence_id))
        assert np.all(np.isfinite(estimate.transform.t))
        with pytest.raises(NotApplicableError):
            nn_retrieve(raw, raw_dataset.train_bank())

    def test_missing_raw_scan(self, tiny_dataset):
        with pytest.raises(DatasetError, match="varredura"):
            tiny_dataset.raw_scan(tiny_dataset.sequence_ids()[0])
