"""
Leitura de um dataset gerado por `data.synthetic` (ou convertido para o
mesmo layout): manifesto, verificação de checksums, acesso preguiçoso às
nuvens via memmap e montagem das amostras de treino e avaliação.
"""

from __future__ import annotations

import json
import logging
import os
from collections.abc import Sequence

import numpy as np
import pandas as pd

from evaluation.baseline import TrainBank
from evaluation.samples import EvalSample
from geometry.mesh_io import load_point_cloud, read_obj
from geometry.pointcloud import PointCloud, RigidTransform
from inference.pipeline import FrameGroundTruth, FrameSequence
from popup.templates import ObjectTemplate
from tools.errors import DataError, DatasetError
from tools.tools import TableFile, sha256_file
from training.augment import TrainSample

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
POSE_COLUMNS = ["frame", "class_id"] + [f"r{i}{j}" for i in range(3) for j in range(3)] + ["tx", "ty", "tz"]


def downsample_indices(n_frames: int, source_fps: float, target_fps: float | None) -> list[int]:
    """Índices de quadros com passo round(source/target); nunca aumenta a taxa."""
    if target_fps is None or target_fps >= source_fps:
        return list(range(n_frames))
    if target_fps <= 0:
        raise DatasetError(f"fps alvo inválido: {target_fps}")
    exact = source_fps / target_fps
    stride = max(1, int(round(exact)))
    if abs(stride - exact) > 1e-9:
        logger.warning(
            "Taxa %.3g fps não divide %.3g fps; usando passo %d (%.3g fps efetivos)",
            target_fps, source_fps, stride, source_fps / stride,
        )
    return list(range(0, n_frames, stride))


def downsample_sequence(seq: FrameSequence, target_fps: float) -> FrameSequence:
    keep = downsample_indices(len(seq), seq.fps, target_fps)
    stride = keep[1] - keep[0] if len(keep) > 1 else 1
    return FrameSequence(
        frames=[seq.frames[k] for k in keep],
        fps=seq.fps / stride,
        sequence_id=seq.sequence_id,
        frame_indices=[seq.frame_indices[k] for k in keep],
    )


FRAME_EXTENSIONS = (".ply", ".xyz", ".txt", ".npy")


def read_frame_sequence(path: str, fps: float) -> FrameSequence:
    """
    Sequência sem verdade de campo a partir de um `.npy` (quadros, N, 3) ou
    de um diretório com um arquivo de nuvem por quadro (ordem alfabética).
    """
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.lower().endswith(FRAME_EXTENSIONS))
        if not names:
            raise DataError(f"Nenhum quadro encontrado em {path}")
        clouds = [load_point_cloud(os.path.join(path, n)) for n in names]
    elif path.lower().endswith(".npy") and os.path.exists(path):
        stack = np.load(path, allow_pickle=False)
        if stack.ndim != 3 or stack.shape[2] != 3:
            raise DataError(f"{path}: esperado (quadros, N, 3), recebido {stack.shape}")
        clouds = [PointCloud(np.asarray(frame, dtype=np.float64)) for frame in stack]
    else:
        raise DataError(f"Sequência não encontrada ou formato não suportado: {path}")
    return FrameSequence([(cloud, None) for cloud in clouds], fps=fps, sequence_id=os.path.basename(path))


class LazySamples(Sequence):
    """Lista de amostras de treino montadas sob demanda a partir do memmap."""

    def __init__(self, dataset: "PopupDataset", keys: list[tuple[str, int]]):
        self.dataset = dataset
        self.keys = keys

    def __len__(self) -> int:
        return len(self.keys)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return LazySamples(self.dataset, self.keys[index])
        sequence_id, frame = self.keys[index]
        return self.dataset.train_sample(sequence_id, frame)


class PopupDataset:
    def __init__(self, root: str, manifest: dict):
        self.root = root
        self.manifest = manifest
        self.classes: list[str] = list(manifest["classes"])
        self.fps = float(manifest["fps"])
        self.splits: dict[str, list[str]] = {name: list(manifest["splits"].get(name, [])) for name in SPLITS}
        self.sequences = {entry["id"]: entry for entry in manifest["sequences"]}
        self._checksums: dict[str, str] = manifest.get("files", {})
        self._verified: set[str] = set()
        self._clouds: dict[str, np.ndarray] = {}
        self._poses: dict[str, pd.DataFrame] = {}
        self._validate_splits()
        self.templates = self._load_templates()

    def _validate_splits(self) -> None:
        seen: dict[str, str] = {}
        for name in SPLITS:
            for sequence_id in self.splits[name]:
                if sequence_id not in self.sequences:
                    raise DatasetError(f"split '{name}' cita a sequência inexistente {sequence_id}")
                if sequence_id in seen:
                    raise DatasetError(
                        f"sequência {sequence_id} aparece nos splits '{seen[sequence_id]}' e '{name}'"
                    )
                seen[sequence_id] = name

    def path(self, rel: str) -> str:
        """Caminho absoluto de um arquivo do manifesto, com checksum conferido uma vez."""
        full = os.path.join(self.root, rel)
        if not os.path.exists(full):
            raise DatasetError(f"Arquivo do dataset não encontrado: {full}")
        if rel not in self._verified and rel in self._checksums:
            if sha256_file(full) != self._checksums[rel]:
                raise DatasetError(f"Checksum não confere: {full}")
            self._verified.add(rel)
        return full

    def _load_templates(self) -> list[ObjectTemplate]:
        templates = []
        for class_id, name in enumerate(self.classes):
            mesh = read_obj(self.path(f"templates/{name}.obj"))
            keypoints = np.load(self.path(f"templates/{name}_keypoints.npy"), allow_pickle=False)
            templates.append(ObjectTemplate(class_id, name, mesh, np.asarray(keypoints, dtype=np.float64)))
        return templates

    # --------------------------------------------------------

    def sequence_ids(self, split: str | None = None) -> list[str]:
        if split is None:
            return sorted(self.sequences)
        if split not in self.splits:
            raise DatasetError(f"split desconhecido: {split}")
        return list(self.splits[split])

    def clouds(self, sequence_id: str) -> np.ndarray:
        if sequence_id not in self.sequences:
            raise DatasetError(f"sequência desconhecida: {sequence_id}")
        if sequence_id not in self._clouds:
            entry = self.sequences[sequence_id]
            path = self.path(entry["clouds"])
            try:
                clouds = np.load(path, mmap_mode="r", allow_pickle=False)
            except ValueError as e:
                raise DatasetError(f"Erro ao ler {path}: {e}") from e
            if clouds.ndim != 3 or clouds.shape[2] != 3 or clouds.shape[0] != entry["frames"]:
                raise DatasetError(f"{path}: forma {clouds.shape} não confere com o manifesto")
            self._clouds[sequence_id] = clouds
        return self._clouds[sequence_id]

    def poses(self, sequence_id: str) -> pd.DataFrame:
        if sequence_id not in self._poses:
            entry = self.sequences[sequence_id]
            df = TableFile(self.path(entry["poses"]), required_columns=POSE_COLUMNS).carregar_dados()
            if len(df) != entry["frames"]:
                raise DatasetError(f"{entry['poses']}: {len(df)} linhas para {entry['frames']} quadros")
            self._poses[sequence_id] = df.set_index("frame", drop=False)
        return self._poses[sequence_id]

    def transform(self, sequence_id: str, frame: int) -> RigidTransform:
        row = self.poses(sequence_id).loc[frame]
        R = np.array([[row[f"r{i}{j}"] for j in range(3)] for i in range(3)], dtype=np.float64)
        return RigidTransform(R, np.array([row["tx"], row["ty"], row["tz"]], dtype=np.float64))

    def cloud(self, sequence_id: str, frame: int) -> np.ndarray:
        return np.asarray(self.clouds(sequence_id)[frame], dtype=np.float64)

    def raw_scan(self, sequence_id: str) -> np.ndarray:
        """Varredura densa do quadro 0 (gerada com DATA__RAW_SCANS=true)."""
        entry = self.sequences.get(sequence_id)
        if entry is None or "raw_scan" not in entry:
            raise DatasetError(f"sequência {sequence_id} sem varredura densa no manifesto")
        return np.load(self.path(entry["raw_scan"]), allow_pickle=False).astype(np.float64)

    def class_id(self, sequence_id: str) -> int:
        return int(self.sequences[sequence_id]["class_id"])

    def frame_indices(self, sequence_id: str, fps: float | None = None) -> list[int]:
        return downsample_indices(int(self.sequences[sequence_id]["frames"]), self.fps, fps)

    # --------------------------------------------------------

    def train_sample(self, sequence_id: str, frame: int) -> TrainSample:
        transform = self.transform(sequence_id, frame)
        class_id = self.class_id(sequence_id)
        return TrainSample(
            cloud=self.cloud(sequence_id, frame),
            class_id=class_id,
            gt_center=transform.t.copy(),
            gt_keypoints=transform.apply(self.templates[class_id].keypoints),
            gt_rotation=transform.R.copy(),
            sequence_id=sequence_id,
            frame_index=frame,
        )

    def train_samples(self, split: str = "train", fps: float | None = None) -> LazySamples:
        keys = [(s, f) for s in self.sequence_ids(split) for f in self.frame_indices(s, fps)]
        return LazySamples(self, keys)

    def eval_samples(self, split: str = "test", fps: float | None = None) -> list[EvalSample]:
        return [
            EvalSample(
                cloud=self.cloud(s, f),
                class_id=self.class_id(s),
                gt_transform=self.transform(s, f),
                sequence_id=s,
                frame_index=f,
            )
            for s in self.sequence_ids(split)
            for f in self.frame_indices(s, fps)
        ]

    def train_bank(self, fps: float | None = None) -> TrainBank:
        return TrainBank.from_samples(self.eval_samples("train", fps), self.templates)

    def frame_sequence(self, sequence_id: str, fps: float | None = None) -> FrameSequence:
        indices = self.frame_indices(sequence_id, fps)
        class_id = self.class_id(sequence_id)
        frames = [
            (
                PointCloud(self.cloud(sequence_id, f)),
                FrameGroundTruth(self.transform(sequence_id, f), class_id),
            )
            for f in indices
        ]
        stride = indices[1] - indices[0] if len(indices) > 1 else 1
        return FrameSequence(frames, fps=self.fps / stride, sequence_id=sequence_id, frame_indices=indices)


def load_dataset(manifest_path: str) -> PopupDataset:
    """Abre o manifesto; aceita o caminho do arquivo ou do diretório do dataset."""
    if os.path.isdir(manifest_path):
        manifest_path = os.path.join(manifest_path, "manifest.json")
    if not os.path.exists(manifest_path):
        raise DatasetError(f"Manifesto não encontrado: {manifest_path}")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetError(f"Manifesto inválido {manifest_path}: {e}") from e
    for key in ("classes", "fps", "splits", "sequences"):
        if key not in manifest:
            raise DatasetError(f"Manifesto {manifest_path} sem a chave '{key}'")
    dataset = PopupDataset(os.path.dirname(os.path.abspath(manifest_path)), manifest)
    logger.info(
        "Dataset carregado: %d sequências, classes %s", len(dataset.sequences), dataset.classes
    )
    return dataset
