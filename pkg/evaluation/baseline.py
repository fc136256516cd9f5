"""
Baseline de vizinho mais próximo: devolve a pose do quadro de treino cuja
nuvem (mesma contagem e ordem de pontos) está mais perto da consulta em
norma de Frobenius.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from evaluation.samples import EvalSample, Prediction
from geometry.pointcloud import Mesh, RigidTransform, as_points
from popup.templates import ObjectTemplate
from tools.errors import DataError, DatasetError, NotApplicableError

logger = logging.getLogger(__name__)

_CHUNK = 64


@dataclass
class TrainBank:
    clouds: np.ndarray
    transforms: list[RigidTransform]
    class_ids: np.ndarray
    templates: dict[int, ObjectTemplate]

    def __post_init__(self):
        clouds = np.asarray(self.clouds, dtype=np.float64)
        if clouds.ndim != 3 or clouds.shape[2] != 3:
            raise DatasetError(f"banco de treino com forma inválida {clouds.shape}")
        if len(clouds) == 0:
            raise DatasetError("banco de treino vazio")
        if len(self.transforms) != len(clouds) or len(self.class_ids) != len(clouds):
            raise DatasetError("banco de treino com listas de tamanhos diferentes")
        self.clouds = clouds
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.clouds)

    @property
    def point_count(self) -> int:
        return self.clouds.shape[1]

    def posed_template(self, index: int) -> Mesh:
        return self.templates[int(self.class_ids[index])].mesh.transformed(self.transforms[index])

    @classmethod
    def from_samples(cls, samples, templates: list[ObjectTemplate]) -> "TrainBank":
        samples = [s for s in samples if s.gt_transform is not None]
        counts = {len(s.cloud) for s in samples}
        if len(counts) > 1:
            raise DatasetError(f"nuvens do banco com contagens diferentes: {sorted(counts)}")
        return cls(
            clouds=np.stack([np.asarray(s.cloud, dtype=np.float64) for s in samples]) if samples else np.zeros((0, 0, 3)),
            transforms=[s.gt_transform for s in samples],
            class_ids=np.array([s.class_id for s in samples]),
            templates={t.class_id: t for t in templates},
        )


def nn_retrieve(query, bank: TrainBank, class_filter: int | None = None) -> tuple[Mesh, int, int]:
    """(template posado, classe, índice) da entrada mais próxima; empates no menor índice."""
    points = as_points(query)
    if points.shape != bank.clouds.shape[1:]:
        raise NotApplicableError(
            f"baseline NN não se aplica: consulta com {len(points)} pontos, banco com {bank.point_count}"
        )
    candidates = np.arange(len(bank)) if class_filter is None else np.flatnonzero(bank.class_ids == class_filter)
    if len(candidates) == 0:
        raise DataError(f"nenhuma entrada do banco com a classe {class_filter}")

    distances = np.empty(len(candidates))
    for start in range(0, len(candidates), _CHUNK):
        chunk = candidates[start: start + _CHUNK]
        diff = bank.clouds[chunk] - points[None]
        distances[start: start + len(chunk)] = np.sqrt(np.einsum("bij,bij->b", diff, diff))
    best = int(candidates[int(np.argmin(distances))])
    logger.debug("NN: entrada %d a distância %.6f", best, distances.min())
    return bank.posed_template(best), int(bank.class_ids[best]), best


class NearestNeighborPredictor:
    """Preditor do baseline para `evaluate`: classe restrita no modo given-class."""

    def __init__(self, bank: TrainBank):
        self.bank = bank

    def __call__(self, sample: EvalSample, mode: str) -> Prediction:
        class_filter = sample.class_id if mode == "given-class" else None
        mesh, class_id, index = nn_retrieve(sample.cloud, self.bank, class_filter)
        return Prediction(center=self.bank.transforms[index].t.copy(), vertices=mesh.vertices, class_id=class_id)
