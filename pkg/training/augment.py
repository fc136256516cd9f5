"""
Amostras de treino e aumento de dados.

O aumento gira os keypoints verdadeiros em torno do centro verdadeiro e os
translada, simulando erro na predição do centro. A nuvem humana nunca é
alterada.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.transform import Rotation

from tools.errors import DataError


@dataclass(frozen=True)
class TrainSample:
    cloud: np.ndarray
    class_id: int
    gt_center: np.ndarray
    gt_keypoints: np.ndarray
    gt_rotation: np.ndarray | None = None
    sequence_id: str = ""
    frame_index: int = 0

    def __post_init__(self):
        center = np.asarray(self.gt_center, dtype=np.float64).reshape(3)
        keypoints = np.asarray(self.gt_keypoints, dtype=np.float64)
        if keypoints.ndim != 2 or keypoints.shape[1] != 3:
            raise DataError(f"gt_keypoints com forma inválida {keypoints.shape}")
        if not (np.all(np.isfinite(center)) and np.all(np.isfinite(keypoints))):
            raise DataError("amostra com valores não finitos")
        object.__setattr__(self, "gt_center", center)
        object.__setattr__(self, "gt_keypoints", keypoints)

    def gt_offsets(self, canonical_keypoints: np.ndarray, center_used: np.ndarray) -> np.ndarray:
        """d̂ = keypoints verdadeiros − (K + centro usado)."""
        if len(canonical_keypoints) != len(self.gt_keypoints):
            raise DataError("número de keypoints do template difere da amostra")
        return self.gt_keypoints - (canonical_keypoints + np.asarray(center_used).reshape(1, 3))


@dataclass(frozen=True)
class AugmentationRanges:
    translation: float = 0.05
    rotation_deg: float = 15.0


def random_rotation(rng: np.random.Generator, max_angle_rad: float) -> np.ndarray:
    """Eixo uniforme na esfera e ângulo uniforme em [−max, max]."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_angle_rad, max_angle_rad)
    return Rotation.from_rotvec(axis * angle).as_matrix()


def augment_sample(sample: TrainSample, rng: np.random.Generator, ranges: AugmentationRanges) -> TrainSample:
    if ranges.translation == 0 and ranges.rotation_deg == 0:
        return sample
    R = random_rotation(rng, np.deg2rad(ranges.rotation_deg)) if ranges.rotation_deg > 0 else np.eye(3)
    v = rng.uniform(-ranges.translation, ranges.translation, size=3) if ranges.translation > 0 else np.zeros(3)
    c = sample.gt_center
    keypoints = (sample.gt_keypoints - c) @ R.T + c + v
    rotation = None if sample.gt_rotation is None else R @ sample.gt_rotation
    return replace(sample, gt_keypoints=keypoints, gt_center=c + v, gt_rotation=rotation)
