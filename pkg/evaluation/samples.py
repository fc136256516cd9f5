"""Amostras de avaliação e o contrato dos preditores avaliados."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from geometry.pointcloud import RigidTransform


@dataclass
class EvalSample:
    cloud: np.ndarray
    class_id: int
    gt_transform: RigidTransform | None
    sequence_id: str = ""
    frame_index: int = 0

    @property
    def gt_center(self) -> np.ndarray:
        return self.gt_transform.t


@dataclass
class Prediction:
    center: np.ndarray
    vertices: np.ndarray
    class_id: int
    class_distribution: np.ndarray | None = None


Predictor = Callable[[EvalSample, str], Prediction]
