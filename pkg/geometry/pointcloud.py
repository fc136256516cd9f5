"""
Tipos geométricos básicos: nuvem de pontos, transformação rígida e malha.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tools.errors import GeometryError

ROTATION_TOLERANCE = 1e-9


def as_points(value) -> np.ndarray:
    """Aceita PointCloud ou array (N, 3) e devolve o array float64."""
    if isinstance(value, PointCloud):
        return value.points
    points = np.asarray(value, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise GeometryError(f"esperado array (N, 3), recebido {points.shape}")
    return points


@dataclass(frozen=True)
class PointCloud:
    """Conjunto não ordenado de pontos 3D em metros."""

    points: np.ndarray
    provenance: np.ndarray | None = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise GeometryError(f"PointCloud espera (N, 3), recebido {points.shape}")
        if len(points) < 1:
            raise GeometryError("PointCloud vazia")
        if not np.all(np.isfinite(points)):
            raise GeometryError("PointCloud com coordenadas não finitas")
        object.__setattr__(self, "points", points)
        if self.provenance is not None:
            provenance = np.asarray(self.provenance)
            if len(provenance) != len(points):
                raise GeometryError("provenance deve ter um valor por ponto")
            object.__setattr__(self, "provenance", provenance)

    def __len__(self) -> int:
        return len(self.points)

    def permuted(self, order: np.ndarray) -> "PointCloud":
        provenance = None if self.provenance is None else self.provenance[order]
        return PointCloud(self.points[order], provenance)


@dataclass(frozen=True)
class RigidTransform:
    """
    x -> R x + t. `unique` é False quando a transformação veio de um
    alinhamento degenerado (solução não única).
    """

    R: np.ndarray
    t: np.ndarray
    unique: bool = True

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        if R.shape != (3, 3) or t.shape != (3,):
            raise GeometryError(f"RigidTransform espera R (3, 3) e t (3,), recebido {R.shape} e {t.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise GeometryError("RigidTransform com valores não finitos")
        if np.max(np.abs(R.T @ R - np.eye(3))) > ROTATION_TOLERANCE:
            raise GeometryError("R não é ortonormal")
        if abs(np.linalg.det(R) - 1.0) > ROTATION_TOLERANCE:
            raise GeometryError("det(R) deve ser +1")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.R.T + self.t

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.R.T, -self.R.T @ self.t, self.unique)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """(self ∘ other)(x) = self(other(x))."""
        return RigidTransform(
            self.R @ other.R, self.R @ other.t + self.t, self.unique and other.unique
        )

    def as_record(self) -> dict:
        return {"R": self.R.reshape(-1).tolist(), "t": self.t.tolist()}

    @classmethod
    def from_record(cls, record: dict) -> "RigidTransform":
        try:
            return cls(np.asarray(record["R"], dtype=np.float64).reshape(3, 3), record["t"])
        except (KeyError, ValueError) as e:
            raise GeometryError(f"registro de pose inválido: {e}") from e


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64)
        faces = np.asarray(self.faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise GeometryError(f"vértices devem ter forma (V, 3), recebido {vertices.shape}")
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise GeometryError(f"faces devem ser triângulos (F, 3), recebido {faces.shape}")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise GeometryError("índice de face fora do intervalo de vértices")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)

    def transformed(self, transform: RigidTransform) -> "Mesh":
        return Mesh(transform.apply(self.vertices), self.faces)

    def face_areas(self) -> np.ndarray:
        v0, v1, v2 = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)
