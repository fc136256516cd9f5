"""
Templates de objetos no referencial canônico e codificação one-hot de classe.

Todo template é centrado na origem, de modo que a translação da pose é
também o centro do objeto.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from geometry.kernels import sample_surface
from geometry.pointcloud import Mesh
from tools.errors import ConfigError, GeometryError


@dataclass(frozen=True)
class ObjectTemplate:
    class_id: int
    name: str
    mesh: Mesh
    keypoints: np.ndarray

    def __post_init__(self):
        keypoints = np.asarray(self.keypoints, dtype=np.float64)
        if keypoints.ndim != 2 or keypoints.shape[1] != 3 or len(keypoints) < 3:
            raise GeometryError(f"keypoints do template '{self.name}' devem ter forma (K>=3, 3)")
        object.__setattr__(self, "keypoints", keypoints)


@dataclass(frozen=True)
class ClassEncoding:
    one_hot: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.one_hot, dtype=np.float64)
        if vec.ndim != 1 or np.count_nonzero(vec == 1.0) != 1 or np.count_nonzero(vec) != 1:
            raise ConfigError("ClassEncoding precisa de exatamente uma entrada igual a 1")
        object.__setattr__(self, "one_hot", vec)

    @property
    def class_id(self) -> int:
        return int(np.argmax(self.one_hot))


def one_hot(class_id: int, num_classes: int) -> ClassEncoding:
    if not 0 <= int(class_id) < num_classes:
        raise ConfigError(f"Classe {class_id} fora do intervalo [0, {num_classes})")
    vec = np.zeros(num_classes)
    vec[int(class_id)] = 1.0
    return ClassEncoding(vec)


# ============================================================
# Malhas procedurais
# ============================================================


def box_mesh(extents) -> Mesh:
    """Caixa centrada na origem com 12 triângulos orientados para fora."""
    hx, hy, hz = np.asarray(extents, dtype=np.float64) / 2.0
    vertices = np.array(
        [
            [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
            [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
        ]
    )
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # -z
            [4, 5, 6], [4, 6, 7],  # +z
            [0, 1, 5], [0, 5, 4],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [1, 2, 6], [1, 6, 5],  # +x
            [0, 4, 7], [0, 7, 3],  # -x
        ]
    )
    return Mesh(vertices, faces)


def icosphere(radius: float, subdivisions: int = 2) -> Mesh:
    t = (1.0 + 5.0**0.5) / 2.0
    vertices = [
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ]
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    vertices = [list(np.asarray(v, dtype=np.float64) / np.linalg.norm(v)) for v in vertices]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in cache:
                mid = (np.asarray(vertices[a]) + np.asarray(vertices[b])) / 2.0
                vertices.append(list(mid / np.linalg.norm(mid)))
                cache[key] = len(vertices) - 1
            return cache[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = refined
    return Mesh(np.asarray(vertices) * radius, np.asarray(faces))


def cylinder_mesh(radius: float, length: float, segments: int = 16) -> Mesh:
    """Cilindro fechado ao longo de z, centrado na origem."""
    angles = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    bottom = np.column_stack([ring, np.full(segments, -length / 2.0)])
    top = np.column_stack([ring, np.full(segments, length / 2.0)])
    vertices = np.vstack([bottom, top, [[0, 0, -length / 2.0]], [[0, 0, length / 2.0]]])
    c_bottom, c_top = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[i, j, segments + j], [i, segments + j, segments + i]]
        faces += [[c_bottom, j, i], [c_top, segments + i, segments + j]]
    return Mesh(vertices, np.asarray(faces))


# Formas conhecidas (metros). Classes sem forma própria recebem uma caixa
# com dimensões derivadas do nome.
TEMPLATE_SHAPES = {
    "box": lambda: box_mesh((0.45, 0.45, 0.40)),
    "stick": lambda: cylinder_mesh(0.02, 0.9),
    "ball": lambda: icosphere(0.09, 2),
    "board": lambda: box_mesh((0.90, 0.02, 0.50)),
}


def template_mesh(name: str) -> Mesh:
    builder = TEMPLATE_SHAPES.get(name)
    if builder is not None:
        return builder()
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    extents = 0.1 + np.frombuffer(digest[:3], dtype=np.uint8) / 255.0 * 0.4
    return box_mesh(extents)


def build_templates(class_names, num_keypoints: int, seed: int) -> list[ObjectTemplate]:
    """Um template por classe, keypoints amostrados uma única vez por semente."""
    templates = []
    for class_id, name in enumerate(class_names):
        mesh = template_mesh(name)
        keypoints = sample_surface(mesh, num_keypoints, seed=seed + class_id)
        templates.append(ObjectTemplate(class_id, name, mesh, keypoints))
    return templates
