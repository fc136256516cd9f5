"""
Núcleos geométricos determinísticos: vizinhos, amostragem, alinhamento
rígido e métricas de distância.

Empates são sempre resolvidos pelo menor índice.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy.spatial import cKDTree

from geometry.pointcloud import Mesh, PointCloud, RigidTransform, as_points
from tools.errors import GeometryError

logger = logging.getLogger(__name__)


# ============================================================
# Vizinhança
# ============================================================


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matriz (len(a), len(b)) de distâncias ao quadrado."""
    d2 = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.maximum(d2, 0.0)


def knn_indices(points, query, k: int) -> np.ndarray:
    """
    Índices dos k pontos mais próximos de `query`, ordenados por distância
    e depois por índice. k é limitado a N sem aviso.
    """
    points = as_points(points)
    if len(points) == 0:
        raise GeometryError("busca de vizinhos em nuvem vazia")
    if k < 1:
        raise GeometryError(f"k deve ser >= 1, recebido {k}")
    diff = points - np.asarray(query, dtype=np.float64).reshape(1, 3)
    d2 = np.einsum("ij,ij->i", diff, diff)
    return np.argsort(d2, kind="stable")[: min(k, len(points))]


def knn_select(cloud, query, k: int) -> PointCloud:
    """
    Os k pontos de `cloud` mais próximos de `query`. A proveniência de cada
    ponto devolvido é o seu índice na nuvem original.
    """
    points = as_points(cloud)
    if len(points) == 0:
        raise GeometryError("knn_select em nuvem vazia")
    if k > len(points):
        logger.warning("k=%d maior que N=%d; usando k=N", k, len(points))
    idx = knn_indices(points, query, k)
    return PointCloud(points[idx], provenance=idx)


def knn_groups(points: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """Para cada consulta, os k vizinhos em `points` (matriz (Q, k))."""
    k = min(k, len(points))
    d2 = pairwise_sq_dists(queries, points)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def canonical_order(points: np.ndarray) -> np.ndarray:
    """
    Índices das linhas distintas de `points` em ordem lexicográfica.
    Permutações e duplicatas da mesma nuvem levam ao mesmo conjunto ordenado.
    """
    _, first = np.unique(points, axis=0, return_index=True)
    return first


# ============================================================
# Amostragem
# ============================================================


def farthest_point_sample(cloud, m: int, seed: int | None = None, start: int | None = None) -> np.ndarray:
    """
    Amostragem gulosa max-min. O primeiro índice é `start`, ou sorteado a
    partir de `seed`, ou 0.
    """
    points = as_points(cloud)
    n = len(points)
    if m < 1:
        raise GeometryError(f"m deve ser >= 1, recebido {m}")
    if m > n:
        raise GeometryError(f"m={m} maior que o número de pontos N={n}")
    if start is None:
        start = int(np.random.default_rng(seed).integers(n)) if seed is not None else 0

    selected = np.empty(m, dtype=np.int64)
    selected[0] = start
    min_d2 = np.full(n, np.inf)
    min_d2[start] = -1.0
    last = start
    for i in range(1, m):
        diff = points - points[last]
        d2 = np.einsum("ij,ij->i", diff, diff)
        np.minimum(min_d2, d2, out=min_d2, where=min_d2 >= 0)
        last = int(np.argmax(min_d2))
        selected[i] = last
        min_d2[last] = -1.0
    return selected


def sample_surface(mesh: Mesh, n: int, seed: int | None = None, return_faces: bool = False):
    """
    Amostra uniforme na superfície: triângulo escolhido pela área e ponto
    uniforme por coordenadas baricêntricas.
    """
    if n < 1:
        raise GeometryError(f"n deve ser >= 1, recebido {n}")
    if len(mesh.faces) == 0:
        raise GeometryError("malha sem faces")
    areas = mesh.face_areas()
    total = float(areas.sum())
    if total <= 0:
        raise GeometryError("malha com área total zero")

    rng = np.random.default_rng(seed)
    face_idx = rng.choice(len(areas), size=n, p=areas / total)
    r1, r2 = rng.random((2, n))
    s = np.sqrt(r1)
    u, v, w = 1.0 - s, s * (1.0 - r2), s * r2
    tri = mesh.vertices[mesh.faces[face_idx]]
    points = u[:, None] * tri[:, 0] + v[:, None] * tri[:, 1] + w[:, None] * tri[:, 2]
    if return_faces:
        return points, face_idx
    return points


# ============================================================
# Alinhamento rígido
# ============================================================


def procrustes_align(src, dst) -> RigidTransform:
    """
    (R, t) que minimiza Σ‖R·src_i + t − dst_i‖² (Kabsch). O sinal da menor
    direção singular é invertido quando necessário para det(R) = +1.
    """
    a = as_points(src)
    b = as_points(dst)
    if a.shape != b.shape:
        raise GeometryError(f"procrustes com formas diferentes: {a.shape} vs {b.shape}")
    if len(a) < 3:
        raise GeometryError("procrustes exige pelo menos 3 pontos")

    centroid_a = a.mean(axis=0)
    centroid_b = b.mean(axis=0)
    a_c = a - centroid_a
    b_c = b - centroid_b

    singular = np.linalg.svd(a_c, compute_uv=False)
    unique = bool(singular[0] > 0 and singular[1] > 1e-10 * singular[0])
    if not unique:
        logger.warning("procrustes degenerado (origem colinear); solução não única")

    H = a_c.T @ b_c
    U, _, Vt = np.linalg.svd(H)
    V = Vt.T
    d = np.sign(np.linalg.det(V @ U.T))
    if d == 0:
        d = 1.0
    R = V @ np.diag([1.0, 1.0, d]) @ U.T
    t = centroid_b - R @ centroid_a
    return RigidTransform(R, t, unique=unique)


# ============================================================
# Métricas
# ============================================================


def chamfer_distance(a, b) -> float:
    """Média das distâncias mínimas em cada direção, somadas."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise GeometryError("chamfer exige dois conjuntos não vazios")
    d_ab, _ = cKDTree(b).query(a, k=1)
    d_ba, _ = cKDTree(a).query(b, k=1)
    return float(np.mean(d_ab) + np.mean(d_ba))


def v2v_error(a, b) -> float:
    """Norma de Frobenius da diferença entre conjuntos correspondentes."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if a.shape != b.shape:
        raise GeometryError(f"v2v com contagens diferentes: {len(a)} vs {len(b)}")
    return float(np.linalg.norm(a - b))


def coordinate_median(cloud) -> np.ndarray:
    """Mediana por coordenada; com N par usa o elemento central inferior."""
    points = as_points(cloud)
    if len(points) == 0:
        raise GeometryError("mediana de nuvem vazia")
    return np.sort(points, axis=0)[(len(points) - 1) // 2].copy()


def touched_count(n: int, fraction: float) -> int:
    """⌈fraction·n⌉, tolerante a arredondamento (0.01 * 9000 -> 90)."""
    return max(1, min(n, math.ceil(fraction * n - 1e-9)))
