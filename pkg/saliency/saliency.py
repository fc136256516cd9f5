"""
Saliência iterativa por gradiente sobre a nuvem de entrada.

A cada iteração:
    1. p_m = mediana por coordenada da nuvem atual;
    2. r_i = p_i − p_m;
    3. forward e perda de offsets contra a pose verdadeira;
    4. g_i = ∂L_off/∂p_i por backpropagation;
    5. s_i = −‖r_i‖ (r_i · g_i);
    6. os ⌈frac·N⌉ pontos de maior s_j são deslocados para p_j − step·r_j.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from engine.tensor import Tensor
from geometry.kernels import coordinate_median, touched_count
from geometry.mesh_io import write_ply
from geometry.pointcloud import RigidTransform, as_points
from popup.model import PopupNetwork
from popup.templates import ObjectTemplate
from tools.errors import SaliencyError
from tools.tools import atomic_write_json, atomic_write_text
from training.losses import loss_offset

logger = logging.getLogger(__name__)


@dataclass
class SaliencyResult:
    scores: np.ndarray
    masks: list[np.ndarray] = field(default_factory=list)
    clouds: list[np.ndarray] = field(default_factory=list)
    loss_trace: list[float] = field(default_factory=list)
    iteration_scores: list[np.ndarray] = field(default_factory=list)

    @property
    def touched(self) -> np.ndarray:
        """União dos índices tocados em todas as iterações."""
        if not self.masks:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(self.masks))

    @property
    def final_cloud(self) -> np.ndarray | None:
        return self.clouds[-1] if self.clouds else None


def saliency_scores(
    cloud,
    class_id: int,
    gt: RigidTransform,
    net: PopupNetwork,
    template: ObjectTemplate,
) -> tuple[np.ndarray, float]:
    """
    Scores por ponto e o valor de L_off na nuvem dada.

    Pontos repetidos entram na rede uma única vez (a primeira ocorrência);
    as cópias têm gradiente e score exatamente zero. Empates de score são
    resolvidos pelo menor índice na seleção de `saliency_iterate`.
    """
    points = as_points(cloud).copy()
    P = Tensor(points, requires_grad=True)
    K = template.keypoints
    out = net.forward(P, K, class_id)
    gt_offsets = gt.apply(K) - (K + out.center_used)
    loss = loss_offset(out.offsets, gt_offsets)
    loss.backward()
    if P.grad is None:
        raise SaliencyError("gradiente em relação aos pontos indisponível")
    grad = P.grad
    if not np.all(np.isfinite(grad)):
        raise SaliencyError("gradiente NaN/inf em relação aos pontos")

    r = points - coordinate_median(points)
    scores = -np.linalg.norm(r, axis=1) * np.einsum("ij,ij->i", r, grad)
    return scores, float(loss.data)


def saliency_iterate(
    cloud,
    class_id: int,
    gt: RigidTransform,
    net: PopupNetwork,
    template: ObjectTemplate,
    iters: int = 10,
    frac: float = 0.01,
    step: float = 0.05,
) -> SaliencyResult:
    points = as_points(cloud).copy()
    n_touch = touched_count(len(points), frac)
    result = SaliencyResult(scores=np.zeros(len(points)))

    for it in range(iters):
        scores, loss = saliency_scores(points, class_id, gt, net, template)
        if it == 0:
            result.scores = scores
        selected = np.sort(np.argsort(-scores, kind="stable")[:n_touch])
        median = coordinate_median(points)
        moved = points.copy()
        moved[selected] = points[selected] - step * (points[selected] - median)

        result.iteration_scores.append(scores)
        result.masks.append(selected)
        result.clouds.append(moved)
        result.loss_trace.append(loss)
        logger.info("Saliência: iteração %d/%d, L_off=%.6f, %d pontos movidos", it + 1, iters, loss, n_touch)
        points = moved
    return result


def near_center_fraction(points, indices: np.ndarray, center, radius: float = 0.10) -> float:
    """Fração dos índices dados a menos de `radius` do centro do objeto."""
    if len(indices) == 0:
        return 0.0
    distances = np.linalg.norm(as_points(points)[indices] - np.asarray(center).reshape(1, 3), axis=1)
    return float(np.mean(distances < radius))


def export_saliency(result: SaliencyResult, cloud, out_dir: str) -> None:
    """PLY com a propriedade 'saliency', máscaras e traço da perda em JSON."""
    os.makedirs(out_dir, exist_ok=True)
    write_ply(os.path.join(out_dir, "saliency.ply"), as_points(cloud), {"saliency": result.scores})
    atomic_write_json(
        os.path.join(out_dir, "touched.json"),
        {"iterations": [mask.tolist() for mask in result.masks], "union": result.touched.tolist()},
    )
    with_index = [{"iteration": i, "loss_offset": v} for i, v in enumerate(result.loss_trace)]
    atomic_write_text(
        os.path.join(out_dir, "loss_trace.jsonl"),
        "".join(json.dumps(row) + "\n" for row in with_index),
    )
    if result.final_cloud is not None:
        write_ply(os.path.join(out_dir, "perturbed.ply"), result.final_cloud)
