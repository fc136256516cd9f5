"""
Perdas do treino. Funcionam com `Tensor` (para o backward) ou com números
e arrays comuns (para relatórios).
"""

from __future__ import annotations

import numpy as np

from engine.tensor import Tensor, as_tensor, softmax_cross_entropy
from tools.errors import NumericError, ShapeError


def _is_tensor(*values) -> bool:
    return any(isinstance(v, Tensor) for v in values)


def loss_center(pred, gt):
    """‖pred − gt‖²."""
    if _is_tensor(pred, gt):
        diff = as_tensor(pred) - as_tensor(gt)
        return (diff * diff).sum()
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64)
    return float(np.sum(diff * diff))


def loss_offset(pred_offsets, gt_offsets):
    """‖pred − gt‖²_F; as formas precisam coincidir."""
    pred_shape = pred_offsets.shape if hasattr(pred_offsets, "shape") else np.shape(pred_offsets)
    gt_shape = gt_offsets.shape if hasattr(gt_offsets, "shape") else np.shape(gt_offsets)
    if tuple(pred_shape) != tuple(gt_shape):
        raise ShapeError("loss_offset", f"previsto {tuple(pred_shape)} vs alvo {tuple(gt_shape)}")
    if _is_tensor(pred_offsets, gt_offsets):
        diff = as_tensor(pred_offsets) - as_tensor(gt_offsets)
        return (diff * diff).sum()
    diff = np.asarray(pred_offsets, dtype=np.float64) - np.asarray(gt_offsets, dtype=np.float64)
    return float(np.sum(diff * diff))


def loss_class(logits: Tensor, class_id: int) -> Tensor:
    """Entropia cruzada da distribuição softmax contra a classe verdadeira."""
    return softmax_cross_entropy(logits.reshape(1, -1), [int(class_id)])


def _value(x) -> float:
    return float(x.data) if isinstance(x, Tensor) else float(x)


def total_loss(l_center, l_offset, l_class=None, alpha: float = 10.0):
    """L = L_c + α·L_off (+ L_cls)."""
    parts = [l_center, l_offset] + ([] if l_class is None else [l_class])
    for part in parts:
        if _value(part) < 0:
            raise NumericError("componentes da perda devem ser >= 0")
    total = l_center + alpha * l_offset
    if l_class is not None:
        total = total + l_class
    return total
