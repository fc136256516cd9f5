"""
Otimizador Adam com correção de viés e utilitários de gradiente.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from engine.tensor import Tensor
from tools.errors import NumericError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray | None],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> AdamState:
    """
    Um passo de Adam sobre todos os parâmetros. Gradientes ausentes contam
    como zero. Nada é alterado se algum gradiente tiver NaN/inf.
    """
    if lr <= 0:
        raise NumericError(f"lr deve ser > 0, recebido {lr}")

    resolved: dict[str, np.ndarray] = {}
    for name, param in params.items():
        g = grads.get(name)
        g = np.zeros_like(param.data) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != param.shape:
            raise ShapeError(
                "adam_step", f"gradiente de '{name}' com forma {g.shape}, esperado {param.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericError(f"Gradiente NaN/inf no parâmetro '{name}'")
        if weight_decay:
            g = g + weight_decay * param.data
        resolved[name] = g

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for name, param in params.items():
        g = resolved[name]
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        m = (1.0 - b1) * g if m is None else b1 * m + (1.0 - b1) * g
        v = (1.0 - b2) * g * g if v is None else b2 * v + (1.0 - b2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state


def clip_grad_norm(grads: dict[str, np.ndarray | None], max_norm: float) -> float:
    """Reescala todos os gradientes juntos para norma global <= max_norm."""
    arrays = [g for g in grads.values() if g is not None]
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in arrays)))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for name, g in grads.items():
            if g is not None:
                grads[name] = g * scale
    return total


class Adam:
    """Envolve `adam_step` guardando os parâmetros e o estado."""

    def __init__(
        self,
        params: dict[str, Tensor],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = params
        self.weight_decay = weight_decay
        self.state = AdamState(beta1=beta1, beta2=beta2, eps=eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def gradients(self) -> dict[str, np.ndarray | None]:
        return {name: p.grad for name, p in self.params.items()}

    def step(self, lr: float, grads: dict[str, np.ndarray | None] | None = None) -> None:
        adam_step(
            self.params,
            self.gradients() if grads is None else grads,
            self.state,
            lr,
            weight_decay=self.weight_decay,
        )
