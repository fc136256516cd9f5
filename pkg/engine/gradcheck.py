"""
Verificação de gradientes por diferenças finitas centrais.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from engine.tensor import Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """‖a - n‖ / max(‖a‖ + ‖n‖, 1e-12), em norma euclidiana."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom)


def numerical_gradient(
    fn: Callable[[], Tensor],
    target: Tensor,
    h: float = 1e-5,
    indices: np.ndarray | None = None,
) -> np.ndarray:
    """
    Derivada de `fn()` em relação às entradas `indices` (planas) de
    `target.data`. `fn` deve reconstruir o grafo a cada chamada.
    """
    original = target.data
    flat_indices = np.arange(original.size) if indices is None else np.asarray(indices)
    grad = np.zeros(len(flat_indices))
    try:
        for k, flat in enumerate(flat_indices):
            plus = original.copy()
            plus.flat[flat] += h
            target.data = plus
            f_plus = fn().item()
            minus = original.copy()
            minus.flat[flat] -= h
            target.data = minus
            f_minus = fn().item()
            grad[k] = (f_plus - f_minus) / (2.0 * h)
    finally:
        target.data = original
    return grad


def check_gradients(
    fn: Callable[[], Tensor],
    tensors: dict[str, Tensor],
    h: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
) -> dict[str, float]:
    """
    Compara o gradiente analítico de `fn()` com diferenças finitas para cada
    tensor de `tensors`. Devolve o erro relativo por nome.

    Com `max_entries`, só um subconjunto aleatório (semeado) de entradas de
    cada tensor é verificado.
    """
    rng = np.random.default_rng(seed)
    for t in tensors.values():
        t.zero_grad()
    loss = fn()
    loss.backward()
    analytic = {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data)).ravel().copy()
        for name, t in tensors.items()
    }

    errors = {}
    for name, t in tensors.items():
        if max_entries is not None and t.size > max_entries:
            indices = np.sort(rng.choice(t.size, size=max_entries, replace=False))
        else:
            indices = np.arange(t.size)
        numeric = numerical_gradient(fn, t, h=h, indices=indices)
        errors[name] = relative_error(analytic[name][indices], numeric)
    return errors
