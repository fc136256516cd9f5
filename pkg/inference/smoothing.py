"""
Suavização temporal dos centros previstos e voto de classe por sequência.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter1d

from tools.errors import ConfigError, DataError

TRUNCATE = 4.0


def smooth_sequence(centers, sigma: float) -> np.ndarray:
    """
    Convolução gaussiana por eixo, truncada em 4σ. Nas bordas o kernel é
    renormalizado: o resultado é dividido pela mesma convolução aplicada a
    uma sequência de uns, com preenchimento zero.
    """
    if sigma <= 0:
        raise ConfigError(f"sigma deve ser > 0, recebido {sigma}")
    X = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    if len(X) == 0:
        raise DataError("sequência de centros vazia")
    numerator = gaussian_filter1d(X, sigma, axis=0, mode="constant", cval=0.0, truncate=TRUNCATE)
    weight = gaussian_filter1d(np.ones(len(X)), sigma, mode="constant", cval=0.0, truncate=TRUNCATE)
    return numerator / weight[:, None]


def vote_class(per_frame, rule: str = "majority") -> int:
    """
    Classe única para a sequência.

    majority: argmax por quadro e voto; empate pela soma das probabilidades
    e, persistindo, pelo menor índice.
    max_score: classe com a maior probabilidade individual em qualquer quadro.
    """
    probs = np.asarray(per_frame, dtype=np.float64)
    if probs.ndim != 2 or len(probs) == 0:
        raise DataError("vote_class exige pelo menos um quadro com distribuição")
    if rule == "max_score":
        return int(np.unravel_index(np.argmax(probs), probs.shape)[1])
    if rule != "majority":
        raise ConfigError(f"regra de voto desconhecida: {rule}")

    votes = np.bincount(np.argmax(probs, axis=1), minlength=probs.shape[1])
    tied = np.flatnonzero(votes == votes.max())
    if len(tied) == 1:
        return int(tied[0])
    mass = probs.sum(axis=0)[tied]
    # argmax devolve o primeiro (menor índice) em caso de novo empate
    return int(tied[np.argmax(mass)])
