"""
Blocos da rede: camada linear, MLP compartilhado, abstração de conjuntos
(amostragem FPS + agrupamento KNN + MLP + max-pool), agrupamento global,
propagação de features por interpolação inversa à distância e codificação
posicional senoidal.
"""

from __future__ import annotations

import numpy as np

from engine.tensor import Tensor, concat
from geometry.kernels import farthest_point_sample, knn_groups
from tools.errors import NumericError

INTERPOLATION_EPS = 1e-8


def check_finite(t: Tensor, layer: str) -> Tensor:
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"Ativações NaN/inf na camada '{layer}'")
    return t


class Linear:
    """y = x W + b, com inicialização He e viés zero."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, name: str):
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Tensor(
            rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(in_dim, out_dim)),
            requires_grad=True,
            name=f"{name}.weight",
        )
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True, name=f"{name}.bias")

    def parameters(self) -> dict[str, Tensor]:
        return {self.weight.name: self.weight, self.bias.name: self.bias}

    def __call__(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        flat = x.reshape(-1, self.in_dim) if x.ndim != 2 else x
        out = flat @ self.weight + self.bias
        if x.ndim != 2:
            out = out.reshape(lead + (self.out_dim,))
        return check_finite(out, self.name)


class MLP:
    """Sequência de Linear + ReLU aplicada ao último eixo (pesos compartilhados)."""

    def __init__(
        self,
        in_dim: int,
        widths: tuple[int, ...],
        rng: np.random.Generator,
        name: str,
        final_activation: bool = True,
    ):
        self.name = name
        self.final_activation = final_activation
        self.layers = []
        last = in_dim
        for i, width in enumerate(widths):
            self.layers.append(Linear(last, width, rng, f"{name}.{i}"))
            last = width
        self.out_dim = last

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for layer in self.layers:
            params.update(layer.parameters())
        return params

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1 or self.final_activation:
                x = x.relu()
        return x


class SetAbstraction:
    """
    Um nível de abstração: `npoint` centros por FPS (início no índice 0),
    `nsample` vizinhos por KNN, coordenadas relativas ao centro concatenadas
    às features, MLP compartilhado e max-pool sobre o grupo.
    """

    def __init__(
        self,
        npoint: int,
        nsample: int,
        in_features: int,
        widths: tuple[int, ...],
        rng: np.random.Generator,
        name: str,
    ):
        self.npoint = npoint
        self.nsample = nsample
        self.mlp = MLP(3 + in_features, widths, rng, name)
        self.out_dim = self.mlp.out_dim

    def parameters(self) -> dict[str, Tensor]:
        return self.mlp.parameters()

    def __call__(self, xyz: Tensor, features: Tensor | None) -> tuple[Tensor, Tensor]:
        points = xyz.data
        m = min(self.npoint, len(points))
        k = min(self.nsample, len(points))
        centers = farthest_point_sample(points, m, start=0)
        groups = knn_groups(points, points[centers], k)

        new_xyz = xyz.gather(centers)
        grouped = xyz.gather(groups) - new_xyz.reshape(m, 1, 3)
        if features is not None:
            grouped = concat([grouped, features.gather(groups)], axis=-1)
        return new_xyz, self.mlp(grouped).max(axis=1)


class GroupAll:
    """MLP sobre todos os pontos (xyz ‖ features) seguido de max-pool global."""

    def __init__(self, in_features: int, widths: tuple[int, ...], rng: np.random.Generator, name: str):
        self.mlp = MLP(3 + in_features, widths, rng, name)
        self.out_dim = self.mlp.out_dim

    def parameters(self) -> dict[str, Tensor]:
        return self.mlp.parameters()

    def __call__(self, xyz: Tensor, features: Tensor) -> Tensor:
        return self.mlp(concat([xyz, features], axis=1)).max(axis=0)


class FeaturePropagation:
    """
    Interpola features de `source_xyz` para `query_xyz` com pesos
    1/(d² + eps) sobre os `neighbors` vizinhos mais próximos, concatena a
    skip connection e aplica um MLP.
    """

    def __init__(
        self,
        in_dim: int,
        widths: tuple[int, ...],
        neighbors: int,
        rng: np.random.Generator,
        name: str,
    ):
        self.neighbors = neighbors
        self.mlp = MLP(in_dim, widths, rng, name)
        self.out_dim = self.mlp.out_dim

    def parameters(self) -> dict[str, Tensor]:
        return self.mlp.parameters()

    def __call__(
        self,
        query_xyz: Tensor,
        source_xyz: Tensor,
        source_features: Tensor,
        skip: Tensor | None = None,
    ) -> Tensor:
        q = len(query_xyz)
        k = min(self.neighbors, len(source_xyz))
        idx = knn_groups(source_xyz.data, query_xyz.data, k)
        diff = query_xyz.reshape(q, 1, 3) - source_xyz.gather(idx)
        d2 = (diff * diff).sum(axis=-1)
        weights = 1.0 / (d2 + INTERPOLATION_EPS)
        weights = weights / weights.sum(axis=1, keepdims=True)
        interpolated = (source_features.gather(idx) * weights.reshape(q, k, 1)).sum(axis=1)
        if skip is not None:
            interpolated = concat([skip, interpolated], axis=1)
        return self.mlp(interpolated)


def positional_encoding(xyz: Tensor, bands: int) -> Tensor:
    """[x, sin(2^k π x), cos(2^k π x)] para k = 0..bands-1."""
    parts = [xyz]
    for k in range(bands):
        scaled = xyz * (np.pi * 2.0**k)
        parts += [scaled.sin(), scaled.cos()]
    return concat(parts, axis=-1)


def posenc_dim(bands: int) -> int:
    return 3 + 6 * bands
