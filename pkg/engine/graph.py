"""
Gravação explícita do grafo de uma execução.

Uso:
    outputs, graph = forward(model_fn, cloud)
    grads = backward(graph, loss, wrt={"cloud": cloud_tensor})

`Graph` também funciona como gerenciador de contexto:
    with Graph() as graph:
        loss = f(x)
    graph.backward(loss)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from engine import tensor as _tensor
from engine.tensor import Tensor
from tools.errors import GraphError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Node:
    op: str
    inputs: tuple[int, ...]
    output: int


class Graph:
    """Registro (op, ids de entrada, id de saída) na ordem de execução."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._ids: dict[int, int] = {}
        self._tensors: list[Tensor] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Graph":
        _tensor._recording.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _tensor._recording.remove(self)

    def _id_of(self, t: Tensor) -> int:
        key = id(t)
        if key not in self._ids:
            self._ids[key] = len(self._tensors)
            # mantém a referência viva para que id() não seja reutilizado
            self._tensors.append(t)
        return self._ids[key]

    def _record(self, func, inputs: tuple[Tensor, ...], output: Tensor) -> None:
        node = Node(
            op=func.name,
            inputs=tuple(self._id_of(t) for t in inputs),
            output=self._id_of(output),
        )
        self._produced.add(node.output)
        self.nodes.append(node)

    def tensor(self, node_id: int) -> Tensor:
        return self._tensors[node_id]

    def topological_order(self) -> list[Node]:
        """
        Nós na ordem de execução, que já é topológica. Confere que cada
        entrada foi produzida antes (ou é folha) e que não há ciclos.
        """
        seen: set[int] = set()
        for node in self.nodes:
            for i in node.inputs:
                if i in self._produced and i not in seen:
                    raise GraphError(f"nó '{node.op}' usa uma entrada ainda não produzida")
            if node.output in seen:
                raise GraphError(f"nó '{node.op}' produz um tensor já existente")
            seen.add(node.output)
        return list(self.nodes)

    def backward(
        self,
        output: Tensor,
        output_grad=None,
        wrt: dict[str, Tensor] | None = None,
    ) -> dict[str, np.ndarray]:
        """
        Executa o backward a partir de `output` e devolve os gradientes dos
        tensores pedidos em `wrt` (parâmetros ou entradas).
        """
        if not self.nodes:
            raise GraphError("backward chamado antes do forward")
        if id(output) not in self._ids or self._ids[id(output)] not in self._produced:
            raise GraphError("o tensor de saída não pertence a este grafo")
        output.backward(output_grad)
        if wrt is None:
            return {}
        grads = {}
        for name, t in wrt.items():
            grads[name] = t.grad if t.grad is not None else np.zeros_like(t.data)
        return grads


def forward(fn: Callable, *inputs, **kwargs):
    """Executa `fn(*inputs)` gravando o grafo; devolve (saídas, grafo)."""
    with Graph() as graph:
        outputs = fn(*inputs, **kwargs)
    logger.debug("Grafo gravado com %d nós", len(graph.nodes))
    return outputs, graph


def backward(
    graph: Graph,
    output: Tensor,
    output_grad=None,
    wrt: dict[str, Tensor] | None = None,
) -> dict[str, np.ndarray]:
    return graph.backward(output, output_grad, wrt)
