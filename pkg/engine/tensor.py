"""
Motor mínimo de diferenciação automática reversa sobre arrays NumPy.

Todo valor é float64. Cada operação é uma subclasse de `Function` com
`forward` (arrays -> array) e `backward` (gradiente da saída -> gradientes
das entradas). `Function.apply` cria o `Tensor` de saída e registra o nó nos
grafos ativos (ver `engine.graph`).

Exemplo:
    x = Tensor(3.0, requires_grad=True)
    y = x * x
    y.backward()
    x.grad  # 6.0
"""

from __future__ import annotations

import contextlib
import logging
from typing import Sequence

import numpy as np

from tools.errors import GraphError, ShapeError

logger = logging.getLogger(__name__)

# Grafos em gravação (pilha de `engine.graph.Graph`).
_recording: list = []
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Desliga a construção do grafo (inferência, validação)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Soma as dimensões criadas por broadcasting até voltar a `shape`."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Function:
    """Operação diferenciável. Subclasses implementam forward/backward."""

    name = "function"

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs, **kwargs) -> "Tensor":
        tensors = tuple(as_tensor(x) for x in inputs)
        func = cls(*tensors)
        try:
            out_data = func.forward(*(t.data for t in tensors), **kwargs)
        except (ValueError, IndexError) as e:
            shapes = [t.shape for t in tensors]
            raise ShapeError(cls.name, f"entradas com formas {shapes}: {e}") from e
        requires_grad = _grad_enabled and any(t.requires_grad for t in tensors)
        out = Tensor(out_data, requires_grad=requires_grad)
        if requires_grad:
            out._creator = func
        for graph in _recording:
            graph._record(func, tensors, out)
        return out


class Tensor:
    """
    Array float64 com gradiente opcional.

    Tensores são tratados como imutáveis depois de criados; o otimizador
    troca `data` por um novo array a cada passo.
    """

    __array_priority__ = 100
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray | None = None
        self._creator: Function | None = None

    # ---------- propriedades ----------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # ---------- aritmética ----------

    def __add__(self, other):
        return Add.apply(self, other)

    def __radd__(self, other):
        return Add.apply(other, self)

    def __sub__(self, other):
        return Sub.apply(self, other)

    def __rsub__(self, other):
        return Sub.apply(other, self)

    def __mul__(self, other):
        return Mul.apply(self, other)

    def __rmul__(self, other):
        return Mul.apply(other, self)

    def __truediv__(self, other):
        return Div.apply(self, other)

    def __rtruediv__(self, other):
        return Div.apply(other, self)

    def __neg__(self):
        return Neg.apply(self)

    def __pow__(self, exponent: float):
        return Pow.apply(self, exponent=float(exponent))

    def __matmul__(self, other):
        return MatMul.apply(self, other)

    def __rmatmul__(self, other):
        return MatMul.apply(other, self)

    def __getitem__(self, key):
        return GetItem.apply(self, key=key)

    # ---------- reduções e formas ----------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def max(self, axis: int, keepdims: bool = False) -> "Tensor":
        return Max.apply(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Transpose.apply(self, axes=axes or None)

    def broadcast_to(self, shape: Sequence[int]) -> "Tensor":
        return BroadcastTo.apply(self, shape=tuple(shape))

    def gather(self, index) -> "Tensor":
        """Indexa o primeiro eixo com um array de inteiros de qualquer forma."""
        return GetItem.apply(self, key=np.asarray(index, dtype=np.int64))

    # ---------- elementares ----------

    def relu(self) -> "Tensor":
        return ReLU.apply(self)

    def sqrt(self) -> "Tensor":
        return Sqrt.apply(self)

    def exp(self) -> "Tensor":
        return Exp.apply(self)

    def log(self) -> "Tensor":
        return Log.apply(self)

    def sin(self) -> "Tensor":
        return Sin.apply(self)

    def cos(self) -> "Tensor":
        return Cos.apply(self)

    # ---------- backward ----------

    def _topological_order(self) -> list["Tensor"]:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._creator is not None:
                for parent in reversed(node._creator.inputs):
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def backward(self, grad=None) -> None:
        """
        Propaga `grad` (padrão 1 para escalares) até as folhas que pedem
        gradiente. Gradientes de folhas são acumulados em `.grad`.
        """
        if not self.requires_grad:
            raise GraphError(
                "backward em um tensor sem gradiente: o forward não foi gravado"
            )
        if grad is None:
            if self.size != 1:
                raise GraphError("grad obrigatório para saídas não escalares")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.shape:
            raise ShapeError(
                "backward", f"grad com forma {grad.shape} para saída {self.shape}"
            )

        pending: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(self._topological_order()):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._creator is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            input_grads = node._creator.backward(g)
            for parent, parent_grad in zip(node._creator.inputs, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + parent_grad if key in pending else parent_grad


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


# ============================================================
# Operações
# ============================================================


class Add(Function):
    name = "add"

    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class Sub(Function):
    name = "sub"

    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    name = "mul"

    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return (
            unbroadcast(grad * self.b, self.a.shape),
            unbroadcast(grad * self.a, self.b.shape),
        )


class Div(Function):
    name = "div"

    def forward(self, a, b):
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        return (
            unbroadcast(grad / self.b, self.a.shape),
            unbroadcast(-grad * self.a / (self.b * self.b), self.b.shape),
        )


class Neg(Function):
    name = "neg"

    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Pow(Function):
    name = "pow"

    def forward(self, a, exponent: float):
        self.a, self.exponent = a, exponent
        return a**exponent

    def backward(self, grad):
        return (grad * self.exponent * self.a ** (self.exponent - 1.0),)


class MatMul(Function):
    name = "matmul"

    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError("matmul exige tensores com ndim >= 2")
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad):
        grad_a = np.matmul(grad, np.swapaxes(self.b, -1, -2))
        grad_b = np.matmul(np.swapaxes(self.a, -1, -2), grad)
        return unbroadcast(grad_a, self.a.shape), unbroadcast(grad_b, self.b.shape)


class ReLU(Function):
    name = "relu"

    def forward(self, a):
        self.mask = a > 0
        return np.where(self.mask, a, 0.0)

    def backward(self, grad):
        return (grad * self.mask,)


class Sqrt(Function):
    name = "sqrt"

    def forward(self, a):
        self.out = np.sqrt(a)
        return self.out

    def backward(self, grad):
        return (grad * 0.5 / self.out,)


class Exp(Function):
    name = "exp"

    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    name = "log"

    def forward(self, a):
        self.a = a
        return np.log(a)

    def backward(self, grad):
        return (grad / self.a,)


class Sin(Function):
    name = "sin"

    def forward(self, a):
        self.a = a
        return np.sin(a)

    def backward(self, grad):
        return (grad * np.cos(self.a),)


class Cos(Function):
    name = "cos"

    def forward(self, a):
        self.a = a
        return np.cos(a)

    def backward(self, grad):
        return (-grad * np.sin(self.a),)


def _normalize_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(sorted(a % ndim for a in axes))


class Sum(Function):
    name = "sum"

    def forward(self, a, axis=None, keepdims=False):
        self.shape = a.shape
        self.axes = _normalize_axes(axis, a.ndim)
        self.keepdims = keepdims
        return np.sum(a, axis=self.axes, keepdims=keepdims)

    def backward(self, grad):
        if not self.keepdims:
            for axis in self.axes:
                grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Max(Function):
    """Máximo ao longo de um eixo (max-pool sobre conjuntos)."""

    name = "max"

    def forward(self, a, axis: int, keepdims=False):
        self.shape = a.shape
        self.axis = axis % a.ndim
        self.keepdims = keepdims
        # argmax devolve o primeiro índice em caso de empate
        self.index = np.expand_dims(np.argmax(a, axis=self.axis), self.axis)
        out = np.take_along_axis(a, self.index, axis=self.axis)
        return out if keepdims else np.squeeze(out, axis=self.axis)

    def backward(self, grad):
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        full = np.zeros(self.shape)
        np.put_along_axis(full, self.index, grad, axis=self.axis)
        return (full,)


class Reshape(Function):
    name = "reshape"

    def forward(self, a, shape):
        self.shape = a.shape
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    name = "transpose"

    def forward(self, a, axes=None):
        self.axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
        return np.transpose(a, self.axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class BroadcastTo(Function):
    name = "broadcast_to"

    def forward(self, a, shape):
        self.shape = a.shape
        return np.broadcast_to(a, shape).copy()

    def backward(self, grad):
        return (unbroadcast(grad, self.shape),)


class GetItem(Function):
    """Indexação (fatias ou gather por índices inteiros)."""

    name = "gather"

    def forward(self, a, key):
        self.shape = a.shape
        self.key = key
        return np.array(a[key], dtype=np.float64)

    def backward(self, grad):
        full = np.zeros(self.shape)
        np.add.at(full, self.key, grad)
        return (full,)


class ScatterAdd(Function):
    """out[index[i]] += src[i] para um eixo de destino de tamanho `size`."""

    name = "scatter_add"

    def forward(self, src, index, size: int):
        self.index = np.asarray(index, dtype=np.int64)
        if src.shape[: self.index.ndim] != self.index.shape:
            raise ValueError("índices e origem com formas diferentes")
        out = np.zeros((size,) + src.shape[self.index.ndim :])
        np.add.at(out, self.index, src)
        return out

    def backward(self, grad):
        return (grad[self.index],)


class Concat(Function):
    name = "concat"

    def forward(self, *arrays, axis=0):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        splits = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, splits, axis=self.axis))


class Softmax(Function):
    name = "softmax"

    def forward(self, a, axis=-1):
        self.axis = axis
        shifted = a - np.max(a, axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / np.sum(e, axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        dot = np.sum(grad * self.out, axis=self.axis, keepdims=True)
        return (self.out * (grad - dot),)


class SoftmaxCrossEntropy(Function):
    """Softmax + entropia cruzada fundidas; média sobre as linhas."""

    name = "softmax_cross_entropy"

    def forward(self, logits, targets):
        logits2 = np.atleast_2d(logits)
        self.shape = logits.shape
        self.targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
        if len(self.targets) != len(logits2):
            raise ValueError("um alvo por linha de logits")
        if np.any(self.targets < 0) or np.any(self.targets >= logits2.shape[1]):
            raise IndexError("classe alvo fora do intervalo")
        shifted = logits2 - np.max(logits2, axis=1, keepdims=True)
        log_z = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
        log_probs = shifted - log_z
        self.probs = np.exp(log_probs)
        rows = np.arange(len(self.targets))
        return np.array(-np.mean(log_probs[rows, self.targets]))

    def backward(self, grad):
        rows = np.arange(len(self.targets))
        g = self.probs.copy()
        g[rows, self.targets] -= 1.0
        g *= grad / len(self.targets)
        return (g.reshape(self.shape),)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def scatter_add(src: Tensor, index, size: int) -> Tensor:
    return ScatterAdd.apply(src, index=index, size=size)


def softmax(logits: Tensor, axis: int = -1) -> Tensor:
    return Softmax.apply(logits, axis=axis)


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Média de -log softmax(logits)[alvo]; `targets` são índices inteiros."""
    return SoftmaxCrossEntropy.apply(logits, targets=targets)
