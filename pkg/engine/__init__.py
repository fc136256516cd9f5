from .graph import Graph, backward, forward
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, as_tensor, concat, no_grad, scatter_add, softmax, softmax_cross_entropy
