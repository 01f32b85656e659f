"""Reverse-mode differentiation over float64 numpy arrays.

A forward pass builds a small graph of Node objects; calling backward() on a
scalar loss node fills every reachable node's .grad and copies leaf gradients
into their owning Param. Graphs are single-use: one forward, one backward.
Gradients never flow past a constant() node, which is how module-local
training keeps its gradients inside the module that produced the loss.
"""

from __future__ import annotations

import numpy as np


class Node:
    """One recorded value of a forward pass."""

    __slots__ = ("data", "grad", "_parents", "_backward", "param")

    def __init__(self, data, parents=(), backward=None, param=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward
        self.param = param

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)


def constant(x) -> Node:
    """Wrap an array as a gradient sink; upstream of this node nothing flows."""
    return Node(x)


def leaf(param) -> Node:
    """Wrap a Param's current value; backward() writes the gradient back."""
    return Node(param.value, param=param)


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(node) into every node of the recorded graph.

    Raises if the target is not scalar or if this graph was already
    differentiated (a stale graph cannot be re-run without a fresh forward).
    """
    if loss.data.size != 1:
        raise ValueError(f"backward target must be scalar, got shape {loss.data.shape}")
    if loss.grad is not None:
        raise RuntimeError("backward already ran on this graph; rebuild the forward pass")

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    for node in order:
        node.grad = np.zeros_like(node.data)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)
    for node in order:
        if node.param is not None:
            node.param.grad[...] = node.grad


# ---------------------------------------------------------------------------
# primitive ops


def matmul(a: Node, b: Node) -> Node:
    out = Node(a.data @ b.data, parents=(a, b))

    def bwd(g):
        a.grad += g @ b.data.T
        b.grad += a.data.T @ g

    out._backward = bwd
    return out


def add_bias(x: Node, b: Node) -> Node:
    """Row-broadcast bias add: x is [B, O], b is [O]."""
    out = Node(x.data + b.data, parents=(x, b))

    def bwd(g):
        x.grad += g
        b.grad += g.sum(axis=0)

    out._backward = bwd
    return out


def add(a: Node, b: Node) -> Node:
    out = Node(a.data + b.data, parents=(a, b))

    def bwd(g):
        a.grad += g
        b.grad += g

    out._backward = bwd
    return out


def sub(a: Node, b: Node) -> Node:
    out = Node(a.data - b.data, parents=(a, b))

    def bwd(g):
        a.grad += g
        b.grad -= g

    out._backward = bwd
    return out


def scale(a: Node, c: float) -> Node:
    out = Node(a.data * c, parents=(a,))

    def bwd(g):
        a.grad += g * c

    out._backward = bwd
    return out


def add_const(a: Node, c) -> Node:
    out = Node(a.data + c, parents=(a,))

    def bwd(g):
        a.grad += g

    out._backward = bwd
    return out


def rsub_const(c, a: Node) -> Node:
    out = Node(c - a.data, parents=(a,))

    def bwd(g):
        a.grad -= g

    out._backward = bwd
    return out


def mul_const(a: Node, arr) -> Node:
    arr = np.asarray(arr, dtype=np.float64)
    out = Node(a.data * arr, parents=(a,))

    def bwd(g):
        a.grad += g * arr

    out._backward = bwd
    return out


def square(a: Node) -> Node:
    out = Node(a.data * a.data, parents=(a,))

    def bwd(g):
        a.grad += 2.0 * a.data * g

    out._backward = bwd
    return out


def absval(a: Node) -> Node:
    out = Node(np.abs(a.data), parents=(a,))

    def bwd(g):
        a.grad += np.sign(a.data) * g

    out._backward = bwd
    return out


def row_sum(a: Node) -> Node:
    """[B, D] -> [B, 1] sum over the feature axis."""
    out = Node(a.data.sum(axis=1, keepdims=True), parents=(a,))

    def bwd(g):
        a.grad += g

    out._backward = bwd
    return out


def mean_all(a: Node) -> Node:
    out = Node(a.data.mean(), parents=(a,))

    def bwd(g):
        a.grad += g / a.data.size

    out._backward = bwd
    return out


def clip_min(a: Node, lo: float) -> Node:
    out = Node(np.maximum(a.data, lo), parents=(a,))

    def bwd(g):
        a.grad += (a.data > lo) * g

    out._backward = bwd
    return out


def div_rows(x: Node, s: Node) -> Node:
    """Divide each row of x [B, D] by the matching entry of s [B, 1]."""
    out = Node(x.data / s.data, parents=(x, s))

    def bwd(g):
        x.grad += g / s.data
        s.grad += -(g * x.data).sum(axis=1, keepdims=True) / (s.data * s.data)

    out._backward = bwd
    return out


def tanh(a: Node) -> Node:
    out_data = np.tanh(a.data)
    out = Node(out_data, parents=(a,))

    def bwd(g):
        a.grad += (1.0 - out_data * out_data) * g

    out._backward = bwd
    return out


def sigmoid(a: Node) -> Node:
    out_data = _sigmoid(a.data)
    out = Node(out_data, parents=(a,))

    def bwd(g):
        a.grad += out_data * (1.0 - out_data) * g

    out._backward = bwd
    return out


def leaky_relu(a: Node, slope: float) -> Node:
    pos = a.data >= 0
    out = Node(np.where(pos, a.data, slope * a.data), parents=(a,))

    def bwd(g):
        a.grad += np.where(pos, 1.0, slope) * g

    out._backward = bwd
    return out


def softmax_cross_entropy(logits: Node, onehot) -> Node:
    """Mean over the batch of -log softmax(logits)[true class]."""
    onehot = np.asarray(onehot, dtype=np.float64)
    probs = _softmax(logits.data)
    batch = logits.data.shape[0]
    nll = -(onehot * np.log(probs)).sum(axis=1)
    out = Node(nll.mean(), parents=(logits,))

    def bwd(g):
        logits.grad += (probs - onehot) / batch * g

    out._backward = bwd
    return out


def mean_squared_error(pred: Node, target) -> Node:
    """Mean over every element of the squared difference."""
    target = np.asarray(target, dtype=np.float64)
    diff = pred.data - target
    out = Node((diff * diff).mean(), parents=(pred,))

    def bwd(g):
        pred.grad += 2.0 * diff / diff.size * g

    out._backward = bwd
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)
