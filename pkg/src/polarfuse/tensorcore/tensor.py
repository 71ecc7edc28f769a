"""Reverse-mode autodiff over dense float64 numpy arrays.

Tensors form a DAG through closure-recorded parents; backward() runs the
vector-Jacobian closures in reverse topological order. Leaves that require
gradients accumulate into .grad (Parameters start with a zero grad buffer),
everything else propagates through a scratch dict and is dropped.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._vjp = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the underlying ops live in tensorcore.ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, ops.as_tensor(other))

    def __radd__(self, other):
        from . import ops
        return ops.add(ops.as_tensor(other), self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, ops.as_tensor(other))

    def __rsub__(self, other):
        from . import ops
        return ops.sub(ops.as_tensor(other), self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, ops.as_tensor(other))

    def __rmul__(self, other):
        from . import ops
        return ops.mul(ops.as_tensor(other), self)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, ops.as_tensor(other))


class Parameter(Tensor):
    """A named leaf tensor with a persistent gradient accumulator."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = str(name)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def make_node(data: np.ndarray, parents: tuple, vjp) -> Tensor:
    """Wrap an op result; records the graph only when a parent needs grad."""
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = parents
        out._vjp = vjp
    return out


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor):
    """Accumulate d(loss)/d(leaf) into every reachable grad-requiring leaf."""
    if loss.data.ndim != 0:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    pending: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if not node._parents:
            if node.grad is None:
                node.grad = np.array(g, dtype=np.float64, copy=True)
            else:
                node.grad = node.grad + g
            continue
        parent_grads = node._vjp(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            acc = pending.get(id(p))
            pending[id(p)] = pg if acc is None else acc + pg


def zero_grads(params):
    for p in params:
        if isinstance(p, Parameter):
            p.zero_grad()
        else:
            p.grad = None
