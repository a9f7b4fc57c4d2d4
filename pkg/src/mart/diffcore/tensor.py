"""Tensor and computation record for reverse-mode differentiation.

Operations only record onto a :class:`Tape` while one is active::

    with Tape() as tape:
        loss = f(params)
    tape.backward(loss)

Outside a tape every op is a plain numpy evaluation, which keeps pure
forward passes free of shared mutable state.
"""

import threading
from dataclasses import dataclass, field

import numpy as np

_local = threading.local()


def _active_tape():
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


@dataclass
class Node:
    tag: str
    inputs: tuple
    output: "Tensor"
    backward: object  # callable(grad_out) -> tuple of input grads (or None)


@dataclass
class Tape:
    """Append-only record of the operations executed while it is active."""

    nodes: list = field(default_factory=list)

    def __enter__(self):
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def record(self, tag, inputs, output, backward):
        output._tape = self
        self.nodes.append(Node(tag, inputs, output, backward))

    def backward(self, loss, grad=None):
        """Accumulate d(loss)/d(t) into ``t.grad`` for every recorded leaf."""
        if grad is None:
            if loss.data.size != 1:
                raise ValueError("backward() without grad needs a scalar loss")
            grad = np.ones_like(loss.data)
        loss.grad = np.asarray(grad, dtype=loss.data.dtype).reshape(loss.shape)
        for node in reversed(self.nodes):
            g = node.output.grad
            if g is None:
                continue
            in_grads = node.backward(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = np.array(gi, dtype=t.data.dtype, copy=True).reshape(t.shape)
                else:
                    t.grad = t.grad + gi

    def release(self):
        """Drop the record and intermediate gradients; leaf ``grad`` values are kept.

        Recorded outputs point back at the tape, so without this the whole graph
        waits for the cycle collector.
        """
        for node in self.nodes:
            node.output._tape = None
            node.output.grad = None
        self.nodes.clear()


class Tensor:
    """An n-dimensional float array that can take part in differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_tape", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._tape = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self, grad=None):
        if self._tape is None:
            raise RuntimeError("tensor was not produced under an active Tape")
        self._tape.backward(self, grad)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from mart.diffcore import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from mart.diffcore import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from mart.diffcore import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from mart.diffcore import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from mart.diffcore import ops
        return ops.div(self, other)

    def __neg__(self):
        from mart.diffcore import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from mart.diffcore import ops
        return ops.matmul(self, other)

    def reshape(self, *shape):
        from mart.diffcore import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from mart.diffcore import ops
        return ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        from mart.diffcore import ops
        return ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        from mart.diffcore import ops
        return ops.mean(self, axis, keepdims)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def make_result(tag, data, inputs, backward):
    """Wrap ``data`` and record the node when a tape is active and needed."""
    out = Tensor(data)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(tag, tuple(inputs), out, backward)
    return out
