"""Tensor with reverse-mode autodiff over a small operation tape.

The graph is whatever the UNet forward pass builds: each op attaches a
backward closure and its parent tensors; backward() walks the tape in
reverse topological order. Training runs in float32, gradient checking in
float64; ops preserve the input dtype.
"""

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Backpropagate from a scalar tensor through the recorded tape."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def accumulate_grad(t: Tensor, g: np.ndarray):
    """Add a gradient contribution to a tensor (no-op unless it requires grad)."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


class Parameter:
    """Trainable tensor plus its Adam state; all buffers share one shape."""

    def __init__(self, data: np.ndarray, name: str = ""):
        arr = np.ascontiguousarray(data)
        self.value = Tensor(arr, requires_grad=True)
        self.adam_m = np.zeros_like(arr)
        self.adam_v = np.zeros_like(arr)
        self.step_count = 0
        self.name = name

    @property
    def data(self) -> np.ndarray:
        return self.value.data

    @property
    def grad(self):
        return self.value.grad

    def zero_grad(self):
        self.value.grad = None

    def assign(self, data: np.ndarray):
        """Replace the value and reset optimizer state (same shape required)."""
        if data.shape != self.value.data.shape:
            raise ValueError(f"parameter {self.name}: shape {data.shape} != "
                             f"{self.value.data.shape}")
        self.value.data = np.ascontiguousarray(data)
        self.adam_m = np.zeros_like(self.value.data)
        self.adam_v = np.zeros_like(self.value.data)
        self.step_count = 0

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.value.data.shape})"
