"""Minimal reverse-mode differentiation over numpy arrays.

Only the operations the GCN needs are provided. Gradient accumulation for
gathers goes through a sparse selection matrix so that summation order is
fixed and results are reproducible.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, parents=(), backward=None, requires_grad=False, name=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor({self.name or 'anon'}, shape={self.data.shape})"

    def _accum(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, c):
        return scale(self, c)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def param(data, name="") -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        a._accum(g @ b.data.T)
        b._accum(a.data.T @ g)
    return Tensor(a.data @ b.data, (a, b), back)


def spmm(m, x: Tensor) -> Tensor:
    """Constant sparse (or dense) matrix times tensor."""
    mt = m.T

    def back(g):
        x._accum(np.asarray(mt @ g))
    return Tensor(np.asarray(m @ x.data), (x,), back)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum with numpy broadcasting."""
    def back(g):
        a._accum(_unbroadcast(g, a.data.shape))
        b._accum(_unbroadcast(g, b.data.shape))
    return Tensor(a.data + b.data, (a, b), back)


def scale(a: Tensor, c: float) -> Tensor:
    def back(g):
        a._accum(g * c)
    return Tensor(a.data * c, (a,), back)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def back(g):
        a._accum(g * mask)
    return Tensor(a.data * mask, (a,), back)


def _selection(idx: np.ndarray, n: int) -> sp.csr_matrix:
    m = len(idx)
    return sp.csr_matrix((np.ones(m), idx, np.arange(m + 1)), shape=(m, n))


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)

    def back(g):
        a._accum(np.asarray(_selection(idx, a.data.shape[0]).T @ g))
    return Tensor(a.data[idx], (a,), back)


def rowdot(a: Tensor, b: Tensor) -> Tensor:
    """Per-row inner product, shape (m,)."""
    def back(g):
        a._accum(g[:, None] * b.data)
        b._accum(g[:, None] * a.data)
    return Tensor(np.einsum("ij,ij->i", a.data, b.data), (a, b), back)


def bce_with_logits(z: Tensor, target: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of sigmoid(z) against 0/1 targets."""
    x = z.data
    t = np.asarray(target, dtype=np.float64)
    m = max(len(x), 1)
    # max(x,0) - x t + log(1 + exp(-|x|))
    loss = (np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))).sum() / m

    def back(g):
        sig = 0.5 * (1 + np.tanh(0.5 * x))
        z._accum(g * (sig - t) / m)
    return Tensor(loss, (z,), back)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of softmax(logits) against integer labels."""
    x = logits.data
    labels = np.asarray(labels, dtype=np.int64)
    m = max(len(labels), 1)
    shifted = x - x.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    loss = (logsum - shifted[np.arange(len(labels)), labels]).sum() / m

    def back(g):
        p = np.exp(shifted - logsum[:, None])
        p[np.arange(len(labels)), labels] -= 1.0
        logits._accum(g * p / m)
    return Tensor(loss, (logits,), back)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= self.b1
            m += (1 - self.b1) * p.grad
            v *= self.b2
            v += (1 - self.b2) * p.grad * p.grad
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def gradient_check(loss_fn, params, n_checks: int = 50, step: float = 1e-5, seed: int = 0) -> float:
    """Max ``|analytic - numeric| / max(1, |numeric|)`` over random coordinates.

    ``loss_fn()`` must rebuild the scalar loss from the current parameter
    values deterministically.
    """
    for p in params:
        p.zero_grad()
    loss_fn().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    rng = np.random.default_rng(seed)
    sizes = np.array([p.data.size for p in params])
    worst = 0.0
    for _ in range(n_checks):
        k = int(rng.choice(len(params), p=sizes / sizes.sum()))
        flat = params[k].data.reshape(-1)
        j = int(rng.integers(flat.size))
        orig = flat[j]
        flat[j] = orig + step
        up = float(loss_fn().data)
        flat[j] = orig - step
        down = float(loss_fn().data)
        flat[j] = orig
        numeric = (up - down) / (2 * step)
        err = abs(analytic[k].reshape(-1)[j] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst
