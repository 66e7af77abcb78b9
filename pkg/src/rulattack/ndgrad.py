"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is built define-by-run: every op that sees a differentiable input
records a backward closure on its output. `Tape.trace` reifies the recorded
ops behind one output in topological order; `backward` walks it once and
populates `.grad` on every reachable differentiable tensor. Grads are
write-once per pass: call `reset_grad` before reusing a leaf in a new graph.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, DomainError, UsageError


class Tensor:
    """A dense float64 array plus optional participation in the gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, np.ndarray) and data.dtype == np.float64:
            self.data = data
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None  # ndarray of self.shape once backward has run
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def reset_grad(self) -> None:
        self.grad = None

    def sum(self) -> "Tensor":
        return sum_all(self)

    def mean(self) -> "Tensor":
        return mean_all(self)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}{flag})"


def _node(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    """Wrap an op result; record the backward rule only if a parent needs it."""
    out = Tensor(data)
    for p in parents:
        if p.requires_grad:
            out.requires_grad = True
            out._parents = parents
            out._backward = backward_fn
            break
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    # grad buffers may alias op outputs; accumulation is never in place
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors. Backward: dA += g·Bᵀ, dB += Aᵀ·g."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul needs (p,q)x(q,r), got {tuple(a.shape)} x {tuple(b.shape)}")

    def bw(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), bw)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op} needs equal shapes, got {tuple(a.shape)} and {tuple(b.shape)}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")

    def bw(g):
        _accum(a, g)
        _accum(b, g)

    return _node(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")

    def bw(g):
        _accum(a, g)
        _accum(b, -g)

    return _node(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")

    def bw(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _node(a.data * b.data, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a plain float constant."""

    def bw(g):
        _accum(a, g * c)

    return _node(a.data * c, (a,), bw)


def add_bias(m: Tensor, b: Tensor) -> Tensor:
    """Row-wise bias: (p,q) + (q,). The only broadcast this module permits."""
    if m.data.ndim != 2 or b.data.ndim != 1 or m.shape[1] != b.shape[0]:
        raise DimensionError(f"add_bias needs (p,q)+(q,), got {tuple(m.shape)} + {tuple(b.shape)}")

    def bw(g):
        _accum(m, g)
        _accum(b, g.sum(axis=0))

    return _node(m.data + b.data, (m, b), bw)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function via tanh, overflow-safe everywhere. d/dx = s(1-s)."""
    s = 0.5 * np.tanh(0.5 * x.data) + 0.5

    def bw(g):
        _accum(x, g * s * (1.0 - s))

    return _node(s, (x,), bw)


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)

    def bw(g):
        _accum(x, g * (1.0 - t * t))

    return _node(t, (x,), bw)


def sum_all(x: Tensor) -> Tensor:
    def bw(g):
        _accum(x, np.full_like(x.data, float(g)))

    return _node(np.asarray(x.data.sum()), (x,), bw)


def mean_all(x: Tensor) -> Tensor:
    if x.data.size == 0:
        raise DomainError("mean of an empty tensor")
    k = x.data.size

    def bw(g):
        _accum(x, np.full_like(x.data, float(g) / k))

    return _node(np.asarray(x.data.mean()), (x,), bw)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over all elements. Backward: 2(pred - target)/k."""
    _same_shape(pred, target, "mse_loss")
    if pred.data.size == 0:
        raise DomainError("mse_loss of empty tensors")
    k = pred.data.size
    diff = pred.data - target.data

    def bw(g):
        d = (2.0 * float(g) / k) * diff
        _accum(pred, d)
        _accum(target, -d)

    return _node(np.asarray(np.mean(diff * diff)), (pred, target), bw)


def row(x: Tensor, i: int) -> Tensor:
    """Row i of a 2-D tensor as a (1,q) tensor. Backward scatters into that row."""
    if x.data.ndim != 2:
        raise DimensionError(f"row needs a 2-D tensor, got shape {tuple(x.shape)}")
    if not 0 <= i < x.shape[0]:
        raise DomainError(f"row {i} out of range for shape {tuple(x.shape)}")

    def bw(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[i, :] = g[0]
            _accum(x, full)

    return _node(x.data[i : i + 1], (x,), bw)


def cols(x: Tensor, j0: int, j1: int) -> Tensor:
    """Column slice [j0:j1) of a 2-D tensor. Backward scatters into the slice."""
    if x.data.ndim != 2:
        raise DimensionError(f"cols needs a 2-D tensor, got shape {tuple(x.shape)}")
    if not 0 <= j0 < j1 <= x.shape[1]:
        raise DomainError(f"column slice [{j0}:{j1}) out of range for shape {tuple(x.shape)}")

    def bw(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[:, j0:j1] = g
            _accum(x, full)

    return _node(x.data[:, j0:j1], (x,), bw)


def hstack(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate tensors along the last axis (2-D columns or 1-D segments).

    Backward splits the incoming gradient by the recorded ranges.
    """
    if not parts:
        raise DomainError("hstack of nothing")
    ndim = parts[0].data.ndim
    if ndim not in (1, 2) or any(p.data.ndim != ndim for p in parts):
        raise DimensionError(f"hstack needs all-1-D or all-2-D parts, got {[tuple(p.shape) for p in parts]}")
    if ndim == 2 and any(p.shape[0] != parts[0].shape[0] for p in parts):
        raise DimensionError(f"hstack needs matching row counts, got {[tuple(p.shape) for p in parts]}")
    offsets = np.cumsum([0] + [p.shape[-1] for p in parts])

    def bw(g):
        for p, o0, o1 in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[..., o0:o1])

    return _node(np.concatenate([p.data for p in parts], axis=-1), tuple(parts), bw)


# ---------------------------------------------------------------------------
# tape and backward
# ---------------------------------------------------------------------------

class Tape:
    """Topologically ordered record of the ops behind one output tensor.

    Entries are tensors in inputs-before-outputs order; leaves carry no
    backward rule. Rebuilt per forward pass, confined to one thread.
    """

    __slots__ = ("entries",)

    def __init__(self, entries: list):
        self.entries = entries

    @classmethod
    def trace(cls, output: Tensor) -> "Tape":
        entries: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                entries.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return cls(entries)

    def run_backward(self, seed: np.ndarray) -> None:
        for t in self.entries:
            if t.grad is not None:
                raise UsageError(
                    "grad already populated on a tensor in this graph; "
                    "grads are write-once per pass (reset_grad to reuse)"
                )
        self.entries[-1].grad = np.array(seed, dtype=np.float64)
        for t in reversed(self.entries):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)


def backward(loss: Tensor) -> None:
    """One reverse pass from a scalar loss; fills .grad on reachable leaves."""
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    if loss._backward is None:
        raise UsageError("backward on a detached tensor: loss was not produced through the tape")
    Tape.trace(loss).run_backward(np.ones_like(loss.data))


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    step: float = 1e-5,
    tol: float = 1e-4,
    coords: Sequence[tuple] | None = None,
) -> tuple[bool, float]:
    """Compare the autodiff gradient of scalar-valued f at x to central differences.

    Checks every coordinate unless `coords` lists a subset of nd-indices.
    Relative error uses max(|ad|, |fd|, 1e-6) as denominator; returns
    (all within tol, worst error).
    """
    leaf = Tensor(x.data, requires_grad=True)
    backward(f(leaf))
    g_ad = leaf.grad

    if coords is None:
        coords = list(np.ndindex(*x.data.shape)) if x.data.ndim else [()]
    worst = 0.0
    base = np.array(x.data, dtype=np.float64)
    for idx in coords:
        bumped = base.copy()
        bumped[idx] = base[idx] + step
        f_hi = f(Tensor(bumped)).item()
        bumped[idx] = base[idx] - step
        f_lo = f(Tensor(bumped)).item()
        fd = (f_hi - f_lo) / (2.0 * step)
        ad = float(g_ad[idx])
        err = abs(ad - fd) / max(abs(ad), abs(fd), 1e-6)
        worst = max(worst, err)
    return worst <= tol, worst
