"""Dense float64 tensors with tape-based reverse-mode differentiation.

Tensors are immutable wrappers around numpy arrays. Operations executed while
a :class:`Tape` is active are recorded in order; :meth:`Tape.gradient` replays
the record backwards exactly once. Outside a tape the same functions are plain
forward computations with no bookkeeping.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_ACTIVE: list["Tape"] = []


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of primitive ops for one backward pass.

    Usage::

        with Tape() as tape:
            tape.watch(w)
            loss = fh_loss_batch(...)
        grads = tape.gradient(loss, [w])
    """

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._tracked: set[int] = set()
        # keeps watched tensors alive so id() keys stay unique
        self._keep: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def watch(self, *tensors: Tensor) -> None:
        for t in tensors:
            self._tracked.add(id(t))
            self._keep.append(t)

    def is_tracked(self, t: Tensor) -> bool:
        return id(t) in self._tracked

    def record(self, out: Tensor, parents: tuple[Tensor, ...], backward: Callable) -> None:
        self._tracked.add(id(out))
        self._records.append((out, parents, backward))

    def gradient(self, target: Tensor, sources: Sequence[Tensor]) -> list[np.ndarray]:
        """Gradients of scalar ``target`` w.r.t. ``sources``; unused sources get zeros."""
        if target.data.size != 1:
            raise ShapeError(f"gradient target must be scalar, got shape {target.shape}")
        grads: dict[int, np.ndarray] = {id(target): np.ones_like(target.data)}
        for out, parents, backward in reversed(self._records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            parent_grads = backward(g)
            for p, pg in zip(parents, parent_grads):
                if pg is None or id(p) not in self._tracked:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        return [grads.get(id(s), np.zeros_like(s.data)) for s in sources]


def _tape_for(*parents: Tensor) -> Tape | None:
    if not _ACTIVE:
        return None
    tape = _ACTIVE[-1]
    for p in parents:
        if id(p) in tape._tracked:
            return tape
    return None


def _op(value: np.ndarray, parents: tuple[Tensor, ...], backward: Callable) -> Tensor:
    out = Tensor(value)
    tape = _tape_for(*parents)
    if tape is not None:
        tape.record(out, parents, backward)
    return out


# ---------------------------------------------------------------- primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data
    return _op(A @ B, (a, b), lambda g: (g @ B.T, A.T @ g))


def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """``x @ W + b`` for x of shape (B, D), W (D, C), b (C,)."""
    if x.data.ndim != 2 or W.data.ndim != 2 or b.data.ndim != 1:
        raise ShapeError(f"affine: expected 2-D input/weights and 1-D bias, got {x.shape}, {W.shape}, {b.shape}")
    if x.shape[1] != W.shape[0]:
        raise ShapeError(f"affine: input width {x.shape[1]} does not match weight rows {W.shape[0]}")
    if W.shape[1] != b.shape[0]:
        raise ShapeError(f"affine: weight columns {W.shape[1]} do not match bias length {b.shape[0]}")
    X, Wd = x.data, W.data
    return _op(X @ Wd + b.data, (x, W, b), lambda g: (g @ Wd.T, X.T @ g, g.sum(axis=0)))


def linear_rows(z: Tensor, A: Tensor) -> Tensor:
    """Row-wise ``A @ z_i`` for z of shape (B, M) and A of shape (C, M); returns (B, C)."""
    if z.data.ndim != 2 or A.data.ndim != 2 or z.shape[1] != A.shape[1]:
        raise ShapeError(f"linear_rows: code rows {z.shape} incompatible with mixing matrix {A.shape}")
    Z, Ad = z.data, A.data
    return _op(Z @ Ad.T, (z, A), lambda g: (g @ Ad, g.T @ Z))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return _op(a.data + b.data, (a, b), lambda g: (g, g))


def replicate(v: Tensor, length: int) -> Tensor:
    """Copy (B, C) across a trailing spatial axis to (B, C, length)."""
    if v.data.ndim != 2:
        raise ShapeError(f"replicate: expected (B, C), got {v.shape}")
    value = np.repeat(v.data[:, :, None], length, axis=2)
    return _op(value, (v,), lambda g: (g.sum(axis=2),))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    orig = x.shape
    return _op(x.data.reshape(shape), (x,), lambda g: (g.reshape(orig),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def stable_sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = stable_sigmoid(x.data)
    return _op(s, (x,), lambda g: (g * s * (1.0 - s),))


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Elementwise binary cross-entropy from logits.

    Uses ``max(l, 0) - l*t + log1p(exp(-|l|))`` so no probability is ever
    clipped or exponentiated out of range.
    """
    L = logits.data
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != L.shape:
        raise ShapeError(f"bce_with_logits: targets {t.shape} vs logits {L.shape}")
    value = np.maximum(L, 0.0) - L * t + np.log1p(np.exp(-np.abs(L)))
    return _op(value, (logits,), lambda g: (g * (stable_sigmoid(L) - t),))


def total(x: Tensor) -> Tensor:
    shape = x.shape
    return _op(np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def scale(x: Tensor, c: float) -> Tensor:
    return _op(x.data * c, (x,), lambda g: (g * c,))


def sq_norm(x: Tensor) -> Tensor:
    X = x.data
    return _op(np.asarray((X * X).sum()), (x,), lambda g: (2.0 * float(g) * X,))


def gather_rows(M: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    shape = M.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _op(M.data[idx], (M,), backward)


def select_heads(x: Tensor, idx: np.ndarray) -> Tensor:
    """Pick ``x[i, idx[i], :]`` from a (B, H, K) tensor."""
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(x.shape[0])
    shape = x.shape

    def backward(g):
        out = np.zeros(shape)
        out[rows, idx] = g
        return (out,)

    return _op(x.data[rows, idx], (x,), backward)


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Stride-1, unpadded cross-correlation.

    x: (B, C_in, L); kernels: (C_out, C_in, k); bias: (C_out,).
    Returns (B, C_out, L - k + 1).
    """
    if x.data.ndim != 3 or kernels.data.ndim != 3:
        raise ShapeError(f"conv1d: expected 3-D input and kernels, got {x.shape}, {kernels.shape}")
    B, C_in, L = x.shape
    C_out, kc, k = kernels.shape
    if kc != C_in:
        raise ShapeError(f"conv1d: kernel expects {kc} input channels, input has {C_in}")
    if k > L:
        raise ShapeError(f"conv1d: kernel size {k} exceeds signal length {L}")
    if bias.shape != (C_out,):
        raise ShapeError(f"conv1d: bias shape {bias.shape} does not match {C_out} output channels")
    X, K = x.data, kernels.data
    windows = sliding_window_view(X, k, axis=2)  # (B, C_in, L', k)
    value = np.einsum("bclk,ock->bol", windows, K) + bias.data[None, :, None]
    L_out = L - k + 1

    def backward(g):
        dK = np.einsum("bclk,bol->ock", windows, g)
        db = g.sum(axis=(0, 2))
        dx = np.zeros_like(X)
        for j in range(k):
            dx[:, :, j : j + L_out] += np.einsum("oc,bol->bcl", K[:, :, j], g)
        return dx, dK, db

    return _op(value, (x, kernels, bias), backward)


# ---------------------------------------------------------------- checking


def grad_check(
    fn: Callable[..., Tensor],
    params: Sequence[np.ndarray],
    eps: float = 1e-5,
    analytic: Sequence[np.ndarray] | None = None,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``fn`` takes one Tensor per entry of ``params`` and returns a scalar
    Tensor. ``analytic`` overrides the tape gradients (used to test the
    checker itself). The error per entry is
    ``|a - c| / max(|a|, |c|, 1e-12)``.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    base = [np.array(p, dtype=np.float64) for p in params]
    if analytic is None:
        tensors = [Tensor(p) for p in base]
        with Tape() as tape:
            tape.watch(*tensors)
            out = fn(*tensors)
        analytic = tape.gradient(out, tensors)

    def evaluate(values):
        return fn(*[Tensor(p) for p in values]).item()

    worst = 0.0
    for pi, p in enumerate(base):
        for coord in np.ndindex(p.shape):
            plus = [q.copy() for q in base]
            minus = [q.copy() for q in base]
            plus[pi][coord] += eps
            minus[pi][coord] -= eps
            fp, fm = evaluate(plus), evaluate(minus)
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"non-finite function value perturbing param {pi} at {coord}")
            cd = (fp - fm) / (2 * eps)
            a = float(np.asarray(analytic[pi])[coord])
            if not np.isfinite(a):
                raise FloatingPointError(f"non-finite analytic gradient for param {pi} at {coord}")
            err = abs(a - cd) / max(abs(a), abs(cd), 1e-12)
            worst = max(worst, err)
    return worst
