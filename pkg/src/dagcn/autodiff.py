"""Reverse-mode differentiation over numpy arrays.

A ``Tape`` records every primitive operation executed during a forward pass
(matmul, gather/segment reductions, cosine rows, exp, normalize, LeakyReLU,
pooling, concat, softmax cross-entropy). ``backward`` walks the record list in
reverse, accumulating exact gradients for the leaf tensors. The record list is
already topologically ordered because it is appended in execution order.

All values are float64 ndarrays (scalars are 0-d arrays). Reductions run in
fixed edge order through the kernel backends, so forward and backward are
deterministic; ``Tape.replay_check`` re-executes every record and verifies
bitwise equality with the stored outputs.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import kernels

_NORM_EPS = 1e-12


class Tensor:
    """A value in the recorded computation. Leaves may carry a name."""

    __slots__ = ("value", "name", "tape")

    def __init__(self, value: np.ndarray, tape: "Tape", name: str | None = None):
        self.value = value
        self.tape = tape
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(name={self.name!r}, shape={self.value.shape})"


class _Record:
    __slots__ = ("op", "inputs", "output", "forward", "backward")

    def __init__(self, op, inputs, output, forward, backward):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.forward = forward    # () -> ndarray, recomputed from input values
        self.backward = backward  # grad_out -> tuple of grads (None = no grad)


class Tape:
    """Execution record plus bookkeeping used by the gradient checks."""

    def __init__(self):
        self.records: list[_Record] = []
        # Smallest |pre-activation| seen by any LeakyReLU on this tape;
        # the finite-difference check uses it to skip kink coordinates.
        self.min_abs_preact = np.inf

    def leaf(self, value, name: str | None = None) -> Tensor:
        return Tensor(np.asarray(value, dtype=np.float64), self, name)

    def const(self, value) -> Tensor:
        return self.leaf(value)

    def _push(self, op, inputs, value, forward, backward) -> Tensor:
        out = Tensor(value, self)
        self.records.append(_Record(op, tuple(inputs), out, forward, backward))
        return out

    def replay_check(self) -> bool:
        """Re-run every recorded op; True iff outputs reproduce bit-for-bit."""
        for rec in self.records:
            again = rec.forward()
            if not np.array_equal(np.asarray(again), np.asarray(rec.output.value)):
                return False
        return True

    def release(self) -> None:
        """Drop the record list.

        Tensors reference their tape and the tape references every recorded
        tensor, so a finished tape is one big reference cycle; clearing the
        records lets plain refcounting reclaim the intermediate arrays
        immediately instead of waiting for the cycle collector.
        """
        self.records.clear()


def backward(loss: Tensor, params: Sequence[Tensor]) -> dict[str, np.ndarray]:
    """Gradients of a scalar ``loss`` w.r.t. every tensor in ``params``.

    Every named parameter gets an entry, zero-filled when the loss does not
    reach it.
    """
    tape = loss.tape
    grads: dict[int, np.ndarray] = {id(loss): np.asarray(1.0)}
    for rec in reversed(tape.records):
        g_out = grads.pop(id(rec.output), None)
        if g_out is None:
            continue
        for inp, g in zip(rec.inputs, rec.backward(g_out)):
            if g is None:
                continue
            acc = grads.get(id(inp))
            grads[id(inp)] = g if acc is None else acc + g
    out = {}
    for p in params:
        if p.name is None:
            raise ValueError("parameter tensors must be named")
        g = grads.get(id(p))
        out[p.name] = np.zeros_like(p.value) if g is None else np.asarray(g)
    return out


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------


def _tape_of(*ts: Tensor) -> Tape:
    tape = ts[0].tape
    for t in ts[1:]:
        if t.tape is not tape:
            raise ValueError("tensors belong to different tapes")
    return tape


def matmul(a: Tensor, b: Tensor) -> Tensor:
    tape = _tape_of(a, b)
    fwd = lambda: a.value @ b.value
    bwd = lambda g: (g @ b.value.T, a.value.T @ g)
    return tape._push("matmul", (a, b), fwd(), fwd, bwd)


def linear_t(x: Tensor, w: Tensor) -> Tensor:
    """Row-wise projection x @ w.T (x: (N, d), w: (d', d))."""
    tape = _tape_of(x, w)
    fwd = lambda: x.value @ w.value.T
    bwd = lambda g: (g @ w.value, g.T @ x.value)
    return tape._push("linear_t", (x, w), fwd(), fwd, bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    tape = _tape_of(a, b)
    if a.value.shape != b.value.shape:
        raise ValueError(f"add shape mismatch {a.value.shape} vs {b.value.shape}")
    fwd = lambda: a.value + b.value
    bwd = lambda g: (g, g)
    return tape._push("add", (a, b), fwd(), fwd, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    tape = _tape_of(a, b)
    if a.value.shape != b.value.shape:
        raise ValueError(f"mul shape mismatch {a.value.shape} vs {b.value.shape}")
    fwd = lambda: a.value * b.value
    bwd = lambda g: (g * b.value, g * a.value)
    return tape._push("mul", (a, b), fwd(), fwd, bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise a / b for same-shape arrays."""
    tape = _tape_of(a, b)
    fwd = lambda: a.value / b.value
    val = fwd()
    bwd = lambda g: (g / b.value, -g * a.value / (b.value * b.value))
    return tape._push("div", (a, b), val, fwd, bwd)


def exp(x: Tensor) -> Tensor:
    tape = _tape_of(x)
    val = np.exp(x.value)
    return tape._push("exp", (x,), val, lambda: np.exp(x.value), lambda g: (g * val,))


def scale_const(x: Tensor, c: float) -> Tensor:
    tape = _tape_of(x)
    fwd = lambda: x.value * c
    return tape._push("scale_const", (x,), fwd(), fwd, lambda g: (g * c,))


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """x (N, D) scaled row-wise by s (N,)."""
    tape = _tape_of(x, s)
    fwd = lambda: x.value * s.value[:, None]
    bwd = lambda g: (g * s.value[:, None], np.sum(g * x.value, axis=1))
    return tape._push("scale_rows", (x, s), fwd(), fwd, bwd)


def rows_div_const(x: Tensor, denom: np.ndarray) -> Tensor:
    """x (N, D) divided row-wise by a constant vector (N,)."""
    tape = _tape_of(x)
    d = np.asarray(denom, dtype=np.float64)
    fwd = lambda: x.value / d[:, None]
    return tape._push("rows_div_const", (x,), fwd(), fwd, lambda g: (g / d[:, None],))


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    tape = _tape_of(x)
    idx = np.asarray(idx, dtype=np.int64)
    n = x.value.shape[0]
    fwd = lambda: x.value[idx]
    bwd = lambda g: (kernels.segment_sum(g, idx, n),)
    return tape._push("gather_rows", (x,), fwd(), fwd, bwd)


def gather_vec(x: Tensor, idx: np.ndarray) -> Tensor:
    tape = _tape_of(x)
    idx = np.asarray(idx, dtype=np.int64)
    n = x.value.shape[0]
    fwd = lambda: x.value[idx]
    bwd = lambda g: (kernels.segment_sum_1d(g, idx, n),)
    return tape._push("gather_vec", (x,), fwd(), fwd, bwd)


def segment_sum_rows(x: Tensor, seg: np.ndarray, n_segments: int) -> Tensor:
    tape = _tape_of(x)
    seg = np.asarray(seg, dtype=np.int64)
    fwd = lambda: kernels.segment_sum(x.value, seg, n_segments)
    bwd = lambda g: (np.ascontiguousarray(g)[seg],)
    return tape._push("segment_sum_rows", (x,), fwd(), fwd, bwd)


def segment_sum_vec(x: Tensor, seg: np.ndarray, n_segments: int) -> Tensor:
    tape = _tape_of(x)
    seg = np.asarray(seg, dtype=np.int64)
    fwd = lambda: kernels.segment_sum_1d(x.value, seg, n_segments)
    bwd = lambda g: (np.asarray(g)[seg],)
    return tape._push("segment_sum_vec", (x,), fwd(), fwd, bwd)


def segment_mean_rows(x: Tensor, seg: np.ndarray, n_segments: int) -> Tensor:
    seg = np.asarray(seg, dtype=np.int64)
    counts = np.bincount(seg, minlength=n_segments).astype(np.float64)
    if np.any(counts == 0):
        raise ValueError("segment_mean_rows requires every segment nonempty")
    return rows_div_const(segment_sum_rows(x, seg, n_segments), counts)


def segment_max_rows(x: Tensor, seg: np.ndarray, n_segments: int) -> Tensor:
    """Columnwise per-segment max; gradient routes to the first max row."""
    tape = _tape_of(x)
    seg = np.asarray(seg, dtype=np.int64)
    val, arg = kernels.segment_max(x.value, seg, n_segments)
    if np.any(arg < 0):
        raise ValueError("segment_max_rows requires every segment nonempty")
    dim = x.value.shape[1]
    cols = np.tile(np.arange(dim), n_segments)

    def bwd(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, (arg.ravel(), cols), np.asarray(g).ravel())
        return (gx,)

    fwd = lambda: kernels.segment_max(x.value, seg, n_segments)[0]
    return tape._push("segment_max_rows", (x,), val, fwd, bwd)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    tape = _tape_of(a, b)
    d1 = a.value.shape[1]
    fwd = lambda: np.concatenate([a.value, b.value], axis=1)
    bwd = lambda g: (np.ascontiguousarray(g[:, :d1]), np.ascontiguousarray(g[:, d1:]))
    return tape._push("concat_cols", (a, b), fwd(), fwd, bwd)


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    tape = _tape_of(x)
    if x.value.size:
        tape.min_abs_preact = min(tape.min_abs_preact, float(np.min(np.abs(x.value))))
    fwd = lambda: np.where(x.value >= 0.0, x.value, slope * x.value)
    bwd = lambda g: (g * np.where(x.value >= 0.0, 1.0, slope),)
    return tape._push("leaky_relu", (x,), fwd(), fwd, bwd)


def cosine_rows(x: Tensor, y: Tensor) -> Tensor:
    """Row-wise cosine similarity, 0 where either row norm is ~0.

    Output clamps to [-1, 1]; the clamp only absorbs float round-off.
    """
    tape = _tape_of(x, y)
    nx = np.linalg.norm(x.value, axis=1)
    ny = np.linalg.norm(y.value, axis=1)
    valid = (nx > _NORM_EPS) & (ny > _NORM_EPS)
    denom = np.where(valid, nx * ny, 1.0)
    dot = np.sum(x.value * y.value, axis=1)
    cos = np.clip(np.where(valid, dot / denom, 0.0), -1.0, 1.0)

    def fwd():
        d = np.sum(x.value * y.value, axis=1)
        return np.clip(np.where(valid, d / denom, 0.0), -1.0, 1.0)

    def bwd(g):
        gv = np.where(valid, g, 0.0)
        gx = (y.value / denom[:, None] - cos[:, None] * x.value / np.where(valid, nx * nx, 1.0)[:, None]) * gv[:, None]
        gy = (x.value / denom[:, None] - cos[:, None] * y.value / np.where(valid, ny * ny, 1.0)[:, None]) * gv[:, None]
        return gx, gy

    return tape._push("cosine_rows", (x, y), cos, fwd, bwd)


def cross_entropy_rows(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Per-row softmax cross-entropy against integer targets."""
    tape = _tape_of(logits)
    t = np.asarray(targets, dtype=np.int64)
    rows = np.arange(t.shape[0])

    def fwd():
        z = logits.value
        m = np.max(z, axis=1)
        lse = m + np.log(np.sum(np.exp(z - m[:, None]), axis=1))
        return lse - z[rows, t]

    def bwd(g):
        z = logits.value
        m = np.max(z, axis=1, keepdims=True)
        ez = np.exp(z - m)
        soft = ez / np.sum(ez, axis=1, keepdims=True)
        gz = soft * np.asarray(g)[:, None]
        gz[rows, t] -= np.asarray(g)
        return (gz,)

    return tape._push("cross_entropy_rows", (logits,), fwd(), fwd, bwd)


def sum_vec(x: Tensor) -> Tensor:
    tape = _tape_of(x)
    fwd = lambda: np.asarray(np.sum(x.value))
    bwd = lambda g: (np.broadcast_to(np.asarray(g), x.value.shape).copy(),)
    return tape._push("sum_vec", (x,), fwd(), fwd, bwd)
