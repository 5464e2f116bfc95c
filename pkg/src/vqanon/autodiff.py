"""Minimal reverse-mode autodiff on 2-D float64 tensors.

Operations executed inside a ``with Tape() as tape:`` block are recorded in
execution order (a Wengert list); ``backward(tape, loss)`` walks the list in
reverse and accumulates exact analytic gradients into every tensor that was
created with ``requires_grad=True``. Gradients are never zeroed implicitly:
calling backward twice on the same tape doubles the accumulated values.
"""
from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


class Tensor:
    """A rows x cols float64 matrix, optionally tracked for gradients."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ShapeError(f"Tensor must be 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Execution-ordered record of operations for one backward pass.

    Each record holds the output tensor, its input tensors and a backward
    rule mapping the output gradient to per-input gradient contributions.
    Inputs always precede their consumers because records are appended at
    execution time.
    """

    def __init__(self):
        self.records = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _TAPE_STACK.pop()

    def record(self, output: Tensor, inputs: tuple, rule) -> None:
        self.records.append((output, inputs, rule))


_TAPE_STACK: list[Tape] = []


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _record(output, inputs, rule):
    tape = _active_tape()
    if tape is not None:
        tape.record(output, inputs, rule)


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into .grad of every requires_grad tensor.

    ``loss`` must be a 1x1 tensor produced on ``tape``. Each record is
    visited exactly once, in reverse execution order. Intermediate
    gradients live only for the duration of the walk; leaf gradients are
    added to whatever .grad already holds.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"loss must be a 1x1 scalar tensor, got {loss.shape}")
    if not any(out is loss for out, _, _ in tape.records):
        raise ValueError("loss was not produced on this tape")

    flowing: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for output, inputs, rule in reversed(tape.records):
        g = flowing.pop(id(output), None)
        if g is None:
            continue
        for tensor, contribution in rule(g):
            key = id(tensor)
            if key in flowing:
                flowing[key] = flowing[key] + contribution
            else:
                flowing[key] = contribution

    for output, inputs, _ in tape.records:
        for tensor in inputs:
            key = id(tensor)
            if tensor.requires_grad and key in flowing:
                if tensor.grad is None:
                    tensor.grad = np.zeros_like(tensor.data)
                tensor.grad = tensor.grad + flowing.pop(key)


# ---------------------------------------------------------------------------
# differentiable operations
# ---------------------------------------------------------------------------

def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """out = x @ w + b, with b a 1 x O row broadcast over rows of x."""
    if x.cols != w.rows:
        raise ShapeError(f"linear: x is {x.shape}, w is {w.shape}; "
                         f"inner dimensions {x.cols} != {w.rows}")
    if b.shape != (1, w.cols):
        raise ShapeError(f"linear: b is {b.shape}, expected (1, {w.cols})")
    out = Tensor(x.data @ w.data + b.data)

    def rule(g):
        return ((x, g @ w.data.T),
                (w, x.data.T @ g),
                (b, g.sum(axis=0, keepdims=True)))

    _record(out, (x, w, b), rule)
    return out


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at 0 is taken as 0."""
    out = Tensor(np.maximum(x.data, 0.0))
    mask = x.data > 0.0

    def rule(g):
        return ((x, g * mask),)

    _record(out, (x,), rule)
    return out


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean over rows of -log softmax(logits)[label]; returns a 1x1 tensor.

    The backward rule is the exact analytic (softmax - onehot) / N.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, c = logits.shape
    if labels.shape[0] != n:
        raise ShapeError(f"labels has {labels.shape[0]} entries for {n} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"label out of range [0, {c})")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -log_probs[np.arange(n), labels].mean()
    out = Tensor([[loss]])

    def rule(g):
        probs = np.exp(log_probs)
        probs[np.arange(n), labels] -= 1.0
        return ((logits, probs * (g[0, 0] / n)),)

    _record(out, (logits,), rule)
    return out


def straight_through(h: Tensor, q_values: np.ndarray) -> Tensor:
    """Forward the quantized values; copy the output gradient onto h unchanged.

    ``q_values`` is a plain array (no gradient path of its own), so nothing
    flows toward the prototypes through this op.
    """
    q_values = np.asarray(q_values, dtype=np.float64)
    if q_values.shape != h.shape:
        raise ShapeError(f"straight_through: h is {h.shape}, q is {q_values.shape}")
    out = Tensor(q_values.copy())

    def rule(g):
        return ((h, g),)

    _record(out, (h,), rule)
    return out


def gather_rows(table: Tensor, indices) -> Tensor:
    """Select rows of ``table``; backward scatter-adds into the picked rows."""
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    if indices.size and (indices.min() < 0 or indices.max() >= table.rows):
        raise ValueError(f"row index out of range [0, {table.rows})")
    out = Tensor(table.data[indices])

    def rule(g):
        acc = np.zeros_like(table.data)
        np.add.at(acc, indices, g)
        return ((table, acc),)

    _record(out, (table,), rule)
    return out


def sum_squared_diff(x: Tensor, target: np.ndarray) -> Tensor:
    """Sum of squared entries of (x - target); gradient flows to x only."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != x.shape:
        raise ShapeError(f"sum_squared_diff: x is {x.shape}, target is {target.shape}")
    diff = x.data - target
    out = Tensor([[float(np.sum(diff * diff))]])

    def rule(g):
        return ((x, (2.0 * g[0, 0]) * diff),)

    _record(out, (x,), rule)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)

    def rule(g):
        return ((a, g), (b, g))

    _record(out, (a, b), rule)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product of two same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data)

    def rule(g):
        return ((a, g * b.data), (b, g * a.data))

    _record(out, (a, b), rule)
    return out


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply every entry by the constant c."""
    out = Tensor(x.data * c)

    def rule(g):
        return ((x, g * c),)

    _record(out, (x,), rule)
    return out


def tensor_sum(x: Tensor) -> Tensor:
    """Sum all entries into a 1x1 tensor."""
    out = Tensor([[float(x.data.sum())]])

    def rule(g):
        return ((x, np.full_like(x.data, g[0, 0])),)

    _record(out, (x,), rule)
    return out


# ---------------------------------------------------------------------------
# verification and optimization
# ---------------------------------------------------------------------------

def gradient_check(f, x: Tensor, eps: float = 1e-5) -> float:
    """Worst relative error between tape gradients and central differences.

    ``f`` maps the tensor to a 1x1 loss using the ops above. The relative
    error for each entry uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x.zero_grad()
    with Tape() as tape:
        loss = f(x)
    backward(tape, loss)
    analytic = x.grad if x.grad is not None else np.zeros_like(x.data)

    worst = 0.0
    flat = x.data.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(f(x).data[0, 0])
        flat[i] = orig - eps
        f_minus = float(f(x).data[0, 0])
        flat[i] = orig
        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = analytic.reshape(-1)[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


def adam_state(params: list[Tensor]) -> dict:
    """Fresh Adam state (step count and zeroed moment estimates)."""
    return {
        "t": 0,
        "m": [np.zeros_like(p.data) for p in params],
        "v": [np.zeros_like(p.data) for p in params],
    }


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: dict,
              lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999),
              eps: float = 1e-8) -> dict:
    """One bias-corrected Adam update, applied to params in place."""
    if len(params) != len(grads):
        raise ShapeError("params and grads differ in length")
    b1, b2 = betas
    state["t"] += 1
    t = state["t"]
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.data.shape:
            raise ShapeError(f"grad {i} has shape {g.shape}, param {p.data.shape}")
        state["m"][i] = b1 * state["m"][i] + (1.0 - b1) * g
        state["v"][i] = b2 * state["v"][i] + (1.0 - b2) * (g * g)
        m_hat = state["m"][i] / (1.0 - b1 ** t)
        v_hat = state["v"][i] / (1.0 - b2 ** t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


def assert_all_finite(arr: np.ndarray, what: str = "array") -> None:
    """Raise if arr contains NaN or Inf."""
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {what}")
