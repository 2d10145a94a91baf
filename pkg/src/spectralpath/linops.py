"""Finite-dimensional forward operators with exact adjoints.

Signals are plain float64 numpy arrays. An :class:`Operator` is an
immutable description of the map; :func:`apply` and :func:`apply_adjoint`
evaluate it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

IDENTITY = "identity"
DENSE = "dense"
CONV1D = "conv1d"


class ShapeError(ValueError):
    """Raised when a signal does not match the operator's domain."""


@dataclass(frozen=True, eq=False)
class Operator:
    kind: str
    input_shape: tuple
    output_shape: tuple
    matrix: np.ndarray | None = field(default=None, repr=False)
    kernel: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_identity(self) -> bool:
        return self.kind == IDENTITY


def identity(shape) -> Operator:
    shape = (int(shape),) if np.isscalar(shape) else tuple(int(s) for s in shape)
    return Operator(IDENTITY, shape, shape)


def dense(matrix) -> Operator:
    m = np.array(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError("dense operator needs a 2-d matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    m.setflags(write=False)
    return Operator(DENSE, (m.shape[1],), (m.shape[0],), matrix=m)


def conv1d(kernel, n: int) -> Operator:
    """Zero-padded full convolution ``R^n -> R^(n+k-1)``."""
    a = np.array(kernel, dtype=np.float64).ravel()
    if a.size == 0:
        raise ShapeError("empty kernel")
    if not np.all(np.isfinite(a)):
        raise ValueError("kernel taps must be finite")
    a.setflags(write=False)
    return Operator(CONV1D, (int(n),), (int(n) + a.size - 1,), kernel=a)


def _check(x, shape, what):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != shape:
        raise ShapeError(f"{what} has shape {x.shape}, expected {shape}")
    return x


def apply(op: Operator, u) -> np.ndarray:
    u = _check(u, op.input_shape, "input")
    if op.kind == IDENTITY:
        return u.copy()
    if op.kind == DENSE:
        return op.matrix @ u
    if op.kind == CONV1D:
        return np.convolve(u, op.kernel, mode="full")
    raise ValueError(f"unknown operator kind {op.kind!r}")


def apply_adjoint(op: Operator, w) -> np.ndarray:
    w = _check(w, op.output_shape, "adjoint input")
    if op.kind == IDENTITY:
        return w.copy()
    if op.kind == DENSE:
        return op.matrix.T @ w
    if op.kind == CONV1D:
        return np.correlate(w, op.kernel, mode="valid")
    raise ValueError(f"unknown operator kind {op.kind!r}")


def normal(op: Operator, u) -> np.ndarray:
    """``A^T A u``."""
    return apply_adjoint(op, apply(op, u))


def materialize(op: Operator) -> np.ndarray:
    """Dense matrix of a 1-d operator (columns are images of unit vectors)."""
    if len(op.input_shape) != 1:
        raise ShapeError("only 1-d operators can be materialized")
    n = op.input_shape[0]
    cols = [apply(op, e) for e in np.eye(n)]
    return np.stack(cols, axis=1)


def operator_norm(op: Operator, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Spectral norm by power iteration on ``A^T A``.

    The start vector is deterministic, so repeated calls agree bitwise.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if op.kind == IDENTITY:
        return 1.0
    size = int(np.prod(op.input_shape))
    x = np.ones(size) + 1e-3 * np.arange(1, size + 1) / size
    x = x.reshape(op.input_shape)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        y = normal(op, x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        new = float(np.sqrt(np.vdot(x, y)))
        x = y / ny
        # Rayleigh quotient converges quadratically; the margin keeps the
        # reported value inside ``tol`` rather than just its last increment.
        if abs(new - est) <= 1e-2 * tol * max(new, 1e-300):
            return float(np.sqrt(np.vdot(x, normal(op, x))))
        est = new
    return float(np.sqrt(np.vdot(x, normal(op, x))))
