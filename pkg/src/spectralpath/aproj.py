"""A-orthogonal projection onto the null-space of the regularizer.

``project(P, f)`` returns ``argmin_{u in N(J)} ||A u - f||`` by solving the
normal equations in the (tiny) null-space basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import linops


class AssumptionError(ValueError):
    """``||A . ||`` is not a norm on the supplied null-space."""


@dataclass(frozen=True, eq=False)
class AProjection:
    operator: linops.Operator
    basis: tuple
    gram: np.ndarray = field(repr=False)
    images: tuple = field(repr=False)   # A b_i
    _factor: tuple | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.basis)


def build(op: linops.Operator, basis) -> AProjection:
    basis = tuple(np.asarray(b, dtype=np.float64) for b in basis)
    images = tuple(linops.apply(op, b) for b in basis)
    k = len(basis)
    gram = np.array([[np.vdot(a, b) for b in images] for a in images]).reshape(k, k)
    factor = None
    if k:
        try:
            factor = cho_factor(gram)
        except np.linalg.LinAlgError as exc:
            raise AssumptionError(
                "A is not injective on the null-space of J (singular Gram matrix)") from exc
        # cho_factor accepts numerically singular matrices with tiny pivots
        if np.min(np.abs(np.diag(factor[0]))) ** 2 <= 1e-13 * np.abs(gram).max():
            raise AssumptionError(
                "A is not injective on the null-space of J (singular Gram matrix)")
    return AProjection(op, basis, gram, images, factor)


def coefficients(P: AProjection, f) -> np.ndarray:
    if not P.dim:
        return np.zeros(0)
    rhs = np.array([np.vdot(a, f) for a in P.images])
    return cho_solve(P._factor, rhs)


def project(P: AProjection, f) -> np.ndarray:
    """Signal-space minimizer of ``||A u - f||`` over ``span(basis)``."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape != P.operator.output_shape:
        raise linops.ShapeError(
            f"data has shape {f.shape}, operator outputs {P.operator.output_shape}")
    out = np.zeros(P.operator.input_shape)
    for c, b in zip(coefficients(P, f), P.basis):
        out += c * b
    return out


def project_data(P: AProjection, f) -> np.ndarray:
    """``A P^A(f)``, the data-space tail."""
    f = np.asarray(f, dtype=np.float64)
    out = np.zeros(P.operator.output_shape)
    for c, a in zip(coefficients(P, f), P.images):
        out += c * a
    return out
