"""Sampled solution paths, critical times and time reparametrizations."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import aproj, linops
from . import regularizers as regs
from .solver import SolveOptions, SolveResult, solve

log = logging.getLogger(__name__)

BISECTION_STEPS = 40
# solves right at a critical time are degenerate and converge slowly; the
# predicates only need the residual, so bisection solves get a smaller budget
BISECTION_MAX_ITERS = 20_000
MONOTONE_SLACK = 1e-8


class BoundUnavailable(NotImplementedError):
    """No closed form for the extinction bound of this (A, J) pair."""


@dataclass(frozen=True, eq=False)
class PathTable:
    alpha: float
    beta: int
    t: np.ndarray
    u: np.ndarray            # (m, *signal shape)
    Au: np.ndarray           # (m, *data shape)
    R: np.ndarray
    J: np.ndarray
    violation: np.ndarray
    converged: np.ndarray
    operator: linops.Operator = field(repr=False)
    regularizer: regs.Regularizer = field(repr=False)
    f: np.ndarray = field(repr=False)
    options: SolveOptions = field(default_factory=SolveOptions, repr=False)

    def __len__(self):
        return self.t.size

    def monotonicity_defects(self) -> tuple[float, float]:
        """Largest decrease of R and largest increase of J between samples."""
        if self.t.size < 2:
            return 0.0, 0.0
        return (float(max(0.0, -np.diff(self.R).min())),
                float(max(0.0, np.diff(self.J).max())))


@dataclass(frozen=True)
class CriticalTimes:
    t_star: float | None
    t_starstar: float | None
    tol: float
    note: str = ""


def _check_grid(grid):
    g = np.asarray(grid, dtype=np.float64).ravel()
    if g.size == 0:
        raise ValueError("empty time grid")
    if np.any(g <= 0) or not np.all(np.isfinite(g)):
        raise ValueError("grid times must be positive and finite")
    if np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing")
    return g


def sample_path(A, J, f, alpha, beta, grid, opts: SolveOptions | None = None) -> PathTable:
    """Solve at every grid time in increasing order, warm-starting each solve."""
    g = _check_grid(grid)
    opts = opts or SolveOptions()
    f = np.asarray(f, dtype=np.float64)
    us, Aus, Rs, Js, viol, conv = [], [], [], [], [], []
    state = opts.warm_start
    for t in g:
        res = solve(A, J, f, alpha, beta, float(t), replace(opts, warm_start=state))
        state = res.state
        if not res.converged:
            log.warning("path entry t=%g not converged (violation %.3g)", t, res.violation)
        us.append(res.u)
        Aus.append(linops.apply(A, res.u))
        Rs.append(res.residual)
        Js.append(res.reg_value)
        viol.append(res.violation)
        conv.append(res.converged)
    return PathTable(alpha, beta, g, np.array(us), np.array(Aus), np.array(Rs), np.array(Js),
                     np.array(viol), np.array(conv, dtype=bool), A, J, f, opts)


def refine_path(table: PathTable, times) -> PathTable:
    """Insert extra sample times with fresh warm-started solves."""
    new = np.setdiff1d(_check_grid(np.unique(times)), table.t)
    if new.size == 0:
        return table
    t = np.concatenate([table.t, new])
    order = np.argsort(t, kind="stable")
    rows = {k: list(getattr(table, k)) for k in ("u", "Au", "R", "J", "violation", "converged")}
    for tn in new:
        # warm start from the left neighbour; across a jump of an alpha=1 path
        # that start can stall, so the right neighbour is the fallback
        pos = int(np.searchsorted(table.t, tn))
        res = None
        for nb in (pos - 1, pos):
            if not 0 <= nb < len(table):
                continue
            warm = _fresh(table, float(table.t[nb])).state
            cand = solve(table.operator, table.regularizer, table.f, table.alpha, table.beta,
                         float(tn), replace(table.options, warm_start=warm))
            if res is None or cand.violation < res.violation:
                res = cand
            if res.converged:
                break
        rows["u"].append(res.u)
        rows["Au"].append(linops.apply(table.operator, res.u))
        rows["R"].append(res.residual)
        rows["J"].append(res.reg_value)
        rows["violation"].append(res.violation)
        rows["converged"].append(res.converged)
    cols = {k: np.array(v)[order] for k, v in rows.items()}
    return replace(table, t=t[order], **cols)


def cold_start_deviation(table: PathTable, count: int = 5, seed: int = 0) -> float:
    """Max distance between path entries and cold-started re-solves at random grid points."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(table), size=min(count, len(table)), replace=False)
    opts = replace(table.options, warm_start=None)
    dev = 0.0
    for i in sorted(idx):
        res = solve(table.operator, table.regularizer, table.f, table.alpha, table.beta,
                    float(table.t[i]), opts)
        dev = max(dev, float(np.linalg.norm(res.u - table.u[i])))
    return dev


def _fresh(table, t, warm=None) -> SolveResult:
    opts = replace(table.options, warm_start=warm,
                   max_iters=min(table.options.max_iters, BISECTION_MAX_ITERS))
    return solve(table.operator, table.regularizer, table.f, table.alpha, table.beta, t, opts)


def _bisect(table, lo, hi, pred, lo_state=None):
    # pred(lo) is False, pred(hi) is True; shrink the bracket with fresh solves
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi or hi - lo <= 1e-10 * hi:
            break
        res = _fresh(table, mid, lo_state)
        if pred(res):
            hi = mid
        else:
            lo = mid
            lo_state = res.state
    return 0.5 * (lo + hi)


def detect_extinction(table: PathTable, P: aproj.AProjection, f, tol: float = 1e-6) -> float | None:
    """First time at which ``A u_t`` reaches ``A P^A(f)``, refined by bisection."""
    if len(table) == 0:
        raise ValueError("empty path table")
    f = np.asarray(f, dtype=np.float64)
    target = aproj.project_data(P, f)
    thr = tol * (1.0 + np.linalg.norm(f))
    axes = tuple(range(1, table.Au.ndim))
    dist = np.sqrt(np.sum((table.Au - target) ** 2, axis=axes))
    hit = np.nonzero(dist <= thr)[0]
    if hit.size == 0:
        return None
    i = int(hit[0])
    if i == 0:
        return float(table.t[0])

    def extinct(res):
        return np.linalg.norm(linops.apply(table.operator, res.u) - target) <= thr

    return _bisect(table, float(table.t[i - 1]), float(table.t[i]), extinct)


def detect_exact_penalization(table: PathTable, f, tol: float = 1e-6) -> float | None:
    """Last time with a data-consistent solution (``alpha = 1`` only)."""
    if table.alpha != 1:
        log.info("exact penalization needs alpha = 1; t_* = 0 otherwise")
        return None
    f = np.asarray(f, dtype=np.float64)
    thr = tol * (1.0 + np.linalg.norm(f))
    fits = table.R <= thr
    if not fits[0]:
        return None
    i = int(np.argmin(fits)) - 1 if not fits.all() else len(table) - 1
    if i == len(table) - 1:
        return float(table.t[-1])

    # predicate "residual left zero" is monotone by the ordering of R
    def left(res):
        return res.residual > thr

    return _bisect(table, float(table.t[i]), float(table.t[i + 1]), left)


def critical_times(table: PathTable, P: aproj.AProjection, tol: float = 1e-6) -> CriticalTimes:
    ts = detect_exact_penalization(table, table.f, tol)
    tss = detect_extinction(table, P, table.f, tol)
    note = "" if table.alpha == 1 else "t_* = 0 for alpha > 1"
    return CriticalTimes(ts, tss, tol, note)


def dual_norm(J: regs.Regularizer, g) -> float:
    """``sup { <g, u> : J(u) <= 1, u orthogonal to N(J) }`` for supported kinds."""
    g = np.asarray(g, dtype=np.float64)
    if J.kind == regs.L1:
        return float(np.abs(g).max())
    if J.kind == regs.LINF:
        return float(np.abs(g).sum())
    if J.kind == regs.TV1D:
        c = np.cumsum(g - g.mean())[:-1]
        return float(np.abs(c).max()) if c.size else 0.0
    if J.kind == regs.QUADRATIC:
        w, V = J._eig
        gt = V.T @ g
        return float(np.sqrt(np.sum(gt * gt / w)))
    raise BoundUnavailable(f"extinction bound unavailable for {J.kind}")


def extinction_bound(A, J, f, alpha, P: aproj.AProjection) -> float:
    """``S(f) / ||f - A P^A f||^(2 - alpha)``; closed forms need ``A = id``."""
    if not A.is_identity:
        raise BoundUnavailable("extinction bound needs the identity operator")
    f = np.asarray(f, dtype=np.float64)
    g = f - aproj.project_data(P, f)
    ng = float(np.linalg.norm(g))
    if ng <= 1e-14 * (1.0 + np.linalg.norm(f)):
        return 0.0
    return dual_norm(J, g) / ng ** (2.0 - alpha)


def _power(x, e):
    if e == 0:
        return 1.0
    if x == 0:
        return 0.0 if e > 0 else np.inf
    return x ** e


def reparam_T(R, Jval, tau, alpha, beta) -> float:
    """Time of the (alpha, beta) model matching ``tau`` of the (2, 1) model."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    return tau * _power(R, alpha - 2.0) * _power(Jval, 1.0 - beta)


def reparam_S(R, Jval, t, alpha, beta) -> float:
    """Inverse of :func:`reparam_T` for consistent ``(R, J)``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return t * _power(R, 2.0 - alpha) * _power(Jval, beta - 1.0)


def default_grid(A, J, f, alpha, P: aproj.AProjection | None = None, points: int = 100,
                 t_hint: float | None = None, cap: float | None = None) -> np.ndarray:
    """Geometric grid from ``1e-3 * t_hint`` to ``1.5 *`` the extinction bound."""
    if points < 2:
        raise ValueError("need at least two grid points")
    if P is None:
        P = aproj.build(A, regs.nullspace_basis(J))
    try:
        top = extinction_bound(A, J, f, alpha, P)
    except BoundUnavailable:
        if cap is None:
            raise
        top = cap
    if top <= 0:
        top = cap if cap else 1.0
    hint = t_hint if t_hint else top
    return np.geomspace(1e-3 * hint, 1.5 * top, points)


def write_csv(table: PathTable, path, solutions_path=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "R", "J", "violation"])
        for row in zip(table.t, table.R, table.J, table.violation):
            w.writerow([repr(float(x)) for x in row])
    if solutions_path is not None:
        flat = table.u.reshape(len(table), -1)
        np.savetxt(solutions_path, flat, delimiter=",", fmt="%.17g")


def read_csv(path) -> dict:
    """Columns of a path CSV as float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "R", "J", "violation"]:
        raise ValueError(f"{path}: expected header t,R,J,violation")
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=np.float64).reshape(-1, 4)
    return {k: data[:, i] for i, k in enumerate(rows[0])}
