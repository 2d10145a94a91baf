"""Spectral measures of sampled paths, reconstruction and filtering.

A measure is stored per bin as a mass (a signal), so integrating a filter
is a weighted sum. ``phi`` is the negative first difference of an alpha=1
path; ``psi`` is ``tau`` times the second difference of an alpha=2 path on a
uniform grid. Bins whose mass stands out from the local median are atoms;
adjacent flagged bins merge into one atom.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import aproj, linops
from . import regularizers as regs
from .path import PathTable
from .solver import _least_squares

PHI = "phi"
PSI = "psi"

ATOM_FACTOR = 10.0
ATOM_FLOOR = 1e-4     # relative to the largest bin mass
ATOM_WINDOW = 5
CONFIRM_RTOL = 1e-3   # allowed drop of atom dominance under refinement


class Atom(NamedTuple):
    time: float
    mass: np.ndarray
    bins: tuple


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    kind: str
    times: np.ndarray          # representative time per bin
    masses: np.ndarray         # (bins, *shape)
    is_atom: np.ndarray
    atoms: tuple
    tail: np.ndarray
    space: str = "data"

    def __len__(self):
        return self.times.size

    @property
    def mass_l1(self) -> np.ndarray:
        return np.abs(self.masses).reshape(len(self), -1).sum(axis=1)


@dataclass(frozen=True)
class FilterSpec:
    kind: str = "identity"          # identity | lowpass | highpass | bandpass | custom
    cutoff: float | None = None
    lo: float | None = None
    hi: float | None = None
    table: tuple | None = None      # per-bin weights for custom
    F_infinity: float | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "lowpass", "highpass", "bandpass", "custom"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.kind in ("lowpass", "highpass") and self.cutoff is None:
            raise ValueError(f"{self.kind} needs a cutoff")
        if self.kind == "bandpass":
            if self.lo is None or self.hi is None or not self.lo <= self.hi:
                raise ValueError("bandpass needs ordered limits lo <= hi")
        if self.kind == "custom":
            if self.table is None or not np.all(np.isfinite(self.table)):
                raise ValueError("custom filter needs a finite weight table")
        if self.F_infinity is not None and not np.isfinite(self.F_infinity):
            raise ValueError("F_infinity must be finite")

    @property
    def tail_weight(self) -> float:
        if self.F_infinity is not None:
            return float(self.F_infinity)
        return 1.0 if self.kind in ("identity", "highpass") else 0.0

    def weights(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=np.float64)
        if self.kind == "identity":
            return np.ones_like(t)
        if self.kind == "lowpass":
            return (t <= self.cutoff).astype(float)
        if self.kind == "highpass":
            return (t > self.cutoff).astype(float)
        if self.kind == "bandpass":
            return ((t >= self.lo) & (t <= self.hi)).astype(float)
        w = np.asarray(self.table, dtype=np.float64)
        if w.shape != t.shape:
            raise ValueError(f"custom table has {w.size} entries, measure has {t.size} bins")
        return w


def lowpass(cutoff, F_infinity=None):
    return FilterSpec("lowpass", cutoff=cutoff, F_infinity=F_infinity)


def highpass(cutoff, F_infinity=None):
    return FilterSpec("highpass", cutoff=cutoff, F_infinity=F_infinity)


def bandpass(lo, hi, F_infinity=None):
    return FilterSpec("bandpass", lo=lo, hi=hi, F_infinity=F_infinity)


# -- construction -------------------------------------------------------------------

def _samples(table: PathTable, space: str, origin: bool):
    if space not in ("data", "signal"):
        raise ValueError("space must be 'data' or 'signal'")
    vals = table.Au if space == "data" else table.u
    t = table.t
    if origin:
        u0 = _least_squares(table.operator, table.f)
        v0 = linops.apply(table.operator, u0) if space == "data" else u0
        vals = np.concatenate([v0[None], vals])
        t = np.concatenate([[0.0], t])
    return t, vals


def _tail(table: PathTable, space: str):
    P = aproj.build(table.operator, regs.nullspace_basis(table.regularizer))
    return aproj.project_data(P, table.f) if space == "data" else aproj.project(P, table.f)


def detect_atoms(times, masses, factor=ATOM_FACTOR, floor=ATOM_FLOOR, window=ATOM_WINDOW):
    """Flag bins exceeding ``factor`` times the centred-window median; merge neighbours."""
    l1 = np.abs(masses).reshape(len(times), -1).sum(axis=1)
    nb = l1.size
    if nb == 0:
        return np.zeros(0, dtype=bool), ()
    h = window // 2
    padded = np.pad(l1, h, mode="edge")
    med = np.array([np.median(padded[i:i + window]) for i in range(nb)])
    thr = np.maximum(factor * med, floor * l1.max())
    flag = (l1 > thr) & (l1 > 0)
    atoms = []
    i = 0
    while i < nb:
        if not flag[i]:
            i += 1
            continue
        j = i
        while j + 1 < nb and flag[j + 1]:
            j += 1
        idx = tuple(range(i, j + 1))
        w = l1[i:j + 1]
        t = float(np.sum(w * times[i:j + 1]) / np.sum(w))
        atoms.append(Atom(t, masses[i:j + 1].sum(axis=0), idx))
        i = j + 1
    return flag, tuple(atoms)


def phi_measure(table: PathTable, space: str = "data", origin: bool = True,
                **atom_opts) -> SpectralMeasure:
    """Bins ``(t_i, t_{i+1}]`` carry ``-(v_{i+1} - v_i)``; ``origin`` adds the bin from 0."""
    if table.alpha != 1:
        raise ValueError("phi measure is defined for alpha = 1 paths")
    if len(table) < 3:
        raise ValueError("need at least 3 grid points")
    t, v = _samples(table, space, origin)
    masses = -(v[1:] - v[:-1])
    times = 0.5 * (t[1:] + t[:-1])
    flag, atoms = detect_atoms(times, masses, **atom_opts)
    return SpectralMeasure(PHI, times, masses, flag, atoms, _tail(table, space), space)


def psi_measure(table: PathTable, space: str = "data", **atom_opts) -> SpectralMeasure:
    """``tau_i (v_{i+1} - 2 v_i + v_{i-1}) / dtau`` on a uniform grid.

    When the grid is ``tau_i = i * dtau`` the origin ``v_0 = f`` joins the
    grid and the first sample gets a centred difference. End bins are zero.
    """
    if table.alpha != 2 or table.beta != 1:
        raise ValueError("psi measure is defined for (2, 1) paths")
    if len(table) < 3:
        raise ValueError("need at least 3 grid points")
    steps = np.diff(table.t)
    dtau = float(steps.mean())
    if np.abs(steps - dtau).max() > 1e-9 * table.t[-1]:
        raise ValueError("psi measure needs a uniform grid")
    origin = abs(table.t[0] - dtau) <= 1e-9 * table.t[-1]
    t, v = _samples(table, space, origin)
    masses = np.zeros_like(v)
    masses[1:-1] = t[1:-1].reshape((-1,) + (1,) * (v.ndim - 1)) * (v[2:] - 2 * v[1:-1] + v[:-2]) / dtau
    flag, atoms = detect_atoms(t, masses, **atom_opts)
    return SpectralMeasure(PSI, t, masses, flag, atoms, _tail(table, space), space)


# -- use ---------------------------------------------------------------------------

def reconstruct(m: SpectralMeasure) -> np.ndarray:
    return m.masses.sum(axis=0) + m.tail


def bin_weights(m: SpectralMeasure, F: FilterSpec) -> np.ndarray:
    if F.kind == "custom":
        return F.weights(m.times)
    w = F.weights(m.times)
    # atoms are filtered as a whole, at their merged time
    for a in m.atoms:
        w[list(a.bins)] = F.weights(np.array([a.time]))[0]
    return w


def apply_filter(m: SpectralMeasure, F: FilterSpec) -> np.ndarray:
    w = bin_weights(m, F)
    shape = (-1,) + (1,) * (m.masses.ndim - 1)
    return np.sum(w.reshape(shape) * m.masses, axis=0) + F.tail_weight * m.tail


class SpectrumPoint(NamedTuple):
    time: float
    magnitude: float


def spectrum(m: SpectralMeasure) -> tuple[list, list]:
    """Per-bin l1 magnitudes, and atoms with their l1 mass."""
    dens = [SpectrumPoint(float(t), float(v)) for t, v in zip(m.times, m.mass_l1)]
    atoms = [SpectrumPoint(a.time, float(np.abs(a.mass).sum())) for a in m.atoms]
    return dens, atoms


def confirm_atoms(coarse: SpectralMeasure, fine: SpectralMeasure) -> list:
    """For each coarse atom: a fine atom within one coarse bin whose dominance did not drop."""
    out = []
    if len(coarse) < 2:
        return [False] * len(coarse.atoms)
    width = float(np.max(np.diff(coarse.times)))

    def dominance(m, a):
        # background floored like the detection threshold, so solver noise
        # on flat stretches does not decide the comparison
        l1 = m.mass_l1
        rest = np.delete(l1, list(a.bins))
        bg = np.median(rest) if rest.size else 0.0
        bg = max(bg, ATOM_FLOOR * l1.max(), 1e-300)
        return np.abs(a.mass).sum() / bg

    for a in coarse.atoms:
        near = [b for b in fine.atoms if abs(b.time - a.time) <= width]
        if not near:
            out.append(False)
            continue
        b = min(near, key=lambda b: abs(b.time - a.time))
        out.append(bool(dominance(fine, b) >= dominance(coarse, a) * (1 - CONFIRM_RTOL)))
    return out


def write_csv(m: SpectralMeasure, path, masses_path=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mass_l1", "is_atom"])
        for t, v, a in zip(m.times, m.mass_l1, m.is_atom):
            w.writerow([repr(float(t)), repr(float(v)), int(a)])
    if masses_path is not None:
        np.savetxt(masses_path, m.masses.reshape(len(m), -1), delimiter=",", fmt="%.17g")
