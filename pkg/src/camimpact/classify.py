"""Canonical form and border-collision classification of the local map.

The continuous piecewise-linear map is first shifted so the parameter
drops out of the switching condition, then brought to observer canonical
form with ``W = T- O-`` where ``O- = [C; C A-]`` and
``T- = [[1, 0], [-tr A-, 1]]``.  In these coordinates both branch
matrices read ``[[tr A, 1], [-det A, 0]]`` and the switching row is
``[1, 0]``.

Classification applies the parity test on real eigenvalues above one:
an odd total across the two branches means a stable and an unstable
fixed point meet at the border and vanish (nonsmooth fold), an even total
means a single fixed point persists through the border.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corner_map import H, LocalPWLMap

FOLD = "nonsmooth-fold"
PERSISTENCE = "persistence"
UNDETERMINED = "undetermined-by-eigenvalue-test"
MARGINAL_TOL = 1e-8


class UnobservableBoundaryError(ValueError):
    """The switching row cannot be used as a canonical coordinate."""


@dataclass(frozen=True)
class CanonicalizedMap:
    """Observer canonical form of a continuous piecewise-linear map.

    Attributes
    ----------
    B_tilde : ndarray
        Parameter column after the shift ``dx1 -> dx1 + shift * dT``,
        computed branch-wise as ``B - A[:, 0] * D / c1``.
    B_tilde_minus, B_tilde_plus : ndarray
        The two branch-wise values (equal for a continuous map).
    B_bar : ndarray
        ``W @ B_tilde``.
    shift : float
        ``D / c1``.

    Notes
    -----
    ``B - A[:, 0] * D / c1`` is the part of the shifted parameter column
    that comes from substituting the shift into the right-hand side.  A
    map conjugate to the original one also moves the left-hand side,
    which adds ``shift`` to the first entry; that column is available as
    :attr:`B_tilde_conjugate`.
    """

    A_bar_minus: np.ndarray
    A_bar_plus: np.ndarray
    B_tilde: np.ndarray
    B_tilde_minus: np.ndarray
    B_tilde_plus: np.ndarray
    B_bar: np.ndarray
    C_bar: np.ndarray
    W: np.ndarray
    shift: float

    @property
    def B_tilde_conjugate(self) -> np.ndarray:
        return self.B_tilde + np.array([self.shift, 0.0])

    @property
    def B_bar_conjugate(self) -> np.ndarray:
        return self.W @ self.B_tilde_conjugate


def canonicalize(m: LocalPWLMap, rel_tol: float = 1e-9) -> CanonicalizedMap:
    """Shift out the parameter from the switching row and apply ``W = T- O-``.

    Raises
    ------
    UnobservableBoundaryError
        If ``c1 = 0`` or ``[C; C A-]`` is singular.
    """
    C = m.C
    scale = max(np.max(np.abs(C)), 1e-300)
    c1 = C[0]
    if abs(c1) <= 1e-14 * scale or c1 == 0.0:
        raise UnobservableBoundaryError("first entry of C vanishes; the parameter shift is undefined")
    O = np.vstack([C, C @ m.A_minus])
    if abs(np.linalg.det(O)) <= 1e-14 * np.linalg.norm(O) ** 2:
        raise UnobservableBoundaryError("[C; C A-] is singular; the boundary is not observable")
    d1 = -np.trace(m.A_minus)
    Tm = np.array([[1.0, 0.0], [d1, 1.0]])
    W = Tm @ O
    Winv = np.linalg.inv(W)
    A_bar_m = W @ m.A_minus @ Winv
    A_bar_p = W @ m.A_plus @ Winv
    shift = m.D / c1
    Bt_m = m.B_minus - m.A_minus[:, 0] * shift
    Bt_p = m.B_plus - m.A_plus[:, 0] * shift
    bscale = max(np.max(np.abs(Bt_m)), 1e-300)
    if np.max(np.abs(Bt_m - Bt_p)) > rel_tol * bscale:
        raise ValueError("branch-wise shifted parameter columns disagree; the map is not continuous")
    Bt = 0.5 * (Bt_m + Bt_p)
    return CanonicalizedMap(A_bar_m, A_bar_p, Bt, Bt_m, Bt_p, W @ Bt, C @ Winv, W, float(shift))


@dataclass(frozen=True)
class ClassificationResult:
    eigenvalues_minus: np.ndarray
    eigenvalues_plus: np.ndarray
    above_one_minus: int
    above_one_plus: int
    below_minus_one_minus: int
    below_minus_one_plus: int
    verdict: str

    def report(self) -> str:
        def fmt(ev):
            return ", ".join(f"{complex(e).real!r}{complex(e).imag:+.17g}j" for e in ev)
        return "\n".join([
            f"eigenvalues A-: {fmt(self.eigenvalues_minus)}",
            f"eigenvalues A+: {fmt(self.eigenvalues_plus)}",
            f"real eigenvalues > 1: minus={self.above_one_minus} plus={self.above_one_plus}",
            f"real eigenvalues < -1: minus={self.below_minus_one_minus} plus={self.below_minus_one_plus}",
            f"verdict: {self.verdict}",
        ])

    def to_dict(self) -> dict:
        def pairs(ev):
            return [[float(np.real(e)), float(np.imag(e))] for e in ev]
        return {"eigenvalues_minus": pairs(self.eigenvalues_minus),
                "eigenvalues_plus": pairs(self.eigenvalues_plus),
                "above_one_minus": self.above_one_minus, "above_one_plus": self.above_one_plus,
                "below_minus_one_minus": self.below_minus_one_minus,
                "below_minus_one_plus": self.below_minus_one_plus,
                "verdict": self.verdict}


def _real_eigs(ev) -> np.ndarray:
    ev = np.asarray(ev)
    real = np.abs(ev.imag) <= 1e-12 * np.maximum(1.0, np.abs(ev))
    return ev.real[real]


def classify(m: LocalPWLMap) -> ClassificationResult:
    """Eigenvalue inventory and parity verdict for the border collision."""
    ev_m = np.linalg.eigvals(m.A_minus)
    ev_p = np.linalg.eigvals(m.A_plus)
    rm, rp = _real_eigs(ev_m), _real_eigs(ev_p)
    marginal = np.any(np.abs(np.concatenate([rm, rp]) - 1.0) < MARGINAL_TOL)
    up_m, up_p = int(np.sum(rm > 1.0)), int(np.sum(rp > 1.0))
    lo_m, lo_p = int(np.sum(rm < -1.0)), int(np.sum(rp < -1.0))
    if marginal:
        verdict = UNDETERMINED
    else:
        verdict = FOLD if (up_m + up_p) % 2 == 1 else PERSISTENCE
    return ClassificationResult(ev_m, ev_p, up_m, up_p, lo_m, lo_p, verdict)


@dataclass(frozen=True)
class BranchFixedPoint:
    delta_T: float
    branch: str
    x: np.ndarray
    admissible: bool
    stable: bool


@dataclass
class LocalDiagram:
    delta_T: np.ndarray
    fixed_points: list
    orbits: list = field(default_factory=list)

    def admissible(self, delta_T: float) -> list:
        return [f for f in self.fixed_points if f.delta_T == delta_T and f.admissible]

    def rows(self) -> list:
        """``(delta_T, branch, value, stability)`` rows for export."""
        out = []
        for f in self.fixed_points:
            if f.admissible:
                out.append((f.delta_T, f.branch, float(f.x[0]),
                            "stable" if f.stable else "unstable"))
        for dT, pts, escaped in self.orbits:
            if escaped:
                out.append((dT, "orbit", float("nan"), "escape"))
            else:
                for v in pts:
                    out.append((dT, "orbit", float(v), "bounded"))
        return out


def branch_fixed_points(m: LocalPWLMap, delta_T: float) -> list:
    """Fixed points of both affine branches with admissibility and stability."""
    out = []
    for branch in ("minus", "plus"):
        A, B = m.matrices(branch)
        M = np.eye(2) - A
        if abs(np.linalg.det(M)) < 1e-14:
            continue
        x = np.linalg.solve(M, B * delta_T)
        s = m.orientation * m.switching(x, delta_T)
        tol = 1e-12 * (np.linalg.norm(m.C) * np.linalg.norm(x) + abs(m.D * delta_T))
        if abs(s) <= tol:
            admissible = True
        else:
            admissible = (s < 0.0) == (branch == "minus")
        stable = bool(np.max(np.abs(np.linalg.eigvals(A))) < 1.0)
        out.append(BranchFixedPoint(delta_T, branch, x, bool(admissible), stable))
    return out


def iterate_local_map(m: LocalPWLMap, delta_T_range: tuple, n_points: int = 41,
                      iterations: int = 4000, transient: int = 3900, n_seeds: int = 2,
                      seed: int = 0) -> LocalDiagram:
    """Bifurcation diagram of the local map over ``delta_T``.

    For each ``delta_T`` the branch fixed points are computed and checked
    for admissibility, and the map is iterated from small random seeds.
    An orbit that leaves the radius ``1e4 * |B_tilde| * |delta_T|`` is
    recorded as an escape.
    """
    lo, hi = delta_T_range
    grid = np.linspace(lo, hi, n_points)
    rng = np.random.default_rng(seed)
    try:
        bnorm = float(np.linalg.norm(canonicalize(m).B_tilde))
    except ValueError:
        bnorm = float(max(np.linalg.norm(m.B_minus), np.linalg.norm(m.B_plus)))
    fps, orbits = [], []
    for dT in grid:
        dT = float(dT)
        fps.extend(branch_fixed_points(m, dT))
        if dT == 0.0:
            orbits.append((dT, np.zeros(1), False))
            continue
        radius = 1e4 * bnorm * abs(dT)
        for _ in range(n_seeds):
            x = rng.standard_normal(2) * bnorm * abs(dT)
            pts, escaped = [], False
            for k in range(iterations):
                x = m.apply(x, dT)
                if not np.all(np.isfinite(x)) or np.linalg.norm(x) > radius:
                    escaped = True
                    break
                if k >= transient:
                    pts.append(x[0])
            orbits.append((dT, np.array(pts), escaped))
    return LocalDiagram(grid, fps, orbits)


def write_local_diagram_csv(diagram: LocalDiagram, path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta_T", "branch", "value", "stability"])
        for dT, branch, value, stab in diagram.rows():
            w.writerow([repr(float(dT)), branch, repr(float(value)), stab])
    return p
