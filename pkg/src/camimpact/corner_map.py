"""Local Poincare map of the corner-impact orbit.

The stroboscopic map samples the state half a period before the corner
(``t = -T/2``) and composes three pieces: free flight to ``t = 0``, a
zero-time discontinuity map (ZDM) that accounts for the impact happening
at the small time ``tau`` away from the corner, and free flight to
``t = T/2``::

    P(x, T) = phi_{T/2} P_D(phi_{T/2} x, T)
    P_D(x) = phi_{-tau} [(I + R) phi_tau x - R y_tau]

Everything here works in shifted coordinates ``[q + g/omega0**2, q']``;
the cam vector ``y_t`` is shifted the same way.  The map is piecewise
smooth: impacts before the corner see the acceleration ``c''-`` and
impacts after it see ``c''+``.  Linearising both branches at the fixed
point gives the piecewise-linear normal form

    dx' = A- dx + B- dT   or   A+ dx + B+ dT

switched by the sign of ``C dx + D dT``.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .cam import TWO_PI, CamDrive, piece_derivatives
from .follower import (FollowerState, PhysicalParams, flow_operator,
                       flow_operator_time_derivative)
from .scenario import Scenario
from .simulator import SimConfig, period_map

log = logging.getLogger(__name__)

H = np.array([1.0, 0.0])
SIDES = ("minus", "plus")
CONDITION_WARN = 1e8


class CornerMapError(RuntimeError):
    """Failure in the local-map construction (bad seed, singular system)."""


class NoImpactError(CornerMapError):
    """The gap does not close inside the search window around the corner."""


class GrazingError(CornerMapError):
    """Zero relative impact velocity at the corner: the map is singular."""


@dataclass(frozen=True)
class CornerContext:
    """Corner-impact periodic orbit and the cam data at its corner.

    Attributes
    ----------
    T_star : float
        Forcing period at which the period-1 orbit impacts exactly at the
        corner.
    x_star : ndarray
        Shifted stroboscopic fixed point at ``t = -T_star/2``.
    corner_phase : float
        Cam phase of the corner (placed at ``t = 0``).
    pieces : tuple of int
        Cam pieces before and after the corner.
    """

    params: PhysicalParams
    geometry: object
    corner_phase: float
    pieces: tuple
    T_star: float
    x_star: np.ndarray
    fixed_point_residual: float = float("nan")
    corner_residual: float = float("nan")

    @property
    def omega_star(self) -> float:
        return TWO_PI / self.T_star

    @property
    def R(self) -> np.ndarray:
        return self.params.restitution_matrix

    def cam(self, T: float | None = None) -> CamDrive:
        T = self.T_star if T is None else T
        return CamDrive(self.geometry, TWO_PI / T, self.corner_phase)

    def cam_data(self, T: float | None = None) -> dict:
        """Lift (unshifted), velocity and one-sided accelerations at the corner."""
        T = self.T_star if T is None else T
        w = TWO_PI / T
        cm = [float(v) for v in piece_derivatives(self.geometry, self.pieces[0], self.corner_phase)]
        cp = [float(v) for v in piece_derivatives(self.geometry, self.pieces[1], self.corner_phase)]
        return {"c0": cm[0], "c0_t": w * cm[1],
                "c0_tt_minus": w * w * cm[2], "c0_tt_plus": w * w * cp[2]}

    def y0(self, T: float | None = None) -> np.ndarray:
        d = self.cam_data(T)
        return np.array([d["c0"] + self.params.offset, d["c0_t"]])

    def pre_impact_state(self) -> np.ndarray:
        """Shifted state ``(q_d, q_d')`` just before the corner impact."""
        return flow_operator(self.params, 0.5 * self.T_star) @ self.x_star

    def smoothed(self) -> "CornerContext":
        """Copy with the corner removed (plus side uses the minus piece)."""
        return CornerContext(self.params, self.geometry, self.corner_phase,
                             (self.pieces[0], self.pieces[0]), self.T_star, self.x_star,
                             self.fixed_point_residual, self.corner_residual)


def corner_pieces(cam: CamDrive, corner_phase: float) -> tuple:
    """Pieces on either side of ``corner_phase`` (time ``t = 0``)."""
    c = CamDrive(cam.geometry, 1.0, corner_phase, cam.schedule)
    return c.piece_at(0.0, "left"), c.piece_at(0.0, "right")


def cam_vector(context: CornerContext, tau, T: float, piece: int) -> tuple:
    """Shifted cam vector ``[c + g/omega0**2, c']`` and its derivative ``[c', c'']``."""
    w = TWO_PI / T
    c, d1, d2 = piece_derivatives(context.geometry, piece, w * tau + context.corner_phase)
    off = context.params.offset
    return (np.array([float(c) + off, w * float(d1)]),
            np.array([w * float(d1), w * w * float(d2)]))


def _piece_for(context: CornerContext, tau: float, side: str | None) -> int:
    if side is not None:
        return context.pieces[SIDES.index(side)]
    return context.pieces[0] if tau < 0.0 else context.pieces[1]


def impact_time(x_d, context: CornerContext, T: float | None = None,
                side: str | None = None, window: float | None = None) -> float:
    """Impact time ``tau`` relative to the corner for flight through ``x_d``.

    ``x_d`` is the shifted state the free flight would have at ``t = 0``.
    The root of ``[phi_tau x_d]_1 = c(tau) + g/omega0**2`` is searched on
    the side of the corner indicated by the sign of the gap at ``tau = 0``,
    seeded at 0 and polished by safeguarded Newton.  ``side`` forces one
    cam piece on both sides of the corner.
    """
    T = context.T_star if T is None else T
    window = 0.25 * T if window is None else window
    x_d = np.asarray(x_d, dtype=float)
    p = context.params

    def gap(tau, piece):
        xt = flow_operator(p, tau) @ x_d
        y, dy = cam_vector(context, tau, T, piece)
        return float(xt[0] - y[0]), float(xt[1] - y[1])

    g0, v0 = gap(0.0, _piece_for(context, 0.0, side))
    if g0 == 0.0:
        return 0.0
    direction = 1.0 if g0 > 0.0 else -1.0
    piece = _piece_for(context, direction, side)
    # grow a bracket away from zero in the direction of the root
    step = abs(g0 / v0) if v0 != 0.0 else window / 64.0
    step = min(max(step, 1e-300), window / 4.0)
    a = 0.0
    ga = g0
    while True:
        b = direction * min(abs(a) + 2.0 * step, window)
        gb, _ = gap(b, piece)
        if np.sign(gb) != np.sign(ga) or gb == 0.0:
            break
        if abs(b) >= window:
            raise NoImpactError(f"no impact root within |tau| <= {window!r} of the corner")
        a, ga, step = b, gb, 2.0 * step
    lo, hi = (a, b) if direction > 0 else (b, a)
    f_lo = gap(lo, piece)[0]
    tau = 0.0 if lo <= 0.0 <= hi else 0.5 * (lo + hi)
    for _ in range(100):
        f, df = gap(tau, piece)
        if f == 0.0:
            return tau
        if np.sign(f) == np.sign(f_lo):
            lo, f_lo = tau, f
        else:
            hi = tau
        new = tau - f / df if df != 0.0 else 0.5 * (lo + hi)
        if not lo < new < hi:
            new = 0.5 * (lo + hi)
        if abs(new - tau) <= 1e-15 * max(T, abs(tau)) or new == tau:
            return new
        tau = new
    raise CornerMapError(f"impact-time Newton did not converge, bracket ({lo!r}, {hi!r})")


def zdm(x_d, context: CornerContext, T: float | None = None,
        side: str | None = None, return_time: bool = False):
    """Zero-time discontinuity map at the corner.

    Flows ``x_d`` to the impact at ``tau``, applies the restitution law
    and flows back by ``-tau``.  Raises :class:`NoImpactError` if the gap
    does not close near the corner.
    """
    T = context.T_star if T is None else T
    x_d = np.asarray(x_d, dtype=float)
    tau = impact_time(x_d, context, T, side)
    y, _ = cam_vector(context, tau, T, _piece_for(context, tau, side))
    p = context.params
    R = context.R
    z = flow_operator(p, tau) @ x_d
    out = flow_operator(p, -tau) @ (z + R @ z - R @ y)
    return (out, tau) if return_time else out


def full_map(x, T: float, context: CornerContext, side: str | None = None,
             return_time: bool = False):
    """Stroboscopic map ``phi_{T/2} o P_D o phi_{T/2}`` near the corner orbit.

    If the gap never closes near the corner the flight continues
    unimpeded and the result is ``phi_T x``.
    """
    p = context.params
    half = flow_operator(p, 0.5 * T)
    x_d = half @ np.asarray(x, dtype=float)
    try:
        xd_plus, tau = zdm(x_d, context, T, side, return_time=True)
    except NoImpactError:
        out, tau = flow_operator(p, T) @ np.asarray(x, dtype=float), None
    else:
        out = half @ xd_plus
    return (out, tau) if return_time else out


def fixed_point_for_period(context_like, T: float) -> np.ndarray:
    """Shifted fixed point of the map whose impact sits exactly at the corner.

    Solves ``x = phi_{T/2} [(I + R) phi_{T/2} x - R y0]``.
    """
    p = context_like.params
    R = p.restitution_matrix
    half = flow_operator(p, 0.5 * T)
    M = np.eye(2) - flow_operator(p, T) - half @ R @ half
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        raise CornerMapError(f"fixed-point system is singular (condition {cond:.3g})")
    return -np.linalg.solve(M, half @ R @ context_like.y0(T))


def corner_condition(context_like, T: float) -> float:
    """Gap between the orbit's pre-impact position and the corner lift."""
    x = fixed_point_for_period(context_like, T)
    xd = flow_operator(context_like.params, 0.5 * T) @ x
    return float(xd[0] - context_like.y0(T)[0])


def solve_fixed_point(scenario: Scenario, omega_seed: float, window: float = 0.02,
                      corner_phase: float | None = None, n_samples: int = 41) -> CornerContext:
    """Period and fixed point of the orbit impacting exactly at the corner.

    Parameters
    ----------
    omega_seed : float
        Seed cam speed (rad/s), usually from a corner-crossing scan.
    window : float
        Relative half-width of the speed window searched around the seed.
    corner_phase : float, optional
        Cam phase of the corner; defaults to the scenario phase offset.

    Raises
    ------
    CornerMapError
        If no root of the corner condition lies inside the window or the
        orbit does not hit the corner from above.
    """
    phase = scenario.phase_offset if corner_phase is None else corner_phase
    cam = CamDrive(scenario.geometry, omega_seed, phase)
    pieces = corner_pieces(cam, phase)
    if pieces[0] == pieces[1]:
        raise CornerMapError(f"phase {phase!r} is not a cam corner")
    probe = CornerContext(scenario.params, scenario.geometry, phase, pieces,
                          TWO_PI / omega_seed, np.zeros(2))

    def H(omega):
        return corner_condition(probe, TWO_PI / omega)

    omegas = omega_seed * np.linspace(1.0 - window, 1.0 + window, n_samples)
    vals = []
    for w in omegas:
        try:
            vals.append(H(w))
        except CornerMapError:
            vals.append(np.nan)
    vals = np.array(vals)
    brackets = [i for i in range(n_samples - 1)
                if np.isfinite(vals[i]) and np.isfinite(vals[i + 1])
                and np.sign(vals[i]) != np.sign(vals[i + 1])]
    if not brackets:
        raise CornerMapError(
            f"no corner-impact orbit for omega in [{omegas[0]!r}, {omegas[-1]!r}] rad/s")
    i = min(brackets, key=lambda k: abs(0.5 * (omegas[k] + omegas[k + 1]) - omega_seed))
    w_star = brentq(H, omegas[i], omegas[i + 1], xtol=1e-15 * omega_seed,
                    rtol=4 * np.finfo(float).eps, maxiter=200)
    T_star = TWO_PI / w_star
    ctx = CornerContext(scenario.params, scenario.geometry, phase, pieces, T_star,
                        np.zeros(2))
    x_star = fixed_point_for_period(ctx, T_star)
    ctx = CornerContext(scenario.params, scenario.geometry, phase, pieces, T_star, x_star)
    res = fixed_point_residual(ctx)
    y0 = ctx.y0()
    corner_res = abs(corner_condition(ctx, T_star)) / max(abs(y0[0]), 1.0)
    xd = ctx.pre_impact_state()
    if not xd[1] - y0[1] < 0.0:
        raise CornerMapError("corner orbit does not approach the cam (non-negative impact velocity)")
    return CornerContext(scenario.params, scenario.geometry, phase, pieces, T_star, x_star,
                         res, corner_res)


def fixed_point_residual(context: CornerContext) -> float:
    """Scale-relative residual of the corner fixed-point equation."""
    p = context.params
    half = flow_operator(p, 0.5 * context.T_star)
    R = context.R
    x = context.x_star
    image = half @ ((np.eye(2) + R) @ (half @ x) - R @ context.y0())
    return float(np.linalg.norm(image - x) / max(np.linalg.norm(x), 1e-300))


def _impact_terms(context: CornerContext, side: str) -> tuple:
    p = context.params
    d = context.cam_data()
    qd, qd_t = context.pre_impact_state()
    w = qd_t - d["c0_t"]
    scale = max(abs(qd_t), abs(d["c0_t"]), 1e-300)
    if w == 0.0:
        raise GrazingError("relative impact velocity is zero at the corner")
    if scale / abs(w) > CONDITION_WARN:
        warnings.warn(f"near-grazing corner impact: relative velocity {w!r} "
                      f"(condition {scale / abs(w):.3g})", RuntimeWarning, stacklevel=3)
    cpp = d["c0_tt_minus"] if side == "minus" else d["c0_tt_plus"]
    E = 2.0 * p.zeta * d["c0_t"] + cpp + p.omega0 ** 2 * qd
    return qd, qd_t, w, E, d


def jacobian_x(context: CornerContext, side: str) -> np.ndarray:
    """Closed-form ``dP/dx`` at the fixed point for one side of the corner."""
    r = context.params.restitution
    _, _, w, E, _ = _impact_terms(context, side)
    M = np.array([[-r, 0.0], [-(1.0 + r) * E / w, -r]])
    half = flow_operator(context.params, 0.5 * context.T_star)
    return half @ M @ half


def jacobian_T(context: CornerContext, side: str) -> np.ndarray:
    """Closed-form ``dP/dT`` at the fixed point for one side of the corner."""
    p = context.params
    r, z, w0 = p.restitution, p.zeta, p.omega0
    T = context.T_star
    qd, qd_t, w, E, d = _impact_terms(context, side)
    c0_t = d["c0_t"]
    qd_tt = -w0 * w0 * qd - 2.0 * z * qd_t
    post = -r * qd_t + (1.0 + r) * c0_t
    b1 = (1.0 + r) * c0_t - 2.0 * r * qd_t
    b2 = (-w0 * w0 * qd - 2.0 * z * post - r * qd_tt
          - (1.0 + r) * qd_t * E / w - 2.0 * (1.0 + r) * c0_t / T)
    half = flow_operator(p, 0.5 * T)
    return 0.5 * half @ np.array([b1, b2])


def map_derivatives(x, T: float, context: CornerContext, side: str | None = None) -> tuple:
    """``(dP/dx, dP/dT)`` at any point by the implicit-function chain rule.

    The impact time ``tau`` is found first; its sensitivities follow from
    the gap condition and are pushed through the flow, impact law and cam
    motion.  ``side`` picks the cam piece when ``tau`` is exactly zero (or
    forces it everywhere).
    """
    p = context.params
    Lam = p.system_matrix()
    R = context.R
    x = np.asarray(x, dtype=float)
    half = flow_operator(p, 0.5 * T)
    dhalf = flow_operator_time_derivative(p, 0.5 * T)
    x_d = half @ x
    tau = impact_time(x_d, context, T, side)
    if side is None:
        side = "minus" if tau < 0.0 else "plus"
    piece = context.pieces[SIDES.index(side)]
    y, dy = cam_vector(context, tau, T, piece)
    dy_dT = np.array([-(tau / T) * dy[0], -dy[0] / T - (tau / T) * dy[1]])
    ft = flow_operator(p, tau)
    z = ft @ x_d
    rel = float(z[1] - y[1])
    if rel == 0.0:
        raise GrazingError("relative impact velocity is zero")
    # gap condition h(phi_tau x_d - y_tau(T)) = 0
    dtau_dxd = -(H @ ft) / rel
    dtau_dT = (H @ dy_dT) / rel
    zdot = Lam @ z
    dz_dxd = ft + np.outer(zdot, dtau_dxd)
    dz_dT = zdot * dtau_dT
    I2 = np.eye(2)
    zp = (I2 + R) @ z - R @ y
    back = flow_operator(p, -tau)
    dzp_dxd = (I2 + R) @ dz_dxd - np.outer(R @ dy, dtau_dxd)
    dzp_dT = (I2 + R) @ dz_dT - (R @ dy) * dtau_dT - R @ dy_dT
    out_d = back @ zp
    dPD_dxd = back @ dzp_dxd - np.outer(Lam @ out_d, dtau_dxd)
    dPD_dT = back @ dzp_dT - (Lam @ out_d) * dtau_dT
    A = half @ dPD_dxd @ half
    dxd_dT = 0.5 * dhalf @ x
    B = 0.5 * dhalf @ out_d + half @ (dPD_dxd @ dxd_dT + dPD_dT)
    return A, B


def impact_time_derivatives(x, T: float, context: CornerContext, side: str = "minus") -> tuple:
    """Total derivatives of the corner impact time ``tau(x, T)``."""
    p = context.params
    x = np.asarray(x, dtype=float)
    half = flow_operator(p, 0.5 * T)
    x_d = half @ x
    tau = impact_time(x_d, context, T, side)
    piece = context.pieces[SIDES.index(side)]
    y, dy = cam_vector(context, tau, T, piece)
    dy_dT = np.array([-(tau / T) * dy[0], -dy[0] / T - (tau / T) * dy[1]])
    ft = flow_operator(p, tau)
    rel = float((ft @ x_d)[1] - y[1])
    dtau_dxd = -(H @ ft) / rel
    dtau_dx = dtau_dxd @ half
    dtau_dT = dtau_dxd @ (0.5 * flow_operator_time_derivative(p, 0.5 * T) @ x) + (H @ dy_dT) / rel
    return dtau_dx, float(dtau_dT)


def switching_gain(context: CornerContext) -> float:
    """Factor ``k`` with ``C dx + D dT = k * tau`` to first order.

    ``k = (1 + r) (c''+ - c''-) [phi_{T/2}]_{12}``; its sign tells which
    side of the switching line holds impacts before the corner.
    """
    d = context.cam_data()
    half = flow_operator(context.params, 0.5 * context.T_star)
    return ((1.0 + context.params.restitution)
            * (d["c0_tt_plus"] - d["c0_tt_minus"]) * half[0, 1])


@dataclass(frozen=True)
class LocalPWLMap:
    """Piecewise-linear map ``dx' = A dx + B dT`` switched by ``C dx + D dT``.

    ``orientation`` fixes which branch applies: the minus branch is used
    when ``orientation * (C dx + D dT) < 0``.  Maps derived from a cam use
    the sign that sends impacts before the corner to the minus branch.
    """

    A_minus: np.ndarray
    A_plus: np.ndarray
    B_minus: np.ndarray
    B_plus: np.ndarray
    C: np.ndarray
    D: float
    x_star: np.ndarray | None = None
    T_star: float | None = None
    orientation: int = 1
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("A_minus", "A_plus"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (2, 2) or not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be a finite 2x2 matrix")
            object.__setattr__(self, name, a)
        for name in ("B_minus", "B_plus", "C"):
            b = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if b.shape != (2,) or not np.all(np.isfinite(b)):
                raise ValueError(f"{name} must be a finite 2-vector")
            object.__setattr__(self, name, b)
        object.__setattr__(self, "D", float(self.D))
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        if self.x_star is not None:
            object.__setattr__(self, "x_star", np.asarray(self.x_star, dtype=float))

    def switching(self, dx, dT: float) -> float:
        return float(self.C @ np.asarray(dx, dtype=float) + self.D * dT)

    def branch(self, dx, dT: float) -> str:
        return "minus" if self.orientation * self.switching(dx, dT) < 0.0 else "plus"

    def matrices(self, branch: str) -> tuple:
        if branch == "minus":
            return self.A_minus, self.B_minus
        return self.A_plus, self.B_plus

    def apply(self, dx, dT: float) -> np.ndarray:
        A, B = self.matrices(self.branch(dx, dT))
        return A @ np.asarray(dx, dtype=float) + B * dT

    def continuity_residual(self) -> tuple:
        """Scale-relative residuals of ``C = h(A+ - A-)`` and ``D = h(B+ - B-)``."""
        c = H @ (self.A_plus - self.A_minus)
        d = H @ (self.B_plus - self.B_minus)
        rc = np.max(np.abs(c - self.C)) / max(np.max(np.abs(self.C)), 1e-300)
        rd = abs(d - self.D) / max(abs(self.D), 1e-300)
        return float(rc), float(rd)

    def to_dict(self) -> dict:
        d = {"A_minus": self.A_minus.tolist(), "A_plus": self.A_plus.tolist(),
             "B_minus": self.B_minus.tolist(), "B_plus": self.B_plus.tolist(),
             "C": self.C.tolist(), "D": self.D, "orientation": self.orientation}
        if self.x_star is not None:
            d["x_star"] = self.x_star.tolist()
        if self.T_star is not None:
            d["T_star"] = self.T_star
        if self.metadata:
            d["metadata"] = self.metadata
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LocalPWLMap":
        try:
            return cls(np.array(d["A_minus"]), np.array(d["A_plus"]),
                       np.array(d["B_minus"]), np.array(d["B_plus"]),
                       np.array(d["C"]), d["D"], d.get("x_star"), d.get("T_star"),
                       int(d.get("orientation", 1)), d.get("metadata", {}))
        except KeyError as exc:
            raise ValueError(f"map file lacks field {exc.args[0]!r}") from None


def save_map(m: LocalPWLMap, path) -> None:
    """Write a map as JSON (row-major matrices, round-trip precision)."""
    Path(path).write_text(json.dumps(m.to_dict(), indent=2) + "\n")


def load_map(path) -> LocalPWLMap:
    try:
        d = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValueError(f"{path}: cannot read map file ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return LocalPWLMap.from_dict(d)


def build_local_map(context: CornerContext) -> LocalPWLMap:
    """Assemble the piecewise-linear map from the closed-form Jacobians."""
    A_m, A_p = jacobian_x(context, "minus"), jacobian_x(context, "plus")
    B_m, B_p = jacobian_T(context, "minus"), jacobian_T(context, "plus")
    C = H @ (A_p - A_m)
    D = float(H @ (B_p - B_m))
    k = switching_gain(context)
    orientation = -1 if k < 0.0 else 1
    meta = {"omega_star_rpm": context.omega_star * 60.0 / TWO_PI,
            "corner_phase": context.corner_phase,
            "fixed_point_residual": context.fixed_point_residual,
            "corner_residual": context.corner_residual}
    return LocalPWLMap(A_m, A_p, B_m, B_p, C, D, context.x_star.copy(), context.T_star,
                       orientation, meta)


# --- numerical estimate ----------------------------------------------------

def _forced_period_map(args):
    x, T, geometry, corner_phase, piece, half_width, params, config = args
    cam = CamDrive(geometry, TWO_PI / T, corner_phase).forced(corner_phase, half_width, piece)
    xf, traj = period_map(x, -0.5 * T, cam, params, config)
    n = len(traj.impacts)
    if n != 1:
        raise CornerMapError(f"perturbed orbit had {n} impacts in one period, expected 1")
    return xf


@dataclass
class MapEstimate:
    A_minus: np.ndarray
    A_plus: np.ndarray
    B_minus: np.ndarray
    B_plus: np.ndarray
    residual: dict
    design_rank: int

    def discrepancy(self, m: LocalPWLMap) -> dict:
        """Per-entry relative discrepancy against an analytic map."""
        out = {}
        for name in ("A_minus", "A_plus", "B_minus", "B_plus"):
            a, b = np.asarray(getattr(m, name)), getattr(self, name)
            out[name] = np.abs(b - a) / np.abs(a)
        out["max"] = float(max(np.max(v) for v in out.values()))
        return out


def fit_linear_map(inputs: np.ndarray, outputs: np.ndarray) -> tuple:
    """Least-squares ``outputs ~ inputs @ G.T``; returns ``(G, rank, residual)``."""
    inputs = np.asarray(inputs, dtype=float)
    outputs = np.asarray(outputs, dtype=float)
    rank = int(np.linalg.matrix_rank(inputs))
    if rank < inputs.shape[1]:
        raise CornerMapError(
            f"perturbation design has rank {rank} < {inputs.shape[1]}; "
            "use more or better spread perturbations")
    G, res, _, _ = np.linalg.lstsq(inputs, outputs, rcond=None)
    fit = inputs @ G
    rel = float(np.max(np.abs(fit - outputs)) / max(np.max(np.abs(outputs)), 1e-300))
    return G.T, rank, rel


def estimate_map_numerically(context: CornerContext, M: int = 60,
                             perturbation_scale: float = 1e-6, seed: int = 0,
                             config: SimConfig | None = None, half_width: float = 0.05,
                             workers: int | None = 1) -> MapEstimate:
    """Least-squares estimate of both branches from event-driven simulation.

    Each branch is sampled on a cam whose formula on one side of the
    corner is extended across a window of ``+/- half_width`` rad, so every
    perturbed impact sees that side's acceleration.  Perturbations are
    Gaussian with relative size ``perturbation_scale`` and are used in
    antithetic pairs, which removes the quadratic part of the error.

    Raises
    ------
    CornerMapError
        If the design ``[dx; dT]`` has rank below 3 (``M < 3`` or
        degenerate perturbations).
    """
    if M < 1:
        raise CornerMapError("M must be positive")
    config = SimConfig() if config is None else config
    rng = np.random.default_rng(seed)
    xs, Ts = context.x_star, context.T_star
    sx = perturbation_scale * max(np.linalg.norm(xs), 1e-300)
    design = np.column_stack([sx * rng.standard_normal((M, 2)),
                              perturbation_scale * Ts * rng.standard_normal(M)])
    # validate the design before spending time on simulations
    if np.linalg.matrix_rank(design) < 3:
        raise CornerMapError(
            f"perturbation design has rank {np.linalg.matrix_rank(design)} < 3; "
            "use more or better spread perturbations")
    out = {}
    residual = {}
    rank = 3
    for side, piece in zip(SIDES, context.pieces):
        jobs = []
        for dx0, dx1, dT in design:
            for s in (1.0, -1.0):
                jobs.append((xs + s * np.array([dx0, dx1]), Ts + s * dT, context.geometry,
                             context.corner_phase, piece, half_width, context.params, config))
        if workers is not None and workers <= 1:
            res = [_forced_period_map(j) for j in jobs]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                res = list(pool.map(_forced_period_map, jobs))
        res = np.asarray(res)
        delta = 0.5 * (res[0::2] - res[1::2])
        G, rank, rel = fit_linear_map(design, delta)
        out[side] = G
        residual[side] = rel
    return MapEstimate(out["minus"][:, :2], out["plus"][:, :2], out["minus"][:, 2],
                       out["plus"][:, 2], residual, rank)
