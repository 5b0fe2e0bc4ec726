"""Event-driven simulation of the follower on a rotating cam.

Between events the follower moves on the exact free-flight solution, so
the only numerical work is locating events: impacts (roots of the gap
``q - c``) and detachment from sticking (zero crossings of the contact
force).  Root searches run on intervals that never straddle a cam joint,
which keeps the gap smooth where Newton's method is applied.

Chattering sequences are followed impact by impact until the relative
rebound velocity falls below ``eps_stick_v``.  The follower is then placed
on the cam with the cam's velocity and sticks while the contact force is
non-negative.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .cam import TWO_PI, CamDrive, discontinuity_phases
from .follower import (FollowerState, PhysicalParams, contact_force_from_cam,
                       flow_entries, impact_velocity)

log = logging.getLogger(__name__)

FREE = "free"
STICK = "stick"


class EventError(RuntimeError):
    """Root polishing failed; ``bracket`` holds the last search interval."""

    def __init__(self, message: str, bracket: tuple):
        super().__init__(f"{message} (bracket {bracket[0]!r}, {bracket[1]!r})")
        self.bracket = bracket


class PenetrationError(ValueError):
    """Initial state lies inside the cam."""


@dataclass(frozen=True)
class SimConfig:
    """Tolerances and thresholds of the event-driven integrator.

    Parameters
    ----------
    tol_event : float
        Impact-time root tolerance (s).
    tol_pen : float
        Penetration tolerance (m).
    eps_stick_v : float
        Relative rebound velocity below which chattering is completed
        plastically (m/s).
    max_impacts_per_period : int
        Safety cutoff.  Exceeding it truncates the trajectory and marks it
        as a chattering overflow.
    strobe_phase : float
        Cam-time phase ``omega * t`` of the stroboscopic samples.
    grid_per_period : int
        Root-bracketing samples per forcing or natural period.
    """

    tol_event: float = 1e-12
    tol_pen: float = 1e-9
    eps_stick_v: float = 1e-6
    max_impacts_per_period: int = 1000
    strobe_phase: float = -math.pi
    grid_per_period: int = 64

    def __post_init__(self) -> None:
        for name in ("tol_event", "tol_pen", "eps_stick_v"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if self.max_impacts_per_period < 1:
            raise ValueError("max_impacts_per_period must be at least 1")
        if self.grid_per_period < 4:
            raise ValueError("grid_per_period must be at least 4")
        if not math.isfinite(self.strobe_phase):
            raise ValueError("strobe_phase must be finite")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "tol_event", "tol_pen", "eps_stick_v", "max_impacts_per_period",
            "strobe_phase", "grid_per_period")}


@dataclass(frozen=True)
class ImpactEvent:
    t: float
    phase: float
    pre_velocity: float
    post_velocity: float
    cam_velocity: float
    corner: int | None = None

    @property
    def at_corner(self) -> bool:
        return self.corner is not None


@dataclass(frozen=True)
class Segment:
    """One stretch of free flight or sticking.

    ``x_start`` is the shifted state at ``t_start``.
    """

    t_start: float
    t_end: float
    mode: str
    x_start: tuple


@dataclass
class Trajectory:
    t0: float
    t_end: float
    omega: float
    strobe_times: np.ndarray
    strobe_states: np.ndarray
    impacts: list
    sticking: list
    segments: list
    final_state: FollowerState
    final_mode: str
    overflow: bool = False

    @property
    def impact_times(self) -> np.ndarray:
        return np.array([e.t for e in self.impacts])

    def impacts_between(self, t_a: float, t_b: float) -> list:
        return [e for e in self.impacts if t_a < e.t <= t_b]


def _grid_step(cam: CamDrive, params: PhysicalParams, config: SimConfig) -> float:
    return min(cam.period, TWO_PI / params.omega_s) / config.grid_per_period


class _Flight:
    """Gap function of one free flight from ``(t0, x0)``."""

    def __init__(self, t0: float, x0, cam: CamDrive, params: PhysicalParams):
        self.t0 = t0
        self.x0, self.v0 = float(x0[0]), float(x0[1])
        self.cam = cam
        self.params = params
        self.off = params.offset

    def state(self, t):
        p11, p12, p21, p22 = flow_entries(self.params, np.asarray(t) - self.t0)
        return p11 * self.x0 + p12 * self.v0, p21 * self.x0 + p22 * self.v0

    def gap(self, t, piece: int):
        x, v = self.state(t)
        c, ct, ctt = self.cam.derivatives(t, piece)
        return x - (c + self.off), v - ct

    def gap_accel(self, t, piece: int):
        x, v = self.state(t)
        _, _, ctt = self.cam.derivatives(t, piece)
        p = self.params
        return -p.omega0 ** 2 * x - 2.0 * p.zeta * v - ctt


def _polish(fn, lo: float, hi: float, tol: float, what: str) -> float:
    """Safeguarded Newton on a bracket with ``f(lo) > 0 >= f(hi)``."""
    x = hi
    f, df = fn(x)
    if f == 0.0:
        return x
    step_old = hi - lo
    for _ in range(100):
        if f > 0.0:
            lo = x
        else:
            hi = x
        newton_ok = df != 0.0 and lo < x - f / df < hi
        if newton_ok and abs(f / df) < 0.5 * step_old:
            step = f / df
            x_new = x - step
        else:
            x_new = 0.5 * (lo + hi)
            step = x - x_new
        step_old = abs(step)
        if x_new == x or hi - lo <= 0.0:
            return x_new
        x = x_new
        f, df = fn(x)
        if f == 0.0 or abs(step) <= tol:
            if abs(step) <= tol and f != 0.0:
                # one more Newton step gains the remaining digits
                if df != 0.0 and lo <= x - f / df <= hi:
                    x = x - f / df
            return float(x)
    raise EventError(f"{what} root did not converge in 100 iterations", (lo, hi))


def find_next_impact(x0, t0: float, cam: CamDrive, params: PhysicalParams,
                     config: SimConfig, horizon: float):
    """First impact of a free flight starting at ``(t0, x0)``.

    Parameters
    ----------
    x0 : array_like
        Shifted state ``[q + g/omega0**2, q']`` at ``t0``.
    horizon : float
        Search length in time.

    Returns
    -------
    tuple or None
        ``(t_hit, x_hit)`` with the shifted pre-impact state, or ``None``
        if the gap stays positive over the horizon.  A follower that starts
        on the cam and is not moving away from it hits at ``t0``.
    """
    flight = _Flight(t0, x0, cam, params)
    h = _grid_step(cam, params, config)
    t_b = t0 + horizon
    first = True
    for a, b, piece in cam.intervals(t0, t_b):
        if first:
            first = False
            g0, gd0 = flight.gap(t0, piece)
            g0, gd0 = float(g0), float(gd0)
            if g0 < -config.tol_pen:
                raise PenetrationError(f"follower starts {-g0!r} inside the cam at t={t0!r}")
            if g0 <= config.tol_pen:
                start = _safe_start(flight, t0, piece, g0, gd0, h, config, b)
                if start is None:
                    return t0, np.array(flight.state(t0), dtype=float)
                grid = _start_grid(t0, start, b, h)
            else:
                grid = _uniform_grid(a, b, h)
        else:
            grid = _uniform_grid(a, b, h)
        hit = _search_interval(flight, grid, piece, config)
        if hit is not None:
            x, v = flight.state(hit)
            return hit, np.array([float(x), float(v)])
    return None


def _uniform_grid(a: float, b: float, h: float) -> np.ndarray:
    n = max(int(math.ceil((b - a) / h)), 1)
    grid = a + (b - a) * np.arange(n + 1) / n
    grid[-1] = b
    return grid


def _start_grid(t0: float, start: float, b: float, h: float) -> np.ndarray:
    """Geometric ramp from ``start`` up to step ``h``, then uniform."""
    pts = [start]
    step = start - t0
    t = start
    while step < h and t < b:
        t = min(t + step, b)
        pts.append(t)
        step *= 2.0
    if t < b:
        pts.extend(_uniform_grid(t, b, h)[1:])
    return np.asarray(pts)


def _safe_start(flight: _Flight, t0: float, piece: int, g0: float, gd0: float,
                h: float, config: SimConfig, t_piece_end: float):
    """First time after ``t0`` where the gap is safely open.

    Returns ``None`` when the follower cannot leave the cam (immediate
    contact at ``t0``).
    """
    v_tiny = 1e-3 * config.eps_stick_v
    acc0 = float(flight.gap_accel(t0, piece))
    span = t_piece_end - t0
    if gd0 < -v_tiny:
        return None
    if gd0 > v_tiny:
        delta = min(h, span)
        if acc0 < 0.0:
            delta = min(delta, 0.5 * gd0 / -acc0)
        for _ in range(60):
            if float(flight.gap(t0 + delta, piece)[0]) > 0.0:
                return t0 + delta
            delta *= 0.5
        return None
    if acc0 <= 0.0:
        return None
    delta = min(h / 1024.0, span)
    while True:
        if float(flight.gap(t0 + delta, piece)[0]) > 0.0:
            return t0 + delta
        if delta >= min(h, span):
            return None
        delta = min(2.0 * delta, h, span)


def _search_interval(flight: _Flight, grid: np.ndarray, piece: int,
                     config: SimConfig):
    g, gd = flight.gap(grid, piece)
    down = np.nonzero((g[:-1] > 0.0) & (g[1:] <= 0.0))[0]
    # Local minima of the gap between samples that stay positive at both ends.
    dips = np.nonzero((g[:-1] > 0.0) & (g[1:] > 0.0) & (gd[:-1] < 0.0) & (gd[1:] > 0.0))[0]
    first_down = down[0] if down.size else None
    fn = lambda t: tuple(float(v) for v in flight.gap(t, piece))
    for k in dips:
        if first_down is not None and k >= first_down:
            break
        t_min = brentq(lambda t: float(flight.gap(t, piece)[1]), grid[k], grid[k + 1],
                       xtol=config.tol_event, rtol=4 * np.finfo(float).eps)
        if fn(t_min)[0] <= 0.0:
            return _polish(fn, float(grid[k]), t_min, config.tol_event, "impact")
    if first_down is None:
        return None
    k = int(first_down)
    return _polish(fn, float(grid[k]), float(grid[k + 1]), config.tol_event, "impact")


def find_detachment(t0: float, cam: CamDrive, params: PhysicalParams,
                    config: SimConfig, horizon: float):
    """First time after ``t0`` where the sticking contact force turns negative."""
    h = _grid_step(cam, params, config)

    def force(t, piece):
        c, ct, ctt = cam.derivatives(t, piece)
        return contact_force_from_cam(params, c, ct, ctt)

    for a, b, piece in cam.intervals(t0, t0 + horizon):
        grid = _uniform_grid(a, b, h)
        n = force(grid, piece)
        if n[0] < 0.0:
            return float(a)
        idx = np.nonzero((n[:-1] >= 0.0) & (n[1:] < 0.0))[0]
        if idx.size:
            k = int(idx[0])
            f = lambda t: float(force(t, piece))
            hi = float(grid[k + 1])
            t_d = brentq(f, grid[k], hi, xtol=config.tol_event, rtol=4 * np.finfo(float).eps)
            # step onto the side where the force is already negative
            step = config.tol_event
            while f(t_d) >= 0.0 and t_d < hi:
                t_d = min(t_d + step, hi)
                step *= 2.0
            return t_d
    return None


def strobe_times(omega: float, t_a: float, t_b: float, config: SimConfig) -> np.ndarray:
    """Stroboscopic times in ``(t_a, t_b]`` (with a tiny tolerance)."""
    eps = 1e-9
    n0 = math.floor((omega * t_a - config.strobe_phase) / TWO_PI + eps) + 1
    n1 = math.floor((omega * t_b - config.strobe_phase) / TWO_PI + eps)
    n = np.arange(n0, n1 + 1)
    return (config.strobe_phase + TWO_PI * n) / omega


def _corner_index(phase: float, corners: list, tol: float) -> int | None:
    for i, c in enumerate(corners):
        d = abs((phase - c + math.pi) % TWO_PI - math.pi)
        if d < tol:
            return i
    return None


def simulate(x0: FollowerState, t0: float, duration: float, cam: CamDrive,
             params: PhysicalParams, config: SimConfig = SimConfig(),
             mode: str | None = None) -> Trajectory:
    """Integrate the follower over ``[t0, t0 + duration]``.

    Parameters
    ----------
    x0 : FollowerState
        Initial state; must not penetrate the cam.
    mode : {"free", "stick"}, optional
        Initial contact mode.  By default it is inferred from the state.

    Returns
    -------
    Trajectory
    """
    if not duration > 0.0:
        raise ValueError("duration must be positive")
    off = params.offset
    omega = cam.omega
    t_end = t0 + duration
    corners = [p for p, _ in discontinuity_phases(cam.geometry)]
    corner_tol = omega * config.tol_event
    ts = strobe_times(omega, t0, t_end, config)
    strobe = np.empty((ts.size, 2))
    k_strobe = 0

    impacts: list = []
    sticking: list = []
    segments: list = []
    overflow = False
    period_counts: dict = {}

    t = t0
    x = np.array([x0.q + off, x0.qdot])
    c, ct, ctt = (float(v) for v in cam.derivatives(t0))
    gap = x0.q - c
    if gap < -config.tol_pen:
        raise PenetrationError(f"initial state is {-gap!r} inside the cam")
    if mode is None:
        mode = FREE
        if (gap <= config.tol_pen and abs(x0.qdot - ct) <= config.eps_stick_v
                and contact_force_from_cam(params, c, ct, ctt) >= 0.0):
            mode = STICK
    if mode == STICK:
        x = np.array([c + off, ct])

    def cam_shifted(times):
        cc, cv, _ = _cam_vectorised(cam, times)
        return np.column_stack([cc + off, cv])

    while t < t_end:
        if mode == FREE:
            hit = find_next_impact(x, t, cam, params, config, t_end - t)
            t_next = t_end if hit is None else hit[0]
            flight = _Flight(t, x, cam, params)
            k_hi = k_strobe + int(np.searchsorted(ts[k_strobe:], t_next, side="right"))
            if k_hi > k_strobe:
                sx, sv = flight.state(ts[k_strobe:k_hi])
                strobe[k_strobe:k_hi, 0] = sx
                strobe[k_strobe:k_hi, 1] = sv
                k_strobe = k_hi
            segments.append(Segment(t, t_next, FREE, (float(x[0]), float(x[1]))))
            if hit is None:
                xe, ve = flight.state(t_end)
                x = np.array([float(xe), float(ve)])
                t = t_end
                break
            t_hit, x_hit = hit
            phase = float((omega * t_hit + cam.phase_offset) % TWO_PI)
            corner = _corner_index(phase, corners, corner_tol)
            side = "left" if corner is not None else "right"
            c, cv, ca = (float(v) for v in cam.derivatives(t_hit, side=side))
            pre = float(x_hit[1])
            post = impact_velocity(params, pre, cv)
            impacts.append(ImpactEvent(t_hit, phase, pre, post, cv, corner))
            key = math.floor((omega * t_hit - config.strobe_phase) / TWO_PI)
            period_counts[key] = period_counts.get(key, 0) + 1
            t = t_hit
            if period_counts[key] > config.max_impacts_per_period:
                overflow = True
                x = np.array([c + off, post])
                log.warning("chattering overflow at t=%r: more than %d impacts in one period",
                            t_hit, config.max_impacts_per_period)
                break
            if (post - cv < config.eps_stick_v
                    and contact_force_from_cam(params, c, cv, ca) >= 0.0):
                mode = STICK
                x = np.array([c + off, cv])
            else:
                x = np.array([c + off, post])
        else:
            t_det = find_detachment(t, cam, params, config, t_end - t)
            t_next = t_end if t_det is None else t_det
            k_hi = k_strobe + int(np.searchsorted(ts[k_strobe:], t_next, side="right"))
            if k_hi > k_strobe:
                strobe[k_strobe:k_hi] = cam_shifted(ts[k_strobe:k_hi])
                k_strobe = k_hi
            segments.append(Segment(t, t_next, STICK, (float(x[0]), float(x[1]))))
            sticking.append((t, t_next))
            c, cv, _ = (float(v) for v in cam.derivatives(t_next))
            x = np.array([c + off, cv])
            t = t_next
            if t_det is None:
                break
            mode = FREE

    strobe = strobe[:k_strobe].copy()
    strobe[:, 0] -= off
    return Trajectory(t0=t0, t_end=t if overflow else t_end, omega=omega,
                      strobe_times=ts[:k_strobe].copy(), strobe_states=strobe,
                      impacts=impacts, sticking=sticking, segments=segments,
                      final_state=FollowerState.from_shifted(x, params),
                      final_mode=mode, overflow=overflow)


def _cam_vectorised(cam: CamDrive, times) -> tuple:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    out = np.empty((3, times.size))
    for i, t in enumerate(times):
        out[:, i] = [float(v) for v in cam.derivatives(t)]
    return out[0], out[1], out[2]


def stroboscopic_sequence(traj: Trajectory) -> list:
    """Stroboscopic samples of a trajectory as follower states."""
    return [FollowerState(float(q), float(v)) for q, v in traj.strobe_states]


def sample_trajectory(traj: Trajectory, times, cam: CamDrive,
                      params: PhysicalParams) -> np.ndarray:
    """Follower position ``q`` at arbitrary times inside the trajectory."""
    times = np.asarray(times, dtype=float)
    starts = np.array([s.t_start for s in traj.segments])
    idx = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, len(starts) - 1)
    q = np.empty(times.shape)
    for j in np.unique(idx):
        seg = traj.segments[j]
        mask = idx == j
        if seg.mode == FREE:
            x, _ = _Flight(seg.t_start, seg.x_start, cam, params).state(times[mask])
            q[mask] = x - params.offset
        else:
            q[mask] = _cam_vectorised(cam, times[mask])[0]
    return q


def period_map(x, t0: float, cam: CamDrive, params: PhysicalParams,
               config: SimConfig = SimConfig()) -> tuple:
    """Shifted state one forcing period after ``t0``.

    Returns
    -------
    tuple
        ``(x_next, trajectory)``.
    """
    start = FollowerState.from_shifted(x, params)
    traj = simulate(start, t0, cam.period, cam, params, config, mode=FREE)
    xf = traj.final_state.shifted(params)
    return xf, traj


def write_trajectory_csv(traj: Trajectory, out_dir) -> dict:
    """Write strobe, impact and sticking tables; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"strobe": out / "strobe.csv", "impacts": out / "impacts.csv",
             "sticking": out / "sticking.csv"}
    with open(paths["strobe"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "t", "q", "qdot"])
        for n, (t, (q, v)) in enumerate(zip(traj.strobe_times, traj.strobe_states)):
            w.writerow([n, repr(float(t)), repr(float(q)), repr(float(v))])
    with open(paths["impacts"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "phase", "pre", "post", "cam_velocity", "at_corner"])
        for e in traj.impacts:
            flag = "" if e.corner is None else str(e.corner)
            w.writerow([repr(e.t), repr(e.phase), repr(e.pre_velocity),
                        repr(e.post_velocity), repr(e.cam_velocity), flag])
    with open(paths["sticking"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_start", "t_end"])
        for a, b in traj.sticking:
            w.writerow([repr(float(a)), repr(float(b))])
    return paths
