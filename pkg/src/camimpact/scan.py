"""Cam-speed sweeps producing impact-phase and stroboscopic diagrams."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cam import TWO_PI, CamDrive, discontinuity_phases
from .follower import FollowerState
from .scenario import Scenario
from .simulator import FREE, STICK, simulate

log = logging.getLogger(__name__)

RPM = TWO_PI / 60.0
MAX_PERIOD = 16
PERIOD_TOL = 1e-6
PHASE_TOL = 1e-6


def rpm_to_rad(rpm):
    return np.asarray(rpm, dtype=float) * RPM if np.ndim(rpm) else float(rpm) * RPM


def rad_to_rpm(omega):
    return np.asarray(omega, dtype=float) / RPM if np.ndim(omega) else float(omega) / RPM


@dataclass(frozen=True)
class ScanConfig:
    """Sweep settings; speeds in rpm.

    ``direction`` is ``"up"`` or ``"down"`` and fixes the order in which
    continuation visits the speeds.
    """

    omega_min_rpm: float
    omega_max_rpm: float
    n_points: int
    transient_periods: int = 200
    record_periods: int = 64
    continuation: bool = True
    direction: str = "down"
    workers: int | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.omega_min_rpm < self.omega_max_rpm):
            raise ValueError("need 0 < omega_min_rpm < omega_max_rpm")
        if self.n_points < 2:
            raise ValueError("n_points must be at least 2")
        if self.record_periods < 1 or self.transient_periods < 0:
            raise ValueError("record_periods >= 1 and transient_periods >= 0 required")
        if self.direction not in ("up", "down"):
            raise ValueError("direction must be 'up' or 'down'")

    def speeds_rpm(self) -> np.ndarray:
        """Scan speeds in visiting order."""
        w = np.linspace(self.omega_min_rpm, self.omega_max_rpm, self.n_points)
        return w if self.direction == "up" else w[::-1]


@dataclass
class ScanRecord:
    omega_rpm: float
    impact_phases: np.ndarray
    strobe_states: np.ndarray
    period: int | None
    n_impacts: int
    overflow: bool = False
    error: str | None = None
    final_state: FollowerState | None = None
    final_mode: str = FREE

    @property
    def is_period1_single_impact(self) -> bool:
        # a 1-periodic strobe with every impact at one phase has one impact per period
        if self.period != 1 or self.n_impacts == 0:
            return False
        d = np.angle(np.exp(1j * (self.impact_phases - self.impact_phases[0])))
        return bool(np.max(np.abs(d)) <= PHASE_TOL)


@dataclass
class BifurcationDiagram:
    records: list
    corner_phases: list = field(default_factory=list)

    @property
    def omegas_rpm(self) -> np.ndarray:
        return np.array([r.omega_rpm for r in self.records])

    def sorted(self) -> "BifurcationDiagram":
        recs = sorted(self.records, key=lambda r: r.omega_rpm)
        return BifurcationDiagram(recs, list(self.corner_phases))


def estimate_period(strobe: np.ndarray, max_period: int = MAX_PERIOD,
                    tol: float = PERIOD_TOL) -> int | None:
    """Smallest ``p <= max_period`` for which the samples are ``p``-periodic.

    The tolerance is relative to each component's magnitude (floored at 1).
    """
    s = np.asarray(strobe, dtype=float)
    n = s.shape[0]
    if n < 2:
        return None
    scale = np.maximum(np.max(np.abs(s), axis=0), 1.0)
    for p in range(1, min(max_period, n - 1) + 1):
        if np.all(np.abs(s[p:] - s[:-p]) <= tol * scale):
            return p
    return None


def run_point(scenario: Scenario, omega_rpm: float, x0: FollowerState,
              transient_periods: int, record_periods: int,
              mode: str | None = None) -> ScanRecord:
    """Simulate one speed: discard the transient, then record."""
    omega = rpm_to_rad(omega_rpm)
    cam = scenario.cam(omega)
    T = cam.period
    t0 = scenario.config.strobe_phase / omega
    try:
        state, cur_mode = x0, mode
        if cur_mode == STICK or cur_mode is None and _on_cam(scenario, cam, t0, state):
            c = cam.state(t0)
            state, cur_mode = FollowerState(c.position, c.velocity), STICK
        if transient_periods:
            tr = simulate(state, t0, transient_periods * T, cam, scenario.params,
                          scenario.config, mode=cur_mode)
            if tr.overflow:
                raise RuntimeError("chattering overflow during transient")
            state, cur_mode = tr.final_state, tr.final_mode
        t1 = t0 + transient_periods * T
        # restart the clock at the strobe time so round-off does not drift
        t1 = t0 + transient_periods * TWO_PI / omega
        rec = simulate(state, t1, record_periods * T, cam, scenario.params,
                       scenario.config, mode=cur_mode)
    except Exception as exc:  # recorded as a gap row, the sweep goes on
        log.warning("scan point %.6f rpm failed: %s", omega_rpm, exc)
        return ScanRecord(omega_rpm, np.empty(0), np.empty((0, 2)), None, 0,
                          error=f"{type(exc).__name__}: {exc}", final_state=x0,
                          final_mode=mode or FREE)
    phases = np.array([e.phase for e in rec.impacts])
    period = None if rec.overflow else estimate_period(rec.strobe_states)
    return ScanRecord(omega_rpm, phases, rec.strobe_states, period, len(rec.impacts),
                      overflow=rec.overflow, final_state=rec.final_state,
                      final_mode=rec.final_mode)


def _on_cam(scenario: Scenario, cam: CamDrive, t: float, state: FollowerState) -> bool:
    c = cam.state(t)
    return (abs(state.q - c.position) <= scenario.config.tol_pen
            and abs(state.qdot - c.velocity) <= scenario.config.eps_stick_v)


def _run_star(args):
    return run_point(*args)


def scan(config: ScanConfig, scenario: Scenario) -> BifurcationDiagram:
    """Sweep the cam speed and record the attractor at each speed.

    With continuation on, each speed starts from the final state of the
    previous one; otherwise every speed starts from the scenario's initial
    state and the points run in a process pool.
    """
    speeds = config.speeds_rpm()
    x0 = scenario.initial
    corners = [p for p, _ in discontinuity_phases(scenario.geometry)]
    if config.continuation:
        records = []
        state, mode = x0, None
        for w in speeds:
            rec = run_point(scenario, float(w), state, config.transient_periods,
                            config.record_periods, mode)
            records.append(rec)
            if rec.error is None:
                state, mode = rec.final_state, rec.final_mode
        return BifurcationDiagram(records, corners)
    jobs = [(scenario, float(w), x0, config.transient_periods, config.record_periods, None)
            for w in speeds]
    if config.workers is not None and config.workers <= 1:
        records = [_run_star(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_run_star, jobs))
    return BifurcationDiagram(records, corners)


@dataclass(frozen=True)
class CornerCrossing:
    omega_rpm: float
    corner_phase: float
    corner_index: int
    bracket_rpm: tuple
    impact_phase: float
    state: FollowerState


def _wrap(d: float) -> float:
    return (d + math.pi) % TWO_PI - math.pi


def _settle_period1(scenario: Scenario, omega_rpm: float, x0: FollowerState,
                    max_periods: int = 600, tol: float = 1e-11):
    """Iterate the stroboscopic map until a single-impact fixed point is reached.

    Returns ``(state, impact_phase)`` or ``None`` if the orbit does not
    settle onto a single-impact period-1 orbit.
    """
    omega = rpm_to_rad(omega_rpm)
    cam = scenario.cam(omega)
    t0 = scenario.config.strobe_phase / omega
    state = x0
    chunk = 50
    for k in range(0, max_periods, chunk):
        tr = simulate(state, t0, chunk * cam.period, cam, scenario.params,
                      scenario.config, mode=FREE)
        if tr.overflow or tr.sticking:
            return None
        s = tr.strobe_states
        scale = np.maximum(np.abs(s[-1]), 1.0)
        last = tr.impacts_between(tr.strobe_times[-2], tr.strobe_times[-1])
        if (len(last) == 1 and np.all(np.abs(s[-1] - s[-2]) <= tol * scale)):
            return tr.final_state, last[0].phase
        state = tr.final_state
    return None


def locate_corner_crossing(diagram: BifurcationDiagram, scenario: Scenario,
                           rel_tol: float = 1e-8) -> list:
    """Speeds where a period-1 single-impact branch hits a cam corner.

    Adjacent scan points where the branch either changes side of a corner
    or disappears next to one are refined by bisection on the speed.  The
    predicate at each trial speed continues the branch from the last good
    state and asks whether it still settles on the original side.

    Returns
    -------
    list of CornerCrossing
    """
    recs = diagram.sorted().records
    corners = [p for p, _ in discontinuity_phases(scenario.geometry)]
    out = []
    seen = set()
    for i in range(len(recs) - 1):
        for a, b in ((recs[i], recs[i + 1]), (recs[i + 1], recs[i])):
            if not a.is_period1_single_impact:
                continue
            pa = float(a.impact_phases[-1])
            if b.is_period1_single_impact:
                pb = float(b.impact_phases[-1])
            else:
                pb = None
            for ci, cph in enumerate(corners):
                da = _wrap(pa - cph)
                if pb is not None:
                    db = _wrap(pb - cph)
                    if np.sign(da) == np.sign(db) or abs(da - db) > math.pi / 2:
                        continue
                else:
                    # branch lost: accept the nearest corner if close enough
                    near = min(range(len(corners)), key=lambda j: abs(_wrap(pa - corners[j])))
                    if near != ci or abs(da) > 0.25:
                        continue
                key = (min(a.omega_rpm, b.omega_rpm), ci)
                if key in seen:
                    continue
                seen.add(key)
                res = _bisect_crossing(scenario, a, b, cph, np.sign(da), rel_tol)
                if res is not None:
                    out.append(CornerCrossing(res[0], cph, ci, (a.omega_rpm, b.omega_rpm),
                                              res[2], res[1]))
    return sorted(out, key=lambda c: c.omega_rpm)


def _bisect_crossing(scenario, good, bad, corner_phase, side, rel_tol):
    w_good, w_bad = good.omega_rpm, bad.omega_rpm
    state = good.final_state
    phase = float(good.impact_phases[-1])
    settled = _settle_period1(scenario, w_good, state)
    if settled is None:
        return None
    state, phase = settled
    while abs(w_bad - w_good) > rel_tol * abs(w_good):
        w_mid = 0.5 * (w_good + w_bad)
        res = _settle_period1(scenario, w_mid, state)
        if res is not None and np.sign(_wrap(res[1] - corner_phase)) == side:
            w_good, (state, phase) = w_mid, res
        else:
            w_bad = w_mid
    return 0.5 * (w_good + w_bad), state, phase


def write_diagram_csv(diagram: BifurcationDiagram, out_dir) -> dict:
    """Write impact, strobe and summary tables in scan order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"impacts": out / "impact_diagram.csv", "strobe": out / "strobe_diagram.csv",
             "summary": out / "summary.csv"}
    with open(paths["impacts"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega_rpm", "phase_rad"])
        for r in diagram.records:
            for p in r.impact_phases:
                w.writerow([repr(float(r.omega_rpm)), repr(float(p))])
    with open(paths["strobe"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega_rpm", "q", "qdot"])
        for r in diagram.records:
            for q, v in r.strobe_states:
                w.writerow([repr(float(r.omega_rpm)), repr(float(q)), repr(float(v))])
    with open(paths["summary"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega_rpm", "period_or_minus1", "n_impacts", "error"])
        for r in diagram.records:
            w.writerow([repr(float(r.omega_rpm)), -1 if r.period is None else r.period,
                        r.n_impacts, r.error or ""])
    return paths
