"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` (lines are printed even with
output capture on) or directly as ``python tests/test_acceptance.py``.
"""

import sys
import time
import timeit

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from camimpact.cam import N_PIECES, piece_derivatives
from camimpact.classify import FOLD, canonicalize, classify, iterate_local_map
from camimpact.corner_map import (
    build_local_map, estimate_map_numerically, fixed_point_residual, solve_fixed_point)
from camimpact.follower import (
    FollowerState, PhysicalParams, contact_force_from_cam, free_flight, impact_velocity)
from camimpact.scan import ScanConfig, locate_corner_crossing, rpm_to_rad, scan
from camimpact.simulator import period_map, simulate
from synthetic import random_corner_scenario

# golden reference values
EIG_MINUS = (1.0052, 0.6367)
EIG_PLUS = 0.6857 + 0.4120j
A_BAR_MINUS = np.array([[1.64186993642956, 1.0], [-0.64, 0.0]])
A_BAR_PLUS = np.array([[1.37142144144080, 1.0], [-0.64, 0.0]])
B_TILDE = np.array([1525.26226128059, -615.02768162765])
C_GOLDEN = np.array([-0.13522424749438, -0.08697583293619])
D_GOLDEN = 259.7449864016200

SWEEP_RPM = (640.0, 700.0)
CHATTER_RPM = 183.0


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def rel(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)) / np.abs(np.asarray(b))))


# --- golden-matrix suite ------------------------------------------------------

def test_criterion_01_eigenvalues(capsys, golden_map):
    r = classify(golden_map)
    ev_m = np.sort(r.eigenvalues_minus.real)[::-1]
    ev_p = sorted(r.eigenvalues_plus, key=lambda z: -z.imag)
    err = max(np.max(np.abs(ev_m - np.array(EIG_MINUS))),
              abs(ev_p[0] - EIG_PLUS), abs(ev_p[1] - np.conj(EIG_PLUS)))
    runtime = min(timeit.repeat(lambda: classify(golden_map), number=1, repeat=50))
    ok = err <= 1e-3 and np.all(np.abs(r.eigenvalues_minus.imag) == 0) and runtime < 1e-3
    report(capsys, 1, ok, f"eigenvalue error {err:.2e} (tol 1e-3), runtime {runtime * 1e3:.3f} ms")


def test_criterion_02_canonical_form(capsys, golden_map):
    cm = canonicalize(golden_map)
    ea = max(np.max(np.abs(cm.A_bar_minus - A_BAR_MINUS)), np.max(np.abs(cm.A_bar_plus - A_BAR_PLUS)))
    eb = rel(cm.B_tilde, B_TILDE)
    report(capsys, 2, ea <= 1e-9 and eb <= 1e-6,
           f"A_bar max entry error {ea:.2e} (tol 1e-9), B_tilde relative error {eb:.2e} (tol 1e-6)")


def test_criterion_03_fold_and_local_diagram(capsys, golden_map):
    verdict = classify(golden_map).verdict
    d = iterate_local_map(golden_map, (-1e-4, 1e-4), n_points=21)
    pos = [d.admissible(t) for t in d.delta_T if t > 0]
    neg = [d.admissible(t) for t in d.delta_T if t < 0]
    pos_ok = all(len(a) == 2 and sum(f.stable for f in a) == 1 for a in pos)
    neg_ok = all(a == [] for a in neg)
    escape = all(esc for t, _, esc in d.orbits if t < 0)
    ok = verdict == FOLD and pos_ok and neg_ok and escape
    report(capsys, 3, ok, f"verdict {verdict}; dT>0: two admissible, one stable = {pos_ok}; "
                          f"dT<0: none admissible = {neg_ok}, iterates escape = {escape}")


def test_criterion_04_continuity(capsys, golden_map):
    c = (golden_map.A_plus - golden_map.A_minus)[0]
    d = float((golden_map.B_plus - golden_map.B_minus)[0])
    ec = float(np.max(np.abs(c - C_GOLDEN)))
    ed = abs(d - D_GOLDEN) / abs(D_GOLDEN)
    report(capsys, 4, ec <= 1e-8 and ed <= 1e-6,
           f"|h(A+ - A-) - C| = {ec:.2e} (tol 1e-8), relative D error {ed:.2e} (tol 1e-6)")


# --- reference-scenario property suite ---------------------------------------

def test_criterion_05_numerical_estimate(capsys, scenario):
    tic = time.perf_counter()
    ctx = solve_fixed_point(scenario, rpm_to_rad(673.0))
    m = build_local_map(ctx)
    est = estimate_map_numerically(ctx, M=60, perturbation_scale=1e-6, seed=0)
    runtime = time.perf_counter() - tic
    disc = est.discrepancy(m)["max"]
    report(capsys, 5, disc <= 1e-5 and runtime < 30.0,
           f"max relative entry discrepancy {disc:.2e} (tol 1e-5), runtime {runtime:.1f} s")


def test_criterion_06_one_sided_differences(capsys, scenario, corner_context, derived_map):
    ctx = corner_context
    z0 = np.array([*ctx.x_star, ctx.T_star])
    scale = np.array([abs(z0[0]), abs(z0[0]), z0[2]])

    def F(z):
        xf, tr = period_map(z[:2], -0.5 * z[2], ctx.cam(z[2]), scenario.params, scenario.config)
        if len(tr.impacts) != 1:
            raise AssertionError(f"{len(tr.impacts)} impacts in one period")
        return xf, tr.impacts[0].t

    F0, _ = F(z0)
    worst = 0.0
    for side in ("minus", "plus"):
        A, B = derived_map.matrices(side)
        J = np.column_stack([A, B])
        for j in range(3):
            for sgn in (1.0, -1.0):
                e = np.zeros(3)
                e[j] = sgn * 1e-6 * scale[j]
                f1, t1 = F(z0 + e)
                f2, t2 = F(z0 + 2 * e)
                if (t1 < 0) == (t2 < 0) == (side == "minus"):
                    fd = (-3 * F0 + 4 * f1 - f2) / (2 * e[j])
                    worst = max(worst, rel(fd, J[:, j]))
                    break
            else:
                raise AssertionError(f"no step reaches the {side} side for column {j}")
    report(capsys, 6, worst <= 1e-5,
           f"max relative difference to event-driven one-sided differences {worst:.2e} (tol 1e-5)")


def test_criterion_07_fixed_point(capsys, scenario, corner_context):
    ctx = corner_context
    res = fixed_point_residual(ctx)
    xf, tr = period_map(ctx.x_star, -0.5 * ctx.T_star, ctx.cam(), scenario.params, scenario.config)
    e = tr.impacts[0]
    dphase = abs(ctx.omega_star * e.t)
    limit = ctx.omega_star * scenario.config.tol_event
    ok = res <= 1e-9 and len(tr.impacts) == 1 and dphase <= limit and e.at_corner
    report(capsys, 7, ok, f"fixed-point residual {res:.2e} (tol 1e-9), impact phase offset from "
                          f"corner {dphase:.2e} rad (limit {limit:.2e})")


def test_criterion_08_determinant_identity(capsys):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        sc, T = random_corner_scenario(rng)
        ctx = solve_fixed_point(sc, 2 * np.pi / T)
        m = build_local_map(ctx)
        p = sc.params
        target = p.restitution ** 2 * np.exp(-2 * p.zeta * ctx.T_star)
        for A in (m.A_minus, m.A_plus):
            worst = max(worst, abs(np.linalg.det(A) - target) / target)
    report(capsys, 8, worst <= 1e-9,
           f"max relative |det A - r^2 exp(-2 zeta T*)| over 20 random scenarios {worst:.2e} (tol 1e-9)")


def test_criterion_09_flight_and_restitution(capsys, scenario, corner_context):
    worst = 0.0
    for p in (scenario.params, PhysicalParams(1.3, 4.0, 900.0, 9.81, 0.7)):
        T = corner_context.T_star
        s0 = FollowerState(0.2, -3.0)
        sol = solve_ivp(lambda t, y: [y[1], (-p.damping * y[1] - p.stiffness * y[0]
                                             - p.mass * p.gravity) / p.mass],
                        (0.0, T), [s0.q, s0.qdot], method="DOP853", rtol=1e-13, atol=1e-15,
                        dense_output=True)
        for t in np.linspace(0.0, T, 21)[1:]:
            s = free_flight(p, s0, t)
            ref = sol.sol(t)
            worst = max(worst, float(np.linalg.norm([s.q, s.qdot] - ref) / np.linalg.norm(ref)))
    n, exact = 0, True
    for rpm in (CHATTER_RPM, 670.0):
        cam = scenario.cam(rpm_to_rad(rpm))
        c = cam.state(0.0)
        tr = simulate(FollowerState(c.position, c.velocity), 0.0, 20 * cam.period, cam,
                      scenario.params, scenario.config)
        for e in tr.impacts:
            n += 1
            exact &= e.post_velocity == impact_velocity(scenario.params, e.pre_velocity, e.cam_velocity)
    report(capsys, 9, worst <= 1e-8 and exact and n > 0,
           f"free flight vs DOP853 max relative error {worst:.2e} (tol 1e-8); "
           f"restitution law exact on {n} impacts = {exact}")


def detachment_speed(scenario):
    """Lowest speed at which the contact force needed for permanent contact turns negative."""
    g, p = scenario.geometry, scenario.params

    def min_force(w):
        lo = np.inf
        for piece in range(N_PIECES):
            th = np.linspace(g.boundaries[piece], g.boundaries[piece + 1], 2001)
            c, d1, d2 = piece_derivatives(g, piece, th)
            lo = min(lo, float(np.min(contact_force_from_cam(p, c, w * d1, w * w * d2))))
        return lo

    return brentq(min_force, 1.0, rpm_to_rad(CHATTER_RPM), xtol=1e-12)


def test_criterion_10_phenomenology(capsys, scenario, corner_context):
    p = scenario.params
    w_det = detachment_speed(scenario)
    notes = [f"detachment at {w_det * 60 / (2 * np.pi):.3f} rpm"]

    def run(w, periods):
        cam = scenario.cam(w)
        c = cam.state(0.0)
        return cam, simulate(FollowerState(c.position, c.velocity), 0.0, periods * cam.period,
                             cam, p, scenario.config)

    _, below = run(0.98 * w_det, 20)
    _, above = run(1.02 * w_det, 20)
    sticking_only = not below.impacts and len(below.sticking) == 1 and bool(above.impacts)
    notes.append(f"sticking-only below = {sticking_only}")

    cam, tr = run(rpm_to_rad(CHATTER_RPM), 12)
    per_period = len(tr.impacts_between(10 * cam.period, 11 * cam.period))
    start = tr.sticking[-1][0]
    seq = [e.t for e in tr.impacts if e.t <= start][-6:]
    gaps = np.diff(seq)
    ratios = gaps[1:] / gaps[:-1]
    chatter = per_period > 10 and bool(np.all(np.abs(ratios / p.restitution - 1.0) <= 0.2))
    notes.append(f"chattering at {CHATTER_RPM:g} rpm: {per_period} impacts/period, "
                 f"gap ratios {np.round(ratios, 4).tolist()}")

    tic = time.perf_counter()
    diagram = scan(ScanConfig(*SWEEP_RPM, 200), scenario)
    crossings = locate_corner_crossing(diagram, scenario)
    runtime = time.perf_counter() - tic
    w_star = corner_context.omega_star * 60 / (2 * np.pi)
    near = [c for c in crossings if abs(c.corner_phase - corner_context.corner_phase) < 1e-12]
    agree = bool(near) and abs(near[0].omega_rpm - w_star) / w_star <= 1e-6
    w_c = near[0].omega_rpm if near else np.nan
    recs = diagram.sorted().records
    split = (all(r.is_period1_single_impact for r in recs if r.omega_rpm > w_c)
             and all(r.period is None and r.n_impacts > 0 for r in recs if r.omega_rpm < w_c))
    notes.append(f"corner crossing {w_c:.9f} rpm vs derived {w_star:.9f} rpm, "
                 f"period-1 above / aperiodic below = {split}, "
                 f"200-point sweep {runtime:.0f} s")
    ok = sticking_only and chatter and agree and split and runtime < 300.0
    report(capsys, 10, ok, "; ".join(notes))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
