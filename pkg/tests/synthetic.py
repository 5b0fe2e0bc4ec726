"""Random valid scenarios with a corner-impact orbit at a chosen period.

The corner fixed point depends on the cam only through its velocity at
the corner, so the period, the physical parameters and the slope-to-lift
ratio fix the corner lift.  The cam is then built around that corner.
"""

from __future__ import annotations

import math

import numpy as np

from camimpact.cam import TWO_PI, CamGeometry, GeometryError
from camimpact.corner_map import CornerMapError, fixed_point_for_period
from camimpact.follower import FollowerState, PhysicalParams, flow_operator
from camimpact.scenario import Scenario
from camimpact.simulator import SimConfig


class _Probe:
    def __init__(self, params, slope_t):
        self.params = params
        self._y = np.array([0.0, slope_t])

    def y0(self, T):
        return self._y


def random_corner_scenario(rng: np.random.Generator, max_tries: int = 500):
    """Return ``(scenario, T_star)`` for a random valid corner orbit."""
    for _ in range(max_tries):
        mass = rng.uniform(0.5, 2.0)
        omega0 = rng.uniform(20.0, 50.0)
        zeta = rng.uniform(0.0, 0.1) * omega0
        params = PhysicalParams(mass, 2.0 * zeta * mass, mass * omega0 ** 2,
                                rng.uniform(5.0, 15.0), rng.uniform(0.3, 0.95))
        T = rng.uniform(0.05, 0.15)
        omega = TWO_PI / T
        corner_phase = rng.uniform(0.4, 0.85) * math.pi
        ratio = rng.uniform(0.6, 1.8)
        try:
            x = fixed_point_for_period(_Probe(params, 1.0), T)
        except CornerMapError:
            continue
        beta = float((flow_operator(params, 0.5 * T) @ x)[0])
        den = beta * omega * ratio - 1.0
        if den <= 0.0:
            continue
        lift = params.offset / den
        slope = ratio * lift
        qd_t = float((flow_operator(params, 0.5 * T) @ (x * omega * slope))[1])
        if not qd_t < omega * slope:
            continue
        try:
            geom = CamGeometry.from_corner_kinematics(
                corner_phase, lift, slope, rng.uniform(0.3, 2.5) * lift,
                -rng.uniform(3.0, 12.0) * lift)
        except (GeometryError, ValueError):
            continue
        sc = Scenario(params, geom, corner_phase, SimConfig(),
                      FollowerState(0.0, 0.0), "<synthetic>")
        return sc, T
    raise RuntimeError("no valid random scenario found")
