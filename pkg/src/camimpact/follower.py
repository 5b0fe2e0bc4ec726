"""Follower dynamics: closed-form free flight, impact law and contact force.

In free flight the follower obeys ``m q'' + b q' + k q = -m g``.  Working in
the shifted state ``x = [q + g/omega0**2, q']`` removes the constant forcing
so that the flow is linear, ``x(t) = phi_t x(0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cam import CamGeometry, CamState, eval_acceleration, eval_state


class ContactError(RuntimeError):
    """The impact law was applied to a follower that is not on the cam."""


@dataclass(frozen=True)
class PhysicalParams:
    """Mass-spring-damper follower with a restitution coefficient.

    Parameters
    ----------
    mass, damping, stiffness : float
        ``m``, ``b`` and ``k`` of the follower.
    gravity : float
        Gravitational acceleration acting against the lift.
    restitution : float
        Newton restitution coefficient ``r`` in ``[0, 1]``.
    """

    mass: float
    damping: float
    stiffness: float
    gravity: float
    restitution: float

    def __post_init__(self) -> None:
        for name in ("mass", "damping", "stiffness", "gravity", "restitution"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.mass <= 0.0 or self.stiffness <= 0.0 or self.gravity <= 0.0:
            raise ValueError("mass, stiffness and gravity must be positive")
        if self.damping < 0.0:
            raise ValueError("damping must be non-negative")
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution must lie in [0, 1]")
        if not self.zeta < self.omega0:
            raise ValueError("follower must be underdamped (zeta < omega0)")

    @property
    def zeta(self) -> float:
        return self.damping / (2.0 * self.mass)

    @property
    def omega0(self) -> float:
        return math.sqrt(self.stiffness / self.mass)

    @property
    def omega_s(self) -> float:
        return math.sqrt(self.omega0 ** 2 - self.zeta ** 2)

    @property
    def offset(self) -> float:
        """Static deflection ``g / omega0**2`` used by the state shift."""
        return self.gravity / self.omega0 ** 2

    @property
    def restitution_matrix(self) -> np.ndarray:
        return np.array([[0.0, 0.0], [0.0, -(1.0 + self.restitution)]])

    def system_matrix(self) -> np.ndarray:
        return np.array([[0.0, 1.0], [-self.omega0 ** 2, -2.0 * self.zeta]])

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "mass", "damping", "stiffness", "gravity", "restitution")}


@dataclass(frozen=True)
class FollowerState:
    """Follower position and velocity (unshifted)."""

    q: float
    qdot: float

    def shifted(self, params: PhysicalParams) -> np.ndarray:
        return np.array([self.q + params.offset, self.qdot])

    @classmethod
    def from_shifted(cls, x, params: PhysicalParams) -> "FollowerState":
        return cls(float(x[0]) - params.offset, float(x[1]))


def flow_entries(params: PhysicalParams, t):
    """Entries ``(p11, p12, p21, p22)`` of the flow operator, vectorised in ``t``."""
    t = np.asarray(t, dtype=float)
    z, ws, w0 = params.zeta, params.omega_s, params.omega0
    e = np.exp(-z * t) / ws
    s, c = np.sin(ws * t), np.cos(ws * t)
    return (e * (ws * c + z * s), e * s, -e * w0 * w0 * s, e * (ws * c - z * s))


def flow_operator(params: PhysicalParams, t: float) -> np.ndarray:
    """State transition matrix ``phi_t`` of the shifted free flight."""
    p11, p12, p21, p22 = flow_entries(params, float(t))
    return np.array([[p11, p12], [p21, p22]])


def flow_operator_time_derivative(params: PhysicalParams, t: float) -> np.ndarray:
    """``d phi_t / dt`` by the product rule on the closed form."""
    z, ws, w0 = params.zeta, params.omega_s, params.omega0
    t = float(t)
    e = math.exp(-z * t) / ws
    s, c = math.sin(ws * t), math.cos(ws * t)
    m = np.array([[ws * c + z * s, s], [-w0 * w0 * s, ws * c - z * s]])
    dm = np.array([[-ws * ws * s + z * ws * c, ws * c],
                   [-w0 * w0 * ws * c, -ws * ws * s - z * ws * c]])
    return e * (dm - z * m)


def free_flight(params: PhysicalParams, state: FollowerState, t: float) -> FollowerState:
    """Exact free-flight solution after time ``t``."""
    x = flow_operator(params, t) @ state.shifted(params)
    return FollowerState.from_shifted(x, params)


def impact_velocity(params: PhysicalParams, pre: float, cam_velocity: float) -> float:
    """Post-impact velocity from the restitution law."""
    r = params.restitution
    return (1.0 + r) * cam_velocity - r * pre


def apply_impact(params: PhysicalParams, state: FollowerState, cam: CamState,
                 tol_pen: float = 1e-9) -> FollowerState:
    """Instantaneous impact of the follower on the cam.

    Raises
    ------
    ContactError
        If the follower is further than ``tol_pen`` from the cam.
    """
    gap = state.q - cam.position
    if not abs(gap) <= tol_pen:
        raise ContactError(f"impact requested with gap {gap!r} (tolerance {tol_pen!r})")
    return FollowerState(state.q, impact_velocity(params, state.qdot, cam.velocity))


def contact_force_from_cam(params: PhysicalParams, c, c_t, c_tt):
    """Normal force needed to keep the follower on a cam with given kinematics."""
    return (params.mass * c_tt + params.damping * c_t + params.stiffness * c
            + params.mass * params.gravity)


def contact_force(params: PhysicalParams, geom: CamGeometry, t: float, omega: float,
                  side: str = "right", phase_offset: float = 0.0) -> float:
    """Contact force ``N = m c'' + b c' + k c + m g`` for persistent contact.

    ``side`` picks the one-sided acceleration at a joint.  A negative value
    means the cam would have to pull on the follower, so contact is lost.
    """
    cs = eval_state(geom, t, omega, phase_offset)
    acc = eval_acceleration(geom, t, omega, side, phase_offset)
    return float(contact_force_from_cam(params, cs.position, cs.velocity, acc))


def shifted_energy(params: PhysicalParams, x) -> float:
    """Mechanical energy per unit mass of the shifted oscillator."""
    x = np.asarray(x, dtype=float)
    return 0.5 * (x[1] ** 2 + params.omega0 ** 2 * x[0] ** 2)
