"""Piecewise cam lift profile built from circular arcs.

Over half a revolution the profile runs through four arcs: base circle,
flank, nose and top dwell.  The second half mirrors the first, so
``c(2*pi - theta) = c(theta)``.  Lift and slope are continuous everywhere
while the second derivative jumps at every joint between arcs.  These
jumps are the corners that drive the border-collision bifurcations
studied elsewhere in the package.

Phase-domain derivatives are written with a ``_th`` suffix, time-domain
derivatives follow from ``d/dt = omega * d/dtheta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

TWO_PI = 2.0 * math.pi

# Formula used on each of the eight pieces of [0, 2*pi): base, flank, nose,
# dwell, then the mirrored dwell, nose, flank and base.
PIECE_FORMULA = (0, 1, 2, 3, 3, 2, 1, 0)
PIECE_NAMES = ("base", "flank", "nose", "dwell",
               "dwell_mirror", "nose_mirror", "flank_mirror", "base_mirror")
N_PIECES = 8


class GeometryError(ValueError):
    """Raised when a cam geometry violates its construction invariants."""


@dataclass(frozen=True)
class CamState:
    """Cam contact point position and velocity at one instant."""

    position: float
    velocity: float


@dataclass(frozen=True)
class CamGeometry:
    """Arc-based cam geometry.

    Parameters
    ----------
    kappa1, kappa2 : float
        Distances from the cam centre to the flank and nose arc centres.
    rho0, rho1, rho2, rho3 : float
        Radii of the base circle, flank arc, nose arc and top dwell.
    theta1, theta2, theta3 : float
        Angular positions (rad) of the base/flank, flank/nose and nose/dwell
        joints.  The joints sit at phases ``pi/2 - theta_i``.

    Notes
    -----
    The ordering ``-pi/2 <= theta3 < theta2 < theta1 < pi/2`` is required.
    A negative ``theta3`` places the nose/dwell joint past the quarter
    revolution, which is needed for cams whose nose sweeps more than a
    right angle.
    """

    kappa1: float
    kappa2: float
    rho0: float
    rho1: float
    rho2: float
    rho3: float
    theta1: float
    theta2: float
    theta3: float
    boundaries: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        vals = (self.kappa1, self.kappa2, self.rho0, self.rho1, self.rho2,
                self.rho3, self.theta1, self.theta2, self.theta3)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError("cam geometry values must be finite")
        if min(self.kappa1, self.kappa2, self.rho0, self.rho1, self.rho2,
               self.rho3) <= 0.0:
            raise GeometryError("cam lengths must be positive")
        if not (-0.5 * math.pi <= self.theta3 < self.theta2 < self.theta1
                < 0.5 * math.pi):
            raise GeometryError(
                "joint angles must satisfy -pi/2 <= theta3 < theta2 < theta1 < pi/2, "
                f"got theta1={self.theta1!r}, theta2={self.theta2!r}, theta3={self.theta3!r}")
        if not self.rho0 < self.rho3:
            raise GeometryError(
                f"rho0 must be smaller than rho3 (lift has to rise), got {self.rho0!r} >= {self.rho3!r}")
        half = 0.5 * math.pi
        b1, b2, b3 = half - self.theta1, half - self.theta2, half - self.theta3
        bp = (0.0, b1, b2, b3, math.pi,
              TWO_PI - b3, TWO_PI - b2, TWO_PI - b1, TWO_PI)
        object.__setattr__(self, "boundaries", bp)
        self._check_arcs()
        self._check_joints()

    def _check_arcs(self) -> None:
        # Square-root arguments must stay positive on each arc.
        for k in (1, 2):
            lo, hi = self.boundaries[k], self.boundaries[k + 1]
            th = np.linspace(lo, hi, 257)
            rho, kap, ang = self._arc(k)
            arg = rho * rho - (kap * np.cos(th + ang)) ** 2
            if np.any(arg <= 0.0):
                raise GeometryError(f"arc {PIECE_NAMES[k]} is not a valid circle over its span")

    def _check_joints(self) -> None:
        scale = self.rho0
        for j in (1, 2, 3):
            th = self.boundaries[j]
            left = _formula(self, PIECE_FORMULA[j - 1], np.asarray(th))
            right = _formula(self, PIECE_FORMULA[j], np.asarray(th))
            if abs(float(left[0] - right[0])) > 1e-12 * scale:
                raise GeometryError(
                    f"lift is discontinuous at joint {j} (phase {th!r}): "
                    f"{float(left[0])!r} vs {float(right[0])!r}")
            if abs(float(left[1] - right[1])) > 1e-9 * scale:
                raise GeometryError(
                    f"slope is discontinuous at joint {j} (phase {th!r}): "
                    f"{float(left[1])!r} vs {float(right[1])!r}")
        jumps = [abs(j) for _, j in discontinuity_phases(self)]
        if not jumps:
            raise GeometryError("profile has no acceleration jump, there is no corner")

    def _arc(self, k: int) -> tuple[float, float, float]:
        if k == 1:
            return self.rho1, self.kappa1, self.theta1
        return self.rho2, self.kappa2, self.theta3

    @property
    def joint_phases(self) -> tuple[float, float, float]:
        """Phases of the base/flank, flank/nose and nose/dwell joints."""
        return self.boundaries[1], self.boundaries[2], self.boundaries[3]

    @property
    def lift_range(self) -> float:
        return self.rho3 - self.rho0

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "kappa1", "kappa2", "rho0", "rho1", "rho2", "rho3",
            "theta1", "theta2", "theta3")}

    @classmethod
    def from_design(cls, rho0: float, rho2: float, rho3: float,
                    theta1: float, theta3: float) -> "CamGeometry":
        """Build a tangent-arc cam from base, nose and dwell data.

        The flank arc is sized so it is tangent to the base circle at
        ``pi/2 - theta1`` and to the nose arc; the flank/nose joint angle
        follows from that tangency.
        """
        kappa2 = rho3 - rho2
        a = rho0 - rho2
        delta = theta1 - theta3
        den = 2.0 * (kappa2 * math.cos(delta) - a)
        if den == 0.0:
            raise GeometryError("flank arc radius is undefined for this design")
        kappa1 = (a * a - kappa2 * kappa2) / den
        if kappa1 <= 0.0:
            raise GeometryError("design has no convex flank arc")
        rho1 = rho0 + kappa1
        gamma1 = -theta1 - 0.5 * math.pi
        gamma2 = 0.5 * math.pi - theta3
        o1 = kappa1 * np.array([math.cos(gamma1), math.sin(gamma1)])
        o2 = kappa2 * np.array([math.cos(gamma2), math.sin(gamma2)])
        d = o2 - o1
        tangency = o1 + rho1 * d / np.linalg.norm(d)
        theta2 = 0.5 * math.pi - math.atan2(tangency[1], tangency[0])
        return cls(kappa1, kappa2, rho0, rho1, rho2, rho3, theta1, theta2, theta3)

    @classmethod
    def from_corner_kinematics(cls, corner_phase: float, lift: float,
                               slope: float, accel_flank: float,
                               accel_nose: float) -> "CamGeometry":
        """Build the cam whose flank/nose joint has prescribed kinematics.

        Parameters
        ----------
        corner_phase : float
            Phase of the flank/nose joint on the rising side.
        lift, slope : float
            ``c`` and ``dc/dtheta`` at the joint.
        accel_flank, accel_nose : float
            One-sided ``d2c/dtheta2`` on the flank and nose sides.

        Both arcs are the osculating circles of the polar curve at the
        joint.  The base circle and top dwell then follow from tangency, so
        the whole profile is fixed once the joint phase is chosen.
        """
        r, rp = lift, slope
        p = r * np.array([math.cos(corner_phase), math.sin(corner_phase)])
        tang = np.array([rp * math.cos(corner_phase) - r * math.sin(corner_phase),
                         rp * math.sin(corner_phase) + r * math.cos(corner_phase)])
        normal = np.array([-tang[1], tang[0]]) / np.linalg.norm(tang)
        speed3 = (r * r + rp * rp) ** 1.5
        centres, radii = [], []
        for rpp in (accel_flank, accel_nose):
            curv = (r * r + 2.0 * rp * rp - r * rpp) / speed3
            if curv <= 0.0:
                raise GeometryError("corner kinematics give a non-convex arc")
            radii.append(1.0 / curv)
            centres.append(p + normal / curv)
        (o1, o2), (rho1, rho2) = centres, radii
        kappa1, kappa2 = float(np.linalg.norm(o1)), float(np.linalg.norm(o2))
        theta1 = -math.atan2(o1[1], o1[0]) - 0.5 * math.pi
        theta3 = 0.5 * math.pi - math.atan2(o2[1], o2[0])
        theta1 = (theta1 + math.pi) % TWO_PI - math.pi
        theta3 = (theta3 + math.pi) % TWO_PI - math.pi
        theta2 = 0.5 * math.pi - corner_phase
        return cls(kappa1, kappa2, rho1 - kappa1, rho1, rho2, kappa2 + rho2,
                   theta1, theta2, theta3)


def _formula(geom: CamGeometry, k: int, theta: np.ndarray) -> tuple:
    """Lift and its first two phase derivatives for formula ``k``."""
    theta = np.asarray(theta, dtype=float)
    if k == 0 or k == 3:
        rho = geom.rho0 if k == 0 else geom.rho3
        zero = np.zeros_like(theta)
        return rho + zero, zero, zero.copy()
    if k == 1:
        kap, rho, u = geom.kappa1, geom.rho1, theta + geom.theta1
        sgn = -1.0
    else:
        kap, rho, u = geom.kappa2, geom.rho2, theta + geom.theta3
        sgn = 1.0
    s, c = np.sin(u), np.cos(u)
    root = np.sqrt(rho * rho - (kap * c) ** 2)
    s2u, c2u = 2.0 * s * c, c * c - s * s
    k2 = kap * kap
    lift = sgn * kap * s + root
    d1 = sgn * kap * c + k2 * s2u / (2.0 * root)
    d2 = -sgn * kap * s + k2 * c2u / root - k2 * k2 * s2u * s2u / (4.0 * root ** 3)
    return lift, d1, d2


def piece_derivatives(geom: CamGeometry, piece: int, theta) -> tuple:
    """Evaluate one piece's formula at arbitrary phase.

    The formula of ``piece`` is used regardless of where ``theta`` falls,
    which lets callers extend a piece past its joint.  Mirrored pieces use
    ``c(2*pi - theta)`` so the slope changes sign.

    Returns
    -------
    tuple of ndarray
        ``(c, dc/dtheta, d2c/dtheta2)``.
    """
    th = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    k = PIECE_FORMULA[piece]
    if piece >= 4:
        c, d1, d2 = _formula(geom, k, TWO_PI - th)
        return c, -d1, d2
    return _formula(geom, k, th)


def piece_index(geom: CamGeometry, theta, side: str = "right"):
    """Index of the piece containing ``theta`` (one-sided at joints)."""
    th = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    bp = np.asarray(geom.boundaries)
    if side == "right":
        idx = np.searchsorted(bp, th, side="right") - 1
    elif side == "left":
        idx = np.searchsorted(bp, th, side="left") - 1
        idx = np.where(idx < 0, N_PIECES - 1, idx)
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return np.clip(idx, 0, N_PIECES - 1)


def eval_lift(geom: CamGeometry, theta):
    """Cam lift at phase ``theta`` (any real, reduced modulo 2*pi)."""
    th = np.asarray(theta, dtype=float)
    idx = piece_index(geom, th)
    out = np.empty(np.broadcast(th).shape)
    flat_th, flat_idx, flat_out = th.reshape(-1), np.asarray(idx).reshape(-1), out.reshape(-1)
    for p in np.unique(flat_idx):
        mask = flat_idx == p
        flat_out[mask] = piece_derivatives(geom, int(p), flat_th[mask])[0]
    return float(out) if out.ndim == 0 else out


def _phase_derivs(geom: CamGeometry, theta: float, side: str) -> tuple:
    p = int(piece_index(geom, theta, side))
    return tuple(float(v) for v in piece_derivatives(geom, p, theta))


def eval_state(geom: CamGeometry, t: float, omega: float,
               phase_offset: float = 0.0) -> CamState:
    """Cam position and velocity at time ``t`` for cam speed ``omega``."""
    if not omega > 0.0:
        raise ValueError("omega must be positive")
    c, d1, _ = _phase_derivs(geom, omega * t + phase_offset, "right")
    return CamState(c, omega * d1)


def eval_acceleration(geom: CamGeometry, t: float, omega: float,
                      side: str = "left", phase_offset: float = 0.0) -> float:
    """One-sided second time derivative of the lift."""
    if not omega > 0.0:
        raise ValueError("omega must be positive")
    return omega * omega * _phase_derivs(geom, omega * t + phase_offset, side)[2]


def discontinuity_phases(geom: CamGeometry, rel_tol: float = 1e-12) -> list:
    """Phases in ``[0, 2*pi)`` where ``d2c/dtheta2`` jumps.

    Returns
    -------
    list of (float, float)
        ``(phase, jump)`` pairs sorted by phase, with
        ``jump = accel(right) - accel(left)`` in phase units.
    """
    out = []
    scale = geom.rho3
    for j in range(1, N_PIECES):
        th = geom.boundaries[j]
        left = float(piece_derivatives(geom, j - 1, th)[2])
        right = float(piece_derivatives(geom, j, th)[2])
        if abs(right - left) > rel_tol * scale:
            out.append((th, right - left))
    return out


@dataclass(frozen=True)
class CamDrive:
    """A cam geometry turning at constant speed.

    The phase at time ``t`` is ``omega * t + phase_offset``.  The piece
    schedule maps phase intervals of one revolution to the formula used
    there.  It normally follows the geometry, but :meth:`forced` can extend
    one piece across a window around a joint.
    """

    geometry: CamGeometry
    omega: float
    phase_offset: float = 0.0
    schedule: tuple = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.omega) and self.omega > 0.0):
            raise ValueError(f"omega must be positive and finite, got {self.omega!r}")
        if self.schedule is None:
            bp = self.geometry.boundaries
            object.__setattr__(self, "schedule", (tuple(bp), tuple(range(N_PIECES))))

    @property
    def period(self) -> float:
        return TWO_PI / self.omega

    def with_omega(self, omega: float) -> "CamDrive":
        return CamDrive(self.geometry, omega, self.phase_offset, self.schedule)

    def forced(self, phase: float, half_width: float, piece: int) -> "CamDrive":
        """Copy whose ``piece`` formula covers ``phase +/- half_width``."""
        lo, hi = phase - half_width, phase + half_width
        if not (0.0 < lo < hi < TWO_PI):
            raise ValueError("forced window must lie inside one revolution")
        bp, pieces = self.schedule
        new_bp, new_pieces = [0.0], []
        for a, b, p in zip(bp[:-1], bp[1:], pieces):
            for s, e, q in ((a, min(b, lo), p), (max(a, lo), min(b, hi), piece),
                            (max(a, hi), b, p)):
                if e > s:
                    if new_pieces and new_pieces[-1] == q:
                        new_bp[-1] = e
                    else:
                        new_pieces.append(q)
                        new_bp.append(e)
        return CamDrive(self.geometry, self.omega, self.phase_offset,
                        (tuple(new_bp), tuple(new_pieces)))

    def phase(self, t):
        return self.omega * np.asarray(t, dtype=float) + self.phase_offset

    def piece_at(self, t: float, side: str = "right") -> int:
        th = float(np.mod(self.omega * t + self.phase_offset, TWO_PI))
        bp, pieces = self.schedule
        if side == "right":
            j = int(np.searchsorted(bp, th, side="right")) - 1
        else:
            j = int(np.searchsorted(bp, th, side="left")) - 1
            if j < 0:
                j = len(pieces) - 1
        return pieces[min(max(j, 0), len(pieces) - 1)]

    def derivatives(self, t, piece: int | None = None, side: str = "right"):
        """Time-domain ``(c, c_t, c_tt)`` at ``t``.

        With ``piece`` given the formula of that piece is used for every
        ``t``; otherwise the schedule decides (scalar ``t`` only).
        """
        if piece is None:
            piece = self.piece_at(float(t), side)
        c, d1, d2 = piece_derivatives(self.geometry, piece, self.phase(t))
        w = self.omega
        return c, w * d1, w * w * d2

    def state(self, t: float, side: str = "right") -> CamState:
        c, v, _ = self.derivatives(t, side=side)
        return CamState(float(c), float(v))

    def acceleration(self, t: float, side: str = "right") -> float:
        return float(self.derivatives(t, side=side)[2])

    def intervals(self, t_a: float, t_b: float) -> Iterator[tuple]:
        """Yield ``(start, end, piece)`` covering ``[t_a, t_b]``.

        Each interval lies within a single piece so the lift is smooth on
        it.  Slivers shorter than ``1e-14`` periods are skipped.
        """
        w, off = self.omega, self.phase_offset
        bp, pieces = self.schedule
        min_len = 1e-14 * self.period
        th_a = w * t_a + off
        rev = math.floor(th_a / TWO_PI)
        while True:
            base = rev * TWO_PI
            for a, b, p in zip(bp[:-1], bp[1:], pieces):
                s = (base + a - off) / w
                e = (base + b - off) / w
                if e <= t_a:
                    continue
                if s >= t_b:
                    return
                s, e = max(s, t_a), min(e, t_b)
                if e - s > min_len:
                    yield s, e, p
            rev += 1
