"""Scenario files: physical parameters, cam geometry and solver settings.

A scenario is an INI file with the sections ``[units]``, ``[physical]``,
``[cam]``, ``[simulation]`` and an optional ``[initial]``.  Speeds are in
rpm, everything else in SI units.  Validation errors carry the file name
and line number of the offending entry.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .cam import CamDrive, CamGeometry, GeometryError
from .follower import FollowerState, PhysicalParams
from .simulator import SimConfig

PHYSICAL_KEYS = ("mass", "damping", "stiffness", "gravity", "restitution")
CAM_KEYS = ("kappa1", "kappa2", "rho0", "rho1", "rho2", "rho3",
            "theta1", "theta2", "theta3")
SIM_KEYS = {"tol_event": float, "tol_pen": float, "eps_stick_v": float,
            "max_impacts_per_period": int, "strobe_phase": float,
            "grid_per_period": int}
EXPECTED_UNITS = {"speed": "rpm", "other": "SI"}


class ScenarioError(ValueError):
    """A scenario file could not be read or failed validation."""


@dataclass(frozen=True)
class Scenario:
    params: PhysicalParams
    geometry: CamGeometry
    phase_offset: float
    config: SimConfig
    initial: FollowerState
    source: str = "<memory>"

    def cam(self, omega: float) -> CamDrive:
        """Cam turning at ``omega`` rad/s with the corner at ``t = 0``."""
        return CamDrive(self.geometry, omega, self.phase_offset)

    def as_dict(self) -> dict:
        return {
            "physical": self.params.as_dict(),
            "cam": {**self.geometry.as_dict(), "phase_offset": self.phase_offset},
            "simulation": self.config.as_dict(),
            "initial": {"q": self.initial.q, "qdot": self.initial.qdot},
            "units": dict(EXPECTED_UNITS),
        }


def _line_index(text: str) -> dict:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    index = {}
    section = None
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            index[(section, None)] = no
            continue
        m = re.match(r"^([^=:#;]+?)\s*[=:]", s)
        if m and section is not None:
            index[(section, m.group(1).strip().lower())] = no
    return index


def parse_scenario(text: str, source: str = "<memory>") -> Scenario:
    """Parse and validate scenario text."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ScenarioError(f"{source}: {exc}") from exc
    lines = _line_index(text)

    def where(section, key=None):
        no = lines.get((section, key)) or lines.get((section, None))
        return f"{source}:{no}" if no else source

    def need_section(name):
        if not cp.has_section(name):
            raise ScenarioError(f"{source}: missing section [{name}]")
        return cp[name]

    def number(section, key, cast=float, default=None):
        sec = cp[section] if cp.has_section(section) else {}
        if key not in sec:
            if default is not None:
                return default
            raise ScenarioError(f"{where(section)}: [{section}] missing key '{key}'")
        raw = sec[key]
        try:
            val = cast(raw)
        except ValueError:
            raise ScenarioError(
                f"{where(section, key)}: [{section}] {key} = {raw!r} is not a valid "
                f"{cast.__name__}") from None
        if isinstance(val, float) and not math.isfinite(val):
            raise ScenarioError(f"{where(section, key)}: [{section}] {key} must be finite")
        return val

    def check_unknown(section, allowed):
        if cp.has_section(section):
            for key in cp[section]:
                if key not in allowed:
                    raise ScenarioError(f"{where(section, key)}: [{section}] unknown key '{key}'")

    if cp.has_section("units"):
        check_unknown("units", EXPECTED_UNITS)
        for key, expected in EXPECTED_UNITS.items():
            got = cp["units"].get(key, expected)
            if got.strip() != expected:
                raise ScenarioError(
                    f"{where('units', key)}: [units] {key} must be '{expected}', got '{got}'")

    need_section("physical")
    check_unknown("physical", PHYSICAL_KEYS)
    phys = {k: number("physical", k) for k in PHYSICAL_KEYS}
    try:
        params = PhysicalParams(**phys)
    except ValueError as exc:
        raise ScenarioError(f"{where('physical')}: [physical] {exc}") from None

    need_section("cam")
    check_unknown("cam", CAM_KEYS + ("phase_offset",))
    cam_vals = {k: number("cam", k) for k in CAM_KEYS}
    phase_offset = number("cam", "phase_offset", default=0.0)
    try:
        geom = CamGeometry(**cam_vals)
    except GeometryError as exc:
        raise ScenarioError(f"{where('cam')}: [cam] {exc}") from None

    check_unknown("simulation", SIM_KEYS)
    defaults = SimConfig()
    sim = {k: number("simulation", k, cast, getattr(defaults, k)) for k, cast in SIM_KEYS.items()}
    try:
        config = SimConfig(**sim)
    except ValueError as exc:
        raise ScenarioError(f"{where('simulation')}: [simulation] {exc}") from None

    check_unknown("initial", ("q", "qdot"))
    if cp.has_section("initial"):
        initial = FollowerState(number("initial", "q"), number("initial", "qdot"))
    else:
        omega_ref = 1.0
        c = CamDrive(geom, omega_ref, phase_offset).state(config.strobe_phase / omega_ref)
        initial = FollowerState(c.position, 0.0)
    return Scenario(params, geom, phase_offset, config, initial, source)


def load_scenario(path) -> Scenario:
    """Read a scenario file.

    Raises
    ------
    ScenarioError
        If the file is missing, malformed or violates a model invariant.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"{p}: cannot read scenario ({exc.strerror})") from None
    return parse_scenario(text, str(p))


def reference_scenario_path() -> Path:
    return Path(str(resources.files("camimpact") / "data" / "reference.ini"))


def reference_scenario() -> Scenario:
    """The scenario shipped with the package."""
    return load_scenario(reference_scenario_path())


def format_scenario(s: Scenario) -> str:
    """Serialise a scenario to INI text with round-trip precision."""
    d = s.as_dict()
    out = []
    for section in ("units", "physical", "cam", "simulation", "initial"):
        out.append(f"[{section}]")
        for k, v in d[section].items():
            out.append(f"{k} = {v!r}" if not isinstance(v, str) else f"{k} = {v}")
        out.append("")
    return "\n".join(out)


__all__ = ["Scenario", "ScenarioError", "load_scenario", "parse_scenario",
           "reference_scenario", "reference_scenario_path", "format_scenario"]
