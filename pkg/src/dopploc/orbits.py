"""Classical orbital elements and their Cartesian conversion.

Angles are degrees, normalized to [0, 360). Only bound elliptic orbits are
supported. Conventions for the singular cases: an equatorial orbit reports
RAAN = 0 with the node direction taken along +x, and a circular orbit
reports argument of periapsis = 0 with the anomaly measured from the node
(or from +x when also equatorial).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateOrbitError, HyperbolicOrbitError

__all__ = [
    "OrbitalElements",
    "elements_to_cartesian",
    "cartesian_to_elements",
    "EARTH_MU",
    "EARTH_RADIUS",
    "EARTH_ROTATION_RATE",
    "SPEED_OF_LIGHT",
]

# standard constants (SI)
EARTH_MU = 3.986004418e14  # m^3/s^2
EARTH_RADIUS = 6_378_137.0  # m, spherical model
EARTH_ROTATION_RATE = 7.2921159e-5  # rad/s
SPEED_OF_LIGHT = 299_792_458.0  # m/s

# below these, the orbit is treated as circular / equatorial for the
# singular-element conventions
_CIRCULAR_TOL = 1e-11
_EQUATORIAL_TOL = 1e-11


def _norm_deg(angle: float) -> float:
    out = float(angle) % 360.0
    return out if out != 360.0 else 0.0


@dataclass(frozen=True)
class OrbitalElements:
    """a (length), e, and the four angles in degrees: inclination, RAAN,
    argument of periapsis, true anomaly."""

    a: float
    e: float
    inc: float
    raan: float
    argp: float
    nu: float

    def __post_init__(self):
        if not np.isfinite(self.a) or self.a <= 0:
            raise ValueError(f"semi-major axis must be positive, got {self.a}")
        if self.e < 0 or not np.isfinite(self.e):
            raise ValueError(f"eccentricity must be non-negative, got {self.e}")
        if self.e >= 1.0:
            raise HyperbolicOrbitError(f"only elliptic orbits supported, got e = {self.e}")
        for name in ("inc", "raan", "argp", "nu"):
            object.__setattr__(self, name, _norm_deg(getattr(self, name)))


def _rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def elements_to_cartesian(el: OrbitalElements, mu: float):
    """Inertial position and velocity from elements (perifocal frame rotated
    by RAAN, inclination, argument of periapsis)."""
    if mu <= 0:
        raise ValueError("gravitational parameter must be positive")
    inc, raan, argp, nu = np.radians([el.inc, el.raan, el.argp, el.nu])
    p = el.a * (1.0 - el.e * el.e)
    r_mag = p / (1.0 + el.e * np.cos(nu))
    r_pf = r_mag * np.array([np.cos(nu), np.sin(nu), 0.0])
    v_pf = np.sqrt(mu / p) * np.array([-np.sin(nu), el.e + np.cos(nu), 0.0])
    rot = _rot_z(raan) @ _rot_x(inc) @ _rot_z(argp)
    return rot @ r_pf, rot @ v_pf


def cartesian_to_elements(r, v, mu: float) -> OrbitalElements:
    """Elements from inertial position and velocity; inverse of
    elements_to_cartesian on its image.

    Raises DegenerateOrbitError for (near-)zero angular momentum and
    HyperbolicOrbitError for unbound states.
    """
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    if mu <= 0:
        raise ValueError("gravitational parameter must be positive")
    r_mag = float(np.linalg.norm(r))
    v_mag = float(np.linalg.norm(v))
    if r_mag == 0.0:
        raise DegenerateOrbitError("position at the focus")
    h = np.cross(r, v)
    h_mag = float(np.linalg.norm(h))
    if h_mag <= 1e-12 * max(r_mag * v_mag, 1e-300):
        raise DegenerateOrbitError("zero angular momentum (rectilinear trajectory)")
    energy = 0.5 * v_mag * v_mag - mu / r_mag
    if energy >= 0.0:
        raise HyperbolicOrbitError("state is not a bound orbit")
    a = -mu / (2.0 * energy)
    e_vec = ((v_mag * v_mag - mu / r_mag) * r - float(r @ v) * v) / mu
    e = float(np.linalg.norm(e_vec))
    if e >= 1.0:
        raise HyperbolicOrbitError(f"eccentricity {e} is not elliptic")
    inc = np.degrees(np.arccos(np.clip(h[2] / h_mag, -1.0, 1.0)))

    node = np.array([-h[1], h[0], 0.0])  # z cross h
    node_mag = float(np.linalg.norm(node))
    equatorial = node_mag <= _EQUATORIAL_TOL * h_mag
    circular = e <= _CIRCULAR_TOL

    if equatorial:
        raan = 0.0
        node_dir = np.array([1.0, 0.0, 0.0])
    else:
        raan = np.degrees(np.arctan2(node[1], node[0]))
        node_dir = node / node_mag

    if circular:
        argp = 0.0
        periapsis_dir = node_dir
    else:
        e_dir = e_vec / e
        cos_w = np.clip(node_dir @ e_dir, -1.0, 1.0)
        argp = np.degrees(np.arccos(cos_w))
        # periapsis below the node plane flips the angle
        if equatorial:
            if e_vec[1] < 0.0:
                argp = 360.0 - argp
        elif e_vec[2] < 0.0:
            argp = 360.0 - argp
        periapsis_dir = e_dir

    cos_nu = np.clip(periapsis_dir @ (r / r_mag), -1.0, 1.0)
    nu = np.degrees(np.arccos(cos_nu))
    if circular:
        # measure from the node; sign from the latitude rate
        ref = np.cross(h / h_mag, periapsis_dir)
        if (r @ ref) < 0.0:
            nu = 360.0 - nu
    elif float(r @ v) < 0.0:
        nu = 360.0 - nu
    return OrbitalElements(a=a, e=e, inc=inc, raan=raan, argp=argp, nu=nu)
