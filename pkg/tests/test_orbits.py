"""Orbital element conversions: hand oracles, round-trips, singular cases."""

import numpy as np
import pytest

from dopploc.exceptions import DegenerateOrbitError, HyperbolicOrbitError
from dopploc.orbits import (
    EARTH_MU,
    EARTH_RADIUS,
    EARTH_ROTATION_RATE,
    SPEED_OF_LIGHT,
    OrbitalElements,
    cartesian_to_elements,
    elements_to_cartesian,
)


def test_physical_constants():
    assert EARTH_MU == pytest.approx(3.986004418e14)
    assert EARTH_RADIUS == pytest.approx(6_378_137.0)
    assert SPEED_OF_LIGHT == 299_792_458.0
    assert EARTH_ROTATION_RATE == pytest.approx(2 * np.pi / 86_164.1, rel=1e-5)


def test_circular_equatorial_hand_values():
    # circular equatorial orbit at radius a: r = (a, 0, 0), v = (0, sqrt(mu/a), 0)
    a = 7_000_000.0
    el = OrbitalElements(a=a, e=0.0, inc=0.0, raan=0.0, argp=0.0, nu=0.0)
    r, v = elements_to_cartesian(el, EARTH_MU)
    assert np.allclose(r, [a, 0.0, 0.0])
    assert np.allclose(v, [0.0, np.sqrt(EARTH_MU / a), 0.0])


def test_periapsis_and_apoapsis_speeds_vis_viva():
    a, e = 12_000_000.0, 0.3
    mu = EARTH_MU
    peri = OrbitalElements(a=a, e=e, inc=35.0, raan=80.0, argp=210.0, nu=0.0)
    r, v = elements_to_cartesian(peri, mu)
    rp = a * (1 - e)
    assert np.linalg.norm(r) == pytest.approx(rp, rel=1e-12)
    assert np.linalg.norm(v) == pytest.approx(np.sqrt(mu * (2 / rp - 1 / a)), rel=1e-12)
    assert abs(r @ v) < 1e-3 * np.linalg.norm(r) * np.linalg.norm(v)  # radial rate 0
    apo = OrbitalElements(a=a, e=e, inc=35.0, raan=80.0, argp=210.0, nu=180.0)
    r, v = elements_to_cartesian(apo, mu)
    ra = a * (1 + e)
    assert np.linalg.norm(r) == pytest.approx(ra, rel=1e-12)
    assert np.linalg.norm(v) == pytest.approx(np.sqrt(mu * (2 / ra - 1 / a)), rel=1e-12)


def test_angular_momentum_and_energy_invariants(rng):
    for _ in range(20):
        el = OrbitalElements(
            a=float(rng.uniform(7e6, 5e7)),
            e=float(rng.uniform(0, 0.9)),
            inc=float(rng.uniform(0, 180)),
            raan=float(rng.uniform(0, 360)),
            argp=float(rng.uniform(0, 360)),
            nu=float(rng.uniform(0, 360)),
        )
        r, v = elements_to_cartesian(el, EARTH_MU)
        # vis-viva at arbitrary anomaly
        assert 0.5 * v @ v - EARTH_MU / np.linalg.norm(r) == pytest.approx(
            -EARTH_MU / (2 * el.a), rel=1e-10
        )
        # h = sqrt(mu p), aligned with inclination
        h = np.cross(r, v)
        p = el.a * (1 - el.e**2)
        assert np.linalg.norm(h) == pytest.approx(np.sqrt(EARTH_MU * p), rel=1e-10)
        assert np.degrees(np.arccos(h[2] / np.linalg.norm(h))) == pytest.approx(
            el.inc, abs=1e-8
        )


def test_roundtrip_random_elliptic(rng):
    for _ in range(200):
        el = OrbitalElements(
            a=float(rng.uniform(7e6, 1e8)),
            e=float(rng.uniform(0.0, 0.95)),
            inc=float(rng.uniform(1.0, 179.0)),
            raan=float(rng.uniform(0, 360)),
            argp=float(rng.uniform(0, 360)),
            nu=float(rng.uniform(0, 360)),
        )
        r, v = elements_to_cartesian(el, EARTH_MU)
        back = cartesian_to_elements(r, v, EARTH_MU)
        assert back.a == pytest.approx(el.a, rel=1e-9)
        assert back.e == pytest.approx(el.e, rel=1e-9, abs=1e-9)
        assert back.inc == pytest.approx(el.inc, rel=1e-9, abs=1e-9)
        for got, want in ((back.raan, el.raan), (back.argp, el.argp), (back.nu, el.nu)):
            delta = abs(got - want) % 360.0
            assert min(delta, 360.0 - delta) < 1e-7


def test_equatorial_convention():
    el = OrbitalElements(a=1e7, e=0.2, inc=0.0, raan=123.0, argp=45.0, nu=10.0)
    r, v = elements_to_cartesian(el, EARTH_MU)
    back = cartesian_to_elements(r, v, EARTH_MU)
    # RAAN is not observable: reported as 0 with the angles folded together
    assert back.raan == 0.0
    assert back.inc == pytest.approx(0.0, abs=1e-9)
    delta = abs((back.argp + back.nu) - ((el.raan + el.argp + el.nu) % 360.0)) % 360.0
    assert min(delta, 360.0 - delta) < 1e-7
    r2, v2 = elements_to_cartesian(back, EARTH_MU)
    assert np.allclose(r2, r, rtol=1e-9)
    assert np.allclose(v2, v, rtol=1e-9)


def test_circular_convention():
    el = OrbitalElements(a=2e7, e=0.0, inc=50.0, raan=30.0, argp=77.0, nu=200.0)
    r, v = elements_to_cartesian(el, EARTH_MU)
    back = cartesian_to_elements(r, v, EARTH_MU)
    assert back.argp == 0.0
    assert back.e == pytest.approx(0.0, abs=1e-11)
    delta = abs(back.nu - ((el.argp + el.nu) % 360.0)) % 360.0
    assert min(delta, 360.0 - delta) < 1e-6
    r2, v2 = elements_to_cartesian(back, EARTH_MU)
    assert np.allclose(r2, r, rtol=1e-8)
    assert np.allclose(v2, v, rtol=1e-8)


def test_angle_normalization():
    el = OrbitalElements(a=1e7, e=0.1, inc=-30.0, raan=400.0, argp=-10.0, nu=720.0)
    assert el.inc == 330.0
    assert el.raan == 40.0
    assert el.argp == 350.0
    assert el.nu == 0.0


def test_element_validation():
    with pytest.raises(ValueError):
        OrbitalElements(a=-1.0, e=0.1, inc=0, raan=0, argp=0, nu=0)
    with pytest.raises(ValueError):
        OrbitalElements(a=1e7, e=-0.1, inc=0, raan=0, argp=0, nu=0)
    with pytest.raises(HyperbolicOrbitError):
        OrbitalElements(a=1e7, e=1.0, inc=0, raan=0, argp=0, nu=0)


def test_hyperbolic_state_rejected():
    r = np.array([7e6, 0.0, 0.0])
    v_esc = np.sqrt(2 * EARTH_MU / 7e6)
    with pytest.raises(HyperbolicOrbitError):
        cartesian_to_elements(r, [0.0, 1.1 * v_esc, 0.0], EARTH_MU)


def test_rectilinear_state_rejected():
    r = np.array([7e6, 0.0, 0.0])
    v = np.array([100.0, 0.0, 0.0])  # radial: r x v = 0
    with pytest.raises(DegenerateOrbitError):
        cartesian_to_elements(r, v, EARTH_MU)
    with pytest.raises(DegenerateOrbitError):
        cartesian_to_elements([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], EARTH_MU)


def test_mu_validation():
    el = OrbitalElements(a=1e7, e=0.1, inc=10, raan=20, argp=30, nu=40)
    with pytest.raises(ValueError):
        elements_to_cartesian(el, 0.0)
    with pytest.raises(ValueError):
        cartesian_to_elements([7e6, 0, 0], [0, 7500.0, 0], -1.0)
