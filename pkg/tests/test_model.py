"""Doppler model: forward prediction, squared system, Jacobians, scaling."""

import numpy as np
import pytest

from dopploc.exceptions import (
    CoincidentPointsError,
    DimensionMismatchError,
    ZeroFrequencyError,
)
from dopploc.model import (
    DopplerSystem,
    Receiver,
    ScaleFrame,
    TransmitterState,
    default_frame,
    doppler_frame,
    pack_parameters,
    predict_frequency,
    rescale,
    unpack_parameters,
    unsquared_residual,
)


def _random_receivers(rng, n, c, stationary=False):
    recs = []
    for _ in range(n):
        r = rng.uniform(-5, 5, 3)
        v = np.zeros(3) if stationary else rng.uniform(-1, 1, 3)
        recs.append(Receiver(r=r, v=v))
    return recs


def _measured(tx, receivers, c):
    return [
        Receiver(r=rx.r, v=rx.v, f=predict_frequency(tx, rx.r, rx.v, c), group=rx.group)
        for rx in receivers
    ]


def _reference_evaluate(sys, params, x):
    """Scalar re-implementation of the squared equations, used as an oracle."""
    n = sys.n_obs
    pos, vel, freq, c = unpack_parameters(np.real(params), n)
    r = x[0:3]
    v = x[3:6]
    f = sys.fixed_frequency if sys.known_frequency else x[6]
    out = []
    for i in range(n):
        dr = pos[i] - r
        dv = vel[i] - v
        rho2 = dr @ dr
        dop = dr @ dv
        out.append(c * c * (f - freq[i]) ** 2 * rho2 - f * f * dop * dop)
    return np.array(out)


# -- forward model -----------------------------------------------------


def test_predict_frequency_hand_value():
    # receiver directly above, closing at 2 with c=10, f=100:
    # range rate = -2, so f_obs = (1 + 2/10) * 100 = 120
    tx = TransmitterState(r=[0.0, 0.0, 0.0], v=[0.0, 0.0, 2.0], f=100.0)
    assert predict_frequency(tx, [0, 0, 5], [0, 0, 0], 10.0) == pytest.approx(120.0)
    # receding instead: f_obs = (1 - 2/10) * 100 = 80
    tx = TransmitterState(r=[0.0, 0.0, 0.0], v=[0.0, 0.0, -2.0], f=100.0)
    assert predict_frequency(tx, [0, 0, 5], [0, 0, 0], 10.0) == pytest.approx(80.0)


def test_predict_frequency_transverse_motion_unshifted():
    tx = TransmitterState(r=[0.0, 0.0, 0.0], v=[3.0, 0.0, 0.0], f=50.0)
    assert predict_frequency(tx, [0, 0, 7], [0, 0, 0], 10.0) == pytest.approx(50.0)


def test_predict_frequency_coincident_raises():
    tx = TransmitterState(r=[1.0, 2.0, 3.0], v=[0.0, 0.0, 0.0], f=1.0)
    with pytest.raises(CoincidentPointsError):
        predict_frequency(tx, [1, 2, 3], [0, 0, 0], 10.0)


def test_unsquared_residual_zero_at_truth_and_sign_sensitive(rng):
    tx = TransmitterState(r=[0.4, -0.2, 1.0], v=[0.3, 0.1, -0.2], f=5.0)
    c = 20.0
    rx_r, rx_v = [3.0, 1.0, -2.0], [0.1, -0.4, 0.2]
    rx = Receiver(r=rx_r, v=rx_v, f=predict_frequency(tx, rx_r, rx_v, c))
    assert abs(unsquared_residual(tx, rx, c)) < 1e-12
    # flipping the shift sign keeps the square but breaks the relation
    flipped = Receiver(r=rx.r, v=rx.v, f=2 * tx.f - rx.f)
    assert abs(unsquared_residual(tx, flipped, c)) > 1e-3


def test_unsquared_residual_zero_frequency_raises():
    tx = TransmitterState(r=[0, 0, 0], v=[0, 0, 0], f=0.0)
    rx = Receiver(r=[1, 0, 0], v=[0, 0, 0], f=1.0)
    with pytest.raises(ZeroFrequencyError):
        unsquared_residual(tx, rx, 1.0)


# -- squared system ----------------------------------------------------


@pytest.mark.parametrize("known_frequency", [False, True])
def test_evaluate_matches_scalar_reference(rng, known_frequency):
    n = 6 if known_frequency else 7
    sys = DopplerSystem(n_obs=n, known_frequency=known_frequency, fixed_frequency=3.7)
    params = rng.standard_normal(sys.n_params)
    params[-1] = 5.0  # keep c positive and O(1)
    for _ in range(5):
        x = rng.standard_normal(sys.n_unknowns) + 1j * rng.standard_normal(sys.n_unknowns)
        got = sys.evaluate(params, x)
        ref = _reference_evaluate(sys, params, x)
        assert np.allclose(got, ref, rtol=1e-12, atol=1e-12)


def test_evaluate_zero_at_truth(rng):
    tx = TransmitterState(r=[1.0, -2.0, 0.5], v=[0.2, 0.3, -0.1], f=4.0)
    c = 15.0
    receivers = _measured(tx, _random_receivers(rng, 7, c), c)
    sys = DopplerSystem(n_obs=7, c=c)
    params = pack_parameters(receivers, c)
    res = sys.evaluate(params, tx.as_unknowns(known_frequency=False).astype(complex))
    scale = sys.residual_scale(params, tx.as_unknowns(False).astype(complex))
    assert np.all(np.abs(res) / scale < 1e-12)


def test_evaluate_batch_matches_loop(rng):
    sys = DopplerSystem(n_obs=7)
    params = rng.standard_normal(sys.n_params)
    xs = rng.standard_normal((11, 7)) + 1j * rng.standard_normal((11, 7))
    batch = sys.evaluate(params[None].repeat(11, axis=0), xs)
    for i in range(11):
        assert np.array_equal(batch[i], sys.evaluate(params, xs[i]))


def test_shape_validation():
    sys = DopplerSystem(n_obs=7)
    with pytest.raises(DimensionMismatchError):
        sys.evaluate(np.zeros(10), np.zeros(7))
    with pytest.raises(DimensionMismatchError):
        sys.evaluate(np.zeros(50), np.zeros(6))
    with pytest.raises(DimensionMismatchError):
        DopplerSystem(n_obs=7, known_frequency=True)
    with pytest.raises(DimensionMismatchError):
        DopplerSystem(n_obs=6, known_frequency=False)


def test_residual_scale_floor_covers_dead_equation(rng):
    # A receiver with zero Doppler shift and zero range-rate zeroes both of
    # its squared terms; the instance floor must still give it a usable scale.
    tx = TransmitterState(r=[0.0, 0.0, 0.0], v=[1.0, 0.0, 0.0], f=2.0)
    c = 10.0
    receivers = _random_receivers(rng, 7, c)
    receivers[3] = Receiver(r=[0.0, 0.0, 4.0], v=[1.0, 0.0, 0.0])  # comoving: no shift
    receivers = _measured(tx, receivers, c)
    assert receivers[3].f == pytest.approx(tx.f)
    sys = DopplerSystem(n_obs=7, c=c)
    params = pack_parameters(receivers, c)
    scale = sys.residual_scale(params, tx.as_unknowns(False).astype(complex))
    # the dead equation is floored to about 1e-2 of the dominant equation
    assert scale[3] >= 0.009 * scale.max()
    assert np.all(scale > 0)


def test_reflect_velocity():
    sys = DopplerSystem(n_obs=7, stationary=True)
    x = np.arange(7, dtype=float) + 1.0
    mate = sys.reflect_velocity(x)
    assert np.array_equal(np.real(mate[0:3]), x[0:3])
    assert np.array_equal(np.real(mate[3:6]), -x[3:6])
    assert np.real(mate[6]) == x[6]


def test_stationary_symmetry_of_equations(rng):
    # With all receiver velocities zero the squared system is even in v.
    sys = DopplerSystem(n_obs=7, stationary=True)
    receivers = [
        Receiver(r=rx.r, v=rx.v, f=rng.uniform(0.5, 2.0))
        for rx in _random_receivers(rng, 7, 10.0, stationary=True)
    ]
    params = pack_parameters(receivers, 10.0)
    x = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    assert np.allclose(
        sys.evaluate(params, x),
        sys.evaluate(params, sys.reflect_velocity(x)),
        rtol=1e-12,
        atol=1e-12,
    )


# -- Jacobians ---------------------------------------------------------


def _central_difference(fun, x, h=1e-6):
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


@pytest.mark.parametrize(
    "known_frequency,stationary",
    [(False, False), (True, False), (False, True), (True, True)],
)
def test_jacobians_match_finite_differences(rng, known_frequency, stationary):
    n = 6 if known_frequency else 7
    sys = DopplerSystem(
        n_obs=n, known_frequency=known_frequency, stationary=stationary, fixed_frequency=1.3
    )
    params = rng.standard_normal(sys.n_params)
    params[-1] = 4.0
    if stationary:
        params[3 * n : 6 * n] = 0.0
    x = rng.standard_normal(sys.n_unknowns) + 1j * rng.standard_normal(sys.n_unknowns)

    jx = sys.jacobian_unknowns(params, x)
    fd = _central_difference(lambda xx: sys.evaluate(params, xx), x.astype(complex))
    assert np.allclose(jx, fd, rtol=1e-6, atol=1e-6 * (1 + np.abs(fd).max()))

    jp = sys.jacobian_parameters(params, x)
    fdp = _central_difference(lambda pp: sys.evaluate(pp, x), params.astype(complex))
    assert np.allclose(jp, fdp, rtol=1e-6, atol=1e-6 * (1 + np.abs(fdp).max()))


# -- packing and unknowns ----------------------------------------------


def test_pack_unpack_roundtrip(rng):
    receivers = [
        Receiver(r=rng.uniform(-3, 3, 3), v=rng.uniform(-1, 1, 3), f=rng.uniform(1, 2))
        for _ in range(7)
    ]
    params = pack_parameters(receivers, 9.0)
    assert params.shape == (50,)
    pos, vel, freq, c = unpack_parameters(params, 7)
    for i, rx in enumerate(receivers):
        assert np.array_equal(pos[i], rx.r)
        assert np.array_equal(vel[i], rx.v)
        assert freq[i] == rx.f
    assert c == 9.0
    with pytest.raises(DimensionMismatchError):
        unpack_parameters(params, 6)


def test_pack_parameters_requires_frequencies():
    receivers = [Receiver(r=[i, 0, 0], v=[0, 0, 0]) for i in range(1, 8)]
    with pytest.raises(ZeroFrequencyError):
        pack_parameters(receivers, 1.0)


@pytest.mark.parametrize("known_frequency", [False, True])
def test_transmitter_state_unknowns_roundtrip(known_frequency):
    tx = TransmitterState(r=[1.0, 2.0, 3.0], v=[-0.1, 0.2, -0.3], f=7.5)
    x = tx.as_unknowns(known_frequency)
    assert x.shape == (6 if known_frequency else 7,)
    back = TransmitterState.from_unknowns(x, known_frequency, fixed_frequency=7.5)
    assert np.allclose(back.r, tx.r)
    assert np.allclose(back.v, tx.v)
    assert back.f == tx.f


# -- scale frames ------------------------------------------------------


def test_scale_frame_roundtrip(rng):
    frame = ScaleFrame(length=3.0, time=0.5, frequency=40.0)
    tx = TransmitterState(r=[1.0, -2.0, 0.5], v=[0.2, 0.3, -0.1], f=35.0)
    back = frame.unscale_state(frame.scale_state(tx))
    assert np.allclose(back.r, tx.r) and np.allclose(back.v, tx.v)
    assert back.f == pytest.approx(tx.f)
    rx = Receiver(r=[4.0, 1.0, 1.0], v=[0.1, 0.0, -0.2], f=41.0, group="aux")
    brx = frame.unscale_receiver(frame.scale_receiver(rx))
    assert np.allclose(brx.r, rx.r) and np.allclose(brx.v, rx.v)
    assert brx.f == pytest.approx(rx.f)
    assert brx.group == "aux"
    for kf in (False, True):
        x = rng.standard_normal(6 if kf else 7)
        assert np.allclose(frame.unscale_unknowns(frame.scale_unknowns(x, kf), kf), x)


def test_scale_frame_preserves_doppler_relation(rng):
    # Scaling receivers, state, and c together must leave the shift relation
    # intact: predicted frequencies scale by exactly 1/frequency-unit.
    frame = ScaleFrame(length=2.0, time=0.25, frequency=10.0)
    c = 30.0
    tx = TransmitterState(r=[1.0, 2.0, -1.0], v=[0.5, -0.2, 0.3], f=12.0)
    rx_r, rx_v = np.array([5.0, -3.0, 2.0]), np.array([0.2, 0.1, -0.3])
    f_obs = predict_frequency(tx, rx_r, rx_v, c)
    stx = frame.scale_state(tx)
    srx = frame.scale_receiver(Receiver(r=rx_r, v=rx_v, f=f_obs))
    f_scaled = predict_frequency(stx, srx.r, srx.v, c * frame.time / frame.length)
    assert f_scaled == pytest.approx(f_obs / frame.frequency, rel=1e-14)


def test_identity_frame_rescale_is_identity(rng):
    sys = DopplerSystem(n_obs=7, c=8.0)
    params = rng.standard_normal(sys.n_params)
    sys2, params2 = rescale(sys, params, ScaleFrame(length=1.0, time=1.0, frequency=1.0))
    assert np.allclose(params2, params)
    assert sys2.n_obs == sys.n_obs


def test_rescale_maps_solutions_exactly(rng):
    tx = TransmitterState(r=[1.0, -2.0, 0.5], v=[0.2, 0.3, -0.1], f=4.0)
    c = 15.0
    receivers = _measured(tx, _random_receivers(rng, 7, c), c)
    sys = DopplerSystem(n_obs=7, c=c)
    params = pack_parameters(receivers, c)
    frame = doppler_frame(receivers, c)
    ssys, sparams = rescale(sys, params, frame)
    sx = frame.scale_unknowns(tx.as_unknowns(False), False).astype(complex)
    res = ssys.evaluate(sparams, sx)
    scale = ssys.residual_scale(sparams, sx)
    assert np.all(np.abs(res) / scale < 1e-10)


def test_default_frame_units(rng):
    receivers = [
        Receiver(r=[0, 0, 2.0], v=[0, 0, 0], f=99.0),
        Receiver(r=[0, 0, 4.0], v=[0, 0, 0], f=100.0),
        Receiver(r=[0, 0, 8.0], v=[0, 0, 0], f=101.0),
    ]
    frame = default_frame(receivers, c=50.0)
    assert frame.length == pytest.approx(4.0)
    assert frame.time == pytest.approx(4.0 / 50.0)
    assert frame.frequency == pytest.approx(100.0)
    assert frame.speed == pytest.approx(50.0)
    known = default_frame(receivers, c=50.0, f_known=123.0)
    assert known.frequency == pytest.approx(123.0)


def test_doppler_frame_speed_tracks_shift_spread():
    receivers = [
        Receiver(r=[0, 0, 3.0], v=[0, 0, 0], f=99.0),
        Receiver(r=[0, 0, 4.0], v=[0, 0, 0], f=100.0),
        Receiver(r=[0, 0, 5.0], v=[0, 0, 0], f=102.0),
    ]
    frame = doppler_frame(receivers, c=50.0)
    # v_char = c * max|f_i - f~|/f~ = 50 * 2/100 = 1
    assert frame.speed == pytest.approx(1.0)


def test_doppler_frame_falls_back_when_unshifted():
    receivers = [Receiver(r=[0, 0, float(k)], v=[0, 0, 0], f=100.0) for k in (3, 4, 5)]
    assert doppler_frame(receivers, c=50.0) == default_frame(receivers, c=50.0)
