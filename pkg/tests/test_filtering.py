"""Candidate filtering: stage semantics on synthetic exact roots.

The squared system admits closed-form test roots: pick the transmitter state
first, then back-solve each measured frequency from the range-rate relation
f_i = f (1 - rho_dot_i / c). Choosing the opposite sign for rho_dot yields a
point that satisfies the square exactly but violates the sign-sensitive
relation — precisely the spurious kind the filter must drop.
"""

import numpy as np
import pytest

from dopploc.exceptions import NoCandidatesError
from dopploc.filtering import (
    FilterConfig,
    FilterStats,
    _unsquared_rows,
    filter_endpoints,
    filter_endpoints_with_stats,
    noise_scaled_tolerance,
)
from dopploc.model import DopplerSystem, Receiver, pack_parameters, unpack_parameters
from dopploc.tracking import PathResult, PathStatus


def _result(x, status=PathStatus.SUCCESS):
    return PathResult(status, np.asarray(x, dtype=complex), 1e-14, 10, 1.0)


def _instance(rng, f0=2.0, wrong_branch=(), receding=False):
    """(system, params, x, receivers): x is an exact root of the square system.

    wrong_branch lists receiver indices whose frequency is back-solved with
    the flipped range-rate sign; receding=True places the source on a
    faster-than-c recession so every measured frequency stays positive even
    for a negative transmit frequency.
    """
    c = 1.0
    r0 = rng.uniform(-0.5, 0.5, 3)
    if receding:
        v0 = np.array([-8.0, 0.1, -0.2])  # receivers sit +x of the source
    else:
        v0 = rng.uniform(-0.05, 0.05, 3)
    receivers = []
    for i in range(7):
        if receding:
            ri = r0 + np.array([rng.uniform(2.0, 4.0), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)])
        else:
            ri = rng.uniform(-2.0, 2.0, 3)
            while np.linalg.norm(ri - r0) < 0.5:
                ri = rng.uniform(-2.0, 2.0, 3)
        vi = rng.uniform(-0.05, 0.05, 3)
        rho = np.linalg.norm(ri - r0)
        rho_dot = (ri - r0) @ (vi - v0) / rho
        sign = -1.0 if i in wrong_branch else 1.0
        fi = f0 * (1.0 - sign * rho_dot / c)
        assert fi > 0
        receivers.append(Receiver(r=ri, v=vi, f=fi))
    params = pack_parameters(receivers, c)
    x = np.concatenate([r0, v0, [f0]])
    sys = DopplerSystem(n_obs=7, c=c)
    res = sys.evaluate(params, x.astype(complex))
    scale = sys.residual_scale(params, x.astype(complex))
    assert np.abs(res / scale).max() < 1e-12
    return sys, params, x, receivers


def test_true_root_survives_all_stages(rng):
    sys, params, x, _ = _instance(rng)
    cands, stats = filter_endpoints_with_stats([_result(x)], sys, params)
    assert stats == FilterStats(1, 1, 1, 1, 1, 1, 1, 1)
    assert len(cands) == 1
    assert np.allclose(cands[0].state.as_unknowns(False), x, rtol=0, atol=1e-9)
    assert cands[0].unsquared_max < 1e-9
    assert cands[0].extra_residual is None


def test_wrong_sign_root_dropped_at_sign_test(rng):
    sys, params, x, _ = _instance(rng, wrong_branch=(2,))
    with pytest.raises(NoCandidatesError) as exc:
        filter_endpoints_with_stats([_result(x)], sys, params)
    # survived everything up to the sign test
    assert "sign test 0" in str(exc.value)
    assert "distinct 1" in str(exc.value)


def test_negative_frequency_root_dropped(rng):
    sys, params, x, _ = _instance(rng, f0=-2.0, receding=True)
    assert x[6] < 0
    with pytest.raises(NoCandidatesError) as exc:
        filter_endpoints_with_stats([_result(x)], sys, params)
    assert "positive-f 0" in str(exc.value)
    # the same root is a legitimate candidate when the screen is off: it
    # satisfies the sign relation exactly by construction
    cands, stats = filter_endpoints_with_stats(
        [_result(x)], sys, params, FilterConfig(require_positive_frequency=False)
    )
    assert stats.positive_frequency == 1
    assert len(cands) == 1


def test_stage_bookkeeping_mixed_batch(rng):
    sys, params, x, _ = _instance(rng, f0=2.0)
    complex_pt = x.astype(complex) + 0.3j
    results = [
        _result(x),
        _result(x),  # second path landing on the same root
        _result(complex_pt),
        _result(x, status=PathStatus.DIVERGED),
        _result(x, status=PathStatus.MAX_STEPS),
    ]
    cands, stats = filter_endpoints_with_stats(results, sys, params)
    assert stats.tracked == 5
    assert stats.succeeded == 3
    assert stats.real == 2
    assert stats.polished == 2
    assert stats.distinct == 1
    assert stats.candidates == 1
    assert len(cands) == 1


def test_realness_tolerance_is_configurable(rng):
    sys, params, x, _ = _instance(rng)
    dusty = x.astype(complex) + 1e-7j
    with pytest.raises(NoCandidatesError):
        filter_endpoints_with_stats([_result(dusty)], sys, params, FilterConfig(realness_tol=1e-9))
    cands, _ = filter_endpoints_with_stats([_result(dusty)], sys, params, FilterConfig(realness_tol=1e-6))
    assert len(cands) == 1


def test_polish_projects_perturbed_endpoint(rng):
    sys, params, x, _ = _instance(rng)
    rough = x + rng.normal(scale=1e-7, size=7)
    cands, _ = filter_endpoints_with_stats([_result(rough)], sys, params)
    assert np.allclose(cands[0].state.as_unknowns(False), x, rtol=0, atol=1e-9)


def test_extra_receiver_ranks_and_gates(rng):
    sys, params, x, receivers = _instance(rng)
    r0, v0, f0 = x[0:3], x[3:6], x[6]
    # a consistent eighth receiver keeps the candidate and scores it
    re = r0 + np.array([1.5, -0.8, 0.6])
    ve = rng.uniform(-0.05, 0.05, 3)
    rho = np.linalg.norm(re - r0)
    fe = f0 * (1.0 - (re - r0) @ (ve - v0) / rho)
    good_extra = Receiver(r=re, v=ve, f=fe)
    cands, _ = filter_endpoints_with_stats(
        [_result(x)], sys, params, FilterConfig(extra_receiver=good_extra)
    )
    assert len(cands) == 1
    assert cands[0].extra_residual == pytest.approx(0.0, abs=1e-9)
    # an extra receiver that contradicts the candidate rejects it
    bad_extra = Receiver(r=re, v=ve, f=fe * 1.5)
    with pytest.raises(NoCandidatesError):
        filter_endpoints_with_stats(
            [_result(x)], sys, params, FilterConfig(extra_receiver=bad_extra)
        )


def test_filter_endpoints_matches_with_stats(rng):
    sys, params, x, _ = _instance(rng)
    plain = filter_endpoints([_result(x)], sys, params)
    withstats, _ = filter_endpoints_with_stats([_result(x)], sys, params)
    assert len(plain) == len(withstats) == 1
    assert np.allclose(
        plain[0].state.as_unknowns(False), withstats[0].state.as_unknowns(False)
    )


def test_complex_parameters_rejected(rng):
    sys, params, x, _ = _instance(rng)
    with pytest.raises(ValueError):
        filter_endpoints_with_stats([_result(x)], sys, params.astype(complex) + 1j)


def test_filter_config_validation():
    with pytest.raises(ValueError):
        FilterConfig(realness_tol=0.0)
    with pytest.raises(ValueError):
        FilterConfig(unsquared_tol=-1.0)


def test_coincident_candidate_fails_sign_rows(rng):
    sys, params, x, receivers = _instance(rng)
    pos, vel, freq, c = unpack_parameters(params, 7)
    on_receiver = np.concatenate([pos[0], x[3:6], [x[6]]])
    u = _unsquared_rows(on_receiver[None, :], False, 1.0, pos, vel, freq, c)
    assert np.isinf(u[0, 0])
    assert np.isfinite(u[0, 1:]).all()


# -- noise-widened tolerance --------------------------------------------


def test_noise_tolerance_floor_and_monotonicity(rng):
    sys, params, x, _ = _instance(rng)
    base = FilterConfig()
    assert noise_scaled_tolerance(base, params, 7) == base.unsquared_tol
    zero = FilterConfig(noise_sigmas=(0.0, 0.0, 0.0))
    assert noise_scaled_tolerance(zero, params, 7) == base.unsquared_tol
    t_f = noise_scaled_tolerance(FilterConfig(noise_sigmas=(0, 0, 1e-3)), params, 7)
    t_r = noise_scaled_tolerance(FilterConfig(noise_sigmas=(1e-3, 0, 0)), params, 7)
    t_v = noise_scaled_tolerance(FilterConfig(noise_sigmas=(0, 1e-3, 0)), params, 7)
    assert min(t_f, t_v) > base.unsquared_tol
    assert t_r >= base.unsquared_tol
    # doubling a sigma never shrinks the tolerance
    t_f2 = noise_scaled_tolerance(FilterConfig(noise_sigmas=(0, 0, 2e-3)), params, 7)
    assert t_f2 >= t_f
    # the factor scales the band
    t_f_wide = noise_scaled_tolerance(
        FilterConfig(noise_sigmas=(0, 0, 1e-3), noise_factor=12.0), params, 7
    )
    assert t_f_wide == pytest.approx(2 * t_f, rel=1e-12)


def test_noisy_truth_kept_by_widened_tolerance(rng):
    # perturb the measured frequencies; the exact-root candidate of the
    # perturbed square system fails the strict sign test against the truth
    # geometry but must pass once the tolerance reflects the noise level
    sys, params, x, receivers = _instance(rng)
    sigma_f = 1e-5
    noisy = [
        Receiver(r=rx.r, v=rx.v, f=rx.f + rng.normal() * sigma_f) for rx in receivers
    ]
    nparams = pack_parameters(noisy, 1.0)
    # polish the true root onto the noisy instance
    from dopploc.tracking import newton_polish

    pts, res, ok = newton_polish(sys, nparams.astype(complex), x[None], tol=1e-12)
    assert ok[0]
    cands, _ = filter_endpoints_with_stats(
        [_result(pts[0])],
        sys,
        nparams,
        FilterConfig(noise_sigmas=(0.0, 0.0, sigma_f)),
    )
    assert len(cands) == 1
