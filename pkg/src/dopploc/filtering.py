"""Reduction of tracked endpoints to physical candidates.

Tracking a real instance returns the family's full complex solution set.
Physical candidates are extracted in stages: keep successful paths, keep
endpoints that are real up to tracking dust and polish them onto the real
system, drop duplicates (two paths can land on the same root), require a
positive transmit frequency, apply the sign-sensitive range-rate test that
the squaring step destroyed, and finally rank by agreement with an extra
receiver that was not part of the square system.

With noisy measurements the candidate still solves the square system
exactly, so only the extra-receiver stage feels the noise; the tolerance is
widened by the propagated measurement sigmas so the true solution stays
in-set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NoCandidatesError
from .model import DopplerSystem, TransmitterState, unpack_parameters
from .tracking import PathResult, newton_polish

__all__ = [
    "FilterConfig",
    "Candidate",
    "FilterStats",
    "filter_endpoints",
    "filter_endpoints_with_stats",
    "noise_scaled_tolerance",
    "residual_report",
]

_POLISH_TOL = 1e-12
# slow sources floor the attainable normalized residual above the polish
# target (every equation is a tiny difference of near-equal squares), so a
# best-effort polish below this still counts
_POLISH_ACCEPT = 1e-8
_DEDUP_TOL = 1e-6
# a source sitting on a receiver trivially zeroes that receiver's equation
# (the squared system contains the whole coincident locus as a spurious
# component), so such candidates fail the sign test by construction
_COINCIDENT_RTOL = 1e-8


@dataclass(frozen=True)
class FilterConfig:
    """Tolerances and options for the candidate pipeline.

    All quantities are in the scaled units of the system being filtered.
    extra_receiver, when set, is one receiver excluded from the square
    system (already scaled), used to disambiguate. noise_sigmas, when set,
    is (sigma_r, sigma_v, sigma_f) in scaled units and widens the sign-test
    tolerance via noise_scaled_tolerance.
    """

    realness_tol: float = 1e-6
    unsquared_tol: float = 1e-6
    require_positive_frequency: bool = True
    extra_receiver: object | None = None
    noise_sigmas: tuple | None = None
    noise_factor: float = 6.0

    def __post_init__(self):
        if self.realness_tol <= 0 or self.unsquared_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class Candidate:
    """One surviving solution with its per-test residuals."""

    state: TransmitterState
    squared_residual: float
    unsquared_max: float
    extra_residual: float | None = None


@dataclass(frozen=True)
class FilterStats:
    """How many endpoints survived each stage."""

    tracked: int
    succeeded: int
    real: int
    polished: int
    distinct: int
    positive_frequency: int
    sign_test: int
    candidates: int


def noise_scaled_tolerance(cfg: FilterConfig, params: np.ndarray, n_obs: int) -> float:
    """Sign-test tolerance widened by propagated measurement noise.

    The residual is rho*c*(f-f_i)/f - (r_i-r)^T(v_i-v); its first-order
    sensitivities give sigma_f * c * rho / f for frequency noise, about
    2 * c * |f_i - f| / f (the relative-velocity magnitude) per unit of
    position noise, and rho per unit of velocity noise. The factor covers a
    3-sigma band plus the comparable error the solved state inherits from
    the other receivers.
    """
    if cfg.noise_sigmas is None:
        return cfg.unsquared_tol
    sigma_r, sigma_v, sigma_f = cfg.noise_sigmas
    pos, vel, freq, c = unpack_parameters(np.real(params), n_obs)
    rho_med = float(np.median(np.linalg.norm(pos, axis=1)))
    f_med = float(np.median(freq))
    shift = float(np.abs(freq - f_med).max())
    rho_typ = max(rho_med, 1e-30)
    f_typ = max(abs(f_med), 1e-30)
    propagated = (
        abs(sigma_f) * c * rho_typ / f_typ
        + abs(sigma_r) * 2.0 * c * shift / f_typ
        + abs(sigma_v) * rho_typ
    )
    return max(cfg.unsquared_tol, cfg.noise_factor * propagated)


def _unsquared_rows(states: np.ndarray, known_frequency: bool, fixed_frequency: float,
                    pos: np.ndarray, vel: np.ndarray, freq: np.ndarray, c: float) -> np.ndarray:
    """Sign-sensitive residuals, shape (n_candidates, n_receivers).

    Coincident geometry makes a row infinite instead of raising; such a
    candidate simply fails the test.
    """
    r = states[:, 0:3]
    v = states[:, 3:6]
    f = np.full(len(states), fixed_frequency) if known_frequency else states[:, 6]
    dr = pos[None, :, :] - r[:, None, :]
    dv = vel[None, :, :] - v[:, None, :]
    rho = np.sqrt((dr * dr).sum(axis=-1))
    dop = (dr * dv).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = rho * c * (f[:, None] - freq[None, :]) / f[:, None] - dop
    u = np.where(np.isfinite(u), u, np.inf)
    scale = 1.0 + np.linalg.norm(pos, axis=1)[None, :] + np.linalg.norm(r, axis=1)[:, None]
    u[rho <= _COINCIDENT_RTOL * scale] = np.inf
    return u


def filter_endpoints_with_stats(
    results: list[PathResult],
    system: DopplerSystem,
    params: np.ndarray,
    cfg: FilterConfig | None = None,
):
    """Run the candidate pipeline; returns (ranked candidates, stage counts).

    Raises NoCandidatesError when nothing survives, with the stage counts in
    the message (the usual causes are bad data, a wrong propagation speed,
    or noise beyond the filter tolerance).
    """
    cfg = cfg if cfg is not None else FilterConfig()
    params = np.asarray(params)
    if np.iscomplexobj(params):
        if np.abs(np.imag(params)).max() > 0.0:
            raise ValueError("filtering expects a real (physical) parameter vector")
        params = np.real(params)
    pos, vel, freq, c = unpack_parameters(params, system.n_obs)

    tracked = len(results)
    successes = [r for r in results if r.success]
    n_succ = len(successes)

    # realness screen, then polish the projections on the real system
    n_real = 0
    projected = []
    for r in successes:
        if np.abs(np.imag(r.endpoint)).max() <= cfg.realness_tol:
            n_real += 1
            projected.append(np.real(r.endpoint))
    if projected:
        polished, res, ok = newton_polish(system, params.astype(complex), np.array(projected), tol=_POLISH_TOL)
        good = ok | (np.isfinite(res) & (res <= _POLISH_ACCEPT))
        polished = np.real(polished[good])
        sq_res = res[good]
    else:
        polished = np.zeros((0, system.n_unknowns))
        sq_res = np.zeros(0)
    n_polished = len(polished)

    # two paths can land on one root; keep the first of each cluster
    keep = []
    for i in range(n_polished):
        if not any(np.abs(polished[i] - polished[j]).max() <= _DEDUP_TOL for j in keep):
            keep.append(i)
    polished = polished[keep]
    sq_res = sq_res[keep]
    n_distinct = len(polished)

    if cfg.require_positive_frequency and not system.known_frequency:
        mask = polished[:, 6] > 0.0
        polished = polished[mask]
        sq_res = sq_res[mask]
    n_positive = len(polished)

    eff_tol = noise_scaled_tolerance(cfg, params, system.n_obs)
    if n_positive:
        u = _unsquared_rows(polished, system.known_frequency, system.fixed_frequency, pos, vel, freq, c)
        u_max = np.abs(u).max(axis=1)
        mask = u_max <= eff_tol
        polished = polished[mask]
        sq_res = sq_res[mask]
        u_max = u_max[mask]
    else:
        u_max = np.zeros(0)
    n_sign = len(polished)

    extra_res = None
    if cfg.extra_receiver is not None and n_sign:
        rx = cfg.extra_receiver
        ue = _unsquared_rows(
            polished, system.known_frequency, system.fixed_frequency,
            np.asarray(rx.r, dtype=float)[None, :], np.asarray(rx.v, dtype=float)[None, :],
            np.array([float(rx.f)]), c,
        )
        extra_res = np.abs(ue[:, 0])
        mask = extra_res <= eff_tol
        polished = polished[mask]
        sq_res = sq_res[mask]
        u_max = u_max[mask]
        extra_res = extra_res[mask]

    candidates = []
    for i in range(len(polished)):
        state = TransmitterState.from_unknowns(polished[i], system.known_frequency, system.fixed_frequency)
        candidates.append(
            Candidate(
                state=state,
                squared_residual=float(sq_res[i]),
                unsquared_max=float(u_max[i]),
                extra_residual=float(extra_res[i]) if extra_res is not None else None,
            )
        )
    candidates.sort(
        key=lambda cand: (
            cand.extra_residual if cand.extra_residual is not None else 0.0,
            cand.squared_residual,
            cand.unsquared_max,
        )
    )
    stats = FilterStats(
        tracked=tracked,
        succeeded=n_succ,
        real=n_real,
        polished=n_polished,
        distinct=n_distinct,
        positive_frequency=n_positive,
        sign_test=n_sign,
        candidates=len(candidates),
    )
    if not candidates:
        raise NoCandidatesError(
            "no physical candidate survived the filter "
            f"(tracked {stats.tracked}, succeeded {stats.succeeded}, real {stats.real}, "
            f"polished {stats.polished}, distinct {stats.distinct}, "
            f"positive-f {stats.positive_frequency}, sign test {stats.sign_test})"
        )
    return candidates, stats


def filter_endpoints(
    results: list[PathResult],
    system: DopplerSystem,
    params: np.ndarray,
    cfg: FilterConfig | None = None,
) -> list[Candidate]:
    """Ranked physical candidates from tracked endpoints (see
    filter_endpoints_with_stats for the stage-count variant)."""
    return filter_endpoints_with_stats(results, system, params, cfg)[0]


def residual_report(candidate: Candidate, receivers, c: float) -> list[dict]:
    """Per-receiver diagnostic rows for one candidate.

    Each row holds range, range rate, predicted and measured frequency, and
    the sign-sensitive residual; coincident geometry is reported in the
    row's error field instead of raising.
    """
    tx = candidate.state
    rows = []
    for k, rx in enumerate(receivers):
        dr = np.asarray(rx.r, dtype=float) - np.asarray(tx.r, dtype=float)
        rho = float(np.linalg.norm(dr))
        if rho <= 0.0 or rho < 1e-12 * (1.0 + np.linalg.norm(rx.r) + np.linalg.norm(tx.r)):
            rows.append({"receiver": k, "error": "coincident points"})
            continue
        rho_dot = float(dr @ (np.asarray(rx.v, dtype=float) - np.asarray(tx.v, dtype=float))) / rho
        predicted = (1.0 - rho_dot / c) * tx.f
        unsq = rho * c * (tx.f - rx.f) / tx.f - float(dr @ (np.asarray(rx.v) - np.asarray(tx.v)))
        rows.append(
            {
                "receiver": k,
                "rho": rho,
                "rho_dot": rho_dot,
                "predicted_f": float(predicted),
                "measured_f": float(rx.f),
                "unsquared": float(unsq),
                "error": None,
            }
        )
    return rows
