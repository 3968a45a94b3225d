"""Solver orchestration and the scikit-learn style estimator facade.

solve_doppler is the full pipeline on SI inputs: choose units that make the
problem O(1), bind the receivers into a parameter vector, track every start
solution of the matching pre-computed family, and filter the endpoints down
to ranked physical candidates reported back in SI.

DopplerSourceEstimator wraps the same pipeline in the fit/predict idiom:
fit consumes a receiver matrix and exposes the recovered source state,
predict maps receiver states to the frequencies that state would produce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import DimensionMismatchError, FamilyMismatchError
from .filtering import Candidate, FilterConfig, FilterStats, filter_endpoints_with_stats
from .model import (
    DopplerSystem,
    Receiver,
    ScaleFrame,
    TransmitterState,
    doppler_frame,
    pack_parameters,
    predict_frequency,
)
from .monodromy import StartPack, default_pack, expand_by_symmetry, rebase_pack
from .tracking import TrackerConfig, track_all_verified

__all__ = ["SolveResult", "solve_doppler", "DopplerSourceEstimator"]


@dataclass(frozen=True)
class SolveResult:
    """Ranked candidates (SI units) plus solve diagnostics.

    Candidate residual scores are in the solver's scaled units; frame is the
    unit system they refer to. paths_tracked counts start solutions actually
    followed (half the family's roots for stationary packs).
    """

    candidates: list[Candidate]
    stats: FilterStats
    frame: ScaleFrame
    system: DopplerSystem
    paths_tracked: int

    @property
    def best(self) -> Candidate:
        return self.candidates[0]


def _check_stationary(receivers, stationary: bool | None) -> bool:
    all_zero = all(np.all(np.asarray(rx.v) == 0.0) for rx in receivers)
    if stationary is None:
        return all_zero
    if stationary and not all_zero:
        raise DimensionMismatchError("stationary solve requested but a receiver has nonzero velocity")
    return stationary


def solve_doppler(
    receivers,
    c: float,
    *,
    known_frequency: float | None = None,
    pack: StartPack | None = None,
    tracker: TrackerConfig | None = None,
    stationary: bool | None = None,
    frame: ScaleFrame | None = None,
    realness_tol: float = 1e-6,
    unsquared_tol: float = 1e-6,
    noise_sigmas: tuple | None = None,
    noise_factor: float = 6.0,
) -> SolveResult:
    """Estimate source position, velocity, and optionally transmit frequency.

    receivers: measured Receiver values in SI units. The first 7 (6 when
    known_frequency is given) form the square system; the next one, if
    present, disambiguates the candidate ranking. known_frequency: the
    transmit frequency when it is known a priori. noise_sigmas: optional
    (sigma_r, sigma_v, sigma_f) of the measurement noise in SI units,
    widening the filter tolerance accordingly. stationary: force or forbid
    the stationary-receiver family; by default it is detected from the
    receiver velocities.

    Raises NoCandidatesError when no physical solution survives filtering
    and FamilyMismatchError when the supplied pack belongs to a different
    family.
    """
    receivers = list(receivers)
    n_obs = 6 if known_frequency is not None else 7
    if len(receivers) < n_obs:
        raise DimensionMismatchError(f"need at least {n_obs} receivers, got {len(receivers)}")
    square = receivers[:n_obs]
    extra = receivers[n_obs] if len(receivers) > n_obs else None
    is_stationary = _check_stationary(square, stationary)

    if frame is None:
        frame = doppler_frame(square, c, f_known=known_frequency)
    scaled = [frame.scale_receiver(rx) for rx in square]
    c_scaled = float(c) / frame.speed
    system = DopplerSystem(
        n_obs=n_obs,
        known_frequency=known_frequency is not None,
        stationary=is_stationary,
        c=c_scaled,
        fixed_frequency=(known_frequency / frame.frequency) if known_frequency is not None else 1.0,
    )
    params = pack_parameters(scaled, c_scaled)

    if pack is None:
        pack = default_pack(system)
    elif pack.family_key != system.family_key:
        raise FamilyMismatchError(
            f"start pack family {pack.family_key} does not match problem family {system.family_key}"
        )
    # hold the propagation speed fixed along the homotopy
    based = rebase_pack(pack, c_scaled)

    # mirror_velocity: with a halved pack, an endpoint equal to another's
    # velocity mirror is a lost path just like an exact duplicate
    results = track_all_verified(
        system, based.start_params, params, based.solutions, tracker,
        mirror_velocity=pack.halved,
    )
    if pack.halved:
        results = expand_by_symmetry(system, results)

    scaled_sigmas = None
    if noise_sigmas is not None:
        sr, sv, sf = noise_sigmas
        scaled_sigmas = (sr / frame.length, sv / frame.speed, sf / frame.frequency)
    cfg = FilterConfig(
        realness_tol=realness_tol,
        unsquared_tol=unsquared_tol,
        extra_receiver=frame.scale_receiver(extra) if extra is not None else None,
        noise_sigmas=scaled_sigmas,
        noise_factor=noise_factor,
    )
    scaled_candidates, stats = filter_endpoints_with_stats(results, system, params, cfg)

    candidates = [
        Candidate(
            state=frame.unscale_state(cand.state),
            squared_residual=cand.squared_residual,
            unsquared_max=cand.unsquared_max,
            extra_residual=cand.extra_residual,
        )
        for cand in scaled_candidates
    ]
    return SolveResult(
        candidates=candidates,
        stats=stats,
        frame=frame,
        system=system,
        paths_tracked=pack.root_count,
    )


class DopplerSourceEstimator(BaseEstimator):
    """Source state estimation from Doppler-shifted frequency measurements.

    Parameters
    ----------
    c : propagation speed of the medium (SI)
    known_frequency : the transmit frequency when known a priori, else None
    pack : optional StartPack overriding the shipped one
    tracker : optional TrackerConfig
    stationary : force (True/False) or auto-detect (None) the
        stationary-receiver family
    realness_tol, unsquared_tol : filter tolerances in scaled units
    noise_sigmas : optional (sigma_r, sigma_v, sigma_f) in SI units

    Attributes (after fit)
    ----------------------
    state_ : recovered TransmitterState (SI)
    position_, velocity_, frequency_ : components of state_
    candidates_ : all ranked candidates
    result_ : full SolveResult with filter statistics and units
    """

    def __init__(
        self,
        c: float = 299_792_458.0,
        known_frequency: float | None = None,
        pack: StartPack | None = None,
        tracker: TrackerConfig | None = None,
        stationary: bool | None = None,
        realness_tol: float = 1e-6,
        unsquared_tol: float = 1e-6,
        noise_sigmas: tuple | None = None,
        noise_factor: float = 6.0,
    ):
        self.c = c
        self.known_frequency = known_frequency
        self.pack = pack
        self.tracker = tracker
        self.stationary = stationary
        self.realness_tol = realness_tol
        self.unsquared_tol = unsquared_tol
        self.noise_sigmas = noise_sigmas
        self.noise_factor = noise_factor

    @staticmethod
    def _receiver_matrix(X, expect_frequency: bool) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        width = 7 if expect_frequency else 6
        if X.ndim != 2 or X.shape[1] != width:
            raise DimensionMismatchError(
                f"expected a (n_receivers, {width}) matrix of receiver rows, got {X.shape}"
            )
        if not np.all(np.isfinite(X)):
            raise DimensionMismatchError("receiver matrix must be finite")
        return X

    def fit(self, X, y=None):
        """Solve for the source state.

        X : array (n_receivers, 7) with rows [x, y, z, vx, vy, vz, f_measured]
        in SI units. The first 7 rows (6 with known_frequency) build the
        square system; the following row, when present, disambiguates.
        """
        X = self._receiver_matrix(X, expect_frequency=True)
        receivers = [Receiver(r=row[0:3], v=row[3:6], f=row[6]) for row in X]
        self.result_ = solve_doppler(
            receivers,
            self.c,
            known_frequency=self.known_frequency,
            pack=self.pack,
            tracker=self.tracker,
            stationary=self.stationary,
            realness_tol=self.realness_tol,
            unsquared_tol=self.unsquared_tol,
            noise_sigmas=self.noise_sigmas,
            noise_factor=self.noise_factor,
        )
        self.candidates_ = self.result_.candidates
        self.state_ = self.candidates_[0].state
        self.position_ = self.state_.r
        self.velocity_ = self.state_.v
        self.frequency_ = float(self.state_.f)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        """Frequencies the fitted source would produce at given receivers.

        X : array (n_receivers, 6) with rows [x, y, z, vx, vy, vz] in SI.
        """
        if not hasattr(self, "state_"):
            raise RuntimeError("estimator is not fitted")
        X = self._receiver_matrix(X, expect_frequency=False)
        return np.array([predict_frequency(self.state_, row[0:3], row[3:6], self.c) for row in X])

    def score(self, X, y=None) -> float:
        """Negative RMS relative error between measured and predicted
        frequencies over receiver rows [x, y, z, vx, vy, vz, f_measured]."""
        X = self._receiver_matrix(X, expect_frequency=True)
        predicted = self.predict(X[:, 0:6])
        rel = (predicted - X[:, 6]) / X[:, 6]
        return -float(np.sqrt(np.mean(rel * rel)))
