"""Predictor-corrector path tracking along a straight-line parameter homotopy.

The parameter segment is bent into the complex plane by a random unit-modulus
constant gamma,

    p(t) = ((1 - t) * gamma * p_start + t * p_target) / ((1 - t) * gamma + t),

so intermediate systems avoid the discriminant with probability 1 while the
endpoints remain exactly p_start and p_target. Paths follow the implicit
solution curve with a Runge-Kutta predictor on the Davidenko ODE
J_x(x, p) dx/dt = -J_p(x, p) dp/dt and a Newton corrector.

All paths of one call are advanced in lockstep as a batch, each with its own
adaptive step; every operation is elementwise or a per-row reduction, so each
path's result is bit-identical to tracking it alone.

Convergence tests use a residual normalized per equation by the magnitude of
the two squared terms (see DopplerSystem.residual_scale): physical instances
make the raw residuals tiny at any point, so a raw threshold would be
meaningless.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .exceptions import BadStartSolutionError, DimensionMismatchError, SingularMatrixError
from .linalg import condition_estimate, lu_factor, lu_solve

__all__ = [
    "TrackerConfig",
    "PathStatus",
    "PathResult",
    "ParametricSystem",
    "SquareRootFamily",
    "track_path",
    "track_all",
    "track_all_verified",
    "newton_polish",
]

_GROW_AFTER = 5
_GROW_FACTOR = 1.5
_EULER_FACTOR = 10.0  # fall back to Euler below min_step * this


@runtime_checkable
class ParametricSystem(Protocol):
    """Polynomial family interface required by the tracker.

    All methods broadcast over leading batch dimensions.
    """

    @property
    def n_unknowns(self) -> int: ...

    @property
    def n_params(self) -> int: ...

    def evaluate(self, params, x) -> np.ndarray: ...

    def jacobian_unknowns(self, params, x) -> np.ndarray: ...

    def jacobian_parameters(self, params, x) -> np.ndarray: ...

    def residual_scale(self, params, x) -> np.ndarray: ...


@dataclass(frozen=True)
class TrackerConfig:
    """Step-control and convergence settings for path tracking.

    Paths that stall within endgame_start of the target get one salvage
    attempt: Newton iteration directly against the target system from their
    last iterate. Physical target instances can sit close to a degenerate
    configuration (slow sources make every measured frequency nearly equal),
    where step control gives up just short of t = 1 even though the endpoint
    is already inside Newton's basin.

    Near such configurations the normalized residual bottoms out at the
    cancellation noise of f - f_i, which can exceed corrector_tol no matter
    how accurate the point is, so the corrector also accepts when the Newton
    update falls below corrector_step_tol relative to the iterate.
    """

    initial_step: float = 0.05
    min_step: float = 1e-7
    max_step: float = 0.1
    corrector_tol: float = 1e-11
    max_corrector_iters: int = 3
    divergence_norm: float = 1e8
    max_steps: int = 10_000
    gamma: complex = 0.6 + 0.8j
    endgame_start: float = 0.99
    endgame_iters: int = 25
    corrector_step_tol: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.min_step <= self.initial_step <= self.max_step < 1.0):
            raise ValueError("need 0 < min_step <= initial_step <= max_step < 1")
        if self.corrector_tol <= 0.0:
            raise ValueError("corrector_tol must be positive")
        if self.max_corrector_iters < 1 or self.max_steps < 1:
            raise ValueError("iteration limits must be at least 1")
        if abs(abs(complex(self.gamma)) - 1.0) > 1e-12:
            raise ValueError(f"gamma must have unit modulus, got |gamma| = {abs(self.gamma)}")
        if not (0.0 < self.endgame_start < 1.0):
            raise ValueError("endgame_start must lie strictly inside (0, 1)")
        if self.endgame_iters < 0:
            raise ValueError("endgame_iters must be non-negative")
        if self.corrector_step_tol < 0.0:
            raise ValueError("corrector_step_tol must be non-negative")


class PathStatus(Enum):
    SUCCESS = "Success"
    DIVERGED = "Diverged"
    SINGULAR_JACOBIAN = "SingularJacobian"
    MAX_STEPS = "MaxSteps"
    BAD_START = "BadStart"


@dataclass(frozen=True)
class PathResult:
    """Outcome of one tracked path.

    endpoint is the last accepted point (the solution at t = 1 on success);
    final_residual is the normalized residual there.
    """

    status: PathStatus
    endpoint: np.ndarray
    final_residual: float
    steps_taken: int
    t_reached: float

    @property
    def success(self) -> bool:
        return self.status is PathStatus.SUCCESS


# internal integer status codes for the lockstep loop
_ACTIVE, _SUCCESS, _DIVERGED, _SINGULAR, _MAXSTEPS, _BADSTART = range(6)

_CODE_TO_STATUS = {
    _SUCCESS: PathStatus.SUCCESS,
    _DIVERGED: PathStatus.DIVERGED,
    _SINGULAR: PathStatus.SINGULAR_JACOBIAN,
    _MAXSTEPS: PathStatus.MAX_STEPS,
    _BADSTART: PathStatus.BAD_START,
}


class _Homotopy:
    """Gamma-bent parameter segment and its t-derivative."""

    def __init__(self, start: np.ndarray, target: np.ndarray, gamma: complex):
        self.start = np.asarray(start, dtype=complex)
        self.target = np.asarray(target, dtype=complex)
        if self.start.shape != self.target.shape or self.start.ndim != 1:
            raise DimensionMismatchError(
                f"start/target parameter shapes differ: {self.start.shape} vs {self.target.shape}"
            )
        self.gamma = complex(gamma)

    def params_at(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)[..., None]
        g = self.gamma
        return ((1.0 - t) * g * self.start + t * self.target) / ((1.0 - t) * g + t)

    def velocity_at(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)[..., None]
        g = self.gamma
        b = (1.0 - t) * g + t
        p = ((1.0 - t) * g * self.start + t * self.target) / b
        return (self.target - g * self.start - p * (1.0 - g)) / b


# extended-precision scalar type for residual evaluation: physical instances
# hide the residual under the cancellation noise of f - f_i in double
_PRECISE = np.clongdouble if np.finfo(np.longdouble).eps < np.finfo(float).eps else np.complex128


def _evaluate_precise(system: ParametricSystem, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    return system.evaluate(params.astype(_PRECISE), x.astype(_PRECISE)).astype(complex)


def _normalized_residual(system: ParametricSystem, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    g = _evaluate_precise(system, params, x)
    scale = system.residual_scale(params, x)
    return (np.abs(g) / scale).max(axis=-1)


def _davidenko(system, hom, t, x):
    """Slope dx/dt = -J_x^{-1} J_p dp/dt; returns (slope, singular mask)."""
    p = hom.params_at(t)
    jx = system.jacobian_unknowns(p, x)
    jp = system.jacobian_parameters(p, x)
    pdot = hom.velocity_at(t)
    rhs = -(jp * pdot[:, None, :]).sum(axis=-1)
    lu, piv, singular = lu_factor(jx)
    return lu_solve(lu, piv, rhs), singular


def _predict(system, hom, t0, t1, h, x, cfg):
    """One predictor step from (t0, x) to t1; RK4 with Euler fallback at tiny h."""
    k1, s1 = _davidenko(system, hom, t0, x)
    euler = h < cfg.min_step * _EULER_FACTOR
    x_euler = x + h[:, None] * k1
    tm = t0 + 0.5 * (t1 - t0)
    k2, s2 = _davidenko(system, hom, tm, x + 0.5 * h[:, None] * k1)
    k3, s3 = _davidenko(system, hom, tm, x + 0.5 * h[:, None] * k2)
    k4, s4 = _davidenko(system, hom, t1, x + h[:, None] * k3)
    x_rk4 = x + (h[:, None] / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    x_pred = np.where(euler[:, None], x_euler, x_rk4)
    singular = np.where(euler, s1, s1 | s2 | s3 | s4)
    return x_pred, singular


def _correct(system, hom, t1, x_pred, cfg):
    """Newton iterations at fixed t1. Returns (x, residual, converged, singular).

    Convergence means residual below corrector_tol or a Newton update below
    corrector_step_tol relative to the iterate.
    """
    p = hom.params_at(t1)
    x = x_pred.copy()
    res = _normalized_residual(system, p, x)
    converged = res <= cfg.corrector_tol
    singular = np.zeros(len(x), dtype=bool)
    for _ in range(cfg.max_corrector_iters):
        todo = ~converged & ~singular & np.isfinite(res)
        if not todo.any():
            break
        idx = np.nonzero(todo)[0]
        jx = system.jacobian_unknowns(p[idx], x[idx])
        g = _evaluate_precise(system, p[idx], x[idx])
        lu, piv, sing = lu_factor(jx)
        delta = lu_solve(lu, piv, g)
        singular[idx[sing]] = True
        rows = idx[~sing]
        x[rows] -= delta[~sing]
        res[rows] = _normalized_residual(system, p[rows], x[rows])
        dnorm = np.abs(delta[~sing]).max(axis=-1) / (1.0 + np.abs(x[rows]).max(axis=-1))
        converged[rows] = (res[rows] <= cfg.corrector_tol) | (dnorm <= cfg.corrector_step_tol)
    return x, res, converged, singular


def track_all(
    system: ParametricSystem,
    start_params: np.ndarray,
    target_params: np.ndarray,
    start_solutions: Sequence[np.ndarray],
    cfg: TrackerConfig | None = None,
) -> list[PathResult]:
    """Track every start solution from start_params to target_params.

    Returns one PathResult per start solution, order preserved. Start points
    that fail the residual precondition are reported with BAD_START status
    rather than raised.
    """
    cfg = cfg if cfg is not None else TrackerConfig()
    starts = np.asarray(list(start_solutions), dtype=complex)
    if starts.size == 0:
        return []
    if starts.ndim == 1:
        starts = starts[None, :]
    if starts.ndim != 2 or starts.shape[1] != system.n_unknowns:
        raise DimensionMismatchError(
            f"start solutions shape {starts.shape}, expected (*, {system.n_unknowns})"
        )
    hom = _Homotopy(start_params, target_params, cfg.gamma)
    if hom.start.shape[0] != system.n_params:
        raise DimensionMismatchError(
            f"parameter vector length {hom.start.shape[0]}, expected {system.n_params}"
        )

    nb = starts.shape[0]
    x = starts.copy()
    t = np.zeros(nb)
    h = np.full(nb, cfg.initial_step)
    streak = np.zeros(nb, dtype=int)
    steps = np.zeros(nb, dtype=int)
    code = np.full(nb, _ACTIVE, dtype=int)

    with np.errstate(all="ignore"):
        start_res = _normalized_residual(system, hom.params_at(t), x)
        fin_res = start_res.copy()
        bad = ~np.isfinite(start_res) | (start_res > cfg.corrector_tol * 100.0)
        code[bad] = _BADSTART

        while True:
            act = np.nonzero(code == _ACTIVE)[0]
            if act.size == 0:
                break
            over = steps[act] >= cfg.max_steps
            code[act[over]] = _MAXSTEPS
            act = act[~over]
            if act.size == 0:
                continue
            steps[act] += 1

            ta = t[act]
            ha = h[act]
            # land exactly on t = 1 when the remaining interval fits the step
            last = (1.0 - ta) <= ha
            h_eff = np.where(last, 1.0 - ta, ha)
            t_new = np.where(last, 1.0, ta + ha)

            x_pred, sing_pred = _predict(system, hom, ta, t_new, h_eff, x[act], cfg)
            x_new, res_new, conv, sing_corr = _correct(system, hom, t_new, x_pred, cfg)
            sing_any = sing_pred | sing_corr

            norm_pred = np.abs(x_pred).max(axis=-1)
            norm_new = np.abs(x_new).max(axis=-1)
            accept = conv & ~sing_any & np.isfinite(norm_new) & (norm_new <= cfg.divergence_norm)
            blown = ~sing_any & ~accept & (
                ~np.isfinite(norm_pred) | (norm_pred > cfg.divergence_norm) | (norm_new > cfg.divergence_norm)
            )

            # accepted paths advance; exact arrival at t = 1 is terminal
            ai = act[accept]
            x[ai] = x_new[accept]
            t[ai] = t_new[accept]
            fin_res[ai] = res_new[accept]
            streak[ai] += 1
            grow = streak[ai] >= _GROW_AFTER
            h[ai[grow]] = np.minimum(h[ai[grow]] * _GROW_FACTOR, cfg.max_step)
            streak[ai[grow]] = 0
            code[ai[t[ai] >= 1.0]] = _SUCCESS

            # numeric blowup is terminal
            code[act[blown]] = _DIVERGED

            # everything else rejects the step and halves
            rej = ~accept & ~blown
            ri = act[rej]
            h[ri] *= 0.5
            streak[ri] = 0
            stalled = h[ri] < cfg.min_step
            si = ri[stalled]
            # a stall right after a singular linear solve points at the
            # discriminant; otherwise the step control simply gave up
            code[si[sing_any[rej][stalled]]] = _SINGULAR
            code[si[~sing_any[rej][stalled]]] = _MAXSTEPS

        # endgame salvage: paths that stalled almost at the target often sit
        # inside Newton's basin of their endpoint already
        if cfg.endgame_iters > 0:
            near = ((code == _MAXSTEPS) | (code == _SINGULAR)) & (t >= cfg.endgame_start)
            idx = np.nonzero(near)[0]
            if idx.size:
                p_target = hom.params_at(1.0)
                x_end, res_end, conv = newton_polish(
                    system, p_target, x[idx], tol=cfg.corrector_tol,
                    max_iters=cfg.endgame_iters, step_tol=cfg.corrector_step_tol,
                )
                ok = conv & (np.abs(x_end).max(axis=-1) <= cfg.divergence_norm)
                rows = idx[ok]
                x[rows] = x_end[ok]
                fin_res[rows] = res_end[ok]
                t[rows] = 1.0
                code[rows] = _SUCCESS

    results = []
    for i in range(nb):
        results.append(
            PathResult(
                status=_CODE_TO_STATUS[int(code[i])],
                endpoint=x[i].copy(),
                final_residual=float(fin_res[i]),
                steps_taken=int(steps[i]),
                t_reached=float(t[i]),
            )
        )
    return results


def track_path(
    system: ParametricSystem,
    start_params: np.ndarray,
    target_params: np.ndarray,
    start_solution: np.ndarray,
    cfg: TrackerConfig | None = None,
) -> PathResult:
    """Track a single path; raises BadStartSolutionError when the start point
    does not satisfy the system at start_params."""
    result = track_all(system, start_params, target_params, [np.asarray(start_solution)], cfg)[0]
    if result.status is PathStatus.BAD_START:
        raise BadStartSolutionError(
            f"start solution residual {result.final_residual:.3e} exceeds the precondition"
        )
    return result


def _collision_indices(results, mirror_velocity: bool, tol: float) -> list[int]:
    """Indices of successful paths whose endpoints coincide with another
    path's endpoint (or, when mirror_velocity, with its velocity mirror).

    A parameter homotopy maps distinct start roots to distinct target roots,
    so coinciding endpoints prove that at least one path was lost. With
    mirror_velocity (tracking one representative per v ↔ −v pair), landing
    on the mirror of another endpoint is equally a loss; a point that is its
    own mirror (v ≈ 0) is legitimate and not flagged.
    """
    idx = np.array([i for i, r in enumerate(results) if r.success], dtype=int)
    if idx.size < 2:
        return []
    ends = np.array([results[i].endpoint for i in idx])
    norms = np.abs(ends).max(axis=-1)
    thresh = tol * (1.0 + np.maximum(norms[:, None], norms[None, :]))
    upper = np.triu(np.ones((idx.size, idx.size), dtype=bool), k=1)

    dist = np.abs(ends[:, None, :] - ends[None, :, :]).max(axis=-1)
    clash = (dist <= thresh) & upper
    if mirror_velocity:
        mirrored = ends.copy()
        mirrored[:, 3:6] = -mirrored[:, 3:6]
        dist_m = np.abs(ends[:, None, :] - mirrored[None, :, :]).max(axis=-1)
        clash |= (dist_m <= thresh) & upper
    rows, cols = np.nonzero(clash)
    return sorted({int(idx[i]) for i in np.concatenate([rows, cols])}) if rows.size else []


def _resolvable(system, target_params: np.ndarray, results, indices: list[int],
                collision_tol: float) -> list[int]:
    """Keep only colliding paths whose coincidence actually proves a loss.

    A computed endpoint is accurate to about cond(J) * eps relative, so when
    that limit reaches the coincidence tolerance, two genuinely distinct
    roots of the target instance can land inside one another's error balls:
    the coincidence is then expected, not evidence of a lost path, and
    re-tracking with tighter steps just reproduces it. Physical instances
    whose line-of-sight speeds are far below the propagation speed sit close
    to the stratum where every measured frequency coincides, and there whole
    crowds of roots cluster below any fixed tolerance. Only endpoints whose
    Jacobian is well-conditioned enough to resolve the tolerance (with a
    100x safety margin) are worth repairing.
    """
    cap = collision_tol / (100.0 * np.finfo(float).eps)
    p = np.asarray(target_params, dtype=complex)
    keep = []
    for i in indices:
        jac = system.jacobian_unknowns(p, results[i].endpoint)
        try:
            cond = condition_estimate(jac)
        except SingularMatrixError:
            continue
        if cond <= cap:
            keep.append(i)
    return keep


def track_all_verified(
    system: ParametricSystem,
    start_params: np.ndarray,
    target_params: np.ndarray,
    start_solutions: Sequence[np.ndarray],
    cfg: TrackerConfig | None = None,
    mirror_velocity: bool = False,
    collision_tol: float = 1e-8,
    max_rounds: int = 2,
) -> list[PathResult]:
    """track_all plus collision repair.

    After tracking, any group of successful paths sharing a well-conditioned
    endpoint is re-tracked with progressively tighter step control (such a
    collision means a path jumped onto a neighboring solution curve, since a
    parameter homotopy carries distinct roots to distinct roots). Coinciding
    endpoints whose Jacobian conditioning makes them indistinguishable from
    a genuine root cluster are left alone; see _resolvable. Non-colliding
    paths keep their original, bit-identical results.
    """
    cfg = cfg if cfg is not None else TrackerConfig()
    starts = np.asarray(list(start_solutions), dtype=complex)
    results = track_all(system, start_params, target_params, starts, cfg)
    for round_ in range(max_rounds):
        bad = _collision_indices(results, mirror_velocity, collision_tol)
        bad = _resolvable(system, target_params, results, bad, collision_tol)
        if not bad:
            break
        # shrink the steps AND the forced-progress floor: basin jumps happen
        # exactly where step control hits min_step and the Euler fallback
        # pushes through, so retries must lower that floor, not just the cap
        shrink = 8.0 ** (round_ + 1)
        tighter = TrackerConfig(
            initial_step=cfg.initial_step / shrink,
            min_step=cfg.min_step / 100.0 ** (round_ + 1),
            max_step=cfg.max_step / shrink,
            corrector_tol=cfg.corrector_tol,
            max_corrector_iters=cfg.max_corrector_iters,
            divergence_norm=cfg.divergence_norm,
            max_steps=cfg.max_steps * 4 * (round_ + 1),
            gamma=cfg.gamma,
            endgame_start=cfg.endgame_start,
            endgame_iters=cfg.endgame_iters,
            corrector_step_tol=cfg.corrector_step_tol,
        )
        redone = track_all(system, start_params, target_params, starts[bad], tighter)
        for j, res in zip(bad, redone):
            results[j] = res
    return results


def newton_polish(
    system: ParametricSystem,
    params: np.ndarray,
    x: np.ndarray,
    tol: float = 1e-12,
    max_iters: int = 10,
    step_tol: float = 0.0,
):
    """Newton iteration at fixed parameters for a batch of points.

    Returns (polished points, normalized residuals, converged mask). A
    singular Jacobian does not by itself abandon a point: the factorization
    substitutes unit pivots for the broken ones, and the resulting step is
    taken whenever it is finite and does not worsen the residual — a root
    can sit exactly on a rank-deficient locus (a receiver with vanishing
    line-of-sight speed zeroes its whole Jacobian row there) while Newton
    still contracts from a hair off it. Points whose step or residual goes
    non-finite, or whose singular step fails to improve, are left at their
    last good iterate with converged False. A positive step_tol also accepts
    points whose Newton update falls below it relative to the iterate, for
    instances whose residual floor sits above tol. Real inputs produce
    exactly real iterates (every operation preserves zero imaginary parts).
    """
    params = np.asarray(params, dtype=complex)
    x = np.atleast_2d(np.asarray(x, dtype=complex)).copy()
    with np.errstate(all="ignore"):
        res = _normalized_residual(system, params, x)
        converged = res <= tol
        stuck = np.zeros(len(x), dtype=bool)
        for _ in range(max_iters):
            todo = ~converged & ~stuck & np.isfinite(res)
            if not todo.any():
                break
            idx = np.nonzero(todo)[0]
            p_sub = params[idx] if params.ndim == 2 else params
            jx = system.jacobian_unknowns(p_sub, x[idx])
            g = _evaluate_precise(system, p_sub, x[idx])
            lu, piv, sing = lu_factor(jx)
            delta = lu_solve(lu, piv, g)
            usable = np.isfinite(delta).all(axis=-1)
            trial = x[idx] - np.where(usable[:, None], delta, 0.0)
            if params.ndim == 2:
                res_new = _normalized_residual(system, params[idx], trial)
            else:
                res_new = _normalized_residual(system, params, trial)
            # a singular step must pay its way; a regular one is trusted
            accept = usable & (~sing | (res_new <= res[idx]))
            rows = idx[accept]
            x[rows] = trial[accept]
            res[rows] = res_new[accept]
            stuck[idx[~accept]] = True
            dnorm = np.abs(delta[accept]).max(axis=-1) / (1.0 + np.abs(x[rows]).max(axis=-1))
            converged[rows] = (res[rows] <= tol) | (dnorm <= step_tol)
        bad = ~np.isfinite(res)
        converged[bad] = False
    return x, res, converged


class SquareRootFamily:
    """Toy one-parameter family x^2 - p = 0, exposed for tracker tests."""

    n_unknowns = 1
    n_params = 1

    def evaluate(self, params, x):
        params = np.asarray(params)
        x = np.asarray(x)
        return x * x - params

    def jacobian_unknowns(self, params, x):
        x = np.asarray(x)
        return (2.0 * x)[..., None]

    def jacobian_parameters(self, params, x):
        params = np.asarray(params)
        x = np.asarray(x)
        shape = np.broadcast_shapes(params.shape, x.shape)
        return np.full(shape + (1,), -1.0, dtype=complex)

    def residual_scale(self, params, x):
        params = np.asarray(params)
        x = np.asarray(x)
        return np.abs(x * x) + np.abs(params) + np.finfo(float).tiny
