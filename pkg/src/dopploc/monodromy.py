"""Start-system construction by monodromy.

A start pack is one generic complex instance of a family together with its
complete solution set. Building one is a two-step process: seed_instance
manufactures a random complex instance that has one known exact solution
(the measured frequencies are back-solved from randomly drawn unknowns), and
populate grows that single solution into the full set by tracking the known
solutions around random closed loops in parameter space until the set size
stabilizes at the family's root count.

Packs for the four family variants ship with the package so end users never
pay the monodromy cost; regeneration is exposed through the command line.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import (
    BadStartSolutionError,
    DegenerateDrawError,
    NoProgressError,
    NotSymmetricError,
    PackMissingError,
)
from .model import DopplerSystem
from .tracking import PathResult, TrackerConfig, newton_polish, track_all

__all__ = [
    "StartPack",
    "EXPECTED_ROOT_COUNTS",
    "HALVED_ROOT_COUNTS",
    "seed_instance",
    "populate",
    "build_pack",
    "halve_by_symmetry",
    "expand_by_symmetry",
    "reflect_closure",
    "rebase_pack",
    "default_pack",
    "save_pack",
    "load_pack",
]

# Full root counts of the four family variants, keyed by
# (n_obs, known_frequency, stationary). Stationary solution sets are closed
# under v -> -v, so only half their paths need tracking; the halved counts
# are what a solver actually follows.
EXPECTED_ROOT_COUNTS = {
    (7, False, False): 672,
    (6, True, False): 128,
    (7, False, True): 296,
    (6, True, True): 48,
}

HALVED_ROOT_COUNTS = {
    (7, False, True): 148,
    (6, True, True): 24,
}

# Solutions closer than this in max-norm are considered the same root.
DEDUP_TOL = 1e-6
_POLISH_TOL = 1e-12


@dataclass(frozen=True)
class StartPack:
    """A generic complex instance of a family with its full solution set."""

    n_obs: int
    known_frequency: bool
    stationary: bool
    start_params: np.ndarray
    solutions: np.ndarray
    rng_seed: int
    halved: bool = False

    @property
    def root_count(self) -> int:
        return len(self.solutions)

    @property
    def family_key(self) -> tuple:
        return (self.n_obs, self.known_frequency, self.stationary)

    def system(self) -> DopplerSystem:
        return DopplerSystem(
            n_obs=self.n_obs,
            known_frequency=self.known_frequency,
            stationary=self.stationary,
        )

    def validate(self, residual_tol: float = 1e-9, distinct_tol: float = DEDUP_TOL):
        """Check the pack invariants: every solution solves the start instance,
        and no two solutions coincide. Raises BadStartSolutionError."""
        sys = self.system()
        if self.solutions.ndim != 2 or self.solutions.shape[1] != sys.n_unknowns:
            raise BadStartSolutionError(
                f"solution array shape {self.solutions.shape} does not fit the family"
            )
        _, res, ok = newton_polish(sys, self.start_params, self.solutions, tol=residual_tol, max_iters=0)
        if not ok.all():
            worst = float(res.max())
            raise BadStartSolutionError(f"pack solutions do not satisfy the start instance (worst residual {worst:.3e})")
        for i in range(len(self.solutions) - 1):
            d = np.abs(self.solutions[i + 1 :] - self.solutions[i]).max(axis=1)
            if d.min() <= distinct_tol:
                raise BadStartSolutionError("pack contains duplicate solutions")


def _random_complex(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _random_gamma(rng: np.random.Generator) -> complex:
    angle = 2.0 * np.pi * rng.uniform()
    return complex(np.cos(angle), np.sin(angle))


def seed_instance(system: DopplerSystem, rng: np.random.Generator):
    """Build a random complex instance of the family with one exact solution.

    Unknowns and receiver states are drawn complex Gaussian (receiver
    velocities exactly zero for stationary families); each measured frequency
    is then one of the two roots of the squared equation, which is quadratic
    in f_i, with the branch chosen at random.

    Returns (parameter vector, solution vector). Retries internally when a
    draw lands too close to a degeneracy; raises DegenerateDrawError after
    100 attempts.
    """
    n = system.n_obs
    for _ in range(100):
        r = _random_complex(rng, 3)
        v = _random_complex(rng, 3)
        f = system.fixed_frequency if system.known_frequency else complex(_random_complex(rng, ()))
        pos = _random_complex(rng, (n, 3))
        vel = np.zeros((n, 3), dtype=complex) if system.stationary else _random_complex(rng, (n, 3))
        c = complex(_random_complex(rng, ()))
        signs = rng.integers(0, 2, size=n) * 2 - 1
        dr = pos - r
        dv = vel - v
        rho2 = (dr * dr).sum(axis=1)
        dop = (dr * dv).sum(axis=1)
        if abs(c) < 1e-2 or abs(f) < 1e-2 or np.abs(rho2).min() < 1e-6:
            continue
        rho = np.sqrt(rho2)
        # c^2 (f - f_i)^2 rho^2 = f^2 dop^2 has the two roots f_i = f (1 -+ dop/(c rho))
        freqs = f * (1.0 - signs * dop / (c * rho))
        params = np.concatenate([pos.ravel(), vel.ravel(), freqs, [c]])
        x = np.concatenate([r, v] if system.known_frequency else [r, v, [f]])
        res = np.abs(system.evaluate(params, x)) / system.residual_scale(params, x)
        if res.max() < 1e-12:
            return params, x
    raise DegenerateDrawError("could not draw a non-degenerate seed instance in 100 attempts")


def _merge(solutions: np.ndarray, candidates: np.ndarray, tol: float = DEDUP_TOL):
    """Insert candidates not already present (max-norm tolerance). Returns
    (merged array, number added). Insertion order is the candidate order."""
    added = 0
    for cand in candidates:
        if solutions.shape[0]:
            if np.abs(solutions - cand).max(axis=1).min() <= tol:
                continue
        solutions = np.vstack([solutions, cand[None, :]])
        added += 1
    return solutions, added


def populate(
    system: DopplerSystem,
    seed_pair,
    cfg: TrackerConfig | None = None,
    rng: np.random.Generator | None = None,
    *,
    rng_seed: int = 0,
    expected_count: int | None | str = "auto",
    stabilization_rounds: int = 5,
    no_progress_limit: int = 20,
    max_loops: int = 500,
) -> StartPack:
    """Grow a single known solution into the family's full solution set.

    Each loop tracks every known solution around a random triangle in
    parameter space (base -> p1 -> p2 -> base, a fresh random gamma per
    edge), polishes the returning endpoints, and merges new roots into the
    set. Stops once the count has been stable for `stabilization_rounds`
    consecutive loops and matches the expected count when one is known.
    Pass expected_count=None to disable the expectation (research use).

    Path endpoints that fail to polish (singular Jacobian) are discarded;
    the family is assumed to have only regular isolated roots.

    Raises NoProgressError when no new solutions have appeared for
    `no_progress_limit` consecutive loops while the set is still short of
    the expected count, when the set overshoots the expected count, or when
    `max_loops` is exhausted.
    """
    cfg = cfg if cfg is not None else TrackerConfig()
    rng = rng if rng is not None else np.random.default_rng(rng_seed)
    base_params, x0 = seed_pair
    base_params = np.asarray(base_params, dtype=complex)
    expected = EXPECTED_ROOT_COUNTS.get(system.family_key) if expected_count == "auto" else expected_count

    sols, _, ok = newton_polish(system, base_params, np.atleast_2d(np.asarray(x0, dtype=complex)), tol=_POLISH_TOL)
    if not ok.all():
        raise BadStartSolutionError("seed solution does not satisfy the seed instance")

    stable = 0
    no_new = 0
    for _ in range(max_loops):
        p1 = _random_complex(rng, base_params.shape)
        p2 = _random_complex(rng, base_params.shape)
        ends = sols
        for leg_start, leg_end in ((base_params, p1), (p1, p2), (p2, base_params)):
            leg_cfg = replace(cfg, gamma=_random_gamma(rng))
            results = track_all(system, leg_start, leg_end, ends, leg_cfg)
            ends = np.array([r.endpoint for r in results if r.success])
            if ends.shape[0] == 0:
                break
        added = 0
        if ends.shape[0]:
            polished, _, conv = newton_polish(system, base_params, ends, tol=_POLISH_TOL)
            sols, added = _merge(sols, polished[conv])
        if added == 0:
            stable += 1
            no_new += 1
        else:
            stable = 0
            no_new = 0
        count = sols.shape[0]
        if expected is not None and count > expected:
            raise NoProgressError(
                f"monodromy found {count} solutions, more than the expected {expected}; dedup or tracking failure"
            )
        if stable >= stabilization_rounds and (expected is None or count == expected):
            return StartPack(
                n_obs=system.n_obs,
                known_frequency=system.known_frequency,
                stationary=system.stationary,
                start_params=base_params,
                solutions=sols,
                rng_seed=rng_seed,
            )
        if expected is not None and count < expected and no_new >= no_progress_limit:
            raise NoProgressError(
                f"no new solutions in {no_progress_limit} loops; stuck at {count} of {expected}"
            )
    raise NoProgressError(f"loop budget {max_loops} exhausted at {sols.shape[0]} solutions")


def build_pack(
    system: DopplerSystem,
    rng_seed: int = 0,
    cfg: TrackerConfig | None = None,
    halve: bool = False,
    **populate_kwargs,
) -> StartPack:
    """Seed and populate a start pack for the family in one call."""
    rng = np.random.default_rng(rng_seed)
    pair = seed_instance(system, rng)
    pack = populate(system, pair, cfg, rng, rng_seed=rng_seed, **populate_kwargs)
    if halve:
        pack = halve_by_symmetry(pack)
    return pack


def halve_by_symmetry(pack: StartPack, tol: float = DEDUP_TOL) -> StartPack:
    """Keep one representative of each (r, v, f) / (r, -v, f) solution pair.

    Only valid for stationary families, whose solution sets are closed under
    velocity negation. Solutions with v = 0 are their own mate and are kept
    once. Raises NotSymmetricError when a mate is missing or the family is
    not stationary.
    """
    if not pack.stationary:
        raise NotSymmetricError("velocity-negation symmetry requires a stationary family")
    sys = pack.system()
    sols = pack.solutions
    used = np.zeros(len(sols), dtype=bool)
    keep = []
    for i in range(len(sols)):
        if used[i]:
            continue
        mate = sys.reflect_velocity(sols[i])
        dist = np.abs(sols - mate).max(axis=1)
        j = int(dist.argmin())
        if dist[j] > tol:
            raise NotSymmetricError(
                f"solution {i} has no velocity-negated mate within {tol:g} (nearest {dist[j]:.3e})"
            )
        used[i] = True
        used[j] = True
        keep.append(i)
    return replace(pack, solutions=sols[keep], halved=True)


def expand_by_symmetry(system: DopplerSystem, results: list[PathResult], tol: float = 1e-9) -> list[PathResult]:
    """Append the velocity-negated mate of every Success endpoint.

    Used after tracking a halved pack against a stationary target: the mates
    were never tracked but are exact solutions by symmetry, with identical
    residuals. Endpoints that are their own mate are not duplicated.
    """
    out = list(results)
    for r in results:
        if not r.success:
            continue
        mate = system.reflect_velocity(r.endpoint)
        if np.abs(mate - r.endpoint).max() <= tol:
            continue
        out.append(PathResult(r.status, mate, r.final_residual, r.steps_taken, r.t_reached))
    return out


def reflect_closure(system: DopplerSystem, solutions: np.ndarray, tol: float = DEDUP_TOL) -> np.ndarray:
    """Union of a solution set with its velocity-negated image, deduplicated."""
    sols = np.atleast_2d(np.asarray(solutions, dtype=complex))
    merged, _ = _merge(sols.copy(), system.reflect_velocity(sols), tol)
    return merged


def rebase_pack(pack: StartPack, c: complex) -> StartPack:
    """Exact copy of a pack with its propagation speed moved to c.

    Multiplying every velocity and the speed by the same factor maps
    solutions to solutions (both terms of each equation pick up the factor
    squared), so the returned pack is exact without tracking anything. Used
    before solving so the homotopy holds the speed constant: tracking across
    a large speed change distorts the deformation badly.
    """
    n = pack.n_obs
    c_old = complex(pack.start_params[7 * n])
    if c_old == 0.0:
        raise BadStartSolutionError("pack instance has zero propagation speed")
    kappa = complex(c) / c_old
    params = np.array(pack.start_params, dtype=complex)
    params[3 * n : 6 * n] *= kappa
    params[7 * n] = complex(c)
    sols = np.array(pack.solutions, dtype=complex)
    sols[:, 3:6] *= kappa
    return replace(pack, start_params=params, solutions=sols)


_PACK_FILES = {
    (7, False, False): "moving_unknown_f.pack",
    (6, True, False): "moving_known_f.pack",
    (7, False, True): "stationary_unknown_f.pack",
    (6, True, True): "stationary_known_f.pack",
}


def default_pack(system: DopplerSystem) -> StartPack:
    """Load the pre-computed start pack shipped for the family.

    The stationary unknown-frequency pack ships halved (148 paths); use
    expand_by_symmetry on its tracked endpoints. Raises PackMissingError if
    the family has no shipped pack.
    """
    from importlib import resources

    from . import fileio

    name = _PACK_FILES.get(system.family_key)
    if name is None:
        raise PackMissingError(f"no shipped start pack for family {system.family_key}")
    path = resources.files("dopploc").joinpath("packs", name)
    if not path.is_file():
        raise PackMissingError(f"start pack {name} is not installed")
    with resources.as_file(path) as real_path:
        return fileio.load_pack(real_path, family=system)


def save_pack(pack: StartPack, path) -> None:
    """Write a start pack to a checksummed text file (see fileio)."""
    from . import fileio

    fileio.save_pack(pack, path)


def load_pack(path, family: DopplerSystem | None = None) -> StartPack:
    """Read a start pack, optionally checking it against a family."""
    from . import fileio

    return fileio.load_pack(path, family=family)
