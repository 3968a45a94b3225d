"""Doppler forward model and the squared polynomial system built from it.

A transmitter with state (r, v, f) is observed by N receivers with known
positions, velocities, and measured frequencies. Each receiver contributes
one polynomial equation obtained by squaring the range-rate relation, so the
system is polynomial in the unknowns and in every parameter. The parameter
vector is flattened in a fixed order (receiver positions, receiver
velocities, measured frequencies, signal speed) so cached start packs stay
valid across versions.

All evaluation routines broadcast over leading batch dimensions: unknowns of
shape (..., dim) with parameters of shape (..., 7N+1) produce residuals of
shape (..., N).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import (
    CoincidentPointsError,
    DimensionMismatchError,
    InvalidScaleError,
    ZeroFrequencyError,
)

__all__ = [
    "TransmitterState",
    "Receiver",
    "DopplerSystem",
    "ScaleFrame",
    "predict_frequency",
    "unsquared_residual",
    "pack_parameters",
    "unpack_parameters",
    "default_frame",
    "rescale",
]

# Two points closer than this (relative to the geometry size) have no
# usable line of sight.
COINCIDENT_RTOL = 1e-12


def _vec3(x) -> np.ndarray:
    out = np.asarray(x)
    if out.shape != (3,):
        raise DimensionMismatchError(f"expected a 3-vector, got shape {out.shape}")
    return out


@dataclass(frozen=True)
class TransmitterState:
    """Source state: position r, velocity v, transmit frequency f."""

    r: np.ndarray
    v: np.ndarray
    f: float

    def __post_init__(self):
        object.__setattr__(self, "r", _vec3(self.r))
        object.__setattr__(self, "v", _vec3(self.v))

    def as_unknowns(self, known_frequency: bool) -> np.ndarray:
        """Flatten to the unknown vector: [r, v] or [r, v, f]."""
        if known_frequency:
            return np.concatenate([self.r, self.v]).astype(complex)
        return np.concatenate([self.r, self.v, [self.f]]).astype(complex)

    @staticmethod
    def from_unknowns(x: np.ndarray, known_frequency: bool, fixed_frequency: float = 1.0) -> "TransmitterState":
        x = np.asarray(x)
        dim = 6 if known_frequency else 7
        if x.shape != (dim,):
            raise DimensionMismatchError(f"expected unknown vector of length {dim}, got {x.shape}")
        f = fixed_frequency if known_frequency else x[6]
        return TransmitterState(r=x[0:3], v=x[3:6], f=f)


@dataclass(frozen=True)
class Receiver:
    """One receiver: position, velocity, measured frequency, group label.

    f is None for a receiver that has not measured anything yet (scenario
    definitions before simulation). The group label tags receivers that
    share a noise model (for example surface stations versus an orbiting
    platform); it plays no role in the polynomial system.
    """

    r: np.ndarray
    v: np.ndarray
    f: float | None = None
    group: str = "default"

    def __post_init__(self):
        object.__setattr__(self, "r", _vec3(self.r))
        object.__setattr__(self, "v", _vec3(self.v))
        if not np.all(np.isfinite(self.r)) or not np.all(np.isfinite(self.v)):
            raise DimensionMismatchError("receiver state must be finite")
        if self.f is not None and (not np.isfinite(self.f) or self.f <= 0):
            raise ZeroFrequencyError(f"measured frequency must be positive, got {self.f}")


@dataclass(frozen=True)
class ScaleFrame:
    """Units (length, time, frequency) used to non-dimensionalize a problem.

    The squared system is homogeneous under independent length, time, and
    frequency scalings, so the frequency unit does not have to equal 1/time;
    solutions of the scaled system map exactly back to the original.
    """

    length: float = 1.0
    time: float = 1.0
    frequency: float = 1.0

    def __post_init__(self):
        for name in ("length", "time", "frequency"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise InvalidScaleError(f"{name} unit must be positive and finite, got {val}")

    @property
    def speed(self) -> float:
        return self.length / self.time

    def scale_receiver(self, rx: Receiver) -> Receiver:
        f = None if rx.f is None else rx.f / self.frequency
        return Receiver(r=rx.r / self.length, v=rx.v / self.speed, f=f, group=rx.group)

    def unscale_receiver(self, rx: Receiver) -> Receiver:
        f = None if rx.f is None else rx.f * self.frequency
        return Receiver(r=rx.r * self.length, v=rx.v * self.speed, f=f, group=rx.group)

    def scale_state(self, tx: TransmitterState) -> TransmitterState:
        return TransmitterState(r=tx.r / self.length, v=tx.v / self.speed, f=tx.f / self.frequency)

    def unscale_state(self, tx: TransmitterState) -> TransmitterState:
        return TransmitterState(r=tx.r * self.length, v=tx.v * self.speed, f=tx.f * self.frequency)

    def scale_unknowns(self, x: np.ndarray, known_frequency: bool) -> np.ndarray:
        x = np.asarray(x, dtype=complex).copy()
        x[..., 0:3] /= self.length
        x[..., 3:6] /= self.speed
        if not known_frequency:
            x[..., 6] /= self.frequency
        return x

    def unscale_unknowns(self, x: np.ndarray, known_frequency: bool) -> np.ndarray:
        x = np.asarray(x, dtype=complex).copy()
        x[..., 0:3] *= self.length
        x[..., 3:6] *= self.speed
        if not known_frequency:
            x[..., 6] *= self.frequency
        return x


@dataclass(frozen=True)
class DopplerSystem:
    """Square polynomial system with one squared Doppler equation per receiver.

    Fields
    ------
    n_obs : number of receivers used as equations (6 if known_frequency else 7)
    known_frequency : when True, f is substituted as the constant
        ``fixed_frequency`` and the unknowns reduce to (r, v)
    stationary : asserts every receiver velocity in bound parameter vectors
        is exactly zero, which makes the solution set symmetric under v -> -v
    c : nominal propagation speed used when binding receivers; evaluation
        always reads the speed from the parameter vector itself
    fixed_frequency : the substituted transmit frequency in known-f mode
    """

    n_obs: int
    known_frequency: bool = False
    stationary: bool = False
    c: float = 1.0
    fixed_frequency: float = 1.0

    def __post_init__(self):
        expected = 6 if self.known_frequency else 7
        if self.n_obs != expected:
            raise DimensionMismatchError(
                f"square system needs n_obs = {expected} with known_frequency={self.known_frequency}, got {self.n_obs}"
            )

    @property
    def n_unknowns(self) -> int:
        return 6 if self.known_frequency else 7

    @property
    def n_params(self) -> int:
        return 7 * self.n_obs + 1

    @property
    def family_key(self) -> tuple:
        """Descriptor used to match start packs to systems."""
        return (self.n_obs, self.known_frequency, self.stationary)

    # -- shape checking -------------------------------------------------

    def _check(self, params: np.ndarray, x: np.ndarray):
        if params.shape[-1] != self.n_params:
            raise DimensionMismatchError(
                f"parameter vector length {params.shape[-1]}, expected {self.n_params}"
            )
        if x.shape[-1] != self.n_unknowns:
            raise DimensionMismatchError(
                f"unknown vector length {x.shape[-1]}, expected {self.n_unknowns}"
            )

    def _pieces(self, params: np.ndarray, x: np.ndarray):
        """Common subexpressions; everything broadcasts over batch dims."""
        n = self.n_obs
        pos = params[..., : 3 * n].reshape(params.shape[:-1] + (n, 3))
        vel = params[..., 3 * n : 6 * n].reshape(params.shape[:-1] + (n, 3))
        freq = params[..., 6 * n : 7 * n]
        c = params[..., 7 * n]
        r = x[..., 0:3]
        v = x[..., 3:6]
        if self.known_frequency:
            f = np.full(x.shape[:-1], self.fixed_frequency, dtype=x.dtype)
        else:
            f = x[..., 6]
        dr = pos - r[..., None, :]
        dv = vel - v[..., None, :]
        rho2 = (dr * dr).sum(axis=-1)
        dop = (dr * dv).sum(axis=-1)
        df = f[..., None] - freq
        return pos, vel, freq, c, r, v, f, dr, dv, rho2, dop, df

    # -- evaluation and derivatives --------------------------------------

    def evaluate(self, params: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Residuals of the squared system, shape (..., n_obs)."""
        params = np.asarray(params)
        x = np.asarray(x)
        self._check(params, x)
        _, _, _, c, _, _, f, _, _, rho2, dop, df = self._pieces(params, x)
        c2 = (c * c)[..., None]
        f2 = (f * f)[..., None]
        return c2 * df * df * rho2 - f2 * dop * dop

    def residual_scale(self, params: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Magnitude of the two squared terms, used to normalize residuals.

        Physical instances can make both terms of every equation tiny (the
        frequency shifts are small compared to f), so convergence tests
        divide by this scale instead of comparing raw residuals. A receiver
        whose line-of-sight speed vanishes zeroes both of its terms at the
        solution, where a purely per-equation scale would judge rounding
        dust against itself; the instance-level floor keeps such an equation
        measured against the size of its neighbors instead.
        """
        params = np.asarray(params)
        x = np.asarray(x)
        self._check(params, x)
        _, _, _, c, _, _, f, _, _, rho2, dop, df = self._pieces(params, x)
        c2 = (c * c)[..., None]
        f2 = (f * f)[..., None]
        s = np.abs(c2 * df * df * rho2) + np.abs(f2 * dop * dop)
        return s + 1e-2 * s.max(axis=-1, keepdims=True) + np.finfo(float).tiny

    def jacobian_unknowns(self, params: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Analytic derivative with respect to the unknowns, shape (..., n_obs, dim)."""
        params = np.asarray(params)
        x = np.asarray(x)
        self._check(params, x)
        _, _, _, c, _, _, f, dr, dv, rho2, dop, df = self._pieces(params, x)
        c2 = (c * c)[..., None]
        f2 = (f * f)[..., None]
        out = np.zeros(np.broadcast_shapes(params.shape[:-1], x.shape[:-1]) + (self.n_obs, self.n_unknowns), dtype=complex)
        # d/dr: rho2 and dop both depend on r through dr = r_i - r
        out[..., :, 0:3] = -2.0 * (c2 * df * df)[..., None] * dr + 2.0 * (f2 * dop)[..., None] * dv
        # d/dv: only dop depends on v
        out[..., :, 3:6] = 2.0 * (f2 * dop)[..., None] * dr
        if not self.known_frequency:
            out[..., :, 6] = 2.0 * c2[..., 0, None] * df * rho2 - 2.0 * f[..., None] * dop * dop
        return out

    def jacobian_parameters(self, params: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Analytic derivative with respect to all 7N+1 parameters.

        Row i only touches receiver i's position, velocity, and frequency
        columns plus the shared speed column.
        """
        params = np.asarray(params)
        x = np.asarray(x)
        self._check(params, x)
        _, _, _, c, _, _, f, dr, dv, rho2, dop, df = self._pieces(params, x)
        n = self.n_obs
        c2 = (c * c)[..., None]
        f2 = (f * f)[..., None]
        shape = np.broadcast_shapes(params.shape[:-1], x.shape[:-1])
        out = np.zeros(shape + (n, self.n_params), dtype=complex)
        rows = np.arange(n)
        cols3 = 3 * rows[:, None] + np.arange(3)
        # receiver position block (opposite sign of the d/dr derivative)
        dpos = 2.0 * (c2 * df * df)[..., None] * dr - 2.0 * (f2 * dop)[..., None] * dv
        out[..., rows[:, None], cols3] = dpos
        # receiver velocity block
        out[..., rows[:, None], 3 * n + cols3] = -2.0 * (f2 * dop)[..., None] * dr
        # measured frequency column
        out[..., rows, 6 * n + rows] = -2.0 * c2[..., 0, None] * df * rho2
        # shared propagation speed column
        out[..., :, 7 * n] = 2.0 * c[..., None] * df * df * rho2
        return out

    # -- solution-set helpers --------------------------------------------

    def reflect_velocity(self, x: np.ndarray) -> np.ndarray:
        """Map a solution to its v -> -v mate (exact for stationary receivers)."""
        out = np.array(x, dtype=complex)
        out[..., 3:6] *= -1.0
        return out


def pack_parameters(receivers, c: float) -> np.ndarray:
    """Flatten receivers into a parameter vector: positions, velocities, frequencies, c."""
    if any(rx.f is None for rx in receivers):
        raise ZeroFrequencyError("every receiver needs a measured frequency to build parameters")
    pos = np.concatenate([np.asarray(rx.r, dtype=float) for rx in receivers])
    vel = np.concatenate([np.asarray(rx.v, dtype=float) for rx in receivers])
    freq = np.array([rx.f for rx in receivers], dtype=float)
    return np.concatenate([pos, vel, freq, [float(c)]])


def unpack_parameters(params: np.ndarray, n_obs: int):
    """Inverse of pack_parameters: (positions (N,3), velocities (N,3), frequencies (N,), c)."""
    params = np.asarray(params)
    if params.shape != (7 * n_obs + 1,):
        raise DimensionMismatchError(f"parameter vector length {params.shape}, expected {(7 * n_obs + 1,)}")
    pos = params[: 3 * n_obs].reshape(n_obs, 3)
    vel = params[3 * n_obs : 6 * n_obs].reshape(n_obs, 3)
    freq = params[6 * n_obs : 7 * n_obs]
    return pos, vel, freq, params[7 * n_obs]


def predict_frequency(tx: TransmitterState, rx_r, rx_v, c: float) -> float:
    """Frequency seen by one receiver: f_i = (1 - range_rate/c) * f."""
    rx_r = _vec3(rx_r)
    rx_v = _vec3(rx_v)
    dr = rx_r - tx.r
    rho = float(np.linalg.norm(dr))
    size = 1.0 + max(float(np.linalg.norm(rx_r)), float(np.linalg.norm(tx.r)))
    if rho < COINCIDENT_RTOL * size:
        raise CoincidentPointsError("receiver coincides with the transmitter; range rate undefined")
    rho_dot = float(dr @ (rx_v - tx.v)) / rho
    return (1.0 - rho_dot / c) * tx.f


def unsquared_residual(tx: TransmitterState, rx: Receiver, c: float):
    """Sign-sensitive range-rate residual: rho*c*(f - f_i)/f - (r_i - r)^T (v_i - v).

    Zero only for candidates that satisfy the original Doppler relation, not
    merely its square; used to discard wrong-sign roots. Takes the principal
    square root for complex inputs.
    """
    dr = np.asarray(rx.r) - np.asarray(tx.r)
    rho = np.sqrt(complex((dr * dr).sum()))
    size = 1.0 + max(float(np.linalg.norm(np.real(rx.r))), float(np.linalg.norm(np.real(tx.r))))
    if abs(rho) < COINCIDENT_RTOL * size:
        raise CoincidentPointsError("receiver coincides with the transmitter")
    if tx.f == 0:
        raise ZeroFrequencyError("transmit frequency must be nonzero")
    dop = (dr * (np.asarray(rx.v) - np.asarray(tx.v))).sum()
    val = rho * c * (tx.f - rx.f) / tx.f - dop
    if abs(np.imag(val)) == 0.0:
        return float(np.real(val))
    return complex(val)


def default_frame(receivers, c: float, f_known: float | None = None) -> ScaleFrame:
    """Units that make the problem O(1): c -> 1, frequencies near 1.

    Length is the median receiver distance from the origin, time follows
    from the propagation speed, and the frequency unit is the known transmit
    frequency when given (so one start pack serves every known-f problem) or
    the median measured frequency otherwise.
    """
    dist = np.array([np.linalg.norm(rx.r) for rx in receivers])
    length = float(np.median(dist))
    if not np.isfinite(length) or length <= 0:
        length = 1.0
    time = length / float(c)
    if f_known is not None:
        frequency = float(f_known)
    else:
        frequency = float(np.median([rx.f for rx in receivers]))
    return ScaleFrame(length=length, time=time, frequency=frequency)


def doppler_frame(receivers, c: float, f_known: float | None = None) -> ScaleFrame:
    """Units that make the Doppler velocities O(1) instead of c.

    Same length and frequency units as default_frame, but the time unit is
    chosen so the speed unit matches the line-of-sight speeds implied by the
    measured frequency spread, c * max|f_i - f~| / f~. Slow sources in a fast
    medium otherwise land every solution within v/c of the degenerate
    configuration where all measured frequencies coincide, which path
    tracking cannot resolve. Falls back to default_frame when the spread
    vanishes.
    """
    base = default_frame(receivers, c, f_known)
    freqs = np.array([rx.f for rx in receivers], dtype=float)
    spread = float(np.abs(freqs - base.frequency).max())
    v_char = float(c) * spread / base.frequency
    if not np.isfinite(v_char) or v_char < 1e-9 * float(c):
        return base
    return ScaleFrame(length=base.length, time=base.length / v_char, frequency=base.frequency)


def rescale(sys: DopplerSystem, params: np.ndarray, frame: ScaleFrame):
    """Non-dimensionalize a system and parameter vector by a scale frame.

    Solutions of the scaled system map exactly to solutions of the original
    under the inverse scaling of the unknowns.
    """
    params = np.asarray(params)
    n = sys.n_obs
    if params.shape[-1] != 7 * n + 1:
        raise DimensionMismatchError(f"parameter vector length {params.shape[-1]}, expected {7 * n + 1}")
    out = np.array(params, dtype=params.dtype)
    out[..., : 3 * n] /= frame.length
    out[..., 3 * n : 6 * n] /= frame.speed
    out[..., 6 * n : 7 * n] /= frame.frequency
    out[..., 7 * n] /= frame.speed
    scaled_sys = replace(sys, c=sys.c / frame.speed, fixed_frequency=sys.fixed_frequency / frame.frequency)
    return scaled_sys, out
