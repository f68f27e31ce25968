"""Physical model of a randomly driven nonlinear reservoir.

The observable S(t) obeys the scalar stochastic differential equation
(Stratonovich convention)

    dS/dt = r(t) - (1/K) (1 + gamma/2) S + sqrt(gamma/K) S eta(t),

with input r(t) > 0, retention parameter K > 0, relative noise strength
gamma > 0, and unit white noise eta. Substituting

    beta = sqrt(T gamma / K),      S(t) = (T gamma r(t) / beta^2) e^{beta q(t)}

turns it into an additive-noise equation for q(t) on the horizon [0, T],

    dq/dt = (beta / (T gamma)) e^{-beta q} - rho(t)/T + eta(t)/sqrt(T),
    rho(t) = (T/beta) d/dt ln r(t) + (2 + gamma) beta / (2 gamma),

which is the form every discretized quantity in this package is built on.
Observations are noisy logarithmic readings y_s with
ln y_s = ln(S(t_s)/K) + sigma eps_s, eps_s ~ N(0, 1).

This module holds the parameter containers, input-signal abstraction,
coordinate transforms, the discretized drift profile rho_i, the analytic
equilibrium law under constant input, the forward (Euler-Maruyama)
simulator, and synthetic-observation generation.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NonFiniteError, ValidationError

__all__ = [
    "PhysicalParams",
    "DimensionlessParams",
    "InputSignal",
    "ObservationModel",
    "TimeSeriesData",
    "TruthPath",
    "to_dimensionless",
    "from_dimensionless",
    "path_transform",
    "path_inverse",
    "rho_discrete",
    "equilibrium_pdf",
    "equilibrium_moments",
    "simulate_truth",
    "generate_observations",
]


# --------------------------------------------------------------------------
# parameter containers


@dataclass(frozen=True)
class PhysicalParams:
    """Reservoir parameters in physical units: retention K, noise gamma,
    and the time horizon T of the observation window."""

    K: float
    gamma: float
    T: float

    def __post_init__(self):
        if not (self.K > 0 and math.isfinite(self.K)):
            raise ValidationError(f"K must be positive and finite, got {self.K}")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValidationError(f"gamma must be positive and finite, got {self.gamma}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValidationError(f"T must be positive and finite, got {self.T}")


@dataclass(frozen=True)
class DimensionlessParams:
    """Sampler-facing parameters theta = (beta, gamma)."""

    beta: float
    gamma: float

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValidationError(f"beta must be positive and finite, got {self.beta}")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValidationError(f"gamma must be positive and finite, got {self.gamma}")


def to_dimensionless(params: PhysicalParams) -> DimensionlessParams:
    """Map (K, gamma, T) to theta = (beta, gamma) with beta = sqrt(T gamma / K)."""
    return DimensionlessParams(
        beta=math.sqrt(params.T * params.gamma / params.K), gamma=params.gamma
    )


def from_dimensionless(theta: DimensionlessParams, T: float) -> PhysicalParams:
    """Invert `to_dimensionless`: K = T gamma / beta^2."""
    return PhysicalParams(K=T * theta.gamma / theta.beta**2, gamma=theta.gamma, T=T)


# --------------------------------------------------------------------------
# input signal


@dataclass(frozen=True)
class InputSignal:
    """Deterministic input r(t), strictly positive on the horizon.

    Two kinds are supported:

    * ``sinusoid``: r(t) = a sin^2(omega t) + b, evaluated analytically.
    * ``tabulated``: piecewise-linear interpolation of sampled (t, r) pairs;
      evaluation outside the tabulated range is an error.
    """

    kind: str
    a: float = 0.0
    omega: float = 0.0
    b: float = 0.0
    times: np.ndarray | None = field(default=None, repr=False)
    values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind == "sinusoid":
            lo = min(self.b, self.a + self.b)
            if not lo > 0:
                raise ValidationError(
                    f"sinusoid input can reach {lo} <= 0; r(t) must stay positive"
                )
        elif self.kind == "tabulated":
            t = np.asarray(self.times, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if t.ndim != 1 or t.shape != v.shape or t.size < 2:
                raise ValidationError("tabulated input needs matching 1-d arrays, >= 2 points")
            if not np.all(np.diff(t) > 0):
                raise ValidationError("tabulated input times must be strictly increasing")
            if not np.all(v > 0):
                raise ValidationError("tabulated input values must be strictly positive")
            object.__setattr__(self, "times", t)
            object.__setattr__(self, "values", v)
        else:
            raise ValidationError(f"unknown input kind {self.kind!r}")

    @classmethod
    def sinusoid(cls, a: float, omega: float, b: float) -> "InputSignal":
        return cls(kind="sinusoid", a=a, omega=omega, b=b)

    @classmethod
    def constant(cls, value: float) -> "InputSignal":
        return cls(kind="sinusoid", a=0.0, omega=0.0, b=value)

    @classmethod
    def tabulated(cls, times, values) -> "InputSignal":
        return cls(kind="tabulated", times=np.asarray(times), values=np.asarray(values))

    def value(self, t):
        """r(t); vectorized over t."""
        t = np.asarray(t, dtype=float)
        if self.kind == "sinusoid":
            return self.a * np.sin(self.omega * t) ** 2 + self.b
        self._check_range(t)
        return np.interp(t, self.times, self.values)

    def dlog_dt(self, t):
        """d/dt ln r(t); piecewise-constant slope/value for tabulated inputs."""
        t = np.asarray(t, dtype=float)
        if self.kind == "sinusoid":
            return self.a * self.omega * np.sin(2.0 * self.omega * t) / self.value(t)
        self._check_range(t)
        slopes = np.diff(self.values) / np.diff(self.times)
        seg = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, slopes.size - 1)
        return slopes[seg] / np.interp(t, self.times, self.values)

    def _check_range(self, t):
        if np.any(t < self.times[0] - 1e-12) or np.any(t > self.times[-1] + 1e-12):
            raise DomainError(
                f"time outside tabulated range [{self.times[0]}, {self.times[-1]}]"
            )

    def to_csv(self, path, grid=None):
        """Write samples of r as CSV with header ``t,r``.

        Tabulated signals write their own nodes; analytic signals require
        an explicit evaluation grid.
        """
        if self.kind == "tabulated":
            t = self.times if grid is None else np.asarray(grid, dtype=float)
        else:
            if grid is None:
                raise ValidationError("analytic signal needs an explicit grid for CSV export")
            t = np.asarray(grid, dtype=float)
        _write_csv(path, "t,r", np.column_stack([t, self.value(t)]))

    @classmethod
    def from_csv(cls, path) -> "InputSignal":
        data = _read_csv(path, "t,r")
        return cls.tabulated(data[:, 0], data[:, 1])


# --------------------------------------------------------------------------
# observations


@dataclass(frozen=True)
class ObservationModel:
    """Multiplicative log-normal measurement noise of width sigma."""

    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValidationError(f"sigma must be positive and finite, got {self.sigma}")


@dataclass(frozen=True)
class TimeSeriesData:
    """Observed series y_s > 0 on equidistant times t_1 = 0, ..., t_{n+1} = T."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValidationError("need matching 1-d time/value arrays with >= 2 points")
        if abs(t[0]) > 1e-12 * max(1.0, abs(t[-1])):
            raise ValidationError(f"first observation time must be 0, got {t[0]}")
        dt = np.diff(t)
        if not np.all(dt > 0):
            raise ValidationError("observation times must be strictly increasing")
        if np.max(np.abs(dt - dt[0])) > 1e-9 * abs(dt[0]):
            raise ValidationError("observation times must be equidistant (1e-9 relative)")
        if not np.all(v > 0):
            raise ValidationError("observed values must be strictly positive")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValidationError("observations must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def n_segments(self) -> int:
        """Number of inter-observation segments n (so the series has n+1 points)."""
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.times.tobytes())
        h.update(self.values.tobytes())
        return h.hexdigest()

    def to_csv(self, path):
        _write_csv(path, "t,y", np.column_stack([self.times, self.values]))

    @classmethod
    def from_csv(cls, path) -> "TimeSeriesData":
        data = _read_csv(path, "t,y")
        return cls(times=data[:, 0], values=data[:, 1])


# --------------------------------------------------------------------------
# coordinate transforms


def path_transform(q, t, theta: DimensionlessParams, signal: InputSignal, T: float):
    """Map dimensionless path q(t) to the observable S(t).

    S = (T gamma r(t) / beta^2) exp(beta q); note T gamma / beta^2 = K.
    """
    q = np.asarray(q, dtype=float)
    r = signal.value(t)
    scale = T * theta.gamma / theta.beta**2
    return scale * r * np.exp(theta.beta * q)


def path_inverse(S, t, theta: DimensionlessParams, signal: InputSignal, T: float):
    """Invert `path_transform`: q = ln(S beta^2 / (T gamma r(t))) / beta."""
    S = np.asarray(S, dtype=float)
    if np.any(S <= 0):
        raise DomainError("S must be strictly positive to invert the path transform")
    r = signal.value(t)
    scale = T * theta.gamma / theta.beta**2
    return np.log(S / (scale * r)) / theta.beta


# --------------------------------------------------------------------------
# discretized drift profile


def rho_discrete(times, signal: InputSignal, theta: DimensionlessParams):
    """Drift profile rho_i and its discrete rate of change on a lattice.

    For grid times t_1..t_N spanning [0, T] with uniform step dt,

        rho_i    = T ln(r(t_i)/r(t_{i-1})) / (beta dt) + (2+gamma) beta / (2 gamma)

    is defined for i = 2..N, and rhodot_i = (rho_i - rho_{i-1})/dt for
    i = 3..N. Both are returned as length-N arrays (0-based); slot 0 is
    unused padding and rhodot additionally pads slot 1, i.e. the i = 2 term
    carries no rate-of-change contribution (exact for constant input).
    """
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValidationError("need a 1-d grid with at least 2 times")
    dt = t[1] - t[0]
    T = t[-1] - t[0]
    r = np.asarray(signal.value(t), dtype=float)
    if np.any(r <= 0):
        raise DomainError("input signal must be strictly positive on the grid")
    rho = np.zeros_like(t)
    rho[1:] = (T / (theta.beta * dt)) * np.diff(np.log(r)) + (
        (2.0 + theta.gamma) * theta.beta / (2.0 * theta.gamma)
    )
    rhodot = np.zeros_like(t)
    rhodot[2:] = (rho[2:] - rho[1:-1]) / dt
    return rho, rhodot


# --------------------------------------------------------------------------
# equilibrium law under constant input


def _invgamma_shape_scale(params: PhysicalParams, r0: float):
    if r0 <= 0:
        raise DomainError("constant input level r0 must be positive")
    shape = (2.0 + params.gamma) / params.gamma
    scale = 2.0 * params.K * r0 / params.gamma
    return shape, scale


def equilibrium_pdf(S, params: PhysicalParams, r0: float, normalized: bool = True):
    """Stationary density of S under constant input r(t) = r0.

    The law is p(S) proportional to S^{-2(1+gamma)/gamma} exp(-2 K r0 / (gamma S)),
    an inverse-gamma distribution with shape (2+gamma)/gamma and scale
    2 K r0 / gamma. With ``normalized=False`` the bare power-exponential
    form above is returned.
    """
    S = np.asarray(S, dtype=float)
    if np.any(S <= 0):
        raise DomainError("equilibrium density is supported on S > 0")
    shape, scale = _invgamma_shape_scale(params, r0)
    log_core = -(shape + 1.0) * np.log(S) - scale / S
    if not normalized:
        return np.exp(log_core)
    log_norm = shape * math.log(scale) - math.lgamma(shape)
    return np.exp(log_norm + log_core)


def equilibrium_moments(params: PhysicalParams, r0: float):
    """Mean and variance of the stationary law: (K r0, K^2 r0^2 gamma/(2-gamma)).

    The variance diverges for gamma >= 2 and is reported as ``inf``.
    """
    _invgamma_shape_scale(params, r0)
    mean = params.K * r0
    if params.gamma >= 2.0:
        return mean, math.inf
    var = params.K**2 * r0**2 * params.gamma / (2.0 - params.gamma)
    return mean, var


# --------------------------------------------------------------------------
# forward simulation


@dataclass(frozen=True)
class TruthPath:
    """A simulated ground-truth path sampled on ``times``."""

    times: np.ndarray
    S: np.ndarray
    q: np.ndarray

    def to_csv(self, path):
        _write_csv(path, "t,S,q", np.column_stack([self.times, self.S, self.q]))

    @classmethod
    def from_csv(cls, path) -> "TruthPath":
        data = _read_csv(path, "t,S,q")
        return cls(times=data[:, 0], S=data[:, 1], q=data[:, 2])


def fine_grid(T: float, n: int, j: int, factor: int = 20) -> np.ndarray:
    """Simulation grid refining the n*j inference lattice by ``factor``."""
    if n < 1 or j < 1 or factor < 1:
        raise ValidationError("n, j, factor must all be >= 1")
    return np.linspace(0.0, T, n * j * factor + 1)


def simulate_truth(
    params: PhysicalParams,
    signal: InputSignal,
    times,
    seed=None,
    s0: float | None = None,
) -> TruthPath:
    """Integrate the q-form SDE with Euler-Maruyama on the given grid.

    The state starts from S(0) = s0 (default K r(0), the equilibrium mean
    scale). Noise increments use a dedicated generator seeded by ``seed``;
    ``seed`` may also be an existing numpy Generator.
    """
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 2 or not np.all(np.diff(t) > 0):
        raise ValidationError("simulation grid must be 1-d and strictly increasing")
    theta = to_dimensionless(params)
    T = params.T
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    r0 = float(signal.value(t[0]))
    if s0 is None:
        s0 = params.K * r0
    if s0 <= 0:
        raise DomainError("initial state s0 must be positive")
    q0 = math.log(s0 / (params.K * r0)) / theta.beta

    h = np.diff(t)
    # rho(t) in continuous form; evaluated once on the whole grid
    rho = (T / theta.beta) * np.asarray(signal.dlog_dt(t[:-1]), dtype=float) + (
        (2.0 + params.gamma) * theta.beta / (2.0 * params.gamma)
    )
    drift0 = -h * rho / T
    noise = np.sqrt(h / T) * rng.standard_normal(h.size)
    coef = theta.beta / (T * params.gamma)
    beta = theta.beta

    q = np.empty_like(t)
    q[0] = q0
    qk = q0
    exp = math.exp
    for k in range(h.size):
        qk = qk + h[k] * coef * exp(-beta * qk) + drift0[k] + noise[k]
        q[k + 1] = qk
        if not math.isfinite(qk):
            raise NonFiniteError("simulated path", indices=k + 1)
    S = path_transform(q, t, theta, signal, T)
    return TruthPath(times=t, S=S, q=q)


def generate_observations(
    path: TruthPath,
    obs_times,
    params: PhysicalParams,
    obs: ObservationModel,
    seed=None,
) -> TimeSeriesData:
    """Read the path at obs_times and apply log-normal noise:
    y_s = (S(t_s)/K) exp(sigma eps_s).

    Each requested time must lie on the path grid (1e-9 relative of the
    horizon); anything else is an error rather than an interpolation.
    """
    obs_times = np.asarray(obs_times, dtype=float)
    tol = 1e-9 * max(1.0, abs(path.times[-1]))
    idx = np.searchsorted(path.times, obs_times)
    idx = np.clip(idx, 0, path.times.size - 1)
    left = np.clip(idx - 1, 0, path.times.size - 1)
    idx = np.where(
        np.abs(path.times[left] - obs_times) < np.abs(path.times[idx] - obs_times), left, idx
    )
    if np.any(np.abs(path.times[idx] - obs_times) > tol):
        bad = obs_times[np.abs(path.times[idx] - obs_times) > tol]
        raise ValidationError(f"observation times not on the simulation grid: {bad}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    eps = rng.standard_normal(obs_times.size)
    y = (path.S[idx] / params.K) * np.exp(obs.sigma * eps)
    return TimeSeriesData(times=obs_times, values=y)


# --------------------------------------------------------------------------
# CSV helpers shared by the container types


def _write_csv(path, header: str, rows: np.ndarray):
    np.savetxt(path, rows, delimiter=",", header=header, comments="", fmt="%.17g")


def _read_csv(path, expected_header: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != expected_header:
            raise ValidationError(
                f"unexpected CSV header {header!r} in {path}; want {expected_header!r}"
            )
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != len(expected_header.split(",")):
        raise ValidationError(f"wrong column count in {path}")
    return data
