"""Path lattice, staging coordinates, and polymer state.

The inference discretizes the path q(t) on N = n*j + 1 equidistant beads:
n+1 heavy measurement beads at the observation times and j-1 light beads
inside each of the n segments. Within segment s (0-based, beads s*j .. (s+1)*j)
the intermediate beads are replaced by staging coordinates

    u[s*j + m] = q[s*j + m] - (m q[s*j + m + 1] + q[s*j]) / (m + 1),   m = 1..j-1,

while boundary beads keep u = q. The map is linear, invertible segment by
segment through the backward recursion

    q[s*j + m] = u[s*j + m] + (m/(m+1)) q[s*j + m + 1] + (1/(m+1)) u[s*j],

evaluated for m = j-1 down to 1 (here in an equivalent suffix-scan form),
and it diagonalizes the nearest-neighbour harmonic coupling of the
discretized action: the identity

    sum_i (T / 2 dt) (q_i - q_{i-1})^2
      = (T/2) sum_s [ (q_left(s) - q_right(s))^2 / (j dt)
                      + sum_{k=2..j} (k / ((k-1) dt)) u_k^2 ]

is exercised by the tests. The adjoint (transpose) of the u -> q map is
what gradient evaluation chains through.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .model import DimensionlessParams, InputSignal, TimeSeriesData

__all__ = [
    "LatticeLayout",
    "MassConfig",
    "PolymerState",
    "build_layout",
    "staging_forward",
    "staging_inverse",
    "staging_adjoint",
    "initial_state",
    "save_state",
    "load_state",
]


@dataclass(frozen=True)
class LatticeLayout:
    """Geometry of the path lattice: n segments of j steps over [0, T]."""

    n: int
    j: int
    T: float
    N: int = field(init=False)
    dt: float = field(init=False)

    def __post_init__(self):
        if self.n < 1 or self.j < 1:
            raise ValidationError(f"n and j must be >= 1, got n={self.n}, j={self.j}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValidationError(f"T must be positive and finite, got {self.T}")
        object.__setattr__(self, "N", self.n * self.j + 1)
        object.__setattr__(self, "dt", self.T / (self.n * self.j))

    def measurement_index(self, s: int) -> int:
        """1-based bead index of the s-th measurement bead, s = 1..n+1."""
        if not 1 <= s <= self.n + 1:
            raise ValidationError(f"s must be in 1..{self.n + 1}, got {s}")
        return (s - 1) * self.j + 1

    @property
    def times(self) -> np.ndarray:
        """Bead times t_i = (i-1) dt, i = 1..N (returned 0-based)."""
        return np.linspace(0.0, self.T, self.N)

    @property
    def boundary_indices(self) -> np.ndarray:
        """0-based indices of the measurement beads."""
        return np.arange(self.n + 1) * self.j

    @property
    def staging_mask(self) -> np.ndarray:
        mask = np.ones(self.N, dtype=bool)
        mask[self.boundary_indices] = False
        return mask

    @property
    def staging_k(self) -> np.ndarray:
        """Staging order k = 2..j for each intermediate bead, in lattice order."""
        if self.j < 2:
            return np.zeros(0, dtype=int)
        return np.tile(np.arange(2, self.j + 1), self.n)


def build_layout(n: int, j: int, T: float) -> LatticeLayout:
    """Construct the layout; N = n*j + 1 beads with spacing dt = T/(n*j)."""
    return LatticeLayout(n=n, j=j, T=T)


@dataclass(frozen=True)
class MassConfig:
    """Effective masses: M for measurement beads, m_prime for staging beads
    (the staging kinetic term is dt p^2 / (2 m_prime), i.e. oscillator mass
    m_prime/dt), and m_alpha for the two parameters (beta, gamma)."""

    M: float
    m_prime: float
    m_alpha: tuple[float, float]

    def __post_init__(self):
        ma = tuple(float(x) for x in self.m_alpha)
        if len(ma) != 2:
            raise ValidationError("m_alpha must hold exactly two masses (beta, gamma)")
        if not (self.M > 0 and self.m_prime > 0 and all(x > 0 for x in ma)):
            raise ValidationError("all masses must be positive")
        object.__setattr__(self, "m_alpha", ma)


@dataclass
class PolymerState:
    """Positions and momenta of the extended system.

    u: staged path coordinates (length N); theta = (beta, gamma);
    p: bead momenta (length N); pi: parameter momenta (length 2).
    """

    u: np.ndarray
    theta: np.ndarray
    p: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        self.pi = np.asarray(self.pi, dtype=float)
        if self.u.shape != self.p.shape or self.u.ndim != 1:
            raise ValidationError("u and p must be 1-d arrays of equal length")
        if self.theta.shape != (2,) or self.pi.shape != (2,):
            raise ValidationError("theta and pi must have shape (2,)")

    @property
    def beta(self) -> float:
        return float(self.theta[0])

    @property
    def gamma(self) -> float:
        return float(self.theta[1])

    def copy(self) -> "PolymerState":
        return PolymerState(
            u=self.u.copy(), theta=self.theta.copy(), p=self.p.copy(), pi=self.pi.copy()
        )


def _check_size(x: np.ndarray, layout: LatticeLayout, name: str):
    if x.ndim != 1 or x.size != layout.N:
        raise ValidationError(f"{name} must be 1-d of length N={layout.N}, got shape {x.shape}")


def staging_forward(q: np.ndarray, layout: LatticeLayout) -> np.ndarray:
    """Map bead positions q to staging coordinates u (boundaries unchanged)."""
    q = np.asarray(q, dtype=float)
    _check_size(q, layout, "q")
    u = q.copy()
    j = layout.j
    if j < 2:
        return u
    qs = q[:-1].reshape(layout.n, j)        # qs[s, m] = q[s*j + m]
    qn = q[1:].reshape(layout.n, j)         # qn[s, m] = q[s*j + m + 1]
    m = np.arange(1, j, dtype=float)
    u[:-1].reshape(layout.n, j)[:, 1:] = qs[:, 1:] - (m * qn[:, 1:] + qs[:, :1]) / (m + 1.0)
    return u


def staging_inverse(u: np.ndarray, layout: LatticeLayout) -> np.ndarray:
    """Map staging coordinates u back to bead positions q.

    Per segment this is the backward recursion
    q_m = u_m + (m/(m+1)) q_{m+1} + (1/(m+1)) u_left, m = j-1..1, evaluated
    in its unrolled suffix-scan form q_m = m * sum_{l>=m} u_l / l + ((j-m)/j) u_left.
    """
    u = np.asarray(u, dtype=float)
    _check_size(u, layout, "u")
    q = u.copy()
    j = layout.j
    if j < 2:
        return q
    w = u[1:].reshape(layout.n, j) / np.arange(1, j + 1, dtype=float)
    suffix = np.cumsum(w[:, ::-1], axis=1)[:, ::-1]
    m = np.arange(1, j, dtype=float)
    q[:-1].reshape(layout.n, j)[:, 1:] = m * suffix[:, :-1] + (
        (j - m) / j
    ) * u[:-1].reshape(layout.n, j)[:, :1]
    return q


def staging_adjoint(g_q: np.ndarray, layout: LatticeLayout) -> np.ndarray:
    """Apply the transpose of the u -> q map to a gradient w.r.t. q.

    If q = A u with A the (linear) staging inverse, this returns A^T g_q,
    the chain-rule factor taking dH/dq to dH/du.
    """
    g_q = np.asarray(g_q, dtype=float)
    _check_size(g_q, layout, "g_q")
    gu = np.zeros_like(g_q)
    n, j = layout.n, layout.j
    bl = np.arange(n) * j
    if j < 2:
        return g_q.copy()
    gseg = g_q[:-1].reshape(n, j)
    m = np.arange(1, j, dtype=float)
    prefix = np.cumsum(m * gseg[:, 1:], axis=1)   # prefix[:, i] = sum_{m<=i+1} m g_m
    gu[:-1].reshape(n, j)[:, 1:] = prefix / m
    total = prefix[:, -1]
    gu[bl] += gseg[:, 1:].sum(axis=1) - total / j
    gu[bl + j] += total / j
    gu[layout.boundary_indices] += g_q[layout.boundary_indices]
    return gu


def initial_state(
    data: TimeSeriesData,
    signal: InputSignal,
    theta0: DimensionlessParams,
    layout: LatticeLayout,
) -> PolymerState:
    """Starting state: boundary beads pinned to the noise-free reading of the
    data, q_s = ln(y_s / r(t_s)) / beta, intermediate beads on the straight
    line between them (staging coordinates exactly zero), momenta zeroed."""
    if data.n_segments != layout.n:
        raise ValidationError(
            f"data has {data.n_segments} segments but layout expects {layout.n}"
        )
    if abs(data.horizon - layout.T) > 1e-9 * layout.T:
        raise ValidationError(f"data horizon {data.horizon} != layout T {layout.T}")
    r_meas = np.asarray(signal.value(data.times), dtype=float)
    q_bound = np.log(data.values / r_meas) / theta0.beta
    u = np.zeros(layout.N)
    u[layout.boundary_indices] = q_bound
    return PolymerState(
        u=u,
        theta=np.array([theta0.beta, theta0.gamma]),
        p=np.zeros(layout.N),
        pi=np.zeros(2),
    )


def save_state(state: PolymerState, layout: LatticeLayout, path):
    """Write a snapshot: one JSON header line, then CSV rows ``index,u,q,p``."""
    q = staging_inverse(state.u, layout)
    header = json.dumps(
        {
            "theta": list(map(float, state.theta)),
            "pi": list(map(float, state.pi)),
            "n": layout.n,
            "j": layout.j,
            "T": layout.T,
        }
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {header}\n")
        fh.write("index,u,q,p\n")
        for i in range(layout.N):
            fh.write(f"{i},{float(state.u[i])!r},{float(q[i])!r},{float(state.p[i])!r}\n")


def load_state(path) -> tuple[PolymerState, LatticeLayout]:
    """Read a snapshot written by `save_state`; verifies the stored q column."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# "):
            raise ValidationError(f"snapshot {path} lacks the JSON header line")
        meta = json.loads(first[2:])
        if fh.readline().strip() != "index,u,q,p":
            raise ValidationError(f"snapshot {path} has an unexpected column header")
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    layout = build_layout(int(meta["n"]), int(meta["j"]), float(meta["T"]))
    if rows.shape != (layout.N, 4):
        raise ValidationError(f"snapshot {path} has {rows.shape[0]} rows, want {layout.N}")
    if not np.array_equal(rows[:, 0], np.arange(layout.N)):
        raise ValidationError(f"snapshot {path} bead indices are not 0..N-1")
    state = PolymerState(
        u=rows[:, 1],
        theta=np.asarray(meta["theta"], dtype=float),
        p=rows[:, 3],
        pi=np.asarray(meta["pi"], dtype=float),
    )
    q_check = staging_inverse(state.u, layout)
    if not np.allclose(q_check, rows[:, 2], rtol=1e-6, atol=1e-6):
        raise ValidationError(f"snapshot {path}: stored q is inconsistent with u")
    return state, layout
