"""Hamiltonian of the discretized inference problem, split by time scale.

The total energy over state (u, theta, p, pi) decomposes as

    h_total = h_N + h_n + h_1

* ``h_N``: the fast part, one independent harmonic oscillator per staging
  bead: 0.5 [dt p^2 / m' + T k u^2 / (dt (k-1))] for staging order k = 2..j.
  Solved exactly by the integrator's rotation step.
* ``h_n``: the measurement-bead part: their kinetic energy, the data
  likelihood sum (ln(y_s / r_s) - beta u_s)^2 / (2 sigma^2), and the
  boundary-to-boundary spring (T / (2 j dt)) (u_s - u_{s+1})^2.
* ``h_1``: the slow part: parameter kinetic energy pi^2 / (2 m_alpha) plus the
  discretized path action

      (dt/T) sum_{i=2..N} [ 0.5 (rho_i - (beta/gamma) e^{-beta q_i})^2
                            - (beta^2 / (2 gamma)) e^{-beta q_i}
                            - T q_i rhodot_i ]
      + (1/gamma) e^{-beta q_N} + q_N rho_N
      - (1/gamma) e^{-beta q_1} - q_1 rho_2

  (1-based bead indices in the formula; q_1 pairs with rho_2 because rho
  starts at i = 2, and the i = 2 sum term carries rhodot = 0).

Masses follow one convention everywhere: a bead or parameter with effective
mass m has kinetic energy p^2 / (2m), is refreshed from N(0, m), and drifts
as du = dtau p / m. Measurement beads use M as the effective mass directly
(matching the drift form of the slow update), staging beads use m'/dt
(matching the printed oscillator form above), parameters use m_alpha.

Exponentials are evaluated with their argument clamped at +700 so the
exponential itself cannot overflow; a runaway proposal yields a huge
(possibly +inf once squared, never NaN) energy that the sampler rejects
instead of crashing. Inside the clamped region the analytic gradient no
longer tracks the (flat) clamped energy; such states are rejected anyway.

``grad_hprime`` returns the exact analytic gradient of H' = h_n + h_1 with
respect to u and theta, with dH'/dq chained through the staging transpose.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NonFiniteError, ValidationError
from .lattice import LatticeLayout, MassConfig, PolymerState, staging_adjoint, staging_inverse
from .model import InputSignal, ObservationModel, TimeSeriesData

__all__ = [
    "PathContext",
    "EnergyBreakdown",
    "Gradient",
    "h_N",
    "h_n",
    "h_1",
    "h_total",
    "grad_hprime",
]

EXP_CLAMP = 700.0


@dataclass(frozen=True)
class PathContext:
    """Everything about (lattice, input, data) that energy terms reuse.

    Precomputes the log-input increments L_i = T ln(r_i / r_{i-1}) / dt
    (so rho_i = L_i / beta + (2 + gamma) beta / (2 gamma)), the log data
    residuals ln(y_s / r_s), and the per-bead spring constants.
    """

    layout: LatticeLayout
    signal: InputSignal
    data: TimeSeriesData
    obs: ObservationModel
    L: np.ndarray = field(init=False, repr=False)
    lnyr: np.ndarray = field(init=False, repr=False)
    bound: np.ndarray = field(init=False, repr=False)
    st_mask: np.ndarray = field(init=False, repr=False)
    stiff: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lay = self.layout
        if self.data.n_segments != lay.n:
            raise ValidationError(
                f"data has {self.data.n_segments} segments, layout expects {lay.n}"
            )
        if abs(self.data.horizon - lay.T) > 1e-9 * lay.T:
            raise ValidationError(
                f"data horizon {self.data.horizon} != lattice horizon {lay.T}"
            )
        t = lay.times
        r = np.asarray(self.signal.value(t), dtype=float)
        if np.any(r <= 0):
            raise DomainError("input signal must be strictly positive on the lattice")
        L = np.zeros(lay.N)
        L[1:] = (lay.T / lay.dt) * np.diff(np.log(r))
        lnyr = np.log(self.data.values / r[lay.boundary_indices])
        k = lay.staging_k.astype(float)
        stiff = lay.T * k / (lay.dt * (k - 1.0)) if k.size else np.zeros(0)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "lnyr", lnyr)
        object.__setattr__(self, "bound", lay.boundary_indices)
        object.__setattr__(self, "st_mask", lay.staging_mask)
        object.__setattr__(self, "stiff", stiff)


@dataclass(frozen=True)
class EnergyBreakdown:
    h_N: float
    h_n: float
    h_1: float
    total: float


@dataclass(frozen=True)
class Gradient:
    """Gradient of H' = h_n + h_1: g_u over all beads, g_theta = (d/dbeta, d/dgamma)."""

    g_u: np.ndarray
    g_theta: np.ndarray


def _check_theta(state: PolymerState):
    if state.theta[0] == 0.0 or state.theta[1] == 0.0:
        raise DomainError("beta = 0 or gamma = 0 is outside the model domain")


def _rho_tables(ctx: PathContext, beta: float, gamma: float):
    """rho_i and rhodot_i as padded length-N arrays (slot 0 unused,
    rhodot slot 1 fixed at zero)."""
    c = (2.0 + gamma) * beta / (2.0 * gamma)
    rho = ctx.L / beta + c
    rho[0] = 0.0
    rhodot = np.zeros_like(rho)
    rhodot[2:] = (rho[2:] - rho[1:-1]) / ctx.layout.dt
    return rho, rhodot


def h_N(state: PolymerState, masses: MassConfig, layout: LatticeLayout) -> float:
    """Fast harmonic energy, staging beads only (zero when j = 1)."""
    if state.u.size != layout.N:
        raise ValidationError(f"state has {state.u.size} beads, layout expects {layout.N}")
    if layout.j < 2:
        return 0.0
    st = layout.staging_mask
    k = layout.staging_k.astype(float)
    stiff = layout.T * k / (layout.dt * (k - 1.0))
    m_st = masses.m_prime / layout.dt
    with np.errstate(over="ignore"):
        return float(0.5 * np.sum(state.p[st] ** 2 / m_st + stiff * state.u[st] ** 2))


def h_n(state: PolymerState, ctx: PathContext, masses: MassConfig) -> float:
    """Measurement-bead energy: kinetic + data likelihood + boundary springs."""
    _check_theta(state)
    lay = ctx.layout
    if state.u.size != lay.N:
        raise ValidationError(f"state has {state.u.size} beads, layout expects {lay.N}")
    ub = state.u[ctx.bound]
    pb = state.p[ctx.bound]
    beta = state.theta[0]
    sigma2 = ctx.obs.sigma**2
    with np.errstate(over="ignore", invalid="ignore"):
        kin = float(np.sum(pb**2) / (2.0 * masses.M))
        meas = float(np.sum((ctx.lnyr - beta * ub) ** 2) / (2.0 * sigma2))
        spring = float(lay.T / (2.0 * lay.j * lay.dt) * np.sum(np.diff(ub) ** 2))
    return kin + meas + spring


def h_1(state: PolymerState, ctx: PathContext, masses: MassConfig) -> float:
    """Slow energy: parameter kinetic + the discretized path action."""
    _check_theta(state)
    lay = ctx.layout
    beta, gamma = state.theta
    # runaway states may saturate to +-inf or NaN (never a silently wrong
    # finite value); the Metropolis test rejects every such proposal
    with np.errstate(over="ignore", invalid="ignore"):
        q = staging_inverse(state.u, lay)
        E = np.exp(np.minimum(-beta * q, EXP_CLAMP))
        rho, rhodot = _rho_tables(ctx, beta, gamma)
        A = rho[1:] - (beta / gamma) * E[1:]
        body = 0.5 * A**2 - (beta**2 / (2.0 * gamma)) * E[1:] - lay.T * q[1:] * rhodot[1:]
        kin = float(np.sum(state.pi**2 / (2.0 * np.asarray(masses.m_alpha))))
        act = (lay.dt / lay.T) * float(np.sum(body))
        edge = (
            (1.0 / gamma) * E[-1]
            + q[-1] * rho[-1]
            - (1.0 / gamma) * E[0]
            - q[0] * rho[1]
        )
    return kin + act + edge


def h_total(state: PolymerState, ctx: PathContext, masses: MassConfig) -> EnergyBreakdown:
    """All three pieces and their sum."""
    hn_fast = h_N(state, masses, ctx.layout)
    hn_slow = h_n(state, ctx, masses)
    h1 = h_1(state, ctx, masses)
    return EnergyBreakdown(h_N=hn_fast, h_n=hn_slow, h_1=h1, total=hn_fast + hn_slow + h1)


def grad_hprime(state: PolymerState, ctx: PathContext) -> Gradient:
    """Analytic gradient of H' = h_n + h_1 w.r.t. (u, theta).

    The path-action part is differentiated per bead position q and mapped to
    staging coordinates through the transpose of the linear staging inverse;
    the theta derivatives include the beta- and gamma-dependence of rho.
    Raises NonFiniteError if any component is NaN or infinite.
    """
    _check_theta(state)
    lay = ctx.layout
    beta, gamma = state.theta
    dt, T = lay.dt, lay.T

    # overflow past the clamp saturates; NonFiniteError is raised below instead
    with np.errstate(over="ignore", invalid="ignore"):
        q = staging_inverse(state.u, lay)
        E = np.exp(np.minimum(-beta * q, EXP_CLAMP))
        rho, rhodot = _rho_tables(ctx, beta, gamma)
        A = rho - (beta / gamma) * E  # valid on slots 1..N-1

        # --- d/dq of the path action, then chain through the staging transpose
        g_q = np.zeros(lay.N)
        g_q[1:] = (dt / T) * (
            A[1:] * (beta**2 / gamma) * E[1:]
            + (beta**3 / (2.0 * gamma)) * E[1:]
            - T * rhodot[1:]
        )
        g_q[0] += (beta / gamma) * E[0] - rho[1]
        g_q[-1] += -(beta / gamma) * E[-1] + rho[-1]
        g_u = staging_adjoint(g_q, lay)

        # --- direct boundary terms of h_n
        ub = state.u[ctx.bound]
        sigma2 = ctx.obs.sigma**2
        resid = ctx.lnyr - beta * ub
        g_b = -(beta / sigma2) * resid
        d = np.diff(ub)
        coup = T / (lay.j * dt)
        g_b[:-1] += -coup * d
        g_b[1:] += coup * d
        g_u[ctx.bound] += g_b

        # --- theta gradient
        drho_db = -ctx.L / beta**2 + (2.0 + gamma) / (2.0 * gamma)
        drho_db[0] = 0.0
        drhodot_db = np.zeros(lay.N)
        drhodot_db[2:] = (drho_db[2:] - drho_db[1:-1]) / dt
        dA_db = drho_db - (1.0 / gamma) * E + (beta / gamma) * q * E
        g_beta = (dt / T) * float(
            np.sum(
                A[1:] * dA_db[1:]
                - (beta / gamma) * E[1:]
                + (beta**2 / (2.0 * gamma)) * q[1:] * E[1:]
                - T * q[1:] * drhodot_db[1:]
            )
        )
        g_beta += (
            -(q[-1] / gamma) * E[-1]
            + q[-1] * drho_db[-1]
            + (q[0] / gamma) * E[0]
            - q[0] * drho_db[1]
        )
        g_beta += float(np.sum(resid * (-ub) / sigma2))

        dA_dg = -beta / gamma**2 + (beta / gamma**2) * E
        g_gamma = (dt / T) * float(
            np.sum(A[1:] * dA_dg[1:] + (beta**2 / (2.0 * gamma**2)) * E[1:])
        )
        g_gamma += (
            -E[-1] / gamma**2
            - q[-1] * beta / gamma**2
            + E[0] / gamma**2
            + q[0] * beta / gamma**2
        )

    g_theta = np.array([g_beta, g_gamma])
    if not np.all(np.isfinite(g_u)):
        raise NonFiniteError("gradient w.r.t. u", indices=np.flatnonzero(~np.isfinite(g_u)))
    if not np.all(np.isfinite(g_theta)):
        raise NonFiniteError(
            "gradient w.r.t. theta", indices=np.flatnonzero(~np.isfinite(g_theta))
        )
    return Gradient(g_u=g_u, g_theta=g_theta)
