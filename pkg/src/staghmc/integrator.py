"""Reversible multi-timescale propagator for the staged polymer.

One trajectory applies P times the symmetric split

    exp(i L_N dtau/2)  exp(i L' dtau)  exp(i L_N dtau/2)

where L_N is the fast harmonic motion of the staging beads, solved exactly
as a rotation in each (u, p) plane, and L' = L_n + L_1 advances the
measurement beads and the parameters by one velocity-Verlet step of size
dtau under H' = h_n + h_1. Staging bead positions are frozen during the
inner step; their momenta still receive the H' force kicks.

Every sub-step is volume preserving and reversible under momentum flip, so
the composite is a valid HMC proposal map regardless of step size; dtau
only controls how well the total energy is conserved (error ~ dtau^2 at
fixed trajectory length P dtau).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import PathContext, grad_hprime
from .errors import ValidationError
from .lattice import LatticeLayout, MassConfig, PolymerState

__all__ = [
    "IntegratorConfig",
    "OscillatorBank",
    "harmonic_half_step",
    "inner_verlet_step",
    "trotter_propagate",
]


@dataclass(frozen=True)
class IntegratorConfig:
    """Inner step size dtau and the number P of inner steps per trajectory."""

    d_tau: float
    P: int

    def __post_init__(self):
        if not (self.d_tau > 0 and math.isfinite(self.d_tau)):
            raise ValidationError(f"d_tau must be positive and finite, got {self.d_tau}")
        if self.P < 1:
            raise ValidationError(f"P must be >= 1, got {self.P}")


@dataclass(frozen=True)
class OscillatorBank:
    """Per-staging-bead oscillator data for the exact rotation.

    Effective mass m = m'/dt is shared; the frequency per staging order k,
    omega_k = sqrt(T k / ((k-1) dt m)), decreases with k. cos/sin tables are
    precomputed for the half step dtau/2. The frequencies satisfy
    m omega_k^2 = T k / (dt (k-1)) exactly, so the rotation conserves h_N
    to round-off.
    """

    layout: LatticeLayout
    m: float
    omega: np.ndarray
    d_tau: float
    cos_half: np.ndarray = field(init=False, repr=False)
    sin_half: np.ndarray = field(init=False, repr=False)
    m_omega: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        angle = self.omega * (self.d_tau / 2.0)
        object.__setattr__(self, "cos_half", np.cos(angle))
        object.__setattr__(self, "sin_half", np.sin(angle))
        object.__setattr__(self, "m_omega", self.m * self.omega)

    @classmethod
    def build(
        cls, layout: LatticeLayout, masses: MassConfig, d_tau: float
    ) -> "OscillatorBank":
        m = masses.m_prime / layout.dt
        k = layout.staging_k.astype(float)
        if k.size:
            stiff = layout.T * k / (layout.dt * (k - 1.0))
            omega = np.sqrt(stiff / m)
        else:
            omega = np.zeros(0)
        return cls(layout=layout, m=m, omega=omega, d_tau=d_tau)


def _rotate_inplace(u: np.ndarray, p: np.ndarray, bank: OscillatorBank):
    st = bank.layout.staging_mask
    if bank.omega.size == 0:
        return
    u_st = u[st]
    p_st = p[st]
    c, s = bank.cos_half, bank.sin_half
    u[st] = u_st * c + (p_st / bank.m_omega) * s
    p[st] = p_st * c - bank.m_omega * u_st * s


def harmonic_half_step(state: PolymerState, bank: OscillatorBank) -> PolymerState:
    """Exact rotation of every staging oscillator by dtau/2.

    Boundary beads, parameters, and their momenta are untouched; h_N is
    conserved oscillator by oscillator.
    """
    out = state.copy()
    _rotate_inplace(out.u, out.p, bank)
    return out


def _verlet_inplace(
    state: PolymerState,
    ctx: PathContext,
    masses: MassConfig,
    d_tau: float,
    bound: np.ndarray,
    m_alpha: np.ndarray,
):
    """One velocity-Verlet step of H' = h_n + h_1, mutating ``state``.

    Positions of measurement beads and parameters drift; staging positions
    stay put but all momenta receive the force kicks (force = -dH'/d(u, theta)).
    """
    g = grad_hprime(state, ctx)
    half = 0.5 * d_tau
    state.p -= half * g.g_u
    state.pi -= half * g.g_theta
    state.u[bound] += d_tau * state.p[bound] / masses.M
    state.theta += d_tau * state.pi / m_alpha
    g = grad_hprime(state, ctx)
    state.p -= half * g.g_u
    state.pi -= half * g.g_theta


def inner_verlet_step(
    state: PolymerState, ctx: PathContext, masses: MassConfig, d_tau: float
) -> PolymerState:
    """Pure single Verlet step on H'; see `_verlet_inplace` for the scheme."""
    out = state.copy()
    _verlet_inplace(
        out, ctx, masses, d_tau, ctx.bound, np.asarray(masses.m_alpha, dtype=float)
    )
    return out


def trotter_propagate(
    state: PolymerState,
    ctx: PathContext,
    masses: MassConfig,
    config: IntegratorConfig,
    bank: OscillatorBank | None = None,
) -> PolymerState:
    """Run the full trajectory: P repetitions of (half rotation, Verlet,
    half rotation). Returns a new state; the input is not modified.

    Non-finite forces raise NonFiniteError (the sampler counts that as a
    rejected proposal).
    """
    if bank is None:
        bank = OscillatorBank.build(ctx.layout, masses, config.d_tau)
    elif bank.d_tau != config.d_tau:
        raise ValidationError(
            f"bank was built for d_tau={bank.d_tau}, config has {config.d_tau}"
        )
    work = state.copy()
    bound = ctx.bound
    m_alpha = np.asarray(masses.m_alpha, dtype=float)
    for _ in range(config.P):
        _rotate_inplace(work.u, work.p, bank)
        _verlet_inplace(work, ctx, masses, config.d_tau, bound, m_alpha)
        _rotate_inplace(work.u, work.p, bank)
    return work
