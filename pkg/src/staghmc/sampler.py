"""Hamiltonian Monte Carlo over the staged path.

Each iteration refreshes all momenta from their Gaussians, runs the
multi-scale trajectory, and applies the Metropolis test on the total
Hamiltonian. Proposals that leave the valid parameter domain (beta <= 0 or
gamma <= 0) or produce non-finite energies are rejected rather than raised.
Chains are reproducible from a single 64-bit seed; parallel chains get
independent streams spawned from it, one process per chain.
"""

from __future__ import annotations

import multiprocessing
import os
import time
from dataclasses import dataclass

import numpy as np

from .energy import PathContext, h_total
from .errors import DomainError, NonFiniteError, StagHmcError, ValidationError
from .integrator import IntegratorConfig, OscillatorBank, trotter_propagate
from .lattice import (
    LatticeLayout,
    MassConfig,
    PolymerState,
    build_layout,
    initial_state,
    save_state,
)
from .model import (
    DimensionlessParams,
    InputSignal,
    ObservationModel,
    TimeSeriesData,
)

__all__ = [
    "ChainRecord",
    "HmcConfig",
    "InferenceProblem",
    "IterationStats",
    "hmc_iteration",
    "metropolis_accept",
    "run_chain",
    "run_parallel_chains",
    "sample_momenta",
]

CHAIN_CSV_HEADER = "iter,beta,gamma,K,accepted,H_before,H_after,dH"


@dataclass(frozen=True)
class InferenceProblem:
    """Everything needed to pose the inference: the observations, the input
    signal they respond to, the noise model, and the lattice refinement j
    (beads per data segment)."""

    data: TimeSeriesData
    signal: InputSignal
    obs: ObservationModel
    j: int

    def __post_init__(self):
        if self.j < 1:
            raise ValidationError(f"j must be >= 1, got {self.j}")

    def layout(self) -> LatticeLayout:
        return build_layout(self.data.n_segments, self.j, self.data.horizon)

    def context(self) -> PathContext:
        return PathContext(self.layout(), self.signal, self.data, self.obs)


@dataclass(frozen=True)
class HmcConfig:
    """Sampler settings. theta0 is the dimensionless start (beta, gamma);
    checkpoint_every = 0 disables periodic state snapshots."""

    n_mc: int
    theta0: tuple[float, float]
    masses: MassConfig
    integrator: IntegratorConfig
    seed: int = 0
    chains: int = 1
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.n_mc < 1:
            raise ValidationError(f"n_mc must be >= 1, got {self.n_mc}")
        if self.chains < 1:
            raise ValidationError(f"chains must be >= 1, got {self.chains}")
        if not (0 <= int(self.seed) < 2**64):
            raise ValidationError("seed must fit in an unsigned 64-bit integer")
        b, g = (float(self.theta0[0]), float(self.theta0[1]))
        if not (np.isfinite(b) and np.isfinite(g) and b > 0 and g > 0):
            raise ValidationError(f"theta0 must be positive and finite, got {self.theta0}")
        object.__setattr__(self, "theta0", (b, g))
        if self.checkpoint_every < 0:
            raise ValidationError("checkpoint_every must be >= 0")
        if self.checkpoint_every > 0 and not self.checkpoint_dir:
            raise ValidationError("checkpointing requires checkpoint_dir")

    def echo(self) -> dict:
        """JSON-ready mirror of every knob, sufficient to reproduce the run."""
        return {
            "n_mc": self.n_mc,
            "theta0": list(self.theta0),
            "masses": {
                "M": self.masses.M,
                "m_prime": self.masses.m_prime,
                "m_alpha": list(self.masses.m_alpha),
            },
            "integrator": {"d_tau": self.integrator.d_tau, "P": self.integrator.P},
            "seed": int(self.seed),
            "chains": self.chains,
            "checkpoint_every": self.checkpoint_every,
            "checkpoint_dir": self.checkpoint_dir,
        }


@dataclass(frozen=True)
class IterationStats:
    accepted: bool
    h_before: float
    h_after: float
    dh: float
    pathology: str | None = None


@dataclass
class ChainRecord:
    """Per-iteration trace of one chain plus run metadata."""

    beta: np.ndarray
    gamma: np.ndarray
    K: np.ndarray
    accepted: np.ndarray
    h_before: np.ndarray
    h_after: np.ndarray
    dh: np.ndarray
    meta: dict

    @property
    def n_rows(self) -> int:
        return self.beta.size

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))

    def to_csv(self, path) -> None:
        cols = np.column_stack(
            [
                np.arange(1, self.n_rows + 1, dtype=float),
                self.beta,
                self.gamma,
                self.K,
                self.accepted.astype(float),
                self.h_before,
                self.h_after,
                self.dh,
            ]
        )
        np.savetxt(
            path,
            cols,
            delimiter=",",
            header=CHAIN_CSV_HEADER,
            comments="",
            fmt=["%d", "%.17g", "%.17g", "%.17g", "%d", "%.17g", "%.17g", "%.17g"],
        )

    @classmethod
    def from_csv(cls, path, meta: dict | None = None) -> "ChainRecord":
        with open(path) as fh:
            header = fh.readline().strip()
        if header != CHAIN_CSV_HEADER:
            raise ValidationError(
                f"{path}: expected header {CHAIN_CSV_HEADER!r}, got {header!r}"
            )
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if raw.shape[1] != 8:
            raise ValidationError(f"{path}: expected 8 columns, got {raw.shape[1]}")
        return cls(
            beta=raw[:, 1].copy(),
            gamma=raw[:, 2].copy(),
            K=raw[:, 3].copy(),
            accepted=raw[:, 4] != 0.0,
            h_before=raw[:, 5].copy(),
            h_after=raw[:, 6].copy(),
            dh=raw[:, 7].copy(),
            meta=dict(meta) if meta else {"source": str(path)},
        )


def sample_momenta(
    masses: MassConfig, layout: LatticeLayout, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw (p, pi) from the Gaussians matching the kinetic terms: variance M
    on measurement beads, m_prime/dt on staging beads, m_alpha on parameters."""
    scale = np.full(layout.N, np.sqrt(masses.m_prime / layout.dt))
    scale[layout.boundary_indices] = np.sqrt(masses.M)
    p = rng.standard_normal(layout.N) * scale
    pi = rng.standard_normal(2) * np.sqrt(np.asarray(masses.m_alpha))
    return p, pi


def metropolis_accept(
    h_before: float, h_after: float, rng: np.random.Generator
) -> bool:
    """min(1, exp(h_before - h_after)) acceptance; non-finite energy gaps
    (including NaN) are rejected. Consumes at most one uniform draw."""
    dh = h_after - h_before
    if np.isnan(dh):
        return False
    if dh <= 0:
        return True
    if not np.isfinite(dh):
        return False
    return float(rng.random()) < np.exp(-dh)


def hmc_iteration(
    state: PolymerState,
    ctx: PathContext,
    config: HmcConfig,
    rng: np.random.Generator,
    bank: OscillatorBank | None = None,
) -> tuple[PolymerState, IterationStats]:
    """One momentum-refresh / trajectory / Metropolis cycle.

    Returns the next state (positions revert on rejection) and the iteration
    stats. Invalid proposals never raise; they score an infinite energy and
    the pathology is recorded.
    """
    masses = config.masses
    cur = state.copy()
    cur.p, cur.pi = sample_momenta(masses, ctx.layout, rng)
    h_before = h_total(cur, ctx, masses).total

    pathology = None
    proposal = None
    try:
        proposal = trotter_propagate(cur, ctx, masses, config.integrator, bank=bank)
        if not (proposal.theta[0] > 0 and proposal.theta[1] > 0):
            pathology = "nonpositive-parameter"
            h_after = float("inf")
        else:
            h_after = h_total(proposal, ctx, masses).total
            if not np.isfinite(h_after):
                pathology = "nonfinite-energy"
    except (NonFiniteError, DomainError) as exc:
        pathology = type(exc).__name__
        h_after = float("inf")

    accepted = metropolis_accept(h_before, h_after, rng)
    nxt = proposal if accepted else cur
    return nxt, IterationStats(
        accepted=accepted,
        h_before=float(h_before),
        h_after=float(h_after),
        dh=float(h_after - h_before),
        pathology=pathology,
    )


def _run_seeded(
    problem: InferenceProblem,
    config: HmcConfig,
    chain_index: int,
    seed_seq: np.random.SeedSequence,
) -> ChainRecord:
    ctx = problem.context()
    layout = ctx.layout
    theta0 = DimensionlessParams(*config.theta0)
    state = initial_state(problem.data, problem.signal, theta0, layout)
    rng = np.random.default_rng(seed_seq)
    bank = OscillatorBank.build(layout, config.masses, config.integrator.d_tau)

    n = config.n_mc
    beta = np.empty(n)
    gamma = np.empty(n)
    accepted = np.zeros(n, dtype=bool)
    h_before = np.empty(n)
    h_after = np.empty(n)
    dh = np.empty(n)

    t0 = time.perf_counter()
    for i in range(n):
        state, stats = hmc_iteration(state, ctx, config, rng, bank=bank)
        beta[i] = state.theta[0]
        gamma[i] = state.theta[1]
        accepted[i] = stats.accepted
        h_before[i] = stats.h_before
        h_after[i] = stats.h_after
        dh[i] = stats.dh
        if config.checkpoint_every and (i + 1) % config.checkpoint_every == 0:
            path = os.path.join(
                config.checkpoint_dir,
                f"chain{chain_index:02d}_iter{i + 1:07d}.csv",
            )
            try:
                save_state(state, layout, path)
            except OSError as exc:
                raise StagHmcError(
                    f"checkpoint write failed at iteration {i + 1}: {exc}"
                ) from exc
    elapsed = time.perf_counter() - t0

    K = layout.T * gamma / beta**2
    meta = {
        "config": config.echo(),
        "data_digest": problem.data.digest(),
        "sigma": problem.obs.sigma,
        "j": problem.j,
        "T": layout.T,
        "chain_index": chain_index,
        "spawn_key": [int(k) for k in seed_seq.spawn_key],
        "wall_clock_s": elapsed,
        "acceptance_rate": float(np.mean(accepted)),
    }
    return ChainRecord(
        beta=beta,
        gamma=gamma,
        K=K,
        accepted=accepted,
        h_before=h_before,
        h_after=h_after,
        dh=dh,
        meta=meta,
    )


def run_chain(problem: InferenceProblem, config: HmcConfig) -> ChainRecord:
    """Run a single chain for n_mc iterations from the data-pinned start."""
    child = np.random.SeedSequence(config.seed).spawn(1)[0]
    return _run_seeded(problem, config, 0, child)


def _chain_worker(args):
    problem, config, index, seed_seq = args
    try:
        return index, _run_seeded(problem, config, index, seed_seq), None
    except Exception as exc:  # isolate failures so sibling chains finish
        return index, None, f"chain {index}: {type(exc).__name__}: {exc}"


def run_parallel_chains(
    problem: InferenceProblem, config: HmcConfig, processes: int | None = None
) -> list[ChainRecord]:
    """Run config.chains independent chains, one process per chain.

    Chain c draws from the c-th stream spawned off the master seed, so
    chains=1 reproduces run_chain exactly and adding chains never perturbs
    existing ones. A failing chain does not abort its siblings; failures are
    reported together after all chains finish.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    jobs = [(problem, config, c, seeds[c]) for c in range(config.chains)]
    if config.chains == 1:
        _, record, err = _chain_worker(jobs[0])
        if err is not None:
            raise StagHmcError(err)
        return [record]

    if processes is None:
        processes = min(config.chains, os.cpu_count() or 1)
    try:
        mp_ctx = multiprocessing.get_context("fork")
    except ValueError:
        mp_ctx = multiprocessing.get_context()
    with mp_ctx.Pool(processes=processes) as pool:
        outs = pool.map(_chain_worker, jobs)

    outs.sort(key=lambda t: t[0])
    errors = [err for _, _, err in outs if err is not None]
    if errors:
        raise StagHmcError("; ".join(errors))
    return [rec for _, rec, _ in outs]
