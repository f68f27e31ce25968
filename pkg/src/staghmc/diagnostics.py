"""Posterior summaries and sampler health metrics from chain records.

Everything here is a pure function of the chain arrays: moment and quantile
summaries with effective sample sizes, and a Gaussian kernel density
estimator for plotting marginals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError
from .sampler import ChainRecord

__all__ = [
    "ParameterSummary",
    "PosteriorSummary",
    "ess",
    "kde",
    "silverman_bandwidth",
    "summarize",
    "write_density_csv",
]

QUANTILE_LEVELS = (2.5, 25.0, 50.0, 75.0, 97.5)


@dataclass(frozen=True)
class ParameterSummary:
    mean: float
    sd: float
    quantiles: dict
    ci95: tuple
    ess: float

    def as_dict(self) -> dict:
        return {
            "mean": self.mean,
            "sd": self.sd,
            "quantiles": dict(self.quantiles),
            "ci95": list(self.ci95),
            "ess": self.ess,
        }


@dataclass(frozen=True)
class PosteriorSummary:
    parameters: dict
    acceptance_rate: float
    n_total: int
    n_retained: int
    discard: float

    def as_dict(self) -> dict:
        return {
            "parameters": {k: v.as_dict() for k, v in self.parameters.items()},
            "acceptance_rate": self.acceptance_rate,
            "n_total": self.n_total,
            "n_retained": self.n_retained,
            "discard": self.discard,
        }


def ess(series) -> float:
    """Effective sample size via the initial-positive-sequence rule.

    Autocorrelations are summed over consecutive pairs while the pair sums
    stay positive; the result is clipped to the series length (an antithetic
    chain is reported as fully efficient, not super-efficient).
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 10:
        raise ValidationError("ess needs a 1-d series of at least 10 samples")
    L = x.size
    if np.all(x == x[0]):
        return float(L)
    x = x - x.mean()
    var = float(np.dot(x, x)) / L
    if var == 0.0:
        return float(L)
    nfft = 1 << (2 * L - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:L] / L
    rho = acov / acov[0]
    pair_sums = rho[0:-1:2] + rho[1::2]
    positive = 0.0
    for g in pair_sums:
        if g <= 0:
            break
        positive += g
    tau = max(2.0 * positive - 1.0, 1e-12)
    return float(min(L, L / tau))


def _parameter_summary(x: np.ndarray) -> ParameterSummary:
    # ECDF-based quantiles: pooling identical chains leaves them unchanged
    qs = np.percentile(x, QUANTILE_LEVELS, method="averaged_inverted_cdf")
    if x.size >= 10 and x.std() > 0:
        neff = ess(x)
    else:
        neff = float(x.size)
    return ParameterSummary(
        mean=float(x.mean()),
        sd=float(x.std(ddof=0)),
        quantiles={f"{q:g}%": float(v) for q, v in zip(QUANTILE_LEVELS, qs)},
        ci95=(float(qs[0]), float(qs[-1])),
        ess=neff,
    )


def summarize(record: ChainRecord, discard: float = 0.0) -> PosteriorSummary:
    """Summaries of beta, gamma, K over the retained rows.

    ``discard`` is the burn-in fraction dropped from the front of the chain;
    the retained set must be non-empty.
    """
    if not (0.0 <= discard < 1.0):
        raise ValidationError(f"discard fraction must be in [0, 1), got {discard}")
    n_total = record.n_rows
    start = int(round(n_total * discard))
    if start >= n_total:
        raise ValidationError(
            f"discard={discard} leaves no rows of the {n_total}-row chain"
        )
    params = {
        "beta": _parameter_summary(record.beta[start:]),
        "gamma": _parameter_summary(record.gamma[start:]),
        "K": _parameter_summary(record.K[start:]),
    }
    return PosteriorSummary(
        parameters=params,
        acceptance_rate=float(np.mean(record.accepted[start:])),
        n_total=n_total,
        n_retained=n_total - start,
        discard=float(discard),
    )


def silverman_bandwidth(series) -> float:
    """0.9 min(sd, iqr/1.34) n^(-1/5); falls back to sd when the iqr is 0."""
    x = np.asarray(series, dtype=float)
    sd = float(x.std(ddof=1))
    q75, q25 = np.percentile(x, [75.0, 25.0])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * x.size ** (-0.2)


def kde(series, grid, bandwidth: float | None = None) -> np.ndarray:
    """Gaussian kernel density of ``series`` evaluated on ``grid``.

    Uses the Silverman bandwidth unless one is given. A zero-variance series
    has no meaningful bandwidth; that is an error (use a histogram instead).
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValidationError("kde needs a 1-d series of at least 2 samples")
    if not np.all(np.isfinite(x)):
        raise ValidationError("kde series must be finite")
    if x.std() == 0.0:
        raise DomainError(
            "series has zero variance; a kernel density is degenerate, use a histogram"
        )
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not (h > 0 and math.isfinite(h)):
        raise ValidationError(f"bandwidth must be positive and finite, got {h}")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    out = np.empty(grid.size)
    norm = x.size * h * math.sqrt(2.0 * math.pi)
    # block over the grid to keep the (grid x samples) matrix small
    block = max(1, int(4_000_000 // max(1, x.size)))
    for a in range(0, grid.size, block):
        z = (grid[a : a + block, None] - x[None, :]) / h
        out[a : a + block] = np.exp(-0.5 * z * z).sum(axis=1) / norm
    return out


def write_density_csv(path, grid, density) -> None:
    """Density curve as two columns ``x,density`` for external plotting."""
    grid = np.asarray(grid, dtype=float)
    density = np.asarray(density, dtype=float)
    if grid.shape != density.shape:
        raise ValidationError("grid and density must have matching shapes")
    np.savetxt(
        path,
        np.column_stack([grid, density]),
        delimiter=",",
        header="x,density",
        comments="",
        fmt="%.17g",
    )
