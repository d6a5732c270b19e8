"""Simple Monte Carlo propagation: correctness oracle and timing baseline.

Sampling uses a counter-based generator (Philox) so per-location streams are
independent and reproducible regardless of draw order or parallel split.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import OutputBinning, OutputProbabilityMatrix
from .errors import DegenerateDistributionError, GridError
from .grid import Grid
from .models import ModelFunction
from .distributions import MeasurementScenario

_RETRY_FACTOR = 1000  # total proposal budget = _RETRY_FACTOR * n_samples


@dataclass(frozen=True)
class SamplerSpec:
    """Continuous input distribution matched to the grid-based families.

    kind "gaussian": product Gaussian truncated to bounds by rejection;
    kind "uniform": uniform over bounds; kind "delta": point mass at `point`.
    """

    kind: str
    bounds: tuple  # ((lo, hi), ...) per dimension
    mean: np.ndarray | None = None
    sigma: np.ndarray | None = None
    point: np.ndarray | None = None

    @property
    def ndim(self) -> int:
        return len(self.bounds)


def gaussian_sampler(grid: Grid, mean, sigma) -> SamplerSpec:
    bounds = tuple((d.lower, d.upper) for d in grid.spec.dims)
    return SamplerSpec("gaussian", bounds,
                       mean=np.atleast_1d(np.asarray(mean, float)),
                       sigma=np.atleast_1d(np.asarray(sigma, float)))


def uniform_sampler(grid: Grid) -> SamplerSpec:
    return SamplerSpec("uniform", tuple((d.lower, d.upper) for d in grid.spec.dims))


def delta_sampler(grid: Grid, point) -> SamplerSpec:
    return SamplerSpec("delta", tuple((d.lower, d.upper) for d in grid.spec.dims),
                       point=np.atleast_1d(np.asarray(point, float)))


@dataclass(frozen=True)
class McConfig:
    n_samples: int
    K: int
    seed: int = 0
    binning: OutputBinning | None = None  # fixed binning; None = own range
    sort: bool = False  # sort-then-bin instead of direct binning

    def __post_init__(self):
        if self.n_samples < 1:
            raise GridError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.K < 1:
            raise GridError(f"K must be >= 1, got {self.K}")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & (2 ** 64 - 1)))


def draw_samples(sampler: SamplerSpec, n: int, seed: int) -> np.ndarray:
    """(n, ndim) i.i.d. samples; deterministic given the seed."""
    rng = _rng(seed)
    nd = sampler.ndim
    if sampler.kind == "delta":
        return np.tile(sampler.point, (n, 1))
    if sampler.kind == "uniform":
        lo = np.array([b[0] for b in sampler.bounds])
        hi = np.array([b[1] for b in sampler.bounds])
        return rng.uniform(lo, hi, size=(n, nd))
    if sampler.kind != "gaussian":
        raise GridError(f"unknown sampler kind {sampler.kind!r}")
    lo = np.array([b[0] for b in sampler.bounds])
    hi = np.array([b[1] for b in sampler.bounds])
    chunks = []
    n_accepted = 0
    proposed = 0
    budget = _RETRY_FACTOR * n
    while n_accepted < n:
        # Oversample mildly so high-acceptance cases finish in one batch.
        need = n - n_accepted
        batch = min(max(need + need // 16 + 1000, 10_000), budget - proposed)
        if batch <= 0:
            rate = n_accepted / max(proposed, 1)
            raise DegenerateDistributionError(
                f"truncated-Gaussian rejection exhausted its budget "
                f"({proposed} proposals, acceptance rate {rate:.2e})"
            )
        # Generate and bounds-check one contiguous 1-D block per dimension;
        # this avoids strided access over a (batch, ndim) layout.
        cols = []
        keep = None
        for d in range(nd):
            col = rng.standard_normal(batch) * sampler.sigma[d] + sampler.mean[d]
            inside = (col >= lo[d]) & (col <= hi[d])
            keep = inside if keep is None else (keep & inside)
            cols.append(col)
        proposed += batch
        kept = np.empty((int(np.count_nonzero(keep)), nd))
        for d in range(nd):
            kept[:, d] = cols[d][keep]
        chunks.append(kept)
        n_accepted += kept.shape[0]
    accepted = chunks[0] if len(chunks) == 1 else np.concatenate(chunks)
    return accepted[:n]


def mc_propagate(
    model: ModelFunction, sampler: SamplerSpec, cfg: McConfig
) -> tuple[np.ndarray, OutputBinning]:
    """Sample, evaluate, bin, normalize. Returns (probabilities, binning)."""
    samples = draw_samples(sampler, cfg.n_samples, cfg.seed)
    y = model.raw(*(samples[:, d] for d in range(sampler.ndim)))
    y = np.broadcast_to(y, (cfg.n_samples,))
    if cfg.sort:
        y = np.sort(y)
    if cfg.binning is not None:
        binning = cfg.binning
    else:
        y_min = float(y[0] if cfg.sort else y.min())
        y_max = float(y[-1] if cfg.sort else y.max())
        binning = OutputBinning(cfg.K if y_max > y_min else 1, y_min, y_max)
    counts = np.bincount(binning.assign(y), minlength=binning.K)
    return counts / cfg.n_samples, binning


def mc_propagate_many(
    model: ModelFunction,
    scenario: MeasurementScenario,
    cfg: McConfig,
    grid: Grid,
) -> OutputProbabilityMatrix:
    """One independent MC run per location; per-column seed = seed ^ index.

    Deliberately reuses nothing across columns: this is the L * C_MC baseline.
    A fixed binning is required so the columns share one output axis.
    """
    if cfg.binning is None:
        raise GridError(
            "mc_propagate_many needs a fixed OutputBinning so columns share one axis"
        )
    x_dims = [d for d, dim in enumerate(grid.spec.dims) if dim.role == "x"]
    a_dims = [d for d, dim in enumerate(grid.spec.dims) if dim.role == "alpha"]
    if len(x_dims) != 1:
        raise GridError("scenario MC needs exactly one x dimension")
    out = np.empty((cfg.binning.K, scenario.n_locations))
    for i, ell in enumerate(scenario.locations):
        mean = np.zeros(grid.ndim)
        sigma = np.empty(grid.ndim)
        mean[x_dims[0]] = ell
        sigma[x_dims[0]] = scenario.sigma_ell
        for d in a_dims:
            sigma[d] = scenario.sigma_alpha
        sampler = gaussian_sampler(grid, mean, sigma)
        col_cfg = McConfig(cfg.n_samples, cfg.K, cfg.seed ^ i, cfg.binning, cfg.sort)
        out[:, i], _ = mc_propagate(model, sampler, col_cfg)
    return OutputProbabilityMatrix(out, cfg.binning, scenario.locations.copy())
