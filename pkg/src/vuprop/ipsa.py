"""Input-probability sensitivity analysis on top of the propagation engine.

Produces per-location output distributions, shifts them into deviation
coordinates (a common delta-y axis), and reduces them to summary fields and
a global marginal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    MeasurementScenario,
    gaussian_on_grid,
    scenario_matrix,
)
from .engine import (
    OutputBinning,
    OutputProbabilityMatrix,
    build_model_matrix,
    matrix_from_model,
    propagate,
    propagate_many,
)
from .errors import GridError
from .grid import Dim, Grid, GridSpec, make_grid
from .models import ModelFunction


@dataclass(frozen=True)
class IpsaMatrix:
    """Deviation probabilities p(delta-y | location) on one shared axis."""

    values: np.ndarray  # (K, L)
    delta_centers: np.ndarray  # (K,) common delta-y bin centers
    bin_width: float
    y_ref: np.ndarray  # (L,) reference curve
    locations: np.ndarray  # (L,)

    @property
    def n_locations(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SummaryFields:
    locations: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    argmax: np.ndarray  # delta-y with maximum probability, per location
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    level: float
    global_axis: np.ndarray
    global_marginal: np.ndarray


def _single_x_dim(grid: Grid) -> int:
    x_dims = [d for d, dim in enumerate(grid.spec.dims) if dim.role == "x"]
    if len(x_dims) != 1:
        raise GridError(f"IPSA needs exactly one x dimension, got {len(x_dims)}")
    return x_dims[0]


def output_matrix(
    model: ModelFunction,
    grid: Grid,
    scenario: MeasurementScenario,
    K: int,
    shared_matrix: bool = True,
) -> OutputProbabilityMatrix:
    """Distribution of the model output for every measurement location.

    shared_matrix=True (default): one model matrix on the absolute grid is
    reused for all locations; columns are Gaussians with the mean shifted to
    each location. This is the sublinear-in-L path.

    shared_matrix=False: one matrix per location, built on a local deviation
    window of +-4 sigma_ell around the location (clipped to the grid's x
    extent), all sharing one output binning. Slower, but resolves narrow
    measurement uncertainties far below the absolute grid step.
    """
    if shared_matrix:
        matrix = matrix_from_model(model, grid, K)
        P = scenario_matrix(grid, scenario, convention="absolute")
        return propagate_many(matrix, P)

    xd = _single_x_dim(grid)
    x_dim = grid.spec.dims[xd]
    half = 4.0 * scenario.sigma_ell

    def local_grid(ell: float) -> Grid:
        lo = max(ell - half, x_dim.lower)
        hi = min(ell + half, x_dim.upper)
        dims = list(grid.spec.dims)
        dims[xd] = Dim(x_dim.name, lo, hi, x_dim.count, "x")
        return make_grid(GridSpec(tuple(dims)))

    # Pass 1: global output range so every column shares one binning.
    grids = [local_grid(ell) for ell in scenario.locations]
    outputs = []
    y_min = math.inf
    y_max = -math.inf
    for g in grids:
        y = model.raw(*(g.column(d) for d in range(g.ndim)))
        y = np.broadcast_to(y, (g.size,))
        outputs.append(y)
        y_min = min(y_min, float(y.min()))
        y_max = max(y_max, float(y.max()))
    binning = OutputBinning(K if y_max > y_min else 1, y_min, y_max)

    sigma = np.empty(grid.ndim)
    sigma[xd] = scenario.sigma_ell
    for d, dim in enumerate(grid.spec.dims):
        if dim.role == "alpha":
            sigma[d] = scenario.sigma_alpha
    out = np.empty((binning.K, scenario.n_locations))
    for i, ell in enumerate(scenario.locations):
        g = grids[i]
        matrix = build_model_matrix(outputs[i], K, grid=g, binning=binning)
        mean = np.zeros(grid.ndim)
        mean[xd] = ell
        col = gaussian_on_grid(g, mean, sigma)
        out[:, i] = propagate(matrix, col)
    return OutputProbabilityMatrix(out, binning, scenario.locations.copy())


def reference_curve(model: ModelFunction, locations, alpha_ref=None) -> np.ndarray:
    """y_ref[i] = M(location_i, alpha_ref); alpha_ref defaults to zeros.

    Zero is the mode of the centered alpha-Gaussian, matching the
    maximum-input-probability reference convention.
    """
    locations = np.atleast_1d(np.asarray(locations, float))
    n_alpha = model.arity - 1
    if alpha_ref is None:
        alpha_ref = np.zeros(n_alpha)
    else:
        alpha_ref = np.atleast_1d(np.asarray(alpha_ref, float))
        if alpha_ref.size != n_alpha:
            raise GridError(
                f"alpha_ref needs {n_alpha} components, got {alpha_ref.size}"
            )
    args = [locations] + [np.full_like(locations, a) for a in alpha_ref]
    return np.asarray(model.raw(*args), float)


def to_deviations(out: OutputProbabilityMatrix, y_ref) -> IpsaMatrix:
    """Shift each column's axis by its reference value and re-bin onto a
    common uniform delta-y axis of the same bin width (nearest-bin,
    mass-preserving)."""
    y_ref = np.atleast_1d(np.asarray(y_ref, float))
    if y_ref.size != out.n_locations:
        raise GridError(
            f"y_ref has {y_ref.size} entries, output matrix has {out.n_locations} columns"
        )
    b = out.binning.width
    centers = out.binning.centers
    shifted_min = float((centers[0] - y_ref).min())
    shifted_max = float((centers[-1] - y_ref).max())
    n_bins = int(round((shifted_max - shifted_min) / b)) + 1
    common = shifted_min + np.arange(n_bins) * b
    values = np.zeros((n_bins, out.n_locations))
    for i in range(out.n_locations):
        idx = np.clip(np.round((centers - y_ref[i] - common[0]) / b).astype(np.int64),
                      0, n_bins - 1)
        values[:, i] = np.bincount(idx, weights=out.values[:, i], minlength=n_bins)
    return IpsaMatrix(values, common, b, y_ref, out.locations.copy())


def _shortest_interval(masses: np.ndarray, level: float) -> tuple[int, int]:
    """Shortest contiguous bin run with mass >= level; ties -> lower start."""
    K = masses.size
    prefix = np.concatenate([[0.0], np.cumsum(masses)])
    best = (K, 0)  # (length, start)
    lo = 0
    for hi in range(1, K + 1):
        while prefix[hi] - prefix[lo + 1] >= level:
            lo += 1
        if prefix[hi] - prefix[lo] >= level:
            length = hi - lo
            if length < best[0]:
                best = (length, lo)
    if best[0] > K:  # level unreachable (won't happen for normalized columns)
        return 0, K - 1
    return best[1], best[1] + best[0] - 1


def summarize(ipsa: IpsaMatrix, level: float, weights=None) -> SummaryFields:
    """Per-location moments, argmax and confidence interval, plus the
    location-weighted global marginal."""
    if not 0.0 < level < 1.0:
        raise GridError(f"confidence level must be in (0, 1), got {level}")
    L = ipsa.n_locations
    if weights is None:
        weights = np.full(L, 1.0 / L)
    else:
        weights = np.asarray(weights, float)
        if weights.shape != (L,):
            raise GridError(f"weights need length {L}")
    c = ipsa.delta_centers
    mean = ipsa.values.T @ c
    ex2 = ipsa.values.T @ (c * c)
    variance = ex2 - mean ** 2
    argmax = c[np.argmax(ipsa.values, axis=0)]
    ci_lo = np.empty(L)
    ci_hi = np.empty(L)
    for i in range(L):
        lo, hi = _shortest_interval(ipsa.values[:, i], level)
        ci_lo[i] = c[lo]
        ci_hi[i] = c[hi]
    marginal = ipsa.values @ weights
    total = math.fsum(marginal)
    if total > 0:
        marginal = marginal / total
    return SummaryFields(
        ipsa.locations.copy(), mean, variance, argmax, ci_lo, ci_hi, level, c.copy(), marginal
    )


def deviation_statistic_matrix(
    model: ModelFunction,
    grid: Grid,
    scenario: MeasurementScenario,
    K: int,
) -> IpsaMatrix:
    """Alpha-matched deviation distributions: the propagated statistic is
    M(ell + x, alpha) - M(ell, alpha) itself, so the alpha offset cancels
    against a reference at the same alpha instead of the alpha mode.

    The grid's x-coordinate is the deviation from the location. One column
    per location; columns share one binning spanning the global range.
    """
    xd = _single_x_dim(grid)
    sigma = np.empty(grid.ndim)
    sigma[xd] = scenario.sigma_ell
    for d, dim in enumerate(grid.spec.dims):
        if dim.role == "alpha":
            sigma[d] = scenario.sigma_alpha
    base_col = gaussian_on_grid(grid, np.zeros(grid.ndim), sigma)

    stats = []
    s_min = math.inf
    s_max = -math.inf
    for ell in scenario.locations:
        shifted = [grid.column(d) + ell if d == xd else grid.column(d)
                   for d in range(grid.ndim)]
        ref = [np.full(grid.size, ell) if d == xd else grid.column(d)
               for d in range(grid.ndim)]
        s = np.broadcast_to(model.raw(*shifted) - model.raw(*ref), (grid.size,))
        stats.append(s)
        s_min = min(s_min, float(s.min()))
        s_max = max(s_max, float(s.max()))
    binning = OutputBinning(K if s_max > s_min else 1, s_min, s_max)
    values = np.empty((binning.K, scenario.n_locations))
    for i, s in enumerate(stats):
        matrix = build_model_matrix(s, K, grid=grid, binning=binning)
        values[:, i] = propagate(matrix, base_col)
    y_ref = np.zeros(scenario.n_locations)  # statistic is already a deviation
    return IpsaMatrix(values, binning.centers, binning.width, y_ref,
                      scenario.locations.copy())
