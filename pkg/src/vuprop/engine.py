"""Sparse model matrix: build, propagate, Bayes-invert, serialize.

The matrix of the discretized deterministic propagator has exactly one
nonzero (a 1) per input column, so it is stored as an index map
input-cell -> output-bin and the matrix product degenerates to a scatter-add
of cost O(N) per propagated column.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .distributions import ProbabilityMatrix, ProbabilityVector
from .errors import EvaluationError, GridError, NoSupportError, SidecarFormatError
from .grid import Grid
from .models import ModelFunction, eval_on_grid

_MAGIC = b"VUPM"
_VERSION = 1


@dataclass(frozen=True)
class OutputBinning:
    """K uniform bins spanning [y_min, y_max], half-open with the last closed."""

    K: int
    y_min: float
    y_max: float

    @property
    def width(self) -> float:
        if self.K == 1:
            return 1.0 if self.y_max == self.y_min else self.y_max - self.y_min
        return (self.y_max - self.y_min) / self.K

    @property
    def centers(self) -> np.ndarray:
        if self.y_max == self.y_min:
            return np.array([self.y_min])
        b = (self.y_max - self.y_min) / self.K
        return self.y_min + (np.arange(self.K) + 0.5) * b

    @property
    def edges(self) -> np.ndarray:
        if self.y_max == self.y_min:
            return np.array([self.y_min, self.y_min])
        return np.linspace(self.y_min, self.y_max, self.K + 1)

    def assign(self, y: np.ndarray) -> np.ndarray:
        """Bin index per value: floor((y - y_min)/b), clamped into [0, K-1]."""
        y = np.asarray(y, float)
        if self.K == 1 or self.y_max == self.y_min:
            return np.zeros(y.shape, dtype=np.int64)
        b = (self.y_max - self.y_min) / self.K
        raw = np.floor((y - self.y_min) / b).astype(np.int64)
        return np.clip(raw, 0, self.K - 1)


@dataclass(frozen=True)
class SparseModelMatrix:
    bin_of: np.ndarray  # (N,) int
    binning: OutputBinning
    grid: Grid = field(repr=False)
    model_name: str = ""

    @property
    def N(self) -> int:
        return self.bin_of.size

    @property
    def K(self) -> int:
        return self.binning.K


@dataclass(frozen=True)
class OutputProbabilityMatrix:
    values: np.ndarray  # (K, L)
    binning: OutputBinning
    locations: np.ndarray  # (L,)

    @property
    def n_locations(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class InvertedModelMatrix:
    """Row-wise Bayes posteriors over inputs, conditioned on one prior."""

    rows: tuple  # per output bin: (input index array, posterior prob array)
    output: np.ndarray  # propagated prior, length K
    prior: ProbabilityVector = field(repr=False)
    matrix: SparseModelMatrix = field(repr=False)


def build_model_matrix(
    outputs: np.ndarray,
    K: int,
    grid: Grid | None = None,
    model_name: str = "",
    binning: OutputBinning | None = None,
) -> SparseModelMatrix:
    """Bin model outputs into K uniform bins spanning their exact range.

    A fixed binning may be supplied instead (outputs outside its range clamp
    into the end bins). A constant-output model collapses to K = 1.
    """
    outputs = np.asarray(outputs, float)
    if outputs.size == 0:
        raise EvaluationError("no model outputs to bin")
    if K < 1:
        raise EvaluationError(f"bin count must be >= 1, got {K}")
    if not np.all(np.isfinite(outputs)):
        raise EvaluationError("non-finite model outputs")
    if binning is None:
        y_min = float(outputs.min())
        y_max = float(outputs.max())
        if y_min == y_max:
            K = 1
        binning = OutputBinning(K, y_min, y_max)
    bin_of = binning.assign(outputs)
    return SparseModelMatrix(bin_of, binning, grid, model_name)


def matrix_from_model(
    model: ModelFunction, grid: Grid, K: int, binning: OutputBinning | None = None
) -> SparseModelMatrix:
    outputs = eval_on_grid(model, grid)
    return build_model_matrix(outputs, K, grid=grid, model_name=model.name, binning=binning)


def shifted_model_matrix(
    model: ModelFunction, grid: Grid, ell: float, K: int,
    binning: OutputBinning | None = None,
) -> SparseModelMatrix:
    """Matrix of x -> M(ell + x, alpha) on a deviation-coordinate grid."""
    x_dims = [d for d, dim in enumerate(grid.spec.dims) if dim.role == "x"]
    if len(x_dims) != 1:
        raise GridError("shifted matrix needs exactly one x dimension")
    xd = x_dims[0]
    args = [grid.column(d) + ell if d == xd else grid.column(d) for d in range(grid.ndim)]
    outputs = model.raw(*args)
    outputs = np.broadcast_to(outputs, (grid.size,))
    if not np.all(np.isfinite(outputs)):
        raise EvaluationError(f"model {model.name!r} non-finite on shifted grid at ell={ell}")
    return build_model_matrix(
        outputs, K, grid=grid, model_name=f"{model.name}@ell={ell!r}", binning=binning
    )


def propagate(matrix: SparseModelMatrix, p: ProbabilityVector | np.ndarray) -> np.ndarray:
    """Scatter-add input masses into their output bins; returns length-K vector."""
    values = p.values if isinstance(p, ProbabilityVector) else np.asarray(p, float)
    if values.shape != (matrix.N,):
        raise GridError(
            f"input vector length {values.shape} does not match matrix N = {matrix.N}"
        )
    return np.bincount(matrix.bin_of, weights=values, minlength=matrix.K)


def propagate_many(matrix: SparseModelMatrix, P: ProbabilityMatrix) -> OutputProbabilityMatrix:
    """Propagate every column through the one shared matrix."""
    if matrix.grid is not None and P.grid.size != matrix.N:
        raise GridError("probability matrix grid does not match model matrix grid")
    out = np.empty((matrix.K, P.n_locations))
    for i in range(P.n_locations):
        out[:, i] = propagate(matrix, P.columns[:, i])
    return OutputProbabilityMatrix(out, matrix.binning, P.locations.copy())


def invert(matrix: SparseModelMatrix, prior: ProbabilityVector) -> InvertedModelMatrix:
    """Bayes posteriors p(input | output bin) under the given prior."""
    out = propagate(matrix, prior)
    order = np.argsort(matrix.bin_of, kind="stable")
    sorted_bins = matrix.bin_of[order]
    boundaries = np.searchsorted(sorted_bins, np.arange(matrix.K + 1))
    rows = []
    for r in range(matrix.K):
        members = order[boundaries[r]:boundaries[r + 1]]
        if out[r] > 0.0:
            rows.append((members, prior.values[members] / out[r]))
        else:
            rows.append((members[:0], np.empty(0)))
    return InvertedModelMatrix(tuple(rows), out, prior, matrix)


def posterior(inv: InvertedModelMatrix, bin: int) -> ProbabilityVector:
    """Dense posterior over inputs for one output bin."""
    if not 0 <= bin < len(inv.rows):
        raise GridError(f"bin {bin} outside [0, {len(inv.rows)})")
    members, probs = inv.rows[bin]
    if probs.size == 0:
        raise NoSupportError(f"output bin {bin} has zero probability under the prior")
    values = np.zeros(inv.matrix.N)
    values[members] = probs
    return ProbabilityVector(values, inv.prior.grid)


def reconstruct_prior(inv: InvertedModelMatrix) -> np.ndarray:
    """Sum of out[r] * posterior_r; equals the prior (Bayes round trip)."""
    values = np.zeros(inv.matrix.N)
    for r, (members, probs) in enumerate(inv.rows):
        if probs.size:
            values[members] += inv.output[r] * probs
    return values


# --- binary sidecar ----------------------------------------------------------
# Header: magic "VUPM", u32 version, u64 N, u64 K, f64 y_min, f64 y_max,
# then N little-endian u32 bin indices.

def save_matrix(path, matrix: SparseModelMatrix) -> None:
    header = _MAGIC + struct.pack(
        "<IQQdd", _VERSION, matrix.N, matrix.K, matrix.binning.y_min, matrix.binning.y_max
    )
    body = matrix.bin_of.astype("<u4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)


def load_matrix(path, grid: Grid | None = None, model_name: str = "") -> SparseModelMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise SidecarFormatError(f"{path}: bad magic {blob[:4]!r}, expected {_MAGIC!r}")
    try:
        version, n, k, y_min, y_max = struct.unpack("<IQQdd", blob[4:40])
    except struct.error:
        raise SidecarFormatError(f"{path}: truncated header") from None
    if version != _VERSION:
        raise SidecarFormatError(f"{path}: unsupported version {version}")
    body = blob[40:]
    if len(body) != 4 * n:
        raise SidecarFormatError(f"{path}: expected {4 * n} index bytes, got {len(body)}")
    bin_of = np.frombuffer(body, dtype="<u4").astype(np.int64)
    if bin_of.size and bin_of.max() >= k:
        raise SidecarFormatError(f"{path}: bin index out of range")
    if grid is not None and grid.size != n:
        raise SidecarFormatError(f"{path}: matrix N = {n} does not match grid size {grid.size}")
    return SparseModelMatrix(bin_of, OutputBinning(int(k), y_min, y_max), grid, model_name)


def matrix_manifest(matrix: SparseModelMatrix, extra: dict | None = None) -> dict:
    manifest = {
        "model": matrix.model_name,
        "N": matrix.N,
        "K": matrix.K,
        "y_min": matrix.binning.y_min,
        "y_max": matrix.binning.y_max,
    }
    if matrix.grid is not None:
        manifest["grid"] = [
            {"name": d.name, "lower": d.lower, "upper": d.upper, "count": d.count, "role": d.role}
            for d in matrix.grid.spec.dims
        ]
    if extra:
        manifest.update(extra)
    return manifest
