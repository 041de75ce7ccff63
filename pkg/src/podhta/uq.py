"""Uncertainty quantification on the tensorised parameter grid.

Models are maps from a grid multi-index ``(k1, k2, k3, kE)`` to the QoI; the
parameter point behind an index comes from :class:`ParameterGrid`.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from podhta.errors import ModelEvaluationError, NotConvergedError, PodHtaError
from podhta.fullmodel import LatticeConfig, ParameterPoint, SimulationResult, solve_full
from podhta.htucker.build import DEFAULT_MAX_RANK, DEFAULT_SUB_SIZE, DEFAULT_TOL, build_hta
from podhta.htucker.oracle import EntryOracle
from podhta.htucker.tensor import HTensor, eval_hta, eval_many
from podhta.rom import SnapshotDatabase, reduced_model

DEFAULT_RANGES = ((0.95, 1.05), (0.95, 1.05), (0.95, 1.05), (100.0, 200.0))


@dataclass(frozen=True)
class ParameterGrid:
    """``N`` equidistant values per direction over ``ranges`` (l1, l2, l3, E)."""

    N: int
    ranges: tuple = DEFAULT_RANGES

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("a parameter grid needs N >= 2")
        ranges = tuple((float(lo), float(hi)) for lo, hi in self.ranges)
        if len(ranges) != 4:
            raise ValueError("expected ranges for l1, l2, l3 and E")
        for lo, hi in ranges:
            if not lo < hi:
                raise ValueError(f"empty range ({lo}, {hi})")
        object.__setattr__(self, "ranges", ranges)

    @property
    def d(self):
        return len(self.ranges)

    @property
    def grid_sizes(self):
        return (self.N,) * self.d

    def value(self, mu, k):
        if not 0 <= k < self.N:
            raise IndexError(f"grid index {k} out of range [0, {self.N - 1}] in direction {mu + 1}")
        lo, hi = self.ranges[mu]
        return lo + k * (hi - lo) / (self.N - 1)

    def values(self, mu):
        return np.array([self.value(mu, k) for k in range(self.N)])


def grid_point(grid: ParameterGrid, index) -> ParameterPoint:
    if len(index) != grid.d:
        raise IndexError(f"index {tuple(index)} needs {grid.d} components")
    return ParameterPoint(*(grid.value(mu, int(k)) for mu, k in enumerate(index)))


def sample_uniform(grid: ParameterGrid, rng) -> tuple:
    """One uniformly distributed grid index."""
    return tuple(int(k) for k in rng.integers(0, grid.N, size=grid.d))


def sample_indices(grid: ParameterGrid, n: int, rng, fixed: Optional[dict] = None) -> np.ndarray:
    """``n`` uniform grid indices as an ``(n, d)`` array.

    ``fixed`` maps a direction (0-based) to a constant index, e.g. ``{3: k}``
    to hold E fixed while the geometry varies.
    """
    idx = rng.integers(0, grid.N, size=(n, grid.d))
    for mu, k in (fixed or {}).items():
        if not 0 <= k < grid.N:
            raise IndexError(f"fixed index {k} out of range")
        idx[:, mu] = k
    return idx


@dataclass(frozen=True)
class McEstimate:
    mean: float
    variance: float
    n: int
    seed: Optional[int]
    trace: np.ndarray = field(repr=False, compare=False, default=None)  # rows (count, mean, variance)

    def __eq__(self, other):
        if not isinstance(other, McEstimate):
            return NotImplemented
        same = (self.mean, self.variance, self.n, self.seed) == (other.mean, other.variance, other.n, other.seed)
        if self.trace is None or other.trace is None:
            return same and self.trace is other.trace
        return same and np.array_equal(self.trace, other.trace)

    __hash__ = None


def running_moments(values) -> np.ndarray:
    """Rows ``(count, mean, unbiased variance)`` after each sample (Welford)."""
    out = np.zeros((len(values), 3))
    mean, m2 = 0.0, 0.0
    for k, x in enumerate(values, start=1):
        delta = x - mean
        mean += delta / k
        m2 += delta * (x - mean)
        out[k - 1] = (k, mean, m2 / (k - 1) if k > 1 else 0.0)
    return out


def evaluate_indices(f, indices, threads=1) -> np.ndarray:
    """``f`` at each index, in order; any failure names the offending index."""
    indices = [tuple(int(k) for k in idx) for idx in indices]
    if hasattr(f, "many") and indices:
        return np.asarray(f.many(indices), dtype=float)

    def one(idx):
        try:
            return float(f(idx))
        except (PodHtaError, ArithmeticError, ValueError) as exc:
            raise ModelEvaluationError(idx, exc) from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.array(list(pool.map(one, indices)))
    return np.array([one(idx) for idx in indices])


def mc_estimate(f, grid: ParameterGrid, n: int, rng=None, seed=None, threads=1, fixed=None) -> McEstimate:
    """Sample mean and unbiased variance of ``f`` over ``n`` uniform grid samples."""
    if n < 2:
        raise ValueError("Monte Carlo needs n >= 2 samples")
    if rng is None:
        rng = np.random.default_rng(seed)
    values = evaluate_indices(f, sample_indices(grid, n, rng, fixed), threads)
    trace = running_moments(values)
    return McEstimate(float(values.mean()), float(values.var(ddof=1)), n, seed, trace)


def relative_error(x: float, y: float) -> float:
    """``(x - y) / x``, evaluated as ``1 - y / x``."""
    if x == 0:
        raise ZeroDivisionError("relative error with reference value 0")
    return 1.0 - y / x


@dataclass(frozen=True)
class ErrorStats:
    mean: float
    std: float
    max: float
    min: float
    n: int


def error_stats(pairs) -> ErrorStats:
    """Statistics of :func:`relative_error` over ``(reference, other)`` pairs (population std)."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("error_stats needs at least one pair")
    eps = np.array([relative_error(x, y) for x, y in pairs])
    return ErrorStats(float(eps.mean()), float(eps.std()), float(eps.max()), float(eps.min()), len(eps))


# Models over grid indices


class FullModel:
    kind = "full"

    def __init__(self, grid: ParameterGrid, config: LatticeConfig):
        self.grid, self.config = grid, config

    def solve(self, index) -> SimulationResult:
        return solve_full(grid_point(self.grid, index), self.config)

    def __call__(self, index):
        res = self.solve(index)
        if not res.converged:
            raise NotConvergedError(f"full model did not converge at index {tuple(index)}")
        return res.qoi


class ReducedGridModel:
    """Grid-index view of a :class:`~podhta.rom.PodModel` / :class:`~podhta.rom.ApodModel`."""

    def __init__(self, model, grid: ParameterGrid):
        self.model, self.grid = model, grid
        self.kind = model.kind

    def __call__(self, index):
        return self.model(grid_point(self.grid, index))


class HtaModel:
    kind = "hta"

    def __init__(self, h: HTensor):
        self.h = h

    def __call__(self, index):
        return eval_hta(self.h, index)

    def many(self, indices):
        return eval_many(self.h, indices)


class ConstantModel:
    kind = "const"

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, index):
        return self.value


class ZeroModel(ConstantModel):
    def __init__(self):
        super().__init__(0.0)


# Surrogate maximisation and greedy enrichment


@dataclass(frozen=True)
class AltMaxResult:
    index: tuple
    value: float
    candidates: tuple  # (index, |value|) per start, best first
    histories: tuple  # |value| after each mode update, per start


def _line_argmax(h, index, mu, current):
    lines = np.tile(np.array(index), (h.grid_sizes[mu], 1))
    lines[:, mu] = np.arange(h.grid_sizes[mu])
    vals = np.abs(eval_many(h, lines))
    best = vals.max()
    # ties keep the current value, otherwise the smallest index
    if vals[current] == best:
        return current, best
    return int(np.argmax(vals)), best


def alt_maximize(h: HTensor, starts: int = 16, max_sweeps: int = 10, rng=None) -> AltMaxResult:
    """Coordinate-wise maximisation of ``|H|`` from ``starts`` random indices."""
    if starts < 1 or max_sweeps < 1:
        raise ValueError("starts and max_sweeps must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    found, histories = [], []
    for _ in range(starts):
        index = [int(rng.integers(0, n)) for n in h.grid_sizes]
        value = abs(eval_hta(h, index))
        history = [value]
        for _sweep in range(max_sweeps):
            changed = False
            for mu in range(h.d):
                k, value = _line_argmax(h, index, mu, index[mu])
                if k != index[mu]:
                    index[mu] = k
                    changed = True
                history.append(float(value))
            if not changed:
                break
        found.append((tuple(index), float(value)))
        histories.append(tuple(history))
    order = sorted(range(starts), key=lambda s: -found[s][1])
    candidates = tuple(found[s] for s in order)
    return AltMaxResult(candidates[0][0], candidates[0][1], candidates, tuple(histories))


@dataclass
class ResidualModel:
    """``r_k(p) = H_full(p) - phi_k(p)``; ``reduced = None`` means ``phi_0 = 0``."""

    hta_full: HTensor
    reduced: Optional[Callable] = None
    iteration: int = 0

    def __call__(self, index):
        base = eval_hta(self.hta_full, index)
        if self.reduced is None:
            return base
        return base - self.reduced(index)


@dataclass(frozen=True)
class TraceEntry:
    k: int
    max_residual: float
    p_star: tuple


@dataclass
class EnrichmentResult:
    trace: list
    models: list
    database: Optional[SnapshotDatabase]
    residual_htas: list
    runs: list = field(default_factory=list)  # full results in enrichment order


def enrich_snapshots(
    hta_full: HTensor,
    grid: ParameterGrid,
    rom_kind: str,
    m: int,
    K: int,
    config: LatticeConfig,
    tol: float = DEFAULT_TOL,
    sub_size: int = DEFAULT_SUB_SIZE,
    max_rank: int = DEFAULT_MAX_RANK,
    seed: int = 0,
    starts: int = 16,
    max_sweeps: int = 10,
    threads: int = 1,
    log: Optional[Callable] = None,
) -> EnrichmentResult:
    """Greedy snapshot selection driven by an HTA surrogate of the residual.

    Iteration 0 uses ``r_0 = H_full``. Each further iteration runs the full
    model at the maximiser of the previous residual surrogate, appends its
    snapshots, rebuilds the reduced model, approximates the new residual by an
    HTA and maximises it. The trace holds ``max |r_k|`` for ``k = 0 .. K``.
    """
    if K < 1:
        raise ValueError("enrichment needs K >= 1")
    if hta_full.grid_sizes != grid.grid_sizes:
        raise ValueError("hta_full was not built on this grid")
    rng = np.random.default_rng(seed)
    residual = ResidualModel(hta_full)
    surrogate = hta_full
    am = alt_maximize(surrogate, starts, max_sweeps, rng)
    trace = [TraceEntry(0, am.value, am.index)]
    models = [ZeroModel()]
    htas = [hta_full]
    db = None
    runs = []
    full = FullModel(grid, config)
    for k in range(1, K + 1):
        result = None
        for index, _value in am.candidates:
            result = full.solve(index)
            if result.converged:
                break
            if log:
                log(f"k = {k}: full solve failed at {index}, trying the next start")
        if result is None or not result.converged:
            raise NotConvergedError(f"enrichment step {k}: full solves failed at every candidate")
        runs.append(result)
        db = SnapshotDatabase.from_results([result]) if db is None else db.extended(result)
        model = ReducedGridModel(reduced_model(rom_kind, db, m, config), grid)
        models.append(model)
        residual = ResidualModel(hta_full, model, k)
        oracle = EntryOracle(residual, grid.grid_sizes)
        surrogate = build_hta(oracle, None, grid.grid_sizes, tol, sub_size, max_rank,
                              seed=int(rng.integers(2**31)), threads=threads)
        htas.append(surrogate)
        am = alt_maximize(surrogate, starts, max_sweeps, rng)
        trace.append(TraceEntry(k, am.value, am.index))
        if log:
            log(f"k = {k}: max|r| = {am.value:.6g} at {am.index}, {oracle.count} reduced solves")
    return EnrichmentResult(trace, models, db, htas, runs)
