"""Projection-based reduced solvers: global POD and adaptive POD (APOD).

POD projects every load step onto one basis built from all snapshots. APOD
sorts the snapshots by maximal displacement and, at each load step, builds a
small basis from the ``o = m * s`` snapshots whose maximal displacement is
closest to the current state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from podhta.errors import NotConvergedError, RankError, WindowError
from podhta.fullmodel import LatticeConfig, ParameterPoint, SimulationResult, Snapshot, incremental_solve
from podhta.numerics import numerical_rank, svd

RANK_RTOL = 1e-12


@dataclass(frozen=True)
class SnapshotDatabase:
    """Snapshots pooled from ``s`` precalculation runs, in insertion order."""

    snapshots: tuple
    s: int

    @classmethod
    def from_results(cls, results: Sequence[SimulationResult]):
        snaps = []
        for res in results:
            snaps.extend(res.snapshots)
        return cls(tuple(snaps), len(results))

    def extended(self, result: SimulationResult):
        """New database with one more run appended."""
        return SnapshotDatabase(self.snapshots + tuple(result.snapshots), self.s + 1)

    def __len__(self):
        return len(self.snapshots)

    @property
    def n_dof(self):
        return self.snapshots[0].displacement.size

    @cached_property
    def matrix(self):
        """Snapshot matrix ``D`` (n_dof x l), columns in insertion order."""
        return np.column_stack([snap.displacement for snap in self.snapshots])

    @cached_property
    def sorted_order(self):
        return np.argsort(self.max_disps, kind="stable")

    @cached_property
    def max_disps(self):
        return np.array([snap.max_disp for snap in self.snapshots])

    @cached_property
    def _svd(self):
        return svd(self.matrix)


@dataclass(frozen=True)
class ProjectionBasis:
    phi: np.ndarray
    source: str = "global-POD"
    window_start: Optional[int] = None

    @property
    def m(self):
        return self.phi.shape[1]


def build_pod_basis(db: SnapshotDatabase, m: int) -> ProjectionBasis:
    if len(db) < 1:
        raise ValueError("empty snapshot database")
    if not 1 <= m <= min(db.n_dof, len(db)):
        raise ValueError(f"m = {m} outside [1, min(n_dof, l)] = [1, {min(db.n_dof, len(db))}]")
    res = db._svd
    rank = numerical_rank(res.singular_values, RANK_RTOL)
    if m > rank:
        raise RankError(m, rank)
    return ProjectionBasis(res.left[:, :m].copy())


def _check_layout(phi, config):
    n_dof = 3 * (config.n + 1) ** 3
    if phi.shape[0] != n_dof:
        raise ValueError(f"basis has {phi.shape[0]} rows but the n = {config.n} lattice has {n_dof} dofs")


def solve_pod(params: ParameterPoint, basis: ProjectionBasis, config: LatticeConfig) -> SimulationResult:
    """Galerkin-projected Newton solve in the span of ``basis.phi``."""
    phi = basis.phi
    _check_layout(phi, config)
    return incremental_solve(params, config, lambda step, u_prev: (phi, None))


def window_start(l: int, o: int, b: int) -> int:
    """Clamped index ``a`` of the first window snapshot; ``b`` is 1-based."""
    return max(0, min(l - o, b - o // 2))


def best_snapshot(db: SnapshotDatabase, u_max: float) -> int:
    """1-based position (in sorted order) of the snapshot whose max norm is closest to ``u_max``."""
    sorted_norms = db.max_disps[db.sorted_order]
    return int(np.argmin(np.abs(sorted_norms - u_max))) + 1


def apod_window(db: SnapshotDatabase, u_max: float, m: int):
    """Return ``(a, window)``: the sorted snapshots ``a+1 .. a+o`` with ``o = m * s``."""
    if len(db) == 0:
        raise ValueError("empty snapshot database")
    o = m * db.s
    l = len(db)
    if o > l:
        raise WindowError(
            f"window of o = {o} snapshots exceeds the l = {l} available; "
            "generate snapshots with larger deformations or more precalculations"
        )
    a = window_start(l, o, best_snapshot(db, u_max))
    order = db.sorted_order[a:a + o]
    return a, [db.snapshots[i] for i in order]


@dataclass
class _ApodBases:
    db: SnapshotDatabase
    m: int
    cache: dict = field(default_factory=dict)

    def __call__(self, step, u_prev):
        u_max = float(np.abs(u_prev).max())
        a, window = apod_window(self.db, u_max, self.m)
        if a not in self.cache:
            res = svd(np.column_stack([s.displacement for s in window]))
            rank = numerical_rank(res.singular_values, RANK_RTOL)
            self.cache[a] = (res.left[:, :min(self.m, rank)].copy(), rank)
        phi, rank = self.cache[a]
        note = None
        if rank < self.m:
            note = f"step {step}: window at a = {a} has rank {rank} < m = {self.m}; using {rank} modes"
        return phi, note


def solve_apod(params: ParameterPoint, db: SnapshotDatabase, m: int, config: LatticeConfig) -> SimulationResult:
    """Reduced solve with a per-step basis chosen by the previous step's max displacement."""
    if db.n_dof != 3 * (config.n + 1) ** 3:
        raise ValueError("snapshot database does not match the lattice dof layout")
    return incremental_solve(params, config, _ApodBases(db, m))


def l2_field_error(full: SimulationResult, reduced: SimulationResult) -> float:
    if not (full.converged and reduced.converged):
        raise NotConvergedError("L2 field error needs two converged results")
    a, b = full.final_displacement, reduced.final_displacement
    if a.shape != b.shape:
        raise ValueError(f"dof layouts differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


class PodModel:
    """QoI map ``p -> phi_POD(p)`` with a fixed global basis."""

    kind = "pod"

    def __init__(self, db: SnapshotDatabase, m: int, config: LatticeConfig):
        self.db, self.m, self.config = db, m, config
        self.basis = build_pod_basis(db, m)

    def solve(self, params):
        return solve_pod(params, self.basis, self.config)

    def __call__(self, params):
        res = self.solve(params)
        if not res.converged:
            raise NotConvergedError(f"POD solve did not converge at {params}: {res.events[-1:]}")
        return res.qoi


class ApodModel:
    """QoI map ``p -> phi_APOD(p)``."""

    kind = "apod"

    def __init__(self, db: SnapshotDatabase, m: int, config: LatticeConfig):
        self.db, self.m, self.config = db, m, config
        if m * db.s > len(db):
            raise WindowError(f"o = m * s = {m * db.s} exceeds l = {len(db)}")

    def solve(self, params):
        return solve_apod(params, self.db, self.m, self.config)

    def __call__(self, params):
        res = self.solve(params)
        if not res.converged:
            raise NotConvergedError(f"APOD solve did not converge at {params}: {res.events[-1:]}")
        return res.qoi


def reduced_model(kind: str, db: SnapshotDatabase, m: int, config: LatticeConfig):
    if kind == "pod":
        return PodModel(db, m, config)
    if kind == "apod":
        return ApodModel(db, m, config)
    raise ValueError(f"unknown reduced model kind {kind!r}")


__all__ = [
    "ApodModel", "PodModel", "ProjectionBasis", "Snapshot", "SnapshotDatabase", "apod_window", "best_snapshot",
    "build_pod_basis", "l2_field_error", "reduced_model", "solve_apod", "solve_pod", "window_start",
]
