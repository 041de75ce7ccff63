"""Parametric nonlinear reference model: a cube-shaped lattice of Neo-Hookean rods.

The cube ``[0, l1] x [0, l2] x [0, l3]`` is split into ``n**3`` cells. Every
grid edge carries an axial rod, every cell carries its four body diagonals.
The bottom face is clamped and the top face is pressed down by a uniform
traction applied in ``steps`` equal increments; each increment is solved by
Newton-Raphson. The rods follow the incompressible uniaxial Neo-Hookean law
``N = A * mu * (lam - lam**-2)`` with ``mu = E / 3``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from podhta.errors import NotConvergedError, RodCollapseError, SingularMatrixError
from podhta.numerics import norms, solve_linear

# Top-face traction (force per unit area). Calibrated once by bisection so the
# nominal point (1, 1, 1, E=150) on the default n = 2 lattice deforms by 16 % of
# its height (scripts/calibrate_load.py). The loading path of this lattice has
# a limit point near -64 at E = 150; at E = 100 this load sits at ~70 % of it.
DEFAULT_LOAD = -29.76

MAX_BISECTIONS = 6


@dataclass(frozen=True)
class ParameterPoint:
    """Edge scale factors ``l1, l2, l3`` and stiffness ``E``."""

    l1: float
    l2: float
    l3: float
    E: float

    def __post_init__(self):
        if not self.E > 0.0:
            raise ValueError("E must be positive")
        for name in ("l1", "l2", "l3"):
            value = getattr(self, name)
            if not 0.5 <= value <= 2.0:
                raise ValueError(f"{name} = {value} outside the admissible range [0.5, 2.0]")

    def as_tuple(self):
        return (self.l1, self.l2, self.l3, self.E)


@dataclass(frozen=True)
class LatticeConfig:
    n: int = 2
    load_total: float = DEFAULT_LOAD
    steps: int = 100
    newton_tol_rel: float = 1e-8
    newton_tol_abs: float = 1e-10
    newton_max_iter: int = 25
    diagonal_weight: float = 0.25

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not (self.newton_tol_rel > 0 and self.newton_tol_abs > 0):
            raise ValueError("Newton tolerances must be positive")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")
        if not 0.0 < self.diagonal_weight <= 1.0:
            raise ValueError("diagonal_weight must lie in (0, 1]")


@dataclass(frozen=True)
class Snapshot:
    displacement: np.ndarray
    max_disp: float
    step_index: int
    source_params: ParameterPoint

    @classmethod
    def from_displacement(cls, u, step_index, params):
        u = np.array(u, dtype=float)
        return cls(u, float(np.abs(u).max()) if u.size else 0.0, step_index, params)


@dataclass
class SimulationResult:
    snapshots: list
    qoi: float
    converged: bool
    newton_iterations_total: int
    params: ParameterPoint
    events: list = field(default_factory=list)

    @property
    def final_displacement(self):
        return self.snapshots[-1].displacement


@dataclass
class LatticeModel:
    """Geometry, connectivity, supports and reference load of one lattice."""

    params: ParameterPoint
    config: LatticeConfig
    nodes: np.ndarray  # (n_nodes, 3) reference positions
    rods: np.ndarray  # (n_rods, 2) node indices
    rest_length: np.ndarray
    area: np.ndarray
    n_axis: int
    fixed: np.ndarray  # bool mask over dofs
    load: np.ndarray  # full-load external force vector

    def __post_init__(self):
        a, b = self.rods[:, 0], self.rods[:, 1]
        comp = np.arange(3)
        self._dofs_a = 3 * a[:, None] + comp
        self._dofs_b = 3 * b[:, None] + comp
        nd = self.n_dof
        # flat indices of the four 3x3 blocks of each rod stiffness
        ra, rb = self._dofs_a[:, :, None], self._dofs_b[:, :, None]
        ca, cb = self._dofs_a[:, None, :], self._dofs_b[:, None, :]
        self._k_index = np.stack([ra * nd + ca, rb * nd + cb, ra * nd + cb, rb * nd + ca], axis=1).ravel()

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_rods(self):
        return self.rods.shape[0]

    @property
    def n_dof(self):
        return 3 * self.n_nodes

    def without_supports(self):
        """Same lattice with the clamped bottom face released."""
        return LatticeModel(
            self.params, self.config, self.nodes, self.rods, self.rest_length, self.area,
            self.n_axis, np.zeros_like(self.fixed), self.load,
        )


def _node_id(i, j, k, n):
    return i + (n + 1) * (j + (n + 1) * k)


def build_lattice(params: ParameterPoint, config: LatticeConfig) -> LatticeModel:
    n = config.n
    h = np.array([params.l1, params.l2, params.l3]) / n
    grid = np.arange(n + 1)
    k3, j3, i3 = np.meshgrid(grid, grid, grid, indexing="ij")
    nodes = np.column_stack([i3.ravel() * h[0], j3.ravel() * h[1], k3.ravel() * h[2]])

    def edge_factor(q):
        return 0.5 if q in (0, n) else 1.0

    rods, lengths, areas = [], [], []
    for axis in range(3):
        t1, t2 = [ax for ax in range(3) if ax != axis]
        for idx in np.ndindex(n + 1, n + 1, n + 1):
            if idx[axis] == n:
                continue
            jdx = list(idx)
            jdx[axis] += 1
            rods.append((_node_id(*idx, n), _node_id(*jdx, n)))
            lengths.append(h[axis])
            areas.append(h[t1] * h[t2] * edge_factor(idx[t1]) * edge_factor(idx[t2]))
    n_axis = len(rods)

    diag_area = config.diagonal_weight * float(np.prod(h)) ** (2.0 / 3.0) / 4.0
    diag_length = float(np.linalg.norm(h))
    corners = [((0, 0, 0), (1, 1, 1)), ((1, 0, 0), (0, 1, 1)), ((0, 1, 0), (1, 0, 1)), ((0, 0, 1), (1, 1, 0))]
    for i, j, k in np.ndindex(n, n, n):
        for c0, c1 in corners:
            rods.append((_node_id(i + c0[0], j + c0[1], k + c0[2], n), _node_id(i + c1[0], j + c1[1], k + c1[2], n)))
            lengths.append(diag_length)
            areas.append(diag_area)

    n_dof = 3 * nodes.shape[0]
    fixed = np.zeros(n_dof, dtype=bool)
    load = np.zeros(n_dof)
    for i, j in np.ndindex(n + 1, n + 1):
        bottom = _node_id(i, j, 0, n)
        fixed[3 * bottom:3 * bottom + 3] = True
        top = _node_id(i, j, n, n)
        load[3 * top + 2] = config.load_total * h[0] * edge_factor(i) * h[1] * edge_factor(j)

    return LatticeModel(
        params, config, nodes, np.array(rods, dtype=int), np.array(lengths), np.array(areas), n_axis, fixed, load,
    )


def _kinematics(model, u):
    x = model.nodes + np.asarray(u, dtype=float).reshape(-1, 3)
    dvec = x[model.rods[:, 1]] - x[model.rods[:, 0]]
    ell = np.linalg.norm(dvec, axis=1)
    collapsed = np.flatnonzero(ell < 1e-12 * model.rest_length)
    if collapsed.size:
        raise RodCollapseError(int(collapsed[0]))
    return dvec / ell[:, None], ell, ell / model.rest_length


def internal_force(model: LatticeModel, u, E) -> np.ndarray:
    """Assembled internal force vector ``R(U)``; supported dofs are zeroed."""
    d, _, lam = _kinematics(model, u)
    axial = model.area * (E / 3.0) * (lam - lam ** -2)
    fvec = axial[:, None] * d
    r = np.zeros(model.n_dof)
    np.add.at(r, model._dofs_b, fvec)
    np.add.at(r, model._dofs_a, -fvec)
    r[model.fixed] = 0.0
    return r


def tangent(model: LatticeModel, u, E) -> np.ndarray:
    """Assembled tangent stiffness; supported rows/columns replaced by identity."""
    d, ell, lam = _kinematics(model, u)
    mu_a = model.area * (E / 3.0)
    k_axial = mu_a * (1.0 + 2.0 * lam ** -3) / model.rest_length
    k_geo = mu_a * (lam - lam ** -2) / ell
    dd = d[:, :, None] * d[:, None, :]
    ke = (k_axial - k_geo)[:, None, None] * dd + k_geo[:, None, None] * np.eye(3)
    blocks = np.stack([ke, ke, -ke, -ke], axis=1)
    nd = model.n_dof
    k = np.bincount(model._k_index, weights=blocks.ravel(), minlength=nd * nd).reshape(nd, nd)
    k = 0.5 * (k + k.T)  # exact symmetry against summation-order round-off
    k[model.fixed, :] = 0.0
    k[:, model.fixed] = 0.0
    k[model.fixed, model.fixed] = 1.0
    return k


def rod_energy(model: LatticeModel, u, E) -> float:
    """Total stored energy ``sum A L0 mu (lam^2/2 + 1/lam - 3/2)``."""
    _, _, lam = _kinematics(model, u)
    return float(np.sum(model.area * model.rest_length * (E / 3.0) * (0.5 * lam ** 2 + 1.0 / lam - 1.5)))


class _NewtonFailure(Exception):
    pass


def _newton(model, E, phi, q, load, config):
    """Newton on ``phi^T (R(phi q) - load) = 0``; ``phi`` None means the full space."""
    tol = config.newton_tol_abs + config.newton_tol_rel * np.linalg.norm(load)
    iterations = 0
    while True:
        u = q if phi is None else phi @ q
        g = internal_force(model, u, E) - load
        if phi is not None:
            g = phi.T @ g
        if not np.all(np.isfinite(g)):
            raise _NewtonFailure("non-finite residual")
        if np.linalg.norm(g) <= tol:
            return q, iterations
        if iterations >= config.newton_max_iter:
            raise _NewtonFailure("iteration cap reached")
        k = tangent(model, u, E)
        if phi is not None:
            k = phi.T @ k @ phi
        q = q - solve_linear(k, g)
        iterations += 1


# (step index, previous lifted displacement) -> (basis or None, event note or None)
BasisSelector = Callable[[int, np.ndarray], tuple]


def incremental_solve(params: ParameterPoint, config: LatticeConfig, basis_for_step: Optional[BasisSelector] = None,
                      model: Optional[LatticeModel] = None) -> SimulationResult:
    """Load-stepped Newton solve, in the full space or in a (per-step) projected one."""
    if model is None:
        model = build_lattice(params, config)
    E = params.E
    u_prev = np.zeros(model.n_dof)
    snapshots, events = [], []
    total_iters = 0
    for step in range(1, config.steps + 1):
        phi = None
        if basis_for_step is not None:
            phi, note = basis_for_step(step, u_prev)
            if note:
                events.append(note)
        q = u_prev.copy() if phi is None else phi.T @ u_prev
        level, target = (step - 1) / config.steps, step / config.steps
        inc = 1.0 / config.steps
        halvings = 0
        while level < target:
            trial = min(level + inc, target)
            if target - trial < 1e-12 * inc:
                trial = target
            try:
                q_new, its = _newton(model, E, phi, q, trial * model.load, config)
            except (_NewtonFailure, SingularMatrixError, RodCollapseError) as exc:
                halvings += 1
                if halvings > MAX_BISECTIONS:
                    events.append(f"step {step}: Newton failed after {MAX_BISECTIONS} bisections ({exc})")
                    return SimulationResult(snapshots, float("nan"), False, total_iters, params, events)
                inc *= 0.5
                continue
            total_iters += its
            q, level = q_new, trial
        u_prev = q.copy() if phi is None else phi @ q
        snapshots.append(Snapshot.from_displacement(u_prev, step, params))
    qoi = 100.0 * norms(u_prev)[1] / params.l3
    return SimulationResult(snapshots, qoi, True, total_iters, params, events)


def solve_full(params: ParameterPoint, config: LatticeConfig) -> SimulationResult:
    return incremental_solve(params, config)


def qoi_of(result: SimulationResult, params: ParameterPoint) -> float:
    """Maximal displacement in percent of the initial height ``l3``."""
    if not result.converged:
        raise NotConvergedError("QoI requested from a non-converged simulation")
    if not result.snapshots:
        return 0.0
    return 100.0 * norms(result.final_displacement)[1] / params.l3


__all__ = [
    "DEFAULT_LOAD", "LatticeConfig", "LatticeModel", "ParameterPoint", "SimulationResult",
    "Snapshot", "build_lattice", "incremental_solve", "internal_force", "qoi_of", "rod_energy", "solve_full",
    "tangent",
]
