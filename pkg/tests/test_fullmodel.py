import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from podhta.errors import NotConvergedError
from podhta.fullmodel import (
    LatticeConfig, LatticeModel, ParameterPoint, SimulationResult, Snapshot, build_lattice, internal_force, qoi_of,
    rod_energy, solve_full, tangent,
)
from podhta.numerics import solve_linear

NOMINAL = ParameterPoint(1.0, 1.0, 1.0, 150.0)


def single_rod(E=90.0):
    params = ParameterPoint(1.0, 1.0, 1.0, E)
    return LatticeModel(
        params, LatticeConfig(), np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), np.array([[0, 1]]),
        np.array([1.0]), np.array([1.0]), 1, np.zeros(6, dtype=bool), np.zeros(6),
    )


def fd_jacobian(f, u, h):
    cols = []
    for k in range(u.size):
        e = np.zeros_like(u)
        e[k] = h
        cols.append((f(u + e) - f(u - e)) / (2 * h))
    return np.column_stack(cols)


def test_counts_n1():
    model = build_lattice(NOMINAL, LatticeConfig(n=1))
    assert model.n_nodes == 8
    assert model.n_axis == 12
    assert model.n_rods - model.n_axis == 4
    assert model.fixed.reshape(-1, 3).all(axis=1).sum() == 4


def test_counts_n2():
    model = build_lattice(NOMINAL, LatticeConfig(n=2))
    assert model.n_nodes == 27
    assert model.n_axis == 3 * 2 * 9 == 54
    assert model.n_rods - model.n_axis == 32


def test_axis_rest_lengths_unit_cube():
    model = build_lattice(NOMINAL, LatticeConfig(n=2))
    np.testing.assert_array_equal(model.rest_length[:model.n_axis], 0.5)


def test_geometry_scales_with_edge_factors():
    model = build_lattice(ParameterPoint(0.95, 1.0, 1.05, 150.0), LatticeConfig(n=2))
    np.testing.assert_allclose(model.nodes.max(axis=0), [0.95, 1.0, 1.05])
    assert model.load.sum() == pytest.approx(LatticeConfig().load_total * 0.95 * 1.0)


def test_zero_displacement_zero_force():
    model = build_lattice(NOMINAL, LatticeConfig(n=2))
    np.testing.assert_array_equal(internal_force(model, np.zeros(model.n_dof), 150.0), 0.0)


def test_single_rod_axial_force():
    model = single_rod()
    u = np.array([0.0, 0, 0, 1.0, 0, 0])
    r = internal_force(model, u, 90.0)
    # mu = 30, lambda = 2: 30 * (2 - 1/4)
    assert r[3] == pytest.approx(52.5, rel=1e-15)
    assert r[0] == pytest.approx(-52.5, rel=1e-15)


def test_single_rod_tangent_at_rest():
    model = single_rod()
    k = tangent(model, np.zeros(6), 90.0)
    d = np.array([1.0, 0, 0])
    ke = 30.0 * 3.0 * np.outer(d, d)
    np.testing.assert_allclose(k[:3, :3], ke, atol=1e-13)
    np.testing.assert_allclose(k[:3, 3:], -ke, atol=1e-13)


def test_force_linear_in_E():
    model = build_lattice(NOMINAL, LatticeConfig(n=2))
    u = np.random.default_rng(0).normal(scale=0.01, size=model.n_dof)
    np.testing.assert_allclose(internal_force(model, u, 3.0 * 150.0), 3.0 * internal_force(model, u, 150.0),
                               rtol=1e-14, atol=1e-14)


def test_tangent_matches_finite_differences():
    model = build_lattice(NOMINAL, LatticeConfig(n=1)).without_supports()
    rng = np.random.default_rng(4)
    u = rng.standard_normal(model.n_dof)
    u *= 0.01 / np.linalg.norm(u)
    k = tangent(model, u, 150.0)
    fd = fd_jacobian(lambda x: internal_force(model, x, 150.0), u, 1e-6)
    assert np.linalg.norm(k - fd) <= 1e-5 * np.linalg.norm(fd)


def test_tangent_exactly_symmetric():
    model = build_lattice(NOMINAL, LatticeConfig(n=2))
    u = np.random.default_rng(1).normal(scale=0.02, size=model.n_dof)
    k = tangent(model, u, 150.0)
    assert np.linalg.norm(k - k.T) == 0.0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(50.0, 300.0))
def test_force_is_energy_gradient(seed, E):
    model = build_lattice(NOMINAL, LatticeConfig(n=1)).without_supports()
    u = np.random.default_rng(seed).normal(scale=0.02, size=model.n_dof)
    grad = fd_jacobian(lambda x: np.array([rod_energy(model, x, E)]), u, 1e-6)[0]
    r = internal_force(model, u, E)
    assert np.abs(grad - r).max() <= 1e-6 * max(1.0, np.abs(r).max())


def test_rigid_translation_invariance():
    model = build_lattice(NOMINAL, LatticeConfig(n=2)).without_supports()
    rng = np.random.default_rng(9)
    u = rng.normal(scale=0.01, size=model.n_dof)
    shift = np.tile(rng.normal(size=3), model.n_nodes)
    np.testing.assert_allclose(internal_force(model, u + shift, 150.0), internal_force(model, u, 150.0), atol=1e-11)


def test_zero_load():
    res = solve_full(NOMINAL, LatticeConfig(load_total=0.0))
    assert res.converged and res.qoi == 0.0
    assert all(np.all(s.displacement == 0.0) for s in res.snapshots)


def test_tiny_load_matches_linear_solve():
    config = LatticeConfig(load_total=-1e-6 * NOMINAL.E)
    res = solve_full(NOMINAL, config)
    model = build_lattice(NOMINAL, config)
    u_lin = solve_linear(tangent(model, np.zeros(model.n_dof), NOMINAL.E), model.load)
    assert np.linalg.norm(res.final_displacement - u_lin) <= 1e-6 * np.linalg.norm(u_lin)


def test_snapshots_monotone_over_random_points():
    rng = np.random.default_rng(21)
    config = LatticeConfig()
    for _ in range(20):
        p = ParameterPoint(*rng.uniform(0.95, 1.05, 3), rng.uniform(100, 200))
        res = solve_full(p, config)
        assert res.converged and len(res.snapshots) == config.steps
        maxes = np.array([s.max_disp for s in res.snapshots])
        assert np.all(np.diff(maxes) >= 0.0)
        for s in res.snapshots:
            assert s.max_disp == np.abs(s.displacement).max()
        assert res.qoi == pytest.approx(100.0 * maxes[-1] / p.l3, rel=1e-15)


def test_nominal_qoi_in_calibration_band():
    res = solve_full(NOMINAL, LatticeConfig())
    assert 15.0 <= res.qoi <= 35.0
    assert res.qoi == pytest.approx(16.0, abs=0.01)


def test_qoi_nonincreasing_in_E():
    qois = [solve_full(ParameterPoint(1.0, 1.0, 1.0, E), LatticeConfig()).qoi for E in np.linspace(100, 200, 5)]
    assert np.all(np.diff(qois) <= 0.0)


def test_deterministic():
    p = ParameterPoint(0.97, 1.02, 1.01, 123.0)
    a, b = solve_full(p, LatticeConfig()), solve_full(p, LatticeConfig())
    assert a.qoi == b.qoi and a.newton_iterations_total == b.newton_iterations_total
    for sa, sb in zip(a.snapshots, b.snapshots):
        assert np.array_equal(sa.displacement, sb.displacement)


def _result_with(u, params):
    return SimulationResult([Snapshot.from_displacement(u, 1, params)], 0.0, True, 0, params)


@pytest.mark.parametrize("umax, l3, expected", [(0.25, 1.0, 25.0), (0.0, 1.0, 0.0), (0.21, 1.05, 20.0)])
def test_qoi_of(umax, l3, expected):
    p = ParameterPoint(1.0, 1.0, l3, 150.0)
    u = np.zeros(12)
    u[5] = -umax
    assert qoi_of(_result_with(u, p), p) == pytest.approx(expected, rel=1e-14)


def test_qoi_of_rejects_unconverged():
    p = NOMINAL
    res = SimulationResult([], float("nan"), False, 0, p)
    with pytest.raises(NotConvergedError):
        qoi_of(res, p)


def test_newton_failure_reported():
    res = solve_full(NOMINAL, LatticeConfig(steps=1, newton_max_iter=1))
    assert not res.converged
    assert np.isnan(res.qoi)
    assert "bisections" in res.events[-1]


@pytest.mark.parametrize("bad", [(1.0, 1.0, 1.0, -5.0), (1.0, 1.0, 1.0, 0.0), (0.4, 1.0, 1.0, 150.0)])
def test_parameter_validation(bad):
    with pytest.raises(ValueError):
        ParameterPoint(*bad)


@pytest.mark.parametrize("field, value", [("n", 0), ("steps", 0), ("newton_tol_rel", 0.0), ("diagonal_weight", 1.5)])
def test_config_validation(field, value):
    with pytest.raises(ValueError):
        dataclasses.replace(LatticeConfig(), **{field: value})
