import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from porodyn.errors import BCError, ConfigError
from porodyn.grid import Field, Grid, laplacian_matrix
from porodyn.phi_model import PhiModel
from porodyn.profiles import random_bumps
from porodyn.resolvent import (ResolventProblem, SolverStats, prox_objective, residual_l1,
                               resolvent_contraction_check, solve, solve_cellwise_monotone, solve_newton,
                               solve_prox_hminus1)

SOLVERS = [solve_newton, solve_cellwise_monotone, solve_prox_hminus1]


def l1(a, b):
    return a.grid.cell_volume * np.abs(a.values - b.values).sum()


@pytest.mark.parametrize("solver", SOLVERS)
def test_linear_model_matches_direct_solve(solver):
    g = Grid(1, 16, 1.0)
    rhs = random_bumps(g, np.random.default_rng(0))
    lam, c = 0.05, 2.0
    A = np.eye(16) - lam * c * laplacian_matrix(g).toarray()
    exact = np.linalg.solve(A, rhs.values)
    u = solver(ResolventProblem(PhiModel.linear(c), lam, rhs))
    assert np.allclose(u.values, exact, atol=1e-10)


@pytest.mark.parametrize("bc", ["periodic", "zero_flux"])
def test_biofilm_against_root_finder(bc):
    g = Grid(1, 8, 1.0, bc)
    m = PhiModel.biofilm(1, 1)
    rhs = random_bumps(g, np.random.default_rng(5), amp=(-0.8, 0.8))
    lam = 0.1
    A = laplacian_matrix(g).toarray()
    sol = optimize.least_squares(lambda u: u - lam * A @ m.phi(u) - rhs.values, rhs.values,
                                 bounds=(-0.999, 0.999), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    assert np.abs(sol.fun).max() < 1e-12
    ref = sol.x
    for solver in (solve_newton, solve_cellwise_monotone):
        u = solver(ResolventProblem(m, lam, rhs, tol=1e-13))
        assert np.allclose(u.values, ref, atol=1e-10)


@pytest.mark.parametrize("lam", [0.01, 0.1, 1.0])
def test_solvers_agree_and_converge(lam):
    g = Grid(1, 16, 1.0)
    m = PhiModel.biofilm(1, 1)
    rhs = random_bumps(g, np.random.default_rng(int(lam * 100)))
    p = ResolventProblem(m, lam, rhs)
    sols = []
    for solver in SOLVERS:
        stats = SolverStats()
        u = solver(p, stats=stats)
        assert residual_l1(p, u) <= p.tol * 10
        assert stats.iterations > 0 and stats.method
        sols.append(u)
    for i in range(3):
        for j in range(i + 1, 3):
            assert l1(sols[i], sols[j]) <= 1e-9
    # mass conservation and range
    assert sols[0].values.sum() == pytest.approx(rhs.values.sum(), abs=1e-9)
    assert np.all(np.abs(sols[0].values) < 1 - m.margin)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.01, 0.3, 2.0]))
def test_contraction_and_comparison(seed, lam):
    g = Grid(1, 16, 2.0)
    rng = np.random.default_rng(seed)
    m = PhiModel.biofilm(1, 2)
    a, b = random_bumps(g, rng), random_bumps(g, rng)
    lhs, rhs = resolvent_contraction_check(m, lam, a, b)
    assert lhs <= rhs + 1e-9
    hi = Field(g, np.maximum(a.values, b.values))
    u = solve(ResolventProblem(m, lam, a))
    w = solve(ResolventProblem(m, lam, hi))
    assert np.all(u.values <= w.values + 1e-9)


def test_prox_minimizes_objective():
    g = Grid(1, 16, 1.0)
    m = PhiModel.biofilm(1, 1)
    p = ResolventProblem(m, 0.1, random_bumps(g, np.random.default_rng(2)))
    trace = []
    u = solve_prox_hminus1(p, trace=trace)
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))
    J0 = prox_objective(p, u)
    rng = np.random.default_rng(9)
    for _ in range(5):
        d = rng.normal(size=16)
        d -= d.mean()
        assert prox_objective(p, u.values + 1e-3 * d) >= J0


def test_guards():
    g = Grid(1, 8, 1.0, "zero_flux")
    m = PhiModel.biofilm(1, 1)
    with pytest.raises(ConfigError):
        ResolventProblem(m, 0.0, g.zeros())
    with pytest.raises(BCError):
        solve_prox_hminus1(ResolventProblem(m, 0.1, g.zeros()))


def test_pme_unbounded_interval():
    g = Grid(1, 16, 1.0)
    rhs = Field(g, 3.0 * np.sin(np.pi * g.axis()))
    p = ResolventProblem(PhiModel.pme(2), 0.1, rhs)
    a = solve_newton(p)
    b = solve_cellwise_monotone(p)
    assert l1(a, b) < 1e-9
