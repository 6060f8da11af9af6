import math

import numpy as np
import pytest
import sympy as sp

from porodyn.errors import ConfigError
from porodyn.evolution import (SourceSpec, c_t_l1, energy, export_trajectory, is_nonincreasing, solve_cauchy,
                               solve_with_reaction, step_count, trotter_kato_sweep)
from porodyn.grid import Field, Grid, norm_l1_diff, symbol
from porodyn.phi_model import PhiModel
from porodyn.profiles import barenblatt, smooth_bump


def test_barenblatt_formula_solves_pme_symbolically():
    x, t = sp.symbols("x t", positive=True)
    for m_ in (2, 3):
        m = sp.Integer(m_)
        al = sp.Rational(1, 1) / (m - 1 + 2)
        k = al * (m - 1) / (2 * m)
        C = sp.Rational(1, 12)
        u = t**-al * (C - k * x**2 * t ** (-2 * al)) ** (1 / (m - 1))
        residual = sp.diff(u, t) - sp.diff(u**m, x, 2)
        assert sp.simplify(residual) == 0


def test_barenblatt_sampling_and_mass():
    g = Grid(1, 1024, 3.0)
    u = barenblatt(g, 1.0)
    # (C - x^2/12)_+ with C = 1/12 has support [-1, 1] and mass 1/9
    assert u.values.max() == pytest.approx(1 / 12, rel=1e-4)
    assert g.cell_volume * u.values.sum() == pytest.approx(1 / 9, rel=1e-5)
    assert np.all(u.values[np.abs(g.axis()) > 1] == 0)
    g3 = Grid(3, 32, 2.0)
    assert barenblatt(g3, 2.0).values.min() >= 0


def test_heat_mode_matches_implicit_euler_factor():
    g = Grid(1, 32, 1.0)
    mode = np.cos(np.pi * g.axis())
    u0 = Field(g, 0.5 * mode)
    tau, T = 1 / 64, 0.25
    tr = solve_cauchy(PhiModel.linear(1.0), u0, None, T, tau)
    lam = (2 / g.h**2) * (1 - math.cos(2 * math.pi / g.n))
    assert np.isclose(symbol(g), lam).any()
    exact = 0.5 * mode / (1 + tau * lam) ** tr.steps
    assert np.allclose(tr.final.values, exact, atol=1e-10)


def test_mass_and_range_biofilm():
    g = Grid(1, 64, 2.0)
    m = PhiModel.biofilm(1, 1)
    u0 = smooth_bump(g, 0.9, 0.8)
    tr = solve_cauchy(m, u0, None, 0.5, 1 / 128)
    mass = g.cell_volume * tr.states.sum(axis=tuple(range(1, tr.states.ndim)))
    assert np.allclose(mass, mass[0], atol=1e-9)
    assert np.all(np.abs(tr.states) < 1 - m.margin)
    E = [energy(m, u, g.cell_volume) for u in tr.states]
    assert all(b <= a + 1e-12 for a, b in zip(E, E[1:]))
    assert tr.steps == step_count(0.5, 1 / 128) == 64


def test_barenblatt_convergence_order():
    errs = []
    for n in (64, 128):
        g = Grid(1, n, 3.0)
        tr = solve_cauchy(PhiModel.pme(2), barenblatt(g, 1.0), None, 1.0, g.h / 2, t0=1.0)
        errs.append(norm_l1_diff(tr.final, barenblatt(g, 2.0)))
    assert math.log2(errs[0] / errs[1]) >= 0.5


def test_logistic_reaction_matches_ode():
    g = Grid(1, 8, 1.0)
    src = SourceSpec.reaction(lambda z: z * (1 - z), 2.0)
    tr = solve_with_reaction(PhiModel.biofilm(1, 1), Field(g, np.full(8, 0.1)), src, 1.0, 1 / 256)
    exact = 0.1 * np.exp(tr.times) / (0.9 + 0.1 * np.exp(tr.times))
    assert np.abs(tr.states[:, 0] - exact).max() < 1e-6
    assert max(tr.picard_ratios) <= 0.55


def test_reaction_validation():
    with pytest.raises(ConfigError):
        SourceSpec.reaction(lambda z: z + 1, 1.0)
    with pytest.raises(ConfigError):
        SourceSpec.reaction(lambda z: 3 * z, 1.0)


def test_constant_forcing_adds_mass():
    g = Grid(1, 32, 1.0)
    f = Field(g, np.ones(32))
    tr = solve_cauchy(PhiModel.pme(2), g.zeros(), SourceSpec.constant(f), 0.5, 1 / 32)
    assert g.cell_volume * tr.final.values.sum() == pytest.approx(0.5 * 2.0, rel=1e-9)


def test_trotter_kato_small():
    g = Grid(1, 32, 2.0)
    errs = trotter_kato_sweep(PhiModel.biofilm(1, 1), [3, 5, 7], smooth_bump(g, 0.6, 1.0), None, 0.25, 1 / 64)
    assert [k for k, _ in errs] == [3, 5, 7]
    assert is_nonincreasing(errs, 0.1)
    assert errs[-1][1] < errs[0][1] / 4


def test_is_nonincreasing():
    assert is_nonincreasing([1.0, 1.05, 0.5])
    assert not is_nonincreasing([1.0, 1.2])
    assert is_nonincreasing([1e-9, 2e-9], floor=1e-8)


def test_ctl1_and_export(tmp_path):
    g = Grid(1, 16, 1.0)
    tr = solve_cauchy(PhiModel.linear(), smooth_bump(g, 0.5, 0.5), None, 0.1, 1 / 40)
    assert c_t_l1(tr, tr) == 0.0
    export_trajectory(tr, tmp_path, stride=3)
    files = sorted(p.name for p in tmp_path.glob("state_*.bin"))
    assert files[0] == "state_000000.bin" and files[-1] == f"state_{tr.steps:06d}.bin"
    lines = (tmp_path / "manifest.csv").read_text().splitlines()
    assert lines[0].startswith("t,") and len(lines) == tr.steps + 2
