import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from porodyn.errors import BCError, ConfigError, SizeError
from porodyn.grid import (BC, Field, Grid, dirichlet_energy, hminus1_inner, integral, inverse_laplacian_array,
                          laplacian, laplacian_array, laplacian_matrix, load_snapshot, norm_lp, save_snapshot,
                          symbol)


def dense_laplacian_1d(n, h, periodic):
    """Loop-built tridiagonal reference."""
    A = np.zeros((n, n))
    for i in range(n):
        A[i, i] = -2
        for j in (i - 1, i + 1):
            if 0 <= j < n:
                A[i, j] += 1
            elif periodic:
                A[i, j % n] += 1
            else:
                A[i, i] += 1
    return A / h**2


def test_grid_validation():
    with pytest.raises(ConfigError):
        Grid(1, 100, 1.0)
    with pytest.raises(ConfigError):
        Grid(4, 8, 1.0)
    with pytest.raises(SizeError):
        Grid(3, 512, 1.0)
    g = Grid(2, 16, 2.0, "zero_flux")
    assert g.bc is BC.ZERO_FLUX and g.h == 0.25 and g.size == 256


@pytest.mark.parametrize("bc", ["periodic", "zero_flux"])
def test_laplacian_matches_dense(bc):
    g = Grid(1, 16, 1.0, bc)
    A = dense_laplacian_1d(16, g.h, bc == "periodic")
    w = np.random.default_rng(0).normal(size=16)
    assert np.allclose(laplacian_array(w, g.h, g.bc), A @ w, atol=1e-10)
    assert np.allclose(laplacian_matrix(g).toarray(), A)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("bc", ["periodic", "zero_flux"])
def test_matrix_matches_stencil(d, bc):
    g = Grid(d, 8, 1.5, bc)
    w = np.random.default_rng(d).normal(size=g.shape)
    assert np.allclose((laplacian_matrix(g) @ w.ravel()).reshape(g.shape), laplacian_array(w, g.h, g.bc))


@pytest.mark.parametrize("d", [1, 2])
def test_symbol_is_spectrum(d):
    g = Grid(d, 8, 1.0)
    lam = np.sort(np.linalg.eigvalsh(-laplacian_matrix(g).toarray()))
    assert np.allclose(lam, np.sort(symbol(g).ravel()), atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(arrays(float, 32, elements=st.floats(-5, 5)), st.sampled_from(["periodic", "zero_flux"]))
def test_summation_by_parts(w, bc):
    g = Grid(1, 32, 2.0, bc)
    f = Field(g, w)
    lap = laplacian(f)
    assert integral(lap) == pytest.approx(0.0, abs=1e-9 * (1 + np.abs(w).max()) / g.h**2)
    lhs = -g.cell_volume * np.sum(lap.values * w)
    assert dirichlet_energy(f) == pytest.approx(lhs, rel=1e-10, abs=1e-8)


def test_inverse_laplacian_and_hminus1():
    g = Grid(2, 16, 1.0)
    rng = np.random.default_rng(3)
    w = rng.normal(size=g.shape)
    w -= w.mean()
    v = inverse_laplacian_array(w, g)
    assert np.allclose(-laplacian_array(v, g.h, g.bc), w, atol=1e-10)
    u = Field(g, rng.normal(size=g.shape))
    z = Field(g, rng.normal(size=g.shape))
    assert hminus1_inner(u, z) == pytest.approx(hminus1_inner(z, u), rel=1e-12)
    assert hminus1_inner(u, u) > 0
    with pytest.raises(BCError):
        hminus1_inner(Field(Grid(1, 8, 1.0, "zero_flux"), np.ones(8)), Field(Grid(1, 8, 1.0, "zero_flux"), np.ones(8)))


def test_norms():
    g = Grid(1, 8, 2.0)
    f = Field(g, np.array([1, -1, 2, 0, 0, 0, 0, 0.0]))
    assert norm_lp(f, 1) == pytest.approx(0.5 * 4)
    assert norm_lp(f, 2) == pytest.approx(np.sqrt(0.5 * 6))
    assert norm_lp(f, np.inf) == 2


def test_field_guards():
    g = Grid(1, 8, 1.0)
    with pytest.raises(Exception):
        Field(g, np.full(8, np.nan))
    f = Field(g, np.zeros(8))
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_snapshot_roundtrip(tmp_path):
    g = Grid(2, 8, 3.0, "zero_flux")
    f = Field(g, np.random.default_rng(1).normal(size=g.shape))
    path, side = save_snapshot(f, tmp_path / "u.bin", t=0.25)
    assert side.exists()
    back, t = load_snapshot(path)
    assert t == 0.25 and back.grid == g
    assert np.array_equal(back.values, f.values)
