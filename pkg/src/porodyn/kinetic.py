"""Kinetic function, velocity averages, defect measure and the kinetic-equation residual.

For a state ``u`` the kinetic function is ``chi(v) = +1`` on ``0 < v < u``,
``-1`` on ``u < v < 0`` and ``0`` otherwise.  Integrals against ``chi`` in the
velocity variable reduce to integrals from 0 to ``u`` and are computed cell by
cell without binning; bins are only used to report the defect measure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError, ModelError, RangeError, SupportError
from .evolution import Trajectory
from .grid import BC, Field, Grid, laplacian_array
from .ioutil import atomic_write, write_csv

_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


def chi_value(u_val: float, v: float) -> int:
    if 0.0 < v < u_val:
        return 1
    if u_val < v < 0.0:
        return -1
    return 0


def chi_array(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``chi(u_i, v_j)`` with the velocity axis last."""
    u = np.asarray(u, dtype=float)[..., None]
    v = np.asarray(v, dtype=float)
    return ((0.0 < v) & (v < u)).astype(np.int8) - ((u < v) & (v < 0.0)).astype(np.int8)


@dataclass(frozen=True)
class VBins:
    """Uniform velocity bins; 0 is always an edge so no bin straddles the sign change."""

    edges: np.ndarray

    @classmethod
    def covering(cls, J, B: int = 64) -> "VBins":
        j0, j1 = float(J[0]), float(J[1])
        if not j0 < j1:
            raise ConfigError("velocity interval must have positive length")
        w = (j1 - j0) / B
        k0 = math.floor(j0 / w + 1e-12)
        k1 = math.ceil(j1 / w - 1e-12)
        return cls(w * np.arange(k0, k1 + 1, dtype=float))

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def count(self) -> int:
        return self.edges.size - 1

    def index(self, v) -> np.ndarray:
        return np.clip(np.searchsorted(self.edges, v, side="right") - 1, 0, self.count - 1)


def _gl_integral(fn, a, b):
    """``int_a^b fn`` per element with a 48-point Gauss-Legendre rule."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    v = mid[..., None] + half[..., None] * _GL_X
    return half * (fn(v) @ _GL_W)


def velocity_average(u: Field, Hprime: Callable, J=None, B: int = 64) -> Field:
    """``int H'(v) chi(v; u) dv`` per cell: full bins between 0 and ``u`` plus the partial bin.

    Each bin integral uses Gauss-Legendre quadrature; the partial bin ends
    exactly at ``u``.  Raises :class:`RangeError` if ``u`` leaves ``J``.
    """
    vals = u.values
    if J is None:
        span = float(max(abs(vals.min()), abs(vals.max()), 1e-300))
        J = (-span, span)
    if vals.min() < J[0] or vals.max() > J[1]:
        raise RangeError(f"field range [{vals.min()}, {vals.max()}] leaves J={tuple(J)}")
    bins = VBins.covering(J, B)
    e = bins.edges
    per_bin = _gl_integral(Hprime, e[:-1], e[1:])
    # cumulative integral from 0 to every edge
    i0 = int(np.flatnonzero(np.isclose(e, 0.0, atol=1e-14 * bins.width))[0])
    e = e.copy()
    e[i0] = 0.0
    cum = np.zeros(e.size)
    cum[i0 + 1:] = np.cumsum(per_bin[i0:])
    cum[:i0] = -np.cumsum(per_bin[:i0][::-1])[::-1]
    # nearest edge towards zero, then the exact remainder up to u
    k = np.searchsorted(e, vals, side="right") - 1
    k = np.where(vals < 0, np.minimum(k + 1, e.size - 1), k)
    k = np.where(vals == 0, i0, np.clip(k, 0, e.size - 1))
    base = e[k]
    out = cum[k] + _gl_integral(Hprime, base, vals)
    return Field(u.grid, out)


def chi_distance(u: Field, w: Field) -> float:
    """``int int |chi_u - chi_w| dv dx``; per cell the velocity integral is exact."""
    a, b = u.values, w.values
    per_cell = np.abs(np.maximum(a, 0.0) - np.maximum(b, 0.0)) + np.abs(np.minimum(a, 0.0) - np.minimum(b, 0.0))
    return float(u.grid.cell_volume * np.sum(per_cell))


def central_gradient_sq(u: np.ndarray, h: float, bc: BC) -> np.ndarray:
    out = np.zeros_like(u)
    for ax in range(u.ndim):
        if bc is BC.PERIODIC:
            diff = np.roll(u, -1, axis=ax) - np.roll(u, 1, axis=ax)
        else:
            pad = [(0, 0)] * u.ndim
            pad[ax] = (1, 1)
            up = np.pad(u, pad, mode="edge")
            hi = [slice(2, None) if i == ax else slice(None) for i in range(u.ndim)]
            lo = [slice(0, -2) if i == ax else slice(None) for i in range(u.ndim)]
            diff = up[tuple(hi)] - up[tuple(lo)]
        out += diff * diff
    return out / (4.0 * h * h)


@dataclass(eq=False)
class KineticSample:
    """Binned kinetic data of a trajectory.

    ``density[n]`` is ``D(u)|grad u|^2`` at time level ``n + 1`` per cell; the
    whole cell mass ``tau h^d density`` sits in the bin containing ``u``.
    """

    bins: VBins
    times: np.ndarray
    states: np.ndarray
    density: np.ndarray
    bin_index: np.ndarray
    tau: float
    cell_volume: float
    J: tuple = field(default=(0.0, 0.0))

    @property
    def centers(self) -> np.ndarray:
        return self.bins.centers

    def chi(self, n: int) -> np.ndarray:
        """``chi`` at time level ``n`` evaluated at the bin centres, velocity axis last."""
        return chi_array(self.states[n], self.bins.centers)

    def bin_mass_by_step(self) -> np.ndarray:
        out = np.zeros((self.density.shape[0], self.bins.count))
        flat_d = self.density.reshape(self.density.shape[0], -1)
        flat_i = self.bin_index.reshape(self.density.shape[0], -1)
        for n in range(out.shape[0]):
            out[n] = np.bincount(flat_i[n], weights=flat_d[n], minlength=self.bins.count)
        return out * self.tau * self.cell_volume

    def bin_mass(self) -> np.ndarray:
        return self.bin_mass_by_step().sum(axis=0)

    @property
    def total_mass(self) -> float:
        return float(self.tau * self.cell_volume * self.density.sum())

    def linf_density(self) -> np.ndarray:
        """Per-bin density of the velocity marginal (bin mass over bin width)."""
        return self.bin_mass() / self.bins.width

    def cell_density(self, n: int) -> np.ndarray:
        """Dense ``(cells..., B)`` defect density at time level ``n + 1`` per unit velocity."""
        out = np.zeros(self.density.shape[1:] + (self.bins.count,))
        np.put_along_axis(out, self.bin_index[n][..., None], self.density[n][..., None] / self.bins.width, -1)
        return out


def defect_measure(traj: Trajectory, J=None, B: int = 64) -> KineticSample:
    """Defect measure ``D(u)|grad_h u|^2 delta_{v=u}`` of a run with a smooth model."""
    model = traj.model
    if not model.smooth:
        raise ModelError("defect measure needs a trajectory computed with a smooth approximation")
    grid = traj.grid
    u = traj.states[1:]
    if J is None:
        lo, hi = float(traj.states.min()), float(traj.states.max())
        pad = 0.05 * max(hi - lo, 1e-3)
        J = (max(lo - pad, model.lo), min(hi + pad, model.hi))
    bins = VBins.covering(J, B)
    dens = np.empty_like(u)
    for n in range(u.shape[0]):
        dens[n] = model.D(u[n]) * central_gradient_sq(u[n], grid.h, grid.bc)
    return KineticSample(bins, traj.times, traj.states, dens, bins.index(u), traj.tau,
                         grid.cell_volume, (float(J[0]), float(J[1])))


# ---------------------------------------------------------------------------- residual
def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    out[m] = np.exp(-1.0 / (1.0 - s[m] ** 2))
    return out


def _bump_prime(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    q = 1.0 - s[m] ** 2
    out[m] = np.exp(-1.0 / q) * (-2.0 * s[m] / q**2)
    return out


@dataclass(frozen=True)
class TensorTest:
    """Separable test function ``psi(t) phi(x) zeta(v)`` made of scaled bumps."""

    t_center: float
    t_radius: float
    x_center: tuple
    x_radius: float
    v_center: float
    v_radius: float

    def psi(self, t):
        return _bump((np.asarray(t) - self.t_center) / self.t_radius)

    def phi(self, grid: Grid) -> np.ndarray:
        out = np.ones(grid.shape)
        for c, x in zip(self.x_center, grid.coords()):
            out = out * _bump((x - c) / self.x_radius)
        return out

    def zeta(self, v):
        return _bump((v - self.v_center) / self.v_radius)

    def zeta_prime(self, v):
        return _bump_prime((v - self.v_center) / self.v_radius) / self.v_radius

    def check_support(self, T0: float, T1: float, grid: Grid, J):
        if self.t_center - self.t_radius <= T0 or self.t_center + self.t_radius >= T1:
            raise SupportError("time factor must be supported inside (t0, T)")
        for c in self.x_center:
            if c - self.x_radius <= -grid.L or c + self.x_radius >= grid.L:
                raise SupportError("space factor must be supported inside the box")
        if self.v_center - self.v_radius <= J[0] or self.v_center + self.v_radius >= J[1]:
            raise SupportError("velocity factor must be supported inside J")


def default_basket(T0: float, T1: float, grid: Grid, J) -> list[TensorTest]:
    """Twelve tensor tests: 2 time windows x 3 space windows x 2 velocity windows."""
    span = T1 - T0
    times = [(T0 + 0.35 * span, 0.3 * span), (T0 + 0.6 * span, 0.35 * span)]
    L = grid.L
    spaces = [((0.0,) * grid.d, 0.6 * L), ((0.15 * L,) * grid.d, 0.4 * L), ((-0.2 * L,) * grid.d, 0.5 * L)]
    j0, j1 = J
    w = j1 - j0
    vels = [(j0 + 0.4 * w, 0.35 * w), (j0 + 0.65 * w, 0.3 * w)]
    return [TensorTest(tc, tr, xc, xr, vc, vr) for tc, tr in times for xc, xr in spaces for vc, vr in vels]


def _clipped_primitive(fn, u, lo, hi):
    """``int_0^u fn`` for ``fn`` supported in ``[lo, hi]``."""
    a = np.clip(np.minimum(u, 0.0), lo, hi)
    b = np.clip(np.maximum(u, 0.0), lo, hi)
    sign = np.where(u >= 0, 1.0, -1.0)
    return sign * _gl_integral(fn, a, b)


def kinetic_residual(traj: Trajectory, sample: KineticSample, tests, include_defect: bool = True,
                     J=None) -> list[float]:
    """Pairings of ``d_t chi - phi'(v) Lap chi - d_v n - delta_{v=u} f`` with each test.

    Time derivatives fall on ``psi`` (differences), the Laplacian on ``phi``
    (discrete Laplacian), the velocity derivative on ``zeta`` and the
    reaction is paired at ``v = u``.  The defect term uses the exact velocity
    ``u`` of each point mass.
    """
    grid, model = traj.grid, traj.model
    J = sample.J if J is None else J
    vol = grid.cell_volume
    tau = traj.tau
    t = traj.times
    out = []
    for test in tests:
        test.check_support(t[0], t[-1], grid, J)
        vlo, vhi = test.v_center - test.v_radius, test.v_center + test.v_radius
        ph = test.phi(grid)
        lap_ph = laplacian_array(ph, grid.h, grid.bc)
        psi = test.psi(t)
        dpsi = np.diff(psi)
        active = np.flatnonzero((psi[:-1] != 0) | (psi[1:] != 0))
        total = 0.0
        for n in active:
            un = traj.states[n]
            u1 = traj.states[n + 1]
            S_n = _clipped_primitive(test.zeta, un, vlo, vhi)
            G_1 = _clipped_primitive(lambda v: model.D(v) * test.zeta(v), u1, vlo, vhi)
            zeta_1 = test.zeta(u1)
            time_term = -dpsi[n] * vol * np.sum(ph * S_n)
            diff_term = -tau * psi[n + 1] * vol * np.sum(G_1 * lap_ph)
            defect = tau * psi[n + 1] * vol * np.sum(ph * test.zeta_prime(u1) * sample.density[n]) \
                if include_defect else 0.0
            react = -tau * psi[n + 1] * vol * np.sum(ph * zeta_1 * traj.forcing_at(n))
            total += time_term + diff_term + defect + react
        out.append(float(total))
    return out


def residual_magnitude(residuals) -> float:
    return float(np.sqrt(np.sum(np.square(residuals))))


# ---------------------------------------------------------------------------- export
def export_sample(sample: KineticSample, outdir) -> Path:
    outdir = Path(outdir)
    masses = sample.bin_mass_by_step()
    rows = [(n + 1, b, masses[n, b]) for n in range(masses.shape[0]) for b in range(masses.shape[1])]
    write_csv(outdir / "kinetic_sample.csv", ("t_index", "v_bin", "mass"), rows)
    header = {"J": list(sample.J), "bins": sample.bins.count, "bin_width": sample.bins.width,
              "edges": [float(e) for e in sample.bins.edges], "tau": sample.tau,
              "total_mass": sample.total_mass, "linf_density_max": float(sample.linf_density().max())}
    atomic_write(outdir / "kinetic_sample.json", json.dumps(header, indent=2, sort_keys=True) + "\n")
    return outdir / "kinetic_sample.csv"


def export_residuals(residuals, h: float, tau: float, path) -> Path:
    return write_csv(path, ("test_id", "value", "h", "tau"), [(i, r, h, tau) for i, r in enumerate(residuals)])
