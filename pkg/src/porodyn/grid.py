"""Cell-centred tensor grids on ``[-L, L)^d``, fields and the discrete operators on them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import BCError, ConfigError, SizeError
from .ioutil import atomic_write

DEFAULT_MEMORY_CAP = 2**24


class BC(str, Enum):
    PERIODIC = "periodic"
    ZERO_FLUX = "zero_flux"

    @classmethod
    def parse(cls, value) -> "BC":
        if isinstance(value, BC):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"periodic": cls.PERIODIC, "zeroflux": cls.ZERO_FLUX, "zero_flux": cls.ZERO_FLUX,
                   "neumann": cls.ZERO_FLUX}
        if key not in aliases:
            raise ConfigError(f"unknown boundary condition {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class Grid:
    d: int
    n: int
    L: float
    bc: BC = BC.PERIODIC
    memory_cap: int = DEFAULT_MEMORY_CAP

    def __post_init__(self):
        object.__setattr__(self, "bc", BC.parse(self.bc))
        if self.d not in (1, 2, 3):
            raise ConfigError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.n < 4 or self.n & (self.n - 1):
            raise ConfigError(f"n must be a power of two >= 4, got {self.n}")
        if not self.L > 0:
            raise ConfigError("box half-width L must be positive")
        if self.n**self.d > self.memory_cap:
            raise SizeError(f"{self.n}^{self.d} cells exceed the memory cap {self.memory_cap}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def volume(self) -> float:
        return (2.0 * self.L) ** self.d

    def axis(self) -> np.ndarray:
        """Cell centres along one axis."""
        return -self.L + self.h * (np.arange(self.n) + 0.5)

    def coords(self) -> tuple[np.ndarray, ...]:
        ax = self.axis()
        return tuple(np.meshgrid(*([ax] * self.d), indexing="ij"))

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coords()))

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.d, self.n * factor, self.L, self.bc, self.memory_cap)

    def field(self, values) -> "Field":
        return Field(self, values)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape))

    def sample(self, fn) -> "Field":
        """Evaluate ``fn(*coords)`` at cell centres."""
        return Field(self, np.broadcast_to(np.asarray(fn(*self.coords()), dtype=float), self.shape))


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, c):
        return self.with_values(self.values * _vals(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


def _vals(x):
    return x.values if isinstance(x, Field) else x


# ---------------------------------------------------------------------------- operators
def laplacian_array(w: np.ndarray, h: float, bc: BC) -> np.ndarray:
    """Five-point (2d+1) Laplacian of a raw array; reflective ghosts for zero flux."""
    d = w.ndim
    out = -2.0 * d * w
    for ax in range(d):
        if bc is BC.PERIODIC:
            out += np.roll(w, 1, axis=ax) + np.roll(w, -1, axis=ax)
        else:
            pad = [(0, 0)] * d
            pad[ax] = (1, 1)
            wp = np.pad(w, pad, mode="edge")
            sl_lo = [slice(None)] * d
            sl_hi = [slice(None)] * d
            sl_lo[ax] = slice(0, -2)
            sl_hi[ax] = slice(2, None)
            out += wp[tuple(sl_lo)] + wp[tuple(sl_hi)]
    return out / (h * h)


def laplacian(w: Field) -> Field:
    g = w.grid
    return Field(g, laplacian_array(w.values, g.h, g.bc))


def laplacian_matrix(grid: Grid) -> sparse.csr_matrix:
    """Sparse matrix of the discrete Laplacian acting on row-major flattened fields."""
    n, h = grid.n, grid.h
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    T = sparse.diags([off, main, off], [-1, 0, 1], format="lil")
    if grid.bc is BC.PERIODIC:
        T[0, n - 1] += 1.0
        T[n - 1, 0] += 1.0
    else:
        T[0, 0] += 1.0
        T[n - 1, n - 1] += 1.0
    T = T.tocsr() / (h * h)
    eye = sparse.identity(n, format="csr")
    A = sparse.csr_matrix((grid.size, grid.size))
    for ax in range(grid.d):
        term = None
        for j in range(grid.d):
            f = T if j == ax else eye
            term = f if term is None else sparse.kron(term, f, format="csr")
        A = A + term
    return A.tocsr()


def neighbor_counts(grid: Grid) -> np.ndarray:
    """Number of distinct stencil neighbours of each cell (2d inside, fewer at zero-flux walls)."""
    if grid.bc is BC.PERIODIC:
        return np.full(grid.shape, 2 * grid.d, dtype=float)
    one = np.full(grid.n, 2.0)
    one[0] = one[-1] = 1.0
    total = np.zeros(grid.shape)
    for ax in range(grid.d):
        shape = [1] * grid.d
        shape[ax] = grid.n
        total = total + one.reshape(shape)
    return total


def gradient_sq(w: np.ndarray, h: float, bc: BC) -> np.ndarray:
    """Cellwise ``|grad_h w|^2`` from the mean of squared one-sided differences."""
    d = w.ndim
    out = np.zeros_like(w)
    for ax in range(d):
        if bc is BC.PERIODIC:
            fwd = np.roll(w, -1, axis=ax) - w
            bwd = w - np.roll(w, 1, axis=ax)
        else:
            pad = [(0, 0)] * d
            pad[ax] = (1, 1)
            wp = np.pad(w, pad, mode="edge")
            sl_c = [slice(1, -1) if i == ax else slice(None) for i in range(d)]
            sl_f = [slice(2, None) if i == ax else slice(None) for i in range(d)]
            sl_b = [slice(0, -2) if i == ax else slice(None) for i in range(d)]
            fwd = wp[tuple(sl_f)] - wp[tuple(sl_c)]
            bwd = wp[tuple(sl_c)] - wp[tuple(sl_b)]
        out += 0.5 * (fwd * fwd + bwd * bwd)
    return out / (h * h)


def dirichlet_energy(w: Field) -> float:
    """``h^d sum |grad_h w|^2``, equal to ``-<Lap_h w, w>`` for both boundary conditions."""
    g = w.grid
    return float(g.cell_volume * np.sum(gradient_sq(w.values, g.h, g.bc)))


def integral(w: Field) -> float:
    return float(w.grid.cell_volume * np.sum(w.values))


def norm_lp(w: Field, p: float = 1.0) -> float:
    if p < 1:
        raise ValueError("p must be >= 1")
    a = np.abs(w.values)
    if np.isinf(p):
        return float(a.max())
    return float((w.grid.cell_volume * np.sum(a**p)) ** (1.0 / p))


def norm_l1_diff(u: Field, w: Field) -> float:
    return float(u.grid.cell_volume * np.sum(np.abs(u.values - w.values)))


def symbol(grid: Grid) -> np.ndarray:
    """Eigenvalues of ``-Lap_h`` on the periodic grid, laid out like ``fftn`` output."""
    k = np.fft.fftfreq(grid.n) * grid.n
    one = (2.0 / grid.h**2) * (1.0 - np.cos(2.0 * np.pi * k / grid.n))
    lam = np.zeros(grid.shape)
    for ax in range(grid.d):
        shape = [1] * grid.d
        shape[ax] = grid.n
        lam = lam + one.reshape(shape)
    return lam


def inverse_laplacian_array(w: np.ndarray, grid: Grid) -> np.ndarray:
    """``(-Lap_h)^{-1}`` of the mean-removed part of ``w``, mean-zero result."""
    if grid.bc is not BC.PERIODIC:
        raise BCError("spectral inverse Laplacian requires periodic boundaries")
    what = np.fft.fftn(w)
    lam = symbol(grid)
    lam.flat[0] = 1.0
    what = what / lam
    what.flat[0] = 0.0
    return np.real(np.fft.ifftn(what))


def hminus1_inner(u: Field, w: Field) -> float:
    g = u.grid
    if g.bc is not BC.PERIODIC:
        raise BCError("H^-1 inner product requires periodic boundaries")
    vu = u.values - u.values.mean()
    vw = w.values - w.values.mean()
    return float(g.cell_volume * np.sum(inverse_laplacian_array(vu, g) * vw))


# ---------------------------------------------------------------------------- snapshots
def save_snapshot(w: Field, path, t: float = 0.0) -> tuple[Path, Path]:
    """Write raw little-endian float64 values and a JSON sidecar ``<path>.json``."""
    path = Path(path)
    g = w.grid
    atomic_write(path, np.ascontiguousarray(w.values, dtype="<f8").tobytes())
    meta = {"d": g.d, "n": g.n, "L": g.L, "bc": g.bc.value, "t": float(t)}
    side = path.with_name(path.name + ".json")
    atomic_write(side, (json.dumps(meta, sort_keys=True) + "\n").encode())
    return path, side


def load_snapshot(path) -> tuple[Field, float]:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    g = Grid(meta["d"], meta["n"], meta["L"], meta["bc"])
    vals = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(g.shape)
    return Field(g, vals), float(meta["t"])
