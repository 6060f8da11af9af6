"""Fractional Sobolev and Besov measurements of fields and trajectories."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, SizeError
from .evolution import Trajectory
from .grid import Field, Grid
from .ioutil import atomic_write, write_csv

SEMINORM_CELL_CAP = 2**13
STABLE_RATIO = 1.25
GROWING_RATIO = 2.0


def _offsets(grid: Grid):
    """Nonzero periodic offsets with their min-image lengths."""
    n, h = grid.n, grid.h
    rng = range(n)
    for off in itertools.product(rng, repeat=grid.d):
        if not any(off):
            continue
        dist = h * math.sqrt(sum(min(o, n - o) ** 2 for o in off))
        yield off, dist


def slobodetskii_seminorm(w: Field, sigma: float, p: float = 2.0, power: bool = False) -> float:
    """Gagliardo seminorm ``(h^2d sum_{i != j} |w_i - w_j|^p / dist^{sigma p + d})^{1/p}``.

    Distances are periodic minimum-image distances between cell centres.  With
    ``power=True`` the ``p``-th power is returned.
    """
    grid = w.grid
    if grid.size > SEMINORM_CELL_CAP:
        raise SizeError(f"double sum over {grid.size} cells exceeds the cap {SEMINORM_CELL_CAP}")
    if not sigma > 0 or not p >= 1:
        raise ConfigError("need sigma > 0 and p >= 1")
    v = w.values
    expo = sigma * p + grid.d
    total = 0.0
    if grid.d == 1:
        n = grid.n
        for o in range(1, n):
            dist = grid.h * min(o, n - o)
            total += np.sum(np.abs(v - np.roll(v, -o)) ** p) / dist**expo
    else:
        for off, dist in _offsets(grid):
            total += np.sum(np.abs(v - np.roll(v, [-o for o in off], axis=tuple(range(grid.d)))) ** p) / dist**expo
    total *= grid.cell_volume**2
    return float(total if power else total ** (1.0 / p))


def sobolev_norm(w: Field, sigma: float, p: float = 2.0) -> float:
    """``|w|_{L^p} + [w]_{sigma, p}``."""
    lp = float((w.grid.cell_volume * np.sum(np.abs(w.values) ** p)) ** (1.0 / p))
    return lp + slobodetskii_seminorm(w, sigma, p)


def spacetime_norm(traj: Trajectory, sigma_t: float, sigma_x: float, p: float = 2.0,
                   time_stride: int = 1) -> float:
    """Bochner-Slobodetskii norm of a trajectory.

    ``(sum_n tau |u_n|^p + sum_{n != m} tau^2 |u_n - u_m|^p / |t_n - t_m|^{1 + sigma_t p})^{1/p}``
    over the levels ``n = 1..N`` (optionally every ``time_stride``-th), with
    ``|.| = |.|_{L^p} + [.]_{sigma_x, p}``.  ``sigma_t = 0`` drops the double sum.
    """
    if not 0 <= sigma_t < 1:
        raise ConfigError("sigma_t must lie in [0, 1)")
    grid = traj.grid
    idx = np.arange(1, len(traj), max(1, time_stride))
    dt = traj.tau * max(1, time_stride)
    norms = [sobolev_norm(traj.state(i), sigma_x, p) for i in idx]
    total = dt * float(np.sum(np.power(norms, p)))
    if sigma_t > 0:
        for a, i in enumerate(idx):
            for j in idx[a + 1:]:
                diff = Field(grid, traj.states[i] - traj.states[j])
                nd = sobolev_norm(diff, sigma_x, p)
                total += 2.0 * dt * dt * nd**p / abs(traj.times[i] - traj.times[j]) ** (1.0 + sigma_t * p)
    return float(total ** (1.0 / p))


# ---------------------------------------------------------------------------- Littlewood-Paley
def cutoff(xi) -> np.ndarray:
    """Radial generator: 1 for ``|xi| <= 1``, 0 for ``|xi| >= 3/2``, quintic smoothstep between."""
    r = np.abs(np.asarray(xi, dtype=float))
    t = np.clip((1.5 - r) / 0.5, 0.0, 1.0)
    return t**3 * (t * (6.0 * t - 15.0) + 10.0)


def frequencies(grid: Grid) -> np.ndarray:
    """``|xi|`` of every discrete Fourier mode, ``xi = pi k / L`` per axis."""
    k = np.fft.fftfreq(grid.n) * grid.n
    one = (np.pi * k / grid.L) ** 2
    out = np.zeros(grid.shape)
    for ax in range(grid.d):
        shape = [1] * grid.d
        shape[ax] = grid.n
        out = out + one.reshape(shape)
    return np.sqrt(out)


def block_multipliers(grid: Grid) -> list[np.ndarray]:
    """Symbols of blocks ``j = 0..J``, ``J = log2(n) - 2``; the last block takes all higher modes.

    Block 0 is ``cutoff(xi)`` and block ``j`` is ``cutoff(2^-j xi) - cutoff(2^(1-j) xi)``.
    """
    if grid.n & (grid.n - 1):
        raise SizeError("n must be a power of two")
    J = int(math.log2(grid.n)) - 2
    xi = frequencies(grid)
    mult = [cutoff(xi)]
    for j in range(1, J):
        mult.append(cutoff(xi / 2.0**j) - cutoff(xi / 2.0 ** (j - 1)))
    mult.append(1.0 - cutoff(xi / 2.0 ** (J - 1)))
    return mult


def besov_block_norms(w: Field, s: float, p: float = 2.0) -> list[tuple[int, float]]:
    """``[(j, 2^{s j} |Delta_j w|_{L^p})]`` for the dyadic blocks of :func:`block_multipliers`."""
    grid = w.grid
    what = np.fft.fftn(w.values)
    out = []
    for j, m in enumerate(block_multipliers(grid)):
        block = np.real(np.fft.ifftn(what * m))
        lp = float((grid.cell_volume * np.sum(np.abs(block) ** p)) ** (1.0 / p))
        out.append((j, 2.0 ** (s * j) * lp))
    return out


def besov_norm(w: Field, s: float, p: float = 2.0, q: float = 2.0) -> float:
    vals = np.array([v for _, v in besov_block_norms(w, s, p)])
    return float(vals.max() if math.isinf(q) else np.sum(vals**q) ** (1.0 / q))


# ---------------------------------------------------------------------------- exponents
def kappa_biofilm(b: float, p: float) -> tuple[float, float]:
    """Critical exponents for ``D(r) ~ |r|^b`` near 0: ``((b+1-p)/(p b), 2(p-1)/(p b))``."""
    return (b + 1.0 - p) / (p * b), 2.0 * (p - 1.0) / (p * b)


def kappa_pme(m: float, p: float) -> tuple[float, float]:
    """Critical exponents for ``D(r) >= c|r|^(m-1)``: ``((m-p)/(p(m-1)), 2(p-1)/(p(m-1)))``."""
    return (m - p) / (p * (m - 1.0)), 2.0 * (p - 1.0) / (p * (m - 1.0))


def kappa_for_model(model, p: float) -> tuple[float, float]:
    if model.kind == "biofilm":
        return kappa_biofilm(model.b, p)
    if model.kind == "pme":
        return kappa_pme(model.m, p)
    raise ConfigError("critical exponents are defined for biofilm and PME models only")


def verdict(ratios) -> str:
    ratios = list(ratios)
    if ratios and all(r <= STABLE_RATIO for r in ratios):
        return "stable"
    if ratios and all(r >= GROWING_RATIO for r in ratios):
        return "growing"
    return "inconclusive"


def threshold_trend(values, p: float) -> str:
    """``bounded`` if the increments of ``value^p`` across refinements shrink, else ``unbounded``.

    A seminorm whose ``p``-th power converges like ``A - B h^e`` has increments
    shrinking by ``2^-e`` per refinement, while one blowing up like ``B h^-e``
    has increments growing by ``2^e``.
    """
    vp = np.asarray(values, dtype=float) ** p
    inc = np.diff(vp)
    if inc.size < 2:
        raise ValueError("need at least three refinement levels")
    return "bounded" if np.all(np.abs(inc[1:]) < np.abs(inc[:-1])) else "unbounded"


def growth_exponent(values) -> float:
    """Least-squares slope of ``log2(value)`` against refinement level."""
    v = np.log2(np.asarray(values, dtype=float))
    return float(np.polyfit(np.arange(v.size), v, 1)[0])


@dataclass
class RegularityReport:
    p: float
    sigma_t: list
    sigma_x: list
    levels: list
    values: dict = field(default_factory=dict)
    ratios: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    kappa_t: float = math.nan
    kappa_x: float = math.nan
    assumptions: list = field(default_factory=list)

    def rows(self):
        for (st, sx), vals in sorted(self.values.items()):
            for lev, v in zip(self.levels, vals):
                yield (lev, st, sx, self.p, v, self.verdicts[(st, sx)])

    def below_kappa_consistent(self) -> bool:
        """Every pair strictly below both critical exponents is not marked as growing."""
        return all(self.verdicts[(st, sx)] != "growing" for st, sx in self.values
                   if (st == 0 or st < self.kappa_t) and sx < self.kappa_x)

    def summary(self) -> dict:
        return {
            "p": self.p, "kappa_t": self.kappa_t, "kappa_x": self.kappa_x, "levels": self.levels,
            "verdicts": {f"{st:g},{sx:g}": v for (st, sx), v in sorted(self.verdicts.items())},
            "ratios": {f"{st:g},{sx:g}": r for (st, sx), r in sorted(self.ratios.items())},
            "below_kappa_consistent": self.below_kappa_consistent(),
            "assumptions": self.assumptions,
        }

    def export(self, outdir) -> Path:
        outdir = Path(outdir)
        write_csv(outdir / "regularity.csv", ("level", "sigma_t", "sigma_x", "p", "value", "verdict"), self.rows())
        atomic_write(outdir / "regularity.json", json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return outdir / "regularity.csv"


def exponent_scan(runs, p: float, sigma_t, sigma_x, time_stride: int = 1) -> RegularityReport:
    """Space-time norms of the same problem at successive refinements and their trend verdicts."""
    runs = list(runs)
    if len(runs) < 2:
        raise ConfigError("exponent scan needs at least two refinement levels")
    model = runs[0].model
    kt, kx = kappa_for_model(model, p)
    rep = RegularityReport(p, list(sigma_t), list(sigma_x), list(range(len(runs))), kappa_t=kt, kappa_x=kx)
    if model.kind == "biofilm" and not 2.0 <= p <= model.b + 1.0:
        rep.assumptions.append(f"p={p} outside [2, b+1]")
    if model.kind == "pme" and model.m < 2.0:
        rep.assumptions.append("fractional Laplacian integrability of phi(u) assumed, not certified, for m < 2")
    for st in rep.sigma_t:
        for sx in rep.sigma_x:
            vals = [spacetime_norm(r, st, sx, p, time_stride) for r in runs]
            ratios = [b / a for a, b in zip(vals, vals[1:])]
            rep.values[(st, sx)] = vals
            rep.ratios[(st, sx)] = ratios
            rep.verdicts[(st, sx)] = verdict(ratios)
    return rep
