"""Implicit Euler time stepping, Lipschitz reactions by Picard iteration and approximation sweeps."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError, PicardDivergence
from .grid import Field, Grid, gradient_sq, save_snapshot
from .ioutil import write_csv, worker_count
from .phi_model import PhiModel, build_smooth_approx
from .resolvent import DEFAULT_TOL, ResolventProblem, SolverStats, solve

log = logging.getLogger(__name__)

NONE = "none"
TIMESPACE = "timespace"
REACTION = "reaction"


@dataclass(frozen=True)
class SourceSpec:
    """Right-hand side ``f``: absent, a space-time function, or a Lipschitz reaction ``f(u)``."""

    kind: str = NONE
    fn: Callable | None = None
    L: float = 0.0
    label: str = ""

    @classmethod
    def none(cls) -> "SourceSpec":
        return cls(NONE, None, 0.0, "none")

    @classmethod
    def timespace(cls, fn: Callable, label: str = "timespace") -> "SourceSpec":
        """``fn(t, *coords)`` returns the forcing sampled on the grid."""
        return cls(TIMESPACE, fn, 0.0, label)

    @classmethod
    def constant(cls, f: Field, label: str = "constant") -> "SourceSpec":
        vals = f.values.copy()
        return cls(TIMESPACE, lambda t, *x: vals, 0.0, label)

    @classmethod
    def reaction(cls, fn: Callable, L: float, interval=(-1.0, 1.0), label: str = "reaction",
                 n_samples: int = 2001) -> "SourceSpec":
        """Reaction ``f(u)`` with ``f(0) = 0`` and ``|f(z)| <= L |z|`` checked on ``interval``."""
        if not L > 0:
            raise ConfigError("reaction Lipschitz constant must be positive")
        z = np.linspace(interval[0], interval[1], n_samples)
        fz = np.asarray(fn(z), dtype=float)
        if abs(float(np.asarray(fn(np.zeros(1)))[0])) > 0:
            raise ConfigError("reaction must vanish at 0")
        if np.any(np.abs(fz) > L * np.abs(z) * (1 + 1e-12) + 1e-15):
            raise ConfigError(f"reaction violates |f(z)| <= {L}|z| on {interval}")
        return cls(REACTION, fn, float(L), label)


@dataclass(eq=False)
class Trajectory:
    grid: Grid
    model: PhiModel
    times: np.ndarray
    states: np.ndarray
    tau: float
    eps_certificate: float
    forcing: np.ndarray | None = None
    iterations: np.ndarray | None = None
    residuals: np.ndarray | None = None
    fallbacks: int = 0
    picard_ratios: list = field(default_factory=list)
    picard_iterations: list = field(default_factory=list)
    tol: float = DEFAULT_TOL

    def __len__(self):
        return len(self.times)

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    def state(self, i: int) -> Field:
        return Field(self.grid, self.states[i])

    @property
    def final(self) -> Field:
        return self.state(-1)

    def forcing_at(self, n: int) -> np.ndarray:
        if self.forcing is None:
            return np.zeros(self.grid.shape)
        return self.forcing[n]


def c_t_l1(a: Trajectory | np.ndarray, b: Trajectory | np.ndarray, vol: float | None = None) -> float:
    """``max_n |a(t_n) - b(t_n)|_1`` for trajectories on the same time grid."""
    if isinstance(a, Trajectory):
        vol = a.grid.cell_volume
        a = a.states
    if isinstance(b, Trajectory):
        b = b.states
    axes = tuple(range(1, a.ndim))
    return float(vol * np.max(np.sum(np.abs(a - b), axis=axes)))


def step_count(T: float, eps: float) -> int:
    if not eps > 0 or not T > 0:
        raise ConfigError("T and eps must be positive")
    return max(1, math.ceil(T / eps - 1e-9))


def step_implicit(model: PhiModel, u_prev: Field, tau: float, forcing: Field | np.ndarray | None = None,
                  tol: float = DEFAULT_TOL, stats: SolverStats | None = None) -> Field:
    """One implicit Euler step ``u - tau Lap_h phi(u) = u_prev + tau forcing``."""
    if not tau > 0:
        raise ConfigError("time step must be positive")
    g = u_prev.values
    if forcing is not None:
        g = g + tau * (forcing.values if isinstance(forcing, Field) else np.asarray(forcing))
    return solve(ResolventProblem(model, tau, Field(u_prev.grid, g), tol), u_init=u_prev, stats=stats)


def _march(model, u0: np.ndarray, grid, tau, n_steps, forcing_fn, tol):
    states = np.empty((n_steps + 1,) + grid.shape)
    forcing = np.zeros((n_steps,) + grid.shape)
    iters = np.zeros(n_steps, dtype=int)
    res = np.zeros(n_steps)
    fallbacks = 0
    states[0] = u0
    u = Field(grid, u0)
    for n in range(n_steps):
        f = forcing_fn(n, u)
        if f is not None:
            forcing[n] = f
        st = SolverStats()
        u = step_implicit(model, u, tau, f, tol, st)
        states[n + 1] = u.values
        iters[n], res[n] = st.iterations, st.residual
        fallbacks += st.fallbacks
    return states, forcing, iters, res, fallbacks


def solve_cauchy(model: PhiModel, u0: Field, src: SourceSpec | None, T: float, eps: float,
                 tol: float = DEFAULT_TOL, t0: float = 0.0) -> Trajectory:
    """Uniform-step implicit Euler on ``[t0, t0 + T]`` with midpoint-sampled forcing.

    The returned trajectory carries ``eps_certificate = tau <= eps``.
    """
    src = src or SourceSpec.none()
    if src.kind == REACTION:
        return solve_with_reaction(model, u0, src, T, eps, tol=tol, t0=t0)
    grid = u0.grid
    N = step_count(T, eps)
    tau = T / N
    coords = grid.coords()
    if src.kind == TIMESPACE:
        def forcing_fn(n, u):
            return np.broadcast_to(np.asarray(src.fn(t0 + (n + 0.5) * tau, *coords), dtype=float), grid.shape)
    else:
        def forcing_fn(n, u):
            return None
    states, forcing, iters, res, fb = _march(model, u0.values, grid, tau, N, forcing_fn, tol)
    times = t0 + tau * np.arange(N + 1)
    return Trajectory(grid, model, times, states, tau, tau, forcing if src.kind == TIMESPACE else None,
                      iters, res, fb, tol=tol)


def solve_with_reaction(model: PhiModel, u0: Field, src: SourceSpec, T: float, eps: float,
                        picard_tol: float = 1e-10, tol: float = DEFAULT_TOL, t0: float = 0.0,
                        max_picard: int = 200, chunk_steps: int | None = 1) -> Trajectory:
    """Reaction ``f(u)`` handled by Picard iteration on chunks of length at most ``1/(2L)``.

    Inside a chunk the forcing of step ``n`` is ``f`` at the average of the
    previous iterate at both ends of the step; the fixed point is the implicit
    midpoint treatment of the reaction.  ``chunk_steps`` sets the steps per chunk
    (``None`` takes the longest chunk allowed); the first iterate extrapolates
    the last computed increment.
    """
    if src.kind == NONE:
        return solve_cauchy(model, u0, None, T, eps, tol, t0)
    if src.kind != REACTION:
        raise ConfigError("solve_with_reaction needs a reaction source")
    grid = u0.grid
    N = step_count(T, eps)
    tau = T / N
    per_chunk = max(1, int(math.floor(1.0 / (2.0 * src.L * tau) + 1e-9)))
    if chunk_steps is not None:
        per_chunk = max(1, min(per_chunk, int(chunk_steps)))
    if per_chunk * tau > 1.0 / (2.0 * src.L) * (1 + 1e-9):
        log.warning("time step %.3g exceeds the Picard chunk bound 1/(2L)", tau)
    vol = grid.cell_volume
    states = np.empty((N + 1,) + grid.shape)
    forcing = np.zeros((N,) + grid.shape)
    iters = np.zeros(N, dtype=int)
    res = np.zeros(N)
    fallbacks = 0
    ratios, counts = [], []
    states[0] = u0.values
    start = 0
    while start < N:
        m = min(per_chunk, N - start)
        base = states[start]
        guess = np.broadcast_to(base, (m + 1,) + grid.shape).copy()
        if start > 0:
            inc = base - states[start - 1]
            guess[1:] = model.clamp(base + np.arange(1, m + 1).reshape((-1,) + (1,) * grid.d) * inc)
        prev_diff = None
        high = 0
        for j in range(max_picard):
            def forcing_fn(n, u, guess=guess):
                return src.fn(0.5 * (guess[n] + guess[n + 1]))
            new, f, it, rs, fb = _march(model, base, grid, tau, m, forcing_fn, tol)
            diff = c_t_l1(new, guess, vol)
            fallbacks += fb
            guess = new
            if prev_diff is not None and prev_diff > 0:
                ratio = diff / prev_diff
                ratios.append(ratio)
                high = high + 1 if ratio > 0.9 else 0
                if high >= 3:
                    raise PicardDivergence(f"Picard ratios above 0.9 three times in a row (last {ratio:.3f})")
            prev_diff = diff
            if diff <= picard_tol:
                break
        else:
            raise PicardDivergence(f"Picard iteration did not reach {picard_tol:g} in {max_picard} sweeps")
        counts.append(j + 1)
        states[start + 1:start + m + 1] = guess[1:]
        forcing[start:start + m] = f
        iters[start:start + m] = it
        res[start:start + m] = rs
        start += m
    times = t0 + tau * np.arange(N + 1)
    return Trajectory(grid, model, times, states, tau, tau, forcing, iters, res, fallbacks,
                      ratios, counts, tol=tol)


def solve_any(model, u0, src, T, eps, tol=DEFAULT_TOL, t0=0.0):
    src = src or SourceSpec.none()
    if src.kind == REACTION:
        return solve_with_reaction(model, u0, src, T, eps, tol=tol, t0=t0)
    return solve_cauchy(model, u0, src, T, eps, tol, t0)


def trotter_kato_sweep(model: PhiModel, ks, u0: Field, src: SourceSpec | None, T: float, eps: float,
                       tol: float = DEFAULT_TOL, workers: int | None = None):
    """``[(k, |u_k - u_ref|_{C_t L1})]`` with ``u_k`` driven by the smooth approximation ``phi_k``."""
    ref = solve_any(model, u0, src, T, eps, tol)

    def run(k):
        approx = build_smooth_approx(model, int(k))
        return int(k), c_t_l1(solve_any(approx, u0, src, T, eps, tol), ref)

    with ThreadPoolExecutor(max_workers=worker_count(workers or len(ks))) as pool:
        return list(pool.map(run, ks))


def is_nonincreasing(errors, slack: float = 0.1, floor: float = 0.0) -> bool:
    """Whether each error is at most ``(1 + slack)`` times its predecessor (or below ``floor``)."""
    vals = [e for _, e in errors] if errors and isinstance(errors[0], tuple) else list(errors)
    return all(b <= (1.0 + slack) * a or b <= floor for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------------------- diagnostics/export
def energy(model: PhiModel, u: np.ndarray, vol: float) -> float:
    return float(vol * np.sum(model.Phi(u)))


def dissipation(model: PhiModel, u: np.ndarray, grid: Grid) -> float:
    """``h^d |grad_h phi(u)|^2`` summed over cells."""
    return float(grid.cell_volume * np.sum(gradient_sq(model.phi(u), grid.h, grid.bc)))


MANIFEST_HEADER = ("t", "mass", "min", "max", "L1", "L2", "energy", "dissipation")


def manifest_rows(traj: Trajectory):
    g, vol = traj.grid, traj.grid.cell_volume
    rows = []
    for i, t in enumerate(traj.times):
        u = traj.states[i]
        dis = traj.tau * dissipation(traj.model, u, g) if i > 0 else 0.0
        rows.append((t, vol * u.sum(), u.min(), u.max(), vol * np.abs(u).sum(),
                     math.sqrt(vol * np.sum(u * u)), energy(traj.model, u, vol), dis))
    return rows


def export_trajectory(traj: Trajectory, outdir, stride: int = 1) -> Path:
    """Snapshot files every ``stride`` steps (and the last) plus ``manifest.csv``."""
    outdir = Path(outdir)
    idx = list(range(0, len(traj), max(1, stride)))
    if idx[-1] != len(traj) - 1:
        idx.append(len(traj) - 1)
    for i in idx:
        save_snapshot(traj.state(i), outdir / f"state_{i:06d}.bin", t=float(traj.times[i]))
    return write_csv(outdir / "manifest.csv", MANIFEST_HEADER, manifest_rows(traj))
