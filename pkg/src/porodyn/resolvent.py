"""Solvers for the implicit step ``u - lam * Lap_h phi(u) = g``.

Three independent routes are provided:

* :func:`solve_cellwise_monotone`: symmetric nonlinear Gauss-Seidel, each cell
  equation being a strictly increasing scalar equation solved inside ``I``.
* :func:`solve_newton`: damped Newton in the ``u`` variable with an Armijo
  line search on the discrete L1 residual.
* :func:`solve_prox_hminus1`: minimisation of
  ``(1/2 lam) |u - g|_{H^-1}^2 + sum Phi(u)`` by accelerated gradient descent
  in the ``H^-1`` metric.  Periodic grids only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import BCError, ConfigError, NoConvergence
from .grid import BC, Field, Grid, inverse_laplacian_array, laplacian_array, laplacian_matrix, neighbor_counts
from .phi_model import PhiModel

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-11


@dataclass(frozen=True, eq=False)
class ResolventProblem:
    model: PhiModel
    lam: float
    g: Field
    tol: float = DEFAULT_TOL
    max_iter: int = 200

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if not self.tol > 0:
            raise ConfigError("tolerance must be positive")

    @property
    def grid(self) -> Grid:
        return self.g.grid


@dataclass
class SolverStats:
    method: str = ""
    iterations: int = 0
    residual: float = math.nan
    history: list = field(default_factory=list)
    fallbacks: int = 0


def residual_array(p: ResolventProblem, u: np.ndarray) -> np.ndarray:
    g = p.grid
    return u - p.lam * laplacian_array(p.model.phi(u), g.h, g.bc) - p.g.values


def residual_l1(p: ResolventProblem, u) -> float:
    u = u.values if isinstance(u, Field) else u
    return float(p.grid.cell_volume * np.sum(np.abs(residual_array(p, u))))


def _record(stats, method, iterations, residual, history):
    if stats is not None:
        stats.method = method
        stats.iterations = iterations
        stats.residual = residual
        stats.history = list(history)


def _initial_guess(p: ResolventProblem, u_init) -> np.ndarray:
    u = p.g.values if u_init is None else (u_init.values if isinstance(u_init, Field) else np.asarray(u_init))
    return np.array(p.model.clamp(np.asarray(u, dtype=float)), dtype=float).reshape(p.grid.shape)


# ---------------------------------------------------------------------------- cellwise
@lru_cache(maxsize=32)
def _neighbor_table(grid: Grid):
    """Flat indices of the distinct stencil neighbours of every cell."""
    idx = np.arange(grid.size).reshape(grid.shape)
    nbrs = [[] for _ in range(grid.size)]
    for ax in range(grid.d):
        for shift in (1, -1):
            rolled = np.roll(idx, shift, axis=ax)
            valid = np.ones(grid.shape, dtype=bool)
            if grid.bc is BC.ZERO_FLUX:
                edge = [slice(None)] * grid.d
                edge[ax] = 0 if shift == 1 else grid.n - 1
                valid[tuple(edge)] = False
            for i, j, ok in zip(idx.ravel(), rolled.ravel(), valid.ravel()):
                if ok:
                    nbrs[i].append(int(j))
    return tuple(tuple(n) for n in nbrs)


def _cell_solve(model: PhiModel, a: float, rhs: float, x: float, lo: float, hi: float) -> float:
    """Root of ``x + a phi(x) = rhs`` on ``[lo, hi]`` by Newton safeguarded with bisection.

    The map is strictly increasing, so the root is bracketed once the signs at
    ``lo`` and ``hi`` differ; if they do not, the nearer endpoint is returned.
    """
    scalar = model.scalar
    bounded = math.isfinite(model.lo)
    if not bounded:
        width = max(1.0, abs(rhs), abs(x))
        lo, hi = -width, width
        while True:
            if lo + a * scalar(lo)[1] - rhs > 0:
                lo *= 2.0
            elif hi + a * scalar(hi)[1] - rhs < 0:
                hi *= 2.0
            else:
                break
    else:
        if lo + a * scalar(lo)[1] - rhs >= 0:
            return lo
        if hi + a * scalar(hi)[1] - rhs <= 0:
            return hi
    x = min(max(x, lo), hi)
    for _ in range(200):
        D, ph = scalar(x)
        f = x + a * ph - rhs
        if f == 0.0:
            return x
        if f > 0:
            hi = x
        else:
            lo = x
        xn = x - f / (1.0 + a * D)
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 2e-16 * max(1.0, abs(x)) or hi - lo <= 4e-16 * max(1.0, abs(x)):
            return xn
        x = xn
    return x


def solve_cellwise_monotone(p: ResolventProblem, u_init=None, stats: SolverStats | None = None,
                            max_sweeps: int | None = None) -> Field:
    """Symmetric nonlinear Gauss-Seidel sweeps until the discrete L1 residual is below ``tol``."""
    grid, model = p.grid, p.model
    nbrs = _neighbor_table(grid)
    counts = neighbor_counts(grid).ravel()
    c = p.lam / grid.h**2
    g = p.g.values.ravel()
    u = _initial_guess(p, u_init).ravel().copy()
    lo = model.lo + model.margin if model.bounded else -math.inf
    hi = model.hi - model.margin if model.bounded else math.inf
    w = [model.scalar(float(x))[1] for x in u]
    ulist = [float(x) for x in u]
    order = list(range(grid.size))
    history = []
    sweeps = max_sweeps or max(50 * p.max_iter, 10_000)
    for it in range(sweeps + 1):
        res = residual_l1(p, np.array(ulist).reshape(grid.shape))
        history.append(res)
        if res <= p.tol:
            _record(stats, "cellwise", it, res, history)
            return Field(grid, np.array(ulist))
        if it == sweeps:
            break
        for seq in (order, reversed(order)):
            for i in seq:
                rhs = g[i] + c * sum(w[j] for j in nbrs[i])
                x = _cell_solve(model, c * counts[i], rhs, ulist[i], lo, hi)
                ulist[i] = x
                w[i] = model.scalar(x)[1]
    _record(stats, "cellwise", sweeps, history[-1], history)
    raise NoConvergence(f"Gauss-Seidel did not reach tol={p.tol:g} after {sweeps} sweeps",
                        iterations=sweeps, residual=history[-1])


# ---------------------------------------------------------------------------- Newton
@lru_cache(maxsize=32)
def _jacobian_pattern(grid: Grid):
    """CSC Laplacian with the column of every stored entry and a diagonal mask."""
    A = laplacian_matrix(grid).tocsc()
    A.sort_indices()
    cols = np.repeat(np.arange(grid.size), np.diff(A.indptr))
    return A, cols, A.indices == cols


def solve_newton(p: ResolventProblem, u_init=None, stats: SolverStats | None = None) -> Field:
    """Damped Newton on ``F(u) = u - lam Lap_h phi(u) - g``; Jacobian ``I - lam Lap_h diag(D(u))``."""
    grid, model = p.grid, p.model
    A, cols, diag = _jacobian_pattern(grid)
    vol = grid.cell_volume
    u = _initial_guess(p, u_init).ravel()
    g = p.g.values.ravel()
    history = []

    def resid(x):
        return x - p.lam * (A @ model.phi(x)) - g

    F = resid(u)
    r = vol * np.sum(np.abs(F))
    for it in range(p.max_iter):
        history.append(float(r))
        if r <= p.tol:
            _record(stats, "newton", it, float(r), history)
            return Field(grid, u)
        data = diag - p.lam * A.data * model.D(u)[cols]
        J = sparse.csc_matrix((data, A.indices, A.indptr), shape=A.shape)
        step = spsolve(J, -F)
        if not np.all(np.isfinite(step)):
            break
        alpha = 1.0
        while alpha > 1e-12:
            trial = model.clamp(u + alpha * step)
            Ft = resid(trial)
            rt = vol * np.sum(np.abs(Ft))
            if rt <= (1.0 - 1e-4 * alpha) * r:
                break
            alpha *= 0.5
        else:
            break
        u, F, r = trial, Ft, rt
    history.append(float(r))
    _record(stats, "newton", len(history) - 1, float(r), history)
    raise NoConvergence(f"Newton stalled at residual {r:.3e}", iterations=len(history) - 1, residual=float(r))


def solve(p: ResolventProblem, u_init=None, stats: SolverStats | None = None) -> Field:
    """Newton with fall-back to Gauss-Seidel when it does not converge."""
    try:
        return solve_newton(p, u_init, stats)
    except NoConvergence as exc:
        log.info("Newton failed (%s); falling back to Gauss-Seidel", exc)
        if stats is not None:
            stats.fallbacks += 1
        return solve_cellwise_monotone(p, u_init, stats)


# ---------------------------------------------------------------------------- H^-1 prox
def prox_objective(p: ResolventProblem, u) -> float:
    """``J(u) = (1/2 lam) <u-g, u-g>_{H^-1} + h^d sum Phi(u)``."""
    grid = p.grid
    if grid.bc is not BC.PERIODIC:
        raise BCError("the H^-1 prox formulation requires periodic boundaries")
    u = u.values if isinstance(u, Field) else np.asarray(u)
    dv = u - p.g.values
    dv = dv - dv.mean()
    quad = grid.cell_volume * np.sum(inverse_laplacian_array(dv, grid) * dv)
    return float(quad / (2.0 * p.lam) + grid.cell_volume * np.sum(p.model.Phi(u)))


def solve_prox_hminus1(p: ResolventProblem, u_init=None, stats: SolverStats | None = None,
                       trace: list | None = None) -> Field:
    """Accelerated ``H^-1`` gradient descent with backtracking and a monotone safeguard.

    The update ``u <- u - s F(u)`` is the ``H^-1`` gradient step of ``J`` scaled by
    ``lam``; it keeps the mean fixed, so the iteration starts from a point with
    the mean of ``g``.  If ``trace`` is given the objective of every accepted
    iterate is appended to it.
    """
    grid, model = p.grid, p.model
    if grid.bc is not BC.PERIODIC:
        raise BCError("the H^-1 prox formulation requires periodic boundaries")
    vol = grid.cell_volume
    lam = p.lam
    gv = p.g.values
    gmean = float(gv.mean())
    lo = model.lo + model.margin if model.bounded else -math.inf
    hi = model.hi - model.margin if model.bounded else math.inf
    if not lo < gmean < hi:
        raise NoConvergence("mean of g lies outside I; no periodic solution exists")

    def feasible(x):
        return bool(np.all(x > lo) & np.all(x < hi))

    x = _initial_guess(p, u_init)
    x = x + (gmean - x.mean())
    if not feasible(x):
        x = np.full(grid.shape, gmean)

    def grad(v):
        ph = model.phi(v)
        return ph, v - lam * laplacian_array(ph, grid.h, grid.bc) - gv

    def hinner(a, b):
        return float(vol * np.sum(inverse_laplacian_array(a - a.mean(), grid) * (b - b.mean())))

    def dJ(a, b, Fa, Fb):
        """J(b) - J(a).

        Short steps use the trapezoid rule on the H^-1 gradient ``F / lam``; the
        direct difference of J would drown in rounding once ``|F|`` is tiny.
        """
        d = b - a
        if float(np.max(np.abs(d))) < 1e-5:
            return 0.5 / lam * hinner(Fa + Fb, d)
        sm = (a + b) - 2.0 * gv
        quad = hinner(d, sm) / (2.0 * lam)
        return float(quad + vol * np.sum(model.Phi(b) - model.Phi(a)))

    phx, Fx = grad(x)
    J = prox_objective(p, x)
    if trace is not None:
        trace.append(J)
    history = []
    y, phy, Fy = x, phx, Fx
    t = 1.0
    s = 1.0 / (1.0 + 4.0 * grid.d * lam / grid.h**2 * float(np.max(model.D(x))))
    max_iter = 100 * p.max_iter
    for it in range(max_iter):
        r = vol * float(np.sum(np.abs(Fx)))
        history.append(r)
        if r <= p.tol:
            _record(stats, "prox", it, r, history)
            return Field(grid, x)
        direction = Fy - Fy.mean()
        gnorm = hinner(direction, direction)
        while True:
            z = y - s * direction
            if feasible(z):
                phz, Fz = grad(z)
                if dJ(y, z, Fy, Fz) <= -0.5 * s / lam * gnorm:
                    break
            s *= 0.5
            if s < 1e-300:
                raise NoConvergence("prox line search failed", iterations=it, residual=r)
        step_from_x = dJ(x, z, Fx, Fz)
        if step_from_x > 0:
            # momentum overshoot: restart from the last accepted iterate
            y, phy, Fy, t = x, phx, Fx, 1.0
            continue
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = z + ((t - 1.0) / t_new) * (z - x)
        x, phx, Fx, t = z, phz, Fz, t_new
        J += step_from_x
        if trace is not None:
            trace.append(J)
        if feasible(y):
            phy, Fy = grad(y)
        else:
            y, phy, Fy, t = x, phx, Fx, 1.0
        s *= 1.25
    r = vol * float(np.sum(np.abs(Fx)))
    _record(stats, "prox", max_iter, r, history)
    raise NoConvergence(f"prox iteration stopped at residual {r:.3e}", iterations=max_iter, residual=r)


# ---------------------------------------------------------------------------- checks
def resolvent_contraction_check(model: PhiModel, lam: float, g: Field, g_tilde: Field,
                                tol: float = DEFAULT_TOL) -> tuple[float, float]:
    """``(|R(g) - R(g~)|_1, |g - g~|_1)`` for the resolvent ``R = (I - lam Lap_h phi)^-1``."""
    if g.grid != g_tilde.grid:
        raise ConfigError("g and g~ must live on the same grid")
    u = solve(ResolventProblem(model, lam, g, tol))
    v = solve(ResolventProblem(model, lam, g_tilde, tol))
    vol = g.grid.cell_volume
    return (float(vol * np.sum(np.abs(u.values - v.values))),
            float(vol * np.sum(np.abs(g.values - g_tilde.values))))
