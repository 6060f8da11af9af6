"""Randomised property suites: every inequality becomes a pass/fail check over a batch."""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evolution import SourceSpec, Trajectory, c_t_l1, dissipation, energy, solve_any, solve_cauchy
from .grid import Field, Grid, norm_l1_diff
from .ioutil import atomic_write, write_csv, worker_count
from .kinetic import chi_array, chi_distance, defect_measure, velocity_average
from .phi_model import PhiModel, build_smooth_approx
from .profiles import random_bumps, random_source
from .resolvent import DEFAULT_TOL


@dataclass
class PropertyResult:
    name: str
    trials: int = 0
    failures: int = 0
    worst_slack: float = math.inf
    seeds: list = field(default_factory=list)
    budget: float = 0.0
    records: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def add(self, seed, lhs: float, rhs: float, budget: float | None = None, label: str = ""):
        """Record one trial; it fails when ``rhs - lhs < -budget``."""
        budget = self.budget if budget is None else budget
        slack = rhs - lhs
        self.trials += 1
        self.seeds.append(seed)
        self.worst_slack = min(self.worst_slack, slack)
        if slack < -budget:
            self.failures += 1
        self.records.append((self.name, label, seed, lhs, rhs, slack))

    def merge(self, other: "PropertyResult") -> "PropertyResult":
        for rec in other.records:
            self.add(rec[2], rec[3], rec[4], other.budget, rec[1])
        return self


@dataclass(frozen=True)
class Batch:
    """Shared settings of a property batch; trial ``i`` uses seed ``seed * 1000 + i``."""

    model: PhiModel
    grid: Grid
    T: float = 0.5
    eps: float = 1.0 / 256.0
    trials: int = 25
    seed: int = 0
    tol: float = DEFAULT_TOL
    forced: bool = True
    workers: int | None = None

    @property
    def steps(self) -> int:
        return max(1, math.ceil(self.T / self.eps - 1e-9))

    @property
    def budget(self) -> float:
        return 100.0 * self.tol * self.grid.size * self.steps

    def trial_seeds(self):
        return [self.seed * 1000 + i for i in range(self.trials)]

    def rng(self, s) -> np.random.Generator:
        return np.random.default_rng(s)


def _map(batch: Batch, fn, items):
    with ThreadPoolExecutor(max_workers=worker_count(batch.workers or len(items))) as pool:
        return list(pool.map(fn, items))


def _source(batch, rng, signed=True):
    if not batch.forced:
        return None, np.zeros(batch.grid.shape)
    f = random_source(batch.grid, rng, l1=float(rng.uniform(0.1, 1.0)), signed=signed)
    return SourceSpec.constant(f), f.values


def _run(batch, u0, src):
    return solve_any(batch.model, u0, src, batch.T, batch.eps, batch.tol)


# ---------------------------------------------------------------------------- contraction
def check_contraction(batch: Batch, mode: str = "random") -> PropertyResult:
    """``max_n |u - u~|_1 <= |u0 - u0~|_1 + sum tau |f - f~|_1`` on paired runs.

    ``mode`` is ``random``, ``identical`` (u0 = u0~, f = f~) or ``disjoint``
    (two single bumps with separated supports).
    """
    res = PropertyResult("contraction", budget=batch.budget)
    g = batch.grid

    def trial(s):
        rng = batch.rng(s)
        if mode == "disjoint":
            from .profiles import gaussian_bumps
            u0 = Field(g, gaussian_bumps(g, [(-0.4 * g.L,) * g.d], [0.08 * g.L], [0.8]))
            v0 = Field(g, gaussian_bumps(g, [(0.4 * g.L,) * g.d], [0.08 * g.L], [0.8]))
            src = src_t = None
            f = f_t = np.zeros(g.shape)
        else:
            u0 = random_bumps(g, rng)
            src, f = _source(batch, rng)
            if mode == "identical":
                v0, src_t, f_t = u0, src, f
            else:
                v0 = random_bumps(g, rng)
                src_t, f_t = _source(batch, rng)
        a, b = _run(batch, u0, src), _run(batch, v0, src_t)
        lhs = c_t_l1(a, b)
        rhs = norm_l1_diff(u0, v0) + batch.T * g.cell_volume * float(np.abs(f - f_t).sum())
        return s, lhs, rhs

    for s, lhs, rhs in _map(batch, trial, batch.trial_seeds()):
        res.add(s, lhs, rhs, label=mode)
    return res


# ---------------------------------------------------------------------------- comparison
def _pos_part_l1(a, vol):
    axes = tuple(range(1, a.ndim))
    return vol * np.sum(np.maximum(a, 0.0), axis=axes)


def check_comparison(batch: Batch, mode: str = "random") -> PropertyResult:
    """``|(u - u~)_+(t)|_1 <= |(u0 - u0~)_+|_1 + int |(f - f~)_+|_1``.

    ``random`` pairs check the inequality and its mirror (roles swapped);
    ``ordered`` pairs have ``u0 <= u0~`` and ``f <= f~`` and check ``u <= u~``
    cell by cell.
    """
    res = PropertyResult(f"comparison[{mode}]", budget=batch.budget)
    g, vol = batch.grid, batch.grid.cell_volume

    def trial(s):
        rng = batch.rng(s)
        u0 = random_bumps(g, rng)
        src, f = _source(batch, rng)
        if mode == "ordered":
            bump = random_bumps(g, rng, amp=(0.0, 0.5))
            v0 = Field(g, np.minimum(u0.values + bump.values, 0.95))
            if batch.forced:
                extra = random_source(g, rng, l1=0.5, signed=False).values
                f_t = f + extra
                src_t = SourceSpec.constant(Field(g, f_t))
            else:
                src_t, f_t = None, f
        else:
            v0 = random_bumps(g, rng)
            src_t, f_t = _source(batch, rng)
        a, b = _run(batch, u0, src), _run(batch, v0, src_t)
        out = []
        if mode == "ordered":
            out.append(("cellwise", float(np.max(a.states - b.states)), 0.0))
            out.append(("mass", float(np.max(_pos_part_l1(a.states - b.states, vol))), 0.0))
        else:
            for label, x, y, fx, fy in (("forward", a, b, f, f_t), ("mirrored", b, a, f_t, f)):
                lhs = float(np.max(_pos_part_l1(x.states - y.states, vol)))
                rhs = float(vol * np.maximum(x.states[0] - y.states[0], 0).sum()
                            + batch.T * vol * np.maximum(fx - fy, 0).sum())
                out.append((label, lhs, rhs))
        return s, out

    for s, out in _map(batch, trial, batch.trial_seeds()):
        for label, lhs, rhs in out:
            res.add(s, lhs, rhs, label=label)
    return res


def check_gronwall(batch: Batch) -> PropertyResult:
    """Comparison with reactions ``f <= f~`` and the Gronwall factor ``e^{L t}`` of ``f~``."""
    res = PropertyResult("comparison[gronwall]", budget=batch.budget)
    g, vol = batch.grid, batch.grid.cell_volume

    def trial(s):
        rng = batch.rng(s)
        a_coef = float(rng.uniform(0.2, 1.0))
        c_coef = float(rng.uniform(0.1, 0.5))

        def f(z, a=a_coef):
            return a * z * (1.0 - z)

        def ft(z, a=a_coef, c=c_coef):
            return a * z * (1.0 - z) + c * z * z

        L = 2.0 * a_coef + c_coef
        src = SourceSpec.reaction(f, 2.0 * a_coef, label="logistic")
        src_t = SourceSpec.reaction(ft, L, label="logistic+")
        u0 = random_bumps(g, rng, amp=(0.0, 0.9))
        v0 = random_bumps(g, rng, amp=(0.0, 0.9))
        a = solve_any(batch.model, u0, src, batch.T, batch.eps, batch.tol)
        b = solve_any(batch.model, v0, src_t, batch.T, batch.eps, batch.tol)
        diff = _pos_part_l1(a.states - b.states, vol)
        mid = 0.5 * (a.states[1:] + a.states[:-1])
        gap = a.tau * _pos_part_l1(f(mid) - ft(mid), vol)
        integral = np.concatenate([[0.0], np.cumsum(gap)])
        bound = np.exp(L * (a.times - a.times[0])) * (diff[0] + integral)
        worst = int(np.argmax(diff - bound))
        return s, float(diff[worst]), float(bound[worst])

    for s, lhs, rhs in _map(batch, trial, batch.trial_seeds()):
        res.add(s, lhs, rhs, label="gronwall")
    return res


# ---------------------------------------------------------------------------- positivity/range
def check_positivity_and_range(batch: Batch, reaction: str = "none", nonnegative: bool = True,
                               amp_max: float = 0.9) -> PropertyResult:
    """Nonnegative data stay nonnegative (to -1e-10); bounded ``I`` is never left (margin 1e-12).

    ``reaction`` is ``none``, ``logistic`` (``u(1-u)``) or ``linear`` (``c u``, random ``c``).
    """
    res = PropertyResult(f"{'positivity_range' if nonnegative else 'range'}[{reaction}]", budget=0.0)
    g, model = batch.grid, batch.model

    def trial(s):
        rng = batch.rng(s)
        u0 = random_bumps(g, rng, amp=(0.0, amp_max) if nonnegative else (-amp_max, amp_max), clip=amp_max)
        if reaction == "logistic":
            src = SourceSpec.reaction(lambda z: z * (1.0 - z), 2.0, label="logistic")
        elif reaction == "linear":
            c = float(rng.uniform(-1.0, 1.0))
            src = SourceSpec.reaction(lambda z, c=c: c * z, max(abs(c), 1e-3), label="linear")
        else:
            src = None
        tr = solve_any(model, u0, src, batch.T, batch.eps, batch.tol)
        out = []
        if nonnegative:
            out.append(("positivity", -float(tr.states.min()), 1e-10))
        if model.bounded:
            out.append(("range_hi", float(tr.states.max()), model.hi - 1e-12))
            out.append(("range_lo", -float(tr.states.min()), -(model.lo + 1e-12)))
        return s, out

    for s, out in _map(batch, trial, batch.trial_seeds()):
        for label, lhs, rhs in out:
            res.add(s, lhs, rhs, budget=0.0, label=label)
    return res


# ---------------------------------------------------------------------------- energy
def energy_steps(traj: Trajectory):
    """Per step ``(lhs, rhs)`` of ``E(u^{n+1}) - E(u^n) <= tau (sum f phi(u^{n+1}) - |grad phi(u^{n+1})|^2)``."""
    model, g = traj.model, traj.grid
    vol = g.cell_volume
    E = [energy(model, u, vol) for u in traj.states]
    out = []
    for n in range(traj.steps):
        u1 = traj.states[n + 1]
        work = vol * float(np.sum(traj.forcing_at(n) * model.phi(u1)))
        out.append((E[n + 1] - E[n], traj.tau * (work - dissipation(model, u1, g))))
    return out


def check_energy(traj_or_batch, budget: float | None = None) -> PropertyResult:
    """Per-step discrete dissipation inequality; for an unforced run also ``E`` nonincreasing."""
    if isinstance(traj_or_batch, Trajectory):
        trajs = [(0, traj_or_batch)]
        tol = traj_or_batch.tol
    else:
        batch = traj_or_batch

        def make(s):
            rng = batch.rng(s)
            u0 = random_bumps(batch.grid, rng)
            src, _ = _source(batch, rng)
            return s, _run(batch, u0, src)

        trajs = _map(batch, make, batch.trial_seeds())
        tol = batch.tol
    res = PropertyResult("energy", budget=100.0 * tol if budget is None else budget)
    for s, tr in trajs:
        steps = energy_steps(tr)
        lhs_worst, rhs_worst = max(steps, key=lambda lr: lr[0] - lr[1])
        res.add(s, lhs_worst, rhs_worst, label="dissipation")
        if tr.forcing is None or not np.any(tr.forcing):
            inc = max(l for l, _ in steps)
            res.add(s, inc, 0.0, label="monotone")
    return res


# ---------------------------------------------------------------------------- kinetic suites
def check_chi_suite(batch: Batch) -> PropertyResult:
    """Isometry, averaging with ``H' = 1`` and ``H' = D``, ``|chi| <= 1`` and sign structure."""
    res = PropertyResult("chi_suite", budget=0.0)
    g, model = batch.grid, batch.model

    def trial(s):
        rng = batch.rng(s)
        u = random_bumps(g, rng)
        w = random_bumps(g, rng)
        out = [("isometry", abs(chi_distance(u, w) - norm_l1_diff(u, w)), 1e-14)]
        avg = velocity_average(u, lambda v: np.ones_like(v), J=(-1.0, 1.0))
        out.append(("average_identity", float(np.max(np.abs(avg.values - u.values))), 1e-14))
        avg_d = velocity_average(u, lambda v: model.D(model.clamp(v)), J=(-0.99, 0.99))
        out.append(("average_phi", float(np.max(np.abs(avg_d.values - model.phi(u.values)))), 1e-10))
        centres = np.linspace(-0.99, 0.99, 199)
        chi = chi_array(u.values, centres)
        out.append(("chi_bound", float(np.max(np.abs(chi))), 1.0))
        out.append(("sign", -float(np.min(chi * centres)), 0.0))
        return s, out

    for s, out in _map(batch, trial, batch.trial_seeds()):
        for label, lhs, rhs in out:
            res.add(s, lhs, rhs, budget=0.0, label=label)
    return res


def check_defect_suite(batch: Batch, k: int = 8, mass_slack: float = 0.05,
                       density_slack: float = 0.10) -> PropertyResult:
    """Defect measure of smooth-approximation runs: positivity, total mass and velocity density bounds."""
    res = PropertyResult("defect_suite", budget=0.0)
    g = batch.grid
    approx = batch.model if batch.model.smooth else build_smooth_approx(batch.model, k)

    def trial(s):
        rng = batch.rng(s)
        u0 = random_bumps(g, rng)
        src, f = _source(batch, rng)
        tr = solve_cauchy(approx, u0, src, batch.T, batch.eps, batch.tol)
        sample = defect_measure(tr)
        bound = g.cell_volume * np.abs(u0.values).sum() + batch.T * g.cell_volume * np.abs(f).sum()
        return s, [("positivity", -float(sample.density.min()), 0.0),
                   ("total_mass", sample.total_mass, (1 + mass_slack) * bound),
                   ("linf_density", float(sample.linf_density().max()), (1 + density_slack) * bound)]

    for s, out in _map(batch, trial, batch.trial_seeds()):
        for label, lhs, rhs in out:
            res.add(s, lhs, rhs, budget=0.0, label=label)
    return res


# ---------------------------------------------------------------------------- export
RESULT_HEADER = ("name", "trials", "failures", "worst_slack", "budget", "seeds")
TRIAL_HEADER = ("name", "label", "seed", "lhs", "rhs", "slack")


def export_csv(results, path) -> Path:
    rows = [(r.name, r.trials, r.failures, r.worst_slack, r.budget, " ".join(str(s) for s in r.seeds))
            for r in results]
    return write_csv(path, RESULT_HEADER, rows)


def export_trials_csv(results, path) -> Path:
    return write_csv(path, TRIAL_HEADER, [rec for r in results for rec in r.records])


def export_junit(results, path, suite: str = "porodyn") -> Path:
    root = ET.Element("testsuite", name=suite, tests=str(len(results)),
                      failures=str(sum(1 for r in results if not r.passed)))
    for r in results:
        case = ET.SubElement(root, "testcase", classname=suite, name=r.name)
        ET.SubElement(case, "properties")
        if not r.passed:
            fail = ET.SubElement(case, "failure", message=f"{r.failures} of {r.trials} trials failed")
            fail.text = f"worst slack {r.worst_slack:.17g} with budget {r.budget:.17g}; seeds {r.seeds}"
    ET.indent(root)
    return atomic_write(path, ET.tostring(root, encoding="unicode") + "\n")
