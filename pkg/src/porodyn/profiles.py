"""Initial data and source profiles used by presets, the CLI and the harness."""

from __future__ import annotations

import math

import numpy as np

from .grid import Field, Grid


def barenblatt(grid: Grid, t: float, m: float = 2.0, C: float = 1.0 / 12.0) -> Field:
    """Barenblatt source solution of ``u_t = Lap(|u|^(m-1) u)`` sampled at time ``t > 0``.

    ``u = t^-al (C - k |x|^2 t^(-2 al / d))_+^(1/(m-1))`` with
    ``al = d / (d (m-1) + 2)`` and ``k = al (m-1) / (2 m d)``.
    """
    if not t > 0:
        raise ValueError("Barenblatt profile needs t > 0")
    d = grid.d
    al = d / (d * (m - 1.0) + 2.0)
    k = al * (m - 1.0) / (2.0 * m * d)
    r2 = grid.radius() ** 2
    core = np.maximum(C - k * r2 * t ** (-2.0 * al / d), 0.0)
    return Field(grid, t ** (-al) * core ** (1.0 / (m - 1.0)))


def gaussian_bumps(grid: Grid, centers, widths, amplitudes) -> np.ndarray:
    coords = grid.coords()
    out = np.zeros(grid.shape)
    for c, w, a in zip(centers, widths, amplitudes):
        r2 = sum((x - ci) ** 2 for x, ci in zip(coords, np.atleast_1d(c)))
        out += a * np.exp(-r2 / (2.0 * w * w))
    return out


def random_bumps(grid: Grid, rng: np.random.Generator, amp=(-0.9, 0.9), clip=0.95,
                 max_bumps: int = 4, spread: float = 0.5) -> Field:
    """Clipped sum of 1 to ``max_bumps`` Gaussian bumps with random amplitudes."""
    k = int(rng.integers(1, max_bumps + 1))
    L = grid.L
    centers = rng.uniform(-spread * L, spread * L, size=(k, grid.d))
    widths = rng.uniform(0.05 * L, 0.15 * L, size=k)
    amps = rng.uniform(amp[0], amp[1], size=k)
    vals = np.clip(gaussian_bumps(grid, centers, widths, amps), -clip, clip)
    return Field(grid, vals)


def random_source(grid: Grid, rng: np.random.Generator, l1: float = 1.0, signed: bool = True,
                  max_bumps: int = 4) -> Field:
    """Time independent bump sum rescaled so that its L1 norm is ``l1``."""
    k = int(rng.integers(1, max_bumps + 1))
    L = grid.L
    centers = rng.uniform(-0.5 * L, 0.5 * L, size=(k, grid.d))
    widths = rng.uniform(0.05 * L, 0.15 * L, size=k)
    amps = rng.uniform(-1.0 if signed else 0.0, 1.0, size=k)
    vals = gaussian_bumps(grid, centers, widths, amps)
    norm = grid.cell_volume * np.abs(vals).sum()
    if norm > 0:
        vals = vals * (l1 / norm)
    return Field(grid, vals)


def smooth_bump(grid: Grid, amplitude: float = 0.5, radius: float = 1.0) -> Field:
    """``amplitude * exp(1 - 1/(1 - r^2/radius^2))`` inside the ball, zero outside."""
    r2 = grid.radius() ** 2 / radius**2
    out = np.zeros(grid.shape)
    inside = r2 < 1
    out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return Field(grid, out)


def initial_from_config(grid: Grid, block: dict, model=None) -> Field:
    """Build ``u0`` from an ``initial`` configuration block."""
    kind = block.get("kind", "bump")
    if kind == "zero":
        return grid.zeros()
    if kind == "constant":
        return Field(grid, np.full(grid.shape, float(block.get("value", 0.0))))
    if kind == "bump":
        return smooth_bump(grid, float(block.get("amplitude", 0.5)), float(block.get("radius", 1.0)))
    if kind == "barenblatt":
        m = float(block.get("m", getattr(model, "m", 2.0)))
        if not math.isfinite(m):
            m = 2.0
        return barenblatt(grid, float(block.get("t0", 1.0)), m, float(block.get("C", 1.0 / 12.0)))
    if kind == "random":
        rng = np.random.default_rng(int(block.get("seed", 0)))
        lo, hi = block.get("amplitude_range", (-0.9, 0.9))
        return random_bumps(grid, rng, amp=(float(lo), float(hi)))
    raise ValueError(f"unknown initial profile {kind!r}")
