"""TOML run configuration: parsing, aggregated validation and object construction."""

from __future__ import annotations

import copy
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ParseError, ValidationError
from .evolution import SourceSpec
from .grid import BC, Grid
from .phi_model import PhiModel, SmoothApproxParams, build_smooth_approx
from .profiles import initial_from_config, random_source

PRESETS = ("biofilm_a1b1", "biofilm_a1b2", "pme_m2_barenblatt", "heat_sanity")

DEFAULTS = {
    "model": {"kind": "biofilm", "a": 1.0, "b": 1.0, "m": 2.0, "c": 1.0, "k": 0, "mollifier_nodes": 64},
    "grid": {"d": 1, "n": 128, "L": 4.0, "bc": "periodic"},
    "time": {"T": 0.5, "eps": 1.0 / 256.0, "picard_tol": 1e-10, "tol": 1e-11, "t0": 0.0},
    "source": {"kind": "none", "rate": 1.0, "l1": 1.0, "seed": 0},
    "initial": {"kind": "bump", "amplitude": 0.5, "radius": 1.0, "value": 0.0, "t0": 1.0, "C": 1.0 / 12.0,
                "seed": 0, "amplitude_range": [-0.9, 0.9]},
    "outputs": {"directory": "out", "snapshot_stride": 16},
    "seeds": {"seed": 0},
    "verify": {"suites": ["contraction", "comparison", "positivity", "energy", "chi", "defect"], "trials": 25},
    "regularity": {"p": 2.0, "sigma_t": [0.0], "sigma_x": [0.5, 0.9, 1.2], "levels": 3, "time_stride": 1},
    "kinetic": {"k": 8, "bins": 64},
    "sweep": {"ks": [3, 4, 5, 6, 7, 8, 9, 10]},
}

MODEL_KINDS = ("biofilm", "pme", "linear")
SOURCE_KINDS = ("none", "logistic", "linear", "bumps")
INITIAL_KINDS = ("zero", "constant", "bump", "barenblatt", "random")
SUITES = ("contraction", "comparison", "gronwall", "positivity", "energy", "chi", "defect")


@dataclass
class RunConfig:
    model: dict
    grid: dict
    time: dict
    source: dict
    initial: dict
    outputs: dict
    seeds: dict
    verify: dict
    regularity: dict
    kinetic: dict
    sweep: dict
    path: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def seed(self) -> int:
        return int(self.seeds["seed"])

    def base_model(self) -> PhiModel:
        kind = self.model["kind"]
        if kind == "biofilm":
            return PhiModel.biofilm(self.model["a"], self.model["b"])
        if kind == "pme":
            return PhiModel.pme(self.model["m"])
        return PhiModel.linear(self.model["c"])

    def build_model(self, k: int | None = None) -> PhiModel:
        base = self.base_model()
        k = int(self.model["k"]) if k is None else int(k)
        if k <= 0 or base.smooth:
            return base
        params = SmoothApproxParams.for_model(base, k, nodes_per_radius=int(self.model["mollifier_nodes"]))
        return build_smooth_approx(base, params)

    def build_grid(self, n: int | None = None) -> Grid:
        g = self.grid
        return Grid(int(g["d"]), int(n or g["n"]), float(g["L"]), g["bc"])

    def build_initial(self, grid: Grid, model: PhiModel | None = None):
        return initial_from_config(grid, self.initial, model or self.base_model())

    def build_source(self, grid: Grid) -> SourceSpec | None:
        s = self.source
        kind = s["kind"]
        if kind == "none":
            return None
        if kind == "logistic":
            r = float(s["rate"])
            return SourceSpec.reaction(lambda z: r * z * (1.0 - z), 2.0 * abs(r), label="logistic")
        if kind == "linear":
            r = float(s["rate"])
            return SourceSpec.reaction(lambda z: r * z, abs(r), label="linear")
        import numpy as np
        f = random_source(grid, np.random.default_rng(int(s["seed"])), l1=float(s["l1"]))
        return SourceSpec.constant(f, label="bumps")

    def with_overrides(self, **dotted) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        for key, value in dotted.items():
            section, _, name = key.partition(".")
            raw.setdefault(section, {})[name] = value
        return validate(raw, self.path)


def _locate(exc) -> tuple[int | None, int | None]:
    line = getattr(exc, "lineno", None)
    col = getattr(exc, "colno", None)
    if line is None:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        if m:
            line, col = int(m.group(1)), int(m.group(2))
    return line, col


def resolve_path(path_or_preset) -> Path:
    p = Path(path_or_preset)
    if p.exists():
        return p
    name = str(path_or_preset)
    if name.endswith(".toml"):
        name = name[:-5]
    if name in PRESETS:
        return Path(str(resources.files("porodyn").joinpath("presets", f"{name}.toml")))
    raise FileNotFoundError(f"no config file or preset named {path_or_preset!r}")


def parse_text(text: str, path: str = "<string>") -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line, col = _locate(exc)
        msg = re.sub(r"\s*\(at line \d+, column \d+\)", "", str(exc))
        raise ParseError(f"{path}: {msg}", line=line, column=col) from exc
    return validate(raw, path)


def parse_config(path) -> RunConfig:
    """Read a TOML file (or preset name), fill defaults and validate every constraint at once."""
    p = resolve_path(path)
    return parse_text(p.read_text(), str(p))


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate(raw: dict, path: str = "") -> RunConfig:
    errors: list[str] = []
    merged = {}
    for section, defaults in DEFAULTS.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            errors.append(f"[{section}] must be a table")
            given = {}
        for key in given:
            if key not in defaults:
                errors.append(f"unknown key {section}.{key}")
        merged[section] = {**copy.deepcopy(defaults), **given}
    for section in raw:
        if section not in DEFAULTS:
            errors.append(f"unknown section [{section}]")

    def need(cond, msg):
        if not cond:
            errors.append(msg)

    def numeric(section, key):
        v = merged[section][key]
        if not _num(v) or not math.isfinite(float(v)):
            errors.append(f"{section}.{key} must be a finite number, got {v!r}")
            return None
        return float(v)

    m = merged["model"]
    need(m["kind"] in MODEL_KINDS, f"model.kind must be one of {MODEL_KINDS}, got {m['kind']!r}")
    if m["kind"] == "biofilm":
        a, b = numeric("model", "a"), numeric("model", "b")
        if a is not None:
            need(a >= 1.0, f"model.a = {a:g} violates a ≥ 1")
        if b is not None:
            need(b > 0.0, f"model.b = {b:g} violates b > 0")
    elif m["kind"] == "pme":
        mm = numeric("model", "m")
        if mm is not None:
            need(mm > 1.0, f"model.m = {mm:g} violates m > 1")
    else:
        c = numeric("model", "c")
        if c is not None:
            need(c > 0.0, f"model.c = {c:g} violates c > 0")
    need(isinstance(m["k"], int) and not isinstance(m["k"], bool) and m["k"] >= 0,
         f"model.k must be a nonnegative integer, got {m['k']!r}")
    need(isinstance(m["mollifier_nodes"], int) and m["mollifier_nodes"] >= 8,
         "model.mollifier_nodes must be an integer >= 8")

    g = merged["grid"]
    need(g["d"] in (1, 2, 3), f"grid.d must be 1, 2 or 3, got {g['d']!r}")
    n = g["n"]
    if not (isinstance(n, int) and not isinstance(n, bool)):
        errors.append(f"grid.n must be an integer, got {n!r}")
    else:
        need(n >= 4 and n & (n - 1) == 0, f"grid.n = {n}: n must be a power of two (and >= 4)")
    L = numeric("grid", "L")
    if L is not None:
        need(L > 0, f"grid.L = {L:g} violates L > 0")
    try:
        BC.parse(g["bc"])
    except Exception:
        errors.append(f"grid.bc must be 'periodic' or 'zero_flux', got {g['bc']!r}")

    for key in ("T", "eps", "picard_tol", "tol"):
        v = numeric("time", key)
        if v is not None:
            need(v > 0, f"time.{key} = {v:g} violates {key} > 0")
    numeric("time", "t0")

    s = merged["source"]
    need(s["kind"] in SOURCE_KINDS, f"source.kind must be one of {SOURCE_KINDS}, got {s['kind']!r}")
    numeric("source", "rate")
    i = merged["initial"]
    need(i.get("kind") in INITIAL_KINDS, f"initial.kind must be one of {INITIAL_KINDS}, got {i.get('kind')!r}")
    if i.get("kind") == "barenblatt":
        need(float(i.get("t0", 1.0)) > 0, "initial.t0 must be positive for a Barenblatt profile")

    o = merged["outputs"]
    need(isinstance(o["snapshot_stride"], int) and o["snapshot_stride"] >= 1,
         "outputs.snapshot_stride must be a positive integer")
    need(isinstance(merged["seeds"]["seed"], int), "seeds.seed must be an integer")
    v = merged["verify"]
    bad = [x for x in v["suites"] if x not in SUITES]
    need(not bad, f"verify.suites has unknown entries {bad}; choose from {SUITES}")
    need(isinstance(v["trials"], int) and v["trials"] >= 1, "verify.trials must be a positive integer")
    r = merged["regularity"]
    need(_num(r["p"]) and r["p"] >= 1, "regularity.p must be >= 1")
    need(all(_num(x) and 0 <= x < 1 for x in r["sigma_t"]), "regularity.sigma_t entries must lie in [0, 1)")
    need(all(_num(x) and x > 0 for x in r["sigma_x"]), "regularity.sigma_x entries must be positive")
    need(isinstance(r["levels"], int) and r["levels"] >= 2, "regularity.levels must be an integer >= 2")
    kin = merged["kinetic"]
    need(isinstance(kin["k"], int) and kin["k"] >= 1, "kinetic.k must be a positive integer")
    need(isinstance(kin["bins"], int) and kin["bins"] >= 2, "kinetic.bins must be an integer >= 2")
    need(all(isinstance(k, int) and k >= 1 for k in merged["sweep"]["ks"]), "sweep.ks must be positive integers")

    if errors:
        raise ValidationError(errors)
    return RunConfig(**merged, path=str(path), raw=copy.deepcopy(raw))
