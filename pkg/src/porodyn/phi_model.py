"""Maximal monotone diffusion profiles ``phi`` on an open interval ``I`` containing 0.

Three kinds are supported:

* ``biofilm``: ``D(z) = |z|^b / (1 - |z|)^a`` on ``I = (-1, 1)``.
* ``pme``: ``phi(u) = |u|^(m-1) u`` on the real line.
* ``tabulated``: ``D`` given on increasing nodes, linearly interpolated and held
  constant outside the nodes.  ``phi`` and ``Phi`` are the exact integrals of
  that interpolant, so ``phi' == D`` and ``Phi'' == D >= 0`` hold identically.

For every model ``phi(0) = 0``, ``Phi`` is the primitive of ``phi`` vanishing
at 0 and ``beta`` is the inverse of ``phi``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import ConfigError, DomainError, RangeError

ENDPOINT_GUARD = 1e-14

BIOFILM = "biofilm"
PME = "pme"
TABULATED = "tabulated"

_SERIES_TERMS = 72
_BINOMIAL_TERMS = 64


def _series_coefficients(a, b, n_terms, order):
    """Coefficients of the power series of the order-fold primitive of D.

    ``(1 - z)^-a = sum_j (a)_j / j! z^j`` so ``D`` integrated ``order`` times from
    0 is ``sum_j c_j z^(b + order + j)``.
    """
    j = np.arange(n_terms, dtype=float)
    c = special.poch(a, j) / special.factorial(j)
    for q in range(1, order + 1):
        c = c / (b + q + j)
    return c


def _horner(coef, x):
    acc = np.zeros_like(x)
    for c in coef[::-1]:
        acc = acc * x + c
    return acc


@dataclass(frozen=True, eq=False)
class Table:
    """Piecewise linear ``D`` on nodes ``x`` with the exact ``phi`` and ``Phi``."""

    x: np.ndarray
    D: np.ndarray
    phi: np.ndarray
    Phi: np.ndarray
    slope: np.ndarray

    @classmethod
    def from_D(cls, x, D) -> "Table":
        x = np.asarray(x, dtype=float)
        D = np.asarray(D, dtype=float)
        if x.ndim != 1 or x.shape != D.shape or x.size < 2:
            raise ConfigError("table nodes and values must be 1d arrays of equal length >= 2")
        if np.any(np.diff(x) <= 0):
            raise ConfigError("table nodes must be strictly increasing")
        if np.any(D < 0) or not np.all(np.isfinite(D)):
            raise ConfigError("tabulated D must be finite and nonnegative")
        if not (x[0] < 0.0 < x[-1]):
            raise ConfigError("table must straddle 0")
        if not np.any(x == 0.0):
            i = np.searchsorted(x, 0.0)
            d0 = np.interp(0.0, x, D)
            x = np.insert(x, i, 0.0)
            D = np.insert(D, i, d0)
        i0 = int(np.flatnonzero(x == 0.0)[0])
        dx = np.diff(x)
        slope = np.diff(D) / dx
        cell_phi = dx * (D[:-1] + D[1:]) / 2.0
        phi = np.zeros_like(x)
        phi[i0 + 1:] = np.cumsum(cell_phi[i0:])
        phi[:i0] = -np.cumsum(cell_phi[:i0][::-1])[::-1]
        cell_Phi = phi[:-1] * dx + D[:-1] * dx**2 / 2.0 + slope * dx**3 / 6.0
        Phi = np.zeros_like(x)
        Phi[i0 + 1:] = np.cumsum(cell_Phi[i0:])
        Phi[:i0] = -np.cumsum(cell_Phi[:i0][::-1])[::-1]
        for arr in (x, D, phi, Phi, slope):
            arr.setflags(write=False)
        return cls(x=x, D=D, phi=phi, Phi=Phi, slope=slope)

    def _base(self, r, nodes):
        n = nodes.size
        j = np.searchsorted(nodes, r, side="right") - 1
        left = j < 0
        jb = np.clip(j, 0, n - 1)
        sl = np.where(left | (jb == n - 1), 0.0, self.slope[np.minimum(jb, n - 2)])
        return jb, sl

    def eval(self, r):
        r = np.asarray(r, dtype=float)
        jb, sl = self._base(r, self.x)
        s = r - self.x[jb]
        D = self.D[jb] + sl * s
        phi = self.phi[jb] + s * (self.D[jb] + sl * s / 2.0)
        Phi = self.Phi[jb] + s * (self.phi[jb] + s * (self.D[jb] / 2.0 + sl * s / 6.0))
        return D, phi, Phi

    def inverse(self, w):
        w = np.asarray(w, dtype=float)
        jb, sl = self._base(w, self.phi)
        c = w - self.phi[jb]
        Dj = self.D[jb]
        disc = np.sqrt(np.maximum(Dj * Dj + 2.0 * sl * c, 0.0))
        den = Dj + disc
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(den > 0, 2.0 * c / np.where(den > 0, den, 1.0), 0.0)
        return self.x[jb] + s

    def scalar(self, r):
        """(D, phi) at a Python float without numpy overhead."""
        x = self.x
        n = x.size
        j = bisect.bisect_right(x, r) - 1
        if j < 0:
            j, sl = 0, 0.0
        elif j >= n - 1:
            j, sl = n - 1, 0.0
        else:
            sl = float(self.slope[j])
        s = r - float(x[j])
        Dj = float(self.D[j])
        return Dj + sl * s, float(self.phi[j]) + s * (Dj + sl * s / 2.0)


@dataclass(frozen=True, eq=False)
class PhiModel:
    """Immutable description of a diffusion profile; see the module docstring."""

    kind: str
    lo: float
    hi: float
    a: float = math.nan
    b: float = math.nan
    m: float = math.nan
    table: Table | None = None
    smooth: bool = False
    k: int | None = None
    label: str = ""

    # ------------------------------------------------------------------ constructors
    @classmethod
    def biofilm(cls, a: float = 1.0, b: float = 1.0) -> "PhiModel":
        if not a >= 1.0:
            raise ConfigError(f"biofilm model needs a >= 1, got a={a}")
        if not b > 0.0:
            raise ConfigError(f"biofilm model needs b > 0, got b={b}")
        return cls(kind=BIOFILM, lo=-1.0, hi=1.0, a=float(a), b=float(b),
                   label=f"biofilm(a={a:g}, b={b:g})")

    @classmethod
    def pme(cls, m: float = 2.0) -> "PhiModel":
        if not m > 1.0:
            raise ConfigError(f"PME model needs m > 1, got m={m}")
        return cls(kind=PME, lo=-math.inf, hi=math.inf, m=float(m), label=f"pme(m={m:g})")

    @classmethod
    def tabulated(cls, x, D, *, smooth=False, k=None, label="tabulated") -> "PhiModel":
        return cls(kind=TABULATED, lo=-math.inf, hi=math.inf, table=Table.from_D(x, D),
                   smooth=smooth, k=k, label=label)

    @classmethod
    def linear(cls, c: float = 1.0) -> "PhiModel":
        """``phi(u) = c u``, the heat equation."""
        if not c > 0:
            raise ConfigError("linear diffusivity must be positive")
        return cls.tabulated([-1.0, 1.0], [c, c], smooth=True, label=f"linear(c={c:g})")

    # ------------------------------------------------------------------ metadata
    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lo) or math.isfinite(self.hi)

    @property
    def symmetric(self) -> bool:
        return self.kind in (BIOFILM, PME)

    @property
    def margin(self) -> float:
        """Clamp distance kept from finite endpoints by the solvers."""
        if math.isfinite(self.lo) and math.isfinite(self.hi):
            return 1e-12 * (self.hi - self.lo)
        return 0.0

    @property
    def _integer_b(self) -> bool:
        return self.kind == BIOFILM and float(self.b).is_integer()

    def clamp(self, u):
        """Clip values into ``[lo + margin, hi - margin]``."""
        if not self.bounded:
            return u
        return np.clip(u, self.lo + self.margin, self.hi - self.margin)

    def check_domain(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if not np.all(np.isfinite(r)):
            raise DomainError("non-finite argument")
        if math.isfinite(self.hi) and np.any(r > self.hi - ENDPOINT_GUARD):
            raise DomainError(f"argument {float(np.max(r))!r} not inside I=({self.lo}, {self.hi})")
        if math.isfinite(self.lo) and np.any(r < self.lo + ENDPOINT_GUARD):
            raise DomainError(f"argument {float(np.min(r))!r} not inside I=({self.lo}, {self.hi})")
        return r

    # ------------------------------------------------------------------ evaluations
    def D(self, z):
        z = self.check_domain(z)
        if self.kind == BIOFILM:
            az = np.abs(z)
            return az**self.b / (1.0 - az) ** self.a
        if self.kind == PME:
            return self.m * np.abs(z) ** (self.m - 1.0)
        return self.table.eval(z)[0]

    def phi(self, r):
        r = self.check_domain(r)
        if self.kind == BIOFILM:
            return np.sign(r) * self._bf_primitive(np.abs(r), self.b, 1)
        if self.kind == PME:
            return np.abs(r) ** (self.m - 1.0) * r
        return self.table.eval(r)[1]

    def Phi(self, r):
        r = self.check_domain(r)
        if self.kind == BIOFILM:
            ar = np.abs(r)
            return self._bf_primitive(ar, self.b, 2)
        if self.kind == PME:
            return np.abs(r) ** (self.m + 1.0) / (self.m + 1.0)
        return self.table.eval(r)[2]

    def beta(self, w):
        w = np.asarray(w, dtype=float)
        if not np.all(np.isfinite(w)):
            raise RangeError("non-finite argument to beta")
        if self.kind == PME:
            return np.sign(w) * np.abs(w) ** (1.0 / self.m)
        if self.kind == TABULATED:
            return self.table.inverse(w)
        return np.sign(w) * self._bf_inverse(np.abs(w))

    def scalar(self, r: float):
        """Return ``(D(r), phi(r))`` for a float, used by the cellwise solver."""
        if self.kind == TABULATED:
            return self.table.scalar(r)
        if self.kind == PME:
            ar = abs(r)
            p = ar ** (self.m - 1.0)
            return self.m * p, p * r
        if not self._integer_b:
            return float(self.D(r)), float(self.phi(r))
        ar = abs(r)
        D = ar**self.b / (1.0 - ar) ** self.a
        if ar < 0.1:
            coef = self._coef(self.b, 1)
            acc = 0.0
            for c in coef[::-1]:
                acc = acc * ar + c
            val = acc * ar ** (self.b + 1.0)
        else:
            val = self._bf_closed_scalar(ar, self.b)
        return D, math.copysign(val, r)

    # ------------------------------------------------------------------ biofilm internals
    def _coef(self, b, order):
        cache = self.__dict__.setdefault("_coef_cache", {})
        key = (b, order)
        if key not in cache:
            # 0.1^24 and 0.5^72 are far below rounding for the two series cut-offs
            terms = 24 if float(self.b).is_integer() else _SERIES_TERMS
            cache[key] = _series_coefficients(self.a, b, terms, order)
        return cache[key]

    def _bf_closed_scalar(self, rho, b):
        # int_0^rho z^b (1-z)^-a dz with y = 1 - z, expanded binomially; b integer.
        a = self.a
        l1 = math.log1p(-rho)
        total = 0.0
        for k in range(int(b) + 1):
            e = k - a + 1.0
            t = -l1 if e == 0.0 else -math.expm1(e * l1) / e
            total += math.comb(int(b), k) * (-1) ** k * t
        return total

    def _bf_closed(self, rho, b):
        a = self.a
        l1 = np.log1p(-rho)
        total = np.zeros_like(rho)
        for k in range(int(b) + 1):
            e = k - a + 1.0
            t = -l1 if e == 0.0 else -np.expm1(e * l1) / e
            total += math.comb(int(b), k) * (-1) ** k * t
        return total

    def _bf_phi_generic(self, rho, b):
        """Primitive of ``z^b (1-z)^-a`` for non-integer ``b`` and ``rho >= 1/2``.

        The series value at ``1/2`` plus ``int_{1-rho}^{1/2} (1-y)^b y^-a dy`` with
        ``(1-y)^b`` expanded binomially (ratio at most 1/2) and each power
        integrated exactly.
        """
        a = self.a
        total = np.full_like(rho, float(_horner(self._coef(b, 1), 0.5) * 0.5 ** (b + 1.0)))
        log_y1 = np.log1p(-rho)
        span = math.log(0.5) - log_y1
        c = 1.0
        for k in range(_BINOMIAL_TERMS):
            e = k - a + 1.0
            if e == 0.0:
                piece = span
            elif e <= 1.0:
                piece = np.exp(e * log_y1) * np.expm1(e * span) / e
            else:
                piece = (0.5**e - np.exp(e * log_y1)) / e
            total += c * piece
            c *= (k - b) / (k + 1.0)
        return total

    def _bf_primitive(self, rho, b, order):
        """``order`` = 1 gives ``phi``, 2 gives ``Phi``; ``rho`` >= 0."""
        rho = np.asarray(rho, dtype=float)
        integer = float(b).is_integer()
        cut = 0.1 if integer else 0.5
        out = np.empty_like(rho)
        small = rho < cut
        if np.any(small):
            rs = rho[small]
            out[small] = _horner(self._coef(b, order), rs) * rs ** (b + order)
        big = ~small
        if np.any(big):
            rb = rho[big]
            prim = self._bf_closed if integer else self._bf_phi_generic
            if order == 1:
                out[big] = prim(rb, b)
            else:
                # Phi(r) = r phi(r) - int_0^r z D(z) dz
                out[big] = rb * prim(rb, b) - prim(rb, b + 1.0)
        return out

    def _bf_inverse(self, w):
        """Solve ``phi(rho) = w`` for ``rho`` in ``[0, 1)``, ``w >= 0``; safeguarded Newton."""
        w = np.asarray(w, dtype=float)
        out = np.zeros_like(w)
        pos = w > 0
        if not np.any(pos):
            return out
        target = w[pos]
        top = 1.0 - 2.0 * ENDPOINT_GUARD
        lo = np.zeros_like(target)
        hi = np.full_like(target, top)
        phi_top = float(self._bf_primitive(np.array([top]), self.b, 1)[0])
        sat = target >= phi_top
        # initial guess from the small-argument asymptote phi ~ rho^(b+1)/(b+1)
        x = np.minimum(((self.b + 1.0) * target) ** (1.0 / (self.b + 1.0)), 0.5)
        for _ in range(200):
            f = self._bf_primitive(x, self.b, 1) - target
            lo = np.where(f < 0, x, lo)
            hi = np.where(f > 0, x, hi)
            d = x**self.b / (1.0 - x) ** self.a
            with np.errstate(divide="ignore", invalid="ignore"):
                xn = x - f / d
            bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
            xn = np.where(bad, 0.5 * (lo + hi), xn)
            done = np.abs(xn - x) <= 4e-16 * np.maximum(xn, 1e-300)
            x = xn
            if np.all(done | sat):
                break
        x = np.where(sat, top, x)
        out[pos] = x
        return out


# ---------------------------------------------------------------------- module-level API
def eval_D(model: PhiModel, z):
    return model.D(z)


def eval_phi(model: PhiModel, rho):
    return model.phi(rho)


def eval_Phi(model: PhiModel, rho):
    return model.Phi(rho)


def eval_beta(model: PhiModel, w):
    return model.beta(w)


def check_growth_alpha(model: PhiModel, alpha: float, J, n_samples: int = 10_000):
    """Sampled constant ``C_J`` in ``|phi(r)| <= C_J |r|^alpha`` on the compact ``J``.

    Returns ``(holds, C_J)``.  When ``0`` lies in ``J`` half of the samples are
    log-spaced towards 0; a power-law blow-up of the ratio there (log-log slope
    below -0.01 over the innermost six decades) means the constant is infinite.
    """
    j0, j1 = float(J[0]), float(J[1])
    width = j1 - j0
    if 0.0 <= j0 or j1 <= 0.0:
        r = np.linspace(j0, j1, n_samples)
        r = r[r != 0.0]
        ratio = np.exp(np.log(np.abs(model.phi(r))) - alpha * np.log(np.abs(r)))
        return True, float(np.max(ratio))
    n_uni = n_samples // 2
    n_side = (n_samples - n_uni) // 2
    mags = np.logspace(np.log10(width) - 12.0, np.log10(width) - 1.0, n_side)
    r = np.concatenate([np.linspace(j0, j1, n_uni), -mags[mags < -j0], mags[mags < j1]])
    r = r[r != 0.0]
    with np.errstate(divide="ignore"):
        log_ratio = np.log(np.abs(model.phi(r))) - alpha * np.log(np.abs(r))
    C = float(np.exp(np.max(log_ratio)))
    inner = (np.abs(r) <= width * 1e-6) & np.isfinite(log_ratio)
    slope = np.polyfit(np.log(np.abs(r[inner])), log_ratio[inner], 1)[0]
    if slope < -0.01 or not np.isfinite(C):
        return False, math.inf
    return True, C


_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def check_divergence_condition(model_or_beta, d: int, R: float = 1.0, budget: int = 60) -> bool:
    """Whether ``int_R^inf rho^(d-1) beta(+-1/rho^(d-2)) d rho`` diverges for both signs.

    Partial integrals over ``[R, 2^j R]`` are accumulated doubling by doubling;
    the integral is declared divergent when the last doubling still adds more
    than 1e-3 of the running total.
    """
    if d < 3:
        raise ValueError("divergence condition is only meaningful for d >= 3")
    beta = model_or_beta.beta if isinstance(model_or_beta, PhiModel) else model_or_beta
    s = 0.5 * np.log(2.0) * (_GL_X + 1.0)
    ws = 0.5 * np.log(2.0) * _GL_W
    verdicts = []
    for sign in (1.0, -1.0):
        total = 0.0
        last = 0.0
        for j in range(1, budget + 1):
            rho = R * 2.0 ** (j - 1) * np.exp(s)
            vals = rho ** (d - 1) * sign * np.asarray(beta(sign / rho ** (d - 2)), dtype=float)
            last = float(np.sum(ws * vals * rho))
            total += last
        verdicts.append(total > 0 and last / total > 1e-3)
    return all(verdicts)


# ---------------------------------------------------------------------- smooth approximations
def bump(x):
    """Unnormalized bump ``exp(-1/(1-x^2))`` on ``(-1, 1)``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (1.0 - xi * xi))
    return out


BUMP_MASS = integrate.quad(lambda t: math.exp(-1.0 / (1.0 - t * t)), -1.0, 1.0,
                           epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def mollifier(x):
    """Normalized bump: nonnegative, supported in [-1, 1], unit integral."""
    return bump(x) / BUMP_MASS


@dataclass(frozen=True)
class SmoothApproxParams:
    k: int
    interval: tuple[float, float]
    mollifier: Callable = mollifier
    nodes_per_radius: int = 64

    @property
    def radius(self) -> float:
        """Support radius of the scaled mollifier ``2^k eta(2^k .)``."""
        return 2.0 ** (-self.k)

    @classmethod
    def for_model(cls, model: PhiModel, k: int, **kw) -> "SmoothApproxParams":
        if k < 1:
            raise ConfigError("approximation index k must be >= 1")
        f = 2.0 ** (-k)
        ak = model.lo * (1.0 - f) if math.isfinite(model.lo) else -(2.0**k)
        bk = model.hi * (1.0 - f) if math.isfinite(model.hi) else 2.0**k
        return cls(k=k, interval=(ak, bk), **kw)


def _approx_nodes(ak, bk, r, per_radius):
    fine = r / (2 * per_radius)
    base = max(r / (per_radius // 4), (bk - ak) / 2**15)
    pieces = [np.arange(ak - r, bk + r, base), [bk + r, 0.0]]
    for c in (ak, bk, 0.0):
        pieces.append(np.arange(c - 2 * r, c + 2 * r, fine))
    x = np.unique(np.concatenate(pieces))
    return x[(x >= ak - r) & (x <= bk + r)]


def build_smooth_approx(model: PhiModel, params: SmoothApproxParams | int) -> PhiModel:
    """Non-degenerate smooth approximation ``phi_k`` with ``D_k = (2^-k + 1_{I_k} D) * eta_k``.

    The result is a tabulated model on the whole real line with ``D_k >= 2^-k``
    at every table node and ``phi_k(0) = 0``.
    """
    if isinstance(params, int):
        params = SmoothApproxParams.for_model(model, params)
    ak, bk = params.interval
    r = params.radius
    if not (ak < 0.0 < bk):
        raise ConfigError("I_k must contain 0")
    if (math.isfinite(model.hi) and bk + r > model.hi) or (math.isfinite(model.lo) and ak - r < model.lo):
        raise ConfigError("mollifier support overlaps the endpoints of I after scaling")
    x = _approx_nodes(ak, bk, r, params.nodes_per_radius)
    # D_k(x) = 2^-k + int_{-1}^{1} 1_{I_k}(x - r s) D(x - r s) eta(s) ds, split at the kink of D at 0
    s_lo = np.maximum(-1.0, (x - bk) / r)
    s_hi = np.minimum(1.0, (x - ak) / r)
    s_mid = np.clip(x / r, s_lo, s_hi)
    conv = np.zeros_like(x)
    for lo_, hi_ in ((s_lo, s_mid), (s_mid, s_hi)):
        half = 0.5 * np.maximum(hi_ - lo_, 0.0)
        ctr = 0.5 * (hi_ + lo_)
        s = ctr[:, None] + half[:, None] * _GL_X[None, :]
        z = x[:, None] - r * s
        zin = np.clip(z, ak, bk)
        vals = model.D(zin) * params.mollifier(s)
        conv += half * (vals @ _GL_W)
    Dk = 2.0 ** (-params.k) + conv
    return PhiModel.tabulated(x, Dk, smooth=True, k=params.k,
                              label=f"smooth_approx(k={params.k}) of {model.label}")
