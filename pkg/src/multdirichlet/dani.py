"""Dani correspondence between approximating functions psi and cusp radii R.

For a continuous non-increasing psi with values in (0, 1] there is a unique R
with ``psi(exp(t - n R(t))) = exp(-t - m R(t))``.  Everything here works with
``u = log x`` so that huge ``T = e^t`` never has to be formed.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import optimize

from .cartan import Dims
from .errors import DomainError, SolverError

DEFAULT_TOL = 1e-12
MAX_DOUBLINGS = 200


@dataclass(frozen=True)
class HardDirichlet:
    """psi(x) = min(1, c / x)."""

    c: float

    def __post_init__(self):
        object.__setattr__(self, "c", float(self.c))
        if not (self.c > 0 and math.isfinite(self.c)):
            raise DomainError(f"HardDirichlet needs c > 0, got {self.c}")

    def log_at_log(self, u: float) -> float:
        return min(0.0, math.log(self.c) - u)

    def to_dict(self) -> dict:
        return {"kind": "hard", "c": self.c}


@dataclass(frozen=True)
class LogPower:
    """psi(x) = 1/e for x < e, and x^-1 (log x)^-lambda beyond."""

    lam: float

    def __post_init__(self):
        object.__setattr__(self, "lam", float(self.lam))
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise DomainError(f"LogPower needs lambda >= 0, got {self.lam}")

    def log_at_log(self, u: float) -> float:
        if u < 1.0:
            return -1.0
        return -u - self.lam * math.log(u)

    def to_dict(self) -> dict:
        return {"kind": "logpower", "lambda": self.lam}


@dataclass(frozen=True)
class Tabulated:
    """Piecewise-linear in (log x, log psi), flat beyond the table ends.

    Values must lie in (0, 1].  Monotonicity is *not* enforced here so that
    ill-posed tables can be diagnosed by :func:`verify_monotonicity`.
    """

    points: tuple[tuple[float, float], ...]
    _lx: np.ndarray = field(init=False, repr=False, compare=False)
    _lp: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = tuple((float(x), float(p)) for x, p in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 1:
            raise DomainError("a tabulated psi needs at least one point")
        xs = np.array([x for x, _ in pts])
        ps = np.array([p for _, p in pts])
        if np.any(xs <= 0) or np.any(np.diff(xs) <= 0):
            raise DomainError("table abscissae must be positive and strictly increasing")
        if np.any(ps <= 0) or np.any(ps > 1):
            raise DomainError("psi values must lie in (0, 1]; rescale the table")
        object.__setattr__(self, "_lx", np.log(xs))
        object.__setattr__(self, "_lp", np.log(ps))

    def log_at_log(self, u: float) -> float:
        return float(np.interp(u, self._lx, self._lp))

    def to_dict(self) -> dict:
        return {"kind": "table", "points": [list(p) for p in self.points]}


PsiSpec = Union[HardDirichlet, LogPower, Tabulated]


def psi_value(psi: PsiSpec, x: float) -> float:
    if not x > 0:
        raise DomainError("psi is defined on (0, inf)")
    return math.exp(psi.log_at_log(math.log(x)))


def psi_from_dict(d: dict) -> PsiSpec:
    kind = d.get("kind")
    keys = set(d) - {"kind"}
    expected = {"hard": {"c"}, "logpower": {"lambda"}, "table": {"points"}}
    if kind not in expected:
        raise DomainError(f"unknown psi kind {kind!r}")
    if keys != expected[kind]:
        raise DomainError(f"psi of kind {kind!r} takes keys {sorted(expected[kind])}, got {sorted(keys)}")
    if kind == "hard":
        return HardDirichlet(float(d["c"]))
    if kind == "logpower":
        return LogPower(float(d["lambda"]))
    return Tabulated(tuple(tuple(p) for p in d["points"]))


def parse_psi(text: str) -> PsiSpec:
    """Parse the CLI shorthand ``hard:0.5`` / ``logpower:1.5``."""
    kind, _, value = text.partition(":")
    try:
        v = float(value)
    except ValueError:
        raise DomainError(f"cannot parse psi {text!r}") from None
    if kind == "hard":
        return HardDirichlet(v)
    if kind == "logpower":
        return LogPower(v)
    raise DomainError(f"cannot parse psi {text!r}; use hard:<c> or logpower:<lambda>")


def r_hard(dims: Dims, c: float) -> float:
    """The constant radius R_c = log(1/c) / (m+n)."""
    if not c > 0:
        raise DomainError(f"c must be positive, got {c}")
    return -math.log(c) / dims.total


def _bisect(f, lo: float, hi: float, tol: float) -> float:
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    return optimize.bisect(f, lo, hi, xtol=tol, maxiter=500)


def solve_R(psi: PsiSpec, dims: Dims, t: float, tol: float = DEFAULT_TOL) -> float:
    """Solve ``log psi(e^{t - nR}) + t + mR = 0`` for R by bracketed bisection."""
    if not t >= 0:
        raise DomainError(f"t must be non-negative, got {t}")
    if not tol > 0:
        raise DomainError("tol must be positive")
    m, n = dims.m, dims.n

    def G(R: float) -> float:
        return psi.log_at_log(t - n * R) + t + m * R

    lo, hi = -1.0, 1.0
    for _ in range(MAX_DOUBLINGS):
        if G(lo) < 0:
            break
        lo = 2 * lo
    else:
        raise SolverError("could not bracket R from below; psi violates the correspondence hypotheses")
    for _ in range(MAX_DOUBLINGS):
        if G(hi) > 0:
            break
        hi = 2 * hi
    else:
        raise SolverError("could not bracket R from above; psi violates the correspondence hypotheses")
    # G has slope at least m; a finer step keeps |G| itself below tol
    return _bisect(G, lo, hi, tol / (16 * dims.total))


def _logpower_root(dims: Dims, lam: float, t: float, tol: float) -> float:
    # (m+n) R = lam * log(t - nR) on [0, t/n); valid for t >= 1
    if lam == 0:
        return 0.0
    m, n = dims.m, dims.n

    def F(R: float) -> float:
        u = t - n * R
        if u <= 0:
            return math.inf
        return (m + n) * R - lam * math.log(u)

    return _bisect(F, 0.0, t / n, tol)


def t_lambda(dims: Dims, lam: float, tol: float = DEFAULT_TOL) -> float:
    """Time after which the log-power branch governs: t - n R_lambda(t) = e."""
    if not lam >= 0:
        raise DomainError("lambda must be non-negative")
    n = dims.n

    def h(t: float) -> float:
        return t - n * _logpower_root(dims, lam, t, tol * 1e-2) - math.e

    lo, hi = math.e, 2 * math.e
    for _ in range(MAX_DOUBLINGS):
        if h(hi) > 0:
            break
        hi *= 2
    else:
        raise SolverError("could not bracket t_lambda")
    return _bisect(h, lo, hi, tol)


def solve_R_logpower(dims: Dims, lam: float, t: float, tol: float = DEFAULT_TOL) -> float:
    tl = t_lambda(dims, lam)
    if t < tl - 1e-12:
        raise DomainError(f"t={t} is below t_lambda={tl:.6g}")
    return _logpower_root(dims, lam, t, tol)


def corr_residual(psi: PsiSpec, dims: Dims, t: float, R: float) -> float:
    """Relative defect |psi(e^{t-nR}) / e^{-t-mR} - 1|."""
    return abs(math.expm1(psi.log_at_log(t - dims.n * R) + t + dims.m * R))


class RFunction:
    """Callable t -> R(t) for a fixed psi with a lock-protected cache."""

    def __init__(self, psi: PsiSpec, dims: Dims, tol: float = DEFAULT_TOL):
        self.psi = psi
        self.dims = dims
        self.tol = tol
        self._cache: dict[float, float] = {}
        self._lock = threading.Lock()

    def __call__(self, t: float) -> float:
        t = float(t)
        with self._lock:
            hit = self._cache.get(t)
        if hit is not None:
            return hit
        R = solve_R(self.psi, self.dims, t, self.tol)
        with self._lock:
            self._cache[t] = R
        return R

    def evaluate(self, t_grid: Sequence[float]) -> np.ndarray:
        return np.array([self(t) for t in t_grid])


@dataclass
class Violation:
    index: int
    t_left: float
    t_right: float
    condition: str
    change: float


@dataclass
class MonotonicityReport:
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def verify_monotonicity(R: RFunction, t_grid: Sequence[float], atol: float = 1e-10) -> MonotonicityReport:
    """Check t - nR strictly increasing and t + mR non-decreasing on a sorted grid."""
    t = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t) <= 0):
        raise DomainError("t_grid must be strictly increasing")
    Rv = R.evaluate(t)
    m, n = R.dims.m, R.dims.n
    du = np.diff(t - n * Rv)
    dw = np.diff(t + m * Rv)
    out = []
    for i in range(len(du)):
        if du[i] <= 0:
            out.append(Violation(i, t[i], t[i + 1], "t - nR strictly increasing", float(du[i])))
        if dw[i] < -atol:
            out.append(Violation(i, t[i], t[i + 1], "t + mR non-decreasing", float(dw[i])))
    return MonotonicityReport(out)
