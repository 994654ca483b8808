"""Seeded Monte Carlo and quadrature experiments.

Each sample i draws from ``numpy.random.default_rng([master_seed, i])`` so a
sample's randomness does not depend on how the work is scheduled.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .cartan import Dims, SigmaSlice, gamma_points, tM_in_cone
from .dani import LogPower, PsiSpec, psi_from_dict
from .errors import DomainError, ResourceError
from .lattice import T_critical, certify_amgm, delta_below, minkowski_point, volume_threshold
from .probe import PROBE_BUDGET, additive_profile, mult_profile


@dataclass(frozen=True)
class SweepConfig:
    dims: Dims
    psi: Optional[PsiSpec] = None
    t_grid: tuple[float, ...] = ()
    N: int = 100
    master_seed: int = 0
    sigma: float = 0.2
    epsilon: float = 0.2
    band_R: float = 0.5
    quadrature_points: int = 32
    quadrature: str = "midpoint"
    budget: int = PROBE_BUDGET
    workers: int = 1

    def __post_init__(self):
        grid = tuple(float(t) for t in self.t_grid)
        object.__setattr__(self, "t_grid", grid)
        if self.N < 0:
            raise DomainError("sample count must be non-negative")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise DomainError("t_grid must be strictly increasing")
        if self.quadrature not in ("midpoint", "sobol"):
            raise DomainError(f"unknown quadrature {self.quadrature!r}")

    @property
    def T_grid(self) -> list[float]:
        return [math.exp(t) for t in self.t_grid]

    def to_dict(self) -> dict:
        return {
            "m": self.dims.m, "n": self.dims.n,
            "psi": None if self.psi is None else self.psi.to_dict(),
            "t_grid": list(self.t_grid), "N": self.N, "master_seed": self.master_seed,
            "sigma": self.sigma, "epsilon": self.epsilon, "band_R": self.band_R,
            "quadrature_points": self.quadrature_points, "quadrature": self.quadrature,
            "budget": self.budget,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        d = dict(d)
        dims = Dims(int(d.pop("m")), int(d.pop("n")))
        psi = d.pop("psi", None)
        return cls(dims, None if psi is None else psi_from_dict(psi), tuple(d.pop("t_grid", ())), **d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    columns: list[str]
    rows: list[dict]
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "config": self.config, "columns": self.columns,
                "rows": self.rows, "summary": self.summary}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(d["experiment"], d["config"], list(d["columns"]), list(d["rows"]), dict(d.get("summary", {})))


def sample_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(master_seed), int(index)])


def sample_Y(config: SweepConfig, index: int) -> np.ndarray:
    return sample_rng(config.master_seed, index).random((config.dims.m, config.dims.n))


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def wilson(k: int, n: int) -> tuple[float, float]:
    if n == 0:
        return (math.nan, math.nan)
    ci = stats.binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def _log_psi_grid(config: SweepConfig) -> np.ndarray:
    if config.psi is None:
        raise DomainError("this experiment needs psi")
    return np.array([config.psi.log_at_log(t) for t in config.t_grid])


@lru_cache(maxsize=16)
def _profiles(dims: Dims, master_seed: int, N: int, t_grid: tuple, budget: int, kind: str, workers: int):
    """Per-sample best log left-hand side at every grid T; NaN marks a budget abort."""
    T_grid = [math.exp(t) for t in t_grid]
    cfg = SweepConfig(dims, None, t_grid, N, master_seed, budget=budget)
    make = mult_profile if kind == "mult" else additive_profile

    def one(i):
        try:
            prof = make(sample_Y(cfg, i), T_grid[-1], budget)
        except ResourceError:
            return [math.nan] * len(T_grid)
        return [prof.at(T) for T in T_grid]

    out = np.array(_map(one, range(N), workers), dtype=float).reshape(N, len(T_grid))
    out.setflags(write=False)
    return out


def success_matrix(config: SweepConfig, kind: str = "mult") -> tuple[np.ndarray, np.ndarray]:
    """(success, error) boolean arrays of shape (N, grid) for S^x or S."""
    if not config.t_grid:
        raise DomainError("t_grid is empty")
    best = _profiles(config.dims, config.master_seed, config.N, config.t_grid, config.budget, kind, config.workers)
    err = np.isnan(best)
    with np.errstate(invalid="ignore"):
        ok = best < _log_psi_grid(config)[None, :]
    return ok & ~err, err


def _fraction_rows(config: SweepConfig, ok: np.ndarray, err: np.ndarray) -> list[dict]:
    rows = []
    for g, t in enumerate(config.t_grid):
        valid = int((~err[:, g]).sum())
        k = int(ok[:, g].sum())
        lo, hi = wilson(k, valid)
        rows.append({"t": t, "T": math.exp(t), "hits": k, "valid": valid, "errors": int(err[:, g].sum()),
                     "fraction": k / valid if valid else math.nan, "ci_low": lo, "ci_high": hi})
    return rows


FRACTION_COLUMNS = ["t", "T", "hits", "valid", "errors", "fraction", "ci_low", "ci_high"]


def measure_S_mult(config: SweepConfig) -> ExperimentReport:
    """Empirical Lebesgue measure of S^x(psi, T) on [0,1)^{mn} at each grid T."""
    if config.N == 0:
        return ExperimentReport("measure-sweep", config.to_dict(), FRACTION_COLUMNS, [])
    ok, err = success_matrix(config, "mult")
    return ExperimentReport("measure-sweep", config.to_dict(), FRACTION_COLUMNS, _fraction_rows(config, ok, err))


def measure_S_additive(config: SweepConfig) -> ExperimentReport:
    if config.N == 0:
        return ExperimentReport("additive-sweep", config.to_dict(), FRACTION_COLUMNS, [])
    ok, err = success_matrix(config, "add")
    return ExperimentReport("additive-sweep", config.to_dict(), FRACTION_COLUMNS, _fraction_rows(config, ok, err))


def measure_uniform_intersection(config: SweepConfig) -> ExperimentReport:
    """Fraction of samples in S^x(psi, T) for every grid T >= T0, as T0 varies."""
    cols = ["t0", "T0", "hits", "valid", "fraction", "ci_low", "ci_high"]
    if config.N == 0:
        return ExperimentReport("intersection-sweep", config.to_dict(), cols, [])
    ok, err = success_matrix(config, "mult")
    rows = []
    G = len(config.t_grid)
    for g in range(G):
        bad = err[:, g:].any(axis=1)
        allok = ok[:, g:].all(axis=1) & ~bad
        valid = int((~bad).sum())
        k = int(allok.sum())
        lo, hi = wilson(k, valid)
        rows.append({"t0": config.t_grid[g], "T0": math.exp(config.t_grid[g]), "hits": k, "valid": valid,
                     "fraction": k / valid if valid else math.nan, "ci_low": lo, "ci_high": hi})
    return ExperimentReport("intersection-sweep", config.to_dict(), cols, rows,
                            {"semantics": "finite-grid proxy for the liminf set"})


def product_volume(m: int, eps: float) -> float:
    """Lebesgue measure of {u in [-1/2, 1/2]^m : prod |u_i| < eps}."""
    if eps >= 2.0**-m:
        return 1.0
    L = math.log(2.0**-m / eps)
    return 2**m * eps * sum(L**k / math.factorial(k) for k in range(m))


def covering_decay_fit(config: SweepConfig) -> ExperimentReport:
    """Least-squares slope of log measure(S^x) against log log T, with the union bound."""
    if not isinstance(config.psi, LogPower):
        raise DomainError("covering decay needs a log-power psi")
    lam = config.psi.lam
    m, n = config.dims.m, config.dims.n
    predicted = m + n - 2 - lam
    report = measure_S_mult(config)
    rows = []
    for row in report.rows:
        t = row["t"]
        eps = math.exp(config.psi.log_at_log(t))
        count = _region_count(n, math.exp(t))
        vol = product_volume(m, eps)
        closed = 2**m * eps * (math.log(2.0**-m / eps) ** (m - 1) + 1) if m == 2 else math.nan
        rows.append(dict(row, log_t=math.log(t), union_bound=min(1.0, count * vol), volume_formula=closed,
                         volume_exact=vol))
    pts = [(r["log_t"], math.log(r["fraction"])) for r in rows if r["fraction"] and r["fraction"] > 0]
    if len(pts) < 3:
        raise DomainError("fit needs at least three grid points with a positive fraction")
    x, y = np.array(pts).T
    fit = stats.linregress(x, y)
    summary = {"lambda": lam, "slope": float(fit.slope), "intercept": float(fit.intercept),
               "slope_stderr": float(fit.stderr), "predicted_slope": predicted, "points": len(pts)}
    cols = FRACTION_COLUMNS + ["log_t", "union_bound", "volume_formula", "volume_exact"]
    return ExperimentReport("covering-decay", config.to_dict(), cols, rows, summary)


def _region_count(n: int, T: float) -> int:
    """Number of canonical nonzero q with Pi_+(q) < T."""
    if n == 1:
        return max(0, math.ceil(T) - 1)
    from .probe import product_region
    return len(product_region(n, T, 10**8))


@dataclass(frozen=True)
class Band:
    """Half-open window lower <= delta < upper."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (0 <= self.lower < self.upper):
            raise DomainError(f"band must satisfy 0 <= lower < upper, got [{self.lower}, {self.upper})")

    def contains(self, delta: float) -> bool:
        return self.lower <= delta < self.upper


@dataclass(frozen=True)
class CuspBand(Band):
    """The cusp annulus e^{-R-1} <= delta < e^{-R}."""

    R_at_t: float = 0.0

    @classmethod
    def at(cls, R_at_t: float) -> "CuspBand":
        return cls(math.exp(-R_at_t - 1.0), math.exp(-R_at_t), R_at_t)


def quadrature_nodes(slice_: SigmaSlice, points: int, method: str = "midpoint", seed: int = 0) -> np.ndarray:
    """Nodes in J: a tensor midpoint grid or scrambled Sobol points, filtered to J."""
    k = slice_.k
    if k == 0:
        return np.zeros((1, 0))
    lo, hi = slice_.sigma, 1.0 - slice_.sigma
    if method == "midpoint":
        per_axis = max(1, int(round(points ** (1.0 / k))))
        axis = lo + (hi - lo) * (np.arange(per_axis) + 0.5) / per_axis
        nodes = np.stack(np.meshgrid(*([axis] * k), indexing="ij"), axis=-1).reshape(-1, k)
    elif method == "sobol":
        sob = stats.qmc.Sobol(d=k, scramble=True, seed=seed)
        nodes = lo + (hi - lo) * sob.random(points)
    else:
        raise DomainError(f"unknown quadrature {method!r}")
    keep = np.array([slice_.contains_chart_point(s) for s in nodes])
    return nodes[keep]


def equi_average(Y, t: float, slice_: SigmaSlice, band, quadrature_points: int = 32,
                 method: str = "midpoint", seed: int = 0, budget: int = 10**9) -> float:
    """Average over t.M_sigma of the indicator that delta(a.x_Y) falls in the band."""
    if isinstance(band, CuspBand) and not tM_in_cone(slice_, t, band.R_at_t):
        raise DomainError(f"t M_sigma is not inside the cone at t={t}, R={band.R_at_t}")
    nodes = quadrature_nodes(slice_, quadrature_points, method, seed)
    A = gamma_points(slice_.dims, nodes) * t
    hits = 0
    for a in A:
        if delta_below(Y, a, band.upper, budget) is None:
            continue
        if band.lower <= 0 or delta_below(Y, a, band.lower, budget) is None:
            hits += 1
    return hits / len(A)


def moment_decay(config: SweepConfig, h: int) -> ExperimentReport:
    """Empirical h-th central moment of equi_average across samples, per grid t."""
    if h not in (2, 4):
        raise DomainError("h must be 2 or 4")
    if config.N < 100:
        raise DomainError("moment decay needs at least 100 samples")
    slice_ = SigmaSlice(config.dims, config.sigma)
    band = CuspBand.at(config.band_R)
    rows = []
    for t in config.t_grid:
        def one(i, t=t):
            return equi_average(sample_Y(config, i), t, slice_, band, config.quadrature_points,
                                config.quadrature, config.master_seed)
        vals = np.array(_map(one, range(config.N), config.workers))
        mean = float(vals.mean())
        rows.append({"t": t, "mean": mean, "moment": float(np.mean((vals - mean) ** h)), "samples": config.N})
    flags = [rows[i + 1]["t"] for i in range(len(rows) - 1) if rows[i + 1]["moment"] >= rows[i]["moment"]]
    return ExperimentReport("moment-decay", config.to_dict(), ["t", "mean", "moment", "samples"], rows,
                            {"h": h, "non_decreasing_at": flags})


def default_T_grid(dims: Dims, c: float, points: int = 5, top: float = 1e4) -> list[float]:
    Tc = T_critical(dims, c)
    return [float(x) for x in np.geomspace(2 * Tc, top, points)]


def dno_sweep(dims: Dims, c_grid: Sequence[float], T_grid: Sequence[float], N: int, master_seed: int = 0,
              workers: int = 1) -> ExperimentReport:
    """Minkowski point plus AM-GM certificate for N random Y in every (c, T) cell."""
    thr = volume_threshold(dims)
    for c in c_grid:
        if not c > thr:
            raise DomainError(f"c={c} does not exceed the threshold {thr}")
        for T in T_grid:
            if not T > T_critical(dims, c):
                raise DomainError(f"T={T} does not exceed T_c={T_critical(dims, c)}")
    rows = []
    for c in c_grid:
        for T in T_grid:
            def one(i, c=c, T=T):
                Y = sample_rng(master_seed, i).random((dims.m, dims.n))
                cert = minkowski_point(Y, T, c)
                return certify_amgm(cert, T, c)
            checks = _map(one, range(N), workers)
            good = sum(1 for ch in checks if ch)
            failed = sorted({ch.failed_link for ch in checks if not ch})
            rows.append({"c": c, "T": T, "samples": N, "successes": good,
                         "rate": good / N if N else math.nan, "failed_links": ";".join(failed)})
    cfg = {"m": dims.m, "n": dims.n, "c_grid": list(c_grid), "T_grid": list(T_grid), "N": N,
           "master_seed": master_seed}
    return ExperimentReport("dno-sweep", cfg, ["c", "T", "samples", "successes", "rate", "failed_links"], rows)


def cusp_sweep(config: SweepConfig, method: str = "exact") -> ExperimentReport:
    """Fraction of samples whose orbit t.E_1.x_Y meets delta < epsilon, per grid t."""
    from .probe import cusp_hit

    rows = []
    for t in config.t_grid:
        def one(i, t=t):
            try:
                return cusp_hit(sample_Y(config, i), t, config.epsilon, sigma=config.sigma, method=method,
                                budget=config.budget) is not None
            except ResourceError:
                return None
        res = _map(one, range(config.N), config.workers)
        valid = [r for r in res if r is not None]
        k = sum(valid)
        lo, hi = wilson(k, len(valid))
        rows.append({"t": t, "hits": k, "valid": len(valid), "fraction": k / len(valid) if valid else math.nan,
                     "ci_low": lo, "ci_high": hi})
    return ExperimentReport("cusp-hit", config.to_dict(), ["t", "hits", "valid", "fraction", "ci_low", "ci_high"],
                            rows)

