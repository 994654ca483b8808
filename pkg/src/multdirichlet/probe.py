"""Membership in the sets S(psi, T) and S^x(psi, T), and cusp excursions.

Everything is a finite search.  Grid verdicts describe the grid only; they
are proxies for the liminf/limsup sets and never decide them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .cartan import CartanVector, ConeQuery, Dims, in_cone
from .dani import PsiSpec
from .errors import DomainError, InternalError, ResourceError
from .lattice import (CHUNK, MatrixY, Q_LIMIT, _Split, _log_abs,
                      _canonical_box, as_matrix, delta_below, realized_log_norm)

PROBE_BUDGET = 5 * 10**7


def pi_plus(q: Sequence[int]) -> float:
    """Product of max(1, |q_j|)."""
    out = 1
    for x in q:
        out *= max(1, abs(int(x)))
    return float(out)


@dataclass(frozen=True)
class MembershipCertificate:
    p: tuple[int, ...]
    q: tuple[int, ...]
    additive_lhs: float
    mult_lhs: float
    q_gauge: float
    T: float
    psi_T: float
    kind: str

    def to_json(self) -> dict:
        return {
            "p": list(self.p), "q": list(self.q), "additive_lhs": self.additive_lhs,
            "mult_lhs": self.mult_lhs, "q_gauge": self.q_gauge, "T": self.T,
            "psi_T": self.psi_T, "kind": self.kind,
        }


def _check_T(T: float, psi_T: float) -> None:
    if not T > 1:
        raise DomainError(f"T must exceed 1, got {T}")
    if not psi_T > 0:
        raise DomainError("psi(T) must be positive")


def _largest_below_root(T: float, n: int) -> int:
    """Largest integer h >= 0 with h^n < T."""
    h = int(math.floor(T ** (1.0 / n)))
    while h > 0 and h**n >= T:
        h -= 1
    while (h + 1) ** n < T:
        h += 1
    return h


def _certificate(sp: _Split, q: np.ndarray, r: np.ndarray, T: float, psi_T: float, kind: str) -> MembershipCertificate:
    qt = tuple(int(x) for x in q)
    m, n = sp.m, sp.n
    ar = np.abs(r)
    gauge = pi_plus(qt) if kind == "multiplicative" else float(max(abs(x) for x in qt)) ** n
    return MembershipCertificate(
        tuple(sp.nearest_p(qt)), qt, float(ar.max()) ** m, float(np.prod(ar)), gauge, T, psi_T, kind
    )


def in_S_additive(Y, psi_T: float, T: float, budget: int = PROBE_BUDGET) -> Optional[MembershipCertificate]:
    """First q (by max |q_j|, then lexicographic) with max|q_j|^n < T and max|Y_i q - p_i|^m < psi(T)."""
    _check_T(T, psi_T)
    Y = as_matrix(Y)
    m, n = Y.dims.m, Y.dims.n
    H = _largest_below_root(T, n)
    if (2 * H + 1) ** n / 2 > budget:
        raise ResourceError(f"additive search box of radius {H} is above budget {budget}")
    sp = _Split(Y)
    # max|r|^m < psi  <=>  log|r| < log(psi)/m for every i
    lim = math.log(psi_T) / m
    if n == 1:
        for start in range(1, H + 1, CHUNK):
            Q = np.arange(start, min(H, start + CHUNK - 1) + 1, dtype=np.int64)[:, None]
            r, _ = sp.residuals(Q)
            ok = np.flatnonzero((_log_abs(r) < lim).all(axis=1))
            if len(ok):
                return _certificate(sp, Q[ok[0]], r[ok[0]], T, psi_T, "additive")
        return None
    for h in range(1, H + 1):
        box = _canonical_box([h] * n, True)
        Q = box[np.abs(box).max(axis=1) == h]
        r, _ = sp.residuals(Q)
        ok = np.flatnonzero((_log_abs(r) < lim).all(axis=1))
        if len(ok):
            return _certificate(sp, Q[ok[0]], r[ok[0]], T, psi_T, "additive")
    return None


def _recursive_region(n: int, bound: Callable, step: Callable, state0, budget: int) -> np.ndarray:
    """Canonical nonzero q built coordinate by coordinate, in lexicographic order.

    ``bound(state, d)`` caps |q_d| given the prefix state, ``step(state, v)``
    extends the state by q_d = v.
    """
    chunks: list[np.ndarray] = []
    count = 0

    def rec(prefix: list[int], state, zero: bool):
        nonlocal count
        d = len(prefix)
        lim = bound(state, d)
        if lim < 0:
            return
        if lim >= Q_LIMIT:
            raise ResourceError(f"coordinate bound {lim} exceeds exact-residual range")
        lo = 0 if zero else -lim
        if d == n - 1:
            vals = np.arange(max(lo, 1) if zero else lo, lim + 1, dtype=np.int64)
            count += len(vals)
            if count > budget:
                raise ResourceError(f"search region exceeds budget of {budget} candidates")
            if len(vals):
                block = np.empty((len(vals), n), dtype=np.int64)
                block[:, :d] = prefix
                block[:, d] = vals
                chunks.append(block)
            return
        for v in range(lo, lim + 1):
            rec(prefix + [v], step(state, v), zero and v == 0)

    rec([], state0, True)
    if not chunks:
        return np.zeros((0, n), dtype=np.int64)
    return np.concatenate(chunks)


def product_region(n: int, T: float, budget: int = PROBE_BUDGET) -> np.ndarray:
    """Canonical nonzero q with Pi_+(q) < T, lexicographic order."""
    if not T > 1:
        return np.zeros((0, n), dtype=np.int64)

    def bound(P, d):
        # max(1, |v|) < T / P
        return math.ceil(T / P) - 1

    Q = _recursive_region(n, bound, lambda P, v: P * max(1, abs(v)), 1, budget)
    pp = np.maximum(np.abs(Q), 1).prod(axis=1)
    return Q[pp < T]


def _order_mult(Q: np.ndarray) -> np.ndarray:
    """Sort keys: Pi_+ first, then max|q_j|, then lexicographic."""
    n = Q.shape[1]
    pp = np.maximum(np.abs(Q), 1).prod(axis=1)
    mx = np.abs(Q).max(axis=1)
    keys = tuple(Q[:, j] for j in range(n - 1, -1, -1)) + (mx, pp)
    return np.lexsort(keys)


def in_S_mult(Y, psi_T: float, T: float, budget: int = PROBE_BUDGET) -> Optional[MembershipCertificate]:
    """First q (by Pi_+, max|q_j|, lexicographic) with Pi_+(q) < T and prod|Y_i q - p_i| < psi(T)."""
    _check_T(T, psi_T)
    Y = as_matrix(Y)
    n = Y.dims.n
    sp = _Split(Y)
    lim = math.log(psi_T)
    if n == 1:
        # here Pi_+ order is plain increasing q
        top = math.ceil(T) - 1
        if top > budget:
            raise ResourceError(f"product region of {top} candidates exceeds budget {budget}")
        for start in range(1, top + 1, CHUNK):
            Q = np.arange(start, min(top, start + CHUNK - 1) + 1, dtype=np.int64)[:, None]
            r, _ = sp.residuals(Q)
            ok = np.flatnonzero(_log_abs(r).sum(axis=1) < lim)
            if len(ok):
                return _certificate(sp, Q[ok[0]], r[ok[0]], T, psi_T, "multiplicative")
        return None
    Q = product_region(n, T, budget)
    if len(Q) == 0:
        return None
    hits = []
    for start in range(0, len(Q), CHUNK):
        blk = Q[start:start + CHUNK]
        r, _ = sp.residuals(blk)
        hits.append(np.flatnonzero(_log_abs(r).sum(axis=1) < lim) + start)
    hit = np.concatenate(hits)
    if len(hit) == 0:
        return None
    first = hit[_order_mult(Q[hit])[0]]
    r, _ = sp.residuals(Q[first:first + 1])
    return _certificate(sp, Q[first], r[0], T, psi_T, "multiplicative")


def psi_at(psi: PsiSpec, T: float) -> float:
    return math.exp(psi.log_at_log(math.log(T)))


@dataclass
class UniformProbeReport:
    """Grid verdicts for S^x(psi, T).

    ``first_T0`` is the start of the longest all-success suffix of the grid
    (a liminf proxy) and ``unbounded_success`` records success at the last
    grid point (a limsup proxy).  Neither decides membership in the
    asymptotic sets.
    """

    Y: MatrixY
    T_grid: list[float]
    verdicts: list[Optional[MembershipCertificate]]
    errors: dict[int, str]
    first_T0: Optional[float]
    unbounded_success: bool
    semantics: str = "finite-grid proxy"

    def rows(self) -> list[dict]:
        out = []
        for i, (T, v) in enumerate(zip(self.T_grid, self.verdicts)):
            out.append({
                "T": T,
                "found": v is not None,
                "p": list(v.p) if v else None,
                "q": list(v.q) if v else None,
                "mult_lhs": v.mult_lhs if v else None,
                "error": self.errors.get(i),
            })
        return out


def uniform_probe(Y, psi: PsiSpec, T_grid: Sequence[float], budget: int = PROBE_BUDGET) -> UniformProbeReport:
    Y = as_matrix(Y)
    grid = [float(T) for T in T_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("T_grid must be strictly increasing")
    verdicts: list[Optional[MembershipCertificate]] = []
    errors: dict[int, str] = {}
    for i, T in enumerate(grid):
        try:
            verdicts.append(in_S_mult(Y, psi_at(psi, T), T, budget))
        except ResourceError as exc:
            verdicts.append(None)
            errors[i] = str(exc)
    first = None
    for i in range(len(grid) - 1, -1, -1):
        if verdicts[i] is None:
            break
        first = grid[i]
    last_ok = bool(verdicts) and verdicts[-1] is not None
    return UniformProbeReport(Y, grid, verdicts, errors, first, last_ok)


# ------------------------------------------------------------------ profiles


@dataclass
class Profile:
    """Best achievable log-lhs among q with gauge < T, as a step function of T."""

    gauge: np.ndarray
    best_log: np.ndarray

    def at(self, T: float) -> float:
        # gauges strictly below T
        k = int(np.searchsorted(self.gauge, T, side="left"))
        return float(self.best_log[k - 1]) if k > 0 else math.inf


def mult_profile(Y, T_max: float, budget: int = PROBE_BUDGET) -> Profile:
    """Prefix minima of log prod|r_i| over q ordered by Pi_+."""
    Y = as_matrix(Y)
    n = Y.dims.n
    sp = _Split(Y)
    if n == 1:
        top = math.ceil(T_max) - 1
        if top > budget:
            raise ResourceError(f"profile region of {top} candidates exceeds budget {budget}")
        Q = np.arange(1, top + 1, dtype=np.int64)[:, None]
        gauge = Q[:, 0].astype(float)
    else:
        Q = product_region(n, T_max, budget)
        gauge = np.maximum(np.abs(Q), 1).prod(axis=1).astype(float)
        order = np.argsort(gauge, kind="stable")
        Q, gauge = Q[order], gauge[order]
    vals = np.empty(len(Q))
    for start in range(0, len(Q), 4 * CHUNK):
        r, _ = sp.residuals(Q[start:start + 4 * CHUNK])
        vals[start:start + len(r)] = _log_abs(r).sum(axis=1)
    return Profile(gauge, np.minimum.accumulate(vals) if len(vals) else vals)


def additive_profile(Y, T_max: float, budget: int = PROBE_BUDGET) -> Profile:
    """Prefix minima of m * log max|r_i| over q ordered by max|q_j|^n."""
    Y = as_matrix(Y)
    m, n = Y.dims.m, Y.dims.n
    sp = _Split(Y)
    H = _largest_below_root(T_max, n)
    if (2 * H + 1) ** n / 2 > budget:
        raise ResourceError(f"additive profile box of radius {H} is above budget {budget}")
    Q = _canonical_box([H] * n, True)
    gauge = (np.abs(Q).max(axis=1).astype(float)) ** n
    order = np.argsort(gauge, kind="stable")
    Q, gauge = Q[order], gauge[order]
    vals = np.empty(len(Q))
    for start in range(0, len(Q), 4 * CHUNK):
        r, _ = sp.residuals(Q[start:start + 4 * CHUNK])
        vals[start:start + len(r)] = m * _log_abs(r).max(axis=1)
    return Profile(gauge, np.minimum.accumulate(vals) if len(vals) else vals)


# ------------------------------------------------------------- cone excursions


@dataclass(frozen=True)
class ConeWitness:
    a: CartanVector
    p: tuple[int, ...]
    q: tuple[int, ...]
    log_norm: float
    margin: float


def _feasible(lr: np.ndarray, lq: np.ndarray, t: float, lower1: float, upper2: float, le: float) -> np.ndarray:
    """Which q admit a with a_i > lower1 (sum t), a_{m+j} < upper2 (sum -t) and norm < e^le."""
    u = le - lr
    first = (u > lower1).all(axis=1) & (u.sum(axis=1) > t)
    U = np.minimum(upper2, le - lq)
    return first & (U.sum(axis=1) > -t)


def _build_a(dims: Dims, lr: np.ndarray, lq: np.ndarray, t: float, lower1: float, upper2: float, le: float) -> np.ndarray:
    m, n = dims.m, dims.n
    lo = np.full(m, lower1)
    # a zero residual leaves a_i unbounded above; any cap beyond t - (m-1) lower1 is harmless
    cap = t - (m - 1) * lower1 + 1.0
    u = np.minimum(le - lr, cap)
    theta = (t - lo.sum()) / (u.sum() - lo.sum())
    first = lo + theta * (u - lo)
    U = np.minimum(upper2, le - lq)
    second = U - (U.sum() + t) / n
    first[-1] = t - math.fsum(first[:-1])
    second[-1] = -t - math.fsum(second[:-1])
    return np.concatenate([first, second])


def cone_witness(Y, t: float, lower1: float, upper2: float, epsilon: float,
                 budget: int = PROBE_BUDGET, margin_label: float = 0.0) -> Optional[ConeWitness]:
    """Exact search for a with block sums t / -t, a_i > lower1, a_{m+j} < upper2 and delta(a.x_Y) < epsilon.

    For fixed q the conditions on a are linear, so feasibility is decided per q;
    the constructed a is then checked against the realised norm.
    """
    Y = as_matrix(Y)
    dims = Y.dims
    m, n = dims.m, dims.n
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    if not m * lower1 < t or not n * upper2 > -t:
        return None
    le = math.log(epsilon)
    if lower1 < le - 1e-12:
        # the q = 0 vectors e^{a_i} can already be short
        raise DomainError("first-block lower bound must be at least log(epsilon)")
    sp = _Split(Y)

    def bound(S, d):
        x = math.exp(min(le + t + S + (n - d - 1) * upper2, 60.0))
        return math.floor(x * (1 + 1e-12))

    def step(S, v):
        return S + (upper2 if v == 0 else min(upper2, le - math.log(abs(v))))

    if n == 1:
        top = bound(0.0, 0)
        if top > budget:
            raise ResourceError(f"cone search of {top} denominators exceeds budget {budget}")
        if top >= Q_LIMIT:
            raise ResourceError("denominator bound exceeds exact-residual range")
        Qall = None
        blocks = range(1, top + 1, CHUNK)
    else:
        Qall = _recursive_region(n, bound, step, 0.0, budget)
        blocks = range(0, len(Qall), CHUNK)
    for start in blocks:
        if Qall is None:
            Q = np.arange(start, min(top, start + CHUNK - 1) + 1, dtype=np.int64)[:, None]
        else:
            Q = Qall[start:start + CHUNK]
        r, _ = sp.residuals(Q)
        lr = _log_abs(r)
        lq = _log_abs(Q.astype(float))
        for k in np.flatnonzero(_feasible(lr, lq, t, lower1, upper2, le)):
            a = _build_a(dims, lr[k], lq[k], t, lower1, upper2, le)
            q = tuple(int(x) for x in Q[k])
            p = tuple(sp.nearest_p(q))
            ln = realized_log_norm(Y, a, p, q)
            if not ln < le:
                continue
            if not (np.all(a[:m] > lower1) and np.all(a[m:] < upper2)):
                continue
            try:
                cv = CartanVector(dims, tuple(a))
            except DomainError:
                continue
            return ConeWitness(cv, p, q, ln, margin_label)
    return None


def margin_schedule(sigma: Optional[float], steps: int = 4) -> list[float]:
    """sigma, sigma/2, ..., then 0 (the open cone)."""
    if sigma is None:
        return [0.0]
    return [sigma / 2**k for k in range(steps)] + [0.0]


def cusp_hit(Y, t: float, epsilon: float, grid_resolution: int = 32, sigma: Optional[float] = None,
             method: str = "exact", budget: int = PROBE_BUDGET) -> Optional[CartanVector]:
    """A point a of t.E_1 with delta(a.x_Y) < epsilon, preferring the slice t.M_sigma.

    The margin schedule starts at the slice and relaxes toward the open cone.
    ``method="exact"`` decides each margin exactly; ``method="grid"`` probes
    the chart domain at ``grid_resolution`` points per axis instead.
    """
    w = cusp_witness(Y, t, epsilon, grid_resolution, sigma, method, budget)
    return None if w is None else w.a


def cusp_witness(Y, t: float, epsilon: float, grid_resolution: int = 32, sigma: Optional[float] = None,
                 method: str = "exact", budget: int = PROBE_BUDGET) -> Optional[ConeWitness]:
    if not t > 0:
        raise DomainError("t must be positive")
    if not (0 < epsilon < 1):
        raise DomainError("epsilon must lie in (0, 1)")
    Y = as_matrix(Y)
    if method == "exact":
        for mg in margin_schedule(sigma):
            w = cone_witness(Y, t, t * mg, -t * mg, epsilon, budget, mg)
            if w is not None:
                return w
        return None
    if method == "grid":
        return _grid_witness(Y, t, epsilon, grid_resolution, sigma, budget)
    raise DomainError(f"unknown cusp_hit method {method!r}")


def _grid_witness(Y: MatrixY, t: float, epsilon: float, res: int, sigma: Optional[float], budget: int):
    from .cartan import SigmaSlice, gamma_points

    dims = Y.dims
    k = dims.chart_dim
    base = sigma if sigma is not None else 0.5 / max(dims.m, dims.n)
    for mg in margin_schedule(base)[:-1]:
        sl = SigmaSlice(dims, mg)
        if k == 0:
            pts = np.zeros((1, 0))
        else:
            axis = np.linspace(mg, 1 - mg, res)
            pts = np.stack(np.meshgrid(*([axis] * k), indexing="ij"), axis=-1).reshape(-1, k)
            pts = np.array([s for s in pts if sl.contains_chart_point(s)])
        for a in gamma_points(dims, pts) * t:
            hit = delta_below(Y, a, epsilon, budget)
            if hit is not None:
                cv = CartanVector(dims, tuple(a))
                return ConeWitness(cv, hit.p, hit.q, hit.log_delta, mg)
    return None


def dynamical_membership(Y, t: float, R: float, budget: int = PROBE_BUDGET) -> Optional[ConeWitness]:
    """Is there a in C_R(t) with delta(a.x_Y) < e^{-R}?

    This is equivalent to Y lying in S^x(psi, e^{t-nR}) with psi(e^{t-nR}) = e^{-t-mR}.
    """
    Y = as_matrix(Y)
    w = cone_witness(Y, t, -R, -R, math.exp(-R), budget)
    if w is not None and not in_cone(w.a, ConeQuery(Y.dims, R, t)):
        raise InternalError("cone witness left the cone")
    return w
