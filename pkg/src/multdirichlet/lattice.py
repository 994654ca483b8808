"""Sup-norm shortest vectors of flowed lattices a.x_Y and Minkowski point search.

The lattice attached to an m x n matrix Y consists of the vectors

    (e^{a_i} (Y_i q - p_i))_{i <= m}  followed by  (e^{a_{m+j}} q_j)_{j <= n}

for integer (p, q).  Witnesses always report p with residual ``Y q - p``.
For fixed q the best p is the nearest integer vector, so the search runs
over q only.  Norms are compared as logarithms, with log 0 = -inf.

Residuals are computed with a split ``Y = Y_hi + Y_lo`` where ``Y_hi`` has
26 fractional bits, so ``Y_hi * q`` is exact for |q| < 2^27 and only the
tiny ``Y_lo * q`` term carries rounding error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cartan import Dims, as_array
from .errors import DomainError, InternalError, ResourceError

DEFAULT_BUDGET = 10**9
CHUNK = 1 << 16
_SPLIT = float(1 << 26)
Q_LIMIT = 1 << 27
MAX_FLOW = 30.0


@dataclass(frozen=True)
class MatrixY:
    dims: Dims
    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float).reshape(self.dims.m, self.dims.n)
        if not np.all(np.isfinite(arr)):
            raise DomainError("matrix entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @classmethod
    def of(cls, rows) -> "MatrixY":
        arr = np.atleast_2d(np.asarray(rows, dtype=float))
        return cls(Dims(arr.shape[0], arr.shape[1]), arr)

    def __hash__(self):
        return hash((self.dims, self.entries.tobytes()))

    def __eq__(self, other):
        return isinstance(other, MatrixY) and self.dims == other.dims and np.array_equal(self.entries, other.entries)


def as_matrix(Y) -> MatrixY:
    return Y if isinstance(Y, MatrixY) else MatrixY.of(Y)


class _Split:
    """Exact-product decomposition of Y used by every residual computation."""

    def __init__(self, Y: MatrixY):
        E = Y.entries
        self.m, self.n = Y.dims.m, Y.dims.n
        self.whole = np.floor(E)
        frac = E - self.whole
        self.hi = np.floor(frac * _SPLIT) / _SPLIT
        self.lo = frac - self.hi

    def residuals(self, Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (r, s) for rows of Q: r = Yq - nearest integer, s the reduced sum."""
        Qf = Q.astype(float)
        prod = Qf[:, None, :] * self.hi[None, :, :]
        s = (prod - np.floor(prod)).sum(axis=2) + Qf @ self.lo.T
        return s - np.rint(s), s

    def nearest_p(self, q: Sequence[int]) -> list[int]:
        """Exact integer nearest to Y q, computed with Python integers."""
        qa = np.asarray([q], dtype=np.int64)
        _, s = self.residuals(qa)
        out = []
        for i in range(self.m):
            acc = 0
            for j in range(self.n):
                acc += int(self.whole[i, j]) * int(q[j]) + math.floor(self.hi[i, j] * q[j])
            out.append(acc + int(np.rint(s[0, i])))
        return out


def _log_abs(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(x))


def _log_norms(a: np.ndarray, m: int, r: np.ndarray, Q: np.ndarray) -> np.ndarray:
    lr = (a[:m] + _log_abs(r)).max(axis=1)
    lq = (a[m:] + _log_abs(Q.astype(float))).max(axis=1)
    return np.maximum(lr, lq)


@dataclass(frozen=True)
class ShortestResult:
    delta: float
    p: tuple[int, ...]
    q: tuple[int, ...]
    log_delta: float
    residuals: tuple[float, ...]

    @property
    def witness(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return self.p, self.q

    def to_json(self) -> dict:
        return {"p": list(self.p), "q": list(self.q), "log_delta": self.log_delta, "residuals": list(self.residuals)}


def witness_residuals(Y, p: Sequence[int], q: Sequence[int]) -> np.ndarray:
    """Precise residuals Y q - p for an explicit integer pair."""
    Y = as_matrix(Y)
    sp = _Split(Y)
    r, _ = sp.residuals(np.asarray([q], dtype=np.int64))
    p0 = sp.nearest_p(q)
    return r[0] + np.array([p0[i] - int(p[i]) for i in range(Y.dims.m)], dtype=float)


def nearest_p(Y, q: Sequence[int]) -> list[int]:
    """The integer vector p minimising |Y q - p|."""
    return _Split(as_matrix(Y)).nearest_p(q)


def realized_log_norm(Y, a, p: Sequence[int], q: Sequence[int]) -> float:
    """Log sup-norm of the flowed lattice vector attached to (p, q)."""
    Y = as_matrix(Y)
    arr = as_array(a, Y.dims)
    r = witness_residuals(Y, p, q)
    return float(_log_norms(arr, Y.dims.m, r[None, :], np.asarray([q]))[0])


def _check_flow(arr: np.ndarray) -> None:
    if np.max(np.abs(arr)) > MAX_FLOW:
        raise DomainError(f"flow entries are capped at {MAX_FLOW} in absolute value")
    # the search box relies on delta <= 1, which needs a unimodular lattice
    if abs(math.fsum(arr)) > 1e-9 * max(1.0, float(np.max(np.abs(arr)))):
        raise DomainError(f"flow vector must sum to zero, got {math.fsum(arr):.3e}")


def _q0_candidate(arr: np.ndarray, m: int, n: int) -> ShortestResult:
    i = int(np.argmin(arr[:m]))
    p = tuple(1 if k == i else 0 for k in range(m))
    res = tuple(-1.0 if k == i else 0.0 for k in range(m))
    return ShortestResult(math.exp(arr[i]), p, (0,) * n, float(arr[i]), res)


def _canonical_box(radii: Sequence[int], prefix_zero: bool) -> np.ndarray:
    """All q in the box with first nonzero entry positive, in lexicographic order."""
    axes = [np.arange(-r, r + 1, dtype=np.int64) for r in radii]
    if not axes:
        return np.zeros((1, 0), dtype=np.int64)
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(radii))
    if not prefix_zero:
        return grid
    nz = grid != 0
    first = np.where(nz.any(axis=1), nz.argmax(axis=1), -1)
    keep = first >= 0
    keep[keep] = grid[keep, first[keep]] > 0
    return grid[keep]


class _Search:
    """Best-first bookkeeping shared by the enumeration routines."""

    def __init__(self, Y: MatrixY, arr: np.ndarray, bound_log: float, budget: int, stop_below: Optional[float]):
        self.Y = Y
        self.sp = _Split(Y)
        self.arr = arr
        self.m, self.n = Y.dims.m, Y.dims.n
        self.best_log = bound_log
        self.best_q: Optional[np.ndarray] = None
        self.best_r: Optional[np.ndarray] = None
        self.budget = budget
        self.visited = 0
        self.stop_below = stop_below
        self.done = False

    def radius(self, j: int) -> int:
        r = math.floor(math.exp(self.best_log - self.arr[self.m + j]) * (1 + 1e-12))
        if r >= Q_LIMIT:
            raise ResourceError(f"denominator bound {r} exceeds exact-residual range; reduce t")
        return r

    def feed(self, Q: np.ndarray) -> None:
        if len(Q) == 0:
            return
        self.visited += len(Q)
        if self.visited > self.budget:
            raise ResourceError(
                f"enumeration budget of {self.budget} candidates exceeded; reduce the flow time t"
            )
        r, _ = self.sp.residuals(Q)
        ln = _log_norms(self.arr, self.m, r, Q)
        k = int(np.argmin(ln))
        if ln[k] < self.best_log:
            self.best_log = float(ln[k])
            self.best_q = Q[k].copy()
            self.best_r = r[k].copy()
            if self.stop_below is not None and self.best_log < self.stop_below:
                self.done = True

    def run(self) -> None:
        n = self.n
        if n == 1:
            q = 1
            while not self.done:
                top = self.radius(0)
                if q > top:
                    break
                hi = min(top, q + CHUNK - 1)
                self.feed(np.arange(q, hi + 1, dtype=np.int64)[:, None])
                q = hi + 1
            return
        self._recurse([], True)

    def _recurse(self, prefix: list[int], prefix_zero: bool) -> None:
        if self.done:
            return
        d = len(prefix)
        n = self.n
        radii = [self.radius(j) for j in range(d, n)]
        tail = 1
        for r in radii[1:]:
            tail *= 2 * r + 1
        if tail * (2 * radii[0] + 1) <= CHUNK or d == n - 1:
            box = _canonical_box(radii, prefix_zero)
            if len(box) * 1.0 > self.budget - self.visited + 1:
                raise ResourceError(
                    f"enumeration budget of {self.budget} candidates exceeded; reduce the flow time t"
                )
            pre = np.broadcast_to(np.asarray(prefix, dtype=np.int64), (len(box), d))
            Q = np.concatenate([pre, box], axis=1)
            for start in range(0, len(Q), CHUNK):
                self.feed(Q[start:start + CHUNK])
                if self.done:
                    return
            return
        lo = 0 if prefix_zero else -radii[0]
        v = lo
        while v <= self.radius(d) and not self.done:
            self._recurse(prefix + [v], prefix_zero and v == 0)
            v += 1

    def result(self, fallback: ShortestResult) -> ShortestResult:
        if self.best_q is None:
            return fallback
        q = tuple(int(x) for x in self.best_q)
        p = tuple(self.sp.nearest_p(q))
        return ShortestResult(math.exp(self.best_log), p, q, self.best_log, tuple(float(x) for x in self.best_r))


def delta_flowed(Y, a, cutoff: Optional[float] = None, budget: int = DEFAULT_BUDGET) -> ShortestResult:
    """Exact sup-norm shortest vector of a.x_Y.

    With ``cutoff`` the search may stop at the first witness of norm below it.
    Among vectors of equal norm the q = 0 candidates win, then the
    lexicographically smallest q with first nonzero entry positive.
    """
    Y = as_matrix(Y)
    arr = as_array(a, Y.dims)
    _check_flow(arr)
    m, n = Y.dims.m, Y.dims.n
    base = _q0_candidate(arr, m, n)
    if cutoff is not None and base.log_delta < math.log(cutoff):
        return base
    # delta <= 1 by Minkowski, so the box for bound 1 always holds a minimiser
    bound = min(base.log_delta, 0.0)
    search = _Search(Y, arr, bound, budget, None if cutoff is None else math.log(cutoff))
    if bound < base.log_delta:
        # no candidate yet at the bound; widen by a hair so norm exactly 1 is found
        search.best_log = bound + 1e-12
    search.run()
    res = search.result(base)
    if search.best_q is not None and search.best_log > base.log_delta:
        res = base
    if res.log_delta > 1e-9:
        raise InternalError(f"shortest vector longer than 1 (log {res.log_delta}); Minkowski violated")
    return res


def delta_below(Y, a, cutoff: float, budget: int = DEFAULT_BUDGET) -> Optional[ShortestResult]:
    """A lattice vector of norm < cutoff, or None when there is none."""
    if not cutoff > 0:
        raise DomainError("cutoff must be positive")
    Y = as_matrix(Y)
    arr = as_array(a, Y.dims)
    _check_flow(arr)
    m, n = Y.dims.m, Y.dims.n
    base = _q0_candidate(arr, m, n)
    lc = math.log(cutoff)
    if base.log_delta < lc:
        return base
    search = _Search(Y, arr, lc, budget, lc)
    search.run()
    if search.best_q is None:
        return None
    return search.result(base)


def delta_brute(Y, a, box_radius) -> ShortestResult:
    """Exhaustive oracle over |q_j| <= radius_j and p within one of the nearest integers.

    Ties go to the lexicographically smallest (q, p).
    """
    Y = as_matrix(Y)
    arr = as_array(a, Y.dims)
    m, n = Y.dims.m, Y.dims.n
    radii = [int(box_radius)] * n if np.isscalar(box_radius) else [int(r) for r in box_radius]
    if len(radii) != n or min(radii) < 0:
        raise DomainError("box radius must be a non-negative integer per denominator coordinate")
    axes = [np.arange(-r, r + 1, dtype=np.int64) for r in radii]
    Q = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    shifts = np.stack(np.meshgrid(*([np.arange(-1, 2)] * m), indexing="ij"), axis=-1).reshape(-1, m)
    sp = _Split(Y)
    r0, _ = sp.residuals(Q)
    k = len(shifts)
    QQ = np.repeat(Q, k, axis=0)
    SS = np.tile(shifts, (len(Q), 1))
    # p = nearest + shift, so the residual Yq - p drops by the shift
    R = np.repeat(r0, k, axis=0) - SS
    ln = _log_norms(arr, m, R, QQ)
    ln[~QQ.any(axis=1) & ~SS.any(axis=1)] = math.inf
    best = float(ln.min())
    keys = []
    for idx in np.flatnonzero(ln == best):
        q = tuple(int(x) for x in QQ[idx])
        p = tuple(x + int(s) for x, s in zip(sp.nearest_p(q), SS[idx]))
        keys.append((q, p, idx))
    q, p, idx = min(keys)
    return ShortestResult(math.exp(best), p, q, best, tuple(float(x) for x in R[idx]))


# ---------------------------------------------------------------- Minkowski body


@dataclass(frozen=True)
class MinkowskiCertificate:
    p: tuple[int, ...]
    q: tuple[int, ...]
    residuals: tuple[float, ...]
    sum_residual: float
    sum_q: float
    product_residual: float
    pi_plus_q: float

    def to_json(self) -> dict:
        return {
            "p": list(self.p),
            "q": list(self.q),
            "residuals": list(self.residuals),
            "sum_residual": self.sum_residual,
            "sum_q": self.sum_q,
            "product_residual": self.product_residual,
            "pi_plus_q": self.pi_plus_q,
        }


def volume_threshold(dims: Dims) -> float:
    """m! n! / (m^m n^n): the constant c must exceed this."""
    m, n = dims.m, dims.n
    return math.factorial(m) * math.factorial(n) / (m**m * n**n)


def T_critical(dims: Dims, c: float) -> float:
    m, n = dims.m, dims.n
    return max(c * m**m, float(n ** (n * (n - 1))))


def _pi_plus(q: Sequence[int]) -> float:
    out = 1
    for x in q:
        out *= max(1, abs(int(x)))
    return float(out)


def make_certificate(Y, p, q) -> MinkowskiCertificate:
    r = witness_residuals(Y, p, q)
    return MinkowskiCertificate(
        tuple(int(x) for x in p),
        tuple(int(x) for x in q),
        tuple(float(x) for x in r),
        math.fsum(np.abs(r)),
        float(sum(abs(int(x)) for x in q)),
        float(np.prod(np.abs(r))),
        _pi_plus(q),
    )


def minkowski_point(Y, T: float, c: float, budget: int = 10**8) -> MinkowskiCertificate:
    """First nonzero integer point of the body Xi(Y, T, c) in increasing l1 norm of q."""
    Y = as_matrix(Y)
    dims = Y.dims
    m, n = dims.m, dims.n
    thr = volume_threshold(dims)
    if not c > thr:
        raise DomainError(f"c must exceed m!n!/(m^m n^n) = {thr}")
    Tc = T_critical(dims, c)
    if not T > Tc:
        raise DomainError(f"T must exceed T_c = {Tc}")
    res_bound = m * (c / T) ** (1.0 / m)
    L = math.floor(n * T ** (1.0 / n))
    count = (2 * L + 1) ** (n - 1) * (L + 1)
    if count > budget:
        raise ResourceError(f"l1 ball of radius {L} holds about {count} points, above budget {budget}")
    box = _canonical_box([L] * n, True)
    l1 = np.abs(box).sum(axis=1)
    box = box[l1 <= L]
    l1 = l1[l1 <= L]
    # lexsort keys: last is primary
    order = np.lexsort(tuple(box[:, j] for j in range(n - 1, -1, -1)) + (l1,))
    box = box[order]
    sp = _Split(Y)
    for start in range(0, len(box), CHUNK):
        Q = box[start:start + CHUNK]
        r, _ = sp.residuals(Q)
        ok = np.flatnonzero(np.abs(r).sum(axis=1) <= res_bound)
        if len(ok):
            q = tuple(int(x) for x in Q[ok[0]])
            return make_certificate(Y, sp.nearest_p(q), q)
    raise InternalError("Minkowski body contained no nonzero integer point; this is a bug")


@dataclass
class AmgmCheck:
    ok: bool
    failed_link: Optional[str]
    links: dict

    def __bool__(self) -> bool:
        return self.ok


def certify_amgm(cert: MinkowskiCertificate, T: float, c: float) -> AmgmCheck:
    """Recheck every link of the AM-GM chain for a Minkowski certificate."""
    m, n = len(cert.p), len(cert.q)
    q = [abs(int(x)) for x in cert.q]
    r = [abs(x) for x in cert.residuals]
    k = sum(1 for x in q if x >= 1)
    links = {}
    links["q nonzero"] = k > 0
    links["residual sum"] = math.fsum(r) <= m * (c / T) ** (1.0 / m)
    links["denominator sum"] = sum(q) <= n * T ** (1.0 / n)
    if k > 0:
        amgm = (n / k) ** k * T ** (k / n)
        links["pi_plus by AM-GM"] = _pi_plus(q) <= amgm * (1 + 1e-12)
        links["AM-GM bound below T"] = amgm <= T * (1 + 1e-12)
    else:
        links["pi_plus by AM-GM"] = False
        links["AM-GM bound below T"] = False
    links["product by AM-GM"] = float(np.prod(r)) <= (math.fsum(r) / m) ** m * (1 + 1e-12)
    links["product below c/T"] = (math.fsum(r) / m) ** m <= (c / T) * (1 + 1e-12)
    failed = next((name for name, good in links.items() if not good), None)
    return AmgmCheck(failed is None, failed, links)
