"""Cartan vectors, cones C_R(t), the slice M_sigma and its affine chart.

A Cartan vector is a traceless diagonal ``(a_1, ..., a_{m+n})``.  The first
``m`` entries dilate the "residual" block of the lattice x_Y, the last ``n``
entries dilate the denominator block.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, InternalError

SUM_ATOL = 1e-12
CONE_RTOL = 1e-9
DOMAIN_ATOL = 1e-12


@dataclass(frozen=True)
class Dims:
    m: int
    n: int

    def __post_init__(self):
        if int(self.m) != self.m or int(self.n) != self.n or self.m < 1 or self.n < 1:
            raise DomainError(f"dimensions must be positive integers, got m={self.m}, n={self.n}")

    @property
    def total(self) -> int:
        return self.m + self.n

    @property
    def chart_dim(self) -> int:
        return self.m + self.n - 2

    def require_nontrivial(self) -> None:
        """Reject m = n = 1, where the multiplicative theory degenerates."""
        if max(self.m, self.n) <= 1:
            raise DomainError("this operation requires max(m, n) > 1")

    def label(self) -> str:
        return f"{self.m}x{self.n}"


@dataclass(frozen=True)
class CartanVector:
    dims: Dims
    entries: tuple[float, ...]

    def __post_init__(self):
        entries = tuple(float(x) for x in self.entries)
        object.__setattr__(self, "entries", entries)
        if len(entries) != self.dims.total:
            raise DomainError(f"expected {self.dims.total} entries, got {len(entries)}")
        if not all(math.isfinite(x) for x in entries):
            raise DomainError("Cartan entries must be finite")
        if abs(math.fsum(entries)) > SUM_ATOL:
            raise DomainError(f"Cartan vector must be traceless, sum={math.fsum(entries):.3e}")

    @classmethod
    def of(cls, dims: Dims, entries: Iterable[float]) -> "CartanVector":
        return cls(dims, tuple(entries))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.entries)

    @property
    def expanding(self) -> np.ndarray:
        return self.array[: self.dims.m]

    @property
    def contracting(self) -> np.ndarray:
        return self.array[self.dims.m:]

    def scaled(self, t: float) -> "CartanVector":
        return CartanVector(self.dims, tuple(t * x for x in self.entries))


def as_array(a, dims: Dims) -> np.ndarray:
    """Accept a CartanVector or any array-like, check its shape against ``dims``."""
    if isinstance(a, CartanVector):
        if a.dims != dims:
            raise DomainError(f"dimension mismatch: vector is {a.dims}, expected {dims}")
        return a.array
    arr = np.asarray(a, dtype=float)
    if arr.shape != (dims.total,):
        raise DomainError(f"dimension mismatch: shape {arr.shape}, expected ({dims.total},)")
    return arr


@dataclass(frozen=True)
class ConeQuery:
    dims: Dims
    R_at_t: float
    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise DomainError(f"cone time must be positive, got t={self.t}")


@dataclass(frozen=True)
class SigmaSlice:
    dims: Dims
    sigma: float

    def __post_init__(self):
        bound = 1.0 / max(self.dims.m, self.dims.n)
        if not (0.0 < self.sigma < bound):
            raise DomainError(f"sigma must lie in (0, {bound}), got {self.sigma}")

    @property
    def k(self) -> int:
        return self.dims.chart_dim

    def contains_chart_point(self, s: Sequence[float], atol: float = DOMAIN_ATOL) -> bool:
        s = np.asarray(s, dtype=float)
        if s.shape != (self.k,):
            return False
        lo, hi = self.sigma - atol, 1.0 - self.sigma + atol
        if np.any(s < lo) or np.any(s > hi):
            return False
        m = self.dims.m
        return bool(s[: m - 1].sum() <= hi and s[m - 1:].sum() <= hi)


def in_cone(a, query: ConeQuery) -> bool:
    """Membership in the open cone slice C_R(t)."""
    dims = query.dims
    arr = as_array(a, dims)
    m = dims.m
    R, t = query.R_at_t, query.t
    first = math.fsum(arr[:m])
    second = math.fsum(arr[m:])
    tol = CONE_RTOL * max(1.0, abs(t))
    if abs(first - t) > tol or abs(second + t) > tol:
        return False
    return bool(np.all(arr[:m] > -R) and np.all(arr[m:] < -R))


def linear_part(dims: Dims) -> np.ndarray:
    """The constant (k, m+n) gradient of the chart; row i is d gamma / d s_i."""
    m, n = dims.m, dims.n
    A = np.zeros((dims.chart_dim, dims.total))
    for i in range(m - 1):
        A[i, i] = 1.0
        A[i, m - 1] = -1.0
    for j in range(n - 1):
        r = m - 1 + j
        A[r, m + j] = -1.0
        A[r, m + n - 1] = 1.0
    return A


def gamma_chart(slice_: SigmaSlice, s) -> CartanVector:
    """Map chart coordinates s in J to the point of M_sigma they parametrise."""
    s = np.asarray(s, dtype=float).reshape(-1)
    if not slice_.contains_chart_point(s):
        raise DomainError(f"chart point {s.tolist()} lies outside J for sigma={slice_.sigma}")
    return CartanVector(slice_.dims, tuple(gamma_points(slice_.dims, s[None, :])[0]))


def gamma_points(dims: Dims, S: np.ndarray) -> np.ndarray:
    """Vectorised chart: rows of ``S`` (shape (N, k)) to rows of Cartan entries.

    Builds each row explicitly so the block sums are exactly +1 and -1.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    m, n = dims.m, dims.n
    N = S.shape[0]
    out = np.empty((N, dims.total))
    s_part = S[:, : m - 1]
    z_part = S[:, m - 1:]
    out[:, : m - 1] = s_part
    out[:, m - 1] = 1.0 - s_part.sum(axis=1)
    out[:, m: m + n - 1] = -z_part
    out[:, m + n - 1] = z_part.sum(axis=1) - 1.0
    return out


def chart_density(slice_: SigmaSlice) -> float:
    """Constant volume density sqrt(det(A A^T)) of the affine chart."""
    A = linear_part(slice_.dims)
    if A.shape[0] == 0:
        return 1.0
    return float(math.sqrt(np.linalg.det(A @ A.T)))


def sample_J(slice_: SigmaSlice, rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniform points of J by rejection from the box [sigma, 1-sigma]^k."""
    k = slice_.k
    if k == 0:
        return np.zeros((size, 0))
    lo, hi = slice_.sigma, 1.0 - slice_.sigma
    m = slice_.dims.m
    out = np.empty((size, k))
    filled = 0
    draws = 0
    while filled < size:
        batch = max(64, 2 * (size - filled))
        draws += batch
        if draws > 10**6 * max(1, size):
            raise InternalError("rejection sampler on J failed to terminate")
        cand = rng.uniform(lo, hi, size=(batch, k))
        ok = (cand[:, : m - 1].sum(axis=1) <= hi) & (cand[:, m - 1:].sum(axis=1) <= hi)
        cand = cand[ok]
        take = min(len(cand), size - filled)
        out[filled: filled + take] = cand[:take]
        filled += take
    return out


def sample_M_sigma(slice_: SigmaSlice, rng_seed) -> CartanVector:
    rng = np.random.default_rng(rng_seed)
    s = sample_J(slice_, rng, 1)[0]
    return CartanVector(slice_.dims, tuple(gamma_points(slice_.dims, s[None, :])[0]))


def separation(points: Sequence) -> float:
    """Minimum pairwise sup-distance between Cartan vectors."""
    arrs = [p.array if isinstance(p, CartanVector) else np.asarray(p, float) for p in points]
    if len(arrs) < 2:
        raise DomainError("separation needs at least two points")
    P = np.stack(arrs)
    diff = np.abs(P[:, None, :] - P[None, :, :]).max(axis=2)
    iu = np.triu_indices(len(arrs), 1)
    return float(diff[iu].min())


def separation_bar(points: Sequence) -> float:
    """Separation also capped by each point's distance to the walls, min_i |a_i|."""
    arrs = [p.array if isinstance(p, CartanVector) else np.asarray(p, float) for p in points]
    delta = separation(arrs)
    floor = min(float(np.min(np.abs(a))) for a in arrs)
    return min(delta, floor)


def tM_in_cone(slice_: SigmaSlice, t: float, R_at_t: float) -> bool:
    """Sufficient test for t * M_sigma being inside C_R(t)."""
    if not t > 0:
        raise DomainError("t must be positive")
    return t * slice_.sigma > R_at_t


def lipschitz_bounds(slice_: SigmaSlice) -> tuple[float, float]:
    """Certified (lower, upper) sup-norm Lipschitz constants of the chart.

    The lower bound is 1 because the chart copies s into its output.  The upper
    bound is the induced infinity-norm of the Jacobian, i.e. the largest
    absolute row sum over output coordinates.
    """
    A = linear_part(slice_.dims)
    if A.shape[0] == 0:
        return 1.0, 1.0
    upper = float(np.abs(A).sum(axis=0).max())
    return 1.0, upper
