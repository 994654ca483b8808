"""Constructive transference between the cones C_{R_c}(t) and C_0(t).

Part (a) turns a short vector along C_{R_c}(t) into a short vector along
C_0(t) with a weaker constant; part (b) goes the other way at the cost of a
time shift.  Every output is re-verified against the lattice engine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cartan import CartanVector, ConeQuery, in_cone
from .errors import DomainError, InternalError
from .lattice import (MatrixY, as_matrix, delta_brute, delta_flowed, nearest_p,
                      realized_log_norm, witness_residuals)

BRUTE_BOX_LIMIT = 20_000


def dirichlet_simultaneous(theta: Sequence[float], N: float) -> tuple[int, tuple[int, ...]]:
    """Smallest 1 <= l <= N with |l theta_i - p_i| < N^{-1/k} for all i.

    If no multiplier meets the strict bound, the smallest one meeting it with
    equality is returned.  N may be any real >= 1; the non-strict version
    always has a solution by Minkowski's linear forms theorem, so a failed
    scan is a bug.
    """
    th = np.asarray(theta, dtype=float).reshape(-1)
    k = len(th)
    if k < 1:
        raise DomainError("theta must have at least one entry")
    if not N >= 1:
        raise DomainError("N must be at least 1")
    bound = N ** (-1.0 / k)
    top = int(math.floor(N))
    frac = th - np.floor(th)
    fallback = None
    for start in range(1, top + 1, 1 << 16):
        ell = np.arange(start, min(top, start + (1 << 16) - 1) + 1, dtype=float)
        x = ell[:, None] * frac[None, :]
        r = np.abs(x - np.rint(x)).max(axis=1)
        ok = np.flatnonzero(r < bound)
        if len(ok):
            fallback = int(ell[ok[0]])
            break
        if fallback is None:
            weak = np.flatnonzero(r <= bound * (1 + 1e-12))
            if len(weak):
                fallback = -int(ell[weak[0]])
    if fallback is None:
        raise InternalError(f"no Dirichlet multiplier found up to N={N} for theta={th.tolist()}")
    l = abs(fallback)
    return l, tuple(int(round(l * v)) for v in th)


@dataclass(frozen=True)
class TransferInput:
    a: CartanVector
    Y: MatrixY
    c: float
    t: float
    p: tuple[int, ...]
    q: tuple[int, ...]


@dataclass(frozen=True)
class TransferOutput:
    a_prime: CartanVector
    t_prime: float
    achieved_bound: float
    perturbation: float
    p: tuple[int, ...]
    q: tuple[int, ...]
    relabel: tuple[int, ...]
    passthrough: bool = False


def _witness_norm(inp: TransferInput) -> float:
    return math.exp(realized_log_norm(inp.Y, inp.a, inp.p, inp.q))


def _verify(Y: MatrixY, a_prime: CartanVector, cone: ConeQuery, cutoff: float, p, q) -> float:
    if not in_cone(a_prime, cone):
        raise InternalError(f"transferred vector {a_prime.entries} is outside the target cone")
    ln = realized_log_norm(Y, a_prime, p, q)
    if not ln < math.log(cutoff):
        raise InternalError(f"transferred witness has norm {math.exp(ln)} >= {cutoff}")
    return math.exp(ln)


def verify_delta_below(Y, a, cutoff: float) -> float:
    """delta(a.x_Y) by brute force when the box is small, else by enumeration."""
    Y = as_matrix(Y)
    arr = np.asarray(a.entries if isinstance(a, CartanVector) else a, dtype=float)
    m = Y.dims.m
    radii = [math.ceil(cutoff * math.exp(-x)) for x in arr[m:]]
    size = 1
    for r in radii:
        size *= 2 * r + 1
    if size <= BRUTE_BOX_LIMIT:
        return delta_brute(Y, arr, radii).delta
    return delta_flowed(Y, arr, cutoff=cutoff).delta


def _waterfill(values: np.ndarray, total: float) -> np.ndarray:
    """Cap the entries at a common level L so that they sum to ``total``.

    Requires sum(values) >= total and values > 0.
    """
    v = np.sort(values)[::-1]
    csum = np.cumsum(v)
    for i in range(len(v)):
        # the largest i+1 entries are capped at L, the rest stay
        rest = csum[-1] - csum[i]
        L = (total - rest) / (i + 1)
        nxt = v[i + 1] if i + 1 < len(v) else -math.inf
        if L >= nxt:
            return np.minimum(values, L)
    raise InternalError("water-filling failed")


def transfer_a(inp: TransferInput) -> TransferOutput:
    """From a in C_{R_c}(t) with a witness below c^{1/(m+n)} to a' in C_0(t) below c^{1/(m(m+n))}."""
    Y = as_matrix(inp.Y)
    dims = Y.dims
    m, n = dims.m, dims.n
    c, t = inp.c, inp.t
    if not 0 < c < 1:
        raise DomainError("c must lie in (0, 1)")
    kappa = c ** (1.0 / (m + n))
    Rc = -math.log(kappa)
    if not in_cone(inp.a, ConeQuery(dims, Rc, t)):
        raise DomainError("a must lie in C_{R_c}(t)")
    nu = _witness_norm(inp)
    if not nu < kappa:
        raise DomainError(f"witness norm {nu} is not below c^(1/(m+n)) = {kappa}")
    target = kappa ** (1.0 / m)
    cone0 = ConeQuery(dims, 0.0, t)
    a = inp.a.array
    small = [i for i in range(m) if a[i] <= 0]
    k = len(small)
    if k == 0:
        bound = _verify(Y, inp.a, cone0, target, inp.p, inp.q)
        return TransferOutput(inp.a, t, bound, 0.0, tuple(inp.p), tuple(inp.q), tuple(range(m + n)), True)
    big = [i for i in range(m) if a[i] > 0]
    # the geometric mean of nu and kappa keeps every bound strict after rounding
    eta = math.sqrt(nu * kappa)
    eps = eta ** (k / (k + 1.0))
    # Y_i q is congruent to the residual r_i modulo the integers
    r = witness_residuals(Y, inp.p, inp.q)
    ell, _ = dirichlet_simultaneous([r[i] for i in small], 1.0 / eps)
    new_q = tuple(ell * int(x) for x in inp.q)
    new_p = nearest_p(Y, new_q)
    ap = a.copy()
    ap[small] = 0.0
    ap[big] = _waterfill(a[big], t)
    ap[m:] = a[m:]
    # move into the open cone: lift the zero slots by h, take it back from the largest slot
    base_ln = realized_log_norm(Y, ap, new_p, new_q)
    slack_norm = math.log(target) - base_ln
    if not slack_norm > 0:
        raise InternalError(f"closure point misses the bound: log norm {base_ln} vs {math.log(target)}")
    top = max(big, key=lambda i: ap[i])
    h = min(0.5 * slack_norm, 0.5 * ap[top] / k)
    ap[small] = h
    ap[top] = t - math.fsum(ap[i] for i in range(m) if i != top)
    a_prime = CartanVector(dims, tuple(ap))
    bound = _verify(Y, a_prime, cone0, target, new_p, new_q)
    relabel = tuple(small + big + list(range(m, m + n)))
    return TransferOutput(a_prime, t, bound, h, tuple(new_p), new_q, relabel)


def transfer_b(inp: TransferInput) -> TransferOutput:
    """From a in C_0(t) below c^{(m+n-1)/(m(m+n))} to a' in C_{R_c}(t') below c^{1/(m+n)}."""
    Y = as_matrix(inp.Y)
    dims = Y.dims
    m, n = dims.m, dims.n
    c, t = inp.c, inp.t
    if not 0 < c < 1:
        raise DomainError("c must lie in (0, 1)")
    if not in_cone(inp.a, ConeQuery(dims, 0.0, t)):
        raise DomainError("a must lie in C_0(t)")
    nu = _witness_norm(inp)
    hyp = c ** ((m + n - 1) / (m * (m + n)))
    if not nu < hyp:
        raise DomainError(f"witness norm {nu} is not below c^((m+n-1)/(m(m+n))) = {hyp}")
    log_kappa = math.log(c) / (m + n)
    shift = -(n - 1) / (m * (m + n)) * math.log(c)
    t_prime = t - (n - 1) / (m + n) * math.log(c)
    a = inp.a.array
    large = [j for j in range(n) if a[m + j] >= log_kappa]
    rest = [j for j in range(n) if a[m + j] < log_kappa]
    k = len(large)
    if k >= n:
        raise InternalError("every contracting slot is large; the witness cannot exist")
    ap = a.copy()
    ap[:m] = a[:m] + shift
    for j in large:
        ap[m + j] = log_kappa
    D = math.fsum(a[m + j] for j in rest) - (-t_prime - k * log_kappa)
    if D < -1e-12:
        raise InternalError(f"negative redistribution {D}")
    for j in rest:
        ap[m + j] = a[m + j] - max(D, 0.0) / (n - k)
    target = math.exp(log_kappa)
    cone = ConeQuery(dims, -log_kappa, t_prime)
    h = 0.0
    if k > 0:
        # push the clamped slots strictly below log kappa and hand the mass to the rest
        base_ln = realized_log_norm(Y, ap, inp.p, inp.q)
        slack_norm = math.log(target) - base_ln
        slack_cone = log_kappa - max(ap[m + j] for j in rest)
        if not (slack_norm > 0 and slack_cone > 0):
            raise InternalError("closure point misses the strict bounds")
        h = 0.5 * min(slack_norm, slack_cone) * (n - k) / k
        h = min(h, 0.5 * slack_cone)
        for j in large:
            ap[m + j] -= h
        for j in rest:
            ap[m + j] += k * h / (n - k)
    last = m + (rest[-1] if rest else n - 1)
    ap[last] = -t_prime - math.fsum(ap[m + j] for j in range(n) if m + j != last)
    ap[m - 1] = t_prime - math.fsum(ap[:m - 1])
    a_prime = CartanVector(dims, tuple(ap))
    bound = _verify(Y, a_prime, cone, target, inp.p, inp.q)
    relabel = tuple(list(range(m)) + [m + j for j in large + rest])
    return TransferOutput(a_prime, t_prime, bound, h, tuple(inp.p), tuple(inp.q), relabel, k == 0 and n == 1)


# ------------------------------------------------------------ inverse design


def _solve_for_Y(rng: np.random.Generator, m: int, n: int, q: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, tuple]:
    """A matrix Y in [0,1)^{m x n} up to one column, with Y q - p = r for some integer p."""
    j0 = int(np.flatnonzero(q)[0])
    Y = rng.random((m, n))
    p = []
    for i in range(m):
        others = sum(Y[i, j] * q[j] for j in range(n) if j != j0)
        # pick p_i so the solved entry lands in [0, 1)
        target = others - r[i]
        pi = math.ceil(target) if q[j0] > 0 else math.floor(target)
        Y[i, j0] = (pi + r[i] - others) / q[j0]
        p.append(pi)
    return Y, tuple(p)


def design_input_a(rng: np.random.Generator, dims, c: Optional[float] = None) -> TransferInput:
    """Random valid part (a) input: a in C_{R_c}(t), often with non-positive expanding slots."""
    for _ in range(1000):
        inp = _try_design_a(rng, dims, c)
        if inp is not None:
            return inp
    raise InternalError("could not design a part (a) input")


def design_input_b(rng: np.random.Generator, dims, c: Optional[float] = None) -> TransferInput:
    """Random valid part (b) input: a in C_0(t) with a witness below c^{(m+n-1)/(m(m+n))}."""
    for _ in range(1000):
        inp = _try_design_b(rng, dims, c)
        if inp is not None:
            return inp
    raise InternalError("could not design a part (b) input")


def _try_design_a(rng, dims, c):
    m, n = dims.m, dims.n
    c = c if c is not None else float(rng.uniform(0.02, 0.9))
    log_kappa = math.log(c) / (m + n)
    Rc = -log_kappa
    # the contracting entries sit below -R_c, so t must exceed n R_c
    t = n * Rc + float(rng.uniform(0.3, 2.5))
    k = int(rng.integers(0, m)) if m > 1 else 0
    first = np.empty(m)
    first[:k] = -rng.uniform(0, 0.95, k) * Rc
    w = rng.dirichlet(np.ones(m - k))
    first[k:] = w * (t - first[:k].sum())
    first = first[rng.permutation(m)]
    # contracting block: every entry below log kappa, summing to -t
    extra = t + n * log_kappa
    second = log_kappa - rng.dirichlet(np.ones(n)) * extra
    a = np.concatenate([first, second])
    a[m - 1] = t - math.fsum(a[:m - 1])
    a[-1] = -t - math.fsum(a[m:-1])
    return _design_witness(rng, dims, a, c, t, math.exp(log_kappa))


def _try_design_b(rng, dims, c):
    m, n = dims.m, dims.n
    c = c if c is not None else float(rng.uniform(0.02, 0.9))
    hyp = c ** ((m + n - 1) / (m * (m + n)))
    # some contracting entry must fall below log(hyp) for a nonzero q to fit
    t = -math.log(hyp) + float(rng.uniform(0.2, 3.0))
    first = rng.dirichlet(np.ones(m)) * t
    second = -rng.dirichlet(np.ones(n)) * t
    a = np.concatenate([first, second])
    a[m - 1] = t - math.fsum(a[:m - 1])
    a[-1] = -t - math.fsum(a[m:-1])
    return _design_witness(rng, dims, a, c, t, hyp)


def _design_witness(rng, dims, a: np.ndarray, c: float, t: float, bound: float) -> Optional[TransferInput]:
    m, n = dims.m, dims.n
    if not np.any(bound * np.exp(-a[m:]) > 1):
        return None
    for _ in range(100):
        caps = bound * np.exp(-a[m:])
        # |q_j| < cap_j, at least one nonzero
        q = np.array([int(rng.integers(-math.ceil(cp) + 1, math.ceil(cp))) if cp > 1 else 0 for cp in caps])
        q = np.where(np.abs(q) < caps, q, 0)
        if not q.any():
            continue
        rcap = np.minimum(0.5, bound * np.exp(-a[:m]))
        r = rng.uniform(-0.95, 0.95, m) * rcap
        Y, p = _solve_for_Y(rng, m, n, q, r)
        inp = TransferInput(CartanVector(dims, tuple(a)), MatrixY(dims, Y), c, t, p, tuple(int(x) for x in q))
        if math.exp(realized_log_norm(inp.Y, inp.a, p, inp.q)) < bound:
            return inp
    return None
