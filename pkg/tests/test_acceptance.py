"""Acceptance suite: one verdict line per criterion, printed in the terminal summary.

Each runner returns (ok, detail, csv_text) so the determinism criterion can
repeat every randomized run with the same master seed and compare bytes.
"""
import math
import os
import time

import numpy as np
import pytest

from acceptance_log import CSV_OUTPUTS, RESULTS
from multdirichlet import experiments
from multdirichlet.cartan import ConeQuery, Dims, in_cone
from multdirichlet.dani import HardDirichlet, LogPower, RFunction, corr_residual, r_hard, solve_R, t_lambda
from multdirichlet.dani import verify_monotonicity
from multdirichlet.experiments import (ExperimentReport, SweepConfig, covering_decay_fit, cusp_sweep,
                                       default_T_grid, dno_sweep, measure_uniform_intersection, moment_decay,
                                       sample_rng)
from multdirichlet.lattice import delta_brute, delta_flowed, realized_log_norm, volume_threshold
from multdirichlet.probe import in_S_additive, psi_at
from multdirichlet.reports import to_csv
from multdirichlet.transference import design_input_a, design_input_b, transfer_a, transfer_b, verify_delta_below

pytestmark = pytest.mark.acceptance

SEED = 20240601
WORKERS = os.cpu_count() or 1


def _record(key, ok, detail):
    RESULTS[key] = (bool(ok), detail)
    print(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


def _csv(name, columns, rows, config=None):
    return to_csv(ExperimentReport(name, config or {}, columns, rows))


# ---------------------------------------------------------------- runners


def run_dirichlet(seed):
    rows = []
    for dims in (Dims(1, 1), Dims(2, 1), Dims(1, 2), Dims(2, 2)):
        for T in (2.0, 10.0, 100.0):
            psi_T = psi_at(HardDirichlet(1.0001), T)
            hits = 0
            for i in range(500):
                Y = sample_rng(seed, i).random((dims.m, dims.n))
                hits += in_S_additive(Y, psi_T, T) is not None
            rows.append({"m": dims.m, "n": dims.n, "T": T, "samples": 500, "certified": hits})
    ok = all(r["certified"] == r["samples"] for r in rows)
    total = sum(r["certified"] for r in rows)
    return ok, f"{total}/{500 * len(rows)} certificates", _csv("dirichlet", list(rows[0]), rows)


def run_dno(seed):
    rows = []
    for dims in (Dims(1, 1), Dims(2, 1), Dims(2, 2)):
        c = volume_threshold(dims) * 1.02
        rep = dno_sweep(dims, [c], default_T_grid(dims, c), 200, seed)
        rows += [dict(r, m=dims.m, n=dims.n) for r in rep.rows]
    ok = all(r["rate"] == 1.0 for r in rows)
    good = sum(r["successes"] for r in rows)
    cols = ["m", "n", "c", "T", "samples", "successes", "rate", "failed_links"]
    return ok, f"{good}/{sum(r['samples'] for r in rows)} certified over {len(rows)} cells", _csv("dno", cols, rows)


def run_transfer(seed):
    rows = []
    for dims in (Dims(2, 1), Dims(1, 2), Dims(2, 2)):
        for part in ("a", "b"):
            fails = 0
            for i in range(1000):
                rng = sample_rng(seed, i)
                if part == "a":
                    inp = design_input_a(rng, dims)
                    out = transfer_a(inp)
                    cone = ConeQuery(dims, 0.0, inp.t)
                    cutoff = inp.c ** (1 / (dims.m * dims.total))
                else:
                    inp = design_input_b(rng, dims)
                    out = transfer_b(inp)
                    kappa = inp.c ** (1 / dims.total)
                    cone = ConeQuery(dims, -math.log(kappa), out.t_prime)
                    cutoff = kappa
                good = (in_cone(out.a_prime, cone)
                        and realized_log_norm(inp.Y, out.a_prime, out.p, out.q) < math.log(cutoff)
                        and verify_delta_below(inp.Y, out.a_prime, cutoff) < cutoff)
                fails += not good
            rows.append({"m": dims.m, "n": dims.n, "part": part, "inputs": 1000, "failures": fails})
    ok = all(r["failures"] == 0 for r in rows)
    return ok, f"{sum(r['failures'] for r in rows)} failures in {1000 * len(rows)} inputs", \
        _csv("transfer", list(rows[0]), rows)


def run_dani():
    dims = Dims(2, 1)
    worst, mono_ok = 0.0, True
    for psi in (HardDirichlet(0.5), LogPower(0.5), LogPower(1), LogPower(2)):
        start = t_lambda(dims, psi.lam) if isinstance(psi, LogPower) else math.e
        grid = np.arange(start, 50.0 + 1e-9, 0.1)
        R = RFunction(psi, dims)
        for t in grid:
            worst = max(worst, corr_residual(psi, dims, t, R(t)))
        mono_ok &= verify_monotonicity(R, grid).ok
    hard = max(abs(solve_R(HardDirichlet(c), dims, t) - r_hard(dims, c))
               for c in (0.1, 0.5, 0.9) for t in (1, 10, 40))
    ok = worst < 1e-10 and mono_ok and hard < 1e-10
    return ok, f"max residual {worst:.2e}, monotone {mono_ok}, hard gap {hard:.2e}"


def run_svp(seed):
    choices = [Dims(1, 1), Dims(1, 2), Dims(2, 1), Dims(1, 3), Dims(3, 1), Dims(2, 2)]
    mismatches, worst = 0, 0.0
    for i in range(10_000):
        rng = sample_rng(seed, i)
        dims = choices[int(rng.integers(len(choices)))]
        Y = rng.random((dims.m, dims.n))
        while True:
            a = rng.uniform(-3, 3, size=dims.total)
            a -= a.mean()
            if np.abs(a).max() <= 3:
                break
        fast = delta_flowed(Y, a)
        brute = delta_brute(Y, a, [math.ceil(math.exp(-x)) for x in a[dims.m:]])
        rel = abs(fast.log_delta - brute.log_delta) / max(1.0, abs(brute.log_delta))
        norm_gap = abs(realized_log_norm(Y, a, fast.p, fast.q) - realized_log_norm(Y, a, brute.p, brute.q))
        worst = max(worst, rel, norm_gap)
        mismatches += rel > 1e-9 or norm_gap > 1e-9
    row = {"cases": 10_000, "mismatches": mismatches, "worst": worst}
    return mismatches == 0, f"{mismatches} mismatches, worst gap {worst:.1e}", _csv("svp", list(row), [row])


def run_dichotomy(seed):
    experiments._profiles.cache_clear()
    dims = Dims(2, 1)
    grid = tuple(float(t) for t in range(2, 15))

    def config(lam):
        return SweepConfig(dims, LogPower(lam), grid, 2000, seed, workers=WORKERS)

    low = measure_uniform_intersection(config(0.25))
    high = measure_uniform_intersection(config(4))
    gap = low.rows[-1]["fraction"] - high.rows[-1]["fraction"]
    fits = {lam: covering_decay_fit(config(lam)) for lam in (2, 3)}
    slopes = {lam: rep.summary["slope"] for lam, rep in fits.items()}
    ok_a = gap >= 0.5
    ok_b = all(abs(slopes[lam] - (dims.total - 2 - lam)) <= 0.75 for lam in slopes)
    detail = (f"(a) gap {gap:.3f} ({low.rows[-1]['fraction']:.3f} vs {high.rows[-1]['fraction']:.3f}); "
              f"(b) slopes {slopes[2]:.3f} vs -1, {slopes[3]:.3f} vs -2")
    text = to_csv(low) + to_csv(high) + to_csv(fits[2]) + to_csv(fits[3])
    return ok_a and ok_b, detail, text


def run_cusp(seed):
    cfg = SweepConfig(Dims(2, 1), None, (8.0, 10.0, 12.0, 15.0), 500, seed, sigma=0.1, epsilon=0.2,
                      workers=WORKERS)
    rep = cusp_sweep(cfg, "exact")
    fr = [r["fraction"] for r in rep.rows]
    monotone = all(b >= a for a, b in zip(fr, fr[1:]))
    high = all(f >= 0.95 for f in fr)
    detail = f"fractions {', '.join(f'{f:.3f}' for f in fr)}; >= 0.95 {high}, non-decreasing {monotone}"
    return high and monotone, detail, to_csv(rep)


def run_moment(seed):
    cfg = SweepConfig(Dims(2, 1), None, (6.0, 12.0), 400, seed, sigma=0.2, band_R=0.5, quadrature_points=32,
                      workers=WORKERS)
    rep = moment_decay(cfg, 2)
    v6, v12 = rep.rows[0]["moment"], rep.rows[1]["moment"]
    return v12 < v6, f"variance {v6:.5f} at t=6, {v12:.5f} at t=12", to_csv(rep)


RANDOMIZED = {1: run_dirichlet, 2: run_dno, 3: run_transfer, 5: run_svp, 6: run_dichotomy, 7: run_cusp,
              8: run_moment}


def _run(key):
    t0 = time.perf_counter()
    ok, detail, text = RANDOMIZED[key](SEED)
    CSV_OUTPUTS[key] = text.encode()
    _record(key, ok, f"{detail} [{time.perf_counter() - t0:.0f}s]")
    return ok, detail


# ---------------------------------------------------------------- criteria


def test_criterion_1_dirichlet_guarantee():
    ok, detail = _run(1)
    assert ok, detail


def test_criterion_2_minkowski_sweep():
    ok, detail = _run(2)
    assert ok, detail


def test_criterion_3_transference_suite():
    ok, detail = _run(3)
    assert ok, detail


def test_criterion_4_dani_round_trip():
    t0 = time.perf_counter()
    ok, detail = run_dani()
    _record(4, ok, f"{detail} [{time.perf_counter() - t0:.0f}s]")
    assert ok, detail


def test_criterion_5_svp_equivalence():
    ok, detail = _run(5)
    assert ok, detail


def test_criterion_6_dichotomy_proxy():
    ok, detail = _run(6)
    assert ok, detail


def test_criterion_7_cusp_hitting():
    ok, detail = _run(7)
    assert ok, detail


def test_criterion_8_moment_decay():
    ok, detail = _run(8)
    assert ok, detail


def test_criterion_9_determinism():
    t0 = time.perf_counter()
    differing = []
    for key, runner in RANDOMIZED.items():
        if key not in CSV_OUTPUTS:
            CSV_OUTPUTS[key] = runner(SEED)[2].encode()
        experiments._profiles.cache_clear()
        again = runner(SEED)[2].encode()
        if again != CSV_OUTPUTS[key]:
            differing.append(key)
    ok = not differing
    _record(9, ok, f"{len(RANDOMIZED) - len(differing)}/{len(RANDOMIZED)} runs byte-identical "
                   f"[{time.perf_counter() - t0:.0f}s]")
    assert ok, f"runs {differing} differ between repeats"
