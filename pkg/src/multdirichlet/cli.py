"""Command-line entry point.

Every subcommand reads options from flags and, optionally, from a YAML or
JSON file passed with ``--config``; flags win over file values and unknown
file keys are rejected.  Exit codes: 0 success, 1 internal error, 2 bad
input or configuration, 3 resource budget or I/O failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from typing import Callable, Optional

from . import __version__
from .cartan import Dims, SigmaSlice
from .dani import (LogPower, RFunction, corr_residual, parse_psi, psi_from_dict, t_lambda)
from .errors import DomainError, InternalError, ResourceError, SolverError
from .experiments import (Band, CuspBand, ExperimentReport, SweepConfig, covering_decay_fit, cusp_sweep,
                          default_T_grid, dno_sweep, equi_average, measure_S_additive, measure_S_mult,
                          measure_uniform_intersection, moment_decay, sample_rng)
from .lattice import MatrixY, delta_flowed
from .probe import cusp_witness, in_S_additive, in_S_mult, psi_at, uniform_probe
from .reports import ConfigError, check_keys, default_out_dir, emit_report, load_config
from .transference import design_input_a, design_input_b, transfer_a, transfer_b, verify_delta_below

log = logging.getLogger("multdirichlet")

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3


# ------------------------------------------------------------------ parsing helpers


def parse_floats(text) -> list[float]:
    """``1,2,3`` or an inclusive range ``lo:hi[:step]``."""
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    s = str(text).strip()
    if ":" in s:
        parts = [float(x) for x in s.split(":")]
        if len(parts) not in (2, 3):
            raise ConfigError(f"bad range {text!r}")
        lo, hi = parts[0], parts[1]
        step = parts[2] if len(parts) == 3 else 1.0
        if step <= 0:
            raise ConfigError("range step must be positive")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return [lo + k * step for k in range(count)]
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse number list {text!r}") from None


def parse_matrix(text) -> MatrixY:
    """Rows separated by ``;`` and entries by ``,``; a nested list also works."""
    if isinstance(text, (list, tuple)):
        return MatrixY.of(text)
    try:
        rows = [[float(x) for x in row.split(",")] for row in str(text).split(";")]
    except ValueError:
        raise ConfigError(f"cannot parse matrix {text!r}") from None
    if len({len(r) for r in rows}) != 1:
        raise ConfigError("matrix rows must have equal length")
    return MatrixY.of(rows)


def parse_psi_value(value):
    if isinstance(value, dict):
        return psi_from_dict(value)
    return parse_psi(str(value))


class Options:
    """Merge of flag values, config file values and defaults."""

    def __init__(self, args: argparse.Namespace, spec: dict, config: dict):
        self.args = args
        self.spec = spec
        self.config = config

    def get(self, name: str):
        v = getattr(self.args, name, None)
        if v is not None:
            return v
        if name in self.config:
            return self.config[name]
        default = self.spec[name][1]
        if default is _REQUIRED:
            raise ConfigError(f"missing required option --{name.replace('_', '-')}")
        return default


_REQUIRED = object()

# option name -> (type, default, help)
COMMON = {
    "seed": (int, 0, "master seed recorded in every report"),
    "workers": (int, 1, "worker threads for sample-parallel loops"),
}

SPECS: dict[str, dict] = {
    "dani-solve": {
        "psi": (str, _REQUIRED, "hard:<c>, logpower:<lambda>, or a table in the config file"),
        "m": (int, _REQUIRED, "rows"), "n": (int, _REQUIRED, "columns"),
        "t": (str, _REQUIRED, "time or list/range of times"),
        "tol": (float, 1e-12, "bisection tolerance on R"),
    },
    "delta": {
        "Y": (str, _REQUIRED, "matrix, rows split by ';'"),
        "a": (str, _REQUIRED, "Cartan vector entries"),
        "cutoff": (float, None, "stop at the first vector shorter than this"),
    },
    "s-probe": {
        "Y": (str, _REQUIRED, "matrix"), "psi": (str, _REQUIRED, "approximating function"),
        "T": (str, _REQUIRED, "heights"), "kind": (str, "mult", "mult or additive"),
    },
    "uniform-probe": {
        "Y": (str, _REQUIRED, "matrix"), "psi": (str, _REQUIRED, "approximating function"),
        "T": (str, _REQUIRED, "increasing grid of heights"),
    },
    "transfer-check": {
        "m": (int, _REQUIRED, "rows"), "n": (int, _REQUIRED, "columns"),
        "part": (str, "a", "a or b"), "N": (int, 100, "designed inputs"),
    },
    "dno-sweep": {
        "m": (int, _REQUIRED, "rows"), "n": (int, _REQUIRED, "columns"),
        "c": (str, _REQUIRED, "constants above m!n!/(m^m n^n)"),
        "T": (str, None, "heights above T_c; default five points up to 1e4"),
        "N": (int, 100, "samples per cell"),
    },
    "measure-sweep": {
        "m": (int, _REQUIRED, "rows"), "n": (int, _REQUIRED, "columns"),
        "psi": (str, _REQUIRED, "approximating function"), "t_grid": (str, _REQUIRED, "log heights"),
        "N": (int, 100, "samples"), "kind": (str, "mult", "mult, additive or fit"),
        "budget": (int, 5 * 10**7, "enumeration budget per sample"),
    },
    "intersection-sweep": {
        "m": (int, _REQUIRED, "rows"), "n": (int, _REQUIRED, "columns"),
        "psi": (str, _REQUIRED, "approximating function"), "t_grid": (str, _REQUIRED, "log heights"),
        "N": (int, 100, "samples"), "budget": (int, 5 * 10**7, "enumeration budget per sample"),
    },
    "equi-average": {
        "Y": (str, _REQUIRED, "matrix"), "t": (str, _REQUIRED, "times"),
        "sigma": (float, 0.2, "slice margin"), "band_R": (float, 0.5, "band [e^{-R-1}, e^{-R})"),
        "band": (str, None, "explicit band lower,upper"),
        "points": (int, 32, "quadrature nodes"), "quadrature": (str, "midpoint", "midpoint or sobol"),
    },
    "moment-decay": {
        "m": (int, _REQUIRED, "rows"), "n": (int, _REQUIRED, "columns"), "t_grid": (str, _REQUIRED, "times"),
        "N": (int, 100, "samples"), "h": (int, 2, "moment order, 2 or 4"), "sigma": (float, 0.2, "slice margin"),
        "band_R": (float, 0.5, "band radius"), "points": (int, 32, "quadrature nodes"),
        "quadrature": (str, "midpoint", "midpoint or sobol"),
    },
    "cusp-hit": {
        "Y": (str, None, "matrix; omit to sweep random samples"),
        "m": (int, 2, "rows when sweeping"), "n": (int, 1, "columns when sweeping"),
        "t": (str, _REQUIRED, "times"), "epsilon": (float, 0.2, "cusp depth"),
        "sigma": (float, 0.1, "slice margin where the search starts"),
        "resolution": (int, 32, "grid points per axis for the grid method"),
        "method": (str, "exact", "exact or grid"), "N": (int, 100, "samples when sweeping"),
        "budget": (int, 5 * 10**7, "enumeration budget"),
    },
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multdirichlet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, spec in SPECS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML or JSON file with option values")
        p.add_argument("--out", help="output directory (default from MULTDIRICHLET_OUT or ./reports)")
        p.add_argument("--format", default="csv,json", help="comma list of csv, json")
        p.add_argument("-v", "--verbose", action="count", default=0)
        for opt, (typ, _, help_) in {**COMMON, **spec}.items():
            p.add_argument("--" + opt.replace("_", "-"), dest=opt, type=typ, default=None, help=help_)
    return parser


# ------------------------------------------------------------------ commands


def _dims(o: Options) -> Dims:
    return Dims(int(o.get("m")), int(o.get("n")))


def cmd_dani_solve(o: Options) -> ExperimentReport:
    dims = _dims(o)
    psi = parse_psi_value(o.get("psi"))
    R = RFunction(psi, dims, float(o.get("tol")))
    rows = []
    for t in parse_floats(o.get("t")):
        r = R(t)
        rows.append({"t": t, "R": r, "residual": corr_residual(psi, dims, t, r),
                     "t_minus_nR": t - dims.n * r, "t_plus_mR": t + dims.m * r})
        print(f"R(t={t:g}) = {r:.12g}")
    summary = {}
    if isinstance(psi, LogPower):
        summary["t_lambda"] = t_lambda(dims, psi.lam)
    cfg = {"m": dims.m, "n": dims.n, "psi": psi.to_dict(), "t": parse_floats(o.get("t")), "tol": o.get("tol")}
    return ExperimentReport("dani-solve", cfg, ["t", "R", "residual", "t_minus_nR", "t_plus_mR"], rows, summary)


def cmd_delta(o: Options) -> ExperimentReport:
    Y = parse_matrix(o.get("Y"))
    a = parse_floats(o.get("a"))
    res = delta_flowed(Y, a, cutoff=o.get("cutoff"))
    print(f"delta = {res.delta:.12g}  log_delta = {res.log_delta:.12g}  p = {list(res.p)}  q = {list(res.q)}")
    cfg = {"m": Y.dims.m, "n": Y.dims.n, "Y": Y.entries.tolist(), "a": a, "cutoff": o.get("cutoff")}
    row = {"delta": res.delta, "log_delta": res.log_delta, "p": list(res.p), "q": list(res.q),
           "residuals": list(res.residuals)}
    return ExperimentReport("delta", cfg, ["delta", "log_delta", "p", "q", "residuals"], [row])


def _probe_row(T: float, cert) -> dict:
    return {"T": T, "found": cert is not None, "p": list(cert.p) if cert else None,
            "q": list(cert.q) if cert else None, "mult_lhs": cert.mult_lhs if cert else None}


def cmd_s_probe(o: Options) -> ExperimentReport:
    Y = parse_matrix(o.get("Y"))
    psi = parse_psi_value(o.get("psi"))
    kind = o.get("kind")
    if kind not in ("mult", "additive"):
        raise ConfigError("kind must be mult or additive")
    fn = in_S_mult if kind == "mult" else in_S_additive
    rows = []
    for T in parse_floats(o.get("T")):
        cert = fn(Y, psi_at(psi, T), T)
        rows.append(_probe_row(T, cert))
        print(f"T={T:g}: {'certificate q=' + str(list(cert.q)) if cert else 'no solution'}")
    cfg = {"m": Y.dims.m, "n": Y.dims.n, "Y": Y.entries.tolist(), "psi": psi.to_dict(), "kind": kind,
           "T": parse_floats(o.get("T"))}
    return ExperimentReport("s-probe", cfg, ["T", "found", "p", "q", "mult_lhs"], rows)


def cmd_uniform_probe(o: Options) -> ExperimentReport:
    Y = parse_matrix(o.get("Y"))
    psi = parse_psi_value(o.get("psi"))
    grid = parse_floats(o.get("T"))
    rep = uniform_probe(Y, psi, grid)
    print(f"first_T0 = {rep.first_T0}  success at last grid point = {rep.unbounded_success}  ({rep.semantics})")
    cfg = {"m": Y.dims.m, "n": Y.dims.n, "Y": Y.entries.tolist(), "psi": psi.to_dict(), "T": grid}
    return ExperimentReport("uniform-probe", cfg, ["T", "found", "p", "q", "mult_lhs", "error"], rep.rows(),
                            {"first_T0": rep.first_T0, "unbounded_success": rep.unbounded_success,
                             "semantics": rep.semantics})


def cmd_transfer_check(o: Options) -> ExperimentReport:
    dims = _dims(o)
    part = o.get("part")
    if part not in ("a", "b"):
        raise ConfigError("part must be a or b")
    seed, N = int(o.get("seed")), int(o.get("N"))
    rows = []
    for i in range(N):
        rng = sample_rng(seed, i)
        if part == "a":
            inp = design_input_a(rng, dims)
            out = transfer_a(inp)
            cutoff = inp.c ** (1.0 / (dims.m * dims.total))
        else:
            inp = design_input_b(rng, dims)
            out = transfer_b(inp)
            cutoff = inp.c ** (1.0 / dims.total)
        d = verify_delta_below(inp.Y, out.a_prime, cutoff)
        rows.append({"index": i, "c": inp.c, "t": inp.t, "t_prime": out.t_prime, "achieved": out.achieved_bound,
                     "delta": d, "cutoff": cutoff, "perturbation": out.perturbation, "ok": d < cutoff})
    bad = sum(1 for r in rows if not r["ok"])
    print(f"part ({part}) on {dims.label()}: {N - bad}/{N} verified")
    cfg = {"m": dims.m, "n": dims.n, "part": part, "N": N, "master_seed": seed}
    cols = ["index", "c", "t", "t_prime", "achieved", "delta", "cutoff", "perturbation", "ok"]
    return ExperimentReport("transfer-check", cfg, cols, rows, {"failures": bad})


def cmd_dno_sweep(o: Options) -> ExperimentReport:
    dims = _dims(o)
    cs = parse_floats(o.get("c"))
    Ts = o.get("T")
    T_grid = parse_floats(Ts) if Ts is not None else default_T_grid(dims, max(cs))
    rep = dno_sweep(dims, cs, T_grid, int(o.get("N")), int(o.get("seed")), int(o.get("workers")))
    total = sum(r["successes"] for r in rep.rows)
    count = sum(r["samples"] for r in rep.rows)
    rate = total / count if count else math.nan
    rep.summary["success_rate"] = rate
    print(f"success rate {rate:.4f} over {count} certificates")
    return rep


def _sweep_config(o: Options, **extra) -> SweepConfig:
    return SweepConfig(_dims(o), extra.pop("psi", None), tuple(parse_floats(o.get("t_grid"))), int(o.get("N")),
                       int(o.get("seed")), workers=int(o.get("workers")), **extra)


def cmd_measure_sweep(o: Options) -> ExperimentReport:
    cfg = _sweep_config(o, psi=parse_psi_value(o.get("psi")), budget=int(o.get("budget")))
    kind = o.get("kind")
    if kind == "mult":
        rep = measure_S_mult(cfg)
    elif kind == "additive":
        rep = measure_S_additive(cfg)
    elif kind == "fit":
        rep = covering_decay_fit(cfg)
        print(f"slope {rep.summary['slope']:.4f} (predicted {rep.summary['predicted_slope']:g})")
    else:
        raise ConfigError("kind must be mult, additive or fit")
    for r in rep.rows:
        print(f"t={r['t']:g}: fraction {r['fraction']:.4f} [{r['ci_low']:.4f}, {r['ci_high']:.4f}]")
    return rep


def cmd_intersection_sweep(o: Options) -> ExperimentReport:
    cfg = _sweep_config(o, psi=parse_psi_value(o.get("psi")), budget=int(o.get("budget")))
    rep = measure_uniform_intersection(cfg)
    for r in rep.rows:
        print(f"T0=e^{r['t0']:g}: fraction {r['fraction']:.4f}")
    return rep


def cmd_equi_average(o: Options) -> ExperimentReport:
    Y = parse_matrix(o.get("Y"))
    sl = SigmaSlice(Y.dims, float(o.get("sigma")))
    if o.get("band") is not None:
        lo, hi = parse_floats(o.get("band"))
        band = Band(lo, hi)
    else:
        band = CuspBand.at(float(o.get("band_R")))
    rows = []
    for t in parse_floats(o.get("t")):
        v = equi_average(Y, t, sl, band, int(o.get("points")), o.get("quadrature"), int(o.get("seed")))
        rows.append({"t": t, "average": v, "band_low": band.lower, "band_high": band.upper})
        print(f"t={t:g}: average {v:.6f}")
    cfg = {"m": Y.dims.m, "n": Y.dims.n, "Y": Y.entries.tolist(), "sigma": sl.sigma,
           "band": [band.lower, band.upper], "points": o.get("points"), "quadrature": o.get("quadrature"),
           "master_seed": int(o.get("seed"))}
    return ExperimentReport("equi-average", cfg, ["t", "average", "band_low", "band_high"], rows)


def cmd_moment_decay(o: Options) -> ExperimentReport:
    cfg = _sweep_config(o, sigma=float(o.get("sigma")), band_R=float(o.get("band_R")),
                        quadrature_points=int(o.get("points")), quadrature=o.get("quadrature"))
    rep = moment_decay(cfg, int(o.get("h")))
    for r in rep.rows:
        print(f"t={r['t']:g}: moment {r['moment']:.6g}")
    return rep


def cmd_cusp_hit(o: Options) -> ExperimentReport:
    times = parse_floats(o.get("t"))
    eps, sigma = float(o.get("epsilon")), float(o.get("sigma"))
    method = o.get("method")
    if o.get("Y") is None:
        cfg = SweepConfig(_dims(o), None, tuple(times), int(o.get("N")), int(o.get("seed")), sigma=sigma,
                          epsilon=eps, budget=int(o.get("budget")), workers=int(o.get("workers")))
        rep = cusp_sweep(cfg, method)
        for r in rep.rows:
            print(f"t={r['t']:g}: hit fraction {r['fraction']:.4f}")
        return rep
    Y = parse_matrix(o.get("Y"))
    rows = []
    for t in times:
        w = cusp_witness(Y, t, eps, int(o.get("resolution")), sigma, method, int(o.get("budget")))
        rows.append({"t": t, "hits": int(w is not None), "valid": 1, "fraction": float(w is not None),
                     "ci_low": None, "ci_high": None})
        print(f"t={t:g}: " + (f"a = {list(w.a.entries)} q = {list(w.q)}" if w else "no witness"))
    cfg = {"m": Y.dims.m, "n": Y.dims.n, "Y": Y.entries.tolist(), "t": times, "epsilon": eps, "sigma": sigma,
           "method": method}
    return ExperimentReport("cusp-hit", cfg, ["t", "hits", "valid", "fraction", "ci_low", "ci_high"], rows)


COMMANDS: dict[str, Callable[[Options], ExperimentReport]] = {
    "dani-solve": cmd_dani_solve,
    "delta": cmd_delta,
    "s-probe": cmd_s_probe,
    "uniform-probe": cmd_uniform_probe,
    "transfer-check": cmd_transfer_check,
    "dno-sweep": cmd_dno_sweep,
    "measure-sweep": cmd_measure_sweep,
    "intersection-sweep": cmd_intersection_sweep,
    "equi-average": cmd_equi_average,
    "moment-decay": cmd_moment_decay,
    "cusp-hit": cmd_cusp_hit,
}


def run(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    spec = {**COMMON, **SPECS[args.command]}
    try:
        config = load_config(args.config) if args.config else {}
        check_keys(config, spec, args.config or "config")
        formats = [f.strip() for f in args.format.split(",") if f.strip()]
        if not set(formats) <= {"csv", "json"}:
            raise ConfigError("format must be csv and/or json")
        opts = Options(args, spec, config)
        report = COMMANDS[args.command](opts)
        report.config.setdefault("master_seed", int(opts.get("seed")))
        paths = emit_report(report, args.out or default_out_dir(), formats)
        for p in paths:
            log.info("wrote %s", p)
    except (DomainError, SolverError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResourceError, OSError) as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
