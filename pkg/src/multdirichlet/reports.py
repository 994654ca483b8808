"""Report files and configuration loading."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from importlib import resources
from pathlib import Path
from typing import Iterable

import yaml

from . import __version__
from .errors import DomainError
from .experiments import ExperimentReport

OUT_ENV = "MULTDIRICHLET_OUT"


class ConfigError(DomainError):
    pass


def load_schema() -> dict:
    text = resources.files("multdirichlet").joinpath("schemas/report_columns.json").read_text()
    return json.loads(text)


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "reports"))


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_cell(x) for x in v)
    return str(v)


def to_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report.columns)
    for row in report.rows:
        w.writerow([_cell(row.get(col)) for col in report.columns])
    return buf.getvalue()


def to_json(report: ExperimentReport) -> str:
    payload = report.to_dict()
    payload["master_seed"] = report.config.get("master_seed")
    payload["config_hash"] = config_hash(report.config)
    payload["version"] = __version__
    return json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if hasattr(o, "item"):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def report_from_json(text: str) -> ExperimentReport:
    return ExperimentReport.from_dict(json.loads(text))


def check_columns(report: ExperimentReport) -> None:
    schema = load_schema()
    expected = schema.get(report.experiment)
    if expected is None:
        raise DomainError(f"no column schema for experiment {report.experiment!r}")
    if list(expected) != list(report.columns):
        raise DomainError(f"columns of {report.experiment!r} drifted from the shipped schema")


def report_stem(report: ExperimentReport) -> str:
    m, n = report.config.get("m"), report.config.get("n")
    dims = f"{m}x{n}" if m is not None and n is not None else "na"
    return f"{report.experiment}-{dims}-{config_hash(report.config)}"


def emit_report(report: ExperimentReport, out_dir=None, formats: Iterable[str] = ("csv", "json")) -> list[Path]:
    """Write the report as CSV and/or JSON under ``out_dir``; returns the paths written."""
    check_columns(report)
    out = Path(out_dir) if out_dir is not None else default_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    stem = report_stem(report)
    paths = []
    for fmt in formats:
        if fmt == "csv":
            text = to_csv(report)
        elif fmt == "json":
            text = to_json(report)
        else:
            raise DomainError(f"unknown report format {fmt!r}")
        p = out / f"{stem}.{fmt}"
        p.write_text(text)
        paths.append(p)
    return paths


def load_config(path) -> dict:
    """Read a YAML key tree or a JSON document into a dict."""
    text = Path(path).read_text()
    try:
        if str(path).endswith(".json"):
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping at the top level")
    return data


def check_keys(config: dict, allowed: Iterable[str], where: str = "config") -> None:
    unknown = sorted(set(config) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")
