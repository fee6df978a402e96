"""Configuration-driven experiment runner.

Usage::

    nessent list-experiments
    nessent validate config.yaml
    nessent run config.yaml [--output out.csv] [--workers 4]

A config is one YAML (or JSON) document::

    schema_version: 1
    experiment: vnee_scaling
    scatterer: {kind: single_impurity, eps0_over_t: [1.0, 2.0]}
    window: {k_fr: pi/2, dk: [0.1, 0.4]}
    L: {start: 100, stop: 1000, step: 100}
    output: {path: vnee.csv, format: csv}

Momenta accept arithmetic expressions in ``pi``. Output is deterministic:
rows are emitted in task order, every CSV row carries the config hash and
tool version, and JSON output is ``{"meta": ..., "rows": [...]}``.
"""

from __future__ import annotations

import argparse
import ast
import csv
import hashlib
import io
import json
import math
import operator
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .scatter import CompositeScatterer, ScattererModel, SingleImpurity, TableScatterer, Transparent

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "ExperimentConfig",
    "parse_expression",
    "load_config",
    "validate_config",
    "config_hash",
    "build_scatterer",
    "run",
    "render",
    "main",
]

SCHEMA_VERSION = 1
_OUTPUT_FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists ``field: message`` strings."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in self.problems))


# ---------------------------------------------------------------------------
# Expressions

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_NAMES = {"pi": math.pi}


def parse_expression(value) -> float:
    """Evaluate a number or an arithmetic string such as ``"2*pi/3 + 0.1"``.

    Only numeric literals, ``pi``, parentheses and ``+ - * / **`` are allowed.
    """
    if isinstance(value, bool):
        raise ValueError("booleans are not numbers")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f"expected a number or expression, got {type(value).__name__}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported syntax in {value!r}")

    try:
        tree = ast.parse(value.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse {value!r}") from exc
    out = ev(tree)
    if not math.isfinite(out):
        raise ValueError(f"{value!r} is not finite")
    return out


# ---------------------------------------------------------------------------
# Config model


@dataclass(frozen=True)
class ExperimentConfig:
    """Normalized, validated configuration.

    Scatterers are kept as plain dicts so the config hashes and serializes
    canonically; :func:`build_scatterer` turns one into a model.
    """

    experiment: str
    scatterers: tuple
    windows: tuple
    L: tuple = ()
    n: tuple = (1.0,)
    alpha: tuple = (0.0,)
    d: tuple = ()
    options: dict = field(default_factory=dict)
    output_path: str | None = None
    output_format: str = "csv"
    workers: int = 1
    schema_version: int = SCHEMA_VERSION

    def canonical(self) -> dict:
        """Fields that determine the results (output location and worker count excluded)."""
        out = asdict(self)
        for key in ("output_path", "output_format", "workers"):
            out.pop(key)
        return out


def _as_list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _number_list(raw, name, problems, *, integer=False):
    """Parse a scalar, a list, or a range mapping into a list of numbers."""
    try:
        if isinstance(raw, dict):
            keys = set(raw)
            start = parse_expression(raw["start"])
            stop = parse_expression(raw["stop"])
            if "step" in keys:
                step = parse_expression(raw["step"])
                if step <= 0:
                    raise ValueError("step must be positive")
                count = int(math.floor((stop - start) / step + 1e-9)) + 1
                vals = [start + i * step for i in range(max(count, 0))]
            elif "num" in keys:
                num = int(raw["num"])
                if num < 1:
                    raise ValueError("num must be >= 1")
                vals = list(np.linspace(start, stop, num))
            else:
                raise ValueError("range needs 'step' or 'num'")
        else:
            vals = [parse_expression(v) for v in _as_list(raw)]
    except (KeyError, ValueError, TypeError) as exc:
        problems.append(f"{name}: {exc}")
        return []
    if integer:
        ints = []
        for v in vals:
            if abs(v - round(v)) > 1e-9:
                problems.append(f"{name}: {v} is not an integer")
                return []
            ints.append(int(round(v)))
        return ints
    return [float(v) for v in vals]


def _scatterer_entries(raw, name, problems, base_dir) -> list:
    """Expand one scatterer mapping into a list of normalized dicts."""
    if not isinstance(raw, dict) or "kind" not in raw:
        problems.append(f"{name}: expected a mapping with a 'kind'")
        return []
    kind = raw["kind"]
    if kind == "transparent":
        return [{"kind": "transparent"}]
    if kind == "single_impurity":
        eps = _number_list(raw.get("eps0_over_t"), f"{name}.eps0_over_t", problems)
        return [{"kind": "single_impurity", "eps0_over_t": e} for e in eps]
    if kind == "table":
        if "path" in raw:
            path = Path(raw["path"])
            if not path.is_absolute():
                path = Path(base_dir) / path
            try:
                data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
            except (OSError, ValueError) as exc:
                problems.append(f"{name}.path: cannot read table ({exc})")
                return []
            if data.shape[1] not in (2, 3):
                problems.append(f"{name}.path: table needs columns k, t2[, phase]")
                return []
            entry = {"kind": "table", "k": data[:, 0].tolist(), "t2": data[:, 1].tolist()}
            if data.shape[1] == 3:
                entry["phase"] = data[:, 2].tolist()
        else:
            entry = {"kind": "table",
                     "k": _number_list(raw.get("k"), f"{name}.k", problems),
                     "t2": _number_list(raw.get("t2"), f"{name}.t2", problems)}
            if "phase" in raw:
                entry["phase"] = _number_list(raw["phase"], f"{name}.phase", problems)
        try:
            build_scatterer(entry)
        except ValueError as exc:
            problems.append(f"{name}: {exc}")
            return []
        return [entry]
    if kind == "composite":
        parts = raw.get("parts")
        if not isinstance(parts, list) or not parts:
            problems.append(f"{name}.parts: expected a non-empty list")
            return []
        built = []
        for i, part in enumerate(parts):
            expanded = _scatterer_entries(part, f"{name}.parts[{i}]", problems, base_dir)
            if len(expanded) != 1:
                if expanded:
                    problems.append(f"{name}.parts[{i}]: composite parts must be single models")
                return []
            built.append(expanded[0])
        return [{"kind": "composite", "parts": built}]
    problems.append(f"{name}.kind: unknown scatterer kind {kind!r}")
    return []


def build_scatterer(entry: dict) -> ScattererModel:
    """Instantiate a scatterer from its normalized dict."""
    kind = entry["kind"]
    if kind == "transparent":
        return Transparent()
    if kind == "single_impurity":
        return SingleImpurity(entry["eps0_over_t"])
    if kind == "table":
        return TableScatterer(tuple(entry["k"]), tuple(entry["t2"]),
                              tuple(entry["phase"]) if "phase" in entry else None)
    if kind == "composite":
        return CompositeScatterer(tuple(build_scatterer(p) for p in entry["parts"]))
    raise ValueError(f"unknown scatterer kind {kind!r}")


def _windows(raw, problems) -> list:
    if not isinstance(raw, dict):
        problems.append("window: expected a mapping with k_fr and k_fl or dk")
        return []
    if "k_fr" not in raw:
        problems.append("window.k_fr: required")
        return []
    k_frs = _number_list(raw["k_fr"], "window.k_fr", problems)
    for k in k_frs:
        if not -1e-12 <= k <= math.pi + 1e-12:
            problems.append(f"window.k_fr: {k!r} outside [0, pi]")
    if ("k_fl" in raw) == ("dk" in raw):
        problems.append("window: give exactly one of k_fl or dk")
        return []
    out = []
    if "dk" in raw:
        for kfr in k_frs:
            for dk in _number_list(raw["dk"], "window.dk", problems):
                out.append((kfr + dk, kfr))
    else:
        for kfr in k_frs:
            for kfl in _number_list(raw["k_fl"], "window.k_fl", problems):
                out.append((kfl, kfr))
    for kfl, kfr in out:
        if not -1e-12 <= kfl <= math.pi + 1e-12:
            problems.append(f"window.k_fl: {kfl!r} outside [0, pi]")
    return [(min(max(a, 0.0), math.pi), min(max(b, 0.0), math.pi)) for a, b in out]


def validate_config(raw: dict, base_dir: str | os.PathLike = ".") -> ExperimentConfig:
    """Check a raw config mapping and normalize it.

    Raises
    ------
    ConfigError
        Listing every offending field.
    """
    from .experiments import EXPERIMENTS

    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: expected a mapping"])
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        problems.append(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    name = raw.get("experiment")
    if name not in EXPERIMENTS:
        problems.append(f"experiment: unknown {name!r}; choose from {sorted(EXPERIMENTS)}")
        raise ConfigError(problems)
    spec = EXPERIMENTS[name]
    known = {"schema_version", "experiment", "scatterer", "left", "right", "window", "L", "n",
             "alpha", "d", "options", "output", "workers"}
    for key in sorted(set(raw) - known):
        problems.append(f"{key}: unknown field")

    if name == "two_scatterer":
        lefts = _scatterer_entries(raw.get("left"), "left", problems, base_dir)
        rights = _scatterer_entries(raw.get("right"), "right", problems, base_dir)
        scatterers = [{"left": lft, "right": rgt} for lft in lefts for rgt in rights]
    else:
        scatterers = _scatterer_entries(raw.get("scatterer"), "scatterer", problems, base_dir)
    windows = _windows(raw.get("window"), problems)

    def field_list(key, **kw):
        if key not in raw:
            if key in spec.required:
                problems.append(f"{key}: required for {name}")
            return list(spec.defaults.get(key, ()))
        return _number_list(raw[key], key, problems, **kw)

    Ls = field_list("L", integer=True)
    ns = field_list("n")
    alphas = field_list("alpha")
    ds = field_list("d", integer=True)
    if any(v < 1 for v in Ls):
        problems.append("L: every size must be >= 1")
    if any(not v > 0 for v in ns):
        problems.append("n: every Renyi order must be > 0")
    if any(abs(a) > math.pi + 1e-12 for a in alphas):
        problems.append("alpha: values must lie in [-pi, pi]")
    if any(v < 1 for v in ds):
        problems.append("d: every distance must be >= 1")
    alphas = [min(max(a, -math.pi), math.pi) for a in alphas]

    options = raw.get("options", {}) or {}
    if not isinstance(options, dict):
        problems.append("options: expected a mapping")
        options = {}
    for key in sorted(set(options) - set(spec.options)):
        problems.append(f"options.{key}: unknown option for {name}")
    merged = dict(spec.options)
    for key in set(options) & set(spec.options):
        try:
            merged[key] = type(spec.options[key])(options[key])
        except (TypeError, ValueError):
            problems.append(f"options.{key}: expected {type(spec.options[key]).__name__}")

    out = raw.get("output", {}) or {}
    if not isinstance(out, dict):
        problems.append("output: expected a mapping with path and format")
        out = {}
    fmt = out.get("format", "csv")
    if fmt not in _OUTPUT_FORMATS:
        problems.append(f"output.format: expected one of {_OUTPUT_FORMATS}, got {fmt!r}")
    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        problems.append("workers: expected a positive integer")
        workers = 1

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        experiment=name, scatterers=tuple(scatterers), windows=tuple(windows), L=tuple(Ls),
        n=tuple(ns), alpha=tuple(alphas), d=tuple(ds), options=merged,
        output_path=out.get("path"), output_format=fmt, workers=workers)


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    """Read and validate a YAML or JSON config file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError([f"<file>: cannot read {path} ({exc.strerror})"]) from exc
    except yaml.YAMLError as exc:
        raise ConfigError([f"<file>: not valid YAML/JSON ({exc})"]) from exc
    return validate_config(raw, base_dir=path.parent)


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form of the result-determining fields."""
    blob = json.dumps(cfg.canonical(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Execution and output


def _execute(task):
    from .experiments import EXPERIMENTS

    name, args = task
    return EXPERIMENTS[name].worker(*args)


def run(cfg: ExperimentConfig) -> tuple[dict, list[dict]]:
    """Run every task of an experiment; rows come back in task order."""
    from .experiments import EXPERIMENTS

    spec = EXPERIMENTS[cfg.experiment]
    tasks = [(cfg.experiment, args) for args in spec.tasks(cfg)]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_execute, tasks))
    else:
        chunks = [_execute(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    if spec.finalize is not None:
        rows = spec.finalize(cfg, rows)
    h = config_hash(cfg)
    meta = {"experiment": cfg.experiment, "schema_version": cfg.schema_version,
            "tool_version": __version__, "config_hash": h, "config": cfg.canonical()}
    for row in rows:
        row["config_hash"] = h
        row["tool_version"] = __version__
    return meta, rows


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        # Strict JSON has no nan/inf; they are rendered as strings.
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


def _columns(rows) -> list[str]:
    cols: list[str] = []
    seen = set()
    for row in rows:
        for key in row:
            if key not in seen:
                seen.add(key)
                cols.append(key)
    return cols


def render(meta: dict, rows: list[dict], fmt: str) -> str:
    """Serialize results as CSV (17 significant digits) or JSON."""
    if fmt == "json":
        return json.dumps({"meta": _json_value(meta), "rows": _json_value(rows)},
                          sort_keys=True, indent=1) + "\n"
    buf = io.StringIO()
    cols = _columns(rows)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_format_value(row.get(c)) for c in cols])
    return buf.getvalue()


def _cmd_list(_args) -> int:
    from .experiments import EXPERIMENTS

    for name in sorted(EXPERIMENTS):
        print(f"{name:18s} {EXPERIMENTS[name].summary}")
    return 0


def _cmd_validate(args) -> int:
    from .experiments import EXPERIMENTS

    cfg = load_config(args.config)
    ntask = len(list(EXPERIMENTS[cfg.experiment].tasks(cfg)))
    print(f"ok: {cfg.experiment}, {ntask} task(s), config hash {config_hash(cfg)[:12]}")
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError(["--workers: expected a positive integer"])
        cfg = replace(cfg, workers=args.workers)
    fmt = args.format or cfg.output_format
    meta, rows = run(cfg)
    text = render(meta, rows, fmt)
    target = args.output or cfg.output_path
    if target in (None, "-"):
        sys.stdout.write(text)
    else:
        target = Path(target)
        if not target.is_absolute() and args.output is None:
            target = Path(args.config).parent / target
        target.write_text(text)
        print(f"wrote {len(rows)} rows to {target}", file=sys.stderr)
    return 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nessent", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("list-experiments", help="list available experiments").set_defaults(func=_cmd_list)
    v = sub.add_parser("validate", help="check a config file without running it")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output path ('-' for stdout); overrides output.path")
    r.add_argument("--format", choices=_OUTPUT_FORMATS, help="overrides output.format")
    r.add_argument("--workers", type=int, help="worker processes; overrides the config")
    r.set_defaults(func=_cmd_run)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
