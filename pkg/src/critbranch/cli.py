"""Command-line interface.

Usage::

    critbranch {analytic,classify,predict,simulate,verify} [--config PATH]
               [--set KEY=VALUE ...] [--output PATH] [--format csv|json]
               [--workers N] [--seed N]

The config file holds flat ``key = value`` lines with ``#`` comments;
``--set`` overrides it and later settings win. Exit codes: 0 success,
2 configuration error, 3 numerical failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import sys
import warnings
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .analytic import AnalyticEngine
from .asymptotics import classify, limit_law, predict_survival
from .errors import (
    ConfigError,
    CritBranchError,
    DegenerateError,
    DomainError,
    NumericalError,
    SingularityError,
    UnavailableConstantError,
    UnsupportedFamilyError,
)
from .laws import ImmigrationLaw, IntensityLaw, LawSet, OffspringLaw, SlowlyVaryingSpec
from .simulate import ENGINES, MAX_POPULATION, run_replicates
from .verify import SUITES, run_suite

__all__ = ["main", "parse_config_text", "build_lawset", "cmd_analytic", "cmd_classify", "cmd_predict", "cmd_simulate", "cmd_verify"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4


def _float_list(text: str) -> List[float]:
    text = text.strip()
    if not text:
        return []
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _count(text: str) -> int:
    value = int(text)
    if value < 0:
        raise ValueError("must be non-negative")
    return value


_KIND = lambda text: {"constant": "Constant", "logpower": "LogPower"}[text.strip().lower()]  # noqa: E731

SCHEMA: Dict[str, Callable[[str], Any]] = {
    "offspring.gamma": float,
    "offspring.L.kind": _KIND,
    "offspring.L.c": float,
    "offspring.L.beta": float,
    "immigration.alpha": float,
    "immigration.l.kind": _KIND,
    "immigration.l.c": float,
    "immigration.l.beta": float,
    "intensity.theta": float,
    "intensity.L_R.kind": _KIND,
    "intensity.L_R.c": float,
    "intensity.L_R.beta": float,
    "intensity.tau0": float,
    "mu": float,
    "t": float,
    "t_grid": _float_list,
    "n_reps": _count,
    "seed": _count,
    "lambda_grid": _float_list,
    "s_grid": _float_list,
    "output_path": str,
    "output_format": str,
    "engine": str,
    "initial": _count,
    "max_population": _count,
    "max_events": _count,
    "suite": str,
    "workers": _count,
}


def parse_config_text(text: str) -> Dict[str, str]:
    """Parse flat ``key = value`` text with ``#`` comments into raw strings.

    Raises
    ------
    ConfigError
        On malformed lines or repeated keys.
    """
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",), interpolation=None, strict=True
    )
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return dict(parser["config"])


def _typed(raw: Dict[str, str]) -> Dict[str, Any]:
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    out = {}
    for key, value in raw.items():
        try:
            out[key] = SCHEMA[key](value)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return out


def _sv(cfg: Dict[str, Any], prefix: str, default_c: Optional[float]) -> Optional[SlowlyVaryingSpec]:
    kind = cfg.get(f"{prefix}.kind", "Constant")
    c = cfg.get(f"{prefix}.c", default_c)
    beta = cfg.get(f"{prefix}.beta", 0.0)
    if c is None:
        if kind != "Constant" or f"{prefix}.beta" in cfg:
            raise ConfigError(f"{prefix}.c is required for a {kind} function")
        return None
    return SlowlyVaryingSpec(kind, c, beta)


def build_lawset(cfg: Dict[str, Any]) -> LawSet:
    """Build and validate a :class:`LawSet` from typed flat config values."""
    for key in ("offspring.gamma", "immigration.alpha", "intensity.theta"):
        if key not in cfg:
            raise ConfigError(f"missing required key {key}")
    return LawSet(
        OffspringLaw(cfg["offspring.gamma"], _sv(cfg, "offspring.L", None)),
        ImmigrationLaw(cfg["immigration.alpha"], _sv(cfg, "immigration.l", 1.0)),
        IntensityLaw(cfg["intensity.theta"], _sv(cfg, "intensity.L_R", 1.0), cfg.get("intensity.tau0", 1.0)),
        cfg.get("mu", 1.0),
    )


# ---------------------------------------------------------------- output
def _plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    return value


def _fmt(value: Any) -> Any:
    value = _plain(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if value is None:
        return ""
    return value


def _json_value(value: Any) -> Any:
    value = _plain(value)
    if isinstance(value, float) and not math.isfinite(value):
        return _fmt(value)
    return value


def render(rows: Sequence[Dict[str, Any]], fmt: str, columns: Optional[Sequence[str]] = None) -> str:
    """Render records as CSV or as a JSON array."""
    if columns is None:
        columns = list(rows[0]) if rows else []
    if fmt == "json":
        return json.dumps([{k: _json_value(r.get(k)) for k in columns} for r in rows], indent=1) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r.get(k)) for k in columns])
    return buf.getvalue()


# -------------------------------------------------------------- commands
def cmd_analytic(cfg: Dict[str, Any]) -> List[Dict[str, Any]]:
    """Rows ``t, F(t;0), q(t), R(t), Q(t), I(t), P_t`` over ``t_grid``."""
    grid = cfg.get("t_grid")
    if not grid:
        raise ConfigError("analytic needs a non-empty t_grid")
    eng = AnalyticEngine(build_lawset(cfg))
    rows = []
    for t in grid:
        if not (t >= 0.0 and math.isfinite(t)):
            raise ConfigError(f"t_grid values must be finite and non-negative, got {t!r}")
        rows.append(
            {
                "t": t,
                "F(t;0)": eng.F(t, 0.0),
                "q(t)": eng.q(t, 0.0),
                "R(t)": eng.R_cum(t),
                "Q(t)": eng.Q_cum(t),
                "I(t)": eng.I_int(t, 0.0),
                "P_t": eng.P_survival(t),
            }
        )
    return rows


def _tag_refs(*tags: str) -> str:
    """Reference suffixes carried by regime tags, e.g. ``A_Thm41`` -> ``Thm41``."""
    return " ".join(t.split("_", 1)[1] for t in tags if "_" in t)


def cmd_classify(cfg: Dict[str, Any]) -> List[Dict[str, Any]]:
    """One record with the regime, limit family, constants and normalization."""
    lawset = build_lawset(cfg)
    eng = AnalyticEngine(lawset)
    regime = classify(lawset, eng)
    norm = ""
    if regime.limit_tag != "Unresolved":
        norm = limit_law(regime, lawset, eng).normalization
    rec = {"tag": regime.tag, "limit_tag": regime.limit_tag}
    for key in ("Q", "R", "d", "K"):
        rec[key] = regime.constants.get(key)
    rec["theorems"] = _tag_refs(regime.tag, regime.limit_tag)
    rec["normalization"] = norm
    return [rec]


def cmd_predict(cfg: Dict[str, Any]) -> List[Dict[str, Any]]:
    """Exact survival probability against the regime's asymptote over ``t_grid``."""
    grid = cfg.get("t_grid") or ([cfg["t"]] if "t" in cfg else [])
    if not grid:
        raise ConfigError("predict needs t or t_grid")
    lawset = build_lawset(cfg)
    eng = AnalyticEngine(lawset)
    regime = classify(lawset, eng)
    rows = []
    for t in grid:
        if not t > 0.0:
            raise ConfigError("predict needs positive times")
        exact = eng.P_survival(t)
        pred = predict_survival(regime, lawset, t, eng)
        rows.append({"t": t, "tag": regime.tag, "P_t": exact, "predicted": pred, "ratio": exact / pred if pred else math.nan})
    return rows


def _require_seed(cfg):
    if "seed" not in cfg:
        raise ConfigError("randomized commands need an explicit seed")
    if cfg["seed"] >= 2**64:
        raise ConfigError("seed must fit in 64 bits")
    return cfg["seed"]


def _require_reps(cfg):
    n = cfg.get("n_reps")
    if not n:
        raise ConfigError("n_reps must be a positive integer")
    return n


SIM_COLUMNS = (
    "replicate_index",
    "population",
    "survived",
    "n_immigration_events",
    "n_branch_events",
    "saturated",
    "truncated",
)


def cmd_simulate(cfg: Dict[str, Any]) -> List[Dict[str, Any]]:
    """Per-replicate records ordered by replicate index."""
    seed = _require_seed(cfg)
    n = _require_reps(cfg)
    if "t" not in cfg:
        raise ConfigError("simulate needs t")
    engine = cfg.get("engine", "gillespie")
    if engine not in ENGINES:
        raise ConfigError(f"engine must be one of {ENGINES}")
    batch = run_replicates(
        build_lawset(cfg),
        cfg["t"],
        n,
        seed,
        engine=engine,
        initial=cfg.get("initial"),
        workers=cfg.get("workers"),
        max_population=cfg.get("max_population", MAX_POPULATION),
        max_events=cfg.get("max_events", 10**9),
    )
    print(f"simulated {len(batch)} replicates", file=sys.stderr)
    d = batch.data
    return [
        {
            "replicate_index": batch.start + i,
            "population": int(d[i, 0]),
            "survived": bool(d[i, 0] > 0),
            "n_immigration_events": int(d[i, 1]),
            "n_branch_events": int(d[i, 2]),
            "saturated": bool(d[i, 3]),
            "truncated": bool(d[i, 4]),
        }
        for i in range(len(batch))
    ]


def cmd_verify(cfg: Dict[str, Any]):
    """Comparison rows of a named suite; also returns whether every gate passed."""
    seed = _require_seed(cfg)
    n = _require_reps(cfg) if "n_reps" in cfg else 100_000
    suite = cfg.get("suite", "analytic-gates")
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    reports = run_suite(
        suite, seed, n, workers=cfg.get("workers"), lambda_grid=cfg.get("lambda_grid"), s_grid=cfg.get("s_grid")
    )
    for r in reports:
        if r.status == "inconclusive":
            warnings.warn(f"inconclusive: {r.quantity}", RuntimeWarning)
    ok = all(r.status != "fail" for r in reports)
    return [r.as_row() for r in reports], ok


# ------------------------------------------------------------------ main
def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="critbranch", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=("analytic", "classify", "predict", "simulate", "verify"))
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--output", metavar="PATH")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    return p


def load_config(args) -> Dict[str, Any]:
    raw: Dict[str, str] = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    if args.seed is not None:
        raw["seed"] = str(args.seed)
    if args.workers is not None:
        raw["workers"] = str(args.workers)
    if args.output is not None:
        raw["output_path"] = args.output
    if args.format is not None:
        raw["output_format"] = args.format
    cfg = _typed(raw)
    if cfg.get("output_format", "csv") not in ("csv", "json"):
        raise ConfigError("output_format must be csv or json")
    if "workers" in cfg and cfg["workers"] < 1:
        raise ConfigError("workers must be positive")
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    args = _parser().parse_args(argv)
    ok = True
    try:
        cfg = load_config(args)
        if args.command == "analytic":
            rows = cmd_analytic(cfg)
        elif args.command == "classify":
            rows = cmd_classify(cfg)
        elif args.command == "predict":
            rows = cmd_predict(cfg)
        elif args.command == "simulate":
            rows = cmd_simulate(cfg)
        else:
            rows, ok = cmd_verify(cfg)
        columns = list(SIM_COLUMNS) if args.command == "simulate" else None
        text = render(rows, cfg.get("output_format", "csv"), columns)
        path = cfg.get("output_path")
        if path:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except (ConfigError, UnsupportedFamilyError, UnavailableConstantError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, SingularityError, DegenerateError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CritBranchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK if ok else EXIT_VERIFY


def main_exit() -> None:
    """Console-script wrapper that exits with :func:`main`'s code."""
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_exit()
