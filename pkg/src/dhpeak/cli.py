"""Command-line front end.

Commands: ``synth``, ``validate``, ``run``, ``sweep``, ``rank``. Options may
also come from an INI-style ``--config`` file (``key = value`` lines,
repeated keys build lists, ``#``/``;`` comments, ``[section]`` headers are
ignored); the command line wins over the file.

Exit codes: 0 ok, 1 usage or I/O error, 2 validation failure, 3 strategy or
solver failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .core import Constants, Dataset
from .ingest import IngestError, fill_gaps, parse_dataset, serialize_dataset, serialize_meta
from .lp import NoConvergence
from .metrics import DegenerateInput, evaluate, heat_deficit, peak_reduction
from .selection import greedy_rank
from .strategies import StrategyConfig, StrategyError, chain_name, compose, parse_chain
from .synthgen import BadSpec, GenSpec, generate

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_STRATEGY = 0, 1, 2, 3

DEFAULT_SCENARIOS = ["original", "fl10", "fl20", "tl", "ls10", "ls20", "tl+ls20"]
RANK_VARIANTS = ["ls10", "ls20", "fl10", "fl20", "tl"]
DEFAULT_GRID = [round(0.05 * k, 2) for k in range(11)]
SCHEMA_PATH = Path(__file__).parent / "schemas" / "metrics.schema.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RunConfig:
    meter_csv: Path | None = None
    meta_csv: Path | None = None
    synth: GenSpec | None = None
    strategies: list[str] | None = None  # None: the command's default set
    alpha: float | None = None
    beta: float | None = None
    include: list[int] | None = None
    constants: Constants = field(default_factory=Constants)
    out: Path = Path("out")
    grid: list[float] = field(default_factory=lambda: list(DEFAULT_GRID))
    lambdas: list[float] = field(default_factory=lambda: [1.84, 2.0])
    rel_tol: float = 0.02
    abs_tol: float = 0.5
    jobs: int = 1

    def __post_init__(self):
        if (self.meter_csv is None) != (self.meta_csv is None):
            raise UsageError("--meter-csv and --meta-csv must be given together")
        if (self.meter_csv is None) == (self.synth is None):
            raise UsageError("give either input CSVs or a synthetic spec, not both")
        for v in self.grid:
            if not 0 <= v < 1:
                raise UsageError(f"sweep values must lie in [0, 1), got {v}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if v is not None and not 0 <= v < 1:
                raise UsageError(f"--{name} must lie in [0, 1)")


def read_config_file(path: Path) -> dict[str, list[str]]:
    """Parse ``key = value`` lines; every key maps to the list of its values."""
    out: dict[str, list[str]] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;" or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out.setdefault(key.replace("-", "_").lower(), []).append(value)
    return out


def _split(values: Sequence[str] | None) -> list[str] | None:
    if values is None:
        return None
    items = []
    for v in values:
        items.extend(p.strip() for p in v.split(",") if p.strip())
    return items


_LIST_KEYS = {"strategy", "include", "lambda", "grid"}


def _merged(args: argparse.Namespace) -> dict[str, object]:
    """Command-line values layered over config-file values."""
    cfg = read_config_file(args.config) if args.config else {}
    merged: dict[str, object] = {}
    for key, values in cfg.items():
        merged[key] = values if key in _LIST_KEYS else values[-1]
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "config", "func"):
            merged[key] = value
    return merged


def build_config(args: argparse.Namespace, need_data: bool = True) -> RunConfig:
    m = _merged(args)
    try:
        constants = Constants(
            rho=float(m.get("rho", Constants.rho)),
            cp=float(m.get("cp", Constants.cp)),
            eta_pump=float(m.get("eta_pump", Constants.eta_pump)),
        )
        meter_csv = Path(m["meter_csv"]) if "meter_csv" in m else None
        meta_csv = Path(m["meta_csv"]) if "meta_csv" in m else None
        synth = None
        if meter_csv is None and meta_csv is None:
            synth = GenSpec(seed=int(m.get("seed", 0)), days=int(m.get("days", 365)))
        kwargs = dict(
            meter_csv=meter_csv,
            meta_csv=meta_csv,
            synth=synth,
            alpha=float(m["alpha"]) if "alpha" in m else None,
            beta=float(m["beta"]) if "beta" in m else None,
            constants=constants,
            out=Path(m.get("out", "out")),
            rel_tol=float(m.get("rel_tol", 0.02)),
            abs_tol=float(m.get("abs_tol", 0.5)),
            jobs=int(m.get("jobs", 1)),
        )
        if "strategy" in m:
            kwargs["strategies"] = _split(m["strategy"])
            for name in kwargs["strategies"]:
                parse_chain(name, kwargs["alpha"], kwargs["beta"])
        if "include" in m:
            kwargs["include"] = [int(v) for v in _split(m["include"])]
        if "lambda" in m:
            kwargs["lambdas"] = [float(v) for v in _split(m["lambda"])]
        if "grid" in m:
            kwargs["grid"] = [float(v) for v in _split(m["grid"])]
        return RunConfig(**kwargs)
    except (ValueError, BadSpec) as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# helpers

def _fmt(x: float) -> str:
    return repr(float(x))


def _write(path: Path, data: bytes | str):
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.write_bytes(data)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def load_dataset(config: RunConfig) -> Dataset:
    """Read (and gap-fill) the input data, or generate it; exit 2 on failure."""
    if config.synth is not None:
        dataset = generate(config.synth, config.constants)
    else:
        dataset = parse_dataset(config.meter_csv.read_bytes(), config.meta_csv.read_bytes())
    dataset, report = fill_gaps(dataset, config.constants, config.rel_tol, config.abs_tol)
    if not report.passed:
        raise _ValidationFailed(report.summary())
    return dataset


class _ValidationFailed(Exception):
    pass


def _included(config: RunConfig, dataset: Dataset):
    if config.include is None:
        return None
    unknown = set(config.include) - set(dataset.meter_ids)
    if unknown:
        raise UsageError(f"unknown meter ids in --include: {sorted(unknown)}")
    return config.include


# ---------------------------------------------------------------------------
# commands

def cmd_synth(config: RunConfig) -> list[Path]:
    spec = config.synth or GenSpec()
    dataset = generate(spec, config.constants)
    meter_path, meta_path = config.out / "meter.csv", config.out / "meta.csv"
    _write(meter_path, serialize_dataset(dataset))
    _write(meta_path, serialize_meta(dataset))
    return [meter_path, meta_path]


def cmd_validate(config: RunConfig) -> str:
    if config.synth is not None:
        dataset = generate(config.synth, config.constants)
    else:
        dataset = parse_dataset(config.meter_csv.read_bytes(), config.meta_csv.read_bytes())
    _, report = fill_gaps(dataset, config.constants, config.rel_tol, config.abs_tol)
    text = report.summary()
    if not report.passed:
        raise _ValidationFailed(text)
    return text


def _scenario_job(payload):
    dataset, name, alpha, beta, included, constants = payload
    stages = parse_chain(name, alpha, beta)
    return compose(dataset, stages, constants, included)


def _scenario_names(config: RunConfig) -> list[str]:
    names = []
    for raw in config.strategies or DEFAULT_SCENARIOS:
        stages = parse_chain(raw, config.alpha, config.beta)
        name = chain_name(stages)
        if name not in names:
            names.append(name)
    if "original" not in names:
        names.insert(0, "original")
    return names


@dataclass
class ScenarioRun:
    dataset: Dataset
    included: list[int] | None
    names: list[str]
    outcomes: list
    reports: list


def run_scenarios(config: RunConfig) -> ScenarioRun:
    """Load the data, apply every scenario and evaluate it (no file output)."""
    dataset = load_dataset(config)
    included = _included(config, dataset)
    names = _scenario_names(config)
    payloads = [(dataset, n, config.alpha, config.beta, included, config.constants) for n in names]
    outcomes = _map(_scenario_job, payloads, config.jobs)
    reports = [evaluate(dataset, o.dataset, config.lambdas, config.constants) for o in outcomes]
    return ScenarioRun(dataset, included, names, outcomes, reports)


def write_run(config: RunConfig, result: ScenarioRun) -> list[Path]:
    dataset, names = result.dataset, result.names
    curves, scenarios = {}, {}
    written = []
    for name, outcome, report in zip(names, result.outcomes, result.reports):
        curves[name] = report.duration_curve
        entry = report.to_dict()
        entry["chain"] = list(outcome.chain)
        scenarios[name] = entry
        if name != "original":
            path = config.out / f"altered_{name}.csv"
            _write(path, serialize_dataset(outcome.dataset))
            written.append(path)

    rows = [[h] + [curves[n][h] for n in names] for h in range(dataset.hours)]
    path = config.out / "duration_curves.csv"
    _write(path, _csv_text(["hour"] + names, rows))
    written.append(path)

    included = result.included
    doc = {
        "schema": "dhpeak.metrics/1",
        "source": "synthetic" if config.synth is not None else "csv",
        "seed": config.synth.seed if config.synth is not None else None,
        "hours": dataset.hours,
        "meters": dataset.meter_ids,
        "included": sorted(included) if included is not None else dataset.meter_ids,
        "lambdas": [float(v) for v in config.lambdas],
        "constants": asdict(config.constants),
        "scenarios": scenarios,
    }
    path = config.out / "metrics.json"
    _write(path, json.dumps(doc, indent=2) + "\n")
    written.append(path)
    return written


def cmd_run(config: RunConfig) -> list[Path]:
    return write_run(config, run_scenarios(config))


def _sweep_job(payload):
    dataset, kind, level, included, constants = payload
    outcome = compose(dataset, [StrategyConfig(kind, level)], constants, included)
    return peak_reduction(dataset, outcome.dataset), heat_deficit(dataset, outcome.dataset)


def cmd_sweep(config: RunConfig) -> list[Path]:
    if not config.grid:
        raise UsageError("sweep needs a non-empty grid")
    dataset = load_dataset(config)
    included = _included(config, dataset)
    jobs = [(dataset, kind, v, included, config.constants) for kind in ("ls", "fl") for v in config.grid]
    results = _map(_sweep_job, jobs, config.jobs)
    rows = [[kind, float(v), red, defi] for (_, kind, v, _, _), (red, defi) in zip(jobs, results)]
    path = config.out / "sweep.csv"
    _write(path, _csv_text(["strategy", "parameter", "peak_reduction", "heat_deficit"], rows))
    return [path]


def _rank_job(payload):
    dataset, config, candidates, constants = payload
    return greedy_rank(dataset, config, constants, candidates)


def cmd_rank(config: RunConfig) -> list[Path]:
    dataset = load_dataset(config)
    candidates = _included(config, dataset)
    variants = []
    for raw in config.strategies or RANK_VARIANTS:
        if raw == "original":
            continue
        stages = parse_chain(raw, config.alpha, config.beta)
        if len(stages) != 1:
            raise UsageError(f"rank needs single strategies, got {raw!r}")
        if stages[0] not in variants:
            variants.append(stages[0])
    if not variants:
        raise UsageError("rank needs at least one strategy other than original")
    curves = _map(_rank_job, [(dataset, v, candidates, config.constants) for v in variants], config.jobs)
    names = [v.name for v in variants]
    n = len(curves[0].order)
    red_rows = [[k + 1] + [c.reduction[k] for c in curves] for k in range(n)]
    ret_rows = [[k + 1] + [c.return_temperature[k] for c in curves] for k in range(n)]
    order_rows = [[k + 1] + [c.order[k] for c in curves] for k in range(n)]
    paths = [config.out / "included_meters.csv", config.out / "return_temperatures.csv", config.out / "greedy_order.csv"]
    _write(paths[0], _csv_text(["meters"] + names, red_rows))
    _write(paths[1], _csv_text(["meters"] + names, ret_rows))
    _write(paths[2], _csv_text(["meters"] + names, order_rows))
    return paths


# ---------------------------------------------------------------------------
# argument parsing

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="INI-style config file")
    p.add_argument("--out", default=S, help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=S, help="synthetic data seed (u64)")
    p.add_argument("--days", type=int, default=S, help="synthetic data length in days")
    p.add_argument("--meter-csv", dest="meter_csv", default=S)
    p.add_argument("--meta-csv", dest="meta_csv", default=S)
    p.add_argument("--rho", type=float, default=S)
    p.add_argument("--cp", type=float, default=S)
    p.add_argument("--eta-pump", dest="eta_pump", type=float, default=S)
    p.add_argument("--lambda", dest="lambda", action="append", default=S, help="pump exponent(s), comma list or repeated")
    p.add_argument("--alpha", type=float, default=S)
    p.add_argument("--beta", type=float, default=S)
    p.add_argument("--include", action="append", default=S, help="meter ids, comma list or repeated")
    p.add_argument("--strategy", action="append", default=S, help="scenario chain(s), e.g. ls20, tl+ls20")
    p.add_argument("--grid", action="append", default=S, help="sweep values in [0, 1)")
    p.add_argument("--rel-tol", dest="rel_tol", type=float, default=S)
    p.add_argument("--abs-tol", dest="abs_tol", type=float, default=S)
    p.add_argument("--jobs", type=int, default=S, help="worker processes")
    return p


COMMANDS = {
    "synth": (cmd_synth, "write a synthetic meter.csv + meta.csv"),
    "validate": (cmd_validate, "gap-fill and check the heat identity"),
    "run": (cmd_run, "apply scenarios; write duration curves, metrics and altered data"),
    "sweep": (cmd_sweep, "peak reduction and heat deficit over an alpha/beta grid"),
    "rank": (cmd_rank, "greedy meter ranking per strategy"),
}


def make_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="dhpeak", description="Peak flow reduction analysis for district heating meter data.", parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, help=help_text, parents=[common])
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    for key in ("config", "out", "seed", "days", "meter_csv", "meta_csv", "rho", "cp", "eta_pump", "lambda",
                "alpha", "beta", "include", "strategy", "grid", "rel_tol", "abs_tol", "jobs"):
        if not hasattr(args, key):
            setattr(args, key, None)
    func = COMMANDS[args.command][0]
    try:
        config = build_config(args)
        result = func(config)
    except UsageError as exc:
        print(f"dhpeak: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _ValidationFailed as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    except IngestError as exc:
        print(f"dhpeak: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (StrategyError, NoConvergence, DegenerateInput) as exc:
        print(f"dhpeak: strategy failed: {exc}", file=sys.stderr)
        return EXIT_STRATEGY
    except OSError as exc:
        print(f"dhpeak: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"dhpeak: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if isinstance(result, str):
        print(result)
    else:
        for path in result:
            print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
