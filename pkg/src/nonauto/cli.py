"""Command line: ``run <config>``, ``verify [--seed N]``, ``scenarios``.

Config files are flat ``key = value`` lines; values are JSON literals
(numbers, lists, true/false, quoted strings) or bare words. Scenario
parameters use ``param.<name>`` keys. Example::

    scenario = linear_coeff
    param.a = 1.0
    param.b = 1.0
    n_interior = 31
    horizon = 1.0
    f = zero
    u0 = mode_1
    kind = both
    n_list = [4, 8, 16, 32, 64]
    steps_per_interval = 64
    theta = 0.5
    reference = oracle
    output = results/linear.csv
"""
import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import convergence_study
from .approx import Kind
from .forms import SCENARIOS, FormError, preset_rhs, preset_vector, scenario, scenario_defaults
from .solver import SolverError
from .triple import TripleError, build_fem_triple

CSV_COLUMNS = ["kind", "n_intervals", "mesh", "mrVVdual_error", "l2V_error", "l2H_error",
               "h1H_norm", "supV_norm", "energy_residual", "apriori_supV_ok", "apriori_h1_ok",
               "wall_seconds"]

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
THREADS_ENV = "NONAUTO_THREADS"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    scenario_name: str
    params: dict = field(default_factory=dict)
    triple_size: int = 31
    horizon: float = 1.0
    f_spec: str = "zero"
    u0_spec: str = "mode_1"
    kind: str = "both"
    n_list: list = field(default_factory=lambda: [4, 8, 16, 32, 64])
    steps_per_interval: int = 64
    theta: float = 0.5
    reference: str = "oracle"
    output_path: str = "results.csv"
    seed: int = 0
    nodes_per_interval: int = 32
    record_timing: bool = True

    def validate(self):
        try:
            defaults = scenario_defaults(self.scenario_name)
        except FormError as exc:
            raise ConfigError(str(exc)) from None
        unknown = set(self.params) - set(defaults)
        if "T" in self.params:
            raise ConfigError("set the horizon with `horizon`, not param.T")
        if unknown:
            raise ConfigError(f"unknown scenario parameters: {sorted(unknown)}")
        if self.kind not in ("step", "linear", "both"):
            raise ConfigError("kind must be step, linear or both")
        n = self.n_list
        if not n or any(int(k) != k or k < 1 for k in n) or any(b <= a for a, b in zip(n, n[1:])):
            raise ConfigError("n_list must be strictly increasing positive integers")
        if self.reference not in ("oracle", "finegrid", "direct"):
            raise ConfigError("reference must be oracle, finegrid or direct")
        if not 0.5 <= self.theta <= 1.0:
            raise ConfigError("theta must lie in [1/2, 1]")
        if self.steps_per_interval < 1 or self.triple_size < 1 or self.nodes_per_interval < 1:
            raise ConfigError("steps_per_interval, n_interior and nodes_per_interval must be >= 1")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        return self

    def kinds(self):
        return [Kind.STEP, Kind.LINEAR] if self.kind == "both" else [Kind.parse(self.kind)]


_KEYS = {
    "scenario": ("scenario_name", str), "n_interior": ("triple_size", int),
    "horizon": ("horizon", float), "f": ("f_spec", str), "u0": ("u0_spec", str),
    "kind": ("kind", str), "n_list": ("n_list", list), "steps_per_interval": ("steps_per_interval", int),
    "theta": ("theta", float), "reference": ("reference", str), "output": ("output_path", str),
    "seed": ("seed", int), "nodes_per_interval": ("nodes_per_interval", int),
    "record_timing": ("record_timing", bool),
}


def _parse_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config(text):
    values, params = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`")
        key, raw = (s.strip() for s in line.split("=", 1))
        value = _parse_value(raw)
        if key.startswith("param."):
            params[key[6:]] = value
            continue
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        name, typ = _KEYS[key]
        if typ is bool and not isinstance(value, bool):
            raise ConfigError(f"line {lineno}: {key} must be true or false")
        if typ is list and not isinstance(value, list):
            raise ConfigError(f"line {lineno}: {key} must be a list")
        try:
            values[name] = value if typ in (bool, list) else typ(value)
        except (TypeError, ValueError):
            raise ConfigError(f"line {lineno}: bad value for {key}") from None
    if "scenario_name" not in values:
        raise ConfigError("missing `scenario`")
    return ExperimentConfig(params=params, **values).validate()


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def write_csv(fh, rows, error=None):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        d = row.as_dict()
        writer.writerow([_fmt(d[c]) for c in CSV_COLUMNS])
    if error is not None:
        fh.write(f"# PARTIAL: {error}\n")


def run_experiment(cfg):
    """Run the sweep described by ``cfg`` and write its CSV. Returns the rows."""
    try:
        triple = build_fem_triple(cfg.triple_size)
        family = scenario(cfg.scenario_name, {**cfg.params, "T": cfg.horizon}, triple)
        f = preset_rhs(cfg.f_spec, triple, cfg.seed)
        u0 = preset_vector(cfg.u0_spec, triple, cfg.seed)
    except (FormError, TripleError) as exc:
        raise ConfigError(str(exc)) from None
    clock = time.perf_counter if cfg.record_timing else (lambda: 0.0)
    rows, error = [], None
    for kind in cfg.kinds():
        try:
            rows.extend(convergence_study(
                family, f, u0, kind, cfg.n_list, triple, cfg.reference, cfg.steps_per_interval,
                cfg.theta, cfg.nodes_per_interval, workers=_threads(), clock=clock))
        except (SolverError, FormError, FloatingPointError) as exc:
            error = exc
            break
    path = Path(cfg.output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_csv(fh, rows, error)
    if error is not None:
        raise SolverError(f"sweep aborted, partial results in {path}: {error}")
    return rows


def build_parser():
    parser = argparse.ArgumentParser(prog="nonauto", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment in a config file")
    p_run.add_argument("config")
    p_ver = sub.add_parser("verify", help="check every invariant across modules and scenarios")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--inject-fault", choices=["symmetry"], default=None,
                       help=argparse.SUPPRESS)
    sub.add_parser("scenarios", help="list registered scenarios")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "scenarios":
        for name, (_, params, doc) in SCENARIOS.items():
            print(f"{name:20s} {doc}  defaults: {json.dumps(params)}")
        return EXIT_OK
    if args.command == "run":
        try:
            cfg = load_config(args.config)
            rows = run_experiment(cfg)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except SolverError as exc:
            print(f"solver error: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        print(f"wrote {len(rows)} rows to {cfg.output_path}")
        return EXIT_OK
    from .verify import run_verify

    report, ok = run_verify(args.seed, inject_fault=args.inject_fault)
    sys.stdout.write(report)
    return EXIT_OK if ok else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
