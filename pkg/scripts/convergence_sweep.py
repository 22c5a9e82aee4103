"""Run every experiment config and print a compact error table.

    python3 scripts/convergence_sweep.py                 # all configs
    python3 scripts/convergence_sweep.py staircase.cfg

CSV files land wherever each config's ``output`` key points (relative to
the current directory).
"""
import argparse
import sys
from pathlib import Path

from nonauto.cli import ConfigError, load_config, run_experiment
from nonauto.solver import SolverError

HERE = Path(__file__).resolve().parent / "configs"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="*", help="config names in scripts/configs or paths")
    args = ap.parse_args(argv)
    paths = [Path(c) if Path(c).exists() else HERE / c for c in args.configs] or sorted(HERE.glob("*.cfg"))
    status = 0
    for path in paths:
        try:
            cfg = load_config(path)
            rows = run_experiment(cfg)
        except (ConfigError, SolverError) as exc:
            print(f"{path.name}: {exc}", file=sys.stderr)
            status = 1
            continue
        print(f"\n{path.name} -> {cfg.output_path}")
        print(f"{'kind':>7} {'n':>5} {'mrVV* error':>12} {'l2H error':>12} {'energy res':>11} apriori")
        for r in rows:
            flags = "ok" if r.apriori_supV_ok and r.apriori_h1_ok else "-"
            print(f"{r.kind:>7} {r.n_intervals:5d} {r.mrVVdual_error:12.4e} {r.l2H_error:12.4e} "
                  f"{r.energy_residual:11.2e} {flags}")
    return status


if __name__ == "__main__":
    sys.exit(main())
