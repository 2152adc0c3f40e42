"""Command line front end.

    bioinsurance value      --scenario s.json [--grid lo:hi:steps]
    bioinsurance optimize   --scenario s.json [--lambda L ...]
    bioinsurance simulate   --scenario s.json [--trials N --horizon T --seed S]
    bioinsurance resilience --scenario s.json

Exit status: 0 success, 1 invalid input, 2 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass

from .model import ScenarioError, load_scenario
from .montecarlo import (
    TRAJECTORY_COLUMNS,
    BufferPoolSpec,
    SamplerConfig,
    buffer_pool_trajectory,
    simulate_buffer_pool,
)
from .optimize import NonConvergenceError, compare_regimes
from .resilience import resilience_inputs_from_dict, resilience_report
from .valuation import GRID_COLUMNS, valuation_grid

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2
COMMANDS = ("value", "optimize", "simulate", "resilience")
DEFAULT_GRID_STEPS = 11
DEFAULT_TRIALS = 10_000


@dataclass(frozen=True)
class RunManifest:
    command: str
    scenario_path: str
    seed: int = 0
    output_format: str = "json"
    grid: tuple[float, float, int] | None = None
    lambdas: tuple[float, ...] = ()
    trials: int = DEFAULT_TRIALS
    horizon: int | None = None
    workers: int = 1
    trajectory_path: str | None = None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _grid(text: str) -> tuple[float, float, int]:
    try:
        lo, hi, steps = text.split(":")
        out = float(lo), float(hi), int(steps)
    except ValueError:
        raise argparse.ArgumentTypeError("expected lo:hi:steps") from None
    if not all(math.isfinite(x) for x in out[:2]) or out[2] < 1:
        raise argparse.ArgumentTypeError("expected finite lo, hi and steps >= 1")
    return out


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bioinsurance", description="Biodiversity insurance value engine.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--scenario", required=True, help="scenario JSON file")
    parser.add_argument("--seed", type=_u64, default=0)
    parser.add_argument("--format", dest="output_format", choices=("json", "csv"), default="json")
    parser.add_argument("--grid", type=_grid, help="v grid lo:hi:steps (value)")
    parser.add_argument("--lambda", dest="lambdas", type=float, action="append", default=[],
                        help="insurance premium loading; repeatable (optimize)")
    parser.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    parser.add_argument("--horizon", type=int)
    parser.add_argument("--workers", type=int, default=1, help="threads for sampling (simulate)")
    parser.add_argument("--trajectory", dest="trajectory_path",
                        help="also write per-trial buffer trajectories to this CSV (simulate)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _json(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _check_finite(rows):
    for row in rows:
        for key, x in row.items():
            if isinstance(x, float) and not math.isfinite(x):
                raise NonConvergenceError(f"non-finite value for {key}: {x}")


def _run_value(m: RunManifest, scenario) -> str:
    lo, hi, steps = m.grid or (scenario.v_lo, scenario.v_hi, DEFAULT_GRID_STEPS)
    rows = valuation_grid(scenario, lo, hi, steps)
    _check_finite(rows)
    if m.output_format == "csv":
        return _csv(GRID_COLUMNS, rows)
    return _json({"command": "value", "results": rows})


def _run_optimize(m: RunManifest, scenario) -> str:
    lambdas = list(m.lambdas)
    if not lambdas and scenario.market is not None:
        lambdas = [scenario.market.lam]
    base, joints, rows = compare_regimes(scenario, lambdas)
    failed = [r for r in [base, *joints] if not r.converged]
    if failed:
        raise NonConvergenceError(f"optimizer did not converge: {failed[0]}", failed[0])
    table = [
        {"lambda": r.lam, "v_star_noins": r.v_star_noins, "v_star_joint": r.v_star_joint,
         "alpha_star": r.alpha_star, "ce_gain": r.ce_gain}
        for r in rows
    ]
    _check_finite([base.to_dict(), *(j.to_dict() for j in joints), *table])
    if m.output_format == "csv":
        return _csv(("lambda", "v_star_noins", "v_star_joint", "alpha_star", "ce_gain"), table)
    return _json({
        "command": "optimize",
        "no_insurance": base.to_dict(),
        "joint": [j.to_dict() for j in joints],
        "comparison": table,
    })


def _run_simulate(m: RunManifest, scenario) -> str:
    if "buffer_pool" not in scenario.extras:
        raise ScenarioError("buffer_pool", "is required for simulate")
    spec = BufferPoolSpec.from_dict(scenario.extras["buffer_pool"], horizon=m.horizon)
    cfg = SamplerConfig(n_samples=1, seed=m.seed, stream_id=0)
    summary = simulate_buffer_pool(spec, m.trials, cfg, workers=m.workers)
    _check_finite([summary.to_dict()])
    if m.trajectory_path:
        rows = [r for i in range(m.trials) for r in buffer_pool_trajectory(spec, i, cfg)]
        with open(m.trajectory_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(_csv(TRAJECTORY_COLUMNS, rows))
    if m.output_format == "csv":
        d = summary.to_dict()
        return _csv(tuple(d), [d])
    return _json({"command": "simulate", "seed": m.seed, "summary": summary.to_dict()})


def _run_resilience(m: RunManifest, scenario) -> str:
    if "resilience" not in scenario.extras:
        raise ScenarioError("resilience", "is required for the resilience command")
    inputs = resilience_inputs_from_dict(scenario.extras["resilience"], scenario)
    report = resilience_report(scenario, inputs).to_dict()
    _check_finite([report])
    if m.output_format == "csv":
        return _csv(("component", "value"), [{"component": k, "value": v} for k, v in report.items()])
    return _json({"command": "resilience", "report": report})


_DISPATCH = {
    "value": _run_value,
    "optimize": _run_optimize,
    "simulate": _run_simulate,
    "resilience": _run_resilience,
}


def run(manifest: RunManifest, out=None, err=None) -> int:
    """Execute one manifest, writing the report to ``out``. Returns the exit status."""
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        if manifest.command not in _DISPATCH:
            raise ScenarioError("command", f"must be one of {', '.join(COMMANDS)}")
        if manifest.trials < 1:
            raise ScenarioError("trials", "must be >= 1")
        if manifest.workers < 1:
            raise ScenarioError("workers", "must be >= 1")
        scenario = load_scenario(manifest.scenario_path)
        text = _DISPATCH[manifest.command](manifest, scenario)
    except ScenarioError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INVALID
    except NonConvergenceError as exc:
        err.write(f"non-convergence: {exc}\n")
        return EXIT_NONCONVERGED
    out.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    manifest = RunManifest(
        command=args.command,
        scenario_path=args.scenario,
        seed=args.seed,
        output_format=args.output_format,
        grid=args.grid,
        lambdas=tuple(args.lambdas),
        trials=args.trials,
        horizon=args.horizon,
        workers=args.workers,
        trajectory_path=args.trajectory_path,
    )
    return run(manifest)


if __name__ == "__main__":
    sys.exit(main())
