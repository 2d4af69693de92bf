"""Command-line harness: ``odpricing run`` and ``odpricing fit``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import data_pipeline as dp
from .benchmark import solve_optimal_dual
from .economy import Economy, Phantom, economy_to_dict
from .errors import PricingError
from .market_clearing import clear_market
from .mechanisms import VARIANTS, InpParams, run_mechanism
from .welfare import dual_objective, primal_welfare, suboptimality_bounds

log = logging.getLogger("odpricing")

MODES = ("stationary", "nonstationary", "sweep-phi", "example")
SYNTHETIC = ("example1", "example2", "chicago", "random")
EXIT_USAGE = 2
EXIT_SOLVER = 3


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str = "example"
    dataset: str = "example1"
    variant: str = "inp"
    params: InpParams = field(default_factory=InpParams)
    steps: int = 60
    out: Path | None = None
    seed: int = 0
    fail_fast: bool = False
    jobs: int = 1
    weeks: int = 8
    n: int | None = None
    sweep: tuple[float, float, int] = (0.0, 40.0, 81)
    sweep_index: int = 0

    @property
    def synthetic(self) -> bool:
        return self.dataset in SYNTHETIC

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.out is None:
            raise ConfigError("an output directory is required (--out)")
        if not self.out.is_dir():
            raise ConfigError(f"output directory {str(self.out)!r} does not exist")
        if not self.synthetic and not Path(self.dataset).is_file():
            raise ConfigError(f"dataset {self.dataset!r} is neither a synthetic name "
                              f"{SYNTHETIC} nor a readable file")
        if self.steps < 0 or self.jobs < 1:
            raise ConfigError("steps must be >= 0 and jobs >= 1")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "dataset": self.dataset, "variant": self.variant,
                "params": dict(self.params.__dict__), "steps": self.steps, "seed": self.seed,
                "fail_fast": self.fail_fast, "weeks": self.weeks}


# ---------------------------------------------------------------------------
# economy sources


def _synthetic(cfg: ExperimentConfig) -> tuple[Economy, Phantom]:
    spec = {"kind": cfg.dataset, "seed": cfg.seed or (2020 if cfg.dataset == "chicago" else 0)}
    if cfg.dataset == "random":
        spec["n"] = cfg.n or 4
    economy = dp.synthetic_economy(spec)
    return economy, dp.synthetic_phantom(spec, economy)


def _read_records(path: str) -> tuple[list[dp.TripRecord], dp.ParseStats]:
    stats = dp.ParseStats()
    records = list(dp.parse_trips(path, stats=stats))
    return records, stats


def _n_locations(cfg: ExperimentConfig, records) -> int:
    if cfg.n:
        return cfg.n
    return max((max(r.pickup, r.dropoff) for r in records), default=0)


def _stationary_economy(cfg: ExperimentConfig) -> tuple[Economy, Phantom]:
    if cfg.synthetic:
        return _synthetic(cfg)
    records, _ = _read_records(cfg.dataset)
    n = _n_locations(cfg, records)
    economy, _ = dp.build_week_economy(records, n=n)
    return economy, Phantom.uniform(n, 500.0, 3.0, 4)


def _weekly_economies(cfg: ExperimentConfig) -> tuple[list[tuple[Economy, dp.WeeklyEconomySpec]], Phantom]:
    if cfg.synthetic:
        weeks = dp.synthetic_weeks(cfg.weeks, seed=cfg.seed or 2020)
    else:
        records, _ = _read_records(cfg.dataset)
        excluded = dp.detect_event_days(records)
        weeks = dp.build_weekly_economies(records, n=_n_locations(cfg, records), excluded=excluded)
        weeks = [w for w in weeks if not w[1].excluded]
    n = weeks[0][0].n
    return weeks, Phantom.uniform(n, 1000.0, 4.0, 4)


# ---------------------------------------------------------------------------
# writers


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _summary(cfg, traj, economy, phantom, welfare_star) -> dict:
    final = traj.final
    last_outcome = traj.outcomes[-1] if traj.outcomes else None
    bounds = suboptimality_bounds(last_outcome, economy, phantom) if last_outcome else {}
    return {
        "config": cfg.to_dict(),
        "steps": final.t,
        "converged": traj.converged,
        "stop_reason": traj.stop_reason,
        "backtracks": traj.backtracks,
        "solver_failures": len(traj.errors),
        "final_welfare": final.primal,
        "welfare_star": welfare_star,
        "welfare_ratio": final.primal / welfare_star,
        "initial_welfare_ratio": traj.entries[0].primal / welfare_star,
        "f": final.f,
        "dual": final.dual,
        **bounds,
    }


def _run_stationary(cfg: ExperimentConfig) -> int:
    economy, phantom = _stationary_economy(cfg)
    params = replace(cfg.params, max_steps=cfg.steps)
    traj = run_mechanism(economy, phantom, cfg.variant, params, cfg.steps,
                         fail_fast=cfg.fail_fast, keep_outcomes=True)
    welfare_star = solve_optimal_dual(economy).welfare_star
    traj.to_csv(cfg.out / "trajectory.csv")
    traj.to_json(cfg.out / "trajectory.json")
    steps = cfg.out / "steps"
    steps.mkdir(exist_ok=True)
    for entry, outcome in zip((e for e in traj.entries if not e.error), traj.outcomes):
        _write_json(steps / f"step-{entry.t:04d}.json", outcome.to_dict())
    _write_json(cfg.out / "summary.json", _summary(cfg, traj, economy, phantom, welfare_star))
    return 0


def _week_baselines(economy: Economy, phantom: Phantom) -> tuple[float, float]:
    naive = primal_welfare(clear_market(economy, phantom), economy)
    return naive, solve_optimal_dual(economy).welfare_star


def _run_nonstationary(cfg: ExperimentConfig) -> int:
    weeks, phantom = _weekly_economies(cfg)
    economies = [w[0] for w in weeks]
    params = replace(cfg.params, backtracking_enabled=False, f_tol=0.0)
    horizon = len(economies) - 1
    traj = run_mechanism(economies, phantom, cfg.variant, params, horizon,
                         fail_fast=cfg.fail_fast, keep_outcomes=True)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            baselines = list(pool.map(_week_baselines, economies, [phantom] * len(economies)))
    else:
        baselines = [_week_baselines(e, phantom) for e in economies]
    traj.to_csv(cfg.out / "trajectory.csv")
    with open(cfg.out / "weekly.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "week", "m", "welfare_mechanism", "welfare_naive", "welfare_optimal"])
        for entry, (_, spec), (naive, best) in zip(traj.entries, weeks, baselines):
            writer.writerow([entry.t, "-".join(map(str, spec.week or ())), repr(spec.m),
                             repr(entry.primal), repr(naive), repr(best)])
    ratios = [e.primal / b[1] for e, b in zip(traj.entries, baselines)]
    naive_ratios = [b[0] / b[1] for b in baselines]
    _write_json(cfg.out / "summary.json", {
        "config": cfg.to_dict(), "weeks": len(economies),
        "mean_welfare_ratio": float(np.mean(ratios)),
        "mean_naive_ratio": float(np.mean(naive_ratios)),
        "welfare_ratio": float(ratios[-1]),
        "solver_failures": len(traj.errors),
    })
    return 0


def _sweep_row(args) -> list:
    economy, phantom, phi = args
    out = clear_market(economy, phantom, phi)
    return [*out.pi.tolist(), *out.p.ravel().tolist(), *out.x.ravel().tolist(),
            *out.y.ravel().tolist(), primal_welfare(out, economy),
            dual_objective(economy, out.phi, out.pi)]


def _run_sweep(cfg: ExperimentConfig) -> int:
    economy, phantom = _stationary_economy(cfg)
    n = economy.n
    lo, hi, count = cfg.sweep
    grid = np.linspace(lo, hi, int(count))
    jobs = []
    for value in grid:
        phi = np.zeros(n - 1)
        phi[cfg.sweep_index] = value
        jobs.append((economy, phantom, phi))
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    pairs = [f"{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    header = ([f"phi_{cfg.sweep_index + 1}"] + [f"pi_{k + 1}" for k in range(n)]
              + [f"p_{ij}" for ij in pairs] + [f"x_{ij}" for ij in pairs]
              + [f"y_{ij}" for ij in pairs] + ["primal", "dual"])
    with open(cfg.out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for value, row in zip(grid, rows):
            writer.writerow([repr(float(value)), *map(repr, row)])
    return 0


def cmd_run(cfg: ExperimentConfig) -> int:
    cfg.validate()
    if cfg.mode in ("stationary", "example"):
        return _run_stationary(cfg)
    if cfg.mode == "nonstationary":
        return _run_nonstationary(cfg)
    return _run_sweep(cfg)


def cmd_fit(dataset: str, out: Path, window: dp.WeekWindow = dp.WeekWindow(),
            n: int | None = None) -> int:
    if not out.is_dir():
        raise ConfigError(f"output directory {str(out)!r} does not exist")
    records, stats = _read_records(dataset)
    n = n or max((max(r.pickup, r.dropoff) for r in records), default=0)
    excluded = sorted(dp.detect_event_days(records, window=window))
    weeks = dp.build_weekly_economies(records, window, n=n, excluded=excluded) if records else []
    weeks.sort(key=lambda w: w[1].week)
    for t, (economy, spec) in enumerate(weeks, start=1):
        name = f"economy-week-{t}.json"
        doc = economy_to_dict(economy)
        doc["week"] = spec.to_dict()
        _write_json(out / name, doc)
    _write_json(out / "stats.json", {**stats.to_dict(), "weeks": len(weeks),
                                     "excluded": [list(k) for k in excluded]})
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="odpricing", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a pricing experiment")
    run.add_argument("--config", type=Path, help="JSON config; flags override its keys")
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--dataset", help=f"trip CSV path or one of {SYNTHETIC}")
    run.add_argument("--variant", choices=VARIANTS)
    run.add_argument("--tau", type=float)
    run.add_argument("--beta", type=float)
    run.add_argument("--sigma", type=float)
    run.add_argument("--gamma", type=float)
    run.add_argument("--steps", type=int)
    run.add_argument("--weeks", type=int)
    run.add_argument("--n", type=int)
    run.add_argument("--out", type=Path)
    run.add_argument("--seed", type=int)
    run.add_argument("--fail-fast", action="store_true", default=None)
    run.add_argument("--jobs", type=int)
    run.add_argument("--sweep", type=float, nargs=3, metavar=("LO", "HI", "COUNT"))

    fit = sub.add_parser("fit", help="calibrate weekly economies from a trip CSV")
    fit.add_argument("--dataset", required=True)
    fit.add_argument("--out", type=Path, required=True)
    fit.add_argument("--n", type=int)
    fit.add_argument("--weekday", type=int, default=2)
    fit.add_argument("--hours", type=float, nargs=2, default=(7.0, 8.0))
    return parser


PARAM_KEYS = ("tau", "beta", "sigma", "gamma")


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    doc = {}
    if args.config is not None:
        try:
            doc = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    for key in ("mode", "dataset", "variant", "steps", "out", "seed", "fail_fast", "jobs",
                "weeks", "n", "sweep", *PARAM_KEYS):
        value = getattr(args, key, None)
        if value is not None:
            doc[key] = value
    params = dict(doc.pop("params", {}))
    for key in PARAM_KEYS:
        if key in doc:
            params[key] = doc.pop(key)
    unknown = set(doc) - {"mode", "dataset", "variant", "steps", "out", "seed", "fail_fast",
                          "jobs", "weeks", "n", "sweep", "sweep_index"}
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    try:
        params = InpParams(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad mechanism parameters: {exc}") from None
    if "out" in doc:
        doc["out"] = Path(doc["out"])
    if "sweep" in doc:
        doc["sweep"] = tuple(doc["sweep"])
    return ExperimentConfig(params=params, **doc)


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fit":
            window = dp.WeekWindow(args.weekday, *args.hours)
            return cmd_fit(args.dataset, args.out, window, args.n)
        return cmd_run(build_config(args))
    except (ConfigError, dp.DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PricingError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
