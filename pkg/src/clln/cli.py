"""Command-line entry point.

Subcommands: `run` trains a seeded campaign from a config file and writes
every artifact plus a resolved-config echo; `oracle` writes the brute-force
baseline for a config's environment; `verify` runs the numerical check
suite; `eval` replays saved gates into an occupancy heatmap. Exit codes:
0 success, 1 runtime failure, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .circuit import CircuitError
from .config import ConfigError, dump_resolved, load_config
from .envs import FourStateMDP, GridNav
from .experiment import (
    _write_heatmap,
    _write_oracle_files,
    enumerate_strategies_fourstate,
    grid_policy_oracle,
    occupancy_heatmap,
    run_campaign,
)
from .verification import LEVELS, format_results, run_checks


def _parse_seed_list(text: str) -> list:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(
            f"--seed-list must be comma-separated integers, got {text!r}"
        ) from None


def _prepare_out_dir(out, force: bool) -> Path:
    if out is None:
        raise ConfigError(
            "no output directory: set `output` in the config or pass --out"
        )
    path = Path(out)
    if path.is_dir() and any(path.iterdir()) and not force:
        raise ConfigError(
            f"output directory {path} is not empty; pass --force to write anyway"
        )
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(args):
    seed_list = _parse_seed_list(args.seed_list) if args.seed_list else None
    return load_config(args.config, overrides=args.override, seed_list=seed_list)


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _prepare_out_dir(args.out or cfg.output, args.force)
    (out / "config.resolved.yaml").write_text(dump_resolved(cfg))
    aggregate = run_campaign(
        cfg.base_trial,
        cfg.seeds,
        out_dir=out,
        parallel=not args.serial,
        oracle_seed=cfg.oracle_seed,
        eval_steps=cfg.oracle_eval_steps,
    )
    print(f"campaign {cfg.name}: {aggregate['n_trials']} trials, "
          f"{aggregate['n_failed']} failed")
    print(f"oracle best {aggregate['oracle_best_value']:.6f}, "
          f"worst {aggregate['oracle_worst_value']:.6f}")
    if "n_matching_oracle_best" in aggregate:
        print(f"{aggregate['n_matching_oracle_best']}/{aggregate['n_trials']} "
              "trials match the oracle-best strategy")
    if "n_optimal_policies" in aggregate:
        print(f"{aggregate['n_optimal_policies']}/{aggregate['n_trials']} "
              "trials reach an optimal policy")
    if "mean_final_bin_reward" in aggregate:
        print(f"mean final-bin reward {aggregate['mean_final_bin_reward']:.6f}")
    for row in aggregate["trials"]:
        if row["failed"]:
            print(f"trial {row['seed']} failed: {row['error']}", file=sys.stderr)
    if args.plots:
        _plot_curves(out)
    print(f"artifacts in {out}")
    return 1 if aggregate["n_failed"] else 0


def cmd_oracle(args) -> int:
    cfg = _load(args)
    out = _prepare_out_dir(args.out or cfg.output, args.force)
    env = cfg.environment
    if isinstance(env, FourStateMDP):
        report = enumerate_strategies_fourstate(
            env, eval_steps=cfg.oracle_eval_steps, oracle_seed=cfg.oracle_seed
        )
    else:
        report = grid_policy_oracle(env)
    _write_oracle_files(out, report)
    print(f"{len(report.values)} strategies evaluated")
    print(f"best {report.best_value:.6f} by "
          f"{''.join(str(a) for a in report.best_strategy)}, "
          f"worst {report.worst_value:.6f}")
    print(f"artifacts in {out}")
    return 0


def cmd_verify(args) -> int:
    results = run_checks(args.level)
    print(format_results(results))
    return 0 if all(r.passed for r in results) else 1


def cmd_eval(args) -> int:
    cfg = _load(args)
    if not isinstance(cfg.environment, GridNav):
        raise ConfigError("eval computes grid occupancy; the config must use "
                          "environment.kind: grid")
    try:
        with open(args.gates) as fh:
            payload = json.load(fh)
        gates = [float(g) for g in payload["gates"]]
        trial_seed = int(payload["trial_seed"])
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read gates file {args.gates}: {exc}") from exc
    if len(gates) != cfg.topology.edge_count:
        raise ConfigError(
            f"gates file has {len(gates)} gates but the topology has "
            f"{cfg.topology.edge_count} edges"
        )
    heatmap = occupancy_heatmap(
        cfg.environment, cfg.base_trial, gates,
        steps=args.steps, eval_seed=trial_seed,
    )
    for row in heatmap:
        print(",".join(f"{x:.6f}" for x in row))
    print(f"target occupancy {heatmap[cfg.environment.target]:.4f}")
    if args.out:
        path = Path(args.out)
        if path.is_dir():
            path = path / "heatmap.csv"
        if path.exists() and not args.force:
            raise ConfigError(f"{path} exists; pass --force to overwrite")
        path.parent.mkdir(parents=True, exist_ok=True)
        _write_heatmap(path, heatmap)
        print(f"wrote {path}")
    return 0


def _plot_curves(out_dir: Path) -> None:
    """Best-effort SVG of the reward curves; failures warn, never abort."""
    try:
        import matplotlib

        matplotlib.use("svg")
        import matplotlib.pyplot as plt

        with open(out_dir / "curves.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        header, data = rows[0], rows[1:]
        mids = [(float(r[0]) + float(r[1])) / 2 for r in data]
        fig, ax = plt.subplots(figsize=(6, 4))
        for col in range(2, len(header) - 1):
            ax.plot(mids, [float(r[col]) for r in data],
                    color="0.7", linewidth=0.8)
        ax.plot(mids, [float(r[-1]) for r in data],
                color="C0", linewidth=2.0, label="mean")
        with open(out_dir / "oracle.json") as fh:
            oracle = json.load(fh)
        ax.axhline(oracle["best_value"], color="C2", linestyle="--",
                   label="oracle best")
        ax.axhline(oracle["worst_value"], color="C3", linestyle=":",
                   label="oracle worst")
        ax.set_xscale("log")
        ax.set_xlabel("training step")
        ax.set_ylabel("mean reward per bin")
        ax.legend(loc="lower right", fontsize=8)
        fig.tight_layout()
        fig.savefig(out_dir / "reward_curves.svg")
        plt.close(fig)
    except Exception as exc:
        print(f"plotting skipped: {exc}", file=sys.stderr)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clln",
        description="Train and inspect self-adjusting resistor networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="train a seeded campaign from a config")
    run_p.add_argument("config", help="YAML config path")
    run_p.add_argument("--out", help="output directory (overrides config)")
    run_p.add_argument("--seed-list", help="comma-separated trial seeds")
    run_p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE", help="set a config key, dotted path")
    run_p.add_argument("--serial", action="store_true",
                       help="run trials sequentially")
    run_p.add_argument("--force", action="store_true",
                       help="write into a non-empty output directory")
    run_p.add_argument("--plots", action="store_true",
                       help="emit an SVG reward-curve plot (best effort)")

    oracle_p = sub.add_parser("oracle", help="write the brute-force baseline")
    oracle_p.add_argument("config")
    oracle_p.add_argument("--out")
    oracle_p.add_argument("--seed-list", help=argparse.SUPPRESS)
    oracle_p.add_argument("--override", action="append", default=[],
                          metavar="KEY=VALUE")
    oracle_p.add_argument("--force", action="store_true")

    verify_p = sub.add_parser("verify", help="run the numerical check suite")
    verify_p.add_argument("--level", choices=sorted(LEVELS), default="default")

    eval_p = sub.add_parser("eval", help="occupancy heatmap from saved gates")
    eval_p.add_argument("config")
    eval_p.add_argument("--gates", required=True,
                        help="gates.json written by a run")
    eval_p.add_argument("--steps", type=int, default=10_000)
    eval_p.add_argument("--out", help="file or directory for heatmap.csv")
    eval_p.add_argument("--seed-list", help=argparse.SUPPRESS)
    eval_p.add_argument("--override", action="append", default=[],
                        metavar="KEY=VALUE")
    eval_p.add_argument("--force", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    commands = {
        "run": cmd_run,
        "oracle": cmd_oracle,
        "verify": cmd_verify,
        "eval": cmd_eval,
    }
    try:
        return commands[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CircuitError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
