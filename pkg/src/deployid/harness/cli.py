"""Command-line entry point.

Subcommands mirror the experiment pipeline: gen-data, fit, train,
robustness, report.  Exit codes: 0 success, 2 configuration or validation
error, 3 numerical failure, 4 missing artifact.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import (DivergenceError, DomainError, NotFoundError,
                      OptimizationError, ValidationError)
from .commands import (cmd_fit, cmd_gen_data, cmd_report, cmd_robustness,
                       cmd_train)
from .config import ScenarioConfig, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_MISSING = 4

SCENARIO_DIR = Path(__file__).parent / "scenarios"
DEFAULT_SCENARIO = SCENARIO_DIR / "falcon-stage.yaml"


def builtin_scenario_path(name: str = "falcon-stage") -> Path:
    return SCENARIO_DIR / f"{name}.yaml"


def _add_common(parser: argparse.ArgumentParser, out_help: str) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="scenario YAML; defaults to the shipped "
                             "falcon-stage scenario")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed override (defaults to the config's)")
    parser.add_argument("--out", type=Path, required=True, help=out_help)
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker threads for the robustness sweep; other "
                             "commands run single-process")
    parser.add_argument("--smoke", action="store_true",
                        help="shrink every budget to CI scale")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deployid",
        description="Deployment-configuration identification experiments: "
                    "simulate, cluster, optimize actuation sequences, sweep "
                    "noise robustness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="simulate labelled trajectories")
    _add_common(p, "output dataset CSV path")

    p = sub.add_parser("fit", help="cluster a dataset and store the model")
    _add_common(p, "output model JSON path")
    p.add_argument("--dataset", type=Path, required=True,
                   help="trajectory CSV from gen-data")

    p = sub.add_parser("train", help="optimize an actuation sequence")
    _add_common(p, "output directory for checkpoint and logs")
    p.add_argument("--scenario", choices=["speed", "fuel", "custom"],
                   default="speed",
                   help="weight preset; 'custom' uses the config's weights")

    p = sub.add_parser("robustness", help="accuracy vs noise sweep")
    _add_common(p, "output sweep CSV path")
    p.add_argument("--checkpoint", type=Path, required=True,
                   help="trained policy checkpoint JSON")
    p.add_argument("--model", type=Path, default=None,
                   help="fitted cluster model; refit from the extracted "
                        "sequence when omitted")

    p = sub.add_parser("report", help="aggregate run artifacts into tables")
    p.add_argument("--run-dir", type=Path, required=True,
                   help="directory holding train/robustness outputs")
    p.add_argument("--config", type=Path, default=None,
                   help="accepted for uniformity; reports read artifacts only")
    p.add_argument("--seed", type=int, default=None,
                   help="accepted for uniformity; reports are deterministic")
    p.add_argument("--out", type=Path, default=None,
                   help="output directory (defaults to the run dir)")
    p.add_argument("--jobs", type=int, default=1,
                   help="accepted for uniformity; reports are single-process")
    p.add_argument("--smoke", action="store_true",
                   help="accepted for uniformity; no effect on reports")
    return parser


def _load(args) -> ScenarioConfig:
    path = args.config if args.config is not None else DEFAULT_SCENARIO
    config = load_config(path)
    if getattr(args, "smoke", False):
        config = config.smoke()
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen-data":
            out = cmd_gen_data(_load(args), args.out, seed=args.seed)
            print(f"wrote dataset {out}")
        elif args.command == "fit":
            report = cmd_fit(_load(args), args.dataset, args.out,
                             seed=args.seed)
            print(f"fit {report['n_series']} series into k={report['k']} "
                  f"clusters; mapped F1 = {report['mapped_f1']:.6f}")
            print(f"wrote model {report['model_path']}")
        elif args.command == "train":
            report = cmd_train(_load(args), args.scenario, args.out,
                               seed=args.seed)
            print(f"trained scenario {report['scenario']!r}: "
                  f"{report['episodes']} episodes, final mean reward "
                  f"{report['final_mean_reward_100']:.4f}, final F1 "
                  f"{report['final_f1']:.4f}")
            print(f"wrote artifacts under {report['out_dir']}")
        elif args.command == "robustness":
            report = cmd_robustness(_load(args), args.checkpoint, args.out,
                                    model_path=args.model, seed=args.seed,
                                    jobs=args.jobs)
            pairs = ", ".join(
                f"x{m:g}: {a:.3f}" for m, a in
                zip(report["multipliers"], report["accuracy_mean"]))
            print(f"sweep over {report['noise_axis']} noise -> {pairs}")
            print(f"wrote sweep {report['out_path']}")
        elif args.command == "report":
            report = cmd_report(args.run_dir, out_dir=args.out)
            print(f"aggregated {report['n_training_runs']} training runs and "
                  f"{report['n_sweep_rows']} sweep rows")
            print(f"wrote {report['summary_csv']} and {report['summary_txt']}")
        else:  # pragma: no cover - argparse enforces the choices
            raise ValidationError(f"unknown command {args.command!r}")
    except (ValidationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, OptimizationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (NotFoundError, FileNotFoundError) as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
