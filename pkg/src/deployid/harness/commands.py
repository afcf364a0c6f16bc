"""Experiment commands behind the CLI: generate, fit, train, sweep, report.

Each command is a pure function of (scenario config, seed): identical inputs
reproduce every output file byte for byte.  Commands raise typed errors and
leave exit-code mapping to the CLI layer.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from ..dynamics import TrajectorySet, generate_dataset
from ..errors import NotFoundError, ValidationError
from ..rl import (WEIGHT_PRESETS, extract_sequence, init_policy, load_policy,
                  save_policy, train)
from ..tsc import apply_label_mapping, classify, kmeans_fit, load_model, save_model
from .config import RobustnessSweepSpec, ScenarioConfig

UTILIZATION_HEADER = ("actuator,kind,mean_abs_command_over_slots"
                      "  # |duty| for thrusters and |voltage fraction| for wheels")


def _require_file(path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"{what} not found: {path}")
    return path


def _fmt(x: float) -> str:
    return f"{float(x)!r}"


def cmd_gen_data(config: ScenarioConfig, out_path, seed: int | None = None,
                 sequence=None) -> Path:
    """Simulate every candidate configuration and write the labelled CSV."""
    out_path = Path(out_path)
    seq = sequence if sequence is not None else config.default_sequence()
    dataset = generate_dataset(
        config.candidate_params(), seq, config.replicates, config.sim,
        master_seed=config.seed if seed is None else int(seed),
        bank=config.bank, wheel_modules=config.wheel_modules)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    dataset.to_csv(out_path)
    return out_path


def _strided_series(dataset: TrajectorySet, stride: int):
    series = [traj.omega[::stride] for traj in dataset]
    labels = [traj.label for traj in dataset]
    return series, labels


def cmd_fit(config: ScenarioConfig, dataset_path, out_model_path,
            seed: int | None = None) -> dict:
    """Cluster a trajectory CSV, map labels, and store the model file."""
    dataset_path = _require_file(dataset_path, "dataset")
    out_model_path = Path(out_model_path)
    dataset = TrajectorySet.from_csv(dataset_path)
    series, labels = _strided_series(dataset, config.tsc_stride)
    model = kmeans_fit(series, k=len(config.configurations), gamma=config.gamma,
                       n_init=config.n_init,
                       seed=config.seed if seed is None else int(seed))
    apply_label_mapping(model, labels)
    out_model_path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out_model_path)
    return {
        "mapped_f1": model.mapped_f1,
        "inertia": model.inertia,
        "k": model.k,
        "n_series": len(series),
        "model_path": str(out_model_path),
    }


def _write_sequence_csv(sequence, path: Path) -> None:
    n_th = sequence[0].thruster_duty.shape[0]
    n_wh = sequence[0].wheel_voltage_fraction.shape[0]
    header = ["slot"] + [f"duty_{i}" for i in range(n_th)] \
        + [f"wheel_frac_{i}" for i in range(n_wh)]
    lines = [",".join(header)]
    for slot, action in enumerate(sequence):
        row = [str(slot)] + [_fmt(d) for d in action.thruster_duty] \
            + [_fmt(v) for v in action.wheel_voltage_fraction]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_utilization_csv(sequence, path: Path) -> None:
    duties = np.stack([a.thruster_duty for a in sequence])
    fracs = np.stack([a.wheel_voltage_fraction for a in sequence])
    lines = [UTILIZATION_HEADER]
    for i in range(duties.shape[1]):
        lines.append(f"thruster_{i},thruster,{_fmt(np.mean(np.abs(duties[:, i])))}")
    for i in range(fracs.shape[1]):
        lines.append(f"wheel_{i},wheel,{_fmt(np.mean(np.abs(fracs[:, i])))}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_train(config: ScenarioConfig, scenario: str, out_dir,
              seed: int | None = None) -> dict:
    """Train the policy under a weight preset; write checkpoint, log, sequence."""
    if scenario in WEIGHT_PRESETS:
        weights = WEIGHT_PRESETS[scenario]
    elif scenario == "custom":
        weights = config.reward
    else:
        raise ValidationError(
            f"unknown scenario {scenario!r}; expected "
            f"{sorted(WEIGHT_PRESETS)} or 'custom'")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    master_seed = config.seed if seed is None else int(seed)
    spec = config.env_spec(reward=weights)
    params = init_policy(spec.n_slots, spec.action_dim, seed=master_seed,
                         hyper=config.hyper)
    params, log = train(spec, params, config.total_steps,
                        master_seed=master_seed)
    sequence = extract_sequence(params, spec)

    save_policy(params, out_dir / "checkpoint.json")
    log.to_csv(out_dir / "training_log.csv")
    _write_sequence_csv(sequence, out_dir / "sequence.csv")
    _write_utilization_csv(sequence, out_dir / "utilization.csv")
    meta = {k: v for k, v in log.meta.items() if k != "episode_rewards"}
    meta["scenario"] = scenario
    meta["weights"] = {f.name: getattr(weights, f.name) for f in fields(weights)}
    with open(out_dir / "train_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")

    rows = log.rows
    return {
        "out_dir": str(out_dir),
        "scenario": scenario,
        "episodes": len(rows),
        "final_mean_reward_100": rows[-1].mean_reward_100 if rows else float("nan"),
        "final_f1": rows[-1].f1 if rows else float("nan"),
        "mean_thruster_util": float(np.mean([r.thruster_util for r in rows]))
        if rows else float("nan"),
        "chance_f1": log.meta.get("chance_f1"),
    }


def _sweep_sim(config: ScenarioConfig, multiplier: float):
    if config.sweep.noise_axis == "sensor":
        return config.sim.with_noise_scale(sensor=multiplier)
    return config.sim.with_noise_scale(actuation=multiplier)


def cmd_robustness(config: ScenarioConfig, checkpoint_path, out_path,
                   model_path=None, seed: int | None = None,
                   jobs: int = 1) -> dict:
    """Accuracy of the fixed classifier on the extracted sequence vs noise.

    The classifier comes from ``model_path`` when given; otherwise it is fit
    here on a fresh training-noise dataset generated with the extracted
    sequence (and saved next to the sweep output).
    """
    checkpoint_path = _require_file(checkpoint_path, "policy checkpoint")
    out_path = Path(out_path)
    master_seed = config.seed if seed is None else int(seed)
    sweep: RobustnessSweepSpec = config.sweep
    params = load_policy(checkpoint_path)
    spec = config.env_spec()
    sequence = extract_sequence(params, spec)
    configs = config.candidate_params()

    if model_path is not None:
        model = load_model(_require_file(model_path, "cluster model"))
    else:
        train_set = generate_dataset(configs, sequence, config.replicates,
                                     config.sim, master_seed=master_seed,
                                     bank=config.bank,
                                     wheel_modules=config.wheel_modules)
        series, labels = _strided_series(train_set, config.tsc_stride)
        model = kmeans_fit(series, k=len(configs), gamma=config.gamma,
                           n_init=config.n_init, seed=master_seed)
        apply_label_mapping(model, labels)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        save_model(model, out_path.with_suffix(".model.json"))

    def evaluate(index_multiplier) -> tuple[float, float]:
        index, multiplier = index_multiplier
        sim = _sweep_sim(config, multiplier)
        # disjoint replicate indices per multiplier keep the streams independent
        offset = config.replicates + index * sweep.eval_runs
        eval_set = generate_dataset(configs, sequence, sweep.eval_runs, sim,
                                    master_seed=master_seed, bank=config.bank,
                                    wheel_modules=config.wheel_modules,
                                    replicate_offset=offset)
        by_run: dict[int, list[float]] = {}
        for traj in eval_set:
            predicted = classify(model, traj.omega[::config.tsc_stride])
            by_run.setdefault(traj.replicate, []).append(
                1.0 if predicted == traj.label else 0.0)
        accuracies = [float(np.mean(by_run[r])) for r in sorted(by_run)]
        return float(np.mean(accuracies)), float(np.std(accuracies))

    tasks = list(enumerate(sweep.multipliers))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(evaluate, tasks))
    else:
        results = [evaluate(t) for t in tasks]

    out_path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["multiplier,accuracy_mean,accuracy_std,n_runs"]
    for (_, multiplier), (mean, std) in zip(tasks, results):
        lines.append(f"{_fmt(multiplier)},{_fmt(mean)},{_fmt(std)},{sweep.eval_runs}")
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {
        "out_path": str(out_path),
        "noise_axis": sweep.noise_axis,
        "multipliers": list(sweep.multipliers),
        "accuracy_mean": [r[0] for r in results],
        "accuracy_std": [r[1] for r in results],
    }


def _read_csv_rows(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cmd_report(run_dir, out_dir=None) -> dict:
    """Aggregate training logs and sweeps under a run directory into tables."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise NotFoundError(f"run directory not found: {run_dir}")
    out_dir = run_dir if out_dir is None else Path(out_dir)
    log_paths = sorted(run_dir.glob("**/training_log.csv"))
    sweep_paths = sorted(p for p in run_dir.glob("**/*.csv")
                         if p.name.startswith("robustness"))
    if not log_paths and not sweep_paths:
        raise ValidationError(
            f"nothing to report under {run_dir}: no training_log.csv and no "
            f"robustness*.csv files")

    summary_rows = []
    for path in log_paths:
        rows = _read_csv_rows(path)
        name = path.parent.name or "run"
        if not rows:
            summary_rows.append([name, "0"] + ["nan"] * 5)
            continue
        last = rows[-1]
        summary_rows.append([
            name, str(len(rows)),
            last["mean_reward_100"], last["f1"],
            _fmt(sum(float(r["c_gt"]) for r in rows)),
            _fmt(sum(float(r["c_rw"]) for r in rows)),
            _fmt(np.mean([float(r["thruster_util"]) for r in rows])),
        ])

    sweep_rows = []
    for path in sweep_paths:
        for row in _read_csv_rows(path):
            sweep_rows.append([path.parent.name or "run", path.stem,
                               row["multiplier"], row["accuracy_mean"],
                               row["accuracy_std"]])

    out_dir.mkdir(parents=True, exist_ok=True)
    summary_header = ("scenario,episodes,final_mean_reward_100,final_f1,"
                      "total_c_gt,total_c_rw,mean_thruster_util")
    csv_lines = [summary_header] + [",".join(r) for r in summary_rows]
    if sweep_rows:
        csv_lines.append("")
        csv_lines.append("run,sweep,multiplier,accuracy_mean,accuracy_std")
        csv_lines += [",".join(r) for r in sweep_rows]
    (out_dir / "summary.csv").write_text("\n".join(csv_lines) + "\n",
                                         encoding="utf-8")

    text = ["training runs", "-" * 13]
    if summary_rows:
        cols = summary_header.split(",")
        widths = [max(len(c), *(len(r[i]) for r in summary_rows))
                  for i, c in enumerate(cols)]
        text.append("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
        for r in summary_rows:
            text.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    else:
        text.append("(none)")
    text += ["", "robustness sweeps", "-" * 17]
    if sweep_rows:
        for r in sweep_rows:
            text.append(f"{r[0]}/{r[1]}: x{r[2]} -> {r[3]} +- {r[4]}")
    else:
        text.append("(none)")
    (out_dir / "summary.txt").write_text("\n".join(text) + "\n",
                                         encoding="utf-8")
    return {
        "summary_csv": str(out_dir / "summary.csv"),
        "summary_txt": str(out_dir / "summary.txt"),
        "n_training_runs": len(summary_rows),
        "n_sweep_rows": len(sweep_rows),
    }
