"""pulsectl: command-line harness for gate-design experiments.

Subcommands:
  validate <config>                   check a config file
  train <config>                      run the configured algorithm
  replay <schedule.csv>               re-evolve a stored pulse schedule
  export-plots <run_dir>              re-derive plot data from a run

A run directory contains: config.json (canonical serialized config),
metrics.jsonl, best_schedule.csv, checkpoint.npz, manifest.json, and
tab-separated plot-data files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod, nn
from .agents import train_ppo, train_td
from .env import EnvConfig, GateEnv, PulseSchedule, replay_schedule
from .sim import EPS_BOUNDS, TUN_BOUNDS

OUTPUT_DIR_ENV_VAR = "PULSECTL_OUTPUT_DIR"

PLOT_FILES = (
    "fidelity_vs_episode.tsv",
    "tunnel_vs_time.tsv",
    "detuning_vs_time.tsv",
    "bias0_vs_time.tsv",
    "bias1_vs_time.tsv",
)

TRAILING_WINDOW = 10


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _json_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True) + "\n"


def run_train(cfg: cfgmod.ExperimentConfig) -> dict:
    """Execute the configured algorithm and write all run artifacts."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    config_bytes = cfgmod.canonical_bytes(cfg)
    (out / "config.json").write_bytes(config_bytes)

    metrics_path = out / "metrics.jsonl"
    records = []

    if cfg.algorithm in ("qlearning", "sarsa"):
        env = GateEnv(cfg.env)
        result = train_td(env, cfg.algorithm, cfg.td, seed=cfg.seed)
        for s in result.stats:
            records.append(
                {
                    "seed": cfg.seed,
                    "episode": s.episode,
                    "steps": s.steps,
                    "return": s.episode_return,
                    "final_fidelity": s.final_fidelity,
                    "gate_duration_ns": s.gate_duration,
                    "epsilon": s.epsilon,
                }
            )
        nn.save_checkpoint(out / "checkpoint.npz", {"q": result.params})
    else:
        env_cfg = cfg.env
        result = train_ppo(lambda: GateEnv(env_cfg), cfg.ppo, seed=cfg.seed)
        for s in result.stats:
            records.append(
                {
                    "seed": cfg.seed,
                    "iteration": s.iteration,
                    "episodes": s.episodes,
                    "return": s.mean_return,
                    "final_fidelity": s.mean_final_fidelity,
                    "best_fidelity": s.best_fidelity,
                    "gate_duration_ns": s.best_duration,
                    "policy_loss": s.policy_loss,
                    "value_loss": s.value_loss,
                    "entropy": s.entropy,
                }
            )
        nn.save_checkpoint(
            out / "checkpoint.npz",
            {"policy": result.policy, "value": result.value},
            extras={"log_std": result.log_std},
        )

    with open(metrics_path, "w") as fh:
        for record in records:
            fh.write(_json_line(record))

    if result.best_schedule is not None:
        result.best_schedule.to_csv(out / "best_schedule.csv")

    manifest = {
        "config_digest": cfgmod.digest_bytes(config_bytes),
        "toolkit_version": __version__,
        "started_at": started,
        "ended_at": _now(),
        "seed": cfg.seed,
        "result": {
            "best_fidelity": result.best_fidelity,
            "best_duration_ns": result.best_duration
            if result.best_duration != float("inf")
            else None,
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    export_plots(out)
    return manifest


def verify_manifest(run_dir) -> bool:
    """True iff the stored config bytes still match the manifest digest."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    stored = (run_dir / "config.json").read_bytes()
    return cfgmod.digest_bytes(stored) == manifest["config_digest"]


def _write_tsv(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(f"{v:.15g}" if isinstance(v, float) else str(v) for v in row) + "\n")


def export_plots(run_dir) -> list[Path]:
    """Re-derive plot-data TSVs from the stored metrics and best schedule."""
    run_dir = Path(run_dir)
    metrics_path = run_dir / "metrics.jsonl"
    if not metrics_path.exists():
        raise FileNotFoundError(f"no metrics.jsonl under {run_dir}")
    fidelities = []
    with open(metrics_path) as fh:
        for line in fh:
            record = json.loads(line)
            fidelities.append((record.get("episode", record.get("iteration")),
                               record["final_fidelity"]))
    written = []

    rows = []
    for i in range(TRAILING_WINDOW - 1, len(fidelities)):
        window = [f for _, f in fidelities[i - TRAILING_WINDOW + 1 : i + 1]]
        rows.append((fidelities[i][0], float(np.mean(window))))
    path = run_dir / "fidelity_vs_episode.tsv"
    _write_tsv(path, ["episode", "mean_fidelity_trailing10"], rows)
    written.append(path)

    schedule_path = run_dir / "best_schedule.csv"
    if schedule_path.exists():
        schedule = PulseSchedule.from_csv(schedule_path)
        times = [(row[0] * 1.0) for row in schedule.rows]
        series = {
            "tunnel_vs_time.tsv": ("tunnel_ghz", [row[3] for row in schedule.rows]),
            "detuning_vs_time.tsv": ("detuning_ghz", [row[1] - row[2] for row in schedule.rows]),
            "bias0_vs_time.tsv": ("bias0_ghz", [row[1] for row in schedule.rows]),
            "bias1_vs_time.tsv": ("bias1_ghz", [row[2] for row in schedule.rows]),
        }
        for fname, (col, values) in series.items():
            path = run_dir / fname
            _write_tsv(path, ["time_ns", col], zip(times, values))
            written.append(path)
    return written


def run_replay(schedule_path, env_config: EnvConfig, sweep_duration: int | None = None) -> dict:
    """Replay a schedule (or sweep a constant pulse) through the simulator."""
    schedule = PulseSchedule.from_csv(schedule_path)
    for step, e0, e1, tun in schedule.rows:
        if not EPS_BOUNDS[0] <= e0 <= EPS_BOUNDS[1]:
            raise ValueError(f"step {step}: eps0={e0} outside {EPS_BOUNDS}")
        if not EPS_BOUNDS[0] <= e1 <= EPS_BOUNDS[1]:
            raise ValueError(f"step {step}: eps1={e1} outside {EPS_BOUNDS}")
        if not TUN_BOUNDS[0] <= tun <= TUN_BOUNDS[1]:
            raise ValueError(f"step {step}: tunnel={tun} outside {TUN_BOUNDS}")

    if sweep_duration is not None:
        if not schedule.rows:
            raise ValueError("sweep needs at least one schedule row for the controls")
        _, e0, e1, tun = schedule.rows[0]
        schedule = PulseSchedule(
            rows=[(k, e0, e1, tun) for k in range(sweep_duration)]
        )

    report, trace = replay_schedule(schedule, env_config)
    out = {
        "final_fidelity": report.fidelity,
        "unitarity_trace": report.unitarity_trace,
        "overlap": report.overlap,
        "steps": len(trace),
        "fidelity_trace": trace,
    }
    if sweep_duration is not None and trace:
        best = int(np.argmax(trace))
        out["best_duration_ns"] = (best + 1) * env_config.dt
        out["best_fidelity"] = trace[best]
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pulsectl",
        description="design and inspect CZ gate pulses for a two-dot spin-qubit system",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="validate a config file")
    p_validate.add_argument("config")

    p_train = sub.add_parser("train", help="run a training experiment")
    p_train.add_argument("config")
    p_train.add_argument("--output-dir", help="override the config output_dir")

    p_replay = sub.add_parser("replay", help="replay a pulse schedule CSV")
    p_replay.add_argument("schedule")
    p_replay.add_argument("--config", help="experiment config supplying physics constants")
    p_replay.add_argument(
        "--sweep-duration", type=int, metavar="N",
        help="hold the first row's controls constant and sweep durations 1..N ns",
    )
    p_replay.add_argument("--trace", action="store_true", help="print the per-step fidelity trace")

    p_export = sub.add_parser("export-plots", help="re-derive plot data files from a run")
    p_export.add_argument("run_dir")

    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            cfg = cfgmod.parse_config(args.config)
            print(f"ok: {args.config} (digest {cfgmod.config_digest(cfg)[:12]})")
        elif args.command == "train":
            cfg = cfgmod.parse_config(args.config)
            override = args.output_dir or os.environ.get(OUTPUT_DIR_ENV_VAR)
            if override:
                cfg = dataclasses.replace(cfg, output_dir=override)
            manifest = run_train(cfg)
            print(json.dumps(manifest["result"], indent=2))
        elif args.command == "replay":
            env_config = (
                cfgmod.parse_config(args.config).env if args.config else EnvConfig()
            )
            out = run_replay(args.schedule, env_config, args.sweep_duration)
            if not args.trace:
                out.pop("fidelity_trace")
            print(json.dumps(out, indent=2))
        elif args.command == "export-plots":
            for path in export_plots(args.run_dir):
                print(path)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
