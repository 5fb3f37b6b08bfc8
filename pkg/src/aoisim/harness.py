"""Experiment orchestration behind the CLI: train, eval, sweep, baseline, selftest.

Output policy: every command writes CSVs (and companion PNG figures) into
the configured output directory and refuses to overwrite existing files
unless forced. Numbers are formatted deterministically, so re-running a
command with the same seed and checkpoint reproduces byte-identical CSVs.

Baseline and learned-policy evaluations share per-episode seeds, so their
comparison reflects the policy alone, not luck of the draw.
"""

from __future__ import annotations

import dataclasses
import os
from pathlib import Path

import numpy as np

from aoisim.baselines import make_policy
from aoisim.config import ExperimentConfig
from aoisim.mappo import (DigestMismatchError, EvalResult, PolicyBundle,
                          TrainingDiverged, TrainResult, config_digest, evaluate,
                          load_checkpoint, rollout_policy, save_checkpoint, train)
from aoisim.nets import save_tensors
from aoisim.report import (plot_action_traces, plot_aoi_trace,
                           plot_learning_curves, plot_sweep)
from aoisim.selftest import run_selftest

__all__ = [
    "HarnessError",
    "CheckpointMissing",
    "OutputExists",
    "OutputUnwritable",
    "cmd_train",
    "cmd_eval",
    "cmd_baseline",
    "cmd_sweep",
    "cmd_selftest",
    "CURVE_COLUMNS",
    "METRICS_COLUMNS",
    "TRACE_COLUMNS",
]

CURVE_COLUMNS = ["episode", "mean_return", "mean_aoi", "actor_loss",
                 "critic_loss", "gnn_loss", "entropy"]
METRICS_COLUMNS = ["run_id", "seed", "sweep_value", "episode", "mean_aoi_ms",
                   "mean_return", "drops", "throughput_bps"]
TRACE_COLUMNS = ["seed", "episode", "slot", "link", "gamma", "power_mw",
                 "aoi_slots", "reward", "capacity_bps", "packets_sent",
                 "arrived", "drops"]


class HarnessError(Exception):
    exit_code = 1


class CheckpointMissing(HarnessError):
    exit_code = 5


class OutputExists(HarnessError):
    exit_code = 7


class OutputUnwritable(HarnessError):
    exit_code = 8


# DigestMismatchError gets exit code 6 in the CLI.


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".10g")
    return str(value)


def write_csv(path: Path, columns: list[str], rows) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def ensure_out_dir(out_dir) -> Path:
    path = Path(out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputUnwritable(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise OutputUnwritable(f"output directory {path} is not writable")
    return path


def guard_outputs(paths: list[Path], force: bool) -> None:
    existing = [str(p) for p in paths if p.exists()]
    if existing and not force:
        raise OutputExists(
            "refusing to overwrite existing output(s) (use --force): "
            + ", ".join(existing))


def _run_id(policy: str, digest: str, seed: int) -> str:
    return f"{policy}-{digest[:8]}-s{seed}"


def _metric_rows(result: EvalResult, run_id: str, seed: int, sweep_value,
                 slot_ms: float) -> list[dict]:
    rows = []
    for episode, ep in enumerate(result.episodes):
        rows.append({
            "run_id": run_id,
            "seed": seed,
            "sweep_value": "" if sweep_value is None else sweep_value,
            "episode": episode,
            "mean_aoi_ms": ep.mean_aoi_slots * slot_ms,
            "mean_return": ep.total_return,
            "drops": ep.drops,
            "throughput_bps": ep.throughput_bps,
        })
    return rows


def _trace_rows(result: EvalResult, seed: int) -> list[dict]:
    rows = []
    for episode, ep in enumerate(result.episodes):
        n, m = ep.aoi_trace.shape
        for slot in range(n):
            for link in range(m):
                rows.append({
                    "seed": seed,
                    "episode": episode,
                    "slot": slot,
                    "link": link,
                    "gamma": ep.gamma_trace[slot, link],
                    "power_mw": ep.power_trace[slot, link],
                    "aoi_slots": ep.aoi_trace[slot, link],
                    "reward": ep.reward_trace[slot, link],
                    "capacity_bps": ep.capacity_trace[slot, link],
                    "packets_sent": ep.packets_trace[slot, link],
                    "arrived": ep.arrival_trace[slot, link],
                    "drops": ep.drops_trace[slot, link],
                })
    return rows


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_train(cfg: ExperimentConfig, force: bool = False,
              verbose: bool = False) -> dict:
    """Train one run per seed; writes per-seed learning curves, a seed-mean
    curve, final checkpoints, and a learning-curve figure."""
    out = ensure_out_dir(cfg.out_dir)
    curve_paths = {s: out / f"learning_curve_seed{s}.csv" for s in cfg.seeds}
    ckpt_paths = {s: out / f"checkpoint_seed{s}.bin" for s in cfg.seeds}
    mean_path = out / "learning_curve_mean.csv"
    fig_path = out / "learning_curves.png"
    guard_outputs([*curve_paths.values(), *ckpt_paths.values(), mean_path,
                   fig_path], force)

    curves: dict[int, list[dict]] = {}
    results: dict[int, TrainResult] = {}
    for seed in cfg.seeds:
        def periodic(episode: int, tensors: dict, header: dict,
                     _seed=seed) -> None:
            save_tensors(out / f"checkpoint_seed{_seed}_ep{episode + 1}.bin",
                         tensors, header)

        try:
            result = train(cfg.network, cfg.arrival, cfg.train, seed,
                           checkpoint_cb=periodic, verbose=verbose)
        except TrainingDiverged as exc:
            diag = out / f"checkpoint_seed{seed}_diverged.bin"
            save_tensors(diag, exc.tensors, {"episode": exc.episode,
                                             "diverged": True})
            raise HarnessError(
                f"training diverged at episode {exc.episode}; diagnostic "
                f"checkpoint written to {diag}") from exc
        results[seed] = result
        curves[seed] = result.curve
        write_csv(curve_paths[seed], CURVE_COLUMNS, result.curve)
        save_checkpoint(ckpt_paths[seed], result.bundle.actors, result.critic,
                        result.bundle.sage, result.config_digest,
                        cfg.train.episodes - 1, result.rng_state,
                        cfg.train.share_actor, cfg.train.use_gnn,
                        cfg.network.num_links)

    mean_rows = []
    for i in range(cfg.train.episodes):
        row = {"episode": i}
        for col in CURVE_COLUMNS[1:]:
            row[col] = float(np.mean([curves[s][i][col] for s in cfg.seeds]))
        mean_rows.append(row)
    write_csv(mean_path, CURVE_COLUMNS, mean_rows)
    plot_learning_curves(curves, fig_path)
    return {"checkpoints": ckpt_paths, "curves": curve_paths,
            "mean_curve": mean_path, "figure": fig_path, "results": results}


def _load_for_eval(cfg: ExperimentConfig, checkpoint) -> tuple[dict, PolicyBundle]:
    path = Path(checkpoint)
    if not path.exists():
        raise CheckpointMissing(f"checkpoint not found: {path}")
    digest = config_digest(cfg.network, cfg.arrival, cfg.train)
    header, bundle, _ = load_checkpoint(path, expected_digest=digest,
                                        log_std_init=cfg.train.log_std_init)
    return header, bundle


def cmd_eval(cfg: ExperimentConfig, checkpoint, force: bool = False,
             deterministic: bool = False) -> dict:
    """Evaluate a trained checkpoint; writes metrics, per-slot traces, figures.

    Only actor and graph-encoder tensors are read; a checkpoint with the
    critic stripped evaluates identically.
    """
    out = ensure_out_dir(cfg.out_dir)
    header, bundle = _load_for_eval(cfg, checkpoint)
    digest = header["config_digest"]
    metrics_path = out / "eval_metrics.csv"
    trace_paths = {s: out / f"eval_trace_seed{s}.csv" for s in cfg.seeds}
    aoi_fig = out / "aoi_evolution.png"
    act_fig = out / "actions.png"
    guard_outputs([metrics_path, *trace_paths.values(), aoi_fig, act_fig], force)

    slot_ms = cfg.network.slot_duration_s * 1e3
    metric_rows: list[dict] = []
    first_episode = None
    for seed in cfg.seeds:
        result = evaluate(bundle, cfg.network, cfg.arrival, cfg.eval_episodes,
                          seed, deterministic=deterministic)
        run_id = _run_id("mappo", digest, seed)
        metric_rows.extend(_metric_rows(result, run_id, seed, None, slot_ms))
        write_csv(trace_paths[seed], TRACE_COLUMNS, _trace_rows(result, seed))
        if first_episode is None:
            first_episode = result.episodes[0]
    write_csv(metrics_path, METRICS_COLUMNS, metric_rows)
    plot_aoi_trace(first_episode.aoi_trace, slot_ms, aoi_fig)
    plot_action_traces(first_episode.gamma_trace, first_episode.power_trace,
                       cfg.network.max_power_mw, act_fig)
    return {"metrics": metrics_path, "traces": trace_paths,
            "figures": [aoi_fig, act_fig]}


def _baseline_eval(name: str, cfg: ExperimentConfig, seed: int,
                   network=None, arrival=None) -> EvalResult:
    network = network or cfg.network
    arrival = arrival or cfg.arrival
    return rollout_policy(lambda rng: make_policy(name, rng),
                          network, arrival, cfg.eval_episodes, seed)


def cmd_baseline(cfg: ExperimentConfig, policy: str,
                 force: bool = False) -> dict:
    """Evaluate a named baseline on the same episode seeds the learned
    policy would see; writes metrics, a trace for the first seed, a figure."""
    out = ensure_out_dir(cfg.out_dir)
    metrics_path = out / f"baseline_{policy}_metrics.csv"
    trace_path = out / f"baseline_{policy}_trace_seed{cfg.seeds[0]}.csv"
    fig_path = out / f"baseline_{policy}_aoi.png"
    guard_outputs([metrics_path, trace_path, fig_path], force)

    slot_ms = cfg.network.slot_duration_s * 1e3
    digest = config_digest(cfg.network, cfg.arrival, cfg.train)
    rows: list[dict] = []
    first_result = None
    for seed in cfg.seeds:
        result = _baseline_eval(policy, cfg, seed)
        rows.extend(_metric_rows(result, _run_id(policy, digest, seed), seed,
                                 None, slot_ms))
        if first_result is None:
            first_result = result
            write_csv(trace_path, TRACE_COLUMNS, _trace_rows(result, seed))
    write_csv(metrics_path, METRICS_COLUMNS, rows)
    plot_aoi_trace(first_result.episodes[0].aoi_trace, slot_ms, fig_path,
                   title=f"Receiver AoI per link ({policy})")
    return {"metrics": metrics_path, "trace": trace_path, "figure": fig_path}


def _swept_configs(cfg: ExperimentConfig, value):
    """Test-time network/arrival for one sweep point."""
    if cfg.sweep_axis == "packet_bits":
        return dataclasses.replace(cfg.network, packet_bits=int(value)), cfg.arrival
    if cfg.sweep_axis == "arrival_prob":
        return cfg.network, dataclasses.replace(cfg.arrival,
                                                arrival_prob=float(value))
    if cfg.sweep_axis == "num_links":
        return dataclasses.replace(cfg.network, num_links=int(value)), cfg.arrival
    raise HarnessError(f"unknown sweep axis {cfg.sweep_axis}")


def cmd_sweep(cfg: ExperimentConfig, checkpoint=None, force: bool = False,
              verbose: bool = False) -> dict:
    """Evaluate across the sweep grid.

    Packet-length and arrival-probability sweeps evaluate a checkpoint
    trained at the defaults on perturbed test conditions (paired seeds
    across sweep points). The link-count sweep retrains per point with a
    shared actor, since per-link actors do not transfer across M.
    """
    out = ensure_out_dir(cfg.out_dir)
    axis = cfg.sweep_axis
    metrics_path = out / f"sweep_{axis}.csv"
    summary_path = out / f"sweep_{axis}_summary.csv"
    fig_path = out / f"sweep_{axis}.png"
    guard_outputs([metrics_path, summary_path, fig_path], force)

    slot_ms = cfg.network.slot_duration_s * 1e3
    values = cfg.sweep_grid()
    rows: list[dict] = []
    summary: list[dict] = []

    if axis in ("packet_bits", "arrival_prob"):
        if cfg.policy == "mappo":
            if checkpoint is None:
                raise CheckpointMissing(
                    f"{axis} sweep with the mappo policy needs --checkpoint")
            header, bundle = _load_for_eval(cfg, checkpoint)
            digest = header["config_digest"]
        else:
            bundle, digest = None, config_digest(cfg.network, cfg.arrival,
                                                 cfg.train)
        for value in values:
            network, arrival = _swept_configs(cfg, value)
            point_aoi = []
            for seed in cfg.seeds:
                if bundle is not None:
                    result = evaluate(bundle, network, arrival,
                                      cfg.eval_episodes, seed)
                else:
                    result = _baseline_eval(cfg.policy, cfg, seed,
                                            network=network, arrival=arrival)
                run_id = _run_id(cfg.policy, digest, seed)
                rows.extend(_metric_rows(result, run_id, seed, value, slot_ms))
                point_aoi.extend(result.episode_aoi_slots * slot_ms)
            summary.append({"sweep_value": value,
                            "mean_aoi_ms": float(np.mean(point_aoi)),
                            "std_aoi_ms": float(np.std(point_aoi)),
                            "episodes": len(point_aoi)})
    else:  # num_links: retrain per point with a shared actor
        for value in values:
            network, arrival = _swept_configs(cfg, value)
            train_cfg = dataclasses.replace(cfg.train, share_actor=True)
            digest = config_digest(network, arrival, train_cfg)
            point_aoi = []
            for seed in cfg.seeds:
                result_tr = train(network, arrival, train_cfg, seed,
                                  verbose=verbose)
                result = evaluate(result_tr.bundle, network, arrival,
                                  cfg.eval_episodes, seed)
                rows.extend(_metric_rows(result, _run_id("mappo", digest, seed),
                                         seed, value, slot_ms))
                point_aoi.extend(result.episode_aoi_slots * slot_ms)
            summary.append({"sweep_value": value,
                            "mean_aoi_ms": float(np.mean(point_aoi)),
                            "std_aoi_ms": float(np.std(point_aoi)),
                            "episodes": len(point_aoi)})

    write_csv(metrics_path, METRICS_COLUMNS, rows)
    write_csv(summary_path, ["sweep_value", "mean_aoi_ms", "std_aoi_ms",
                             "episodes"], summary)
    plot_sweep(axis, [s["sweep_value"] for s in summary],
               [s["mean_aoi_ms"] for s in summary], fig_path,
               errors=[s["std_aoi_ms"] for s in summary])
    return {"metrics": metrics_path, "summary": summary_path,
            "figure": fig_path, "rows": summary}


def cmd_selftest(fast: bool = False) -> bool:
    return run_selftest(fast=fast)
