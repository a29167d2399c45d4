"""Seeded training runs, greedy evaluation, binned summaries and rollout dumps."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..graph_net import GraphNetParams, load_checkpoint, save_checkpoint
from ..hierarchy import (
    AgentMode, HeuristicController, NeuralController, NeuralPolicy, NoOpController,
    UnsupportedModeError, controller_net_config, eval_seeds, evaluate_agent, finetune_low_level,
    pretrain_low_level, run_episode, train_controller,
)
from ..kinds import TaskKind
from ..mcts import distillation_term, make_planner
from ..scene_graph import to_records
from ..tasks import SceneConfig
from .config import RunConfig, dump_config
from .oracle import oracle_policy

ORACLE = "oracle"
METRICS_FIELDS = ("seed", "step", "episode", "reward", "fraction", "loss", "epsilon")
SUMMARY_FIELDS = ("bin", "start", "end", "median", "min", "max", "seeds")
REPORT_FIELDS = ("agent", "task", "episodes", "mean_reward", "median_reward", "mean_fraction",
                 "median_fraction")


class MissingCheckpointError(FileNotFoundError):
    pass


def load_low_level(path: str, who: str):
    """A low-level policy from a checkpoint path, or the scripted oracle."""
    if path == ORACLE:
        return oracle_policy, None
    if not path or not os.path.exists(path):
        raise MissingCheckpointError(f"{who}: low-level checkpoint {path!r} not found")
    params = load_checkpoint(path)
    return NeuralPolicy(params), params


def make_controller(kind: str, task: TaskKind, params: Optional[GraphNetParams] = None,
                    edit_cover_steps: int = 0):
    if kind == "none":
        return NoOpController()
    if kind == "heuristic":
        return HeuristicController(task.family, edit_cover_steps or None)
    if params is None:
        raise MissingCheckpointError("neural controller needs a checkpoint")
    return NeuralController(params, task.family)


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


@dataclass
class SeedResult:
    seed: int
    evals: list
    final: float
    checkpoint: Optional[Path]


@dataclass
class ExperimentResult:
    run_dir: Path
    seeds: list
    summary_path: Path


def run_dir_for(cfg: RunConfig) -> Path:
    return Path(cfg.out_dir) / f"{cfg.task_kind.value}_{cfg.agent_mode.value}"


def _run_seed(cfg: RunConfig, seed: int, seed_dir: Path) -> SeedResult:
    task, mode, scene = cfg.task_kind, cfg.agent_mode, cfg.scene()
    learner = cfg.learner()
    seed_dir.mkdir(parents=True, exist_ok=True)
    trace = seed_dir / "trace.csv"
    planner = distill = None
    if cfg.planning_budget > 0:
        planner = make_planner(cfg.planning_budget, cfg.c_uct, cfg.gamma, cfg.backup)
        distill = distillation_term(cfg.distill_weight, cfg.distill_tau)
    seeds = eval_seeds(cfg.eval_episodes)
    res = None
    ckpt = None
    if mode == AgentMode.DIRECT_MODEL_BASED and planner is None:
        raise UnsupportedModeError("DirectModelBased needs planning_budget > 0")
    if mode == AgentMode.NEURAL_HRL_PLANNING and planner is None:
        raise UnsupportedModeError("NeuralHRL_Planning needs planning_budget > 0")

    if mode in (AgentMode.DIRECT_MODEL_FREE, AgentMode.DIRECT_MODEL_BASED):
        params, res, final = pretrain_low_level(
            task, cfg.budget, seed, scene, cfg.net(0, 30), learner, trace, cfg.eval_episodes,
            planner=planner, distill=distill)
        ckpt = seed_dir / "low_level.ckpt"
        save_checkpoint(ckpt, params)
    elif mode == AgentMode.ZERO_SHOT_PRETRAINED or (
            mode == AgentMode.HEURISTIC_HRL_FINETUNE and cfg.budget == 0):
        policy, _ = load_low_level(cfg.checkpoint, mode.value)
        controller = "heuristic" if mode == AgentMode.HEURISTIC_HRL_FINETUNE else cfg.controller
        if controller == "neural":
            raise UnsupportedModeError("zero-shot evaluation takes a heuristic or no controller")
        ctl = make_controller(controller, task, edit_cover_steps=cfg.edit_cover_steps)
        final = float(np.mean(evaluate_agent(ctl, policy, task, seeds, scene)))
    elif mode == AgentMode.HEURISTIC_HRL_FINETUNE:
        _, low = load_low_level(cfg.checkpoint, mode.value)
        if low is None:
            raise UnsupportedModeError("the scripted oracle cannot be finetuned")
        params, res, final = finetune_low_level(low, task, cfg.budget, seed, scene, learner, trace,
                                                cfg.eval_episodes)
        ckpt = seed_dir / "low_level.ckpt"
        save_checkpoint(ckpt, params)
    else:
        _, low = load_low_level(cfg.checkpoint, mode.value)
        if low is None:
            raise UnsupportedModeError("a neural controller needs a neural low-level checkpoint")
        fam = controller_net_config(task.family)
        params, res, final = train_controller(
            low, task, cfg.budget, seed, scene, cfg.net(fam.node_out, fam.edge_out), learner, trace,
            cfg.eval_episodes, planner=planner, distill=distill)
        ckpt = seed_dir / "controller.ckpt"
        save_checkpoint(ckpt, params)

    evals = list(res.evals) if res is not None else []
    if res is not None:
        rows = [(seed, step, ep, rew, _fmt(frac), loss, eps)
                for (step, ep, rew, loss, eps), frac in zip(res.trace, res.fractions)]
        _write_csv(seed_dir / "metrics.csv", METRICS_FIELDS, rows)
    _write_csv(seed_dir / "evals.csv", ("seed", "step", "fraction"),
               [(seed, s, _fmt(f)) for s, f in evals] + [(seed, "final", _fmt(final))])
    return SeedResult(seed, evals, final, ckpt)


def summarise(results: Sequence[SeedResult], bin_size: int) -> list:
    """Per bin: best evaluation of each seed, then median/min/max across seeds.

    Bin ``k`` holds evaluations at learner steps in (k * bin_size, (k + 1) * bin_size];
    a final ``eval`` row summarises the end-of-run evaluations.
    """
    best = {}
    for r in results:
        for step, frac in r.evals:
            k = max(0, (int(step) - 1) // bin_size)
            key = (k, r.seed)
            best[key] = max(best.get(key, -np.inf), frac)
    rows = []
    for k in sorted({k for k, _ in best}):
        vals = np.array([v for (kk, _), v in sorted(best.items()) if kk == k])
        rows.append((k, k * bin_size, (k + 1) * bin_size, _fmt(np.median(vals)), _fmt(vals.min()),
                     _fmt(vals.max()), len(vals)))
    finals = np.array([r.final for r in results])
    if len(finals):
        rows.append(("eval", "", "", _fmt(np.median(finals)), _fmt(finals.min()), _fmt(finals.max()),
                     len(finals)))
    return rows


def run_experiment(cfg: RunConfig) -> ExperimentResult:
    """Run every seed of ``cfg`` and write per-seed CSVs plus ``summary.csv``."""
    run_dir = run_dir_for(cfg)
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.txt").write_text(dump_config(cfg))
    except OSError as exc:
        raise OSError(f"cannot write to {run_dir}: {exc}") from exc
    results = [_run_seed(cfg, s, run_dir / f"seed{s}") for s in cfg.seeds]
    summary = run_dir / "summary.csv"
    _write_csv(summary, SUMMARY_FIELDS, summarise(results, cfg.bin_size))
    return ExperimentResult(run_dir, results, summary)


# -- evaluation report --------------------------------------------------------

@dataclass(frozen=True)
class AgentSpec:
    """``controller[@controller_ckpt]+low`` where ``low`` is a checkpoint path or ``oracle``."""

    name: str
    controller: str
    low: str
    controller_ckpt: str = ""

    @classmethod
    def parse(cls, text: str) -> "AgentSpec":
        if "+" not in text:
            raise ValueError(f"agent spec {text!r} must look like controller+low")
        ctl, low = text.split("+", 1)
        ckpt = ""
        if "@" in ctl:
            ctl, ckpt = ctl.split("@", 1)
        if ctl not in ("heuristic", "neural", "none"):
            raise ValueError(f"agent spec {text!r}: unknown controller {ctl!r}")
        return cls(text, ctl, low, ckpt)


def evaluate(agents: Sequence[AgentSpec], tasks: Sequence[TaskKind], n_episodes: int = 50,
             scene: Optional[SceneConfig] = None, seed_offset: int = 0, edit_cover_steps: int = 0) -> list:
    """Greedy rollouts of every agent on every task over a fixed seed set; one row per pair."""
    seeds = eval_seeds(n_episodes, seed_offset)
    rows = []
    for spec in agents:
        policy, _ = load_low_level(spec.low, spec.name)
        ctl_params = None
        if spec.controller == "neural":
            if not spec.controller_ckpt or not os.path.exists(spec.controller_ckpt):
                raise MissingCheckpointError(f"{spec.name}: controller checkpoint not found")
            ctl_params = load_checkpoint(spec.controller_ckpt)
        for task in tasks:
            ctl = make_controller(spec.controller, task, ctl_params, edit_cover_steps)
            rewards, fracs = [], []
            for sd in seeds:
                _, total, s = run_episode(ctl, policy, task, sd, scene)
                rewards.append(total)
                fracs.append(total / s.max_reward if s.max_reward > 0 else 0.0)
            rows.append((spec.name, task.value, len(seeds), _fmt(np.mean(rewards)),
                         _fmt(np.median(rewards)), _fmt(np.mean(fracs)), _fmt(np.median(fracs))))
    return rows


def write_report(path, rows) -> None:
    _write_csv(Path(path), REPORT_FIELDS, rows)


def format_table(header, rows) -> str:
    cells = [list(map(str, header))] + [[str(c) if not _is_float(c) else f"{float(c):.4f}" for c in r]
                                        for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in cells)


def _is_float(c) -> bool:
    if isinstance(c, float):
        return True
    if isinstance(c, str):
        try:
            float(c)
            return "." in c or "e" in c
        except ValueError:
            return False
    return False


# -- rollout dump -------------------------------------------------------------

def rollout_records(controller, policy, task: TaskKind, seed: int, scene: Optional[SceneConfig] = None) -> str:
    """Scene records before each step and at the end, separated by ``# step`` header lines."""
    out = []
    bufs, total, final = run_episode(controller, policy, task, seed, scene)
    for k, ((g, A, r), (_, a, _)) in enumerate(zip(bufs.buffer_Pi, bufs.buffer_pi)):
        out.append(f"# step={k} controller={A!r} action={a!r} reward={r!r}\n")
        out.append(to_records(g))
    out.append(f"# final total_reward={total!r} max_reward={final.max_reward!r}\n")
    out.append(to_records(final.graph))
    return "".join(out)
