"""Command-line entry point: ``asif {pretrain,transfer,evaluate,rollout,plot}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..kinds import TaskKind
from ..graph_net import load_checkpoint
from .config import CONTROLLERS, SCALES, RunConfig, load_config
from .experiment import (
    REPORT_FIELDS, SUMMARY_FIELDS, AgentSpec, evaluate, format_table, load_low_level,
    make_controller, rollout_records, run_experiment, write_report,
)
from .plot import plot_curves


def _seeds(text: str) -> tuple:
    """``0,1,2`` or a range ``0-4``."""
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part.strip():
            out.append(int(part))
    return tuple(out)


def _common(p: argparse.ArgumentParser, task_default: Optional[str] = None) -> None:
    p.add_argument("--task", default=task_default, help="task name, e.g. EditTransfer")
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--seeds", type=_seeds, help="seed list: 0,1,2 or 0-2")
    p.add_argument("--budget", type=int, help="learner-step budget per seed")
    p.add_argument("--planning-budget", type=int, help="MCTS simulations per action (0 disables)")
    p.add_argument("--scale", choices=SCALES, help="scene size preset")
    p.add_argument("--out-dir", help="directory for metrics and checkpoints")
    p.add_argument("--stop-at", type=float, help="stop once the greedy evaluation reaches this fraction")


def _run_config(args, **fixed) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {k: v for k, v in fixed.items() if v is not None}
    for flag, key in (("task", "task"), ("seeds", "seeds"), ("budget", "budget"),
                      ("planning_budget", "planning_budget"), ("scale", "scale"),
                      ("out_dir", "out_dir"), ("stop_at", "stop_at"), ("mode", "mode"),
                      ("controller", "controller"), ("checkpoint", "checkpoint")):
        v = getattr(args, flag, None)
        if v is not None:
            changes.setdefault(key, v)
    return cfg.replace(**changes)


def _print_summary(result) -> None:
    import csv
    with open(result.summary_path, newline="") as f:
        rows = list(csv.reader(f))[1:]
    print(format_table(SUMMARY_FIELDS, rows))
    print(f"wrote {result.run_dir}")


def cmd_pretrain(args) -> int:
    cfg = _run_config(args)
    if not cfg.task_kind.is_pretrain:
        print(f"warning: {cfg.task} is not a pretraining task", file=sys.stderr)
    mode = "DirectModelBased" if cfg.planning_budget > 0 else "DirectModelFree"
    _print_summary(run_experiment(cfg.replace(mode=mode)))
    return 0


def cmd_transfer(args) -> int:
    _print_summary(run_experiment(_run_config(args)))
    return 0


def _scene(args, cfg: Optional[RunConfig] = None):
    cfg = cfg or (load_config(args.config) if getattr(args, "config", None) else RunConfig())
    if args.scale:
        cfg = cfg.replace(scale=args.scale)
    return cfg


def cmd_evaluate(args) -> int:
    cfg = _scene(args)
    tasks = [TaskKind.parse(t) for t in (args.task or [cfg.task])]
    specs = [AgentSpec.parse(a) for a in args.agent or []]
    if args.checkpoint:
        ctl = args.controller or "none"
        if args.controller_checkpoint:
            ctl = f"{ctl}@{args.controller_checkpoint}"
        specs.append(AgentSpec.parse(f"{ctl}+{args.checkpoint}"))
    if not specs:
        print("evaluate: give --agent or --checkpoint", file=sys.stderr)
        return 2
    rows = evaluate(specs, tasks, args.episodes, cfg.scene(), edit_cover_steps=cfg.edit_cover_steps)
    print(format_table(REPORT_FIELDS, rows))
    if args.out_dir:
        out = Path(args.out_dir) / "report.csv"
        write_report(out, rows)
        print(f"wrote {out}")
    return 0


def cmd_rollout(args) -> int:
    cfg = _scene(args)
    task = TaskKind.parse(args.task)
    policy, _ = load_low_level(args.checkpoint, "rollout")
    ctl_params = load_checkpoint(args.controller_checkpoint) if args.controller_checkpoint else None
    ctl = make_controller(args.controller, task, ctl_params, cfg.edit_cover_steps)
    text = rollout_records(ctl, policy, task, args.seed, cfg.scene())
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_plot(args) -> int:
    out = plot_curves(args.inputs, args.out, args.title or "")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asif", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="train a low-level agent on a pretraining task")
    _common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("transfer", help="train or evaluate an agent mode on a transfer task")
    _common(p)
    p.add_argument("--mode", help="agent mode, e.g. NeuralHRL_FrozenLow")
    p.add_argument("--controller", choices=CONTROLLERS)
    p.add_argument("--checkpoint", help="pretrained low-level checkpoint, or 'oracle'")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("evaluate", help="greedy comparison table over a fixed seed set")
    p.add_argument("--task", action="append", help="task name; repeat for several")
    p.add_argument("--agent", action="append",
                   help="controller[@controller.ckpt]+low.ckpt (low may be 'oracle'); repeatable")
    p.add_argument("--controller", choices=CONTROLLERS)
    p.add_argument("--checkpoint", help="low-level checkpoint or 'oracle'")
    p.add_argument("--controller-checkpoint")
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--scale", choices=SCALES)
    p.add_argument("--config")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rollout", help="dump per-step scene records of one episode")
    p.add_argument("--task", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--controller", choices=CONTROLLERS, default="none")
    p.add_argument("--checkpoint", default="oracle")
    p.add_argument("--controller-checkpoint")
    p.add_argument("--scale", choices=SCALES)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("plot", help="reward curves from summary or metrics CSVs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"asif {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
