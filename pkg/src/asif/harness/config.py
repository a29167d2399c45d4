"""Run configuration and its flat ``key = value`` file format.

One setting per line; ``#`` starts a comment. Values are parsed by the
type of the field they set: integers, floats, ``true``/``false``, comma
separated integer lists, or bare strings. ``none`` clears an optional
field. Unknown keys are an error.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, get_type_hints

from ..graph_net import NetConfig
from ..kinds import TaskKind
from ..learning import LearnerConfig
from ..tasks import SceneConfig

SCALES = ("full", "reduced", "compact")
CONTROLLERS = ("heuristic", "neural", "none")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    task: str = "EditPretrainConnect"
    mode: str = "DirectModelFree"
    controller: str = "none"
    seeds: tuple = (0,)
    budget: int = 10_000
    planning_budget: int = 0
    scale: str = "full"
    out_dir: str = "runs"
    checkpoint: str = ""
    bin_size: int = 1_000
    eval_every: int = 1_000
    eval_episodes: int = 50
    stop_at: Optional[float] = None
    # network
    latent: int = 64
    hidden: int = 64
    n_blocks: int = 3
    zero_heads: bool = True
    # learner
    batch_size: int = 16
    replay_ratio: int = 4
    warmup: int = 500
    capacity: int = 100_000
    gamma: float = 0.98
    lr: float = 2e-4
    target_period: int = 512
    eps_min: float = 0.01
    eps_window: int = 100
    double_q: bool = False
    # search
    c_uct: float = 2.0
    backup: str = "max"
    distill_weight: float = 1.0
    distill_tau: float = 1.0
    # heuristics
    edit_cover_steps: int = 0

    def __post_init__(self):
        TaskKind.parse(self.task)
        from ..hierarchy import AgentMode
        AgentMode.parse(self.mode)
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if self.scale not in SCALES:
            raise ConfigError(f"scale must be one of {SCALES}, got {self.scale!r}")
        if self.backup not in ("max", "mean"):
            raise ConfigError(f"backup must be 'max' or 'mean', got {self.backup!r}")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        for name in ("budget", "planning_budget", "bin_size", "eval_every", "eval_episodes"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.bin_size == 0:
            raise ConfigError("bin_size must be positive")

    @property
    def task_kind(self) -> TaskKind:
        return TaskKind.parse(self.task)

    @property
    def agent_mode(self):
        from ..hierarchy import AgentMode
        return AgentMode.parse(self.mode)

    def scene(self) -> SceneConfig:
        return {"full": SceneConfig, "reduced": SceneConfig.reduced,
                "compact": SceneConfig.compact}[self.scale]()

    def net(self, node_out: int, edge_out: int) -> NetConfig:
        return NetConfig(latent=self.latent, hidden=self.hidden, n_blocks=self.n_blocks,
                         node_out=node_out, edge_out=edge_out, zero_heads=self.zero_heads)

    def learner(self) -> LearnerConfig:
        return LearnerConfig(
            batch_size=self.batch_size, replay_ratio=self.replay_ratio, warmup=self.warmup,
            capacity=self.capacity, gamma=self.gamma, lr=self.lr, target_period=self.target_period,
            eps_min=self.eps_min, eps_window=self.eps_window, learner_steps=self.budget,
            eval_every=self.eval_every, stop_at=self.stop_at, double_q=self.double_q,
        )

    def replace(self, **changes) -> "RunConfig":
        unknown = set(changes) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return dataclasses.replace(self, **changes)


def _parse_value(key: str, raw: str, typ):
    raw = raw.strip()
    if typ == Optional[float]:
        return None if raw.lower() == "none" else float(raw)
    if typ is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected true/false, got {raw!r}")
    if typ is tuple:
        return tuple(int(x) for x in raw.replace(" ", "").split(",") if x)
    if typ is int:
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if typ is float:
        return float(raw)
    return raw


def parse_config_text(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    hints = get_type_hints(RunConfig)
    changes = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in hints:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        try:
            changes[key] = _parse_value(key, raw, hints[key])
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return (base or RunConfig()).replace(**changes)


def load_config(path, base: Optional[RunConfig] = None) -> RunConfig:
    with open(path) as f:
        return parse_config_text(f.read(), base)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif v is None:
            v = "none"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
