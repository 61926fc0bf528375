"""Run configuration: flat ``key = value`` files, CLI overrides and experiment presets."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, Optional

from .mcts import SearchConfig
from .pipeline import GameConfig, PipelineConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    mode: str = "refutation"
    k: int = 2
    q: int = 6
    n: int = 22
    n_max: int = 0
    simulations: int = 50
    c_puct: float = 1.0
    selfplay_temperature: float = 1.0
    arena_temperature: float = 0.0
    theoretical_exploration: bool = False
    dirichlet_alpha: float = 0.0
    conv_channels: str = "16,16,16,16"
    kernel_size: int = 3
    dense_width: int = 64
    activation: str = "relu"
    episodes: int = 100
    iterations: int = 30
    arena_rounds: int = 20
    epochs: int = 10
    batch_size: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    buffer_iterations: int = 20
    gate_threshold: Optional[float] = None
    oracle_probe_rounds: int = 1
    seed: Optional[int] = None
    out_dir: str = "runs/default"

    def validate(self, training: bool = True) -> "RunConfig":
        if self.mode not in ("complete", "refutation"):
            raise ConfigError(f"mode must be 'complete' or 'refutation', got {self.mode!r}")
        if self.k < 1 or self.q < 1:
            raise ConfigError("k and q must be >= 1")
        if self.mode == "refutation" and self.n < 1:
            raise ConfigError("refutation games need n >= 1")
        if self.mode == "complete" and self.n_max < 2:
            raise ConfigError("complete games need n_max >= 2")
        if self.mode == "refutation" and self.n_max and self.n > self.n_max + 1:
            raise ConfigError(f"fixed n={self.n} exceeds n_max+1={self.n_max + 1}")
        if training and self.seed is None:
            raise ConfigError("a seed is required for training runs (--seed or seed=...)")
        for name in ("simulations", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("episodes", "iterations", "arena_rounds", "oracle_probe_rounds"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        try:
            self.channels()
        except ValueError as exc:
            raise ConfigError(f"bad conv_channels {self.conv_channels!r}") from exc
        return self

    def channels(self):
        chans = tuple(int(c) for c in self.conv_channels.split(","))
        if len(chans) != 4 or min(chans) < 1:
            raise ValueError("need four positive channel counts")
        return chans

    def game_config(self) -> GameConfig:
        if self.mode == "complete":
            return GameConfig("complete", self.k, self.q, n_max=self.n_max)
        return GameConfig("refutation", self.k, self.q, n=self.n)

    def search_config(self) -> SearchConfig:
        return SearchConfig(simulations=self.simulations, c_puct=self.c_puct,
                            temperature=self.selfplay_temperature,
                            theoretical_exploration=self.theoretical_exploration,
                            dirichlet_alpha=self.dirichlet_alpha, seed=self.seed or 0)

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            episodes=self.episodes, arena_rounds=self.arena_rounds, search=self.search_config(),
            selfplay_temperature=self.selfplay_temperature,
            arena_temperature=self.arena_temperature, epochs=self.epochs,
            batch_size=self.batch_size, lr=self.lr, momentum=self.momentum,
            buffer_iterations=self.buffer_iterations, gate_threshold=self.gate_threshold,
            oracle_probe_rounds=self.oracle_probe_rounds, seed=self.seed or 0)

    def net_overrides(self) -> dict:
        return {"conv_channels": self.channels(), "kernel_size": self.kernel_size,
                "dense_width": self.dense_width, "activation": self.activation}


PRESETS: Dict[str, dict] = {
    # the paper's experiments
    "hsr-7-7-complete": dict(mode="complete", k=7, q=7, n_max=130, iterations=80),
    "hsr-7-7-128": dict(mode="refutation", k=7, q=7, n=128),
    "hsr-7-7-129": dict(mode="refutation", k=7, q=7, n=129),
    "hsr-3-7-64": dict(mode="refutation", k=3, q=7, n=64),
    "hsr-3-7-63": dict(mode="refutation", k=3, q=7, n=63),
    # desk-scale substitutes
    "hsr-2-6-22": dict(mode="refutation", k=2, q=6, n=22, iterations=30),
    "hsr-2-2-5": dict(mode="refutation", k=2, q=2, n=5, iterations=10),
    "hsr-2-3-complete": dict(mode="complete", k=2, q=3, n_max=10, iterations=40),
}


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, text: str):
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    default = getattr(RunConfig(), name)
    kind = _FIELDS[name].type
    text = text.strip()
    if text.lower() in ("none", "") and (default is None or "Optional" in str(kind)):
        return None
    try:
        if "bool" in str(kind):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if "int" in str(kind):
            return int(text)
        if "float" in str(kind):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc
    return text


def parse_pairs(pairs) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        out[key] = _coerce(key, value)
    return out


def read_config_text(text: str) -> dict:
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return parse_pairs(lines)


def load_config_file(path) -> dict:
    try:
        return read_config_text(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


def build(preset: Optional[str] = None, file_values: Optional[dict] = None,
          overrides: Optional[dict] = None) -> RunConfig:
    """Preset, then config file, then CLI overrides; later layers win."""
    cfg = RunConfig()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        cfg = replace(cfg, **PRESETS[preset])
    if file_values:
        cfg = replace(cfg, **file_values)
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def to_text(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"
