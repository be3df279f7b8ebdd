"""Run configuration: nested dataclasses loaded from strict JSON.

Unknown keys are rejected at every level. Precedence when the CLI assembles a
config: command-line flags > config file > the defaults below.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError


@dataclass
class DataConfig:
    ridership: str | None = None
    edges: str | None = None
    trips: str | None = None
    graphs_dir: str | None = None
    n: int | None = None
    interval: int = 15
    split: list[int] = field(default_factory=lambda: [18, 2, 5])


@dataclass
class GraphConfig:
    top_k: int = 10
    sim_threshold: float = 0.1
    od_prune: float = 0.01
    similarity_mode: str = "exp-neg"  # or "literal": exp(+DTW), kept for comparison
    similarity_channels: str = "both"
    degree_side: str = "right"


@dataclass
class ModelConfig:
    t_in: int = 4
    t_out: int = 4
    hidden: int = 650
    stack_layers: int = 1
    dropout_temporal: float = 0.4
    dropout_other: float = 0.1
    outflow_residual_from_inflow: bool = False


@dataclass
class FdgcnConfig:
    k_hops: int = 5
    layers: int = 2
    kernel_width: int = 2
    channels: int | None = None  # None: same as model.t_in


@dataclass
class TrainConfig:
    epochs: int = 350
    batch_size: int = 48
    lr: float = 1e-3
    lr_decay: float = 0.5
    lr_decay_every: int = 40
    mape_min_true: float = 1.0


@dataclass
class RunConfig:
    seed: int = 0
    ablation: str = "full"
    out: str | None = None
    data: DataConfig = field(default_factory=DataConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    fdgcn: FdgcnConfig = field(default_factory=FdgcnConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "RunConfig":
        from .model import VARIANTS

        m, f, t, g = self.model, self.fdgcn, self.train, self.graph
        checks = [
            (m.t_in >= 1 and m.t_out >= 1, "model.t_in and model.t_out must be >= 1"),
            (m.hidden >= 1 and m.stack_layers >= 1, "model.hidden and model.stack_layers must be >= 1"),
            (0 <= m.dropout_temporal < 1 and 0 <= m.dropout_other < 1, "dropout rates must lie in [0, 1)"),
            (f.k_hops >= 1 and f.layers >= 1 and f.kernel_width >= 1, "fdgcn.k_hops/layers/kernel_width must be >= 1"),
            (f.channels is None or f.channels >= 1, "fdgcn.channels must be >= 1"),
            (t.epochs >= 1 and t.batch_size >= 1 and t.lr > 0, "train.epochs, batch_size and lr must be positive"),
            (0 < t.lr_decay <= 1 and t.lr_decay_every >= 1, "train.lr_decay must be in (0, 1], lr_decay_every >= 1"),
            (g.top_k >= 1, "graph.top_k must be >= 1"),
            (g.similarity_mode in ("exp-neg", "literal"), "graph.similarity_mode must be 'exp-neg' or 'literal'"),
            (g.similarity_channels in ("both", "in", "out"), "graph.similarity_channels must be both/in/out"),
            (g.degree_side in ("left", "right"), "graph.degree_side must be 'left' or 'right'"),
            (self.ablation in VARIANTS, f"ablation must be one of {VARIANTS}"),
            (len(self.data.split) == 3 and min(self.data.split) >= 0, "data.split must be three day counts"),
            (self.seed >= 0, "seed must be a non-negative integer"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """Hash of everything that affects results (the output path is excluded)."""
        doc = self.to_dict()
        doc.pop("out", None)
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]

    def save(self, path) -> None:
        doc = self.to_dict()
        doc["config_hash"] = self.hash()
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _build(cls, doc: dict, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(names))
    if unknown:
        raise ConfigError(f"unknown config key(s) {', '.join(where + k for k in unknown)}")
    kwargs = {}
    for key, value in doc.items():
        default = getattr(cls(), key)
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, f"{where}{key}.")
        else:
            kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(doc: dict) -> RunConfig:
    doc = dict(doc)
    doc.pop("config_hash", None)
    return _build(RunConfig, doc, "").validate()


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def apply_overrides(cfg: RunConfig, overrides: dict[str, Any]) -> RunConfig:
    """Apply dotted-key overrides such as ``{"fdgcn.k_hops": 3}``."""
    doc = cfg.to_dict()
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = doc
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node[p]
        if leaf not in node:
            raise ConfigError(f"unknown config key {dotted}")
        node[leaf] = value
    return config_from_dict(doc)


# Scales reported for the two benchmark systems, plus a desk-scale preset for
# the synthetic experiments in this repository.
PRESETS: dict[str, dict[str, Any]] = {
    "hzmetro": {"train.batch_size": 48, "model.hidden": 650, "fdgcn.k_hops": 5, "data.split": [18, 2, 5]},
    "shmetro": {"train.batch_size": 96, "model.hidden": 1200, "fdgcn.k_hops": 4, "data.split": [62, 9, 21]},
    "desk": {"train.batch_size": 48, "model.hidden": 16, "fdgcn.k_hops": 2, "data.split": [14, 3, 3],
             "train.epochs": 60, "train.lr": 5e-3},
}


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return apply_overrides(RunConfig(), PRESETS[name])
