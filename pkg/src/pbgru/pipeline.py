"""End-to-end plumbing shared by the CLI and the tests: load inputs, split,
standardise, build graphs from the training split, train and persist runs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import (
    RidershipDataset,
    ZScoreStats,
    chronological_split,
    load_dataset,
    load_edges,
    load_trips,
    make_windows,
    stack_windows,
)
from .errors import ConfigError, DataError
from .graphs import GraphSet, StationGraph, build_graph_set, graph_hash
from .model import ModelGraphs, ModelSpec, init_params, parameter_count
from .numerics import Rng, Tensor, load_checkpoint, save_binary
from .training import TrainResult, evaluate, train, write_log


@dataclass
class Windows:
    x: np.ndarray  # Z-scored inputs
    y: np.ndarray  # Z-scored targets
    y_raw: np.ndarray
    day: np.ndarray
    offset: np.ndarray

    @property
    def count(self) -> int:
        return self.x.shape[0]


@dataclass
class Prepared:
    cfg: RunConfig
    dataset: RidershipDataset
    graph: StationGraph
    trips: list
    train_ds: RidershipDataset
    val_ds: RidershipDataset
    test_ds: RidershipDataset
    stats: ZScoreStats
    graphs: GraphSet
    train: Windows
    val: Windows
    test: Windows


def _windows(ds: RidershipDataset, stats: ZScoreStats, t_in: int, t_out: int) -> Windows:
    samples = make_windows(ds, t_in, t_out) if ds.num_days else []
    if not samples:
        empty = np.zeros((0, t_in, ds.n, 2))
        return Windows(empty, np.zeros((0, t_out, ds.n, 2)), np.zeros((0, t_out, ds.n, 2)),
                       np.zeros(0, int), np.zeros(0, int))
    x, y = stack_windows(samples)
    return Windows(stats.transform(x), stats.transform(y), y,
                   np.array([s.day for s in samples]), np.array([s.offset for s in samples]))


def load_inputs(cfg: RunConfig) -> tuple[RidershipDataset, StationGraph, list]:
    d = cfg.data
    for key in ("ridership", "edges", "trips"):
        path = getattr(d, key)
        if path is None:
            raise ConfigError(f"data.{key} is not set")
        if not Path(path).exists():
            raise DataError(f"data.{key}: file {path} does not exist")
    ds = load_dataset(d.ridership, d.n, d.interval)
    graph = load_edges(d.edges, ds.n)
    return ds, graph, load_trips(d.trips)


def build_graphs(cfg: RunConfig, train_ds: RidershipDataset, graph: StationGraph, trips,
                 k_hops: int | None = None) -> GraphSet:
    g = cfg.graph
    return build_graph_set(graph, train_ds, trips, k_hops or cfg.fdgcn.k_hops, g.top_k, g.sim_threshold,
                           g.od_prune, g.similarity_mode, g.similarity_channels, g.degree_side)


def prepare(cfg: RunConfig, dataset: RidershipDataset, graph: StationGraph, trips,
            graphs: GraphSet | None = None, k_hops: int | None = None) -> Prepared:
    """Split chronologically, fit Z-scores and graphs on the training days only."""
    tr, va, te = chronological_split(dataset, *cfg.data.split)
    stats = ZScoreStats.fit(tr)
    if graphs is None:
        graphs = build_graphs(cfg, tr, graph, trips, k_hops)
    if graphs.n != dataset.n:
        raise DataError(f"graphs cover {graphs.n} stations, data has {dataset.n}")
    t_in, t_out = cfg.model.t_in, cfg.model.t_out
    return Prepared(cfg, dataset, graph, list(trips), tr, va, te, stats, graphs,
                    _windows(tr, stats, t_in, t_out), _windows(va, stats, t_in, t_out),
                    _windows(te, stats, t_in, t_out))


def fit(prep: Prepared, cfg: RunConfig | None = None, log_fn=None) -> tuple[ModelSpec, TrainResult]:
    cfg = cfg or prep.cfg
    spec = ModelSpec.from_config(cfg)
    if spec.wiring.fdgcn and spec.k_hops > prep.graphs.k_max:
        raise ConfigError(f"fdgcn.k_hops={spec.k_hops} exceeds the {prep.graphs.k_max} hops in the graph set")
    mg = ModelGraphs.from_graph_set(prep.graphs, min(spec.k_hops, prep.graphs.k_max))
    params = init_params(spec, Rng(cfg.seed).child("init"))
    t = cfg.train
    result = train(params, spec, mg, prep.train.x, prep.train.y, epochs=t.epochs, batch_size=t.batch_size,
                   lr=t.lr, lr_decay=t.lr_decay, lr_decay_every=t.lr_decay_every, seed=cfg.seed,
                   val_x=prep.val.x, val_y_raw=prep.val.y_raw, stats=prep.stats,
                   interval_minutes=prep.dataset.interval_minutes, log_fn=log_fn)
    return spec, result


def model_graphs(prep: Prepared, spec: ModelSpec) -> ModelGraphs:
    return ModelGraphs.from_graph_set(prep.graphs, min(spec.k_hops, prep.graphs.k_max))


def evaluate_split(prep: Prepared, spec: ModelSpec, params, split: str = "test", return_predictions: bool = False):
    w = getattr(prep, split)
    return evaluate(params, model_graphs(prep, spec), spec, w.x, w.y_raw, prep.stats,
                    prep.dataset.interval_minutes, prep.cfg.train.mape_min_true, return_predictions)


# -- persisted runs ------------------------------------------------------------

CHECKPOINT = "checkpoint.bin"
SIDECAR = "checkpoint.json"


def save_run(out, cfg: RunConfig, spec: ModelSpec, result: TrainResult, stats: ZScoreStats, graphs: GraphSet) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    save_binary(out / CHECKPOINT, result.params)
    sidecar = {
        "config_hash": cfg.hash(),
        "ablation": spec.variant,
        "graph_hash": graph_hash(graphs),
        "graph_params": graphs.params,
        "spec": asdict(spec),
        "best_epoch": result.best_epoch,
        "parameter_count": parameter_count(result.params),
        "seed": cfg.seed,
    }
    (out / SIDECAR).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    write_log(out / "train_log.csv", result.log)
    stats.save(out / "stats.json")
    cfg.save(out / "config.json")


def load_run(directory, graphs: GraphSet) -> tuple[ModelSpec, dict[str, Tensor], dict]:
    """Load a checkpoint, refusing graphs whose hash differs from the training graphs."""
    directory = Path(directory)
    if not (directory / SIDECAR).exists():
        raise DataError(f"no checkpoint sidecar in {directory}")
    sidecar = json.loads((directory / SIDECAR).read_text())
    actual = graph_hash(graphs)
    if sidecar["graph_hash"] != actual:
        raise DataError(f"graph hash {actual[:12]} does not match the checkpoint's {sidecar['graph_hash'][:12]}")
    spec = ModelSpec(**sidecar["spec"])
    params = {k: Tensor(v) for k, v in load_checkpoint(directory / CHECKPOINT).items()}
    expected = init_params(spec, Rng(0))
    if set(expected) != set(params) or any(expected[k].shape != params[k].shape for k in expected):
        raise DataError("checkpoint parameters do not match the recorded model spec")
    return spec, params, sidecar
