"""PB-GRU assembly: temporal, flow-similarity and flow-direction branches,
embedding dropout and two fused linear heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .fdgcn import fdgcn_forward, init_fdgcn
from .fsgcn import fsgcn_forward, init_fsgcn
from .numerics import Rng, Tensor, concat, matmul, mul, stack
from .sagru import init_sagru, sagru_forward

VARIANTS = ("base", "p-base", "d-base", "pd-base", "full")


@dataclass(frozen=True)
class Wiring:
    physical: bool
    similarity: bool
    fdgcn: bool

    @property
    def fsgcn(self) -> bool:
        return self.physical or self.similarity


_WIRING = {
    "base": Wiring(False, False, False),
    "p-base": Wiring(True, False, False),
    "d-base": Wiring(False, True, False),
    "pd-base": Wiring(True, True, False),
    "full": Wiring(True, True, True),
}


def ablation_variant(tag: str) -> Wiring:
    try:
        return _WIRING[tag]
    except KeyError:
        raise ConfigError(f"unknown ablation variant {tag!r}; choose from {VARIANTS}") from None


@dataclass(frozen=True)
class ModelSpec:
    t_in: int = 4
    t_out: int = 4
    hidden: int = 650
    stack_layers: int = 1
    k_hops: int = 5
    fd_layers: int = 2
    kernel_width: int = 2
    fd_channels: int | None = None
    dropout_temporal: float = 0.4
    dropout_other: float = 0.1
    outflow_residual_from_inflow: bool = False
    variant: str = "full"
    features: int = 2

    @classmethod
    def from_config(cls, cfg) -> "ModelSpec":
        m, f = cfg.model, cfg.fdgcn
        return cls(m.t_in, m.t_out, m.hidden, m.stack_layers, f.k_hops, f.layers, f.kernel_width, f.channels,
                   m.dropout_temporal, m.dropout_other, m.outflow_residual_from_inflow, cfg.ablation)

    @property
    def wiring(self) -> Wiring:
        return ablation_variant(self.variant)

    @property
    def fs_width(self) -> int:
        w = self.wiring
        return self.t_in * (int(w.physical) + int(w.similarity))

    @property
    def fd_width(self) -> int:
        return self.fd_channels or self.t_in

    @property
    def head_in_width(self) -> int:
        return self.hidden + self.fs_width

    @property
    def head_out_width(self) -> int:
        return self.hidden + self.fs_width + (self.fd_width if self.wiring.fdgcn else 0)


@dataclass
class ModelGraphs:
    """Dense matrices the forward pass consumes."""

    physical_norm: np.ndarray
    similarity_norm: np.ndarray
    diffusion: list[np.ndarray]

    @property
    def n(self) -> int:
        return self.physical_norm.shape[0]

    @classmethod
    def from_graph_set(cls, gs, k_hops: int) -> "ModelGraphs":
        return cls(gs.physical_norm, gs.similarity_norm, gs.diffusion(k_hops))


def init_params(spec: ModelSpec, rng: Rng) -> dict[str, Tensor]:
    w = spec.wiring
    params = init_sagru(rng.child("sagru"), spec.features, spec.hidden, spec.stack_layers)
    if w.fsgcn:
        params.update(init_fsgcn(rng.child("fsgcn"), spec.fs_width))
    if w.fdgcn:
        params.update(init_fdgcn(rng.child("fdgcn"), spec.t_in, spec.fd_layers, spec.kernel_width, spec.fd_width))
    heads = rng.child("head")
    for name, width in (("in", spec.head_in_width), ("out", spec.head_out_width)):
        bound = 1.0 / np.sqrt(width)
        params[f"head.w_{name}"] = Tensor(heads.uniform(-bound, bound, (spec.t_out, width)), requires_grad=True)
        params[f"head.b_{name}"] = Tensor(np.zeros(spec.t_out), requires_grad=True)
    return params


def parameter_count(params: dict[str, Tensor]) -> int:
    return int(sum(p.size for p in params.values()))


def dropout(x: Tensor, rate: float, training: bool, rng: Rng | None) -> Tensor:
    """Inverted dropout: kept units are scaled by 1/(1-rate); identity in eval."""
    if not training or rate == 0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = 1.0 - rate
    return mul(x, Tensor(rng.bernoulli_mask(keep, x.shape) / keep))


@dataclass
class Embeddings:
    o_gru: Tensor
    o_fs_if: Tensor | None
    o_fs_of: Tensor | None
    o_fd_of: Tensor | None


def embed(x: Tensor, graphs: ModelGraphs, params: dict[str, Tensor], spec: ModelSpec,
          training: bool = False, rng: Rng | None = None) -> Embeddings:
    w = spec.wiring
    o_gru = dropout(sagru_forward(x, params), spec.dropout_temporal, training, rng)
    o_if = o_of = o_fd = None
    if w.fsgcn:
        o_if, o_of = fsgcn_forward(x, params, graphs.physical_norm if w.physical else None,
                                   graphs.similarity_norm if w.similarity else None,
                                   spec.outflow_residual_from_inflow)
        o_if = dropout(o_if, spec.dropout_other, training, rng)
        o_of = dropout(o_of, spec.dropout_other, training, rng)
    if w.fdgcn:
        o_fd = dropout(fdgcn_forward(x, params, graphs.diffusion, spec.k_hops), spec.dropout_temporal, training, rng)
    return Embeddings(o_gru, o_if, o_of, o_fd)


def forward(x, graphs: ModelGraphs, params: dict[str, Tensor], spec: ModelSpec,
            mode: str = "eval", rng: Rng | None = None) -> Tensor:
    """Predict ``[B, t_out, n, 2]`` from ``x: [B, t_in, n, 2]`` (batch axis optional)."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = x if isinstance(x, Tensor) else Tensor(x)
    single = x.ndim == 3
    if single:
        x = x.reshape(1, *x.shape)
    if x.ndim != 4 or x.shape[1] != spec.t_in or x.shape[3] != spec.features:
        raise ShapeError(f"model input must be [B, {spec.t_in}, n, {spec.features}], got {x.shape}")
    if x.shape[2] != graphs.n:
        raise ShapeError(f"input has {x.shape[2]} stations, graphs have {graphs.n}")
    if spec.wiring.fdgcn and len(graphs.diffusion) < spec.k_hops:
        raise ShapeError(f"graphs carry {len(graphs.diffusion)} hops, model needs {spec.k_hops}")
    e = embed(x, graphs, params, spec, mode == "train", rng)
    in_parts = [e.o_gru] + ([e.o_fs_if] if e.o_fs_if is not None else [])
    out_parts = [e.o_gru] + [t for t in (e.o_fs_of, e.o_fd_of) if t is not None]
    y_in = matmul(concat(in_parts), params["head.w_in"].T) + params["head.b_in"]
    y_out = matmul(concat(out_parts), params["head.w_out"].T) + params["head.b_out"]
    y = stack([y_in, y_out], axis=-1).transpose(0, 2, 1, 3)
    return y.reshape(*y.shape[1:]) if single else y
