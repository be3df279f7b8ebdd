"""Temporal branch: bidirectional GRU with additive fusion, a stacked
unidirectional GRU on top, and lightweight temporal attention.

GRU cell convention (fixed everywhere in this package)::

    gates_x = W_ih x + b            # [3h]: update | reset | candidate
    gates_h = W_hh h_prev           # [3h]
    z = sigmoid(gates_x[:h] + gates_h[:h])
    r = sigmoid(gates_x[h:2h] + gates_h[h:2h])
    c = tanh(gates_x[2h:] + r * gates_h[2h:])
    h = z * h_prev + (1 - z) * c

All stations share one set of weights; a batch of windows is flattened to
``[batch * stations, steps, features]`` rows before the recurrences run.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .numerics import Rng, Tensor, matmul, sigmoid, softmax, stack, tanh


def init_gru_cell(rng: Rng, d_in: int, hidden: int) -> dict[str, Tensor]:
    bound = 1.0 / np.sqrt(hidden)
    return {
        "w_ih": Tensor(rng.uniform(-bound, bound, (3 * hidden, d_in)), requires_grad=True),
        "w_hh": Tensor(rng.uniform(-bound, bound, (3 * hidden, hidden)), requires_grad=True),
        "b": Tensor(rng.uniform(-bound, bound, (3 * hidden,)), requires_grad=True),
    }


def _hidden(params: dict[str, Tensor]) -> int:
    return params["w_hh"].shape[1]


def _step(gx: Tensor, h_prev: Tensor, params: dict[str, Tensor]) -> Tensor:
    h = _hidden(params)
    gh = matmul(h_prev, params["w_hh"].T)
    z = sigmoid(gx[..., :h] + gh[..., :h])
    r = sigmoid(gx[..., h:2 * h] + gh[..., h:2 * h])
    c = tanh(gx[..., 2 * h:] + r * gh[..., 2 * h:])
    return z * h_prev + (1.0 - z) * c


def gru_cell(x_t: Tensor, h_prev: Tensor, params: dict[str, Tensor]) -> Tensor:
    """One GRU update for a batch of rows ``x_t: [N, d_in]``, ``h_prev: [N, h]``."""
    d_in = params["w_ih"].shape[1]
    if x_t.shape[-1] != d_in or h_prev.shape[-1] != _hidden(params) or x_t.shape[:-1] != h_prev.shape[:-1]:
        raise ShapeError(f"gru_cell: x {x_t.shape}, h {h_prev.shape} do not fit d_in={d_in}, h={_hidden(params)}")
    gx = matmul(x_t, params["w_ih"].T) + params["b"]
    return _step(gx, h_prev, params)


def gru_sequence(xs: Tensor, params: dict[str, Tensor], reverse: bool = False) -> list[Tensor]:
    """Run a GRU over ``xs: [N, T, d_in]`` from a zero state; outputs in time order."""
    if xs.ndim != 3 or xs.shape[-1] != params["w_ih"].shape[1]:
        raise ShapeError(f"gru_sequence: input {xs.shape} does not fit d_in={params['w_ih'].shape[1]}")
    n_rows, steps, _ = xs.shape
    gx_all = matmul(xs, params["w_ih"].T) + params["b"]
    h = Tensor(np.zeros((n_rows, _hidden(params))))
    out: list[Tensor | None] = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        h = _step(gx_all[:, t, :], h, params)
        out[t] = h
    return out


def bigru_layer(xs: Tensor, fwd: dict[str, Tensor], bwd: dict[str, Tensor]) -> list[Tensor]:
    """b_t = forward_t + backward_t for ``xs: [N, T, d_in]``."""
    if xs.shape[1] < 1:
        raise ShapeError("bigru_layer needs at least one time step")
    f = gru_sequence(xs, fwd)
    b = gru_sequence(xs, bwd, reverse=True)
    return [ft + bt for ft, bt in zip(f, b)]


def stacked_layer(bs: list[Tensor], params: dict[str, Tensor]) -> list[Tensor]:
    """Unidirectional GRU over the fused sequence, starting from u_0 = 0."""
    return gru_sequence(stack(bs, axis=1), params)


def init_attention(rng: Rng, hidden: int) -> dict[str, Tensor]:
    bound = 1.0 / np.sqrt(hidden)
    return {
        "w_u": Tensor(rng.uniform(-bound, bound, (hidden, hidden)), requires_grad=True),
        "b_u": Tensor(np.zeros(hidden), requires_grad=True),
        "v": Tensor(rng.uniform(-bound, bound, (1, hidden)), requires_grad=True),
    }


def attention_weights(us: list[Tensor], params: dict[str, Tensor]) -> Tensor:
    """Softmax over time of per-row scores; returns ``[N, T, 1]``."""
    u = stack(us, axis=1)
    e = tanh(matmul(u, params["w_u"].T) + params["b_u"])
    return softmax(matmul(e, params["v"].T), axis=1)


def temporal_attention(us: list[Tensor], params: dict[str, Tensor]) -> Tensor:
    """O = sum_t a_t u_t with a = softmax_t(v . tanh(W_u u_t + b_u)); returns ``[N, h]``."""
    u = stack(us, axis=1)
    a = attention_weights(us, params)
    n_rows, _, h = u.shape
    return matmul(a.transpose(0, 2, 1), u).reshape(n_rows, h)


def init_sagru(rng: Rng, d_in: int, hidden: int, stack_layers: int = 1) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    for prefix, d in (("fwd", d_in), ("bwd", d_in)):
        for k, v in init_gru_cell(rng.child(prefix), d, hidden).items():
            params[f"sagru.{prefix}.{k}"] = v
    for layer in range(stack_layers):
        name = "stack" if layer == 0 else f"stack{layer + 1}"
        for k, v in init_gru_cell(rng.child(name), hidden, hidden).items():
            params[f"sagru.{name}.{k}"] = v
    for k, v in init_attention(rng.child("attn"), hidden).items():
        params[f"sagru.attn.{k}"] = v
    return params


def group(params: dict[str, Tensor], prefix: str) -> dict[str, Tensor]:
    p = prefix + "."
    return {k[len(p):]: v for k, v in params.items() if k.startswith(p)}


def stack_layer_names(params: dict[str, Tensor]) -> list[str]:
    names = {k.split(".")[1] for k in params if k.startswith("sagru.stack")}
    return sorted(names, key=lambda s: 1 if s == "stack" else int(s[5:]))


def sagru_forward(x: Tensor, params: dict[str, Tensor]) -> Tensor:
    """``x: [B, T, n, 2]`` -> temporal embedding ``[B, n, h]``."""
    batch, steps, n, d = x.shape
    rows = x.transpose(0, 2, 1, 3).reshape(batch * n, steps, d)
    seq = bigru_layer(rows, group(params, "sagru.fwd"), group(params, "sagru.bwd"))
    for name in stack_layer_names(params):
        seq = stacked_layer(seq, group(params, f"sagru.{name}"))
    out = temporal_attention(seq, group(params, "sagru.attn"))
    return out.reshape(batch, n, out.shape[-1])


__all__ = [
    "attention_weights", "bigru_layer", "gru_cell", "gru_sequence", "init_attention", "init_gru_cell",
    "init_sagru", "sagru_forward", "stacked_layer", "temporal_attention",
]
