"""The full finite-difference suite: every primitive op, the GRU cell over a
short rollout, each branch, and the assembled model on a 4-station toy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .fdgcn import fdgcn_forward, init_fdgcn
from .fsgcn import fsgcn_forward, init_fsgcn, residual_transform
from .graphs import HopAdjacency, ODFlowGraph, diffusion_matrix, hop_degrees, normalize
from .model import ModelGraphs, ModelSpec, forward, init_params
from .numerics import GradCheckReport, Rng, Tensor, grad_check
from .sagru import bigru_layer, gru_cell, init_attention, init_gru_cell, stacked_layer, temporal_attention
from .training import l1_loss

PRIMITIVE_TOL = 1e-6
MODULE_TOL = 1e-4


@dataclass
class SuiteEntry:
    name: str
    report: GradCheckReport

    @property
    def passed(self) -> bool:
        return self.report.passed


def toy_graphs(n: int, k_hops: int, rng: Rng) -> ModelGraphs:
    """Path network 0-1-...-(n-1) with random positive similarity and OD weights."""
    adj = np.zeros((n, n))
    for i in range(n - 1):
        adj[i, i + 1] = adj[i + 1, i] = 1.0
    dist = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    hops = [HopAdjacency(k, (dist == k).astype(float)) for k in range(1, k_hops + 1)]
    degrees = hop_degrees(hops)
    flow = rng.integers(1, 50, (n, n)).astype(np.int64)
    np.fill_diagonal(flow, 0)
    od = ODFlowGraph(flow / flow.sum(axis=1, keepdims=True), flow, 0.0)
    sim = rng.uniform(0.1, 1.0, (n, n))
    np.fill_diagonal(sim, 1.0)
    return ModelGraphs(normalize(adj, "symmetric"), normalize(sim, "random-walk"),
                       [diffusion_matrix(hops[k], od, degrees[k]) for k in range(k_hops)])


def primitive_cases(rng: Rng):
    r = lambda *s: rng.normal(0, 1, s)  # noqa: E731
    away = lambda *s: np.sign(r(*s)) * rng.uniform(0.2, 1.5, s)  # noqa: E731  keeps relu/abs off their kinks
    weights = r(2, 3, 4)
    yield "matmul", lambda t: (nx.matmul(t["a"], t["b"])).sum(), {"a": r(3, 3), "b": r(3, 3)}
    yield "batched-matmul", lambda t: (nx.matmul(t["a"], t["b"]) * Tensor(weights)).sum(), \
        {"a": r(2, 3, 5), "b": r(5, 4)}
    yield "add-sub", lambda t: ((t["a"] + t["b"]) * (t["a"] - t["b"])).sum(), {"a": r(2, 3), "b": r(2, 3)}
    yield "bias-add", lambda t: ((t["a"] + t["b"]) * (t["a"] + t["b"])).sum(), {"a": r(2, 3), "b": r(3)}
    yield "tanh-sigmoid", lambda t: (nx.tanh(t["x"]) * nx.sigmoid(t["y"])).sum(), {"x": r(2, 3), "y": r(2, 3)}
    yield "relu", lambda t: (nx.relu(t["x"]) * nx.relu(t["x"])).sum(), {"x": away(2, 3)}
    yield "exp", lambda t: nx.exp(t["x"]).sum(), {"x": r(2, 3)}
    yield "abs-mean", lambda t: nx.absolute(t["x"]).mean(), {"x": away(2, 3)}
    probe5, probe4, probe34 = r(2, 5), r(4), r(3, 4)
    yield "concat", lambda t: (nx.concat([t["a"], t["b"]]) * Tensor(probe5)).sum(), {"a": r(2, 3), "b": r(2, 2)}
    yield "stack-transpose", lambda t: (nx.stack([t["a"], t["b"]], axis=1).transpose(2, 0, 1)
                                        * Tensor(weights.transpose(2, 0, 1)[:, :, :2].copy())).sum(), \
        {"a": r(2, 4), "b": r(2, 4)}
    yield "getitem-reshape", lambda t: (t["x"][:, 1:3].reshape(4) * Tensor(probe4)).sum(), {"x": r(2, 4)}
    yield "softmax", lambda t: (nx.softmax(t["x"], axis=1) * Tensor(probe34)).sum(), {"x": r(3, 4)}


def module_cases(rng: Rng):
    d_in, h, steps, rows = 2, 5, 3, 3
    cell = {k: v.values for k, v in init_gru_cell(rng.child("cell"), d_in, h).items()}
    xs = rng.normal(0, 1, (steps, rows, d_in))
    target = rng.normal(0, 0.3, (rows, h))

    def gru_rollout(t):
        state = Tensor(np.zeros((rows, h)))
        for s in range(steps):
            state = gru_cell(t["x"][s], state, t)
        return l1_loss(state, target)

    yield "gru-cell-3-steps", gru_rollout, dict(cell, x=xs)

    fwd = {f"f.{k}": v.values for k, v in init_gru_cell(rng.child("f"), d_in, h).items()}
    bwd = {f"b.{k}": v.values for k, v in init_gru_cell(rng.child("b"), d_in, h).items()}
    stk = {f"s.{k}": v.values for k, v in init_gru_cell(rng.child("s"), h, h).items()}
    att = {f"a.{k}": v.values + rng.normal(0, 0.1, v.shape) for k, v in init_attention(rng.child("a"), h).items()}
    seq = rng.normal(0, 1, (rows, 4, d_in))

    def sub(t, prefix):
        return {k[len(prefix) + 1:]: v for k, v in t.items() if k.startswith(prefix + ".")}

    def sagru_loss(t):
        b = bigru_layer(t["x"], sub(t, "f"), sub(t, "b"))
        u = stacked_layer(b, sub(t, "s"))
        return l1_loss(temporal_attention(u, sub(t, "a")), target)

    yield "sagru", sagru_loss, {**fwd, **bwd, **stk, **att, "x": seq}

    width = 8
    fs = {k.split(".")[1]: v.values + rng.normal(0, 0.05, v.shape) for k, v in init_fsgcn(rng.child("fs"), width).items()}
    h_emb = rng.normal(0, 1, (rows, width))
    tgt_emb = rng.normal(0, 0.5, (rows, width))
    yield "fsgcn-residual", lambda t: l1_loss(residual_transform(t["h"], t["w_if"], t["b_if"]), tgt_emb), \
        {"h": h_emb, "w_if": fs["w_if"], "b_if": fs["b_if"]}

    g = toy_graphs(4, 2, rng.child("graphs"))
    x4 = rng.normal(0, 1, (2, 4, 4, 2))
    fs_all = {k: v.values + rng.normal(0, 0.05, v.shape) for k, v in init_fsgcn(rng.child("fs2"), 8).items()}
    tgt8 = rng.normal(0, 0.5, (2, 4, 8))
    yield "fsgcn", lambda t: l1_loss(nx.concat(list(fsgcn_forward(t["x"], t, g.physical_norm, g.similarity_norm))),
                                     np.concatenate([tgt8, tgt8], axis=-1)), {"x": x4, **fs_all}

    fd = {k: v.values + rng.normal(0, 0.05, v.shape) for k, v in init_fdgcn(rng.child("fd"), 4, 2, 2).items()}
    tgt4 = rng.normal(0, 0.5, (2, 4, 4))
    yield "fdgcn-2-layers", lambda t: l1_loss(fdgcn_forward(t["x"], t, g.diffusion, 2), tgt4), {"x": x4, **fd}


def model_case(rng: Rng):
    spec = ModelSpec(t_in=4, t_out=4, hidden=8, k_hops=2)
    params = {k: v.values for k, v in init_params(spec, rng.child("init")).items()}
    # shift the zero-initialised biases so no branch starts on a relu kink
    params = {k: v + rng.normal(0, 0.05, v.shape) for k, v in params.items()}
    g = toy_graphs(4, 2, rng.child("graphs"))
    x = rng.normal(0, 1, (2, 4, 4, 2))
    y = rng.normal(0, 1, (2, 4, 4, 2))

    def loss(t):
        return l1_loss(forward(x, g, t, spec, "eval"), y)

    return "model-end-to-end", loss, params


def run_suite(seed: int = 0, include_model: bool = True, inject: str | None = None) -> list[SuiteEntry]:
    """Run every check; ``inject`` sign-flips one op's backward rule (negative control)."""
    rng = Rng(seed)
    cases = [(n, f, i, PRIMITIVE_TOL) for n, f, i in primitive_cases(rng.child("prim"))]
    cases += [(n, f, i, MODULE_TOL) for n, f, i in module_cases(rng.child("mod"))]
    if include_model:
        n, f, i = model_case(rng.child("model"))
        cases.append((n, f, i, MODULE_TOL))
    out = []
    for name, fn, inputs, tol in cases:
        if inject:
            with nx.inject_wrong_gradient(inject):
                report = grad_check(fn, inputs, tol)
        else:
            report = grad_check(fn, inputs, tol)
        out.append(SuiteEntry(name, report))
    return out


def group_errors(report: GradCheckReport) -> dict[str, float]:
    """Max relative error per parameter group (name up to its last dot)."""
    groups: dict[str, float] = {}
    for name, err in report.max_rel_error.items():
        key = name.rsplit(".", 1)[0] if "." in name else name
        groups[key] = max(groups.get(key, 0.0), err)
    return groups
