"""Flow-similarity branch: parameter-free propagation over the physical and
similarity graphs, per-channel embeddings and residual nonlinear transforms."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .numerics import Rng, Tensor, concat, matmul, relu

INFLOW, OUTFLOW = 0, 1


def sgc_propagate(x: Tensor, physical_norm: np.ndarray, similarity_norm: np.ndarray) -> tuple[Tensor, Tensor]:
    """Left-multiply every step's ``[n, 2]`` slice by each normalised graph.

    ``x`` is ``[..., T, n, 2]``; both outputs keep that shape.
    """
    n = x.shape[-2]
    for name, m in (("physical", physical_norm), ("similarity", similarity_norm)):
        if m.shape != (n, n):
            raise ShapeError(f"{name} matrix is {m.shape}, input has {n} stations")
    return matmul(Tensor(physical_norm), x), matmul(Tensor(similarity_norm), x)


def _channel(h: Tensor, ch: int) -> Tensor:
    # [..., T, n, 2] -> [..., n, T]
    c = h[..., ch]
    axes = tuple(range(c.ndim - 2)) + (c.ndim - 1, c.ndim - 2)
    return c.transpose(axes)


def split_and_embed(h_p: Tensor | None, h_s: Tensor | None) -> tuple[Tensor, Tensor]:
    """Per-station inflow and outflow embeddings ``[..., n, width]``.

    Physical features come first, then similarity features. Either graph may be
    absent (``None``) for the single-graph ablations.
    """
    parts = [h for h in (h_p, h_s) if h is not None]
    if not parts:
        raise ValueError("split_and_embed needs at least one propagated input")
    h_if = concat([_channel(h, INFLOW) for h in parts], axis=-1)
    h_of = concat([_channel(h, OUTFLOW) for h in parts], axis=-1)
    return h_if, h_of


def residual_transform(h: Tensor, w: Tensor, b: Tensor, source: Tensor | None = None) -> Tensor:
    """relu(h + (W source + b)); ``source`` defaults to ``h``."""
    source = h if source is None else source
    width = h.shape[-1]
    if w.shape != (width, source.shape[-1]) or b.shape != (width,):
        raise ShapeError(f"residual weights {w.shape}/{b.shape} do not fit embedding width {width}")
    return relu(h + (matmul(source, w.T) + b))


def init_fsgcn(rng: Rng, width: int) -> dict[str, Tensor]:
    bound = 1.0 / np.sqrt(width)
    return {
        "fsgcn.w_if": Tensor(rng.uniform(-bound, bound, (width, width)), requires_grad=True),
        "fsgcn.b_if": Tensor(np.zeros(width), requires_grad=True),
        "fsgcn.w_of": Tensor(rng.uniform(-bound, bound, (width, width)), requires_grad=True),
        "fsgcn.b_of": Tensor(np.zeros(width), requires_grad=True),
    }


def fsgcn_forward(
    x: Tensor,
    params: dict[str, Tensor],
    physical_norm: np.ndarray | None,
    similarity_norm: np.ndarray | None,
    outflow_residual_from_inflow: bool = False,
) -> tuple[Tensor, Tensor]:
    """``x: [B, T, n, 2]`` -> (O_FSif, O_FSof), each ``[B, n, width]``.

    By default each residual reads its own channel's embedding. With
    ``outflow_residual_from_inflow`` the outflow residual reads the inflow
    embedding instead.
    """
    n = x.shape[-2]
    h_p = h_s = None
    if physical_norm is not None:
        if physical_norm.shape != (n, n):
            raise ShapeError(f"physical matrix is {physical_norm.shape}, input has {n} stations")
        h_p = matmul(Tensor(physical_norm), x)
    if similarity_norm is not None:
        if similarity_norm.shape != (n, n):
            raise ShapeError(f"similarity matrix is {similarity_norm.shape}, input has {n} stations")
        h_s = matmul(Tensor(similarity_norm), x)
    h_if, h_of = split_and_embed(h_p, h_s)
    o_if = residual_transform(h_if, params["fsgcn.w_if"], params["fsgcn.b_if"])
    source = h_if if outflow_residual_from_inflow else None
    o_of = residual_transform(h_of, params["fsgcn.w_of"], params["fsgcn.b_of"], source=source)
    return o_if, o_of
