"""Flow-direction branch: K-hop masked diffusion of inflow over the OD graph
followed by gated causal convolution along the hop axis.

The hop axis is ordered 1..K (nearer stations first). Each layer left-pads it
with ``kernel_width - 1`` zeros, so position j only sees hops 1..j, and the
branch output is the last hop position, whose receptive field spans all hops.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError
from .numerics import Rng, Tensor, matmul, sigmoid, stack, tanh


def khop_diffusion(x_if: Tensor, diffusion: list[np.ndarray], k_hops: int | None = None) -> Tensor:
    """Stack of ``M_k @ X_if`` for k = 1..K.

    ``x_if`` is ``[B, n, T]`` (inflow, one row per station); ``diffusion[k-1]``
    is the prebuilt ``(A(k) * C) D(k)^-1``. Returns ``[B, n, K, T]``.
    """
    k_hops = len(diffusion) if k_hops is None else k_hops
    if k_hops < 1:
        raise ConfigError("khop_diffusion needs K >= 1")
    if len(diffusion) < k_hops:
        raise ConfigError(f"diffusion matrices provided for {len(diffusion)} hops, K={k_hops} requested")
    n = x_if.shape[-2]
    hops = []
    for m in diffusion[:k_hops]:
        if m.shape != (n, n):
            raise ShapeError(f"diffusion matrix is {m.shape}, input has {n} stations")
        hops.append(matmul(Tensor(m), x_if))
    return stack(hops, axis=-2)


def _shift(k: int, s: int) -> np.ndarray:
    """[K, K] operator moving hop j to j + s, zero-filling the first s positions."""
    return np.eye(k, k, -s)


def causal_conv(h: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``h: [N, K, c_in]``, ``w: [width, c_in, c_out]`` -> ``[N, K, c_out]``."""
    width, c_in, _ = w.shape
    if h.shape[-1] != c_in:
        raise ShapeError(f"causal_conv: input has {h.shape[-1]} channels, kernel expects {c_in}")
    k = h.shape[-2]
    out = None
    for j in range(width):
        s = width - 1 - j
        if s >= k:
            continue
        src = h if s == 0 else matmul(Tensor(_shift(k, s)), h)
        term = matmul(src, w[j])
        out = term if out is None else out + term
    return out + b


def gated_layer(h: Tensor, layer: dict[str, Tensor]) -> Tensor:
    """tanh(P + residual) * sigmoid(Q)."""
    p = causal_conv(h, layer["w1"], layer["b1"])
    q = causal_conv(h, layer["w2"], layer["b2"])
    residual = h if "w_res" not in layer else matmul(h, layer["w_res"])
    return tanh(p + residual) * sigmoid(q)


def gated_causal_conv(h_hid: Tensor, layers: list[dict[str, Tensor]], cut: bool = True) -> Tensor:
    """Stacked gated causal layers over ``[N, K, c]``; ``cut`` keeps the last hop only."""
    if not layers:
        raise ConfigError("gated_causal_conv needs at least one layer")
    h = h_hid
    for i, layer in enumerate(layers):
        if layer["w1"].shape[1] != h.shape[-1]:
            raise ShapeError(f"layer {i} expects {layer['w1'].shape[1]} channels, got {h.shape[-1]}")
        h = gated_layer(h, layer)
    return h[:, -1, :] if cut else h


def init_fdgcn(rng: Rng, channels: int, layers: int = 2, kernel_width: int = 2,
               hidden_channels: int | None = None) -> dict[str, Tensor]:
    if layers < 1 or kernel_width < 1:
        raise ConfigError("FDGCN needs at least one layer and kernel width >= 1")
    hidden_channels = channels if hidden_channels is None else hidden_channels
    params: dict[str, Tensor] = {}
    c_in = channels
    for i in range(layers):
        bound = 1.0 / np.sqrt(c_in * kernel_width)
        prefix = f"fdgcn.layer{i}"
        for name in ("w1", "w2"):
            params[f"{prefix}.{name}"] = Tensor(rng.uniform(-bound, bound, (kernel_width, c_in, hidden_channels)),
                                                requires_grad=True)
        params[f"{prefix}.b1"] = Tensor(np.zeros(hidden_channels), requires_grad=True)
        params[f"{prefix}.b2"] = Tensor(np.zeros(hidden_channels), requires_grad=True)
        if c_in != hidden_channels:
            params[f"{prefix}.w_res"] = Tensor(rng.uniform(-bound, bound, (c_in, hidden_channels)), requires_grad=True)
        c_in = hidden_channels
    return params


def fdgcn_layers(params: dict[str, Tensor]) -> list[dict[str, Tensor]]:
    count = len({k.split(".")[1] for k in params if k.startswith("fdgcn.layer")})
    layers = []
    for i in range(count):
        p = f"fdgcn.layer{i}."
        layers.append({k[len(p):]: v for k, v in params.items() if k.startswith(p)})
    return layers


def fdgcn_forward(x: Tensor, params: dict[str, Tensor], diffusion: list[np.ndarray], k_hops: int) -> Tensor:
    """``x: [B, T, n, 2]`` -> O_FDof ``[B, n, c_out]`` from the inflow channel."""
    batch, steps, n, _ = x.shape
    x_if = x[..., 0].transpose(0, 2, 1)
    stack_ = khop_diffusion(x_if, diffusion, k_hops)
    rows = stack_.reshape(batch * n, k_hops, steps)
    out = gated_causal_conv(rows, fdgcn_layers(params))
    return out.reshape(batch, n, out.shape[-1])
