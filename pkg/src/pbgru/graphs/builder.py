"""Predefined station graphs: hop adjacency, pattern similarity, OD flow
direction and cumulative hop degree, plus their normalised forms."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigError, DataError, NumericError, ShapeError
from .dtw import dtw_matrix


@dataclass(frozen=True)
class StationGraph:
    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        seen = set()
        for a, b in self.edges:
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise DataError(f"edge ({a}, {b}) has a station id outside [0, {self.n})")
            if a == b:
                raise DataError(f"self-loop at station {a}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise DataError(f"duplicate edge {key}")
            seen.add(key)

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[Sequence[int]]) -> "StationGraph":
        return cls(int(n), tuple((int(a), int(b)) for a, b in pairs))

    def neighbors(self) -> list[list[int]]:
        nb: list[list[int]] = [[] for _ in range(self.n)]
        for a, b in self.edges:
            nb[a].append(b)
            nb[b].append(a)
        return [sorted(x) for x in nb]


@dataclass
class HopAdjacency:
    k: int
    matrix: np.ndarray


@dataclass
class SimilarityGraph:
    matrix: np.ndarray
    top_k: int
    threshold: float
    mode: str
    tau: float
    dtw: np.ndarray


@dataclass
class ODFlowGraph:
    matrix: np.ndarray
    trips: np.ndarray
    prune_threshold: float


@dataclass
class HopDegree:
    k: int
    matrix: np.ndarray


def hop_distances(g: StationGraph) -> np.ndarray:
    """All-pairs shortest-path hop counts by BFS; -1 marks unreachable pairs."""
    nb = g.neighbors()
    dist = np.full((g.n, g.n), -1, dtype=np.int64)
    for src in range(g.n):
        dist[src, src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in nb[u]:
                if dist[src, v] < 0:
                    dist[src, v] = dist[src, u] + 1
                    queue.append(v)
    return dist


def multi_hop_adjacency(g: StationGraph, k: int, distances: np.ndarray | None = None) -> HopAdjacency:
    """Binary matrix with 1 exactly where the shortest path has ``k`` edges."""
    if k < 1:
        raise ConfigError(f"hop count must be >= 1, got {k}")
    dist = hop_distances(g) if distances is None else distances
    return HopAdjacency(k, (dist == k).astype(np.float64))


def multi_hop_degree(adjs: Sequence[HopAdjacency]) -> HopDegree:
    """Cumulative degree: D(1) = d(A(1)), D(k) = D(k-1) + d(A(k))."""
    if not adjs:
        raise ConfigError("multi_hop_degree needs at least the 1-hop adjacency")
    for expected, a in enumerate(adjs, start=1):
        if a.k != expected:
            raise ConfigError(f"hop sequence must be 1..K without gaps; found k={a.k} at position {expected}")
    deg = np.zeros_like(adjs[0].matrix)
    for a in adjs:
        deg = deg + np.diag(a.matrix.sum(axis=1))
    return HopDegree(adjs[-1].k, deg)


def hop_degrees(adjs: Sequence[HopAdjacency]) -> list[HopDegree]:
    return [multi_hop_degree(adjs[:k]) for k in range(1, len(adjs) + 1)]


def normalize(matrix: np.ndarray, mode: str) -> np.ndarray:
    """``symmetric``: D^-1/2 M D^-1/2. ``random-walk``: D^-1 M.

    Degrees are the matrix's own row sums; zero-degree rows stay zero.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"normalize needs a square matrix, got shape {m.shape}")
    if np.any(m < 0):
        raise DataError("normalize: matrix has negative entries")
    deg = m.sum(axis=1)
    if mode in ("symmetric", "symmetric-laplacian", "sym"):
        inv = np.zeros_like(deg)
        nz = deg > 0
        inv[nz] = 1.0 / np.sqrt(deg[nz])
        return inv[:, None] * m * inv[None, :]
    if mode in ("random-walk", "rw"):
        inv = np.zeros_like(deg)
        nz = deg > 0
        inv[nz] = 1.0 / deg[nz]
        return inv[:, None] * m
    raise ConfigError(f"unknown normalisation mode {mode!r}")


def similarity_from_dtw(
    dist: np.ndarray, top_k: int = 10, threshold: float = 0.1, mode: str = "exp-neg", tau: float | None = None
) -> SimilarityGraph:
    if top_k < 1:
        raise ConfigError(f"top_k must be >= 1, got {top_k}")
    n = dist.shape[0]
    off = ~np.eye(n, dtype=bool)
    if mode == "exp-neg":
        if tau is None:
            tau = float(dist[off].mean()) if n > 1 else 1.0
            if not tau > 0:
                tau = 1.0
        sim = np.exp(-dist / tau)
    elif mode == "literal":
        tau = 1.0
        with np.errstate(over="ignore"):
            sim = np.exp(dist)
        if not np.all(np.isfinite(sim)):
            raise NumericError("literal similarity exp(DTW) overflowed; use mode 'exp-neg'")
    else:
        raise ConfigError(f"unknown similarity mode {mode!r}")
    filtered = np.zeros_like(sim)
    for i in range(n):
        cand = [j for j in range(n) if j != i]
        order = sorted(cand, key=lambda j: (-sim[i, j], j))[:top_k]
        filtered[i, order] = sim[i, order]
    filtered[filtered < threshold] = 0.0
    np.fill_diagonal(filtered, 1.0)
    return SimilarityGraph(filtered, top_k, threshold, mode, float(tau), dist)


def station_series(grids: np.ndarray, channels: str = "both") -> np.ndarray:
    """Per-station series from a ``[days, steps, n, 2]`` grid.

    ``both`` concatenates the full inflow series followed by the full outflow
    series for each station.
    """
    days, steps, n, _ = grids.shape
    inflow = grids[..., 0].reshape(days * steps, n).T
    outflow = grids[..., 1].reshape(days * steps, n).T
    if channels == "both":
        return np.concatenate([inflow, outflow], axis=1)
    if channels == "in":
        return inflow
    if channels == "out":
        return outflow
    raise ConfigError(f"unknown similarity channel selection {channels!r}")


def similarity_graph(
    dataset,
    top_k: int = 10,
    threshold: float = 0.1,
    mode: str = "exp-neg",
    channels: str = "both",
    tau: float | None = None,
) -> SimilarityGraph:
    """DTW pattern-similarity graph from a (training-split) dataset.

    Series are Z-scored with statistics of the dataset itself before alignment.
    """
    from ..data.ridership import ZScoreStats

    if dataset.n < 2:
        raise DataError("similarity graph needs at least two stations")
    if top_k < 1:
        raise ConfigError(f"top_k must be >= 1, got {top_k}")
    stats = ZScoreStats.fit(dataset)
    series = station_series(stats.transform(dataset.grids), channels)
    return similarity_from_dtw(dtw_matrix(series), top_k, threshold, mode, tau)


def od_flow_graph(trips: Iterable[Sequence[float]], n: int, prune_threshold: float = 0.01) -> ODFlowGraph:
    """C[i, j] = F(i, j) / sum_m F(i, m), with F(i, j) = passengers j -> i."""
    flow = np.zeros((n, n), dtype=np.int64)
    for row, (origin, dest, count) in enumerate(trips):
        o, d = int(origin), int(dest)
        if not (0 <= o < n and 0 <= d < n):
            raise DataError(f"trip record {row}: station id out of range [0, {n})")
        if count < 0 or int(count) != count:
            raise DataError(f"trip record {row}: count must be a non-negative integer, got {count}")
        flow[d, o] += int(count)
    totals = flow.sum(axis=1)
    c = np.zeros((n, n))
    nz = totals > 0
    c[nz] = flow[nz] / totals[nz, None]
    c[c < prune_threshold] = 0.0
    return ODFlowGraph(c, flow, prune_threshold)


def diffusion_matrix(hop: HopAdjacency, od: ODFlowGraph, degree: HopDegree, side: str = "right") -> np.ndarray:
    """(A(k) * C) D(k)^-1 with zero degrees inverting to zero.

    ``side='right'`` scales columns (source stations); ``'left'`` scales rows.
    """
    d = np.diag(degree.matrix)
    inv = np.zeros_like(d)
    nz = d > 0
    inv[nz] = 1.0 / d[nz]
    masked = hop.matrix * od.matrix
    if side == "right":
        return masked * inv[None, :]
    if side == "left":
        return inv[:, None] * masked
    raise ConfigError(f"degree side must be 'left' or 'right', got {side!r}")


@dataclass
class GraphSet:
    n: int
    hops: list[HopAdjacency]
    degrees: list[HopDegree]
    similarity: SimilarityGraph
    od: ODFlowGraph
    degree_side: str = "right"
    params: dict = field(default_factory=dict)

    @property
    def k_max(self) -> int:
        return len(self.hops)

    @property
    def physical_norm(self) -> np.ndarray:
        return normalize(self.hops[0].matrix, "symmetric")

    @property
    def similarity_norm(self) -> np.ndarray:
        return normalize(self.similarity.matrix, "random-walk")

    def diffusion(self, k_hops: int | None = None) -> list[np.ndarray]:
        k_hops = self.k_max if k_hops is None else k_hops
        if not 1 <= k_hops <= self.k_max:
            raise ConfigError(f"graph set holds hops 1..{self.k_max}, {k_hops} requested")
        return [diffusion_matrix(self.hops[k], self.od, self.degrees[k], self.degree_side) for k in range(k_hops)]

    def truncated(self, k_hops: int) -> "GraphSet":
        if not 1 <= k_hops <= self.k_max:
            raise ConfigError(f"graph set holds hops 1..{self.k_max}, {k_hops} requested")
        params = dict(self.params, k_hops=k_hops)
        return GraphSet(self.n, self.hops[:k_hops], self.degrees[:k_hops], self.similarity, self.od,
                        self.degree_side, params)

    def matrices(self) -> dict[str, np.ndarray]:
        """Every raw and derived matrix, keyed by its export name."""
        out = {}
        for a in self.hops:
            out[f"A{a.k}"] = a.matrix
        for d in self.degrees:
            out[f"D{d.k}"] = d.matrix
        out["S"] = self.similarity.matrix
        out["C"] = self.od.matrix
        out["A1_sym"] = self.physical_norm
        out["S_rw"] = self.similarity_norm
        for k, m in enumerate(self.diffusion(), start=1):
            out[f"FD{k}"] = m
        return out


def build_graph_set(
    graph: StationGraph,
    train_dataset,
    trips: Iterable[Sequence[float]],
    k_hops: int,
    top_k: int = 10,
    sim_threshold: float = 0.1,
    od_prune: float = 0.01,
    similarity_mode: str = "exp-neg",
    similarity_channels: str = "both",
    degree_side: str = "right",
) -> GraphSet:
    if train_dataset.n != graph.n:
        raise DataError(f"dataset has {train_dataset.n} stations, edge list has {graph.n}")
    dist = hop_distances(graph)
    hops = [multi_hop_adjacency(graph, k, dist) for k in range(1, k_hops + 1)]
    degrees = hop_degrees(hops)
    sim = similarity_graph(train_dataset, top_k, sim_threshold, similarity_mode, similarity_channels)
    od = od_flow_graph(trips, graph.n, od_prune)
    params = dict(
        k_hops=k_hops, top_k=top_k, sim_threshold=sim_threshold, od_prune=od_prune,
        similarity_mode=similarity_mode, similarity_channels=similarity_channels,
        degree_side=degree_side, tau=sim.tau,
    )
    return GraphSet(graph.n, hops, degrees, sim, od, degree_side, params)
