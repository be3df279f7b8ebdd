"""Dense CSV export/import of graph matrices with a JSON provenance manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from ..errors import DataError
from .builder import GraphSet, HopAdjacency, HopDegree, ODFlowGraph, SimilarityGraph

MANIFEST = "graphs.json"


def matrix_to_csv(matrix: np.ndarray) -> str:
    n = matrix.shape[0]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["station_id", *range(n)])
    for i in range(n):
        w.writerow([i, *(repr(float(x)) for x in matrix[i])])
    return buf.getvalue()


def matrix_from_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][0] != "station_id":
        raise DataError("matrix CSV must start with a 'station_id' header")
    n = len(rows[0]) - 1
    if len(rows) - 1 != n:
        raise DataError(f"matrix CSV header lists {n} stations but has {len(rows) - 1} rows")
    out = np.zeros((n, n))
    for i, row in enumerate(rows[1:]):
        if int(row[0]) != i or len(row) != n + 1:
            raise DataError(f"matrix CSV row {i + 2} malformed")
        out[i] = [float(x) for x in row[1:]]
    return out


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def graph_hash(gs: GraphSet) -> str:
    """Content hash over every exported matrix, independent of file paths."""
    h = hashlib.sha256()
    mats = _export_matrices(gs)
    for name in sorted(mats):
        h.update(name.encode())
        h.update(_sha(matrix_to_csv(mats[name])).encode())
    return h.hexdigest()


def _export_matrices(gs: GraphSet) -> dict[str, np.ndarray]:
    mats = gs.matrices()
    mats["F"] = gs.od.trips.astype(np.float64)
    mats["DTW"] = gs.similarity.dtw
    return mats


def _kind(name: str) -> str:
    for prefix, kind in (("A1_sym", "normalized"), ("S_rw", "normalized"), ("FD", "diffusion"), ("DTW", "distance"),
                         ("A", "hop-adjacency"), ("D", "hop-degree"), ("S", "similarity"), ("C", "od-flow"),
                         ("F", "od-trips")):
        if name.startswith(prefix):
            return kind
    return "matrix"


def save_graph_set(gs: GraphSet, directory) -> str:
    """Write one CSV plus one JSON wrapper per matrix and a manifest; returns the graph hash."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mats = _export_matrices(gs)
    files = {}
    for name in sorted(mats):
        text = matrix_to_csv(mats[name])
        (directory / f"{name}.csv").write_text(text)
        wrapper = {
            "name": name,
            "kind": _kind(name),
            "n": gs.n,
            "K": int(name[1:]) if name[0] in "AD" and name[1:].isdigit() else (
                int(name[2:]) if name.startswith("FD") else None),
            "mode": {"A1_sym": "symmetric", "S_rw": "random-walk"}.get(name),
            "csv": f"{name}.csv",
            "sha256": _sha(text),
            "params": gs.params,
        }
        (directory / f"{name}.json").write_text(json.dumps(wrapper, indent=2, sort_keys=True) + "\n")
        files[name] = wrapper["sha256"]
    digest = graph_hash(gs)
    manifest = {"n": gs.n, "k_max": gs.k_max, "degree_side": gs.degree_side, "params": gs.params,
                "files": files, "graph_hash": digest}
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return digest


def load_graph_set(directory) -> GraphSet:
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.exists():
        raise DataError(f"no graph manifest at {path}")
    manifest = json.loads(path.read_text())

    def read(name: str) -> np.ndarray:
        text = (directory / f"{name}.csv").read_text()
        if _sha(text) != manifest["files"][name]:
            raise DataError(f"graph file {name}.csv does not match its manifest hash")
        return matrix_from_csv(text)

    k_max = int(manifest["k_max"])
    params = manifest["params"]
    hops = [HopAdjacency(k, read(f"A{k}")) for k in range(1, k_max + 1)]
    degrees = [HopDegree(k, read(f"D{k}")) for k in range(1, k_max + 1)]
    sim = SimilarityGraph(read("S"), params["top_k"], params["sim_threshold"], params["similarity_mode"],
                          params["tau"], read("DTW"))
    od = ODFlowGraph(read("C"), read("F").astype(np.int64), params["od_prune"])
    gs = GraphSet(int(manifest["n"]), hops, degrees, sim, od, manifest["degree_side"], params)
    if graph_hash(gs) != manifest["graph_hash"]:
        raise DataError("graph set hash does not match manifest")
    return gs
