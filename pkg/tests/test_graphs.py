import json
import math

import numpy as np
import pytest
from graph_oracles import dtw_brute_force, floyd_warshall, random_edges
from metrics_oracle import oracle_hop_degree, oracle_od_fractions

from pbgru.data import RidershipDataset, synth_metro
from pbgru.errors import ConfigError, DataError
from pbgru.graphs import (
    StationGraph,
    build_graph_set,
    dtw_distance,
    dtw_matrix,
    graph_hash,
    hop_degrees,
    load_graph_set,
    matrix_from_csv,
    matrix_to_csv,
    multi_hop_adjacency,
    multi_hop_degree,
    normalize,
    od_flow_graph,
    save_graph_set,
    similarity_from_dtw,
    similarity_graph,
)
from pbgru.numerics import Rng

PATH3 = StationGraph.from_pairs(3, [(0, 1), (1, 2)])


def nonzeros(m):
    return {tuple(int(v) for v in ij) for ij in np.argwhere(m)}


# -- station graph and hops ----------------------------------------------------


@pytest.mark.parametrize("pairs", [[(0, 0)], [(0, 1), (1, 0)], [(0, 3)]])
def test_station_graph_rejects_bad_edges(pairs):
    with pytest.raises(DataError):
        StationGraph.from_pairs(3, pairs)


def test_path_hop_examples():
    assert nonzeros(multi_hop_adjacency(PATH3, 1).matrix) == {(0, 1), (1, 0), (1, 2), (2, 1)}
    assert nonzeros(multi_hop_adjacency(PATH3, 2).matrix) == {(0, 2), (2, 0)}
    with pytest.raises(ConfigError):
        multi_hop_adjacency(PATH3, 0)


def test_hop_adjacency_against_floyd_warshall():
    rng = Rng(11)
    for _ in range(40):
        n = int(rng.integers(2, 16))
        edges = random_edges(rng, n, float(rng.uniform(0.05, 0.4)))
        g = StationGraph.from_pairs(n, edges)
        dist = floyd_warshall(n, edges)
        for k in range(1, 6):
            a = multi_hop_adjacency(g, k).matrix
            expected = np.array([[1.0 if dist[i][j] == k else 0.0 for j in range(n)] for i in range(n)])
            assert np.array_equal(a, expected)
            assert np.array_equal(a, a.T) and not a.diagonal().any()


def test_hop_supports_are_disjoint():
    m = synth_metro(12, 2, 8, seed=4)
    hops = [multi_hop_adjacency(m.graph, k).matrix for k in range(1, 7)]
    for i in range(len(hops)):
        for j in range(i + 1, len(hops)):
            assert not (hops[i] * hops[j]).any()


def test_disconnected_stations_get_zero_rows():
    g = StationGraph.from_pairs(4, [(0, 1)])
    for k in (1, 2):
        a = multi_hop_adjacency(g, k).matrix
        assert not a[2].any() and not a[3].any()


def test_full_network_edge_count():
    # 80 stations and 248 undirected physical edges store 2 x 248 nonzeros
    rng = Rng(0)
    pairs = [(a, b) for a in range(80) for b in range(a + 1, 80)]
    chosen = rng.choice(len(pairs), 248, replace=False)
    g = StationGraph.from_pairs(80, [pairs[i] for i in chosen])
    assert int(multi_hop_adjacency(g, 1).matrix.sum()) == 496


# -- degree --------------------------------------------------------------------


def test_degree_examples():
    hops = [multi_hop_adjacency(PATH3, k) for k in (1, 2)]
    assert np.diag(multi_hop_degree(hops[:1]).matrix).tolist() == [1, 2, 1]
    assert np.diag(multi_hop_degree(hops).matrix).tolist() == [2, 2, 2]


def test_degree_rejects_gap():
    with pytest.raises(ConfigError):
        multi_hop_degree([multi_hop_adjacency(PATH3, 1), multi_hop_adjacency(PATH3, 3)])


def test_degree_counts_stations_within_k_hops():
    rng = Rng(5)
    for _ in range(20):
        n = int(rng.integers(3, 14))
        edges = random_edges(rng, n, 0.25)
        g = StationGraph.from_pairs(n, edges)
        dist = floyd_warshall(n, edges)
        hops = [multi_hop_adjacency(g, k) for k in range(1, 11)]
        degrees = hop_degrees(hops)
        direct = oracle_hop_degree([h.matrix.tolist() for h in hops])
        for k, d in enumerate(degrees, start=1):
            reach = [sum(1 for j in range(n) if 0 < dist[i][j] <= k) for i in range(n)]
            assert np.diag(d.matrix).tolist() == reach
            assert np.array_equal(d.matrix, np.array(direct[k - 1]))


# -- DTW -----------------------------------------------------------------------


def test_dtw_examples():
    assert dtw_distance([0, 0, 0], [1, 1, 1]) == 3
    assert dtw_distance([1, 2, 3], [1, 2, 2, 3]) == 0
    x = Rng(0).normal(0, 1, 9)
    assert dtw_distance(x, x) == 0
    with pytest.raises(DataError):
        dtw_distance([], [1.0])


def test_dtw_matches_brute_force_and_is_symmetric():
    rng = Rng(3)
    for _ in range(150):
        x = rng.normal(0, 1, int(rng.integers(1, 6)))
        y = rng.normal(0, 1, int(rng.integers(1, 6)))
        assert dtw_distance(x, y) == pytest.approx(dtw_brute_force(x, y), abs=1e-12)
        assert dtw_distance(x, y) == dtw_distance(y, x)


def test_dtw_matrix_is_symmetric_with_zero_diagonal():
    d = dtw_matrix(Rng(1).normal(0, 1, (5, 12)))
    assert np.array_equal(d, d.T) and not d.diagonal().any()


# -- similarity ----------------------------------------------------------------


def test_identical_series_have_unit_similarity():
    d = dtw_matrix(np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [5.0, 1.0, 0.0]]))
    s = similarity_from_dtw(d, top_k=2, threshold=0.0).matrix
    assert s[0, 1] == s[1, 0] == 1.0


def test_top1_keeps_best_neighbour():
    series = [[0.0, 1.0, 2.0, 1.0], [0.0, 1.1, 2.0, 0.9], [9.0, -4.0, 8.0, -6.0]]
    dist = np.array([[dtw_brute_force(a, b) for b in series] for a in series])
    s = similarity_from_dtw(dist, top_k=1, threshold=0.0).matrix
    best = [min((j for j in range(3) if j != i), key=lambda j: dist[i][j]) for i in range(3)]
    for i in range(3):
        kept = {j for j in range(3) if j != i and s[i, j] > 0}
        assert kept == {best[i]}
        assert s[i, best[i]] == pytest.approx(math.exp(-dist[i][best[i]] / dist[~np.eye(3, dtype=bool)].mean()))


def test_large_tau_sends_similarity_to_one():
    d = dtw_matrix(Rng(2).normal(0, 1, (4, 6)))
    s = similarity_from_dtw(d, top_k=3, threshold=0.0, tau=1e12).matrix
    assert np.allclose(s, 1.0)


def test_similarity_filter_invariants():
    d = dtw_matrix(Rng(4).normal(0, 1, (9, 10)))
    g = similarity_from_dtw(d, top_k=3, threshold=0.2)
    off = g.matrix - np.diag(np.diag(g.matrix))
    assert (np.count_nonzero(off, axis=1) <= 3).all()
    assert (off[off > 0] >= 0.2).all()
    assert (np.diag(g.matrix) == 1).all() and g.matrix.max() == 1


def test_literal_mode_is_available():
    d = np.array([[0.0, 1.0], [1.0, 0.0]])
    g = similarity_from_dtw(d, top_k=1, threshold=0.0, mode="literal")
    assert g.matrix[0, 1] == pytest.approx(math.e)
    with pytest.raises(ConfigError):
        similarity_from_dtw(d, mode="cosine")
    with pytest.raises(ConfigError):
        similarity_from_dtw(d, top_k=0)


@pytest.mark.parametrize("seed", range(3))
def test_similar_roles_score_higher(seed):
    # entry curves follow the role; exits follow routing, so compare on inflow
    m = synth_metro(8, 6, 24, seed=seed, shock_sigma=0.0, idio_sigma=0.0)
    s = similarity_graph(m.dataset, top_k=7, threshold=0.0, channels="in").matrix
    same = [s[i, j] for i in range(8) for j in range(8) if i != j and m.roles[i] == m.roles[j] != "mixed"]
    cross = [s[i, j] for i in range(8) for j in range(8)
             if {m.roles[i], m.roles[j]} == {"residential", "commercial"}]
    assert np.mean(same) > np.mean(cross)


# -- OD ------------------------------------------------------------------------


def test_od_example_row():
    trips = [(0, 1, 10), (2, 1, 30)]
    c = od_flow_graph(trips, 3, prune_threshold=0.0).matrix
    assert c[1].tolist() == [0.25, 0.0, 0.75]
    assert not od_flow_graph([], 3).matrix.any()


def test_od_matches_tally_oracle():
    rng = Rng(9)
    for _ in range(20):
        trips = [(int(o), int(d), int(c)) for o, d, c in
                 zip(rng.integers(0, 5, 40), rng.integers(0, 5, 40), rng.integers(0, 20, 40))]
        for prune in (0.0, 0.1):
            g = od_flow_graph(trips, 5, prune)
            assert np.allclose(g.matrix, oracle_od_fractions(trips, 5, prune), atol=1e-12, rtol=0)
            assert (g.matrix.sum(axis=1) <= 1 + 1e-9).all()
            assert not g.matrix[g.trips == 0].any()


def test_od_rejects_bad_records():
    with pytest.raises(DataError):
        od_flow_graph([(0, 5, 1)], 3)
    with pytest.raises(DataError):
        od_flow_graph([(0, 1, -2)], 3)


# -- normalisation -------------------------------------------------------------


def test_normalize_examples():
    edge = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.array_equal(normalize(edge, "symmetric"), edge)
    assert np.array_equal(normalize(np.array([[0.0, 2.0], [2.0, 0.0]]), "random-walk"), edge)
    iso = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    for mode in ("symmetric", "random-walk"):
        out = normalize(iso, mode)
        assert np.all(np.isfinite(out)) and not out[2].any()
    with pytest.raises(DataError):
        normalize(-edge, "symmetric")
    with pytest.raises(ConfigError):
        normalize(edge, "laplace")


def test_random_walk_rows_sum_to_one_or_zero():
    m = Rng(0).uniform(0, 1, (6, 6)) * (Rng(1).random((6, 6)) > 0.5)
    sums = normalize(m, "random-walk").sum(axis=1)
    assert np.all((np.abs(sums - 1) < 1e-12) | (sums == 0))


# -- graph set and I/O -----------------------------------------------------------


@pytest.fixture(scope="module")
def graph_set():
    m = synth_metro(8, 6, 24, seed=0)
    tr = m.dataset.days(0, 4)
    return build_graph_set(m.graph, tr, m.trips.aggregate(days=range(4)), k_hops=3)


def test_diffusion_side(graph_set):
    a, c, d = graph_set.hops[1].matrix, graph_set.od.matrix, np.diag(graph_set.degrees[1].matrix)
    right = graph_set.diffusion()[1]
    assert np.allclose(right, (a * c) @ np.diag(1 / d), atol=1e-15)


def test_matrix_csv_round_trip_is_exact():
    m = Rng(0).normal(0, 1, (4, 4)) / 3
    text = matrix_to_csv(m)
    assert text.splitlines()[0] == "station_id,0,1,2,3"
    assert matrix_from_csv(text).tobytes() == m.tobytes()


def test_graph_set_save_load(tmp_path, graph_set):
    digest = save_graph_set(graph_set, tmp_path / "g")
    names = sorted(p.name for p in (tmp_path / "g").glob("A*.csv"))
    assert names == ["A1.csv", "A1_sym.csv", "A2.csv", "A3.csv"]
    back = load_graph_set(tmp_path / "g")
    assert graph_hash(back) == digest
    wrapper = json.loads((tmp_path / "g" / "A2.json").read_text())
    assert wrapper["K"] == 2 and wrapper["n"] == 8 and wrapper["params"]["top_k"] == 10

    save_graph_set(graph_set, tmp_path / "h")
    for p in (tmp_path / "g").iterdir():
        assert p.read_bytes() == (tmp_path / "h" / p.name).read_bytes()


def test_tampered_graph_file_is_refused(tmp_path, graph_set):
    save_graph_set(graph_set, tmp_path)
    p = tmp_path / "C.csv"
    p.write_text(p.read_text().replace("0.0", "0.5", 1))
    with pytest.raises(DataError):
        load_graph_set(tmp_path)


def test_single_hop_set_has_one_adjacency(tmp_path, graph_set):
    save_graph_set(graph_set.truncated(1), tmp_path)
    assert sorted(p.name for p in tmp_path.glob("A?.csv")) == ["A1.csv"]


def test_graph_set_rejects_station_mismatch():
    m = synth_metro(8, 2, 8, seed=0)
    small = RidershipDataset(m.dataset.grids[:, :, :5], m.dataset.day_labels)
    with pytest.raises(DataError):
        build_graph_set(m.graph, small, [], k_hops=1)

