from .builder import (
    GraphSet,
    HopAdjacency,
    HopDegree,
    ODFlowGraph,
    SimilarityGraph,
    StationGraph,
    build_graph_set,
    diffusion_matrix,
    hop_degrees,
    hop_distances,
    multi_hop_adjacency,
    multi_hop_degree,
    normalize,
    od_flow_graph,
    similarity_from_dtw,
    similarity_graph,
    station_series,
)
from .dtw import dtw_distance, dtw_matrix
from .io import graph_hash, load_graph_set, matrix_from_csv, matrix_to_csv, save_graph_set
