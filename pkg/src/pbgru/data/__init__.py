from .ridership import (
    RidershipDataset,
    WindowSample,
    ZScoreStats,
    chronological_split,
    load_dataset,
    load_edges,
    load_trips,
    make_windows,
    stack_windows,
    window_count,
    write_edges,
    write_ridership_csv,
    write_trips,
    zscore_fit_transform,
    zscore_inverse,
    zscore_transform,
)
from .synth import ROLES, SynthMetro, TripLog, synth_metro
