"""Independent reference implementations used only by the tests.

Plain Python, no numpy: metrics stream over the predictions CSV one record at
a time, accumulating with math.fsum in file order rather than reducing arrays,
so an error in the vectorised code path cannot be mirrored here.
"""

import csv
import math
from collections import defaultdict, namedtuple

Record = namedtuple("Record", "window horizon station channel y_true y_pred")


def read_predictions(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["window_id", "horizon_step", "station_id", "channel", "y_true", "y_pred"]
        if reader.fieldnames != expected:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        for row in reader:
            rec = Record(int(row["window_id"]), int(row["horizon_step"]), int(row["station_id"]),
                         row["channel"], float(row["y_true"]), float(row["y_pred"]))
            if math.isnan(rec.y_true) or math.isnan(rec.y_pred):
                raise ValueError("NaN in predictions file")
            records.append(rec)
    return records


def oracle_metrics(records, mape_min_true=1.0, channel=None):
    """Per-horizon {"MAE", "RMSE", "MAPE"}; channel None pools both channels."""
    if not records:
        raise ValueError("no records")
    abs_err = defaultdict(list)
    sq_err = defaultdict(list)
    pct_err = defaultdict(list)
    for r in records:
        if channel is not None and r.channel != channel:
            continue
        e = r.y_pred - r.y_true
        abs_err[r.horizon].append(abs(e))
        sq_err[r.horizon].append(e * e)
        if r.y_true >= mape_min_true:
            pct_err[r.horizon].append(abs(e) / r.y_true)
    out = {}
    for h in sorted(abs_err):
        count = len(abs_err[h])
        out[h] = {
            "MAE": math.fsum(abs_err[h]) / count,
            "RMSE": math.sqrt(math.fsum(sq_err[h]) / count),
            "MAPE": math.fsum(pct_err[h]) / len(pct_err[h]) if pct_err[h] else float("nan"),
        }
    return out


def oracle_od_fractions(trips, n, prune=0.0):
    """Row-normalised destination-by-origin fractions from (origin, destination, count) triples."""
    totals = [[0] * n for _ in range(n)]
    for origin, dest, count in trips:
        totals[dest][origin] += count
    out = []
    for row in totals:
        s = sum(row)
        fractions = [c / s if s else 0.0 for c in row]
        out.append([f if f >= prune else 0.0 for f in fractions])
    return out


def oracle_hop_degree(adjacencies):
    """Direct cumulative hop degree: D(k)_ii = sum over k' <= k of the row sums of A(k')."""
    n = len(adjacencies[0])
    out = []
    for k in range(1, len(adjacencies) + 1):
        diag = [sum(sum(adjacencies[j][i]) for j in range(k)) for i in range(n)]
        out.append([[diag[i] if i == j else 0.0 for j in range(n)] for i in range(n)])
    return out
