"""Ridership grids, canonical CSV I/O, chronological splits, windows and Z-scores.

Canonical ridership CSV (long form)::

    timestamp,station_id,in,out
    2019-01-01T06:00:00,0,12,3

Timestamps sit on a fixed grid of ``interval`` minutes. Every service day
shares the same step range, running from the earliest to the latest time of
day seen in the file. Cells absent from the file are filled with 0 and counted.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np

from ..errors import DataError, ShapeError

CHANNELS = ("in", "out")
STD_FLOOR = 1e-8


@dataclass
class RidershipDataset:
    grids: np.ndarray  # [days, steps, n, 2]
    day_labels: list[str]
    interval_minutes: int = 15
    start_minute: int = 0
    load_report: dict = field(default_factory=dict)

    def __post_init__(self):
        g = self.grids
        if g.ndim != 4 or g.shape[-1] != 2:
            raise ShapeError(f"ridership grids must be [days, steps, n, 2], got {g.shape}")
        if len(self.day_labels) != g.shape[0]:
            raise ShapeError("one day label per day grid required")

    @property
    def n(self) -> int:
        return self.grids.shape[2]

    @property
    def num_days(self) -> int:
        return self.grids.shape[0]

    @property
    def steps_per_day(self) -> int:
        return self.grids.shape[1]

    def days(self, start: int, stop: int) -> "RidershipDataset":
        return RidershipDataset(self.grids[start:stop].copy(), list(self.day_labels[start:stop]),
                                self.interval_minutes, self.start_minute)

    def with_grids(self, grids: np.ndarray) -> "RidershipDataset":
        return RidershipDataset(grids, list(self.day_labels), self.interval_minutes, self.start_minute)

    def timestamp(self, day: int, step: int) -> str:
        d = date.fromisoformat(self.day_labels[day])
        t = datetime(d.year, d.month, d.day) + timedelta(minutes=self.start_minute + step * self.interval_minutes)
        return t.isoformat(timespec="seconds")


def _fmt(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def write_ridership_csv(ds: RidershipDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "station_id", "in", "out"])
        for d in range(ds.num_days):
            for s in range(ds.steps_per_day):
                ts = ds.timestamp(d, s)
                for i in range(ds.n):
                    w.writerow([ts, i, _fmt(ds.grids[d, s, i, 0]), _fmt(ds.grids[d, s, i, 1])])


def load_dataset(path, n: int | None = None, interval: int = 15) -> RidershipDataset:
    """Parse a canonical ridership CSV into per-day grids."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["timestamp", "station_id", "in", "out"]:
            raise DataError(f"{path}: expected header timestamp,station_id,in,out, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                ts = datetime.fromisoformat(row[0])
                sid = int(row[1])
                vin, vout = float(row[2]), float(row[3])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed row ({exc})") from exc
            if not (np.isfinite(vin) and np.isfinite(vout)):
                raise DataError(f"{path}:{lineno}: non-finite volume")
            if vin < 0 or vout < 0:
                raise DataError(f"{path}:{lineno}: negative volume")
            if sid < 0 or (n is not None and sid >= n):
                raise DataError(f"{path}:{lineno}: station id {sid} outside [0, {n})")
            records.append((lineno, ts, sid, vin, vout))
    if not records:
        raise DataError(f"{path}: no data rows")
    if n is None:
        n = max(r[2] for r in records) + 1
    minutes = [r[1].hour * 60 + r[1].minute for r in records]
    start = min(minutes)
    days = sorted({r[1].date() for r in records})
    day_index = {d: i for i, d in enumerate(days)}
    offsets = []
    for (lineno, ts, *_), m in zip(records, minutes):
        if ts.second or ts.microsecond or (m - start) % interval:
            raise DataError(f"{path}:{lineno}: timestamp {ts.isoformat()} is off the {interval}-minute grid")
        offsets.append((m - start) // interval)
    steps = max(offsets) + 1
    grids = np.zeros((len(days), steps, n, 2))
    filled = np.zeros((len(days), steps, n), dtype=bool)
    for (lineno, ts, sid, vin, vout), step in zip(records, offsets):
        d = day_index[ts.date()]
        if filled[d, step, sid]:
            raise DataError(f"{path}:{lineno}: duplicate entry for {ts.isoformat()} station {sid}")
        filled[d, step, sid] = True
        grids[d, step, sid] = (vin, vout)
    seen_ids = {r[2] for r in records}
    report = {"rows": len(records), "stations": n, "days": len(days), "steps_per_day": steps,
              "missing_cells": int((~filled).sum()), "stations_without_rows": sorted(set(range(n)) - seen_ids)}
    return RidershipDataset(grids, [d.isoformat() for d in days], interval, start, report)


def chronological_split(ds: RidershipDataset, train: int, val: int, test: int):
    """Contiguous, ordered train/val/test day ranges."""
    if min(train, val, test) < 0 or train + val + test != ds.num_days:
        raise DataError(f"split {train}/{val}/{test} does not cover the {ds.num_days} days")
    return ds.days(0, train), ds.days(train, train + val), ds.days(train + val, ds.num_days)


@dataclass
class WindowSample:
    x: np.ndarray  # [t_in, n, 2]
    y: np.ndarray  # [t_out, n, 2]
    day: int
    offset: int


def window_count(steps: int, t_in: int, t_out: int) -> int:
    return max(0, steps - t_in - t_out + 1)


def make_windows(ds: RidershipDataset, t_in: int, t_out: int) -> list[WindowSample]:
    """Every (input, target) pair inside a single service day."""
    if t_in < 1 or t_out < 1:
        raise DataError("window lengths must be positive")
    if t_in + t_out > ds.steps_per_day:
        raise DataError(f"window of {t_in}+{t_out} steps is longer than a {ds.steps_per_day}-step day")
    out = []
    for d in range(ds.num_days):
        for s in range(window_count(ds.steps_per_day, t_in, t_out)):
            out.append(WindowSample(ds.grids[d, s:s + t_in].copy(), ds.grids[d, s + t_in:s + t_in + t_out].copy(),
                                    d, s))
    return out


def stack_windows(samples: list[WindowSample]) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        return np.zeros((0,)), np.zeros((0,))
    return np.stack([w.x for w in samples]), np.stack([w.y for w in samples])


@dataclass
class ZScoreStats:
    mean: np.ndarray
    std: np.ndarray
    channels: tuple[str, ...] = CHANNELS
    fit_range: tuple[str, str] | None = None

    @classmethod
    def fit(cls, ds: RidershipDataset) -> "ZScoreStats":
        flat = ds.grids.reshape(-1, 2)
        if flat.shape[0] == 0:
            raise DataError("cannot fit Z-score statistics on an empty split")
        std = np.maximum(flat.std(axis=0), STD_FLOOR)
        rng = (ds.day_labels[0], ds.day_labels[-1]) if ds.day_labels else None
        return cls(flat.mean(axis=0), std, CHANNELS, rng)

    def _check(self, x: np.ndarray) -> None:
        if x.shape[-1:] != self.mean.shape:
            raise ShapeError(f"data last axis {x.shape[-1:]} does not match stats shape {self.mean.shape}")

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        self._check(x)
        return (x - self.mean) / self.std

    def inverse(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        self._check(z)
        return z * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": [float(x) for x in self.mean], "std": [float(x) for x in self.std],
                "channels": list(self.channels), "fit_range": list(self.fit_range) if self.fit_range else None}

    @classmethod
    def from_dict(cls, doc: dict) -> "ZScoreStats":
        fr = doc.get("fit_range")
        return cls(np.array(doc["mean"], dtype=np.float64), np.array(doc["std"], dtype=np.float64),
                   tuple(doc.get("channels", CHANNELS)), tuple(fr) if fr else None)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ZScoreStats":
        return cls.from_dict(json.loads(Path(path).read_text()))


def zscore_fit_transform(ds: RidershipDataset) -> tuple[RidershipDataset, ZScoreStats]:
    stats = ZScoreStats.fit(ds)
    return ds.with_grids(stats.transform(ds.grids)), stats


def zscore_transform(data, stats: ZScoreStats):
    if isinstance(data, RidershipDataset):
        return data.with_grids(stats.transform(data.grids))
    return stats.transform(data)


def zscore_inverse(data, stats: ZScoreStats):
    if isinstance(data, RidershipDataset):
        return data.with_grids(stats.inverse(data.grids))
    return stats.inverse(data)


def load_edges(path, n: int | None = None):
    from ..graphs import StationGraph

    pairs = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["a", "b"]:
            raise DataError(f"{path}: expected header a,b, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                a, b = (int(x) for x in row)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed edge row") from exc
            pairs.append((a, b))
    if n is None:
        n = max((max(p) for p in pairs), default=-1) + 1
    return StationGraph.from_pairs(n, pairs)


def write_edges(graph, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "b"])
        for a, b in graph.edges:
            w.writerow([a, b])


def load_trips(path) -> list[tuple[int, int, int]]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["origin", "destination", "count"]:
            raise DataError(f"{path}: expected header origin,destination,count, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                o, d, c = int(row[0]), int(row[1]), float(row[2])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{lineno}: malformed trip row") from exc
            if c < 0 or not c.is_integer():
                raise DataError(f"{path}:{lineno}: count must be a non-negative integer")
            out.append((o, d, int(c)))
    return out


def write_trips(trips, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["origin", "destination", "count"])
        for o, d, c in trips:
            w.writerow([int(o), int(d), int(c)])
