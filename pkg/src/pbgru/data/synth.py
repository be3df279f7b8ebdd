"""Synthetic metro systems with planted structure, for desk-scale experiments.

Stations are residential, commercial or mixed. Each role has a double-peak
daily entry curve, and stations of one role share a persistent (AR(1)) demand
shock, so same-role stations carry information about each other. Every
entering passenger is routed to a destination at exactly ``od_hops`` hops
when one exists: residential -> commercial in the morning, the reverse in the
evening. The passenger exits ``od_hops * lag_per_hop`` steps later, so outflow
at a station is driven by inflow ``od_hops`` hops away.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from ..graphs import StationGraph, hop_distances
from ..numerics import Rng
from .ridership import RidershipDataset

ROLES = ("residential", "commercial", "mixed")

# (morning peak, evening peak) of the entry curve per role
_ENTRY_PEAKS = {"residential": (1.0, 0.3), "commercial": (0.25, 1.0), "mixed": (0.6, 0.6)}

# destination weight by (origin role, destination role) in the morning;
# the evening uses the transposed preference
_MORNING_PREF = {
    ("residential", "commercial"): 1.0, ("residential", "mixed"): 0.5, ("residential", "residential"): 0.1,
    ("commercial", "commercial"): 0.5, ("commercial", "mixed"): 0.5, ("commercial", "residential"): 0.5,
    ("mixed", "commercial"): 0.6, ("mixed", "mixed"): 0.5, ("mixed", "residential"): 0.4,
}


@dataclass
class TripLog:
    day: np.ndarray
    step: np.ndarray
    origin: np.ndarray
    destination: np.ndarray
    count: np.ndarray

    def aggregate(self, days=None, steps=None) -> list[tuple[int, int, int]]:
        """Total (origin, destination, count) over the selected days/steps."""
        mask = np.ones(self.count.shape, dtype=bool)
        if days is not None:
            mask &= np.isin(self.day, np.asarray(list(days)))
        if steps is not None:
            mask &= np.isin(self.step, np.asarray(list(steps)))
        totals: dict[tuple[int, int], int] = {}
        for o, d, c in zip(self.origin[mask], self.destination[mask], self.count[mask]):
            totals[(int(o), int(d))] = totals.get((int(o), int(d)), 0) + int(c)
        return [(o, d, c) for (o, d), c in sorted(totals.items())]


@dataclass
class SynthMetro:
    dataset: RidershipDataset
    graph: StationGraph
    trips: TripLog
    roles: list[str]


def _random_network(n: int, rng: Rng) -> StationGraph:
    """Connected, line-like network: mostly a chain with occasional branches."""
    order = rng.permutation(n)
    edges = set()
    for i in range(1, n):
        parent = order[i - 1] if rng.random() < 0.75 else order[int(rng.integers(0, i))]
        a, b = int(order[i]), int(parent)
        edges.add((min(a, b), max(a, b)))
    return StationGraph(n, tuple(sorted(edges)))


def _assign_roles(n: int, mix: tuple[float, float, float], rng: Rng) -> list[str]:
    total = sum(mix)
    n_res = max(2, int(round(n * mix[0] / total)))
    n_com = max(1, int(round(n * mix[1] / total)))
    n_com = min(n_com, n - n_res)
    roles = ["residential"] * n_res + ["commercial"] * n_com + ["mixed"] * (n - n_res - n_com)
    return [roles[i] for i in rng.permutation(n)]


def _entry_curve(role: str, steps: int) -> np.ndarray:
    t = (np.arange(steps) + 0.5) / steps
    am, pm = _ENTRY_PEAKS[role]
    bump = lambda c: np.exp(-0.5 * ((t - c) / 0.09) ** 2)  # noqa: E731
    return 0.15 + am * bump(0.27) + pm * bump(0.73)


def _ar1(rng: Rng, shape: tuple[int, ...], rho: float, sigma: float) -> np.ndarray:
    """AR(1) paths along the last axis with stationary std ``sigma``."""
    eps = rng.normal(0.0, sigma, shape)
    out = np.empty(shape)
    out[..., 0] = eps[..., 0]
    k = np.sqrt(1.0 - rho * rho)
    for s in range(1, shape[-1]):
        out[..., s] = rho * out[..., s - 1] + k * eps[..., s]
    return out


def synth_metro(
    n: int = 8,
    days: int = 20,
    steps_per_day: int = 24,
    seed: int = 0,
    profile_mix: tuple[float, float, float] = (0.4, 0.4, 0.2),
    od_hops: int = 2,
    lag_per_hop: int = 1,
    scale: tuple[float, float] = (400.0, 600.0),
    shock_sigma: float = 0.35,
    shock_rho: float = 0.8,
    idio_sigma: float = 0.1,
    interval_minutes: int = 15,
    start: str = "2019-01-01",
    start_minute: int = 6 * 60,
) -> SynthMetro:
    if n < 4:
        raise DataError(f"synthetic metro needs at least 4 stations, got {n}")
    rng = Rng(seed)
    graph = _random_network(n, rng.child("network"))
    roles = _assign_roles(n, profile_mix, rng.child("roles"))
    dist = hop_distances(graph)
    magnitude = rng.child("scale").uniform(scale[0], scale[1], n)

    shocks = rng.child("shocks")
    role_shock = {r: _ar1(shocks, (days, steps_per_day), shock_rho, shock_sigma) for r in ROLES}
    idio = _ar1(rng.child("idio"), (days, n, steps_per_day), shock_rho, idio_sigma)
    lam = np.empty((days, steps_per_day, n))
    for i in range(n):
        lam[:, :, i] = magnitude[i] * _entry_curve(roles[i], steps_per_day) * np.exp(role_shock[roles[i]] + idio[:, i])
    entries = rng.child("entries").poisson(lam).astype(np.float64)

    dests = []
    for j in range(n):
        cand = np.flatnonzero(dist[j] == od_hops)
        if cand.size == 0:
            reach = dist[j][dist[j] > 0]
            cand = np.flatnonzero(dist[j] == reach.max()) if reach.size else np.array([], dtype=int)
        dests.append(cand)

    route = rng.child("routing")
    exits = np.zeros_like(entries)
    log = {"day": [], "step": [], "origin": [], "destination": [], "count": []}
    for d in range(days):
        for s in range(steps_per_day):
            morning = (s + 0.5) / steps_per_day < 0.5
            for j in range(n):
                cand = dests[j]
                total = int(entries[d, s, j])
                if cand.size == 0 or total == 0:
                    continue
                if morning:
                    w = np.array([_MORNING_PREF[(roles[j], roles[i])] for i in cand])
                else:
                    w = np.array([_MORNING_PREF[(roles[i], roles[j])] for i in cand])
                counts = route.multinomial(total, w / w.sum())
                for i, c in zip(cand, counts):
                    if c == 0:
                        continue
                    arrive = s + int(dist[j, i]) * lag_per_hop
                    if arrive < steps_per_day:
                        exits[d, arrive, i] += c
                    log["day"].append(d)
                    log["step"].append(s)
                    log["origin"].append(j)
                    log["destination"].append(int(i))
                    log["count"].append(int(c))

    grids = np.stack([entries, exits], axis=-1)
    first = np.datetime64(start)
    labels = [str(first + np.timedelta64(d, "D")) for d in range(days)]
    ds = RidershipDataset(grids, labels, interval_minutes, start_minute,
                          {"synthetic": True, "seed": seed, "roles": roles})
    trips = TripLog(*(np.asarray(log[k], dtype=np.int64) for k in ("day", "step", "origin", "destination", "count")))
    return SynthMetro(ds, graph, trips, roles)
