"""Constellation control: traffic-driven region division and SC formation.

Regions come from a quadtree split of the service area by UE count. Each
region's sub-constellation (SC) is a greedy set cover over (UE, time-slice)
demand points drawn from the pooled shells, respecting per-satellite
connection capacity and the UEs' altitude preferences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .constellation import CoverageWindow, GroundPoint, OrbitalShell, coverage_windows
from .errors import CaasimError

TIME_SLICE_S = 10.0
SC_VALIDITY_S = 60.0
CAPACITY_PER_SATELLITE = 30
ALTITUDE_PREFERENCE = 1.5
MAX_UES_PER_REGION = 50
MAX_REGION_DEPTH = 6
TARGET_LOAD_PER_SATELLITE = 4


@dataclass(frozen=True)
class LatLonRect:
    lat_min_deg: float
    lat_max_deg: float
    lon_min_deg: float
    lon_max_deg: float

    def __post_init__(self):
        if self.lat_min_deg >= self.lat_max_deg or self.lon_min_deg >= self.lon_max_deg:
            raise ValueError("rectangle must have positive extent")

    @property
    def area_deg2(self) -> float:
        return (self.lat_max_deg - self.lat_min_deg) * (self.lon_max_deg - self.lon_min_deg)


@dataclass(frozen=True)
class Region:
    region_id: str
    bounds: LatLonRect
    ue_ids: tuple[str, ...]
    controller_id: str


@dataclass(frozen=True)
class UeRequirement:
    ue_id: str
    demand_bps: float
    min_rate_bps: float
    connectivity: str  # "single" | "dual"
    preference: str  # "latency-sensitive" | "coverage-stable"
    default_shell_id: str = ""
    default_satellite_id: str | None = None

    def __post_init__(self):
        if self.connectivity not in ("single", "dual"):
            raise ValueError(f"unknown connectivity {self.connectivity!r}")
        if self.preference not in ("latency-sensitive", "coverage-stable"):
            raise ValueError(f"unknown preference {self.preference!r}")

    @property
    def connectivity_count(self) -> int:
        return 2 if self.connectivity == "dual" else 1


@dataclass(frozen=True)
class SubConstellation:
    region_id: str
    satellite_ids: tuple[str, ...]
    valid_from_s: float
    valid_to_s: float
    capacity_per_satellite: int
    # (ue_id, slice_index, missing connectivity units); empty when the SC covers everything
    uncovered_demand: tuple[tuple[str, int, int], ...] = ()


def divide_regions(
    area: LatLonRect,
    ue_positions: Mapping[str, GroundPoint],
    max_ues_per_region: int = MAX_UES_PER_REGION,
    max_depth: int = MAX_REGION_DEPTH,
) -> list[Region]:
    """Quadtree split: quarter any region holding more UEs than the bound.

    Children are visited in south-west, south-east, north-west, north-east
    order; a UE on a split line goes to the north/east child (south and west
    edges are inclusive), so every UE lands in exactly one leaf.
    """
    if max_ues_per_region < 1:
        raise ValueError("max_ues_per_region must be at least 1")

    def descend(region_id: str, bounds: LatLonRect, ues: list[str], depth: int) -> list[Region]:
        if len(ues) <= max_ues_per_region or depth >= max_depth:
            return [Region(region_id, bounds, tuple(sorted(ues)), f"ctrl-{region_id}")]
        lat_mid = 0.5 * (bounds.lat_min_deg + bounds.lat_max_deg)
        lon_mid = 0.5 * (bounds.lon_min_deg + bounds.lon_max_deg)
        quads = [
            LatLonRect(bounds.lat_min_deg, lat_mid, bounds.lon_min_deg, lon_mid),
            LatLonRect(bounds.lat_min_deg, lat_mid, lon_mid, bounds.lon_max_deg),
            LatLonRect(lat_mid, bounds.lat_max_deg, bounds.lon_min_deg, lon_mid),
            LatLonRect(lat_mid, bounds.lat_max_deg, lon_mid, bounds.lon_max_deg),
        ]
        buckets: list[list[str]] = [[], [], [], []]
        for ue in ues:
            gp = ue_positions[ue]
            north = gp.latitude_deg >= lat_mid
            east = gp.longitude_deg >= lon_mid
            buckets[(2 if north else 0) + (1 if east else 0)].append(ue)
        out: list[Region] = []
        for q, (quad, bucket) in enumerate(zip(quads, buckets)):
            out.extend(descend(f"{region_id}{q}", quad, bucket, depth + 1))
        return out

    return descend("r", area, list(ue_positions), 0)


class CoverageIndex:
    """Coverage windows per (satellite, UE) pair plus satellite altitudes."""

    def __init__(
        self,
        windows_by_pair: Mapping[tuple[str, str], Sequence[CoverageWindow]],
        sat_altitudes_km: Mapping[str, float],
    ):
        self._windows = {k: tuple(v) for k, v in windows_by_pair.items() if v}
        self.sat_altitudes_km = dict(sat_altitudes_km)
        self._sats_for_ue: dict[str, list[str]] = {}
        for sat, ue in self._windows:
            self._sats_for_ue.setdefault(ue, []).append(sat)
        for sats in self._sats_for_ue.values():
            sats.sort()

    @classmethod
    def from_shells(
        cls,
        shells: Sequence[OrbitalShell],
        ground_points: Mapping[str, GroundPoint],
        horizon: tuple[float, float],
        mask_deg: float,
    ) -> "CoverageIndex":
        from .constellation import build_walker_shell

        windows_by_pair = {}
        altitudes = {}
        for shell in shells:
            for orbit in build_walker_shell(shell):
                altitudes[orbit.satellite_id] = shell.altitude_km
                for ue_id, gp in ground_points.items():
                    ws = coverage_windows(
                        orbit, gp, horizon[0], horizon[1], mask_deg, ground_point_id=ue_id
                    )
                    if ws:
                        windows_by_pair[(orbit.satellite_id, ue_id)] = ws
        return cls(windows_by_pair, altitudes)

    def covering_sats(self, ue_id: str) -> list[str]:
        return self._sats_for_ue.get(ue_id, [])

    def windows(self, sat_id: str, ue_id: str) -> tuple[CoverageWindow, ...]:
        return self._windows.get((sat_id, ue_id), ())

    def covers_interval(self, sat_id: str, ue_id: str, start: float, end: float) -> bool:
        return any(
            w.start_s <= start and w.end_s >= end for w in self._windows.get((sat_id, ue_id), ())
        )


def _slice_bounds(horizon: tuple[float, float], slice_s: float) -> list[tuple[float, float]]:
    t0, t1 = horizon
    n = max(1, int(math.ceil((t1 - t0) / slice_s - 1e-9)))
    return [(t0 + k * slice_s, min(t0 + (k + 1) * slice_s, t1)) for k in range(n)]


def _preference_weight(
    req: UeRequirement, sat_alt_km: float, alt_lo: float, alt_hi: float, multiplier: float
) -> float:
    if alt_hi <= alt_lo:
        return 1.0
    mid = 0.5 * (alt_lo + alt_hi)
    high = sat_alt_km >= mid
    if req.preference == "coverage-stable" and high:
        return multiplier
    if req.preference == "latency-sensitive" and not high:
        return multiplier
    return 1.0


def form_sc(
    region: Region,
    pool: CoverageIndex,
    reqs: Mapping[str, UeRequirement],
    horizon: tuple[float, float],
    capacity: int = CAPACITY_PER_SATELLITE,
    slice_s: float = TIME_SLICE_S,
    altitude_preference: float = ALTITUDE_PREFERENCE,
    target_load: int = TARGET_LOAD_PER_SATELLITE,
    incumbents: Iterable[str] = (),
) -> SubConstellation:
    """Greedy set cover of the region's (UE, slice) demand points.

    Each UE needs ``connectivity_count`` distinct covering SC members in
    every slice; a satellite covers a demand point only if one window spans
    the whole slice, and serves at most ``capacity`` UEs per slice.
    Incumbent members that still cover anything are retained up front;
    greedy picks score demand points weighted by the UE's altitude
    preference, ties going to the smaller satellite id.

    After the cover is met the SC keeps growing toward a traffic-driven
    size (one member per ``target_load`` connectivity units), picking the
    satellites that add the most redundant coverage, so the per-satellite
    transmit budget is not split across too many beams.

    If the pool cannot cover everything the partial SC is returned with the
    uncovered report — the caller turns the residue into outage.
    """
    ues = [u for u in region.ue_ids if u in reqs]
    slices = _slice_bounds(horizon, slice_s)
    incumbents = set(incumbents)

    alts = pool.sat_altitudes_km
    alt_lo = min(alts.values(), default=0.0)
    alt_hi = max(alts.values(), default=0.0)

    # need[(ue, k)] = remaining connectivity units for that demand point
    need: dict[tuple[str, int], int] = {}
    for ue in ues:
        for k in range(len(slices)):
            need[(ue, k)] = reqs[ue].connectivity_count

    cov: dict[str, list[tuple[str, int]]] = {}
    weight: dict[tuple[str, str], float] = {}
    for ue in ues:
        for sat in pool.covering_sats(ue):
            weight[(sat, ue)] = _preference_weight(
                reqs[ue], alts[sat], alt_lo, alt_hi, altitude_preference
            )
            for k, (a, b) in enumerate(slices):
                if pool.covers_interval(sat, ue, a, b):
                    cov.setdefault(sat, []).append((ue, k))

    selected: list[str] = []
    load: dict[tuple[str, int], int] = {}  # (sat, slice) -> planned assignments
    # (ue, slice) -> covering members per altitude, for tiered redundancy scores
    providers_alt: dict[tuple[str, int], dict[float, int]] = {}

    def assignable(sat: str) -> list[tuple[str, int]]:
        """Needy demand points this satellite could take, capacity-capped."""
        by_slice: dict[int, list[tuple[float, str]]] = {}
        for ue, k in cov.get(sat, ()):
            if need[(ue, k)] > 0:
                by_slice.setdefault(k, []).append((-weight[(sat, ue)], ue))
        picks: list[tuple[str, int]] = []
        for k, entries in by_slice.items():
            room = capacity - load.get((sat, k), 0)
            if room <= 0:
                continue
            entries.sort()
            picks.extend((ue, k) for _, ue in entries[:room])
        return picks

    def select(sat: str, picks: list[tuple[str, int]]) -> None:
        selected.append(sat)
        for ue, k in picks:
            need[(ue, k)] -= 1
            load[(sat, k)] = load.get((sat, k), 0) + 1
        for point in cov.get(sat, ()):
            tiers = providers_alt.setdefault(point, {})
            tiers[alts[sat]] = tiers.get(alts[sat], 0) + 1

    for sat in sorted(incumbents):
        if sat in cov:
            select(sat, assignable(sat))

    candidates = sorted(set(cov) - set(selected))
    while any(n > 0 for n in need.values()):
        best_sat, best_score, best_picks = None, 0.0, []
        for sat in candidates:
            picks = assignable(sat)
            score = sum(weight[(sat, ue)] for ue, _ in picks)
            if score > best_score:
                best_sat, best_score, best_picks = sat, score, picks
        if best_sat is None:
            break
        candidates.remove(best_sat)
        select(best_sat, best_picks)

    # fill pass: spare capacity on already-selected members absorbs leftovers
    changed = True
    while changed and any(n > 0 for n in need.values()):
        changed = False
        for sat in sorted(selected):
            picks = assignable(sat)
            if picks:
                changed = True
                for ue, k in picks:
                    need[(ue, k)] -= 1
                    load[(sat, k)] = load.get((sat, k), 0) + 1

    # growth phase: traffic-proportional SC size. Picks are valued by the
    # demand points they cover, discounted by how many same-or-lower-altitude
    # members already cover each point, so extra members go to the strongest
    # (lowest) shell first and spread geographically instead of stacking.
    units = sum(reqs[ue].connectivity_count for ue in ues)
    size_target = math.ceil(units / max(target_load, 1))

    def growth_score(sat: str) -> float:
        alt = alts[sat]
        total = 0.0
        for ue, k in cov.get(sat, ()):
            tiers = providers_alt.get((ue, k), {})
            n = sum(c for a, c in tiers.items() if a <= alt)
            total += weight[(sat, ue)] * 0.5**n
        return total

    while len(selected) < size_target and candidates:
        best_sat, best_score = None, 0.0
        for sat in candidates:
            score = growth_score(sat)
            if score > best_score:
                best_sat, best_score = sat, score
        if best_sat is None:
            break
        candidates.remove(best_sat)
        select(best_sat, [])

    uncovered = tuple(
        (ue, k, n) for (ue, k), n in sorted(need.items()) if n > 0
    )
    return SubConstellation(
        region_id=region.region_id,
        satellite_ids=tuple(sorted(selected)),
        valid_from_s=horizon[0],
        valid_to_s=horizon[1],
        capacity_per_satellite=capacity,
        uncovered_demand=uncovered,
    )


def reconfigure_sc(
    sc: SubConstellation,
    t: float,
    pool: CoverageIndex,
    reqs: Mapping[str, UeRequirement],
    region: Region,
    validity_s: float = SC_VALIDITY_S,
    capacity: int | None = None,
    slice_s: float = TIME_SLICE_S,
    altitude_preference: float = ALTITUDE_PREFERENCE,
    target_load: int = TARGET_LOAD_PER_SATELLITE,
) -> SubConstellation:
    """Re-plan the SC for the next validity interval, keeping useful members.

    Members that no longer cover any region UE in the interval are dropped;
    the rest seed the greedy cover as incumbents, so an unchanged coverage
    picture reproduces the same SC.
    """
    if t < sc.valid_from_s:
        raise CaasimError(f"reconfiguration time {t} precedes validity start {sc.valid_from_s}")
    horizon = (t, t + validity_s)
    cap = capacity if capacity is not None else sc.capacity_per_satellite
    ues = [u for u in region.ue_ids if u in reqs]
    keep = [
        sat
        for sat in sc.satellite_ids
        if any(
            any(w.start_s < horizon[1] and w.end_s > horizon[0] for w in pool.windows(sat, ue))
            for ue in ues
        )
    ]
    return form_sc(
        region,
        pool,
        reqs,
        horizon,
        capacity=cap,
        slice_s=slice_s,
        altitude_preference=altitude_preference,
        target_load=target_load,
        incumbents=keep,
    )
