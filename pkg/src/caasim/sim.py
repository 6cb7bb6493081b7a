"""Deterministic discrete-time engine for both connectivity strategies.

``run`` executes one (scenario, strategy) pair and returns the metrics plus
the full event log. The pooled strategy ("caas") forms per-region
sub-constellations, plans pre-configured handover paths on the handover
graph, and reallocates transmit power every step from predicted CSI; the
baseline ("standalone") pins each UE to its default shell and hands over on
received signal strength with hysteresis.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import beamforming, control, handover
from .beamforming import PowerAllocation
from .channel import SPEED_OF_LIGHT_KM_S
from .constellation import (
    R_EARTH_KM,
    ConstellationEphemeris,
    CoverageWindow,
    GroundPoint,
    ground_ecef_km,
    propagate,
)
from .constellation import _elevation_at  # scalar kernel for endpoint bisection
from .control import CoverageIndex, Region, SubConstellation, UeRequirement, divide_regions
from .errors import CaasimError, CoverageGapError, DualInfeasibleError, NoInitialCoverageError
from .events import Event, EventLog, MetricsReport, compute_metrics
from .handover import HoMetricWeights, HoPath, HoProtocolState, ho_protocol_step
from .prediction import InterferenceMatrix, attention_weights
from .scenario import PredictionConfig, Scenario, populate_ues

__all__ = [
    "run",
    "sweep",
    "SweepRow",
    "PositionsCache",
    "hgm_for_ue",
    "Scenario",
    "populate_ues",
    "compute_metrics",
]

log = logging.getLogger(__name__)

STRATEGIES = ("caas", "standalone")


class PositionsCache:
    """Propagated positions shared across runs with identical shells/grid."""

    def __init__(self):
        self._store: dict = {}

    def grid_positions(self, scenario: Scenario, eph: ConstellationEphemeris) -> np.ndarray:
        key = (scenario.shells, scenario.step_count, scenario.time_step_s)
        if key not in self._store:
            times = [k * scenario.time_step_s for k in range(scenario.step_count + 1)]
            self._store[key] = np.stack([eph.positions_at(t) for t in times])
        return self._store[key]


class World:
    """Scenario geometry shared by both strategies: satellites, UEs, coverage."""

    def __init__(self, scenario: Scenario, positions_cache: PositionsCache | None = None):
        self.scenario = scenario
        self.eph = ConstellationEphemeris.from_shells(scenario.shells)
        self.sat_ids = self.eph.satellite_ids
        self.sat_index = self.eph.index_of
        self.shell_of = np.array([o.shell_id for o in self.eph.orbits])
        self.sat_altitude = {
            o.satellite_id: o.semi_major_axis_km - R_EARTH_KM for o in self.eph.orbits
        }
        cache = positions_cache or PositionsCache()
        self.positions = cache.grid_positions(scenario, self.eph)  # [T+1, N, 3]

        population = populate_ues(scenario, self.eph)
        self.ue_ids = [req.ue_id for _, req in population]
        self.ue_positions: dict[str, GroundPoint] = {
            req.ue_id: gp for gp, req in population
        }
        self.reqs: dict[str, UeRequirement] = {req.ue_id: req for _, req in population}
        self.ue_row = {ue: i for i, ue in enumerate(self.ue_ids)}
        self.ue_ecef = (
            np.stack([ground_ecef_km(self.ue_positions[u]) for u in self.ue_ids])
            if self.ue_ids
            else np.zeros((0, 3))
        )
        self._windows_by_pair: dict[tuple[str, str], list[CoverageWindow]] | None = None
        self._coverage_index: CoverageIndex | None = None
        self._snr_cache: dict[tuple[str, str, float], float] = {}

    # -- per-step geometry -------------------------------------------------

    def visibility(self, step: int) -> tuple[np.ndarray, np.ndarray]:
        """(elevation_deg, slant_km), both [N, U], at grid step ``step``."""
        pos = self.positions[step]
        los = pos[:, None, :] - self.ue_ecef[None, :, :]
        slant = np.linalg.norm(los, axis=2)
        gp_norm = np.linalg.norm(self.ue_ecef, axis=1)
        sin_el = np.einsum("nuk,uk->nu", los, self.ue_ecef) / (slant * gp_norm[None, :])
        elev = np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))
        return elev, slant

    def slant_of(self, step: int, sat_id: str, ue_id: str) -> float:
        pos = self.positions[step][self.sat_index[sat_id]]
        return float(np.linalg.norm(pos - self.ue_ecef[self.ue_row[ue_id]]))

    # -- coverage windows ----------------------------------------------------

    @property
    def windows_by_pair(self) -> dict[tuple[str, str], list[CoverageWindow]]:
        if self._windows_by_pair is None:
            self._windows_by_pair = self._scan_windows()
        return self._windows_by_pair

    @property
    def coverage_index(self) -> CoverageIndex:
        if self._coverage_index is None:
            self._coverage_index = CoverageIndex(self.windows_by_pair, self.sat_altitude)
        return self._coverage_index

    def _scan_windows(self) -> dict[tuple[str, str], list[CoverageWindow]]:
        """Sweep the grid for mask crossings, then bisect the endpoints.

        Matches :func:`caasim.constellation.coverage_windows` (same coarse
        step and tolerance) but runs vectorised across all pairs.
        """
        sc = self.scenario
        mask = sc.elevation_mask_deg
        steps = sc.step_count
        if steps == 0 or not self.ue_ids:
            return {}
        duration = sc.duration_s
        n_sat = len(self.sat_ids)
        n_ue = len(self.ue_ids)

        gp_norms = np.linalg.norm(self.ue_ecef, axis=1)
        open_at = {}  # (sat index, ue index) -> grid index where coverage opened
        coarse: list[tuple[int, int, int, int | None, float]] = []
        prev = np.zeros((n_sat, n_ue), dtype=bool)
        peak = np.full((n_sat, n_ue), -90.0)

        for k in range(steps + 1):
            elev, _ = self.visibility(k)
            cur = elev >= mask
            peak = np.where(cur, np.maximum(peak, elev), peak)
            opened = cur & ~prev
            closed = prev & ~cur
            for n, u in np.argwhere(opened):
                open_at[(n, u)] = k
            for n, u in np.argwhere(closed):
                k0 = open_at.pop((n, u))
                coarse.append((n, u, k0, k, peak[n, u]))
                peak[n, u] = -90.0
            prev = cur
        for (n, u), k0 in sorted(open_at.items()):
            coarse.append((n, u, k0, None, peak[n, u]))

        dt = sc.time_step_s
        out: dict[tuple[str, str], list[CoverageWindow]] = {}
        for n, u, k0, k1, pk in coarse:
            orbit = self.eph.orbits[n]
            gp_ecef = self.ue_ecef[u]
            gp_norm = float(gp_norms[u])

            def crossing(lo: float, hi: float) -> float:
                f_lo = _elevation_at(orbit, gp_ecef, gp_norm, lo) - mask
                while hi - lo > 1e-3:
                    mid = 0.5 * (lo + hi)
                    f_mid = _elevation_at(orbit, gp_ecef, gp_norm, mid) - mask
                    if (f_lo >= 0) == (f_mid >= 0):
                        lo, f_lo = mid, f_mid
                    else:
                        hi = mid
                return 0.5 * (lo + hi)

            start = 0.0 if k0 == 0 else crossing((k0 - 1) * dt, k0 * dt)
            end = duration if k1 is None else crossing((k1 - 1) * dt, k1 * dt)
            pair = (self.sat_ids[n], self.ue_ids[u])
            out.setdefault(pair, []).append(
                CoverageWindow(pair[0], pair[1], start, end, float(pk))
            )
        for ws in out.values():
            ws.sort(key=lambda w: w.start_s)
        return out

    # -- link capability -----------------------------------------------------

    def window_midpoint_snr(self, window: CoverageWindow) -> float:
        """Full-power interference-free linear SNR at the window midpoint."""
        key = (window.satellite_id, window.ground_point_id, window.start_s)
        cached = self._snr_cache.get(key)
        if cached is not None:
            return cached
        p = self.scenario.link
        mid = 0.5 * (window.start_s + window.end_s)
        orbit = self.eph.orbits[self.sat_index[window.satellite_id]]
        state = propagate(orbit, mid)
        slant = float(
            np.linalg.norm(state.position_km - self.ue_ecef[self.ue_row[window.ground_point_id]])
        )
        fspl = 32.45 + 20.0 * math.log10(slant) + 20.0 * math.log10(p.carrier_frequency_hz / 1e6)
        rx_dbw = p.tx_power_dbw + p.sat_antenna_gain_dbi + p.ue_antenna_gain_dbi - fspl - p.excess_loss_db
        snr = 10.0 ** ((rx_dbw - 10.0 * math.log10(p.noise_power_w)) / 10.0)
        self._snr_cache[key] = snr
        return snr

    def window_capability_bps(self, window: CoverageWindow, concurrent_load: int = 0) -> float:
        """Predicted rate of the window at its midpoint, uncapped.

        The satellite's transmit budget is assumed split over
        ``concurrent_load`` already-planned beams plus this one, so a loaded
        satellite looks less capable and planning spreads UEs out. Uncapped
        spectral efficiency keeps the metric discriminative between
        altitudes even when every link would saturate the efficiency cap.
        """
        p = self.scenario.link
        snr = self.window_midpoint_snr(window) / (1.0 + concurrent_load)
        return p.bandwidth_hz * math.log2(1.0 + snr)


# ---------------------------------------------------------------------------
# CSI prediction store (vectorised attention over matrix columns)
# ---------------------------------------------------------------------------


class _GainHistory:
    """Ring of past gain rows (dB, toward every UE) for one beam column."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.times: list[float] = []
        self.gains: list[np.ndarray] = []

    def push(self, t: float, gains_db: np.ndarray, step_s: float) -> None:
        if self.times and t - self.times[-1] > 1.5 * step_s:
            self.times, self.gains = [], []  # link was torn down; start fresh
        self.times.append(t)
        self.gains.append(gains_db)
        if len(self.times) > self.capacity:
            self.times = self.times[-self.capacity:]
            self.gains = self.gains[-self.capacity:]

    def predict(self, t_future: float, temperature_s: float) -> np.ndarray | None:
        if not self.times:
            return None
        tt = np.array(self.times)
        vv = np.stack(self.gains)
        w = attention_weights(tt, t_future, temperature_s)
        slopes = np.zeros_like(vv)
        if len(tt) > 1:
            slopes[1:] = np.diff(vv, axis=0) / np.diff(tt)[:, None]
        return (w[:, None] * (vv + slopes * (t_future - tt)[:, None])).sum(axis=0)


class _CsiPredictor:
    def __init__(self, cfg: PredictionConfig, step_s: float):
        self.cfg = cfg
        self.step_s = step_s
        self.columns: dict[tuple[str, str], _GainHistory] = {}

    def predict_gains(
        self, t: float, columns: Sequence[tuple[str, str]], true_gains_db: np.ndarray
    ) -> np.ndarray:
        """Predicted gain matrix (dB); falls back to exact geometry for
        columns without history (a fresh link has nothing to extrapolate)."""
        if self.cfg.predictor == "ephemeris":
            return true_gains_db
        out = np.empty_like(true_gains_db)
        for b, key in enumerate(columns):
            hist = self.columns.get(key)
            pred = hist.predict(t, self.cfg.temperature_s) if hist else None
            out[:, b] = true_gains_db[:, b] if pred is None else pred
        return out

    def record(self, t: float, columns: Sequence[tuple[str, str]], true_gains_db: np.ndarray) -> None:
        if self.cfg.predictor == "ephemeris":
            return
        for b, key in enumerate(columns):
            self.columns.setdefault(key, _GainHistory(self.cfg.history_capacity)).push(
                t, true_gains_db[:, b].copy(), self.step_s
            )


# ---------------------------------------------------------------------------
# Shared per-step radio evaluation
# ---------------------------------------------------------------------------


def _gain_matrix_db(world: World, step: int, columns: Sequence[tuple[str, str]]) -> np.ndarray:
    """Channel gains (dB) from every beam column to every UE, [U, B]."""
    p = world.scenario.link
    n_ue = len(world.ue_ids)
    g = np.empty((n_ue, len(columns)))
    by_sat: dict[str, list[int]] = {}
    for b, (sat, _) in enumerate(columns):
        by_sat.setdefault(sat, []).append(b)
    fspl_const = 32.45 + 20.0 * math.log10(p.carrier_frequency_hz / 1e6)
    half_bw = p.beamwidth_3db_deg / 2.0

    pos = world.positions[step]
    for sat in sorted(by_sat):
        cols = by_sat[sat]
        sp = pos[world.sat_index[sat]]
        d = world.ue_ecef - sp[None, :]
        slant = np.linalg.norm(d, axis=1)
        fspl = fspl_const + 20.0 * np.log10(slant)
        dn = d / slant[:, None]
        tgt_rows = [world.ue_row[columns[b][1]] for b in cols]
        cos_ang = np.clip(dn[tgt_rows] @ dn.T, -1.0, 1.0)
        ang = np.degrees(np.arccos(cos_ang))
        rolloff = np.minimum(3.0 * (ang / half_bw) ** 2, 30.0)
        gains = (
            p.sat_antenna_gain_dbi
            - rolloff
            + p.ue_antenna_gain_dbi
            - fspl[None, :]
            - p.excess_loss_db
        )
        g[:, cols] = gains.T
    return g


def _matrix_from_gains(
    world: World, columns: Sequence[tuple[str, str]], gains_db: np.ndarray
) -> InterferenceMatrix:
    tx_ids = tuple((sat, f"{sat}->{ue}") for sat, ue in columns)
    return InterferenceMatrix(
        ue_ids=tuple(world.ue_ids),
        tx_ids=tx_ids,
        tx_targets=tuple(ue for _, ue in columns),
        coefficients=10.0 ** (gains_db / 10.0),
    )


def _check_budgets(alloc: PowerAllocation, budget_w: float) -> None:
    per_sat: dict[str, float] = {}
    for (sat, _), p in zip(alloc.tx_ids, alloc.powers_w):
        per_sat[sat] = per_sat.get(sat, 0.0) + float(p)
    for sat, total in per_sat.items():
        if total > budget_w * (1.0 + 1e-9):
            raise CaasimError(f"power budget violated on {sat}: {total} W > {budget_w} W")


# ---------------------------------------------------------------------------
# Pooled (caas) strategy
# ---------------------------------------------------------------------------


@dataclass
class _Segment:
    path: HoPath
    start_s: float
    end_s: float
    proto: HoProtocolState


@dataclass
class _Link:
    ue_id: str
    link_id: int
    segments: list[_Segment]

    def segment_at(self, t: float) -> _Segment | None:
        for seg in self.segments:
            if seg.start_s <= t < seg.end_s:
                return seg
        return None


def _plan_segments(
    world: World,
    windows: Sequence[CoverageWindow],
    caps: Mapping[CoverageWindow, float],
    ue_id: str,
    link_id: int,
    t0: float,
    t1: float,
    weights: HoMetricWeights,
    delta_min: float,
) -> list[_Segment]:
    """Best-path plan over [t0, t1], stitching across coverage gaps."""
    segments: list[_Segment] = []
    t = t0
    eps = 1e-6
    while t < t1 - eps:
        try:
            g = handover.build_hgm(windows, ue_id, (t, t1), weights, delta_min, caps)
            path = handover.best_path(g)
            segments.append(_Segment(path, t, t1, HoProtocolState(ue_id, link_id)))
            break
        except NoInitialCoverageError:
            starts = [w.start_s for w in windows if w.start_s > t + eps and w.start_s < t1]
            if not starts:
                break
            t = min(starts)
        except CoverageGapError as gap:
            gap_t = min(gap.first_uncovered_s, t1)
            if gap_t <= t + eps:
                break
            g = handover.build_hgm(windows, ue_id, (t, gap_t), weights, delta_min, caps)
            path = handover.best_path(g)
            segments.append(_Segment(path, t, gap_t, HoProtocolState(ue_id, link_id)))
            t = gap_t
    return segments


def _plan_ue_links(
    world: World,
    ue_id: str,
    windows: Sequence[CoverageWindow],
    caps: Mapping[CoverageWindow, float],
    t1: float,
    weights: HoMetricWeights,
) -> list[_Link]:
    sc = world.scenario
    delta_min = sc.handover.min_overlap_s
    if not windows:
        return []
    want_dual = world.reqs[ue_id].connectivity == "dual"
    if want_dual:
        try:
            g = handover.build_hgm(windows, ue_id, (0.0, t1), weights, delta_min, caps)
            p0, p1 = handover.best_dual_paths(g)
            return [
                _Link(ue_id, 0, [_Segment(p0, 0.0, t1, HoProtocolState(ue_id, 0))]),
                _Link(ue_id, 1, [_Segment(p1, 0.0, t1, HoProtocolState(ue_id, 1))]),
            ]
        except (DualInfeasibleError, NoInitialCoverageError, CoverageGapError):
            pass  # degrade to single connectivity
    segments = _plan_segments(world, windows, caps, ue_id, 0, 0.0, t1, weights, delta_min)
    return [_Link(ue_id, 0, segments)] if segments else []


def _run_caas(world: World, alloc_sink: Callable | None = None) -> EventLog:
    sc = world.scenario
    events = EventLog()
    steps = sc.step_count
    if steps == 0 or not world.ue_ids:
        return events

    regions = divide_regions(
        sc.area,
        world.ue_positions,
        sc.control.max_ues_per_region,
        sc.control.max_region_depth,
    )
    index = world.coverage_index
    horizon = (0.0, sc.duration_s)
    subcons: dict[str, SubConstellation] = {}
    region_of: dict[str, Region] = {}
    pending_sc_events: list[Event] = []
    for region in regions:
        reqs = {u: world.reqs[u] for u in region.ue_ids}
        con = control.form_sc(
            region,
            index,
            reqs,
            horizon,
            capacity=sc.control.capacity_per_satellite,
            slice_s=sc.control.slice_s,
            altitude_preference=sc.control.altitude_preference,
            target_load=sc.control.target_load_per_satellite,
        )
        subcons[region.region_id] = con
        region_of.update({u: region for u in region.ue_ids})
        log.debug(
            "region %s: SC of %d satellites, %d uncovered demand points",
            region.region_id, len(con.satellite_ids), len(con.uncovered_demand),
        )
        pending_sc_events.append(
            Event(
                0.0,
                "sc",
                {
                    "region_id": region.region_id,
                    "satellite_ids": list(con.satellite_ids),
                    "uncovered_demand_points": sum(n for _, _, n in con.uncovered_demand),
                },
            )
        )

    # sequential planning, highest demand first; each UE sees every window's
    # capability as the rate it would actually get there: transmit budget
    # split over the load already planned onto that satellite, degraded by
    # the sidelobe interference of every other planned-active satellite
    links: list[_Link] = []
    budget_w = sc.link.tx_power_w
    slice_s = sc.control.slice_s
    capacity = sc.control.capacity_per_satellite
    sat_load: dict[tuple[str, int], int] = {}  # (sat, slice index) -> planned beams
    active_by_slice: dict[int, set[str]] = {}

    def load_at(sat: str, t: float) -> int:
        return sat_load.get((sat, int(t // slice_s)), 0)

    def add_load(path: HoPath, start: float, end: float) -> None:
        seq = path.sequence
        for i, (sat, sw) in enumerate(seq):
            t_in = max(sw, start)
            t_out = seq[i + 1][1] if i + 1 < len(seq) else end
            if t_out <= t_in:
                continue
            for k in range(int(t_in // slice_s), int(math.ceil(t_out / slice_s))):
                sat_load[(sat, k)] = sat_load.get((sat, k), 0) + 1
                active_by_slice.setdefault(k, set()).add(sat)

    fspl_const = 32.45 + 20.0 * math.log10(sc.link.carrier_frequency_hz / 1e6)
    sidelobe_db = sc.link.sat_antenna_gain_dbi - 30.0 + sc.link.ue_antenna_gain_dbi
    noise_w = sc.link.noise_power_w
    last_step = sc.step_count

    def planned_interference_w(window: CoverageWindow, u_row: int) -> float:
        mid = 0.5 * (window.start_s + window.end_s)
        others = sorted(active_by_slice.get(int(mid // slice_s), ()))
        others = [s for s in others if s != window.satellite_id]
        if not others:
            return 0.0
        step = min(int(round(mid / sc.time_step_s)), last_step)
        pos = world.positions[step][[world.sat_index[s] for s in others]]
        slants = np.linalg.norm(pos - world.ue_ecef[u_row], axis=1)
        gains_db = sidelobe_db - (fspl_const + 20.0 * np.log10(slants)) - sc.link.excess_loss_db
        return float(np.sum(budget_w * 10.0 ** (gains_db / 10.0)))

    plan_order = sorted(
        world.ue_ids,
        key=lambda u: (-world.reqs[u].connectivity_count, -world.reqs[u].demand_bps, u),
    )
    for ue in plan_order:
        region = region_of[ue]
        windows = [
            w
            for sat in subcons[region.region_id].satellite_ids
            for w in world.windows_by_pair.get((sat, ue), ())
        ]
        caps: dict[CoverageWindow, float] = {}
        for w in windows:
            n = load_at(w.satellite_id, 0.5 * (w.start_s + w.end_s))
            if n >= capacity:
                caps[w] = 1.0
                continue
            snr = world.window_midpoint_snr(w) / (1.0 + n)
            degradation = 1.0 + planned_interference_w(w, world.ue_row[ue]) / noise_w
            caps[w] = sc.link.bandwidth_hz * math.log2(1.0 + snr / degradation)
        alpha, beta = sc.handover.weights_for(world.reqs[ue].preference)
        ue_links = _plan_ue_links(
            world, ue, windows, caps, sc.duration_s, HoMetricWeights(alpha, beta)
        )
        for lk in ue_links:
            for seg in lk.segments:
                add_load(seg.path, seg.start_s, seg.end_s)
        links.extend(ue_links)
    links.sort(key=lambda lk: (lk.ue_id, lk.link_id))
    log.debug("planned %d links for %d UEs", len(links), len(world.ue_ids))

    predictor = _CsiPredictor(sc.prediction, sc.time_step_s)
    demands = {u: world.reqs[u].demand_bps for u in world.ue_ids}
    pp_tracker: dict[tuple[str, int], dict[str, float]] = {}
    validity = sc.control.sc_validity_s

    for k in range(steps):
        t = k * sc.time_step_s
        step_events: list[Event] = list(pending_sc_events)
        pending_sc_events = []

        if k > 0 and (t % validity) == 0.0:
            for region in regions:
                reqs = {u: world.reqs[u] for u in region.ue_ids}
                con = control.reconfigure_sc(
                    subcons[region.region_id],
                    t,
                    index,
                    reqs,
                    region,
                    validity_s=min(validity, sc.duration_s - t),
                    slice_s=sc.control.slice_s,
                    altitude_preference=sc.control.altitude_preference,
                    target_load=sc.control.target_load_per_satellite,
                )
                serving_now = {
                    seg.path.serving_at(t)
                    for lk in links
                    if lk.ue_id in region.ue_ids
                    for seg in [lk.segment_at(t)]
                    if seg is not None
                }
                serving_now.discard(None)
                con = replace(
                    con,
                    satellite_ids=tuple(sorted(set(con.satellite_ids) | serving_now)),
                )
                subcons[region.region_id] = con
                step_events.append(
                    Event(
                        t,
                        "sc",
                        {
                            "region_id": region.region_id,
                            "satellite_ids": list(con.satellite_ids),
                            "uncovered_demand_points": sum(n for _, _, n in con.uncovered_demand),
                        },
                    )
                )

        # protocol signalling for every link following its path
        messages = []
        serving: list[tuple[str, str, int]] = []  # (ue, sat, link)
        for lk in links:
            seg = lk.segment_at(t)
            if seg is None:
                continue
            sat_now = seg.path.serving_at(t)
            if sat_now is None:
                continue
            serving.append((lk.ue_id, sat_now, lk.link_id))
            rtt = 2.0 * world.slant_of(k, sat_now, lk.ue_id) / SPEED_OF_LIGHT_KM_S
            seg.proto, msgs = ho_protocol_step(
                seg.proto,
                t,
                seg.path,
                rtt,
                guard_s=sc.handover.guard_s,
                execution_s=sc.handover.execution_s,
            )
            messages.extend((m, lk.link_id) for m in msgs)

        messages.sort(key=lambda pair: pair[0].time_s)
        for m, link_id in messages:
            data = {"ue_id": m.ue_id, "link": link_id, "from_sat": m.from_sat}
            if m.kind != "sequence":
                data["to_sat"] = m.to_sat
            step_events.append(Event(m.time_s, m.kind, data))
            if m.kind == "execute":
                tracker = pp_tracker.setdefault((m.ue_id, link_id), {})
                if (
                    m.to_sat in tracker
                    and m.time_s - tracker[m.to_sat] <= sc.handover.pingpong_window_s
                ):
                    step_events.append(
                        Event(m.time_s, "pingpong", {"ue_id": m.ue_id, "link": link_id, "to_sat": m.to_sat})
                    )
                tracker[m.from_sat] = m.time_s

        # radio: predicted allocation, true rates
        columns = sorted((sat, ue) for ue, sat, _ in serving)
        rates = {u: 0.0 for u in world.ue_ids}
        if columns:
            true_db = _gain_matrix_db(world, k, columns)
            pred_db = predictor.predict_gains(t, columns, true_db)
            m_pred = _matrix_from_gains(world, columns, pred_db)
            m_true = _matrix_from_gains(world, columns, true_db)
            budgets = {sat: budget_w for sat, _ in columns}
            alloc = beamforming.allocate_power(m_pred, budgets, demands, sc.link)
            _check_budgets(alloc, budget_w)
            detail = beamforming.evaluate_links(alloc, m_true, sc.link)
            for b, ((sat, ue), (sinr_db, rate)) in enumerate(zip(columns, detail)):
                rates[ue] += rate
                if alloc_sink is not None:
                    alloc_sink(t, sat, ue, float(alloc.powers_w[b]), sinr_db, rate)
            predictor.record(t, columns, true_db)

        step_events.sort(key=lambda e: e.t)
        for ev in step_events:
            events.append(ev)
        for ue in world.ue_ids:
            events.append(Event(t, "rate", {"ue_id": ue, "rate_bps": rates[ue]}))

    return events


# ---------------------------------------------------------------------------
# Standalone strategy
# ---------------------------------------------------------------------------


def _run_standalone(world: World, alloc_sink: Callable | None = None) -> EventLog:
    sc = world.scenario
    events = EventLog()
    steps = sc.step_count
    if steps == 0 or not world.ue_ids:
        return events

    mask = sc.elevation_mask_deg
    hysteresis = sc.standalone.hysteresis_db
    ttt = sc.standalone.time_to_trigger_steps
    budget_w = sc.link.tx_power_w

    shell_indices = {
        shell.shell_id: np.flatnonzero(world.shell_of == shell.shell_id)
        for shell in sc.shells
    }
    serving: dict[str, str | None] = {
        u: world.reqs[u].default_satellite_id for u in world.ue_ids
    }
    pending: dict[str, tuple[str, int]] = {}
    pp_tracker: dict[str, dict[str, float]] = {}

    for k in range(steps):
        t = k * sc.time_step_s
        elev, slant = world.visibility(k)
        step_events: list[Event] = []

        for u_idx, ue in enumerate(world.ue_ids):
            shell_idx = shell_indices[world.reqs[ue].default_shell_id]
            covering = shell_idx[elev[shell_idx, u_idx] >= mask]
            cur = serving[ue]
            cur_idx = world.sat_index[cur] if cur is not None else None

            if covering.size == 0:
                serving[ue] = None
                pending.pop(ue, None)
                continue
            strongest_idx = int(covering[np.argmin(slant[covering, u_idx])])
            strongest = world.sat_ids[strongest_idx]

            if cur_idx is None or elev[cur_idx, u_idx] < mask:
                # no usable serving link: (re)access, a handover if one existed
                if cur is not None:
                    step_events.extend(
                        _standalone_ho_events(
                            t, ue, cur, strongest, pp_tracker, sc.handover.pingpong_window_s
                        )
                    )
                serving[ue] = strongest
                pending.pop(ue, None)
                continue

            if strongest_idx != cur_idx:
                margin_db = 20.0 * (
                    math.log10(slant[cur_idx, u_idx]) - math.log10(slant[strongest_idx, u_idx])
                )
                if margin_db >= hysteresis:
                    cand, count = pending.get(ue, (strongest, 0))
                    count = count + 1 if cand == strongest else 1
                    if count >= ttt:
                        step_events.extend(
                            _standalone_ho_events(
                                t, ue, cur, strongest, pp_tracker, sc.handover.pingpong_window_s
                            )
                        )
                        serving[ue] = strongest
                        pending.pop(ue, None)
                    else:
                        pending[ue] = (strongest, count)
                else:
                    pending.pop(ue, None)
            else:
                pending.pop(ue, None)

        columns = sorted(
            (sat, ue) for ue, sat in serving.items() if sat is not None
        )
        rates = {u: 0.0 for u in world.ue_ids}
        if columns:
            true_db = _gain_matrix_db(world, k, columns)
            m_true = _matrix_from_gains(world, columns, true_db)
            beams_per_sat: dict[str, int] = {}
            for sat, _ in columns:
                beams_per_sat[sat] = beams_per_sat.get(sat, 0) + 1
            grid = sc.standalone.grid_beams
            if grid:
                powers = np.full(len(columns), budget_w / grid)
                background = _background_interference_w(
                    world, k, beams_per_sat, budget_w, grid, sc.link
                )
            else:
                powers = np.array([budget_w / beams_per_sat[sat] for sat, _ in columns])
                background = None
            alloc = PowerAllocation(m_true.tx_ids, powers)
            detail = beamforming.evaluate_links(alloc, m_true, sc.link, background)
            for b, ((sat, ue), (sinr_db, rate)) in enumerate(zip(columns, detail)):
                rates[ue] += rate
                if alloc_sink is not None:
                    alloc_sink(t, sat, ue, float(powers[b]), sinr_db, rate)

        for ev in step_events:
            events.append(ev)
        for ue in world.ue_ids:
            events.append(Event(t, "rate", {"ue_id": ue, "rate_bps": rates[ue]}))

    return events


def _background_interference_w(
    world: World,
    step: int,
    beams_per_sat: Mapping[str, int],
    budget_w: float,
    grid_beams: int,
    params,
) -> np.ndarray:
    """Received power [U] from the busy remainder of fixed-grid payloads.

    Each active satellite spends ``budget / grid_beams`` per scenario beam;
    the rest of its complement carries other traffic whose beams point
    elsewhere, reaching every UE at the sidelobe floor.
    """
    sidelobe_db = params.sat_antenna_gain_dbi - 30.0 + params.ue_antenna_gain_dbi
    fspl_const = 32.45 + 20.0 * math.log10(params.carrier_frequency_hz / 1e6)
    out = np.zeros(len(world.ue_ids))
    pos = world.positions[step]
    for sat, k in sorted(beams_per_sat.items()):
        residual_w = budget_w * max(0.0, 1.0 - k / grid_beams)
        if residual_w <= 0:
            continue
        d = world.ue_ecef - pos[world.sat_index[sat]][None, :]
        slants = np.linalg.norm(d, axis=1)
        gains_db = sidelobe_db - (fspl_const + 20.0 * np.log10(slants)) - params.excess_loss_db
        out += residual_w * 10.0 ** (gains_db / 10.0)
    return out


def _standalone_ho_events(
    t: float,
    ue: str,
    from_sat: str,
    to_sat: str,
    pp_tracker: dict[str, dict[str, float]],
    pingpong_window_s: float,
) -> list[Event]:
    data = {"ue_id": ue, "link": 0, "from_sat": from_sat, "to_sat": to_sat}
    out = [Event(t, kind, dict(data)) for kind in ("prepare", "ack", "execute", "complete")]
    tracker = pp_tracker.setdefault(ue, {})
    if to_sat in tracker and t - tracker[to_sat] <= pingpong_window_s:
        out.append(Event(t, "pingpong", {"ue_id": ue, "link": 0, "to_sat": to_sat}))
    tracker[from_sat] = t
    return out


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------


def run(
    scenario: Scenario,
    strategy: str,
    positions_cache: PositionsCache | None = None,
    alloc_sink: Callable | None = None,
) -> tuple[MetricsReport, EventLog]:
    """Simulate one scenario under one strategy; deterministic in the seed."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    world = World(scenario, positions_cache)
    return _run_on_world(world, strategy, alloc_sink)


def _run_on_world(
    world: World, strategy: str, alloc_sink: Callable | None = None
) -> tuple[MetricsReport, EventLog]:
    runner = _run_caas if strategy == "caas" else _run_standalone
    events = runner(world, alloc_sink)
    return compute_metrics(events, world.scenario, strategy), events


@dataclass(frozen=True)
class SweepRow:
    ue_count: int
    strategy: str
    atr_mean_bps: float
    atr_std: float
    ho_per_ue_mean: float
    ho_per_ue_std: float
    pingpong_mean: float
    signaling_mean: float


def sweep(
    scenario: Scenario,
    ue_counts: Sequence[int],
    seeds: Sequence[int],
    strategies: Sequence[str] = STRATEGIES,
) -> list[SweepRow]:
    """Run every (ue_count, seed, strategy) cell and aggregate across seeds."""
    if not ue_counts or not seeds:
        raise ValueError("ue_counts and seeds must be non-empty")
    cache = PositionsCache()
    rows: list[SweepRow] = []
    for count in ue_counts:
        samples = {s: {"atr": [], "ho": [], "pp": [], "sig": []} for s in strategies}
        for seed in seeds:
            world = World(replace(scenario, ue_count=count, seed=seed), cache)
            for strategy in strategies:
                report, _ = _run_on_world(world, strategy)
                samples[strategy]["atr"].append(report.atr_bps)
                samples[strategy]["ho"].append(report.ho_per_ue)
                samples[strategy]["pp"].append(report.pingpong_count)
                samples[strategy]["sig"].append(report.signaling_messages)
        for strategy in strategies:
            s = samples[strategy]
            rows.append(
                SweepRow(
                    ue_count=count,
                    strategy=strategy,
                    atr_mean_bps=float(np.mean(s["atr"])),
                    atr_std=float(np.std(s["atr"])),
                    ho_per_ue_mean=float(np.mean(s["ho"])),
                    ho_per_ue_std=float(np.std(s["ho"])),
                    pingpong_mean=float(np.mean(s["pp"])),
                    signaling_mean=float(np.mean(s["sig"])),
                )
            )
    return rows


def hgm_for_ue(scenario: Scenario, ue_id: str):
    """Planning view for one UE: its handover graph and chosen path(s)."""
    world = World(scenario)
    if ue_id not in world.ue_row:
        raise KeyError(f"unknown UE id {ue_id!r}")
    regions = divide_regions(
        scenario.area,
        world.ue_positions,
        scenario.control.max_ues_per_region,
        scenario.control.max_region_depth,
    )
    region = next(r for r in regions if ue_id in r.ue_ids)
    reqs = {u: world.reqs[u] for u in region.ue_ids}
    con = control.form_sc(
        region,
        world.coverage_index,
        reqs,
        (0.0, scenario.duration_s),
        capacity=scenario.control.capacity_per_satellite,
        slice_s=scenario.control.slice_s,
        altitude_preference=scenario.control.altitude_preference,
        target_load=scenario.control.target_load_per_satellite,
    )
    windows = [
        w for sat in con.satellite_ids for w in world.windows_by_pair.get((sat, ue_id), ())
    ]
    caps = {w: world.window_capability_bps(w) for w in windows}
    weights = HoMetricWeights(scenario.handover.alpha, scenario.handover.beta)
    g = handover.build_hgm(
        windows, ue_id, (0.0, scenario.duration_s), weights,
        scenario.handover.min_overlap_s, caps,
    )
    paths = []
    if world.reqs[ue_id].connectivity == "dual":
        try:
            paths = list(handover.best_dual_paths(g))
        except (DualInfeasibleError, CoverageGapError):
            paths = []
    if not paths:
        paths = [handover.best_path(g)]
    return g, paths
