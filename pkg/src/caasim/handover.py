"""Handover graph model, pre-configured paths, protocol state machine.

Coverage windows become vertices of a DAG (vertex 0 is the UE's starting
state); an edge i->j means "ride window i until it is about to close, then
switch to window j", which is feasible whenever the windows overlap by at
least ``delta_min`` and j outlives i. Every handover on a path is therefore
forced by coverage, never voluntary, and paths are ranked by their mean
per-switch benefit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .constellation import CoverageWindow
from .errors import (
    CoverageGapError,
    DualInfeasibleError,
    InfeasibleSwitchError,
    NoInitialCoverageError,
    OrderingError,
)

DELTA_MIN_S = 2.0
GUARD_S = 0.05
EXECUTION_S = 0.1
PINGPONG_WINDOW_S = 30.0
DUAL_RETRY_PATHS = 16


@dataclass(frozen=True)
class HoMetricWeights:
    """Relative weight of link capability vs remaining time of stay."""

    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ValueError("weights must lie in [0, 1]")
        if abs(self.alpha + self.beta - 1.0) > 1e-9:
            raise ValueError("alpha + beta must equal 1")


@dataclass(frozen=True)
class HgmEdge:
    src: int  # vertex index, 0 = source
    dst: int
    benefit: float
    switch_time_s: float


@dataclass(frozen=True)
class HandoverGraph:
    """DAG over one UE's coverage windows, ordered by start time.

    Vertex 0 is the source (the UE at ``t0``); vertex k >= 1 is
    ``windows[k-1]``. Every edge satisfies src < dst.
    """

    ue_id: str
    t0: float
    t1: float
    windows: tuple[CoverageWindow, ...]
    edges: tuple[HgmEdge, ...]

    def window_of(self, vertex: int) -> CoverageWindow:
        return self.windows[vertex - 1]

    @property
    def sink_vertices(self) -> tuple[int, ...]:
        return tuple(
            v for v in range(1, len(self.windows) + 1)
            if self.window_of(v).end_s >= self.t1 - 1e-9
        )


@dataclass(frozen=True)
class HoPath:
    """A pre-configured handover sequence.

    ``sequence[0]`` is the initial access (switch time ``t0``); later entries
    are forced handovers. ``cumulative_benefit`` is the path objective: the
    mean benefit over the path's edges, so voluntary extra hops never pay.
    """

    ue_id: str
    sequence: tuple[tuple[str, float], ...]  # (satellite_id, switch_time_s)
    cumulative_benefit: float

    @property
    def handover_count(self) -> int:
        return len(self.sequence) - 1

    def serving_at(self, t: float) -> str | None:
        serving = None
        for sat, switch in self.sequence:
            if t >= switch:
                serving = sat
        return serving


def edge_benefit(
    w_from: CoverageWindow | None,
    w_to: CoverageWindow,
    t_switch: float,
    weights: HoMetricWeights,
    caps: Mapping[CoverageWindow, float],
) -> float:
    """Benefit of switching into ``w_to`` at ``t_switch``.

    alpha * (capability / best candidate capability)
    + beta * (remaining stay / best candidate remaining stay),
    normalised over the graph windows usable at the switch instant.
    """
    if w_from is not None:
        ov_start = max(w_from.start_s, w_to.start_s)
        ov_end = min(w_from.end_s, w_to.end_s)
        if not ov_start <= t_switch <= ov_end:
            raise InfeasibleSwitchError(
                f"switch at {t_switch} outside overlap [{ov_start}, {ov_end}]"
            )
    elif not w_to.contains(t_switch):
        raise InfeasibleSwitchError(f"source switch at {t_switch} outside target window")

    candidates = [w for w in caps if w.start_s <= t_switch < w.end_s]
    if w_to not in candidates:
        candidates.append(w_to)
    cap_max = max(caps[w] for w in candidates)
    stay_max = max(w.end_s - t_switch for w in candidates)
    cap_ratio = caps[w_to] / cap_max if cap_max > 0 else 0.0
    stay_ratio = (w_to.end_s - t_switch) / stay_max if stay_max > 0 else 0.0
    return weights.alpha * cap_ratio + weights.beta * stay_ratio


def build_hgm(
    windows: Sequence[CoverageWindow],
    ue_id: str,
    horizon: tuple[float, float],
    weights: HoMetricWeights,
    delta_min_s: float,
    capabilities: Mapping[CoverageWindow, float],
) -> HandoverGraph:
    """Assemble the handover graph for one UE over a horizon.

    The source connects to every window containing ``t0``; window i gains an
    edge to window j when j covers the instant i closes (overlap >=
    ``delta_min_s``) and strictly outlives it. Raises
    :class:`NoInitialCoverageError` when nothing covers ``t0``.
    """
    t0, t1 = horizon
    usable = sorted(
        (w for w in windows if w.end_s > t0 and w.start_s < t1),
        key=lambda w: (w.start_s, w.satellite_id),
    )
    eff_end = [min(w.end_s, t1) for w in usable]

    edges: list[HgmEdge] = []
    initial = False
    for j, w in enumerate(usable):
        if w.start_s <= t0 < eff_end[j]:
            benefit = edge_benefit(None, w, t0, weights, capabilities)
            edges.append(HgmEdge(0, j + 1, benefit, t0))
            initial = True
    if not initial:
        raise NoInitialCoverageError(f"no window covers t0={t0} for {ue_id}")

    for i, w_i in enumerate(usable):
        switch = eff_end[i] - delta_min_s
        if switch <= t0 or switch >= t1:
            continue
        for j in range(i + 1, len(usable)):
            w_j = usable[j]
            if w_j.start_s > switch:
                break  # start-sorted: no later window can cover the switch
            if eff_end[j] <= eff_end[i]:
                continue  # nested window, handing over would lose coverage
            benefit = edge_benefit(w_i, w_j, switch, weights, capabilities)
            edges.append(HgmEdge(i + 1, j + 1, benefit, switch))

    return HandoverGraph(ue_id, t0, t1, tuple(usable), tuple(edges))


def _path_table(g: HandoverGraph, allowed: frozenset[int] | None, top: int):
    """DP over (vertex, hop count): top paths by benefit sum per cell.

    Entries are (benefit_sum, vertex_tuple); within a cell, higher sum wins
    and exact ties prefer the lexicographically smaller satellite sequence.
    """
    n = len(g.windows)
    out_edges: dict[int, list[HgmEdge]] = {}
    for e in g.edges:
        if allowed is not None and (e.dst not in allowed or (e.src != 0 and e.src not in allowed)):
            continue
        out_edges.setdefault(e.src, []).append(e)

    def sat_seq(vertices: tuple[int, ...]) -> tuple[str, ...]:
        return tuple(g.window_of(v).satellite_id for v in vertices)

    def prune(entries: list[tuple[float, tuple[int, ...]]]):
        entries.sort(key=lambda it: (-it[0], sat_seq(it[1])))
        return entries[:top]

    table: dict[tuple[int, int], list[tuple[float, tuple[int, ...]]]] = {}
    for e in out_edges.get(0, []):
        table.setdefault((e.dst, 1), []).append((e.benefit, (e.dst,)))
    for cell in list(table):
        table[cell] = prune(table[cell])

    for v in range(1, n + 1):
        for k in [k for (vv, k) in table if vv == v]:
            for sum_, verts in table[(v, k)]:
                for e in out_edges.get(v, []):
                    cell = (e.dst, k + 1)
                    table.setdefault(cell, []).append((sum_ + e.benefit, verts + (e.dst,)))
        for cell in [c for c in table if c[0] == v + 1]:
            table[cell] = prune(table[cell])
    return table


def _ranked_full_paths(g: HandoverGraph, allowed: frozenset[int] | None, top: int):
    sinks = set(g.sink_vertices)
    if allowed is not None:
        sinks &= allowed
    table = _path_table(g, allowed, top)

    def sat_seq(vertices: tuple[int, ...]) -> tuple[str, ...]:
        return tuple(g.window_of(v).satellite_id for v in vertices)

    full = []
    for (v, k), entries in table.items():
        if v not in sinks:
            continue
        for sum_, verts in entries:
            full.append((sum_ / k, k - 1, sat_seq(verts), sum_, verts))
    full.sort(key=lambda it: (-it[0], it[1], it[2]))
    return full[:top]


def _to_path(g: HandoverGraph, value: float, verts: tuple[int, ...]) -> HoPath:
    switch_of = {(e.src, e.dst): e.switch_time_s for e in g.edges}
    seq = []
    prev = 0
    for v in verts:
        seq.append((g.window_of(v).satellite_id, switch_of[(prev, v)]))
        prev = v
    return HoPath(g.ue_id, tuple(seq), value)


def _first_uncovered(g: HandoverGraph, allowed: frozenset[int] | None) -> float:
    reachable = {0}
    for e in sorted(g.edges, key=lambda e: (e.src, e.dst)):
        if allowed is not None and (e.dst not in allowed or (e.src != 0 and e.src not in allowed)):
            continue
        if e.src in reachable:
            reachable.add(e.dst)
    ends = [min(g.window_of(v).end_s, g.t1) for v in reachable if v != 0]
    return max(ends) if ends else g.t0


def best_path(g: HandoverGraph) -> HoPath:
    """Maximum mean-benefit path from the source to the horizon end.

    Ties prefer fewer handovers, then the lexicographically smallest
    satellite sequence. Raises :class:`CoverageGapError` carrying the first
    uncovered instant when no path reaches the end of the horizon.
    """
    ranked = _ranked_full_paths(g, None, 1)
    if not ranked:
        raise CoverageGapError(_first_uncovered(g, None))
    value, _, _, _, verts = ranked[0]
    return _to_path(g, value, verts)


def best_dual_paths(g: HandoverGraph) -> tuple[HoPath, HoPath]:
    """Two vertex-disjoint paths (sharing only the source) with maximal
    summed benefit.

    Evaluates the top-ranked first paths (up to ``DUAL_RETRY_PATHS``), pairs
    each with the best path in the remaining subgraph, and returns the best
    feasible pair. Raises :class:`DualInfeasibleError` when fewer than two
    windows cover ``t0`` or no disjoint pair exists.
    """
    at_t0 = [v for v in range(1, len(g.windows) + 1) if g.window_of(v).contains(g.t0)]
    if len(at_t0) < 2:
        raise DualInfeasibleError(f"only {len(at_t0)} window(s) cover t0 for {g.ue_id}")

    all_vertices = frozenset(range(1, len(g.windows) + 1))
    best: tuple[float, HoPath, HoPath] | None = None
    for value1, _, _, _, verts1 in _ranked_full_paths(g, None, DUAL_RETRY_PATHS):
        remaining = all_vertices - set(verts1)
        ranked2 = _ranked_full_paths(g, remaining, 1)
        if not ranked2:
            continue
        value2, _, _, _, verts2 = ranked2[0]
        total = value1 + value2
        if best is None or total > best[0]:
            best = (total, _to_path(g, value1, verts1), _to_path(g, value2, verts2))
    if best is None:
        raise DualInfeasibleError(f"no vertex-disjoint path pair for {g.ue_id}")
    return best[1], best[2]


@dataclass(frozen=True)
class SignalingMessage:
    kind: str  # sequence | prepare | ack | execute | complete
    time_s: float
    ue_id: str
    from_sat: str | None
    to_sat: str | None


@dataclass(frozen=True)
class HoProtocolState:
    """Conditional-handover state for one link following a path."""

    ue_id: str
    link_id: int
    phase: str = "connected"  # connected | preparing | ready | executing
    target: str | None = None
    planned_exec_time_s: float = 0.0
    next_hop: int = 1  # index into the path sequence
    sequence_sent: bool = False
    last_t: float = -math.inf
    last_event_s: float = -math.inf


def ho_protocol_step(
    state: HoProtocolState,
    t: float,
    path: HoPath,
    rtt_s: float,
    guard_s: float = GUARD_S,
    execution_s: float = EXECUTION_S,
) -> tuple[HoProtocolState, list[SignalingMessage]]:
    """Advance the conditional-HO state machine to time ``t``.

    Preparation starts ``rtt + guard`` ahead of each pre-configured switch:
    connected -> preparing (HO request), preparing -> ready after the rtt
    elapses (HO ack), ready -> executing at the switch instant (HO command),
    executing -> connected after the execution time (HO complete). The
    pre-shared sequence costs one message per path, emitted up front; a path
    without handovers emits nothing.
    """
    if t < state.last_t:
        raise OrderingError(f"protocol stepped backwards: {t} < {state.last_t}")

    messages: list[SignalingMessage] = []
    st = replace(state, last_t=t)

    def emit(kind: str, nominal_s: float, from_sat: str, to_sat: str | None) -> None:
        # a busy machine emits late: timestamps stay monotone per link
        nonlocal st
        at = max(nominal_s, st.last_event_s)
        st = replace(st, last_event_s=at)
        messages.append(SignalingMessage(kind, at, st.ue_id, from_sat, to_sat))

    if not st.sequence_sent and path.handover_count > 0:
        st = replace(st, sequence_sent=True)
        emit("sequence", t, path.sequence[0][0], None)

    while True:
        if st.phase == "connected":
            if st.next_hop > path.handover_count:
                break
            switch = path.sequence[st.next_hop][1]
            prep_at = switch - (rtt_s + guard_s)
            if t < prep_at:
                break
            st = replace(
                st,
                phase="preparing",
                target=path.sequence[st.next_hop][0],
                planned_exec_time_s=switch,
            )
            emit("prepare", prep_at, path.sequence[st.next_hop - 1][0], st.target)
        elif st.phase == "preparing":
            ack_at = st.planned_exec_time_s - guard_s
            if t < ack_at:
                break
            st = replace(st, phase="ready")
            emit("ack", ack_at, path.sequence[st.next_hop - 1][0], st.target)
        elif st.phase == "ready":
            if t < st.planned_exec_time_s:
                break
            st = replace(st, phase="executing")
            emit("execute", st.planned_exec_time_s, path.sequence[st.next_hop - 1][0], st.target)
        elif st.phase == "executing":
            done_at = st.planned_exec_time_s + execution_s
            if t < done_at:
                break
            emit("complete", done_at, path.sequence[st.next_hop - 1][0], st.target)
            st = replace(st, phase="connected", target=None, next_hop=st.next_hop + 1)
    return st, messages


def detect_ping_pong(ho_log: Sequence[tuple[float, str, str]], window_s: float) -> int:
    """Count handovers that return to a satellite served within ``window_s``."""
    last_served: dict[str, float] = {}
    count = 0
    prev_t = -math.inf
    for t, from_sat, to_sat in ho_log:
        if t < prev_t:
            raise OrderingError("handover log is not time-ordered")
        prev_t = t
        if to_sat in last_served and t - last_served[to_sat] <= window_s:
            count += 1
        last_served[from_sat] = t
    return count
