"""Simulation event log and metric aggregation.

The log is an append-only, time-ordered record stream. Everything the
metrics report states is recomputable from the log alone, which keeps the
report a pure function of the run.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import OrderingError
from .handover import detect_ping_pong
from .scenario import Scenario

SIGNALING_KINDS = ("sequence", "prepare", "ack", "execute", "complete")


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    data: Mapping[str, object]

    def to_json(self) -> str:
        payload = {"t": self.t, "kind": self.kind, **self.data}
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


class EventLog:
    """Time-ordered event collection with JSONL round-tripping."""

    def __init__(self, events: Iterable[Event] = ()):
        self.events: list[Event] = []
        self._last_t = float("-inf")
        for e in events:
            self.append(e)

    def append(self, event: Event) -> None:
        if event.t < self._last_t:
            raise OrderingError(f"event at t={event.t} precedes t={self._last_t}")
        self._last_t = event.t
        self.events.append(event)

    def extend(self, events: Iterable[Event]) -> None:
        for e in events:
            self.append(e)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    @classmethod
    def from_jsonl(cls, text: str) -> "EventLog":
        log = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            raw = json.loads(line)
            t = raw.pop("t")
            kind = raw.pop("kind")
            log.append(Event(t, kind, raw))
        return log


@dataclass(frozen=True)
class UeMetrics:
    atr_bps: float
    ho_count: int
    pingpong_count: int
    outage_fraction: float


@dataclass(frozen=True)
class MetricsReport:
    strategy: str
    ue_count: int
    atr_bps: float
    ho_count: int
    ho_per_ue: float
    pingpong_count: int
    signaling_messages: int
    outage_fraction: float
    per_ue: tuple[tuple[str, UeMetrics], ...] = field(default=())

    def to_json(self) -> str:
        per_ue = {
            ue: {
                "atr_bps": m.atr_bps,
                "ho_count": m.ho_count,
                "outage_fraction": m.outage_fraction,
                "pingpong_count": m.pingpong_count,
            }
            for ue, m in self.per_ue
        }
        doc = {
            "aggregate": {
                "atr_bps": self.atr_bps,
                "ho_count": self.ho_count,
                "ho_per_ue": self.ho_per_ue,
                "outage_fraction": self.outage_fraction,
                "pingpong_count": self.pingpong_count,
                "signaling_messages": self.signaling_messages,
                "strategy": self.strategy,
                "ue_count": self.ue_count,
            },
            "per_ue": per_ue,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def compute_metrics(log: EventLog, scenario: Scenario, strategy: str = "") -> MetricsReport:
    """Aggregate a run's event log into the metrics report.

    ATR divides each UE's summed rate samples by the scenario's step count,
    so steps without a sample (never emitted by the engine, but possible in
    hand-built logs) count as outage. Handover counts come from ``execute``
    events, ping-pongs from :func:`detect_ping_pong` per link.
    """
    last_t = float("-inf")
    rate_sum: dict[str, float] = {}
    zero_count: dict[str, int] = {}
    ho_by_link: dict[tuple[str, int], list[tuple[float, str, str]]] = {}
    signaling = 0

    for e in log:
        if e.t < last_t:
            raise OrderingError(f"event log not time-ordered at t={e.t}")
        last_t = e.t
        if e.kind == "rate":
            ue = str(e.data["ue_id"])
            rate = float(e.data["rate_bps"])
            rate_sum[ue] = rate_sum.get(ue, 0.0) + rate
            if rate == 0.0:
                zero_count[ue] = zero_count.get(ue, 0) + 1
        elif e.kind in SIGNALING_KINDS:
            signaling += 1
            if e.kind == "execute":
                key = (str(e.data["ue_id"]), int(e.data.get("link", 0)))
                ho_by_link.setdefault(key, []).append(
                    (e.t, str(e.data["from_sat"]), str(e.data["to_sat"]))
                )

    steps = scenario.step_count
    window = scenario.handover.pingpong_window_s
    ho_per_ue_id: dict[str, int] = {}
    pp_per_ue_id: dict[str, int] = {}
    for (ue, _), ho_log in ho_by_link.items():
        ho_per_ue_id[ue] = ho_per_ue_id.get(ue, 0) + len(ho_log)
        pp_per_ue_id[ue] = pp_per_ue_id.get(ue, 0) + detect_ping_pong(ho_log, window)

    per_ue = []
    for ue in sorted(rate_sum):
        per_ue.append(
            (
                ue,
                UeMetrics(
                    atr_bps=rate_sum[ue] / steps if steps else 0.0,
                    ho_count=ho_per_ue_id.get(ue, 0),
                    pingpong_count=pp_per_ue_id.get(ue, 0),
                    outage_fraction=zero_count.get(ue, 0) / steps if steps else 0.0,
                ),
            )
        )

    total_ho = sum(len(v) for v in ho_by_link.values())
    n_ue = scenario.ue_count
    return MetricsReport(
        strategy=strategy,
        ue_count=n_ue,
        atr_bps=sum(m.atr_bps for _, m in per_ue) / len(per_ue) if per_ue else 0.0,
        ho_count=total_ho,
        ho_per_ue=total_ho / n_ue if n_ue else 0.0,
        pingpong_count=sum(pp_per_ue_id.values()),
        signaling_messages=signaling,
        outage_fraction=(
            sum(m.outage_fraction for _, m in per_ue) / len(per_ue) if per_ue else 0.0
        ),
        per_ue=tuple(per_ue),
    )
