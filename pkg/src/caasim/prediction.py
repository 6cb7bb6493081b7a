"""CSI history buffers, short-horizon CSI prediction, interference matrix.

Two predictors share one interface: the ephemeris predictor re-evaluates the
exact link geometry at the target instant, while the attention predictor
extrapolates from the stored history with recency-weighted local trends and
needs no orbital knowledge.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from . import channel
from .channel import CsiSample, LinkParams
from .constellation import (
    CoverageSnapshot,
    GroundPoint,
    SatelliteOrbit,
    ground_ecef_km,
    propagate,
)
from .errors import CoverageViolationError, InsufficientDataError, OrderingError


@dataclass(frozen=True)
class CsiHistory:
    """Bounded, time-ordered record of CSI samples for one link."""

    satellite_id: str
    ue_id: str
    capacity: int = 16
    samples: tuple[CsiSample, ...] = ()

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")

    @property
    def last_time_s(self) -> float | None:
        return self.samples[-1].time_s if self.samples else None


def push_sample(history: CsiHistory, sample: CsiSample) -> CsiHistory:
    """Append a sample, evicting the oldest when capacity is exceeded."""
    last = history.last_time_s
    if last is not None and sample.time_s <= last:
        raise OrderingError(
            f"sample at t={sample.time_s} does not advance past t={last}"
        )
    samples = history.samples + (sample,)
    if len(samples) > history.capacity:
        samples = samples[-history.capacity:]
    return replace(history, samples=samples)


def attention_weights(sample_times: Sequence[float], t_future: float, temperature_s: float) -> np.ndarray:
    """Recency weights: softmax of -|t_future - t_i| / temperature."""
    gaps = -np.abs(t_future - np.asarray(sample_times, dtype=float)) / temperature_s
    gaps -= gaps.max()  # stable softmax
    w = np.exp(gaps)
    return w / w.sum()


def predict_csi_ephemeris(
    orbit: SatelliteOrbit,
    gp: GroundPoint,
    boresight_target: GroundPoint,
    params: LinkParams,
    t_future: float,
    ue_id: str | None = None,
) -> CsiSample:
    """Exact-geometry prediction: propagate and re-evaluate the link."""
    state = propagate(orbit, t_future)
    return channel.csi_sample(state, gp, boresight_target, params, ue_id=ue_id)


def predict_csi_attention(
    history: CsiHistory, t_future: float, temperature_s: float = 2.0
) -> CsiSample:
    """Model-free prediction from the history buffer.

    Each stored sample votes with weight softmax(-|dt| / temperature) for its
    own linear extrapolation (backward-difference slope, zero for the first
    sample). Applied independently to channel gain, path loss, and Doppler.
    """
    if not history.samples:
        raise InsufficientDataError(f"empty history for {history.satellite_id}->{history.ue_id}")
    last = history.last_time_s
    if t_future <= last:
        raise OrderingError(f"t_future={t_future} not beyond last sample t={last}")

    times = np.array([s.time_s for s in history.samples])
    w = attention_weights(times, t_future, temperature_s)

    def extrapolate(values: np.ndarray) -> float:
        slopes = np.zeros_like(values)
        if len(values) > 1:
            slopes[1:] = np.diff(values) / np.diff(times)
        return float(np.dot(w, values + slopes * (t_future - times)))

    return CsiSample(
        time_s=t_future,
        satellite_id=history.satellite_id,
        ue_id=history.ue_id,
        channel_gain_db=extrapolate(np.array([s.channel_gain_db for s in history.samples])),
        path_loss_db=extrapolate(np.array([s.path_loss_db for s in history.samples])),
        doppler_shift_hz=extrapolate(np.array([s.doppler_shift_hz for s in history.samples])),
    )


@dataclass(frozen=True)
class InterferenceMatrix:
    """Linear power gains from every transmitter (beam) to every UE.

    ``coefficients[u, b]`` is the dimensionless rx/tx power ratio from
    transmitter column ``b`` to UE row ``u``; ``tx_targets[b]`` names the UE
    the beam is serving, which marks the serving entries of the matrix.
    """

    ue_ids: tuple[str, ...]
    tx_ids: tuple[tuple[str, str], ...]  # (satellite_id, beam_id)
    tx_targets: tuple[str, ...]
    coefficients: np.ndarray

    def __post_init__(self):
        if self.coefficients.shape != (len(self.ue_ids), len(self.tx_ids)):
            raise ValueError("coefficient matrix shape does not match id lists")
        if not np.all(np.isfinite(self.coefficients)) or np.any(self.coefficients < 0):
            raise ValueError("coefficients must be finite and non-negative")

    def row_of(self, ue_id: str) -> int:
        return self.ue_ids.index(ue_id)


def interference_matrix(
    snapshot: CoverageSnapshot,
    assignments: Sequence[tuple[str, str]],
    boresights: Mapping[tuple[str, str], GroundPoint],
    params: LinkParams,
    ue_positions: Mapping[str, GroundPoint],
) -> InterferenceMatrix:
    """Cross-link gain matrix for a set of (ue, serving satellite) assignments.

    One transmitter column per assignment; every satellite position is taken
    from the snapshot. Raises :class:`CoverageViolationError` when an assigned
    satellite does not cover its UE in the snapshot.
    """
    covered = {(e.satellite_id, e.ground_point_id) for e in snapshot.entries}
    for ue_id, sat_id in assignments:
        if (sat_id, ue_id) not in covered:
            raise CoverageViolationError(f"{sat_id} does not cover {ue_id} at t={snapshot.time_s}")

    ue_ids = tuple(sorted({ue for ue, _ in assignments}))
    tx: list[tuple[str, str]] = []
    targets: list[str] = []
    for ue_id, sat_id in sorted(assignments, key=lambda a: (a[1], a[0])):
        tx.append((sat_id, f"{sat_id}->{ue_id}"))
        targets.append(ue_id)

    coeff = np.zeros((len(ue_ids), len(tx)))
    for b, ((sat_id, _), target) in enumerate(zip(tx, targets)):
        sat_pos = snapshot.sat_positions_km[sat_id]
        bore = boresights[(target, sat_id)]
        for u, ue_id in enumerate(ue_ids):
            gp = ue_positions[ue_id]
            slant = float(np.linalg.norm(sat_pos - ground_ecef_km(gp)))
            gain_db = (
                channel.beam_gain(channel.off_boresight_angle_deg(sat_pos, bore, gp), params)
                + params.ue_antenna_gain_dbi
                - channel.free_space_path_loss(slant, params.carrier_frequency_hz)
                - params.excess_loss_db
            )
            coeff[u, b] = 10.0 ** (gain_db / 10.0)
    return InterferenceMatrix(ue_ids, tuple(tx), tuple(targets), coeff)
