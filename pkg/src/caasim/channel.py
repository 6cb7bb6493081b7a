"""Physical link model: path loss, Doppler, beam pattern, SINR, and rate."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .constellation import GroundPoint, SatelliteState, ground_ecef_km, EARTH_ROTATION_RAD_S
from .errors import NotVisibleError

SPEED_OF_LIGHT_KM_S = 299792.458
BOLTZMANN_J_K = 1.380649e-23


@dataclass(frozen=True)
class LinkParams:
    """Downlink radio parameters shared by every satellite in a scenario."""

    carrier_frequency_hz: float = 2.0e9
    bandwidth_hz: float = 30.0e6
    tx_power_dbw: float = 34.0
    sat_antenna_gain_dbi: float = 30.0
    ue_antenna_gain_dbi: float = 0.0
    noise_temperature_k: float = 290.0
    beamwidth_3db_deg: float = 4.0
    spectral_efficiency_cap: float = 7.8
    excess_loss_db: float = 0.0  # flat margin for sensitivity runs

    def __post_init__(self):
        if self.carrier_frequency_hz <= 0 or self.bandwidth_hz <= 0:
            raise ValueError("carrier frequency and bandwidth must be positive")
        if self.noise_temperature_k <= 0 or self.beamwidth_3db_deg <= 0:
            raise ValueError("noise temperature and beamwidth must be positive")

    @property
    def tx_power_w(self) -> float:
        return 10.0 ** (self.tx_power_dbw / 10.0)

    @property
    def noise_power_w(self) -> float:
        return BOLTZMANN_J_K * self.noise_temperature_k * self.bandwidth_hz

    @property
    def noise_power_dbm(self) -> float:
        return 10.0 * math.log10(self.noise_power_w * 1e3)


@dataclass(frozen=True)
class CsiSample:
    """Channel state for one link at one instant."""

    time_s: float
    satellite_id: str
    ue_id: str
    channel_gain_db: float
    path_loss_db: float
    doppler_shift_hz: float


def free_space_path_loss(distance_km: float, frequency_hz: float) -> float:
    """FSPL in dB: 32.45 + 20 log10(d_km) + 20 log10(f_MHz)."""
    if distance_km <= 0 or frequency_hz <= 0:
        raise ValueError("distance and frequency must be positive")
    return 32.45 + 20.0 * math.log10(distance_km) + 20.0 * math.log10(frequency_hz / 1e6)


def doppler_shift(state: SatelliteState, gp: GroundPoint, frequency_hz: float) -> float:
    """Doppler shift in Hz; positive while the satellite approaches.

    The stored satellite velocity is inertial; the ground point co-rotates
    with the Earth, so its inertial velocity (omega x r) is subtracted before
    projecting on the line of sight.
    """
    gp_pos = ground_ecef_km(gp)
    los = state.position_km - gp_pos
    slant = float(np.linalg.norm(los))
    omega = np.array([0.0, 0.0, EARTH_ROTATION_RAD_S])
    v_rel = state.velocity_km_s - np.cross(omega, gp_pos)
    range_rate = float(np.dot(v_rel, los)) / slant
    return -range_rate / SPEED_OF_LIGHT_KM_S * frequency_hz


def beam_gain(off_boresight_deg: float, params: LinkParams) -> float:
    """Gaussian beam rolloff with a -30 dB sidelobe floor.

    G(theta) = G_boresight - 3 (theta / (bw3db/2))^2 dB, floored 30 dB below
    boresight.
    """
    if off_boresight_deg < 0:
        raise ValueError("off-boresight angle must be non-negative")
    rolloff = 3.0 * (off_boresight_deg / (params.beamwidth_3db_deg / 2.0)) ** 2
    return params.sat_antenna_gain_dbi - min(rolloff, 30.0)


def off_boresight_angle_deg(
    sat_position_km: np.ndarray, boresight_target: GroundPoint, toward: GroundPoint
) -> float:
    """Angle at the satellite between its boresight target and another point."""
    d_bore = ground_ecef_km(boresight_target) - sat_position_km
    d_to = ground_ecef_km(toward) - sat_position_km
    cos_a = float(np.dot(d_bore, d_to)) / (
        float(np.linalg.norm(d_bore)) * float(np.linalg.norm(d_to))
    )
    return math.degrees(math.acos(min(1.0, max(-1.0, cos_a))))


def csi_sample(
    state: SatelliteState,
    gp: GroundPoint,
    boresight_target: GroundPoint,
    params: LinkParams,
    ue_id: str | None = None,
) -> CsiSample:
    """Full link sample: path loss, aggregate channel gain, Doppler.

    Raises :class:`NotVisibleError` when the satellite sits below the ground
    point's horizon.
    """
    gp_pos = ground_ecef_km(gp)
    los = state.position_km - gp_pos
    slant = float(np.linalg.norm(los))
    sin_el = float(np.dot(los, gp_pos)) / (slant * float(np.linalg.norm(gp_pos)))
    if sin_el < 0:
        raise NotVisibleError(
            f"{state.satellite_id} below horizon of {gp.latitude_deg},{gp.longitude_deg} "
            f"at t={state.time_s}"
        )
    path_loss = free_space_path_loss(slant, params.carrier_frequency_hz)
    gain = (
        beam_gain(off_boresight_angle_deg(state.position_km, boresight_target, gp), params)
        + params.ue_antenna_gain_dbi
        - path_loss
        - params.excess_loss_db
    )
    return CsiSample(
        time_s=state.time_s,
        satellite_id=state.satellite_id,
        ue_id=ue_id if ue_id is not None else _gp_label(gp),
        channel_gain_db=gain,
        path_loss_db=path_loss,
        doppler_shift_hz=doppler_shift(state, gp, params.carrier_frequency_hz),
    )


def _gp_label(gp: GroundPoint) -> str:
    return f"gp({gp.latitude_deg:.6f},{gp.longitude_deg:.6f})"


def sinr(serving_rx_dbm: float, interferer_rx_dbms: Sequence[float], params: LinkParams) -> float:
    """SINR in dB from received powers in dBm; noise is k T B."""
    serving_mw = 10.0 ** (serving_rx_dbm / 10.0)
    noise_mw = params.noise_power_w * 1e3
    interference_mw = sum(10.0 ** (p / 10.0) for p in interferer_rx_dbms)
    return 10.0 * math.log10(serving_mw / (noise_mw + interference_mw))


def achievable_rate(sinr_db: float, params: LinkParams) -> float:
    """Shannon rate in bps, capped at the configured spectral efficiency."""
    if math.isinf(sinr_db) and sinr_db < 0:
        return 0.0
    gamma = 10.0 ** (sinr_db / 10.0)
    return params.bandwidth_hz * min(math.log2(1.0 + gamma), params.spectral_efficiency_cap)


def export_csi_csv(samples: Iterable[CsiSample], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time_s", "sat_id", "ue_id", "gain_db", "path_loss_db", "doppler_hz"])
        for s in samples:
            writer.writerow(
                [s.time_s, s.satellite_id, s.ue_id, s.channel_gain_db, s.path_loss_db, s.doppler_shift_hz]
            )
