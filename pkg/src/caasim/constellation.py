"""Constellation geometry: Walker shells, circular two-body propagation, coverage.

Positions are Earth-centered Earth-fixed (ECEF) kilometres on a spherical
Earth. Orbits are circular, so propagation reduces to advancing the argument
of latitude at the constant mean motion and rotating the inertial position by
the accumulated Earth rotation.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidShellError

MU_EARTH_KM3_S2 = 398600.4418
R_EARTH_KM = 6378.137
EARTH_ROTATION_RAD_S = 7.2921159e-5

# Inclination at or above which a shell defaults to a star phasing pattern
# (plane RAANs spread over 180 degrees instead of 360).
STAR_PATTERN_MIN_INCLINATION_DEG = 80.0


@dataclass(frozen=True)
class OrbitalShell:
    """A Walker shell: evenly phased circular orbits at one altitude/inclination."""

    satellite_count: int
    plane_count: int
    inclination_deg: float
    altitude_km: float
    phasing_factor: int = 1
    shell_id: str = "shell"
    pattern: str | None = None  # "delta" | "star" | None (auto by inclination)

    def __post_init__(self):
        if self.satellite_count <= 0 or self.plane_count <= 0:
            raise InvalidShellError("satellite_count and plane_count must be positive")
        if self.satellite_count % self.plane_count != 0:
            raise InvalidShellError(
                f"satellite_count {self.satellite_count} not divisible by "
                f"plane_count {self.plane_count}"
            )
        if not 0.0 <= self.inclination_deg <= 180.0:
            raise InvalidShellError(f"inclination {self.inclination_deg} outside [0, 180]")
        if self.altitude_km <= 0:
            raise InvalidShellError("altitude must be positive")
        if not 0 <= self.phasing_factor < self.plane_count:
            raise InvalidShellError("phasing_factor must be in [0, plane_count)")
        if self.pattern not in (None, "delta", "star"):
            raise InvalidShellError(f"unknown pattern {self.pattern!r}")

    @property
    def satellites_per_plane(self) -> int:
        return self.satellite_count // self.plane_count

    @property
    def semi_major_axis_km(self) -> float:
        return R_EARTH_KM + self.altitude_km

    @property
    def period_s(self) -> float:
        a = self.semi_major_axis_km
        return 2.0 * math.pi * math.sqrt(a**3 / MU_EARTH_KM3_S2)

    @property
    def raan_spread_deg(self) -> float:
        pattern = self.pattern
        if pattern is None:
            pattern = "star" if self.inclination_deg >= STAR_PATTERN_MIN_INCLINATION_DEG else "delta"
        return 180.0 if pattern == "star" else 360.0


@dataclass(frozen=True)
class SatelliteOrbit:
    """One satellite's circular orbit elements at epoch."""

    satellite_id: str
    shell_id: str
    plane_index: int
    slot_index: int
    raan_deg: float
    initial_anomaly_deg: float
    inclination_deg: float
    semi_major_axis_km: float
    epoch_s: float = 0.0

    @property
    def mean_motion_rad_s(self) -> float:
        return math.sqrt(MU_EARTH_KM3_S2 / self.semi_major_axis_km**3)

    @property
    def period_s(self) -> float:
        return 2.0 * math.pi / self.mean_motion_rad_s


@dataclass(frozen=True)
class SatelliteState:
    """Instantaneous kinematic state in ECEF axes.

    ``velocity_km_s`` is the inertial velocity expressed in the rotating
    frame's axes, so its norm equals the circular orbital speed sqrt(mu/a).
    """

    satellite_id: str
    time_s: float
    position_km: np.ndarray = field(compare=False)
    velocity_km_s: np.ndarray = field(compare=False)


@dataclass(frozen=True)
class GroundPoint:
    latitude_deg: float
    longitude_deg: float
    altitude_km: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise ValueError(f"latitude {self.latitude_deg} outside [-90, 90]")
        if not -180.0 <= self.longitude_deg <= 180.0:
            raise ValueError(f"longitude {self.longitude_deg} outside [-180, 180]")


@dataclass(frozen=True)
class CoverageWindow:
    """Contiguous interval during which one satellite stays above the mask."""

    satellite_id: str
    ground_point_id: str
    start_s: float
    end_s: float
    peak_elevation_deg: float

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    def contains(self, t: float, tol: float = 0.0) -> bool:
        return self.start_s - tol <= t <= self.end_s + tol


@dataclass(frozen=True)
class SnapshotEntry:
    satellite_id: str
    ground_point_id: str
    elevation_deg: float
    slant_range_km: float


@dataclass(frozen=True)
class CoverageSnapshot:
    """All (satellite, ground point) pairs above the mask at one instant.

    ``sat_positions_km`` keeps the ECEF position of every satellite appearing
    in ``entries`` so downstream geometry (beam angles, interference) does not
    need to re-propagate.
    """

    time_s: float
    entries: tuple[SnapshotEntry, ...]
    sat_positions_km: Mapping[str, np.ndarray] = field(default_factory=dict, compare=False)


def ground_ecef_km(gp: GroundPoint) -> np.ndarray:
    """ECEF position of a ground point on the spherical Earth."""
    r = R_EARTH_KM + gp.altitude_km
    lat = math.radians(gp.latitude_deg)
    lon = math.radians(gp.longitude_deg)
    return np.array(
        [r * math.cos(lat) * math.cos(lon), r * math.cos(lat) * math.sin(lon), r * math.sin(lat)]
    )


def build_walker_shell(spec: OrbitalShell) -> list[SatelliteOrbit]:
    """Lay out a shell's satellites over its planes.

    RAAN step is ``raan_spread / plane_count`` (360 degrees for delta
    patterns, 180 for near-polar star patterns); satellites within a plane
    are evenly spaced in anomaly, and consecutive planes are offset by
    ``phasing_factor * 360 / satellite_count`` degrees.
    """
    per_plane = spec.satellites_per_plane
    raan_step = spec.raan_spread_deg / spec.plane_count
    anomaly_step = 360.0 / per_plane
    phase_step = spec.phasing_factor * 360.0 / spec.satellite_count
    a = spec.semi_major_axis_km

    orbits = []
    for p in range(spec.plane_count):
        raan = (p * raan_step) % 360.0
        for s in range(per_plane):
            anomaly = (s * anomaly_step + p * phase_step) % 360.0
            orbits.append(
                SatelliteOrbit(
                    satellite_id=f"{spec.shell_id}-p{p:02d}-s{s:02d}",
                    shell_id=spec.shell_id,
                    plane_index=p,
                    slot_index=s,
                    raan_deg=raan,
                    initial_anomaly_deg=anomaly,
                    inclination_deg=spec.inclination_deg,
                    semi_major_axis_km=a,
                )
            )
    return orbits


def _orbit_position_velocity(
    a: float, inc_rad: float, raan_rad: float, arg_lat_rad: float, gmst_rad: float
) -> tuple[np.ndarray, np.ndarray]:
    """Position/velocity of a circular orbit, rotated into ECEF axes."""
    n = math.sqrt(MU_EARTH_KM3_S2 / a**3)
    cu, su = math.cos(arg_lat_rad), math.sin(arg_lat_rad)
    co, so = math.cos(raan_rad), math.sin(raan_rad)
    ci, si = math.cos(inc_rad), math.sin(inc_rad)

    x = a * (co * cu - so * ci * su)
    y = a * (so * cu + co * ci * su)
    z = a * (si * su)
    v = a * n
    vx = v * (-co * su - so * ci * cu)
    vy = v * (-so * su + co * ci * cu)
    vz = v * (si * cu)

    cg, sg = math.cos(gmst_rad), math.sin(gmst_rad)
    pos = np.array([cg * x + sg * y, -sg * x + cg * y, z])
    vel = np.array([cg * vx + sg * vy, -sg * vx + cg * vy, vz])
    return pos, vel


def propagate(orbit: SatelliteOrbit, t: float) -> SatelliteState:
    """Propagate a circular orbit to time ``t`` (seconds past epoch zero)."""
    arg_lat = math.radians(orbit.initial_anomaly_deg) + orbit.mean_motion_rad_s * (
        t - orbit.epoch_s
    )
    pos, vel = _orbit_position_velocity(
        orbit.semi_major_axis_km,
        math.radians(orbit.inclination_deg),
        math.radians(orbit.raan_deg),
        arg_lat,
        EARTH_ROTATION_RAD_S * t,
    )
    return SatelliteState(orbit.satellite_id, t, pos, vel)


def elevation(state: SatelliteState, gp: GroundPoint) -> float:
    """Elevation (degrees) of the satellite above the ground point's horizon."""
    up = ground_ecef_km(gp)
    los = state.position_km - up
    slant = np.linalg.norm(los)
    return math.degrees(math.asin(float(np.dot(los, up)) / (slant * float(np.linalg.norm(up)))))


def slant_range_km(state: SatelliteState, gp: GroundPoint) -> float:
    return float(np.linalg.norm(state.position_km - ground_ecef_km(gp)))


def _elevation_at(orbit: SatelliteOrbit, gp_ecef: np.ndarray, gp_norm: float, t: float) -> float:
    arg_lat = math.radians(orbit.initial_anomaly_deg) + orbit.mean_motion_rad_s * (
        t - orbit.epoch_s
    )
    pos, _ = _orbit_position_velocity(
        orbit.semi_major_axis_km,
        math.radians(orbit.inclination_deg),
        math.radians(orbit.raan_deg),
        arg_lat,
        EARTH_ROTATION_RAD_S * t,
    )
    los = pos - gp_ecef
    return math.degrees(math.asin(float(np.dot(los, gp_ecef)) / (float(np.linalg.norm(los)) * gp_norm)))


def coverage_windows(
    orbit: SatelliteOrbit,
    gp: GroundPoint,
    t0: float,
    t1: float,
    mask_deg: float,
    coarse_step_s: float = 1.0,
    endpoint_tol_s: float = 1e-3,
    ground_point_id: str | None = None,
) -> list[CoverageWindow]:
    """Find all intervals in [t0, t1] with elevation >= mask.

    A coarse scan locates mask crossings, which are then refined by bisection
    to ``endpoint_tol_s``. Windows are clipped to the horizon and sorted by
    start time.
    """
    if t0 >= t1:
        raise ValueError("horizon must satisfy t0 < t1")
    if not 0.0 <= mask_deg < 90.0:
        raise ValueError("mask must be in [0, 90)")

    gp_ecef = ground_ecef_km(gp)
    gp_norm = float(np.linalg.norm(gp_ecef))
    gp_id = ground_point_id if ground_point_id is not None else _ground_point_id(gp)

    n_steps = int(math.ceil((t1 - t0) / coarse_step_s))
    times = [t0 + k * coarse_step_s for k in range(n_steps)] + [t1]
    margins = [_elevation_at(orbit, gp_ecef, gp_norm, t) - mask_deg for t in times]

    def bisect(lo: float, hi: float) -> float:
        # Crossing of (elevation - mask) inside [lo, hi]; sign change is known.
        f_lo = _elevation_at(orbit, gp_ecef, gp_norm, lo) - mask_deg
        while hi - lo > endpoint_tol_s:
            mid = 0.5 * (lo + hi)
            f_mid = _elevation_at(orbit, gp_ecef, gp_norm, mid) - mask_deg
            if (f_lo >= 0) == (f_mid >= 0):
                lo, f_lo = mid, f_mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    windows: list[CoverageWindow] = []
    open_start: float | None = t0 if margins[0] >= 0 else None
    peak = margins[0] + mask_deg if margins[0] >= 0 else -90.0

    for k in range(1, len(times)):
        above_now = margins[k] >= 0
        if above_now and open_start is not None:
            peak = max(peak, margins[k] + mask_deg)
        if above_now and open_start is None:
            open_start = bisect(times[k - 1], times[k])
            peak = margins[k] + mask_deg
        elif not above_now and open_start is not None:
            end = bisect(times[k - 1], times[k])
            windows.append(CoverageWindow(orbit.satellite_id, gp_id, open_start, end, peak))
            open_start = None
    if open_start is not None:
        windows.append(CoverageWindow(orbit.satellite_id, gp_id, open_start, t1, peak))
    return windows


def _ground_point_id(gp: GroundPoint) -> str:
    return f"gp({gp.latitude_deg:.6f},{gp.longitude_deg:.6f})"


def snapshot(
    shells: Sequence[OrbitalShell],
    ground_points: Mapping[str, GroundPoint],
    t: float,
    mask_deg: float,
) -> CoverageSnapshot:
    """Instantaneous coverage of every ground point by every shell satellite."""
    eph = ConstellationEphemeris.from_shells(shells)
    return eph.snapshot(ground_points, t, mask_deg)


class ConstellationEphemeris:
    """Vectorised propagation over all satellites of one or more shells.

    Produces positions identical to :func:`propagate` (same formulas applied
    per element); per-satellite scalar access is provided for refinement
    loops such as window-endpoint bisection.
    """

    def __init__(self, orbits: Sequence[SatelliteOrbit]):
        self.orbits = list(orbits)
        self.satellite_ids = [o.satellite_id for o in self.orbits]
        self.index_of = {sid: i for i, sid in enumerate(self.satellite_ids)}
        self._a = np.array([o.semi_major_axis_km for o in self.orbits])
        self._n = np.array([o.mean_motion_rad_s for o in self.orbits])
        self._anom0 = np.radians([o.initial_anomaly_deg for o in self.orbits])
        self._epoch = np.array([o.epoch_s for o in self.orbits])
        inc = np.radians([o.inclination_deg for o in self.orbits])
        raan = np.radians([o.raan_deg for o in self.orbits])
        self._ci, self._si = np.cos(inc), np.sin(inc)
        self._co, self._so = np.cos(raan), np.sin(raan)

    @classmethod
    def from_shells(cls, shells: Sequence[OrbitalShell]) -> "ConstellationEphemeris":
        orbits: list[SatelliteOrbit] = []
        for shell in shells:
            orbits.extend(build_walker_shell(shell))
        return cls(orbits)

    def __len__(self) -> int:
        return len(self.orbits)

    def positions_at(self, t: float) -> np.ndarray:
        """ECEF positions [N, 3] of all satellites at time ``t``."""
        u = self._anom0 + self._n * (t - self._epoch)
        cu, su = np.cos(u), np.sin(u)
        x = self._a * (self._co * cu - self._so * self._ci * su)
        y = self._a * (self._so * cu + self._co * self._ci * su)
        z = self._a * (self._si * su)
        g = EARTH_ROTATION_RAD_S * t
        cg, sg = math.cos(g), math.sin(g)
        return np.stack([cg * x + sg * y, -sg * x + cg * y, z], axis=1)

    def elevations_at(self, t: float, gp_ecef: np.ndarray) -> np.ndarray:
        """Elevation matrix [N, U] for ground ECEF positions ``gp_ecef`` [U, 3]."""
        pos = self.positions_at(t)
        los = pos[:, None, :] - gp_ecef[None, :, :]
        slant = np.linalg.norm(los, axis=2)
        gp_norm = np.linalg.norm(gp_ecef, axis=1)
        sin_el = np.einsum("nuk,uk->nu", los, gp_ecef) / (slant * gp_norm[None, :])
        return np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))

    def slants_at(self, t: float, gp_ecef: np.ndarray) -> np.ndarray:
        pos = self.positions_at(t)
        return np.linalg.norm(pos[:, None, :] - gp_ecef[None, :, :], axis=2)

    def snapshot(
        self, ground_points: Mapping[str, GroundPoint], t: float, mask_deg: float
    ) -> CoverageSnapshot:
        gp_ids = list(ground_points)
        if not gp_ids:
            return CoverageSnapshot(t, ())
        gp_ecef = np.stack([ground_ecef_km(ground_points[g]) for g in gp_ids])
        pos = self.positions_at(t)
        los = pos[:, None, :] - gp_ecef[None, :, :]
        slant = np.linalg.norm(los, axis=2)
        gp_norm = np.linalg.norm(gp_ecef, axis=1)
        sin_el = np.einsum("nuk,uk->nu", los, gp_ecef) / (slant * gp_norm[None, :])
        elev = np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))

        entries = []
        positions: dict[str, np.ndarray] = {}
        for n_idx, u_idx in np.argwhere(elev >= mask_deg):
            sid = self.satellite_ids[n_idx]
            entries.append(
                SnapshotEntry(sid, gp_ids[u_idx], float(elev[n_idx, u_idx]), float(slant[n_idx, u_idx]))
            )
            positions.setdefault(sid, pos[n_idx])
        return CoverageSnapshot(t, tuple(entries), positions)


def export_windows_csv(windows: Iterable[CoverageWindow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["satellite_id", "ue_id", "start_s", "end_s", "peak_elevation_deg"])
        for w in windows:
            writer.writerow([w.satellite_id, w.ground_point_id, w.start_s, w.end_s, w.peak_elevation_deg])
