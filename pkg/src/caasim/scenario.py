"""Experiment configuration and deterministic UE population."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .channel import LinkParams
from .constellation import (
    ConstellationEphemeris,
    GroundPoint,
    OrbitalShell,
    ground_ecef_km,
)
from .control import LatLonRect, UeRequirement


@dataclass(frozen=True)
class HandoverConfig:
    alpha: float = 0.5
    beta: float = 0.5
    # per-UE override of the capability weight by service preference;
    # None falls back to the global alpha
    alpha_latency_sensitive: float | None = 0.85
    alpha_coverage_stable: float | None = 0.65
    min_overlap_s: float = 2.0
    guard_s: float = 0.05
    execution_s: float = 0.1
    pingpong_window_s: float = 30.0

    def weights_for(self, preference: str) -> tuple[float, float]:
        alpha = self.alpha
        if preference == "latency-sensitive" and self.alpha_latency_sensitive is not None:
            alpha = self.alpha_latency_sensitive
        elif preference == "coverage-stable" and self.alpha_coverage_stable is not None:
            alpha = self.alpha_coverage_stable
        return alpha, 1.0 - alpha


@dataclass(frozen=True)
class ControlConfig:
    max_ues_per_region: int = 50
    max_region_depth: int = 6
    slice_s: float = 10.0
    sc_validity_s: float = 60.0
    capacity_per_satellite: int = 30
    altitude_preference: float = 1.5
    target_load_per_satellite: int = 4


@dataclass(frozen=True)
class StandaloneConfig:
    hysteresis_db: float = 3.0
    time_to_trigger_steps: int = 2
    # Payload model. None: the satellite pools its budget equally over the
    # beams serving scenario UEs. An integer models a conventional fixed-grid
    # payload: the budget is split equally over that many beams, scenario UEs
    # each occupy one, and the rest carry the constellation's background
    # traffic, radiating into the region at the sidelobe floor.
    grid_beams: int | None = None


@dataclass(frozen=True)
class PredictionConfig:
    history_capacity: int = 16
    temperature_s: float = 2.0
    predictor: str = "attention"  # "attention" | "ephemeris"

    def __post_init__(self):
        if self.predictor not in ("attention", "ephemeris"):
            raise ValueError(f"unknown predictor {self.predictor!r}")


@dataclass(frozen=True)
class Scenario:
    """Full description of one simulation experiment."""

    shells: tuple[OrbitalShell, ...]
    area: LatLonRect
    ue_count: int
    seed: int
    name: str = "scenario"
    duration_s: float = 600.0
    time_step_s: float = 1.0
    elevation_mask_deg: float = 10.0
    demand_mean_bps: float = 20e6
    link: LinkParams = field(default_factory=LinkParams)
    handover: HandoverConfig = field(default_factory=HandoverConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    standalone: StandaloneConfig = field(default_factory=StandaloneConfig)
    prediction: PredictionConfig = field(default_factory=PredictionConfig)

    def __post_init__(self):
        if self.duration_s < 0:
            raise ValueError("duration must be non-negative")
        if self.time_step_s <= 0:
            raise ValueError("time step must be positive")
        if self.ue_count < 0:
            raise ValueError("ue_count must be non-negative")
        if not self.shells:
            raise ValueError("at least one shell is required")

    @property
    def step_count(self) -> int:
        return int(round(self.duration_s / self.time_step_s))


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent, named, reproducible random stream."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def ue_id_of(index: int) -> str:
    return f"ue-{index:03d}"


def populate_ues(
    scenario: Scenario, ephemeris: ConstellationEphemeris | None = None
) -> list[tuple[GroundPoint, UeRequirement]]:
    """Draw the UE population for a scenario.

    Positions are uniform over the area; demand is Poisson with the
    configured mean (1 Mbps granularity). UEs above the mean demand request
    dual connectivity and prefer low-altitude satellites; the rest take
    single connectivity and prefer coverage stability. Each UE gets a random
    default shell and the strongest covering satellite of that shell at t=0
    as default access satellite.
    """
    n = scenario.ue_count
    if n == 0:
        return []
    area = scenario.area
    pos_rng = rng_stream(scenario.seed, "ue-pos")
    lats = pos_rng.uniform(area.lat_min_deg, area.lat_max_deg, n)
    lons = pos_rng.uniform(area.lon_min_deg, area.lon_max_deg, n)

    lam = scenario.demand_mean_bps / 1e6
    demands = rng_stream(scenario.seed, "ue-demand").poisson(lam, n) * 1e6

    shell_ids = [s.shell_id for s in scenario.shells]
    shell_pick = rng_stream(scenario.seed, "ue-shell").integers(0, len(shell_ids), n)

    if ephemeris is None:
        ephemeris = ConstellationEphemeris.from_shells(scenario.shells)
    shell_of_sat = np.array([o.shell_id for o in ephemeris.orbits])

    out = []
    for i in range(n):
        gp = GroundPoint(float(lats[i]), float(lons[i]))
        default_shell = shell_ids[int(shell_pick[i])]
        default_sat = _strongest_in_shell(
            ephemeris, shell_of_sat, default_shell, gp, scenario.elevation_mask_deg
        )
        high_demand = demands[i] > scenario.demand_mean_bps
        out.append(
            (
                gp,
                UeRequirement(
                    ue_id=ue_id_of(i),
                    demand_bps=float(demands[i]),
                    min_rate_bps=float(demands[i]) / 2.0,
                    connectivity="dual" if high_demand else "single",
                    preference="latency-sensitive" if high_demand else "coverage-stable",
                    default_shell_id=default_shell,
                    default_satellite_id=default_sat,
                ),
            )
        )
    return out


def _strongest_in_shell(
    ephemeris: ConstellationEphemeris,
    shell_of_sat: np.ndarray,
    shell_id: str,
    gp: GroundPoint,
    mask_deg: float,
) -> str | None:
    """Covering satellite of the shell with the shortest slant range at t=0."""
    gp_ecef = ground_ecef_km(gp)[None, :]
    elev = ephemeris.elevations_at(0.0, gp_ecef)[:, 0]
    slant = ephemeris.slants_at(0.0, gp_ecef)[:, 0]
    in_shell = shell_of_sat == shell_id
    covering = in_shell & (elev >= mask_deg)
    if not covering.any():
        return None
    slant = np.where(covering, slant, np.inf)
    return ephemeris.satellite_ids[int(np.argmin(slant))]
