import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caasim.channel import (
    export_csi_csv,
    LinkParams,
    achievable_rate,
    beam_gain,
    csi_sample,
    doppler_shift,
    free_space_path_loss,
    sinr,
)
from caasim.constellation import (
    R_EARTH_KM,
    GroundPoint,
    OrbitalShell,
    SatelliteOrbit,
    build_walker_shell,
    elevation,
    propagate,
)
from caasim.errors import NotVisibleError


def nadir_orbit(h_km: float = 550.0) -> SatelliteOrbit:
    return SatelliteOrbit("s", "sh", 0, 0, 0.0, 0.0, 0.0, R_EARTH_KM + h_km)


class TestFspl:
    def test_550km_2ghz(self):
        assert free_space_path_loss(550.0, 2e9) == pytest.approx(153.28, abs=0.01)

    def test_1200km_2ghz(self):
        assert free_space_path_loss(1200.0, 2e9) == pytest.approx(160.05, abs=0.01)

    def test_doubling_distance_adds_6db(self):
        base = free_space_path_loss(700.0, 2e9)
        assert free_space_path_loss(1400.0, 2e9) - base == pytest.approx(20 * math.log10(2), abs=1e-9)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            free_space_path_loss(0.0, 2e9)
        with pytest.raises(ValueError):
            free_space_path_loss(550.0, -1.0)

    @settings(max_examples=50, deadline=None)
    @given(
        d1=st.floats(1.0, 5000.0),
        d2=st.floats(1.0, 5000.0),
        f=st.floats(1e8, 1e11),
    )
    def test_strictly_increasing_in_distance(self, d1, d2, f):
        if d1 == d2:
            return
        lo, hi = sorted((d1, d2))
        assert free_space_path_loss(lo, f) < free_space_path_loss(hi, f)


class TestDoppler:
    def test_zero_at_closest_approach(self):
        # overhead pass: the zenith instant has zero range rate
        orbit = nadir_orbit()
        gp = GroundPoint(0.0, 0.0)
        assert doppler_shift(propagate(orbit, 0.0), gp, 2e9) == pytest.approx(0.0, abs=1.0)

    def test_bounded_by_max_speed(self):
        orbit = nadir_orbit()
        bound = 2e9 * 7.5851 / 299792.458  # approx 50.6 kHz
        for t in np.linspace(0, 5739, 77):
            gp = GroundPoint(0.0, 30.0)
            assert abs(doppler_shift(propagate(orbit, float(t)), gp, 2e9)) <= bound

    def test_sign_flips_across_pass(self):
        orbit = nadir_orbit()
        gp = GroundPoint(0.0, 20.0)  # east of the t=0 subsatellite point
        approaching = doppler_shift(propagate(orbit, 60.0), gp, 2e9)
        receding = doppler_shift(propagate(orbit, 600.0), gp, 2e9)
        assert approaching > 0 > receding


class TestBeamGain:
    def test_boresight_is_30dbi(self, link_params):
        assert beam_gain(0.0, link_params) == pytest.approx(30.0)

    def test_3db_point(self, link_params):
        assert beam_gain(link_params.beamwidth_3db_deg / 2, link_params) == pytest.approx(27.0)

    def test_sidelobe_floor(self, link_params):
        assert beam_gain(10 * link_params.beamwidth_3db_deg, link_params) == pytest.approx(0.0)

    def test_monotone_rolloff(self, link_params):
        gains = [beam_gain(a, link_params) for a in np.linspace(0, 20, 41)]
        assert all(a >= b for a, b in zip(gains, gains[1:]))

    def test_negative_angle_rejected(self, link_params):
        with pytest.raises(ValueError):
            beam_gain(-0.1, link_params)


class TestCsiSample:
    def test_nadir_boresight_gain(self, link_params):
        gp = GroundPoint(0.0, 0.0)
        s = csi_sample(propagate(nadir_orbit(), 0.0), gp, gp, link_params, ue_id="u")
        assert s.channel_gain_db == pytest.approx(30.0 + 0.0 - 153.28, abs=0.01)
        assert s.path_loss_db == pytest.approx(153.28, abs=0.01)

    def test_off_boresight_strictly_weaker(self, link_params):
        gp = GroundPoint(0.0, 0.0)
        other = GroundPoint(3.0, 3.0)
        state = propagate(nadir_orbit(), 0.0)
        on = csi_sample(state, gp, gp, link_params, ue_id="u")
        off = csi_sample(state, gp, other, link_params, ue_id="u")
        assert off.channel_gain_db < on.channel_gain_db

    def test_deterministic(self, link_params):
        gp = GroundPoint(0.0, 0.5)
        state = propagate(nadir_orbit(), 12.0)
        assert csi_sample(state, gp, gp, link_params) == csi_sample(state, gp, gp, link_params)

    def test_below_horizon_raises(self, link_params):
        gp = GroundPoint(0.0, 180.0)
        with pytest.raises(NotVisibleError):
            csi_sample(propagate(nadir_orbit(), 0.0), gp, gp, link_params)

    def test_excess_loss_applies(self):
        gp = GroundPoint(0.0, 0.0)
        state = propagate(nadir_orbit(), 0.0)
        base = csi_sample(state, gp, gp, LinkParams())
        lossy = csi_sample(state, gp, gp, LinkParams(excess_loss_db=3.0))
        assert base.channel_gain_db - lossy.channel_gain_db == pytest.approx(3.0)

    def test_gain_bounded_by_boresight_at_min_range(self, link_params):
        # channel gain can never beat boresight gains minus FSPL at the
        # shortest possible slant (the orbit altitude)
        bound = (
            link_params.sat_antenna_gain_dbi
            + link_params.ue_antenna_gain_dbi
            - free_space_path_loss(550.0, link_params.carrier_frequency_hz)
        )
        shell_orbits = build_walker_shell(OrbitalShell(40, 8, 53.0, 550.0, shell_id="m"))
        gp = GroundPoint(2.0, 7.0)
        state = propagate(shell_orbits[11], 400.0)
        if elevation(state, gp) > 0:
            s = csi_sample(state, gp, gp, link_params)
            assert s.channel_gain_db <= bound + 1e-9


class TestSinrAndRate:
    def test_noise_floor_value(self, link_params):
        assert link_params.noise_power_dbm == pytest.approx(-99.2, abs=0.1)

    def test_link_budget_snr(self, link_params):
        serving_dbm = 34.0 + 30.0 - free_space_path_loss(550.0, 2e9) + 30.0
        assert serving_dbm == pytest.approx(-59.3, abs=0.05)
        assert sinr(serving_dbm, [], link_params) == pytest.approx(39.9, abs=0.1)

    def test_equal_interferer_without_noise(self, link_params):
        # one interferer at serving power, noise negligible -> about 0 dB
        assert sinr(-30.0, [-30.0], link_params) == pytest.approx(0.0, abs=0.01)

    def test_interferers_strictly_decrease_sinr(self, link_params):
        base = sinr(-60.0, [-90.0], link_params)
        assert sinr(-60.0, [-90.0, -95.0], link_params) < base

    def test_empty_interferers_is_snr(self, link_params):
        assert sinr(-60.0, [], link_params) > sinr(-60.0, [-120.0], link_params)

    def test_rate_zero_at_zero_sinr(self, link_params):
        assert achievable_rate(-math.inf, link_params) == 0.0

    def test_rate_capped(self, link_params):
        assert achievable_rate(39.9, link_params) == pytest.approx(234e6)

    def test_unit_spectral_efficiency(self, link_params):
        assert achievable_rate(0.0, link_params) == pytest.approx(30e6)

    @settings(max_examples=50, deadline=None)
    @given(s1=st.floats(-30, 60), s2=st.floats(-30, 60))
    def test_rate_monotone_and_bounded(self, s1, s2):
        params = LinkParams()
        lo, hi = sorted((s1, s2))
        assert achievable_rate(lo, params) <= achievable_rate(hi, params)
        assert achievable_rate(hi, params) <= params.bandwidth_hz * params.spectral_efficiency_cap


class TestCsvExport:
    def test_csi_trace_columns(self, tmp_path, link_params):
        gp = GroundPoint(0.0, 0.0)
        samples = [
            csi_sample(propagate(nadir_orbit(), float(t)), gp, gp, link_params, ue_id="u0")
            for t in range(3)
        ]
        out = tmp_path / "csi.csv"
        export_csi_csv(samples, out)
        lines = out.read_text().splitlines()
        assert lines[0] == "time_s,sat_id,ue_id,gain_db,path_loss_db,doppler_hz"
        assert len(lines) == 4
