import numpy as np
import pytest

from caasim.channel import CsiSample, csi_sample
from caasim.constellation import (
    R_EARTH_KM,
    GroundPoint,
    SatelliteOrbit,
    propagate,
    snapshot,
    OrbitalShell,
)
from caasim.errors import CoverageViolationError, InsufficientDataError, OrderingError
from caasim.prediction import (
    CsiHistory,
    attention_weights,
    interference_matrix,
    predict_csi_attention,
    predict_csi_ephemeris,
    push_sample,
)


def sample(t, gain=-120.0, pl=150.0, dop=0.0):
    return CsiSample(t, "sat", "ue", gain, pl, dop)


class TestHistory:
    def test_push_appends(self):
        h = push_sample(CsiHistory("sat", "ue"), sample(0.0))
        assert len(h.samples) == 1

    def test_capacity_evicts_oldest(self):
        h = CsiHistory("sat", "ue", capacity=16)
        for t in range(17):
            h = push_sample(h, sample(float(t)))
        assert len(h.samples) == 16
        assert h.samples[0].time_s == 1.0

    def test_non_increasing_time_rejected(self):
        h = push_sample(CsiHistory("sat", "ue"), sample(5.0))
        with pytest.raises(OrderingError):
            push_sample(h, sample(5.0))


class TestAttentionPredictor:
    def test_weights_sum_to_one(self):
        w = attention_weights([0.0, 1.0, 2.5, 7.0], 9.0, 2.0)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert (w >= 0).all()

    def test_constant_history_predicts_constant(self):
        h = CsiHistory("sat", "ue")
        for t in range(8):
            h = push_sample(h, sample(float(t), gain=-100.0, pl=140.0, dop=5.0))
        p = predict_csi_attention(h, 12.0)
        assert p.channel_gain_db == pytest.approx(-100.0, abs=1e-9)
        assert p.path_loss_db == pytest.approx(140.0, abs=1e-9)
        assert p.doppler_shift_hz == pytest.approx(5.0, abs=1e-9)

    def test_cold_temperature_extrapolates_latest_slope(self):
        h = push_sample(CsiHistory("sat", "ue"), sample(0.0, pl=150.0))
        h = push_sample(h, sample(1.0, pl=152.0))
        p = predict_csi_attention(h, 2.0, temperature_s=1e-9)
        assert p.path_loss_db == pytest.approx(154.0, abs=1e-6)

    def test_time_shift_equivariance(self):
        h1 = CsiHistory("sat", "ue")
        h2 = CsiHistory("sat", "ue")
        values = [(-120.0, 150.0, 10.0), (-121.0, 151.0, 8.0), (-119.5, 150.5, 6.0)]
        for i, (g, pl, d) in enumerate(values):
            h1 = push_sample(h1, sample(float(i), g, pl, d))
            h2 = push_sample(h2, sample(float(i) + 1000.0, g, pl, d))
        p1 = predict_csi_attention(h1, 5.0)
        p2 = predict_csi_attention(h2, 1005.0)
        assert p1.channel_gain_db == pytest.approx(p2.channel_gain_db, abs=1e-9)
        assert p1.path_loss_db == pytest.approx(p2.path_loss_db, abs=1e-9)

    def test_empty_history_rejected(self):
        with pytest.raises(InsufficientDataError):
            predict_csi_attention(CsiHistory("sat", "ue"), 1.0)

    def test_future_must_be_beyond_last(self):
        h = push_sample(CsiHistory("sat", "ue"), sample(3.0))
        with pytest.raises(OrderingError):
            predict_csi_attention(h, 3.0)

    def test_beats_persistence_on_geometry_trace(self, link_params):
        # a real pass sampled at 1 s; 5 s lookahead must beat repeat-last
        orbit = SatelliteOrbit("sat", "sh", 0, 0, 10.0, -12.0, 53.0, R_EARTH_KM + 550.0)
        gp = GroundPoint(3.0, 10.0)
        trace = [
            csi_sample(propagate(orbit, float(t)), gp, gp, link_params, ue_id="ue")
            for t in range(0, 120)
        ]
        attention_err, persistence_err = [], []
        h = CsiHistory("sat", "ue", capacity=16)
        for i, s in enumerate(trace):
            if i >= 16 and i + 5 < len(trace):
                truth = trace[i + 5].path_loss_db
                pred = predict_csi_attention(h, s.time_s + 5.0)
                attention_err.append(abs(pred.path_loss_db - truth))
                persistence_err.append(abs(h.samples[-1].path_loss_db - truth))
            h = push_sample(h, s)
        assert np.mean(attention_err) <= np.mean(persistence_err)


class TestEphemerisPredictor:
    def test_equals_direct_csi_sample(self, link_params):
        orbit = SatelliteOrbit("sat", "sh", 0, 0, 0.0, 0.0, 0.0, R_EARTH_KM + 550.0)
        gp = GroundPoint(0.0, 2.0)
        t_future = 111.0
        pred = predict_csi_ephemeris(orbit, gp, gp, link_params, t_future, ue_id="ue")
        direct = csi_sample(propagate(orbit, t_future), gp, gp, link_params, ue_id="ue")
        assert pred == direct

    def test_not_visible_raises(self, link_params):
        from caasim.errors import NotVisibleError

        orbit = SatelliteOrbit("sat", "sh", 0, 0, 0.0, 0.0, 0.0, R_EARTH_KM + 550.0)
        gp = GroundPoint(0.0, 180.0)
        with pytest.raises(NotVisibleError):
            predict_csi_ephemeris(orbit, gp, gp, link_params, 0.0)


class TestInterferenceMatrix:
    def _snapshot_and_positions(self, shells, gps, t=0.0):
        return snapshot(shells, gps, t, 10.0)

    def test_single_pair_matches_link_gain(self, link_params):
        shell = OrbitalShell(1, 1, 0.0, 550.0, phasing_factor=0, shell_id="solo")
        gps = {"u0": GroundPoint(0.0, 0.0)}
        snap = self._snapshot_and_positions([shell], gps)
        sat_id = snap.entries[0].satellite_id
        m = interference_matrix(snap, [("u0", sat_id)], {("u0", sat_id): gps["u0"]}, link_params, gps)
        assert m.coefficients.shape == (1, 1)
        s = csi_sample(propagate(_first_orbit(shell), 0.0), gps["u0"], gps["u0"], link_params)
        assert m.coefficients[0, 0] == pytest.approx(10 ** (s.channel_gain_db / 10.0), rel=1e-9)

    def test_three_by_three_matches_per_pair_csi(self, link_params):
        shell = OrbitalShell(40, 8, 53.0, 550.0, shell_id="m")
        gps = {
            "u0": GroundPoint(0.0, 0.0),
            "u1": GroundPoint(4.0, 6.0),
            "u2": GroundPoint(-3.0, -5.0),
        }
        snap = self._snapshot_and_positions([shell], gps, t=100.0)
        cover = {}
        for e in snap.entries:
            cover.setdefault(e.ground_point_id, []).append(e.satellite_id)
        assignments = [(u, sorted(cover[u])[0]) for u in sorted(gps)]
        boresights = {(u, s): gps[u] for u, s in assignments}
        m = interference_matrix(snap, assignments, boresights, link_params, gps)

        from caasim.channel import beam_gain, free_space_path_loss, off_boresight_angle_deg

        for b, ((sat, _), target) in enumerate(zip(m.tx_ids, m.tx_targets)):
            pos = snap.sat_positions_km[sat]
            for r, ue in enumerate(m.ue_ids):
                slant = float(np.linalg.norm(pos - _gp_ecef(gps[ue])))
                gain = (
                    beam_gain(off_boresight_angle_deg(pos, gps[target], gps[ue]), link_params)
                    + link_params.ue_antenna_gain_dbi
                    - free_space_path_loss(slant, link_params.carrier_frequency_hz)
                )
                assert m.coefficients[r, b] == pytest.approx(10 ** (gain / 10.0), rel=1e-9)

    def test_far_separated_ues_have_dominant_diagonal(self, link_params):
        shell = OrbitalShell(40, 8, 53.0, 550.0, shell_id="m")
        gps = {"u0": GroundPoint(0.0, 0.0), "u1": GroundPoint(8.0, 12.0)}
        snap = self._snapshot_and_positions([shell], gps, t=50.0)
        cover = {}
        for e in snap.entries:
            cover.setdefault(e.ground_point_id, []).append(e.satellite_id)
        assignments = [(u, sorted(cover[u])[0]) for u in sorted(gps)]
        boresights = {(u, s): gps[u] for u, s in assignments}
        m = interference_matrix(snap, assignments, boresights, link_params, gps)
        for b, target in enumerate(m.tx_targets):
            r = m.ue_ids.index(target)
            for other in range(len(m.ue_ids)):
                if other != r:
                    assert m.coefficients[other, b] < m.coefficients[r, b]

    def test_assignment_must_be_covered(self, link_params):
        shell = OrbitalShell(1, 1, 0.0, 550.0, phasing_factor=0, shell_id="solo")
        gps = {"u0": GroundPoint(0.0, 0.0)}
        snap = self._snapshot_and_positions([shell], gps)
        with pytest.raises(CoverageViolationError):
            interference_matrix(snap, [("u0", "ghost")], {("u0", "ghost"): gps["u0"]}, link_params, gps)

    def test_permutation_invariance(self, link_params):
        shell = OrbitalShell(40, 8, 53.0, 550.0, shell_id="m")
        gps = {"a": GroundPoint(0.0, 0.0), "b": GroundPoint(2.0, 3.0)}
        snap = self._snapshot_and_positions([shell], gps, t=10.0)
        cover = {}
        for e in snap.entries:
            cover.setdefault(e.ground_point_id, []).append(e.satellite_id)
        assignments = [(u, sorted(cover[u])[0]) for u in sorted(gps)]
        boresights = {(u, s): gps[u] for u, s in assignments}
        m1 = interference_matrix(snap, assignments, boresights, link_params, gps)
        m2 = interference_matrix(snap, list(reversed(assignments)), boresights, link_params, gps)
        # same canonical ordering regardless of input order
        assert m1.ue_ids == m2.ue_ids and m1.tx_ids == m2.tx_ids
        assert np.array_equal(m1.coefficients, m2.coefficients)


def _first_orbit(shell):
    from caasim.constellation import build_walker_shell

    return build_walker_shell(shell)[0]


def _gp_ecef(gp):
    from caasim.constellation import ground_ecef_km

    return ground_ecef_km(gp)
