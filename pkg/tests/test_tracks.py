import numpy as np
import pytest

from mtquad.tracks import (
    Gate,
    Track,
    default_track,
    gate_pass_check,
    load_track,
    save_track,
    segment_point_distances,
    track_from_dict,
)


@pytest.fixture
def gate_x():
    """Gate at the origin facing +x, default 1.5 m aperture."""
    return Gate(center=np.zeros(3), normal=np.array([1.0, 0, 0]), up=np.array([0.0, 0, 1.0]))


class TestGate:
    def test_corner_order_viewed_along_normal(self, gate_x):
        # looking along +x with up +z, the viewer's right (side) points to -y
        corners = gate_x.corners()
        np.testing.assert_allclose(corners[0], [0, 0.75, 0.75])   # top-left
        np.testing.assert_allclose(corners[1], [0, -0.75, 0.75])  # top-right
        np.testing.assert_allclose(corners[2], [0, -0.75, -0.75])  # bottom-right
        np.testing.assert_allclose(corners[3], [0, 0.75, -0.75])  # bottom-left

    def test_corners_mean_is_center(self, gate_x):
        np.testing.assert_allclose(gate_x.corners().mean(axis=0), gate_x.center, atol=1e-12)

    def test_from_yaw(self):
        g = Gate.from_yaw([1.0, 2.0, 3.0], 90.0, size=2.0)
        np.testing.assert_allclose(g.normal, [0, 1, 0], atol=1e-12)
        assert g.half_width == 1.0

    def test_non_perpendicular_rejected(self):
        with pytest.raises(ValueError):
            Gate(center=np.zeros(3), normal=np.array([1.0, 0, 0]), up=np.array([1.0, 0, 1.0]))


class TestGatePassCheck:
    def test_pass_through_with_offset(self, gate_x):
        # plane-segment intersection: crossing at (0, 0.1, 0), 0.1 m off center
        passed, err = gate_pass_check([-0.1, 0, 0], [0.1, 0.2, 0], gate_x)
        assert passed
        assert err == pytest.approx(0.1, abs=1e-9)

    def test_wrong_direction(self, gate_x):
        passed, _ = gate_pass_check([0.1, 0.2, 0], [-0.1, 0, 0], gate_x)
        assert not passed

    def test_outside_aperture(self, gate_x):
        passed, _ = gate_pass_check([-0.1, 0, 1.0], [0.1, 0, 1.0], gate_x)
        assert not passed

    def test_margin_expands_aperture(self, gate_x):
        passed, _ = gate_pass_check([-0.1, 0, 0.8], [0.1, 0, 0.8], gate_x, margin=0.1)
        assert passed

    def test_no_crossing(self, gate_x):
        passed, _ = gate_pass_check([-0.3, 0, 0], [-0.1, 0, 0], gate_x)
        assert not passed

    def test_subdivision_no_double_count(self, gate_x):
        p0 = np.array([-0.3, 0.1, 0.0])
        p1 = np.array([0.5, -0.1, 0.1])
        whole, err_whole = gate_pass_check(p0, p1, gate_x)
        assert whole
        rng = np.random.default_rng(0)
        for _ in range(20):
            cuts = np.sort(rng.uniform(0, 1, 3))
            points = [p0] + [p0 + c * (p1 - p0) for c in cuts] + [p1]
            passes = [
                gate_pass_check(points[i], points[i + 1], gate_x) for i in range(len(points) - 1)
            ]
            assert sum(p for p, _ in passes) == 1
            errs = [e for p, e in passes if p]
            assert errs[0] == pytest.approx(err_whole, abs=1e-12)

    def test_endpoint_exactly_on_plane(self, gate_x):
        # sub-segment ending on the plane counts; the follow-up does not
        a, _ = gate_pass_check([-0.1, 0, 0], [0.0, 0, 0], gate_x)
        b, _ = gate_pass_check([0.0, 0, 0], [0.1, 0, 0], gate_x)
        assert a and not b

    def test_oracle_intersection_point(self, gate_x):
        # independent plane-line intersection oracle
        p0 = np.array([-0.4, 0.3, -0.2])
        p1 = np.array([0.2, -0.3, 0.4])
        t = -p0[0] / (p1[0] - p0[0])
        expected = p0 + t * (p1 - p0)
        passed, err = gate_pass_check(p0, p1, gate_x)
        assert passed
        assert err == pytest.approx(np.linalg.norm(expected), abs=1e-12)


class TestTrack:
    def test_default_track_six_gates(self):
        track = default_track()
        assert len(track) == 6
        assert track.name == "figure8"
        for g in track.gates:
            assert g.half_width == pytest.approx(0.75)

    def test_gate_wraps(self):
        track = default_track()
        assert track.gate(6) is track.gates[0]

    def test_requires_gates(self):
        with pytest.raises(ValueError):
            Track(gates=[])

    def test_file_round_trip(self, tmp_path):
        track = default_track()
        path = tmp_path / "t.yaml"
        save_track(track, path)
        loaded = load_track(path)
        assert len(loaded) == len(track)
        for a, b in zip(track.gates, loaded.gates):
            np.testing.assert_allclose(a.center, b.center, atol=1e-12)
            np.testing.assert_allclose(a.normal, b.normal, atol=1e-12)

    def test_bad_schema_rejected(self):
        with pytest.raises(ValueError):
            track_from_dict({"schema": 99, "gates": []})

    def test_all_edges_shape(self):
        starts, ends = default_track().all_edges()
        assert starts.shape == (24, 3)
        assert ends.shape == (24, 3)


class TestSegmentDistances:
    def test_point_on_segment(self):
        d = segment_point_distances(
            np.array([[0.5, 0, 0]]), np.array([[0.0, 0, 0]]), np.array([[1.0, 0, 0]])
        )
        assert d[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_perpendicular_and_endpoint(self):
        starts = np.array([[0.0, 0, 0]])
        ends = np.array([[1.0, 0, 0]])
        d = segment_point_distances(np.array([[0.5, 2.0, 0], [3.0, 0, 0]]), starts, ends)
        assert d[0, 0] == pytest.approx(2.0)
        assert d[1, 0] == pytest.approx(2.0)
