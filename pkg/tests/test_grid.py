"""Occupancy grids: serialization, inside tests, ray casting, expected views,
and the likelihood-field scan model."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapmerge import fixtures
from mapmerge.grid import (FREE, OCCUPIED, UNKNOWN, MapParseError, OccupancyGrid,
                           Pose, default_bearings, dump_map, expected_view,
                           inside_mask, is_inside, load_map, raycast,
                           raycast_full, scan_likelihood, scan_log_likelihoods,
                           ScanLikelihoodParams, wrap_angle)
from mapmerge.views import ExtractionParams, RangeScan, alphabet_build

MAX_RANGE = 8.0


def box_world(size_m: float = 6.0, res: float = 0.05) -> OccupancyGrid:
    """Square room with one-cell walls."""
    n = int(round(size_m / res))
    cells = np.full((n, n), FREE, dtype=np.int8)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = OCCUPIED
    return OccupancyGrid(cells, res)


class TestWrapAngle:
    def test_identity_inside_range(self):
        assert wrap_angle(0.3) == pytest.approx(0.3)

    def test_wraps_large_angles(self):
        assert wrap_angle(2 * math.pi + 0.1) == pytest.approx(0.1)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)

    def test_vectorized(self):
        out = wrap_angle(np.array([0.0, 3 * math.pi]))
        np.testing.assert_allclose(out, [0.0, math.pi])


class TestPose:
    def test_normalizes_theta(self):
        assert Pose(0, 0, 3 * math.pi).theta == pytest.approx(math.pi)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Pose(float("nan"), 0.0, 0.0)


class TestMapIO:
    def test_all_free_map(self):
        g = load_map("resolution 0.1\norigin 0 0\n...\n...\n...\n")
        assert g.shape == (3, 3)
        assert np.all(g.cells == FREE)

    def test_unknown_character_names_line(self):
        with pytest.raises(MapParseError, match="line 4"):
            load_map("resolution 0.1\norigin 0 0\n...\n.x.\n")

    def test_ragged_row_names_line(self):
        with pytest.raises(MapParseError, match="line 4"):
            load_map("resolution 0.1\norigin 0 0\n...\n..\n")

    def test_missing_header(self):
        with pytest.raises(MapParseError, match="line 1"):
            load_map("nonsense\norigin 0 0\n...\n")

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 12), st.integers(1, 12))
    def test_round_trip_random_grids(self, seed, h, w):
        r = np.random.default_rng(seed)
        g = OccupancyGrid(r.integers(0, 3, size=(h, w)).astype(np.int8),
                          float(r.uniform(0.01, 1.0)),
                          (float(r.normal()), float(r.normal())))
        assert load_map(dump_map(g)) == g


class TestInside:
    def test_free_cell_inside(self):
        g = box_world()
        assert is_inside(g, Pose(3.0, 3.0, 0.0))

    def test_off_grid_outside(self):
        g = box_world()
        assert not is_inside(g, Pose(100.0, 0.0, 0.0))

    def test_unknown_cell_outside(self):
        cells = np.full((3, 3), UNKNOWN, dtype=np.int8)
        cells[1, 1] = FREE
        g = OccupancyGrid(cells, 1.0)
        assert is_inside(g, Pose(1.5, 1.5, 0.0))
        assert not is_inside(g, Pose(0.5, 0.5, 0.0))

    def test_occupied_cell_outside(self):
        g = box_world()
        assert not is_inside(g, Pose(0.01, 0.01, 0.0))

    def test_inside_mask_matches_scalar(self):
        g = box_world()
        xs = np.array([3.0, 100.0, 0.01])
        ys = np.array([3.0, 0.0, 0.01])
        np.testing.assert_array_equal(
            inside_mask(g, xs, ys),
            [is_inside(g, Pose(x, y, 0)) for x, y in zip(xs, ys)])


class TestRaycast:
    def test_range_to_wall(self):
        g = box_world(size_m=6.0, res=0.05)
        # wall cells span x in [5.95, 6.0); from x=5.0 the wall is ~0.95-1.0 away
        scan = raycast(g, Pose(5.0, 3.0, 0.0), np.array([-0.1, 0.0, 0.1]), MAX_RANGE)
        assert 0.90 <= scan.ranges[1] <= 1.05

    def test_open_space_reads_max_range(self):
        cells = np.full((10, 400), FREE, dtype=np.int8)
        g = OccupancyGrid(cells, 0.05)
        scan = raycast(g, Pose(1.0, 0.25, 0.0), np.array([0.0]), MAX_RANGE)
        assert scan.ranges[0] == MAX_RANGE

    def test_rotation_consistency(self):
        g = box_world()
        bearings = default_bearings(31, math.pi / 2)
        delta = 0.37
        a = raycast(g, Pose(2.0, 3.0, 0.5), bearings, MAX_RANGE)
        b = raycast(g, Pose(2.0, 3.0, 0.5 + delta), bearings - delta, MAX_RANGE)
        np.testing.assert_allclose(a.ranges, b.ranges)

    def test_off_grid_pose_rejected(self):
        with pytest.raises(ValueError):
            raycast(box_world(), Pose(-5.0, 0.0, 0.0), np.array([0.0]), MAX_RANGE)

    def test_unknown_transparent_but_flagged(self):
        cells = np.full((5, 60), FREE, dtype=np.int8)
        cells[:, 30:40] = UNKNOWN
        cells[:, 50] = OCCUPIED
        g = OccupancyGrid(cells, 0.1)
        ranges, crossed = raycast_full(g, Pose(0.55, 0.25, 0.0),
                                       np.array([0.0]), MAX_RANGE)
        assert 4.3 < ranges[0] < 4.6  # hits the wall behind the unknown band
        assert crossed[0]


class TestExpectedView:
    def test_corridor_view(self):
        g = fixtures.corridor()
        alphabet = alphabet_build(["wmw", "wgw"], max_views=8)
        vid = expected_view(g, Pose(3.0, 2.5, 0.0), alphabet, ExtractionParams())
        assert alphabet.entries[vid] == "wmw"

    def test_frontier_reads_max_range(self):
        # free pocket facing a band of unknown cells: the unknown sector must
        # surface as a max-range ('m') region
        cells = np.full((40, 80), UNKNOWN, dtype=np.int8)
        cells[:, :30] = FREE
        cells[0, :30] = cells[-1, :30] = OCCUPIED
        g = OccupancyGrid(cells, 0.1)
        alphabet = alphabet_build(["wmw"], max_views=4)
        vid = expected_view(g, Pose(1.0, 2.0, 0.0), alphabet, ExtractionParams())
        assert alphabet.entries[vid] == "wmw"

    def test_requires_inside_pose(self):
        g = fixtures.corridor()
        alphabet = alphabet_build(["wmw"], max_views=4)
        with pytest.raises(ValueError):
            expected_view(g, Pose(0.05, 0.05, 0.0), alphabet, ExtractionParams())

    def test_deterministic(self):
        g = fixtures.corridor()
        alphabet = alphabet_build(["wmw"], max_views=4)
        args = (g, Pose(5.0, 2.5, 1.0), alphabet, ExtractionParams())
        assert expected_view(*args) == expected_view(*args)


class TestScanLikelihood:
    def test_params_validated(self):
        with pytest.raises(ValueError):
            ScanLikelihoodParams(z_hit=0.5, z_rand=0.4)
        with pytest.raises(ValueError):
            ScanLikelihoodParams(sigma_hit=-1.0)
        with pytest.raises(ValueError):
            ScanLikelihoodParams(likelihood_exponent=0.0)

    def test_true_pose_beats_displaced_poses(self):
        g = box_world()
        pose = Pose(2.0, 3.5, 0.7)
        scan = raycast(g, pose, default_bearings(), MAX_RANGE)
        params = ScanLikelihoodParams()
        at_truth = scan_likelihood(g, pose, scan, params)
        for dx in (-1.0, -0.5, 0.5, 1.0):
            for dy in (-1.0, 0.0, 1.0):
                if abs(dx) < 0.5 and abs(dy) < 0.5:
                    continue
                q = Pose(pose.x + dx, pose.y + dy, pose.theta)
                assert at_truth >= scan_likelihood(g, q, scan, params)

    def test_far_from_obstacles_hits_floor(self):
        cells = np.full((200, 200), FREE, dtype=np.int8)
        cells[0, 0] = OCCUPIED  # one far-away obstacle so the field is finite
        g = OccupancyGrid(cells, 0.1)
        n_returned = 4
        angles = np.linspace(-0.5, 0.5, n_returned)
        scan = RangeScan(angles, np.full(n_returned, 3.0), MAX_RANGE)
        params = ScanLikelihoodParams(beam_stride=1)
        val = scan_likelihood(g, Pose(15.0, 15.0, 0.0), scan, params)
        floor = params.z_rand ** (n_returned * params.likelihood_exponent)
        assert val == pytest.approx(floor, rel=1e-6)

    def test_no_return_beams_skipped(self):
        g = box_world()
        angles = np.array([-0.2, 0.0, 0.2])
        full = RangeScan(angles, np.full(3, MAX_RANGE), MAX_RANGE)
        params = ScanLikelihoodParams(beam_stride=1)
        assert scan_likelihood(g, Pose(3, 3, 0), full, params) == pytest.approx(1.0)

    def test_vectorized_matches_scalar(self):
        g = box_world()
        scan = raycast(g, Pose(2.0, 2.0, 0.3), default_bearings(61, 2.0), MAX_RANGE)
        params = ScanLikelihoodParams()
        poses = np.array([[2.0, 2.0, 0.3], [3.0, 4.0, -1.0], [1.0, 5.0, 2.0]])
        logs = scan_log_likelihoods(g, poses, scan, params)
        for k, (x, y, th) in enumerate(poses):
            assert math.exp(logs[k]) == pytest.approx(
                scan_likelihood(g, Pose(x, y, th), scan, params))

    def test_strictly_positive_everywhere(self):
        g = box_world()
        scan = raycast(g, Pose(3.0, 3.0, 0.0), default_bearings(), MAX_RANGE)
        r = np.random.default_rng(0)
        poses = np.column_stack((r.uniform(0.2, 5.8, 200),
                                 r.uniform(0.2, 5.8, 200),
                                 r.uniform(-math.pi, math.pi, 200)))
        logs = scan_log_likelihoods(g, poses, scan, ScanLikelihoodParams())
        assert np.all(np.isfinite(logs))
        assert np.all(np.exp(logs) > 0)
