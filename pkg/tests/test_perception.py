"""Tests for neighbour classification and perception noise."""

import math

import numpy as np
import pytest

from stackdrive.collision import OrientedRect
from stackdrive.perception import (
    NeighborEntry,
    NeighborView,
    TrackedVehicle,
    classify_neighbors,
    lane_of,
    magnification_ratio,
    noise_stream,
    perceive_with_noise,
    recognition_point,
)

HEADING = math.pi / 2
WIDTH = 3.3


def vehicle(vehicle_id, x, y, speed=25.0):
    return TrackedVehicle(vehicle_id, x, y, HEADING, speed, 5.0, 2.0)


class TestLaneOf:
    """Test lane lookup."""

    def test_lane_centres(self):
        """Test that lane centres map to their lanes."""
        assert lane_of(0.0, WIDTH) == 1
        assert lane_of(3.3, WIDTH) == 2
        assert lane_of(6.6, WIDTH) == 3

    def test_boundaries_and_clipping(self):
        """Test the strip boundaries and off-road clipping."""
        assert lane_of(1.64, WIDTH) == 1
        assert lane_of(1.66, WIDTH) == 2
        assert lane_of(-5.0, WIDTH) == 1
        assert lane_of(20.0, WIDTH) == 3


class TestRecognitionPoint:
    """Test the recognition point."""

    def setup_method(self):
        """Set up test fixtures."""
        self.rect = OrientedRect((3.3, 20.0), HEADING, 5.0, 2.0)

    def test_aggressive_observer_uses_centre(self):
        """Test that q = 1 gives the body centre."""
        point = recognition_point(self.rect, 1.0, (0.0, 0.0))

        assert point == pytest.approx((3.3, 20.0))

    def test_cautious_observer_uses_nearest_front_corner(self):
        """Test that q = 0 gives the front corner nearest the observer."""
        point = recognition_point(self.rect, 0.0, (0.0, 0.0))

        # Heading +y, so the front corners sit at y = 22.5; the one nearer
        # an observer at x = 0 is at x = 2.3.
        assert point == pytest.approx((2.3, 22.5))

    def test_interpolates(self):
        """Test the midpoint at q = 0.5."""
        point = recognition_point(self.rect, 0.5, (0.0, 0.0))

        assert point == pytest.approx(((2.3 + 3.3) / 2, (22.5 + 20.0) / 2))

    def test_magnification_pushes_corner_out(self):
        """Test that a magnified outline moves the cautious point further out."""
        plain = recognition_point(self.rect, 0.0, (0.0, 0.0))
        magnified = recognition_point(self.rect, 0.0, (0.0, 0.0), magnification=0.2)

        assert magnified[1] > plain[1]
        assert magnification_ratio(0.0, 0.2) == pytest.approx(1.2)
        assert magnification_ratio(1.0, 0.2) == pytest.approx(1.0)

    def test_rejects_out_of_range_q(self):
        """Test that q must lie in [0, 1]."""
        with pytest.raises(ValueError):
            recognition_point(self.rect, 2.0)


class TestClassifyNeighbors:
    """Test neighbour classification."""

    def test_empty_road(self):
        """Test that no other vehicles gives an empty view."""
        ego = vehicle(0, WIDTH, 0.0)

        view = classify_neighbors(ego, [], WIDTH, 100.0)

        assert view.lane == 2
        assert view.leaders == {}
        assert view.followers == {}

    def test_follower_in_fast_lane(self):
        """Test a vehicle 50 m behind in lane 3."""
        ego = vehicle(0, WIDTH, 0.0, speed=100 / 3.6)
        other = vehicle(1, 2 * WIDTH, -50.0, speed=130 / 3.6)

        view = classify_neighbors(ego, [ego, other], WIDTH, 100.0)

        entry = view.follower(3)
        assert entry.vehicle_id == 1
        assert entry.distance == pytest.approx(-50.0)
        assert entry.gap == pytest.approx(50.0)
        assert entry.closing_speed == pytest.approx(30 / 3.6)
        assert view.leader(3) is None

    def test_out_of_sight_excluded(self):
        """Test that vehicles beyond d_v are not seen."""
        ego = vehicle(0, 0.0, 0.0)

        view = classify_neighbors(ego, [vehicle(1, 0.0, 150.0)], WIDTH, 100.0)

        assert view.leader(1) is None

    def test_second_follower(self):
        """Test that the two nearest followers of a lane are kept in order."""
        ego = vehicle(0, 0.0, 0.0)
        others = [vehicle(1, WIDTH, -30.0), vehicle(2, WIDTH, -10.0)]

        view = classify_neighbors(ego, others, WIDTH, 100.0)

        assert view.follower(2).vehicle_id == 2
        assert view.second_followers[2].vehicle_id == 1

    def test_matches_brute_force(self):
        """Test random placements against a direct per-lane search."""
        rng = np.random.default_rng(5)
        for _ in range(100):
            ego = vehicle(0, float(rng.uniform(-1.0, 7.5)), 0.0)
            others = [
                vehicle(
                    i,
                    float(rng.uniform(-1.5, 8.0)),
                    float(rng.uniform(-150.0, 150.0)),
                    float(rng.uniform(20.0, 35.0)),
                )
                for i in range(1, 21)
            ]

            view = classify_neighbors(ego, others, WIDTH, 100.0)

            for lane in (1, 2, 3):
                in_lane = [
                    o for o in others if lane_of(o.x, WIDTH) == lane and abs(o.y) <= 100
                ]
                ahead = [o for o in in_lane if o.y >= 0]
                behind = [o for o in in_lane if o.y < 0]
                leader = min(ahead, key=lambda o: o.y) if ahead else None
                follower = max(behind, key=lambda o: o.y) if behind else None
                got_leader = view.leader(lane)
                got_follower = view.follower(lane)

                assert (got_leader and got_leader.vehicle_id) == (
                    leader and leader.vehicle_id
                )
                assert (got_follower and got_follower.vehicle_id) == (
                    follower and follower.vehicle_id
                )


class TestNoise:
    """Test perception noise."""

    def setup_method(self):
        """Set up test fixtures."""
        self.view = NeighborView(
            visibility=100.0,
            lane=2,
            leaders={2: NeighborEntry(7, 50.0, 1.0)},
            followers={3: NeighborEntry(8, -40.0, 2.0)},
        )

    def test_zero_sigma_is_identity(self):
        """Test that zero noise leaves the view unchanged."""
        rng = noise_stream(0, 1)

        noisy = perceive_with_noise(self.view, 0.5, rng, 0.0, 0.0)

        assert noisy == self.view

    def test_seeded_streams_reproduce(self):
        """Test that equal seeds give identical noisy views."""
        first = perceive_with_noise(self.view, 0.5, noise_stream(3, 4))
        second = perceive_with_noise(self.view, 0.5, noise_stream(3, 4))
        other = perceive_with_noise(self.view, 0.5, noise_stream(3, 5))

        assert first == second
        assert first != other

    def test_noise_statistics(self):
        """Test mean and spread of perceived distance over many draws."""
        rng = noise_stream(42, 0)
        n = 100_000
        samples = np.array(
            [
                perceive_with_noise(self.view, 0.5, rng).leader(2).distance
                for _ in range(n)
            ]
        )
        sigma = 0.5 * (1 + 0.5) * 50.0 / 100.0

        assert abs(samples.mean() - 50.0) < 4 * sigma / math.sqrt(n)
        assert samples.std() == pytest.approx(sigma, rel=0.02)

    def test_noise_unbiased_at_edge_of_sight(self):
        """Test that a leader near the visibility limit is not pulled inward."""
        edge = NeighborView(
            visibility=100.0, lane=2, leaders={2: NeighborEntry(7, 99.5, 0.0)}
        )
        rng = noise_stream(42, 1)
        n = 100_000
        samples = np.array(
            [perceive_with_noise(edge, 1.0, rng).leader(2).distance for _ in range(n)]
        )
        sigma = 0.5 * (1 + 1.0) * 99.5 / 100.0

        assert abs(samples.mean() - 99.5) < 4 * sigma / math.sqrt(n)
        assert samples.std() == pytest.approx(sigma, rel=0.02)
        assert samples.max() > 100.0

    def test_noise_grows_with_q(self):
        """Test that inattentive drivers see a noisier road."""
        def spread(q):
            rng = noise_stream(9, 0)
            values = [
                perceive_with_noise(self.view, q, rng).leader(2).distance
                for _ in range(5000)
            ]
            return float(np.std(values))

        assert spread(1.0) > spread(0.0)

    def test_noise_keeps_sides(self):
        """Test that noise never moves a vehicle across the observer."""
        near = NeighborView(
            visibility=100.0,
            lane=2,
            leaders={2: NeighborEntry(7, 0.01, 0.0)},
            followers={2: NeighborEntry(8, -0.01, 0.0)},
        )
        rng = noise_stream(1, 1)
        for _ in range(1000):
            noisy = perceive_with_noise(near, 1.0, rng, sigma_distance=100.0)

            assert noisy.leader(2).distance >= 0
            assert noisy.follower(2).distance < 0
