"""Tests for rectangle overlap and the collision possibility index."""

import math

import numpy as np
import pytest

from stackdrive.collision import (
    OrientedRect,
    collision_index,
    overlaps,
    projection_gap,
)


def random_rect(rng, spread=8.0):
    return OrientedRect(
        (float(rng.uniform(-spread, spread)), float(rng.uniform(-spread, spread))),
        float(rng.uniform(-math.pi, math.pi)),
        float(rng.uniform(1.0, 6.0)),
        float(rng.uniform(0.5, 3.0)),
    )


def moved(rect, angle, shift):
    """Rect rotated by angle about the origin, then translated by shift."""
    c, s = math.cos(angle), math.sin(angle)
    x, y = rect.center
    center = (c * x - s * y + shift[0], s * x + c * y + shift[1])
    return OrientedRect(center, rect.heading + angle, rect.length, rect.width)


class TestOrientedRect:
    """Test OrientedRect geometry."""

    def test_corners_order(self):
        """Test that corners run counter-clockwise from front-left."""
        rect = OrientedRect((0.0, 0.0), 0.0, 4.0, 2.0)

        np.testing.assert_allclose(
            rect.corners, [[2.0, 1.0], [-2.0, 1.0], [-2.0, -1.0], [2.0, -1.0]]
        )

    def test_scaled(self):
        """Test that scaling keeps centre and heading."""
        rect = OrientedRect((1.0, 2.0), 0.3, 4.0, 2.0).scaled(1.5)

        assert rect.center == (1.0, 2.0)
        assert rect.length == pytest.approx(6.0)
        assert rect.width == pytest.approx(3.0)

    def test_rejects_degenerate(self):
        """Test that sides must be positive."""
        with pytest.raises(ValueError):
            OrientedRect((0.0, 0.0), 0.0, 0.0, 2.0)


class TestCollisionIndex:
    """Test the collision possibility index."""

    def test_coincident_rectangles(self):
        """Test that identical rectangles score 1 with zero gaps."""
        rect = OrientedRect((0.0, 0.0), 0.0, 1.0, 1.0)

        score = collision_index(rect, rect)

        assert score.index == 1.0
        assert score.gaps_a == (0.0, 0.0)
        assert score.gaps_b == (0.0, 0.0)
        assert overlaps(rect, rect)

    def test_unit_squares_apart(self):
        """Test two unit squares with centres 3 m apart."""
        a = OrientedRect((0.0, 0.0), 0.0, 1.0, 1.0)
        b = OrientedRect((3.0, 0.0), 0.0, 1.0, 1.0)

        score = collision_index(a, b)

        assert score.gaps_a == pytest.approx((2.0, 0.0))
        assert score.gaps_b == pytest.approx((2.0, 0.0))
        assert score.index == pytest.approx(math.exp(-2.0))
        assert not overlaps(a, b)

    def test_longitudinal_separation(self):
        """Test I = exp(-d) for same-lane vehicles d apart bumper to bumper."""
        a = OrientedRect((0.0, 0.0), math.pi / 2, 5.0, 2.0)
        for d in (0.5, 3.0, 10.0):
            b = OrientedRect((0.0, 5.0 + d), math.pi / 2, 5.0, 2.0)

            assert collision_index(a, b).index == pytest.approx(math.exp(-d))

    def test_touching_counts_as_contact(self):
        """Test that rectangles sharing an edge score exactly 1."""
        a = OrientedRect((0.0, 0.0), 0.0, 2.0, 2.0)
        b = OrientedRect((2.0, 0.0), 0.0, 2.0, 2.0)

        assert collision_index(a, b).index == 1.0
        assert overlaps(a, b)

    def test_tiny_gap_stays_below_contact(self):
        """Test that a gap whose exponential rounds to 1 still scores below 1."""
        a = OrientedRect((0.0, 0.0), 0.0, 2.0, 2.0)
        b = OrientedRect((2.0 + 1e-9, 0.0), 0.0, 2.0, 2.0)

        score = collision_index(a, b, scale=1e-9)

        assert not overlaps(a, b)
        assert math.exp(-1e-9 * score.composite_a) == 1.0
        assert score.index < 1.0
        assert score.index == pytest.approx(1.0)

    def test_scale(self):
        """Test the exponent scale."""
        a = OrientedRect((0.0, 0.0), 0.0, 1.0, 1.0)
        b = OrientedRect((3.0, 0.0), 0.0, 1.0, 1.0)

        assert collision_index(a, b, scale=0.5).index == pytest.approx(math.exp(-1.0))

    def test_projection_gap_interval_distance(self):
        """Test the per-axis gap against interval arithmetic."""
        a = OrientedRect((0.0, 0.0), 0.0, 2.0, 2.0)
        b = OrientedRect((0.0, 5.0), 0.0, 2.0, 2.0)

        assert projection_gap(a, b, (0.0, 1.0)) == pytest.approx(3.0)
        assert projection_gap(a, b, (1.0, 0.0)) == 0.0

    def test_random_pairs_properties(self):
        """Test range, symmetry and the overlap equivalence on random pairs."""
        rng = np.random.default_rng(7)
        for _ in range(500):
            a, b = random_rect(rng), random_rect(rng)
            forward = collision_index(a, b).index
            backward = collision_index(b, a).index

            assert 0.0 < forward <= 1.0
            assert forward == pytest.approx(backward, abs=1e-12)
            assert (forward == 1.0) == overlaps(a, b)

    def test_rigid_motion_invariance(self):
        """Test that moving both rectangles together leaves I unchanged."""
        rng = np.random.default_rng(11)
        for _ in range(200):
            a, b = random_rect(rng), random_rect(rng)
            angle = float(rng.uniform(-math.pi, math.pi))
            shift = (float(rng.uniform(-50, 50)), float(rng.uniform(-50, 50)))

            before = collision_index(a, b).index
            after = collision_index(
                moved(a, angle, shift), moved(b, angle, shift)
            ).index

            assert after == pytest.approx(before, abs=1e-9)

    def test_monotone_in_separation(self):
        """Test that pulling one rectangle ahead never raises I."""
        heading = 0.4
        a = OrientedRect((0.0, 0.0), heading, 5.0, 2.0)
        previous = 1.0
        for d in np.linspace(0.0, 20.0, 81):
            center = (
                float(d) * math.cos(heading) - 1.0 * math.sin(heading),
                float(d) * math.sin(heading) + 1.0 * math.cos(heading),
            )
            b = OrientedRect(center, heading, 5.0, 2.0)
            value = collision_index(a, b).index

            assert value <= previous + 1e-12
            previous = value


class TestOverlapOracle:
    """Cross-check the separating-axis test with shapely polygons."""

    def test_matches_shapely(self):
        """Test 10^4 random pairs against polygon intersection."""
        geometry = pytest.importorskip("shapely.geometry")
        rng = np.random.default_rng(2024)
        for _ in range(10_000):
            a, b = random_rect(rng), random_rect(rng)
            poly_a = geometry.Polygon(a.corners)
            poly_b = geometry.Polygon(b.corners)

            assert overlaps(a, b) == poly_a.intersects(poly_b)
