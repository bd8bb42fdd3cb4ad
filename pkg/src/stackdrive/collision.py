"""Separating-axis overlap tests and the collision possibility index."""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

Vector = Tuple[float, float]

_BELOW_ONE = float(np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class OrientedRect:
    """Rectangle with its length along ``heading``."""

    center: Vector
    heading: float
    length: float
    width: float

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError("rectangle length and width must be positive")

    @property
    def axes(self) -> np.ndarray:
        """Unit edge directions, shape (2, 2): longitudinal then lateral."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        return np.array([[c, s], [-s, c]])

    @property
    def corners(self) -> np.ndarray:
        """Corners in counter-clockwise order starting front-left, shape (4, 2)."""
        axes = self.axes
        half_l = 0.5 * self.length * axes[0]
        half_w = 0.5 * self.width * axes[1]
        center = np.asarray(self.center, dtype=float)
        return np.array(
            [
                center + half_l + half_w,
                center - half_l + half_w,
                center - half_l - half_w,
                center + half_l - half_w,
            ]
        )

    def scaled(self, ratio: float) -> "OrientedRect":
        """Same centre and heading, both sides multiplied by ratio."""
        return OrientedRect(
            self.center, self.heading, self.length * ratio, self.width * ratio
        )


@dataclass(frozen=True)
class CollisionScore:
    """Collision possibility index with the gaps it was computed from."""

    index: float
    gaps_a: Tuple[float, float]
    gaps_b: Tuple[float, float]
    composite_a: float  # D_col,v
    composite_b: float  # D_col,u


def _interval(rect: OrientedRect, axis: np.ndarray) -> Tuple[float, float]:
    dots = rect.corners @ axis
    return float(dots.min()), float(dots.max())


def projection_gap(rect_a: OrientedRect, rect_b: OrientedRect, axis) -> float:
    """Separation of the two rectangles' projections on an axis.

    Args:
        rect_a: First rectangle
        rect_b: Second rectangle
        axis: Unit vector, normally one of rect_a's edge directions

    Returns:
        0 if the projected intervals overlap or touch, else the distance between them
    """
    axis = np.asarray(axis, dtype=float)
    min_a, max_a = _interval(rect_a, axis)
    min_b, max_b = _interval(rect_b, axis)
    if max_a < min_b:
        return min_b - max_a
    if max_b < min_a:
        return min_a - max_b
    return 0.0


def _composite(rect_a: OrientedRect, rect_b: OrientedRect, owner: OrientedRect):
    gaps = tuple(projection_gap(rect_a, rect_b, axis) for axis in owner.axes)
    return gaps, math.hypot(*gaps)


def collision_index(
    rect_a: OrientedRect, rect_b: OrientedRect, scale: float = 1.0
) -> CollisionScore:
    """Collision possibility index in [0, 1]; 1 when the rectangles touch or overlap.

    Args:
        rect_a: First rectangle
        rect_b: Second rectangle
        scale: Exponent scale lambda, 1/m
    """
    gaps_a, d_v = _composite(rect_a, rect_b, rect_a)
    gaps_b, d_u = _composite(rect_a, rect_b, rect_b)
    if d_v == 0.0 and d_u == 0.0:
        index = 1.0
    else:
        # A positive gap below one ulp must not read as contact.
        index = min(
            math.exp(-scale * math.sqrt((d_v * d_v + d_u * d_u) / 2.0)), _BELOW_ONE
        )
    return CollisionScore(index, gaps_a, gaps_b, d_v, d_u)


def overlaps(rect_a: OrientedRect, rect_b: OrientedRect) -> bool:
    """True iff none of the four edge directions separates the rectangles."""
    for owner in (rect_a, rect_b):
        for axis in owner.axes:
            if projection_gap(rect_a, rect_b, axis) > 0.0:
                return False
    return True
