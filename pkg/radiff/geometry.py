"""
Geometry
========

Defines planar rigid transforms, box-local coordinate frames and the convex
polygon routines behind the bird's-eye view (*BEV*) collision checks.

"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt

if TYPE_CHECKING:
    from radiff.frames import Box3D

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "wrap_angle",
    "rotation_matrix_2d",
    "rotate_xy",
    "PlanarPose",
    "to_box_frame",
    "from_box_frame",
    "points_in_box",
    "box_bev_corners",
    "polygons_separated",
    "clip_polygon",
    "polygon_area",
    "convex_intersection_area",
    "azimuth",
]


def wrap_angle(angle: float) -> float:
    """
    Wrap ``angle`` to the half-open interval ``(-pi, pi]``.

    Examples
    --------
    ```
    >>> import math
    >>> wrap_angle(-math.pi) == math.pi
    True
    >>> round(wrap_angle(3 * math.pi / 2), 12) == round(-math.pi / 2, 12)
    True

    ```
    """
    wrapped = angle - 2.0 * math.pi * math.ceil((angle - math.pi) / (2.0 * math.pi))
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def rotation_matrix_2d(angle: float) -> np.ndarray:
    """Return the counter-clockwise 2 x 2 rotation matrix of ``angle``."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotate_xy(points: npt.ArrayLike, angle: float) -> np.ndarray:
    """
    Rotate the first two columns of ``points`` counter-clockwise about the
    origin, leaving further columns untouched.
    """
    array = np.array(points, dtype=np.float64)
    if array.size == 0:
        return array
    array[..., :2] = array[..., :2] @ rotation_matrix_2d(angle).T
    return array


@dataclass(frozen=True)
class PlanarPose:
    """
    Represents a planar rigid transform, the pose of a sensor in a fixed
    odometry frame.

    Parameters
    ----------
    x
        Translation along x in meters.
    y
        Translation along y in meters.
    yaw
        Heading in radians.
    """

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def apply(self, points: npt.ArrayLike) -> np.ndarray:
        """Map points from the local frame of the pose to the fixed frame."""
        out = rotate_xy(points, self.yaw)
        if out.size:
            out[..., 0] += self.x
            out[..., 1] += self.y
        return out

    def inverse(self) -> PlanarPose:
        """Return the inverse transform."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return PlanarPose(
            x=-(c * self.x + s * self.y),
            y=-(-s * self.x + c * self.y),
            yaw=-self.yaw,
        )

    def compose(self, other: PlanarPose) -> PlanarPose:
        """Return the transform applying ``other`` first, then ``self``."""
        x, y = self.apply([[other.x, other.y]])[0]
        return PlanarPose(x=float(x), y=float(y), yaw=wrap_angle(self.yaw + other.yaw))


def to_box_frame(points: npt.ArrayLike, box: Box3D) -> np.ndarray:
    """
    Express the ``(x, y, z)`` columns of ``points`` in the frame of ``box``:
    translate by the negated centre, then rotate by ``-yaw`` about z.
    """
    array = np.array(points, dtype=np.float64)
    if array.size == 0:
        return array.reshape(-1, array.shape[-1] if array.ndim > 1 else 3)
    array[..., 0] -= box.cx
    array[..., 1] -= box.cy
    array[..., 2] -= box.cz
    return rotate_xy(array, -box.yaw)


def from_box_frame(points: npt.ArrayLike, box: Box3D) -> np.ndarray:
    """Inverse of :func:`to_box_frame`."""
    array = rotate_xy(points, box.yaw)
    if array.size == 0:
        return array
    array[..., 0] += box.cx
    array[..., 1] += box.cy
    array[..., 2] += box.cz
    return array


def points_in_box(points: npt.ArrayLike, box: Box3D) -> np.ndarray:
    """
    Return the boolean mask of points lying inside ``box`` (boundary
    included).
    """
    array = np.asarray(points, dtype=np.float64)
    if array.size == 0:
        return np.zeros(0, dtype=bool)
    local = to_box_frame(array[:, :3], box)
    half = np.array([box.length, box.width, box.height]) / 2.0
    return np.all(np.abs(local) <= half, axis=1)


def box_bev_corners(box: Box3D) -> np.ndarray:
    """
    Return the four bird's-eye view corners of ``box`` in counter-clockwise
    order as a 4 x 2 array.
    """
    half_l, half_w = box.length / 2.0, box.width / 2.0
    local = np.array(
        [[half_l, half_w], [-half_l, half_w], [-half_l, -half_w], [half_l, -half_w]]
    )
    return local @ rotation_matrix_2d(box.yaw).T + np.array([box.cx, box.cy])


def polygons_separated(vertices_a: np.ndarray, vertices_b: np.ndarray) -> bool:
    """
    Return whether an edge normal of either convex polygon separates them
    (separating axis theorem). Touching polygons count as separated.
    """
    for vertices in (vertices_a, vertices_b):
        edges = np.roll(vertices, -1, axis=0) - vertices
        for edge in edges:
            axis = np.array([edge[1], -edge[0]])
            projection_a = vertices_a @ axis
            projection_b = vertices_b @ axis
            if (
                projection_a.min() >= projection_b.max()
                or projection_b.min() >= projection_a.max()
            ):
                return True
    return False


def clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """
    Clip the ``subject`` polygon by the convex, counter-clockwise ``clip``
    polygon (Sutherland-Hodgman) and return the vertices of the result.
    """
    output = [tuple(v) for v in subject]
    count = len(clip)
    for i in range(count):
        if not output:
            break
        a, b = clip[i], clip[(i + 1) % count]
        edge = b - a

        def inside(
            p: tuple[float, float], a: np.ndarray = a, edge: np.ndarray = edge
        ) -> bool:
            return edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0]) >= 0.0

        def intersect(
            p: tuple[float, float],
            q: tuple[float, float],
            a: np.ndarray = a,
            edge: np.ndarray = edge,
        ) -> tuple[float, float]:
            direction = (q[0] - p[0], q[1] - p[1])
            denominator = edge[0] * direction[1] - edge[1] * direction[0]
            t = (edge[1] * (p[0] - a[0]) - edge[0] * (p[1] - a[1])) / denominator
            return p[0] + t * direction[0], p[1] + t * direction[1]

        inputs, output = output, []
        previous = inputs[-1]
        for current in inputs:
            if inside(current):
                if not inside(previous):
                    output.append(intersect(previous, current))
                output.append(current)
            elif inside(previous):
                output.append(intersect(previous, current))
            previous = current
    return np.array(output, dtype=np.float64).reshape(-1, 2)


def polygon_area(vertices: np.ndarray) -> float:
    """Return the area of a simple polygon with the shoelace formula."""
    if len(vertices) < 3:
        return 0.0
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def convex_intersection_area(vertices_a: np.ndarray, vertices_b: np.ndarray) -> float:
    """
    Return the intersection area of two convex counter-clockwise polygons:
    zero if a separating axis exists, the clipped polygon's area otherwise.
    """
    if polygons_separated(vertices_a, vertices_b):
        return 0.0
    return polygon_area(clip_polygon(vertices_a, vertices_b))


def azimuth(points: npt.ArrayLike) -> np.ndarray:
    """Return the azimuth ``atan2(y, x)`` of each point in ``(-pi, pi]``."""
    array = np.asarray(points, dtype=np.float64)
    if array.size == 0:
        return np.zeros(0)
    return np.arctan2(array[..., 1], array[..., 0])
