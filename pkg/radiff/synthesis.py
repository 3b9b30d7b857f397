"""
Synthesis
=========

Defines the procedural scene generator providing training data and
verification oracles: non-overlapping boxes emitting radar points with
physically consistent Doppler, a *LiDAR* background of walls, ground and poles,
and static radar clutter.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from radiff.frames import Box3D, FeatureRanges, Frame, RadarPointCloud, RangeSpec
from radiff.geometry import (
    box_bev_corners,
    convex_intersection_area,
    from_box_frame,
    points_in_box,
    rotation_matrix_2d,
)
from radiff.processing import clip_to_range
from radiff.values import ObjectClass, Profile

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "GENERATOR_VERSION",
    "CLASS_TEMPLATES",
    "CLASS_RCS",
    "SceneProfile",
    "point_doppler",
    "ground_level",
    "synth_scene",
    "synth_dataset",
]

LOGGER = logging.getLogger(__name__)

GENERATOR_VERSION = "1"

CLASS_TEMPLATES: dict[ObjectClass, tuple[float, float, float]] = {
    ObjectClass.CAR: (4.2, 1.8, 1.5),
    ObjectClass.PEDESTRIAN: (0.8, 0.7, 1.75),
    ObjectClass.CYCLIST: (1.8, 0.7, 1.6),
}
"""Mean ``(length, width, height)`` of each class in meters."""

CLASS_RCS: dict[ObjectClass, float] = {
    ObjectClass.CAR: 10.0,
    ObjectClass.PEDESTRIAN: -5.0,
    ObjectClass.CYCLIST: 0.0,
}
"""Mean radar cross-section of each class in dBsm."""

MINIMUM_SENSOR_DISTANCE = 2.0
PLACEMENT_ATTEMPTS = 50


@dataclass(frozen=True)
class SceneProfile:
    """
    Parameters of the scene generator.

    Parameters
    ----------
    max_boxes
        Upper bound of the uniform box count.
    class_weights
        Sampling weights of car, pedestrian and cyclist.
    max_speed
        Maximum speed of each class in m/s.
    moving_fraction
        Probability of a box to move.
    surface_density
        Expected radar points per square meter of sensor-facing box surface.
    doppler_noise
        Standard deviation ``sigma_d`` of the Doppler noise in m/s.
    rcs_noise
        Standard deviation of the RCS around its class mean in dBsm.
    clutter_points
        Number of static radar clutter points.
    ground_points
        Number of *LiDAR* ground returns.
    lidar_spacing
        Grid spacing of the *LiDAR* walls, poles and box surfaces in meters.
    poles
        Number of vertical poles.
    frame_period_us
        Time between consecutive frames.
    """

    max_boxes: int = 8
    class_weights: tuple[float, float, float] = (0.5, 0.25, 0.25)
    max_speed: tuple[float, float, float] = (12.0, 2.0, 6.0)
    moving_fraction: float = 0.6
    surface_density: float = 4.0
    doppler_noise: float = 0.1
    rcs_noise: float = 2.0
    clutter_points: int = 48
    ground_points: int = 400
    lidar_spacing: float = 0.5
    poles: int = 6
    frame_period_us: int = 100_000
    feature_ranges: FeatureRanges = field(default_factory=FeatureRanges)

    @classmethod
    def for_profile(cls, profile: Profile) -> SceneProfile:
        """Return the generator defaults of the given profile."""
        if profile == Profile.TRUCKSCENES:
            return cls(
                clutter_points=128, ground_points=1200, lidar_spacing=1.0, poles=16
            )
        if profile == Profile.VOD:
            return cls(clutter_points=96, ground_points=800, poles=10)
        return cls()

    def surface_spacing(self) -> float:
        """Mean spacing of the radar points sampled on box surfaces in meters."""
        return 1.0 / math.sqrt(self.surface_density)


def point_doppler(positions: npt.ArrayLike, velocity: npt.ArrayLike) -> np.ndarray:
    """
    Return the noiseless compensated Doppler of reflectors at ``positions``
    moving with the planar ``velocity``: the projection of the velocity on
    the sensor ray, positive when receding.

    Examples
    --------
    ```
    >>> point_doppler([[10.0, 0.0, 0.0]], [10.0, 0.0])
    array([10.])

    ```
    """
    array = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    v = np.asarray(velocity, dtype=np.float64)
    return array[:, :2] @ v / np.linalg.norm(array, axis=1)


def ground_level(spec: RangeSpec) -> float:
    """Return the height of the synthetic ground plane."""
    return spec.z.lower + 0.25 * spec.z.span


def _sample_box(
    rng: np.random.Generator, spec: RangeSpec, profile: SceneProfile
) -> Box3D:
    weights = np.asarray(profile.class_weights, dtype=np.float64)
    choice = rng.choice(len(weights), p=weights / weights.sum())
    object_class = list(ObjectClass)[choice]
    template = np.asarray(CLASS_TEMPLATES[object_class])
    length, width, height = template * rng.uniform(0.9, 1.1, 3)
    margin = 0.5 * math.hypot(length, width) + 0.5
    yaw = rng.uniform(-math.pi, math.pi)
    speed = 0.0
    if rng.random() < profile.moving_fraction:
        top = profile.max_speed[object_class - 1]
        speed = rng.uniform(0.3 * top, top)
    return Box3D(
        cx=rng.uniform(spec.x.lower + margin, spec.x.upper - margin),
        cy=rng.uniform(spec.y.lower + margin, spec.y.upper - margin),
        cz=ground_level(spec) + height / 2.0,
        length=length,
        width=width,
        height=height,
        yaw=yaw,
        vx=speed * math.cos(yaw),
        vy=speed * math.sin(yaw),
        class_id=int(object_class),
    )


def _place_boxes(
    rng: np.random.Generator, spec: RangeSpec, profile: SceneProfile
) -> list[Box3D]:
    count = int(rng.integers(0, profile.max_boxes + 1))
    boxes: list[Box3D] = []
    for _ in range(count * PLACEMENT_ATTEMPTS):
        if len(boxes) == count:
            break
        box = _sample_box(rng, spec, profile)
        clearance = MINIMUM_SENSOR_DISTANCE + math.hypot(box.length, box.width)
        if math.hypot(box.cx, box.cy) < clearance:
            continue
        corners = box_bev_corners(box)
        if any(
            convex_intersection_area(corners, box_bev_corners(other)) > 0
            for other in boxes
        ):
            continue
        boxes.append(box)
    return boxes


def _visible_faces(box: Box3D) -> list[tuple[np.ndarray, float]]:
    """Return the local normals and widths of the faces seen from the origin."""
    faces = []
    rotation = rotation_matrix_2d(box.yaw)
    for normal, extent, depth in (
        (np.array([1.0, 0.0]), box.width, box.length),
        (np.array([-1.0, 0.0]), box.width, box.length),
        (np.array([0.0, 1.0]), box.length, box.width),
        (np.array([0.0, -1.0]), box.length, box.width),
    ):
        centre = np.array([box.cx, box.cy]) + rotation @ normal * depth / 2.0
        if float((rotation @ normal) @ -centre) > 0:
            faces.append((normal, extent))
    return faces


def _face_samples(
    rng: np.random.Generator, box: Box3D, count_per_area: float, poisson: bool
) -> np.ndarray:
    """Sample points on the visible vertical faces of ``box``, in world frame."""
    half = np.array([box.length, box.width, box.height]) / 2.0
    samples = []
    for normal, extent in _visible_faces(box):
        area = extent * box.height
        expected = count_per_area * area
        count = rng.poisson(expected) if poisson else round(expected)
        if not count:
            continue
        local = np.empty((count, 3))
        axis = 0 if normal[0] else 1
        other = 1 - axis
        local[:, axis] = normal[axis] * half[axis] * 0.98
        local[:, other] = rng.uniform(-0.98, 0.98, count) * half[other]
        local[:, 2] = rng.uniform(-0.98, 0.98, count) * half[2]
        samples.append(from_box_frame(local, box))
    if not samples:
        return np.zeros((0, 3))
    return np.concatenate(samples, axis=0)


def _box_radar_points(
    rng: np.random.Generator, box: Box3D, profile: SceneProfile
) -> np.ndarray:
    positions = _face_samples(rng, box, profile.surface_density, poisson=True)
    doppler = point_doppler(positions, box.velocity) + rng.normal(
        0.0, profile.doppler_noise, len(positions)
    )
    rcs = CLASS_RCS[ObjectClass(box.class_id)] + rng.normal(
        0.0, profile.rcs_noise, len(positions)
    )
    rcs_range = profile.feature_ranges.rcs
    rcs = np.clip(rcs, rcs_range.lower, rcs_range.upper)
    return np.column_stack([positions, doppler, rcs]).reshape(-1, 5)


def _lidar_background(
    rng: np.random.Generator,
    spec: RangeSpec,
    profile: SceneProfile,
    boxes: Sequence[Box3D],
) -> tuple[np.ndarray, np.ndarray]:
    """Return the ground returns and the vertical structure returns."""
    z_ground = ground_level(spec)
    ground = np.column_stack(
        [
            rng.uniform(spec.x.lower, spec.x.upper, profile.ground_points),
            rng.uniform(spec.y.lower, spec.y.upper, profile.ground_points),
            np.full(profile.ground_points, z_ground),
        ]
    )

    spacing = profile.lidar_spacing
    top = min(z_ground + 2.5, spec.z.upper)
    heights = np.arange(z_ground + spacing, top, spacing)
    along = np.arange(spec.x.lower, spec.x.upper, spacing)
    structures = [
        np.array([[x, y, z] for x in along for z in heights]).reshape(-1, 3)
        for y in (spec.y.lower + 1.0, spec.y.upper - 1.0)
    ]
    for _ in range(profile.poles):
        x = rng.uniform(spec.x.lower, spec.x.upper)
        y = rng.uniform(spec.y.lower + 2.0, spec.y.upper - 2.0)
        pole = np.column_stack(
            [np.full(len(heights), x), np.full(len(heights), y), heights]
        )
        structures.append(pole)
    structure = np.concatenate(structures, axis=0)

    outside = np.ones(len(structure), dtype=bool)
    for box in boxes:
        outside &= ~points_in_box(structure, box)
    return ground, structure[outside]


def synth_scene(
    seed: int | np.random.SeedSequence,
    profile: Profile | str = Profile.TOY,
    frame_id: int = 0,
    scene_profile: SceneProfile | None = None,
) -> Frame:
    """
    Generate a synthetic frame.

    Parameters
    ----------
    seed
        Seed of the frame; the same seed always yields the same frame.
    profile
        Named profile giving the spatial range and generator defaults.
    frame_id
        Identifier of the frame, its timestamp is ``frame_id`` periods.
    scene_profile
        Generator parameters overriding the profile defaults.

    Returns
    -------
    :class:`Frame`
        Frame with 0 to ``max_boxes`` non-overlapping boxes, radar points on
        the sensor-facing box surfaces whose Doppler is the projection of the
        box velocity plus noise, and a static background of *LiDAR* returns
        and radar clutter. Stored Doppler is ego-motion compensated.
    """
    profile = Profile(profile)
    scene_profile = scene_profile or SceneProfile.for_profile(profile)
    spec = RangeSpec.for_profile(profile)
    rng = np.random.default_rng(seed)

    boxes = _place_boxes(rng, spec, scene_profile)
    radar_parts = [_box_radar_points(rng, box, scene_profile) for box in boxes]
    object_lidar = [
        _face_samples(rng, box, 1.0 / scene_profile.lidar_spacing**2, poisson=False)
        for box in boxes
    ]
    ground, structure = _lidar_background(rng, spec, scene_profile, boxes)

    sources = structure if len(structure) else ground
    clutter_count = scene_profile.clutter_points if len(sources) else 0
    picks = rng.integers(0, max(len(sources), 1), clutter_count)
    clutter = sources[picks] + rng.normal(0.0, 0.05, (len(picks), 3))
    clutter_features = np.column_stack(
        [
            rng.normal(0.0, 0.05, len(picks)),
            np.clip(rng.normal(-10.0, 3.0, len(picks)), -40.0, 20.0),
        ]
    )
    inside = np.zeros(len(clutter), dtype=bool)
    for box in boxes:
        inside |= points_in_box(clutter, box)
    radar_parts.append(np.column_stack([clutter, clutter_features])[~inside])

    radar = RadarPointCloud.from_points(np.concatenate(radar_parts, axis=0))
    radar = clip_to_range(radar, spec)
    lidar = np.concatenate([ground, structure, *object_lidar], axis=0)
    lidar = lidar[spec.contains(lidar)]
    LOGGER.debug(
        "Synthesised frame %d with %d boxes, %d radar and %d lidar points.",
        frame_id,
        len(boxes),
        len(radar),
        len(lidar),
    )
    return Frame(
        frame_id=frame_id,
        timestamp_us=frame_id * scene_profile.frame_period_us,
        radar=radar,
        lidar=lidar,
        boxes=boxes,
    )


def synth_dataset(
    seed: int,
    count: int,
    profile: Profile | str = Profile.TOY,
    scene_profile: SceneProfile | None = None,
) -> list[Frame]:
    """
    Generate ``count`` independent frames with ids ``0 .. count - 1`` from
    child seeds of ``seed``.
    """
    children = np.random.SeedSequence(seed).spawn(count)
    return [
        synth_scene(child, profile, frame_id, scene_profile)
        for frame_id, child in enumerate(children)
    ]
