"""
Processing
==========

Defines the operations turning raw radar frames into training clouds: sweep
aggregation, ego-motion Doppler compensation, range clipping, normalization,
fixed size padding and foreground / background splitting, plus the box
velocity estimation and frame validation used when building datasets.

Compensated Doppler is positive for reflectors receding from the sensor.
"""

from __future__ import annotations

import logging
import warnings
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from radiff.errors import ValidationError
from radiff.frames import Box3D, FeatureRanges, Frame, RadarPointCloud, RangeSpec
from radiff.geometry import PlanarPose, points_in_box, rotation_matrix_2d, wrap_angle

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "SweepAggregate",
    "integrate_ego_poses",
    "aggregate_sweeps",
    "compensate_doppler",
    "clip_to_range",
    "normalize",
    "denormalize",
    "pad_or_downsample",
    "fill_by_replication",
    "split_fg_bg",
    "VelocityEstimate",
    "derive_box_velocity",
    "validate_frame",
    "validate_sequence",
]

LOGGER = logging.getLogger(__name__)

MINIMUM_RAY_LENGTH = 1e-6


@dataclass
class SweepAggregate:
    """
    Result of :func:`aggregate_sweeps`.

    Parameters
    ----------
    cloud
        Union of the aligned sweeps, all points valid.
    sweeps_used
        Number of sweeps aggregated.
    truncated
        Whether fewer sweeps than requested were available.
    """

    cloud: RadarPointCloud
    sweeps_used: int
    truncated: bool


def integrate_ego_poses(frames: Sequence[Frame]) -> list[PlanarPose]:
    """
    Integrate the planar ego motion of consecutive frames into poses in the
    odometry frame of the first one.

    Each interval is integrated with the velocity and yaw rate of the frame
    that starts it.

    Raises
    ------
    :class:`ValidationError`
        If the timestamps are not strictly increasing.
    """
    validate_sequence(frames)
    poses = [PlanarPose()]
    for previous, current in zip(frames[:-1], frames[1:]):
        dt = (current.timestamp_us - previous.timestamp_us) * 1e-6
        pose = poses[-1]
        dx, dy = rotation_matrix_2d(pose.yaw) @ np.asarray(previous.ego_velocity) * dt
        poses.append(
            PlanarPose(
                x=pose.x + float(dx),
                y=pose.y + float(dy),
                yaw=wrap_angle(pose.yaw + previous.yaw_rate * dt),
            )
        )
    return poses


def aggregate_sweeps(
    frames: Sequence[Frame],
    k: int,
    poses: Sequence[PlanarPose] | None = None,
) -> SweepAggregate:
    """
    Aggregate the last ``k`` sweeps of ``frames`` in the coordinate system of
    the latest one.

    Parameters
    ----------
    frames
        Sweeps, oldest first.
    k
        Number of sweeps to aggregate, at least 1.
    poses
        Sensor pose of each frame in a common odometry frame, integrated from
        the ego motion by default.

    Returns
    -------
    :class:`SweepAggregate`
        Aligned union of the valid points. Compensated Doppler and RCS are
        carried over unchanged.

    Warns
    -----
    :class:`UserWarning`
        If fewer than ``k`` sweeps are available; all are used.

    Examples
    --------
    ```
    >>> import numpy as np
    >>> from radiff.geometry import PlanarPose
    >>> cloud = RadarPointCloud.from_points([[5.0, 0.0, 0.0, 1.0, 0.0]])
    >>> frames = [Frame(0, 0, radar=cloud), Frame(1, 100000, radar=cloud)]
    >>> result = aggregate_sweeps(frames, 2, [PlanarPose(), PlanarPose(x=1.0)])
    >>> result.cloud.points[:, 0]
    array([4., 5.])

    ```
    """
    if k < 1:
        raise ValidationError(f"At least one sweep must be aggregated, got k={k}")
    if not frames:
        raise ValidationError("No sweep to aggregate")
    if poses is None:
        poses = integrate_ego_poses(frames)
    if len(poses) != len(frames):
        raise ValidationError(f"Got {len(poses)} poses for {len(frames)} frames")

    used = min(k, len(frames))
    truncated = used < k
    if truncated:
        warnings.warn(
            f"Requested {k} sweeps but only {len(frames)} are available, "
            f"aggregating {used}.",
            stacklevel=2,
        )

    reference = poses[-1].inverse()
    parts = []
    for frame, pose in zip(frames[-used:], poses[-used:]):
        points = frame.radar.valid_points().copy()
        if len(points):
            points[:, :2] = reference.compose(pose).apply(points[:, :2])
        parts.append(points)
    cloud = RadarPointCloud.from_points(np.concatenate(parts, axis=0))
    LOGGER.debug("Aggregated %d sweeps into %d points.", used, len(cloud))
    return SweepAggregate(cloud=cloud, sweeps_used=used, truncated=truncated)


def compensate_doppler(
    raw_doppler: npt.ArrayLike,
    point_pos: npt.ArrayLike,
    ego_velocity: npt.ArrayLike,
) -> np.ndarray | float:
    """
    Project the ego motion out of raw Doppler measurements:
    ``v_comp = v_raw + v_ego . r``, with ``r`` the unit ray from the sensor
    to the point.

    Parameters
    ----------
    raw_doppler
        Raw Doppler of one or ``n`` points in m/s.
    point_pos
        ``(x, y, z)`` of one point or ``n x 3`` positions.
    ego_velocity
        Planar ``(vx, vy)`` or ``(vx, vy, vz)`` ego velocity in m/s.

    Raises
    ------
    :class:`ValidationError`
        If a point lies closer than 1e-6 m to the sensor.

    Examples
    --------
    ```
    >>> float(compensate_doppler(-5.0, [10.0, 0.0, 0.0], [5.0, 0.0]))
    0.0

    ```
    """
    positions = np.asarray(point_pos, dtype=np.float64)
    single = positions.ndim == 1
    positions = positions.reshape(-1, 3)
    velocity = np.zeros(3)
    ego = np.asarray(ego_velocity, dtype=np.float64).reshape(-1)
    velocity[: len(ego)] = ego

    distances = np.linalg.norm(positions, axis=1)
    if np.any(distances < MINIMUM_RAY_LENGTH):
        raise ValidationError(
            "Doppler compensation is undefined for points at the sensor origin"
        )
    rays = positions / distances[:, None]
    doppler = np.asarray(raw_doppler, dtype=np.float64).reshape(-1)
    compensated = doppler + rays @ velocity
    return float(compensated[0]) if single else compensated


def clip_to_range(cloud: RadarPointCloud, spec: RangeSpec) -> RadarPointCloud:
    """Return the valid points of ``cloud`` lying inside ``spec``."""
    points = cloud.valid_points()
    keep = spec.contains(points)
    provenance = cloud.provenance
    if provenance is not None:
        provenance = provenance[cloud.mask][keep]
    return RadarPointCloud(
        points[keep], np.ones(int(keep.sum()), dtype=bool), provenance
    )


def _channels(spec: RangeSpec, features: FeatureRanges) -> list:
    return [spec.x, spec.y, spec.z, features.doppler, features.rcs]


def normalize(
    pc: RadarPointCloud,
    spec: RangeSpec,
    feat_ranges: FeatureRanges | None = None,
) -> RadarPointCloud:
    """
    Map each channel of the valid points affinely onto ``[-1, 1]``; padded
    slots stay zero.

    Examples
    --------
    ```
    >>> from radiff.values import Profile
    >>> spec = RangeSpec.for_profile(Profile.VOD)
    >>> cloud = RadarPointCloud.from_points([[51.2, 0, 0, 0, 0], [25.6, 0, 0, 0, 0]])
    >>> normalize(cloud, spec).points[:, 0]
    array([1., 0.])

    ```
    """
    features = feat_ranges or FeatureRanges()
    points = np.zeros_like(pc.points)
    valid = pc.points[pc.mask]
    channels = _channels(spec, features)
    points[pc.mask] = np.stack(
        [interval.to_unit(valid[:, i]) for i, interval in enumerate(channels)],
        axis=1,
    ).reshape(-1, 5)
    return RadarPointCloud(points, pc.mask.copy(), pc.provenance)


def denormalize(
    pc: RadarPointCloud,
    spec: RangeSpec,
    feat_ranges: FeatureRanges | None = None,
) -> RadarPointCloud:
    """Inverse of :func:`normalize`."""
    features = feat_ranges or FeatureRanges()
    points = np.zeros_like(pc.points)
    valid = pc.points[pc.mask]
    channels = _channels(spec, features)
    points[pc.mask] = np.stack(
        [interval.from_unit(valid[:, i]) for i, interval in enumerate(channels)],
        axis=1,
    ).reshape(-1, 5)
    return RadarPointCloud(points, pc.mask.copy(), pc.provenance)


def pad_or_downsample(
    pc: RadarPointCloud,
    target_n: int,
    seed: int | np.random.Generator | None = 0,
) -> RadarPointCloud:
    """
    Return a cloud with exactly ``target_n`` slots: a uniform random subset
    of the valid points without replacement when there are too many, the
    valid points followed by zeroed invalid slots otherwise.

    Kept points are copied verbatim in their original order.
    """
    if target_n < 1:
        raise ValidationError(f"Target point count must be positive, got {target_n}")
    points = pc.valid_points()
    provenance = None if pc.provenance is None else pc.provenance[pc.mask]
    n = len(points)
    if n > target_n:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(n, size=target_n, replace=False))
        return RadarPointCloud(
            points[keep],
            np.ones(target_n, dtype=bool),
            None if provenance is None else provenance[keep],
        )

    padded = np.zeros((target_n, 5))
    padded[:n] = points
    mask = np.zeros(target_n, dtype=bool)
    mask[:n] = True
    if provenance is not None:
        provenance = np.concatenate(
            [provenance, np.zeros(target_n - n, dtype=provenance.dtype)]
        )
    return RadarPointCloud(padded, mask, provenance)


def fill_by_replication(
    pc: RadarPointCloud,
    target_n: int,
    seed: int | np.random.Generator | None = 0,
) -> RadarPointCloud:
    """
    Return a cloud of exactly ``target_n`` valid points: downsampled as by
    :func:`pad_or_downsample`, or completed by duplicates of randomly drawn
    valid points.

    Raises
    ------
    :class:`ValidationError`
        If the cloud has no valid point to replicate.
    """
    points = pc.valid_points()
    if not len(points):
        raise ValidationError("Cannot fill a cloud without valid points")
    rng = np.random.default_rng(seed)
    if len(points) >= target_n:
        return pad_or_downsample(pc, target_n, rng)
    extra = rng.choice(len(points), size=target_n - len(points), replace=True)
    return RadarPointCloud.from_points(np.concatenate([points, points[extra]], axis=0))


def split_fg_bg(
    pc: RadarPointCloud, boxes: Sequence[Box3D]
) -> tuple[RadarPointCloud, RadarPointCloud]:
    """
    Partition the valid points into those inside any box (foreground) and
    the rest (background).

    Examples
    --------
    ```
    >>> box = Box3D(10.0, 0.0, 0.0, 4.0, 2.0, 1.5)
    >>> cloud = RadarPointCloud.from_points([[10, 0, 0, 0, 0], [12.01, 0, 0, 0, 0]])
    >>> foreground, background = split_fg_bg(cloud, [box])
    >>> len(foreground), len(background)
    (1, 1)

    ```
    """
    points = pc.valid_points()
    inside = np.zeros(len(points), dtype=bool)
    for box in boxes:
        inside |= points_in_box(points, box)
    return (
        RadarPointCloud.from_points(points[inside]),
        RadarPointCloud.from_points(points[~inside]),
    )


@dataclass
class VelocityEstimate:
    """
    Result of :func:`derive_box_velocity`.

    Parameters
    ----------
    velocities
        ``n x 2`` planar velocities of the track observations in m/s.
    flagged
        Whether the estimate is a placeholder of a single observation track.
    """

    velocities: np.ndarray
    flagged: bool = False


def derive_box_velocity(
    track: Sequence[Box3D], timestamps: Sequence[int]
) -> VelocityEstimate:
    """
    Estimate the planar velocity of every observation of an object track by
    central differences of the box centres, with forward and backward
    differences at the track ends.

    Parameters
    ----------
    track
        Boxes of one object, in time order.
    timestamps
        Observation timestamps in microseconds, strictly increasing.

    Warns
    -----
    :class:`UserWarning`
        If the track has a single observation, whose velocity is then zero.

    Examples
    --------
    ```
    >>> track = [Box3D(x, 0.0, 0.0, 4.0, 2.0, 1.5) for x in (0.0, 1.0, 2.0)]
    >>> derive_box_velocity(track, [0, 100000, 200000]).velocities[1]
    array([10.,  0.])

    ```
    """
    if len(track) != len(timestamps):
        raise ValidationError(
            f"Got {len(timestamps)} timestamps for {len(track)} boxes"
        )
    if not track:
        return VelocityEstimate(np.zeros((0, 2)))
    if len(track) == 1:
        warnings.warn(
            "Single observation track, its velocity is set to zero.", stacklevel=2
        )
        return VelocityEstimate(np.zeros((1, 2)), flagged=True)

    times = np.asarray(timestamps, dtype=np.float64) * 1e-6
    if np.any(np.diff(times) <= 0):
        raise ValidationError("Track timestamps must be strictly increasing")
    centres = np.array([[box.cx, box.cy] for box in track])
    velocities = np.empty_like(centres)
    velocities[0] = (centres[1] - centres[0]) / (times[1] - times[0])
    velocities[-1] = (centres[-1] - centres[-2]) / (times[-1] - times[-2])
    velocities[1:-1] = (centres[2:] - centres[:-2]) / (times[2:] - times[:-2])[:, None]
    return VelocityEstimate(velocities)


def validate_frame(
    frame: Frame, spec: RangeSpec | None = None, num_classes: int = 3
) -> None:
    """
    Check the invariants of ``frame``.

    Raises
    ------
    :class:`ValidationError`
        If a point is non-finite or outside ``spec``, the validity mask is
        inconsistent, or a box has an unknown class, a non-positive size or
        an unwrapped yaw.
    """
    radar = frame.radar
    if radar.points.shape != (len(radar.mask), 5):
        raise ValidationError(
            f"Frame {frame.frame_id}: radar points have shape {radar.points.shape}"
        )
    valid = radar.valid_points()
    if not np.all(np.isfinite(valid)) or not np.all(np.isfinite(frame.lidar)):
        raise ValidationError(f"Frame {frame.frame_id}: non-finite point values")
    if spec is not None and not np.all(spec.contains(valid)):
        raise ValidationError(
            f"Frame {frame.frame_id}: {int((~spec.contains(valid)).sum())} radar "
            f"points lie outside the '{spec.profile.value}' range"
        )
    for box in frame.boxes:
        if not 1 <= box.class_id <= num_classes:
            raise ValidationError(
                f"Frame {frame.frame_id}: unknown class id {box.class_id}"
            )
        if min(box.length, box.width, box.height) <= 0:
            raise ValidationError(f"Frame {frame.frame_id}: non-positive box size")
        if not -np.pi < box.yaw <= np.pi:
            raise ValidationError(
                f"Frame {frame.frame_id}: box yaw {box.yaw} is not wrapped"
            )


def validate_sequence(frames: Sequence[Frame]) -> None:
    """
    Check that the timestamps of ``frames`` are strictly increasing.

    Raises
    ------
    :class:`ValidationError`
        If a timestamp does not exceed its predecessor.
    """
    for previous, current in zip(frames[:-1], frames[1:]):
        if current.timestamp_us <= previous.timestamp_us:
            raise ValidationError(
                f"Timestamps must be strictly increasing, frame {current.frame_id} "
                f"({current.timestamp_us} us) follows frame {previous.frame_id} "
                f"({previous.timestamp_us} us)"
            )
