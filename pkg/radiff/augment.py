"""
Augmentation
============

Defines the training data augmentations:

-   the ground truth database of annotated objects and its insertion into
    frames with a bird's-eye view collision check,
-   the global flip, rotation and scaling of frames,
-   the sector-wise mixing of stored objects into sparse frames,
-   the fusion of foreground and background clouds.

Global transforms leave the Doppler channel untouched. Scaling moves
positions but keeps velocities.
"""

from __future__ import annotations

import json
import logging
import math
import os
import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from radiff.config import AugmentConfig
from radiff.errors import ParsingError, ValidationError
from radiff.frames import Box3D, Frame, RadarPointCloud, read_frame, write_frame
from radiff.geometry import (
    azimuth,
    box_bev_corners,
    convex_intersection_area,
    from_box_frame,
    points_in_box,
    rotate_xy,
    to_box_frame,
)
from radiff.processing import split_fg_bg
from radiff.values import Provenance

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "GtEntry",
    "GtDatabase",
    "build_gt_database",
    "save_gt_database",
    "load_gt_database",
    "bev_overlap",
    "gt_sample_insert",
    "global_flip_y",
    "global_rotate",
    "global_scale",
    "random_global_augment",
    "foreground_count",
    "polar_mix_fill",
    "fuse",
]

LOGGER = logging.getLogger(__name__)

DATABASE_INDEX = "index.json"


@dataclass(frozen=True)
class GtEntry:
    """
    Represents an annotated object of the ground truth database.

    Parameters
    ----------
    box
        Box at its original world pose.
    points
        ``k x 5`` radar points in the box frame; the feature channels are
        unchanged.
    frame_id
        Identifier of the source frame.
    """

    box: Box3D
    points: np.ndarray
    frame_id: int

    @property
    def class_id(self) -> int:
        """Class of the object."""
        return self.box.class_id

    def world_points(self) -> np.ndarray:
        """Return the points at the stored world pose."""
        return from_box_frame(self.points, self.box)


@dataclass
class GtDatabase:
    """
    Represents the ground truth database, immutable once built.
    """

    entries: list[GtEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def for_class(self, class_id: int) -> list[GtEntry]:
        """Return the entries of a class in database order."""
        return [entry for entry in self.entries if entry.class_id == class_id]

    def class_counts(self) -> dict[int, int]:
        """Return the number of entries per class id."""
        counts: dict[int, int] = {}
        for entry in self.entries:
            counts[entry.class_id] = counts.get(entry.class_id, 0) + 1
        return counts


def build_gt_database(frames: Sequence[Frame], min_points: int = 5) -> GtDatabase:
    """
    Collect the radar points of every annotated box, in box-local
    coordinates; boxes holding fewer than ``min_points`` points are skipped.

    Examples
    --------
    ```
    >>> import numpy as np
    >>> box = Box3D(10.0, 0.0, 0.0, 4.0, 2.0, 1.5)
    >>> cloud = RadarPointCloud.from_points(np.tile([10.0, 0, 0, 1, 5], (4, 1)))
    >>> len(build_gt_database([Frame(radar=cloud, boxes=[box])]))
    0

    ```
    """
    entries = []
    skipped = 0
    for frame in frames:
        points = frame.radar.valid_points()
        for box in frame.boxes:
            inside = points[points_in_box(points, box)]
            if len(inside) < min_points:
                skipped += 1
                continue
            entries.append(GtEntry(box, to_box_frame(inside, box), frame.frame_id))
    LOGGER.info(
        "Built a ground truth database of %d entries, %d boxes with fewer than %d "
        "points were skipped.",
        len(entries),
        skipped,
        min_points,
    )
    return GtDatabase(entries)


def save_gt_database(database: GtDatabase, directory: str | os.PathLike) -> None:
    """
    Write the database as one entry file per object plus an index file.

    An entry file is a frame holding the box and the box-local points.
    """
    os.makedirs(directory, exist_ok=True)
    index = []
    for number, entry in enumerate(database.entries):
        name = f"entry_{number:06d}.rdf"
        write_frame(
            Frame(
                frame_id=entry.frame_id,
                radar=RadarPointCloud.from_points(entry.points),
                boxes=[entry.box],
            ),
            os.path.join(directory, name),
        )
        index.append(
            {"file": name, "frame_id": entry.frame_id, "class_id": entry.class_id}
        )
    path = os.path.join(directory, DATABASE_INDEX)
    with open(path, "w", encoding="utf-8") as json_file:
        json.dump({"entries": index}, json_file, indent=2)
        json_file.write("\n")


def load_gt_database(directory: str | os.PathLike) -> GtDatabase:
    """
    Read a database written by :func:`save_gt_database`.

    Raises
    ------
    :class:`ParsingError`
        If an entry file does not hold exactly one box.
    """
    with open(os.path.join(directory, DATABASE_INDEX), encoding="utf-8") as json_file:
        index = json.load(json_file)
    entries = []
    for item in index["entries"]:
        frame = read_frame(os.path.join(directory, item["file"]))
        if len(frame.boxes) != 1:
            raise ParsingError(
                f"Database entry '{item['file']}' holds {len(frame.boxes)} boxes, "
                "expected one"
            )
        entries.append(
            GtEntry(frame.boxes[0], frame.radar.valid_points(), frame.frame_id)
        )
    return GtDatabase(entries)


def bev_overlap(a: Box3D, b: Box3D) -> float:
    """
    Return the intersection area in square meters of the bird's-eye view
    footprints of two boxes.

    Examples
    --------
    ```
    >>> bev_overlap(Box3D(0, 0, 0, 2, 2, 1), Box3D(1, 0, 0, 2, 2, 1))
    2.0

    ```
    """
    return convex_intersection_area(box_bev_corners(a), box_bev_corners(b))


def _collides(box: Box3D, boxes: Sequence[Box3D]) -> bool:
    return any(bev_overlap(box, other) > 0.0 for other in boxes)


def _insert(
    frame: Frame, entries: Sequence[GtEntry]
) -> tuple[list[Box3D], list[np.ndarray], int]:
    boxes = list(frame.boxes)
    points = [frame.radar.valid_points()]
    inserted = 0
    for entry in entries:
        if _collides(entry.box, boxes):
            continue
        boxes.append(entry.box)
        points.append(entry.world_points())
        inserted += 1
    return boxes, points, inserted


def gt_sample_insert(
    frame: Frame,
    database: GtDatabase,
    counts: Mapping[int, int],
    seed: int | np.random.Generator | None = 0,
) -> Frame:
    """
    Insert randomly drawn database objects at their stored poses.

    Objects whose footprint overlaps an existing or already inserted box are
    rejected. A class with fewer entries than requested inserts what is
    available with a warning.

    Parameters
    ----------
    frame
        Frame to augment.
    database
        Ground truth database.
    counts
        Number of objects to draw per class id.
    seed
        Seed of the draw.
    """
    rng = np.random.default_rng(seed)
    drawn: list[GtEntry] = []
    for class_id in sorted(counts):
        candidates = database.for_class(class_id)
        requested = int(counts[class_id])
        if len(candidates) < requested:
            warnings.warn(
                f"Ground truth database holds {len(candidates)} entries of class "
                f"{class_id}, {requested} were requested.",
                stacklevel=2,
            )
        take = min(requested, len(candidates))
        if take:
            chosen = rng.choice(len(candidates), size=take, replace=False)
            drawn.extend(candidates[i] for i in chosen)

    boxes, points, inserted = _insert(frame, drawn)
    LOGGER.debug(
        "Inserted %d of %d drawn objects into frame %d.",
        inserted,
        len(drawn),
        frame.frame_id,
    )
    return frame.replace(
        radar=RadarPointCloud.from_points(np.concatenate(points)), boxes=boxes
    )


def _transform_boxes(frame: Frame, transform) -> list[Box3D]:  # noqa: ANN001
    return [transform(box) for box in frame.boxes]


def global_flip_y(frame: Frame) -> Frame:
    """
    Mirror a frame across the ``x`` axis: ``y``, yaw and lateral velocities
    change sign, Doppler values are kept.
    """
    radar = frame.radar.copy()
    radar.points[:, 1] = -radar.points[:, 1]
    lidar = frame.lidar.copy()
    lidar[:, 1] = -lidar[:, 1]
    return frame.replace(
        radar=radar,
        lidar=lidar,
        ego_velocity=(frame.ego_velocity[0], -frame.ego_velocity[1]),
        yaw_rate=-frame.yaw_rate,
        boxes=_transform_boxes(
            frame, lambda b: b.replace(cy=-b.cy, yaw=-b.yaw, vy=-b.vy)
        ),
    )


def global_rotate(frame: Frame, angle: float) -> Frame:
    """
    Rotate a frame about the sensor origin: point and box positions, yaws and
    box velocities rotate, Doppler values are kept.
    """
    radar = frame.radar.copy()
    radar.points = rotate_xy(radar.points, angle)

    def rotate_box(box: Box3D) -> Box3D:
        cx, cy = rotate_xy(np.array([[box.cx, box.cy]]), angle)[0]
        vx, vy = rotate_xy(np.array([[box.vx, box.vy]]), angle)[0]
        return box.replace(cx=cx, cy=cy, yaw=box.yaw + angle, vx=vx, vy=vy)

    return frame.replace(
        radar=radar,
        lidar=rotate_xy(frame.lidar, angle),
        ego_velocity=tuple(rotate_xy(np.array([frame.ego_velocity]), angle)[0]),
        boxes=_transform_boxes(frame, rotate_box),
    )


def global_scale(frame: Frame, scale: float) -> Frame:
    """
    Scale positions, box centres and box sizes of a frame; Doppler values and
    velocities are kept.
    """
    if scale <= 0:
        raise ValidationError(f"Scale factor must be positive, got {scale}")
    radar = frame.radar.copy()
    radar.points[:, :3] *= scale
    return frame.replace(
        radar=radar,
        lidar=frame.lidar * scale,
        boxes=_transform_boxes(
            frame,
            lambda b: b.replace(
                cx=b.cx * scale,
                cy=b.cy * scale,
                cz=b.cz * scale,
                length=b.length * scale,
                width=b.width * scale,
                height=b.height * scale,
            ),
        ),
    )


def random_global_augment(
    frame: Frame,
    config: AugmentConfig | None = None,
    seed: int | np.random.Generator | None = 0,
) -> Frame:
    """
    Apply a random flip, a uniform rotation in
    ``[-max_rotation, max_rotation]`` and a uniform scaling in
    ``[scale_min, scale_max]``.
    """
    config = config or AugmentConfig()
    rng = np.random.default_rng(seed)
    if rng.random() < config.flip_probability:
        frame = global_flip_y(frame)
    frame = global_rotate(frame, rng.uniform(-config.max_rotation, config.max_rotation))
    return global_scale(frame, rng.uniform(config.scale_min, config.scale_max))


def foreground_count(frame: Frame) -> int:
    """Return the number of radar points lying inside any box of a frame."""
    foreground, _ = split_fg_bg(frame.radar, frame.boxes)
    return foreground.valid_count


def polar_mix_fill(
    frame: Frame,
    database: GtDatabase,
    target_fg_points: int,
    sectors: int = 8,
    seed: int | np.random.Generator | None = 0,
) -> Frame:
    """
    Fill a sparse frame with stored objects sector by sector.

    The azimuth circle is split into ``sectors`` equal sectors visited in
    random order; every database object whose box centre falls in the
    visited sector is inserted unless it collides. Filling stops once the
    frame holds ``target_fg_points`` foreground points or every sector was
    visited. Objects of the frame itself are never reinserted.
    """
    if sectors < 1:
        raise ValidationError(f"Sector count must be positive, got {sectors}")
    if foreground_count(frame) >= target_fg_points:
        return frame

    rng = np.random.default_rng(seed)
    candidates = [
        entry for entry in database.entries if entry.frame_id != frame.frame_id
    ]
    centres = np.array([[entry.box.cx, entry.box.cy] for entry in candidates])
    sector_of = (azimuth(centres.reshape(-1, 2)) + math.pi) / (2.0 * math.pi)
    sector_of = np.minimum((sector_of * sectors).astype(np.int64), sectors - 1)
    for sector in rng.permutation(sectors):
        entries = [candidates[i] for i in np.flatnonzero(sector_of == sector)]
        if not entries:
            continue
        boxes, points, inserted = _insert(frame, entries)
        frame = frame.replace(
            radar=RadarPointCloud.from_points(np.concatenate(points)), boxes=boxes
        )
        LOGGER.debug("Sector %d contributed %d objects.", sector, inserted)
        if foreground_count(frame) >= target_fg_points:
            break
    return frame


def fuse(foreground: RadarPointCloud, background: RadarPointCloud) -> RadarPointCloud:
    """
    Concatenate the valid points of a foreground and a background cloud,
    tagging every point with its provenance.

    Examples
    --------
    ```
    >>> fg = RadarPointCloud.from_points([[1, 0, 0, 0, 0]])
    >>> bg = RadarPointCloud.from_points([[2, 0, 0, 0, 0], [3, 0, 0, 0, 0]])
    >>> fuse(fg, bg).provenance
    array([1, 2, 2], dtype=int8)

    ```
    """
    provenance = np.repeat(
        np.array([Provenance.FOREGROUND, Provenance.BACKGROUND], dtype=np.int8),
        [foreground.valid_count, background.valid_count],
    )
    return RadarPointCloud(
        np.concatenate([foreground.valid_points(), background.valid_points()]),
        np.ones(len(provenance), dtype=bool),
        provenance,
    )
