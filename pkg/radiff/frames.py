"""
Frames
======

Defines the radar domain data model (point clouds, boxes, frames, range
specifications) and reading / writing of frames in the RDF text format.

An RDF document holds one frame, one record per line::

    #RDF v1
    meta frame_id=<u64> timestamp_us=<u64>
    ego vx=<f> vy=<f> yawrate=<f>
    pt <x> <y> <z> <doppler> <rcs>
    lpt <x> <y> <z>
    box <cx> <cy> <cz> <l> <w> <h> <yaw> <vx> <vy> <class_id>

Unknown record tags are an error.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from typing_extensions import Self

from radiff.errors import ParsingError, ValidationError
from radiff.geometry import wrap_angle
from radiff.parsing import (
    RDF_HEADER,
    ParserConfig,
    Record,
    RecordParsable,
    format_float,
    key_values,
    must_have,
    n_floats,
    record_parsers,
    register_record_parser,
    split_record,
)
from radiff.values import Profile, Provenance

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "Interval",
    "RangeSpec",
    "FeatureRanges",
    "RadarPointCloud",
    "Box3D",
    "Frame",
    "parse_frame",
    "format_frame",
    "read_frame",
    "write_frame",
    "load_frame",
    "save_frame",
    "frame_file_name",
    "read_dataset",
    "write_manifest",
    "read_manifest",
]


@dataclass(frozen=True)
class Interval:
    """
    Represents a closed interval ``[lower, upper]`` with ``lower < upper``.
    """

    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)) or not (
            self.lower < self.upper
        ):
            raise ValidationError(
                f"Degenerate interval [{self.lower}, {self.upper}], lower bound "
                "must be strictly below the upper bound"
            )

    @property
    def span(self) -> float:
        """Width of the interval."""
        return self.upper - self.lower

    @property
    def centre(self) -> float:
        """Midpoint of the interval."""
        return (self.lower + self.upper) / 2.0

    def contains(self, values: npt.ArrayLike) -> np.ndarray:
        """Return the mask of ``values`` lying in the interval."""
        array = np.asarray(values, dtype=np.float64)
        return (array >= self.lower) & (array <= self.upper)

    def to_unit(self, values: npt.ArrayLike) -> np.ndarray:
        """Map the interval affinely onto ``[-1, 1]``."""
        array = np.asarray(values, dtype=np.float64)
        return 2.0 * (array - self.lower) / self.span - 1.0

    def from_unit(self, values: npt.ArrayLike) -> np.ndarray:
        """Inverse of :meth:`to_unit`."""
        array = np.asarray(values, dtype=np.float64)
        return (array + 1.0) / 2.0 * self.span + self.lower


@dataclass(frozen=True)
class RangeSpec:
    """
    Represents the spatial range radar points are clipped to.

    Parameters
    ----------
    x, y, z
        Per-axis intervals in meters.
    profile
        Named profile the range belongs to.

    Examples
    --------
    ```
    >>> from radiff.values import Profile
    >>> RangeSpec.for_profile(Profile.VOD).x
    Interval(lower=0.0, upper=51.2)

    ```
    """

    x: Interval
    y: Interval
    z: Interval
    profile: Profile = Profile.TOY

    @classmethod
    def for_profile(cls, profile: Profile) -> RangeSpec:
        """Return the range of the given named profile."""
        if profile == Profile.VOD:
            return cls(
                Interval(0.0, 51.2), Interval(-25.6, 25.6), Interval(-3.0, 2.0), profile
            )
        if profile == Profile.TRUCKSCENES:
            return cls(
                Interval(-75.0, 75.0),
                Interval(-75.0, 75.0),
                Interval(-2.5, 4.5),
                profile,
            )
        return cls(
            Interval(0.0, 20.0), Interval(-10.0, 10.0), Interval(-2.0, 2.0), profile
        )

    @property
    def axes(self) -> tuple[Interval, Interval, Interval]:
        """The three intervals in ``(x, y, z)`` order."""
        return self.x, self.y, self.z

    def contains(self, points: npt.ArrayLike) -> np.ndarray:
        """Return the mask of points whose ``(x, y, z)`` lie inside the range."""
        array = np.asarray(points, dtype=np.float64)
        if array.size == 0:
            return np.zeros(len(array), dtype=bool)
        return (
            self.x.contains(array[:, 0])
            & self.y.contains(array[:, 1])
            & self.z.contains(array[:, 2])
        )

    def corners(self) -> np.ndarray:
        """Return the eight corner points of the range as an 8 x 3 array."""
        return np.array(
            list(
                itertools.product(
                    (self.x.lower, self.x.upper),
                    (self.y.lower, self.y.upper),
                    (self.z.lower, self.z.upper),
                )
            )
        )


@dataclass(frozen=True)
class FeatureRanges:
    """
    Represents the value ranges the Doppler (m/s) and RCS (dBsm) channels are
    normalized from.
    """

    doppler: Interval = field(default_factory=lambda: Interval(-30.0, 30.0))
    rcs: Interval = field(default_factory=lambda: Interval(-40.0, 20.0))


@dataclass
class RadarPointCloud:
    """
    Represents an ordered set of radar points with a validity mask.

    Parameters
    ----------
    points
        ``N x 5`` array of ``(x, y, z, doppler, rcs)``; positions in meters,
        compensated Doppler in m/s (positive is receding), RCS in dBsm.
    mask
        ``N`` validity flags, ``False`` marks padding.
    provenance
        Optional ``N`` :class:`~radiff.values.Provenance` codes of fused
        clouds; never written to RDF.
    """

    points: np.ndarray
    mask: np.ndarray
    provenance: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 5)
        self.mask = np.asarray(self.mask, dtype=bool).reshape(-1)
        if len(self.mask) != len(self.points):
            raise ValidationError(
                f"Point cloud has {len(self.points)} points but {len(self.mask)} "
                "mask entries"
            )

    @classmethod
    def from_points(cls, points: npt.ArrayLike) -> Self:
        """Return a cloud whose points are all valid."""
        array = np.asarray(points, dtype=np.float64).reshape(-1, 5)
        return cls(points=array, mask=np.ones(len(array), dtype=bool))

    @classmethod
    def empty(cls) -> Self:
        """Return a cloud without points."""
        return cls.from_points(np.zeros((0, 5)))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def valid_count(self) -> int:
        """Number of valid (non-padding) points."""
        return int(self.mask.sum())

    def valid_points(self) -> np.ndarray:
        """Return the ``n x 5`` array of valid points."""
        return self.points[self.mask]

    @property
    def positions(self) -> np.ndarray:
        """``(x, y, z)`` of the valid points."""
        return self.valid_points()[:, :3]

    def copy(self) -> RadarPointCloud:
        """Return a deep copy."""
        return RadarPointCloud(
            self.points.copy(),
            self.mask.copy(),
            None if self.provenance is None else self.provenance.copy(),
        )

    def with_provenance(self, provenance: Provenance) -> RadarPointCloud:
        """Return a copy whose points are all tagged with ``provenance``."""
        cloud = self.copy()
        cloud.provenance = np.full(len(cloud), int(provenance), dtype=np.int8)
        return cloud


@dataclass(frozen=True)
class Box3D(RecordParsable):
    """
    Represents an oriented 3D bounding box.

    Parameters
    ----------
    cx, cy, cz
        Centre in meters.
    length, width, height
        Strictly positive extents along the box x, y and z axes in meters.
    yaw
        Heading in radians, wrapped to ``(-pi, pi]``.
    vx, vy
        Planar velocity in m/s.
    class_id
        Object class id in ``[1, C]``.
    """

    cx: float
    cy: float
    cz: float
    length: float
    width: float
    height: float
    yaw: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    class_id: int = 1

    def __post_init__(self) -> None:
        if not (self.length > 0 and self.width > 0 and self.height > 0):
            raise ValidationError(
                f"Box sizes must be strictly positive, got "
                f"({self.length}, {self.width}, {self.height})"
            )
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def centre(self) -> np.ndarray:
        """Centre ``(cx, cy, cz)``."""
        return np.array([self.cx, self.cy, self.cz])

    @property
    def size(self) -> np.ndarray:
        """Extents ``(length, width, height)``."""
        return np.array([self.length, self.width, self.height])

    @property
    def velocity(self) -> np.ndarray:
        """Planar velocity ``(vx, vy)``."""
        return np.array([self.vx, self.vy])

    def as_array(self) -> np.ndarray:
        """Return the 10 values of the box in RDF field order."""
        return np.array(
            [
                self.cx, self.cy, self.cz, self.length, self.width, self.height,
                self.yaw, self.vx, self.vy, float(self.class_id),
            ]
        )

    @classmethod
    def from_array(cls, values: npt.ArrayLike) -> Self:
        """Inverse of :meth:`as_array`."""
        v = np.asarray(values, dtype=np.float64)
        return cls(*map(float, v[:9]), class_id=int(round(v[9])))

    def replace(self, **changes: float) -> Box3D:
        """Return a copy with the given fields replaced."""
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return Box3D(**values)

    @classmethod
    def from_record(cls, record: Record, config: ParserConfig) -> Self:
        """
        Parse and return the box from the given ``box`` record.

        Raises
        ------
        :class:`ParsingError`
            If the record does not hold ten numeric fields.
        :class:`ValidationError`
            If the class id is unknown or a size is not positive.
        """
        values = n_floats(record, 10)
        class_value = values[9]
        known = 1 <= class_value <= config.num_classes
        if class_value != int(class_value) or not known:
            raise ValidationError(
                f"Line {record.line_number}: unknown class id {record.fields[9]}, "
                f"expected an integer in [1, {config.num_classes}]"
            )
        try:
            return cls(*values[:9], class_id=int(class_value))
        except ValidationError as error:
            raise ValidationError(f"Line {record.line_number}: {error}") from None

    def to_record(self, config: ParserConfig) -> str:  # noqa: D102
        fields = " ".join(format_float(v, config) for v in self.as_array()[:9])
        return f"box {fields} {self.class_id}"


register_record_parser("box")(Box3D.from_record)


@dataclass
class Frame:
    """
    Represents one radar frame with its context.

    Parameters
    ----------
    frame_id
        Unsigned frame identifier.
    timestamp_us
        Timestamp in microseconds.
    ego_velocity
        Planar ego velocity ``(vx, vy)`` in m/s.
    yaw_rate
        Ego yaw rate in rad/s.
    radar
        Radar point cloud.
    lidar
        ``L x 3`` *LiDAR* points.
    boxes
        Annotated boxes.
    """

    frame_id: int = 0
    timestamp_us: int = 0
    ego_velocity: tuple[float, float] = (0.0, 0.0)
    yaw_rate: float = 0.0
    radar: RadarPointCloud = field(default_factory=RadarPointCloud.empty)
    lidar: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    boxes: list[Box3D] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.lidar = np.asarray(self.lidar, dtype=np.float64).reshape(-1, 3)
        if self.frame_id < 0 or self.timestamp_us < 0:
            raise ValidationError(
                f"Frame id and timestamp must be unsigned, got {self.frame_id} and "
                f"{self.timestamp_us}"
            )

    def replace(self, **changes) -> Frame:  # noqa: ANN003
        """Return a shallow copy with the given fields replaced."""
        values = {
            "frame_id": self.frame_id,
            "timestamp_us": self.timestamp_us,
            "ego_velocity": self.ego_velocity,
            "yaw_rate": self.yaw_rate,
            "radar": self.radar,
            "lidar": self.lidar,
            "boxes": self.boxes,
        }
        values.update(changes)
        return Frame(**values)


@register_record_parser("pt")
def _parse_point(
    record: Record,
    config: ParserConfig,  # noqa: ARG001
) -> tuple[float, ...]:
    return n_floats(record, 5)


@register_record_parser("lpt")
def _parse_lidar_point(
    record: Record,
    config: ParserConfig,  # noqa: ARG001
) -> tuple[float, ...]:
    return n_floats(record, 3)


@register_record_parser("meta")
def _parse_meta(
    record: Record,
    config: ParserConfig,  # noqa: ARG001
) -> tuple[int, int]:
    pairs = key_values(record, ["frame_id", "timestamp_us"])
    try:
        frame_id, timestamp = int(pairs["frame_id"]), int(pairs["timestamp_us"])
    except ValueError:
        raise record.error(
            f"expected unsigned integers, found {record.fields}"
        ) from None
    if frame_id < 0 or timestamp < 0:
        raise record.error("frame id and timestamp must be unsigned")
    return frame_id, timestamp


@register_record_parser("ego")
def _parse_ego(
    record: Record,
    config: ParserConfig,  # noqa: ARG001
) -> tuple[float, float, float]:
    pairs = key_values(record, ["vx", "vy", "yawrate"])
    try:
        values = (float(pairs["vx"]), float(pairs["vy"]), float(pairs["yawrate"]))
    except ValueError:
        raise record.error(f"expected floats, found {record.fields}") from None
    if not np.all(np.isfinite(values)):
        raise record.error(f"non-finite value in {record.fields}")
    return values


def parse_frame(text: str, config: ParserConfig | None = None) -> Frame:
    """
    Read given string as an RDF document and return the resulting
    :class:`Frame`.

    Parameters
    ----------
    text
        String that contains the RDF document.
    config
        Additional settings for parsing the document.

    Raises
    ------
    :class:`ParsingError`
        If a line is malformed or carries an unknown tag; the message names
        the line number.
    :class:`ValidationError`
        If a box carries an unknown class id.

    Examples
    --------
    ```
    >>> frame = parse_frame("#RDF v1\\nmeta frame_id=3 timestamp_us=0\\n"
    ...                     "pt 1.0 2.0 0.5 -3.25 12.5\\n")
    >>> frame.radar.points[0, 3]
    -3.25

    ```
    """
    config = config or ParserConfig()
    lines = text.splitlines()
    if not lines or lines[0].strip() != RDF_HEADER:
        raise ParsingError(f"Line 1: expected header '{RDF_HEADER}'")

    meta: tuple[int, int] | None = None
    ego = (0.0, 0.0, 0.0)
    points: list[tuple[float, ...]] = []
    lidar: list[tuple[float, ...]] = []
    boxes: list[Box3D] = []
    for line_number, line in enumerate(lines[1:], start=2):
        record = split_record(line, line_number)
        if record is None:
            continue
        parser = record_parsers.get(record.tag)
        if parser is None:
            raise record.error("unknown record tag")
        value = parser(record, config)
        if record.tag == "pt":
            points.append(value)
        elif record.tag == "lpt":
            lidar.append(value)
        elif record.tag == "box":
            boxes.append(value)
        elif record.tag == "meta":
            if meta is not None:
                raise record.error("duplicate 'meta' record")
            meta = value
        elif record.tag == "ego":
            ego = value

    must_have(meta, "RDF document does not contain a 'meta' record")
    assert meta is not None  # noqa: S101
    return Frame(
        frame_id=meta[0],
        timestamp_us=meta[1],
        ego_velocity=(ego[0], ego[1]),
        yaw_rate=ego[2],
        radar=RadarPointCloud.from_points(
            np.array(points, dtype=np.float64).reshape(-1, 5)
        ),
        lidar=np.array(lidar, dtype=np.float64).reshape(-1, 3),
        boxes=boxes,
    )


def format_frame(frame: Frame, config: ParserConfig | None = None) -> str:
    """
    Return the RDF document of ``frame``. Only valid radar points are written;
    padding and provenance flags are dropped.
    """
    config = config or ParserConfig()

    def floats(values: Iterable[float]) -> str:
        return " ".join(format_float(float(v), config) for v in values)

    vx, vy = frame.ego_velocity
    lines = [
        RDF_HEADER,
        f"meta frame_id={frame.frame_id} timestamp_us={frame.timestamp_us}",
        f"ego vx={format_float(vx, config)} vy={format_float(vy, config)} "
        f"yawrate={format_float(frame.yaw_rate, config)}",
    ]
    lines.extend(f"pt {floats(p)}" for p in frame.radar.valid_points())
    lines.extend(f"lpt {floats(p)}" for p in frame.lidar)
    lines.extend(box.to_record(config) for box in frame.boxes)
    return "\n".join(lines) + "\n"


def read_frame(path: str | os.PathLike, config: ParserConfig | None = None) -> Frame:
    """
    Read given RDF file and return the resulting :class:`Frame`.

    Raises
    ------
    :class:`ParsingError`
        If the given file does not contain a valid RDF document.
    """
    with open(path, encoding="utf-8") as handle:
        return parse_frame(handle.read(), config)


def write_frame(
    frame: Frame, path: str | os.PathLike, config: ParserConfig | None = None
) -> None:
    """Write ``frame`` as an RDF document to ``path``."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(format_frame(frame, config))


load_frame = read_frame


def save_frame(
    frame: Frame, path: str | os.PathLike, config: ParserConfig | None = None
) -> None:
    """Alias of :func:`write_frame`."""
    write_frame(frame, path, config)


def frame_file_name(frame_id: int) -> str:
    """Return the file name frames are stored under in dataset directories."""
    return f"frame_{frame_id:06d}.rdf"


def read_dataset(
    directory: str | os.PathLike, config: ParserConfig | None = None
) -> list[Frame]:
    """
    Read every ``*.rdf`` file of ``directory`` in file name order.
    """
    names = sorted(name for name in os.listdir(directory) if name.endswith(".rdf"))
    return [read_frame(os.path.join(directory, name), config) for name in names]


def write_manifest(
    directory: str | os.PathLike,
    frame_ids: Sequence[int],
    **metadata,  # noqa: ANN003
) -> None:
    """
    Write the ``manifest.json`` of a dataset directory listing the frame ids
    and the given metadata (generator version, seed, profile...).
    """
    manifest = {**metadata, "frames": [frame_file_name(i) for i in frame_ids]}
    path = os.path.join(directory, "manifest.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_manifest(directory: str | os.PathLike) -> dict:
    """Read the ``manifest.json`` of a dataset directory."""
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as handle:
        return json.load(handle)
