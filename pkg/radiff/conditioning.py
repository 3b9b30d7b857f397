"""
Conditioning
============

Defines the two condition encoders of the denoiser:

-   the layout encoder, embedding a fixed size set of normalized 3D boxes
    whose first object covers the whole scene and provides the global
    condition embedding,
-   the pillar encoder, bucketing *LiDAR* points into bird's-eye view pillars
    whose pooled features become the condition tokens.

Both return a :class:`radiff.diffusion.Condition`.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from radiff.config import LayoutConfig, PillarConfig, RunConfig
from radiff.diffusion import Condition
from radiff.errors import ConfigurationError, ValidationError
from radiff.frames import Box3D, Frame, RangeSpec
from radiff.numcore import (
    MLP,
    Embedding,
    LayerNorm,
    Linear,
    Module,
    ModuleList,
    Tensor,
    TransformerBlock,
    sinusoidal_embedding,
)
from radiff.values import Task
from radiff.vae import fps_downsample

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "GLOBAL_CLASS",
    "GLOBAL_OBJECT",
    "normalize_box",
    "denormalize_box",
    "LayoutSet",
    "build_layout_set",
    "LayoutEncoder",
    "PillarGrid",
    "pillarize",
    "PillarEncoder",
    "make_condition_encoder",
    "condition_for_frame",
]

GLOBAL_CLASS = 0

GLOBAL_OBJECT = np.array([0.5, 0.5, 0.5, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5])
"""Normalized box of the global object: the full range, zero yaw and velocity."""


def normalize_box(
    box: Box3D, spec: RangeSpec, v_max: float = 30.0, size_max: float = 25.0
) -> np.ndarray:
    """
    Map a box onto the unit hypercube ``[0, 1]^9``.

    The centre is mapped per axis from the range, the sizes from
    ``(0, size_max]``, the yaw from ``(-pi, pi]`` and the velocity from
    ``[-v_max, v_max]``. Sizes and velocities beyond their bounds are clipped.

    Raises
    ------
    :class:`ValidationError`
        If the box centre lies outside the range.

    Examples
    --------
    ```
    >>> from radiff.values import Profile
    >>> spec = RangeSpec.for_profile(Profile.TOY)
    >>> normalize_box(Box3D(10.0, 0.0, 0.0, 5.0, 2.5, 2.5), spec)
    array([0.5, 0.5, 0.5, 0.2, 0.1, 0.1, 0.5, 0.5, 0.5])

    ```
    """
    centre = box.centre
    if not spec.contains(centre[None, :])[0]:
        raise ValidationError(f"Box centre {centre.tolist()} lies outside the range")
    lowers = np.array([axis.lower for axis in spec.axes])
    spans = np.array([axis.span for axis in spec.axes])
    return np.concatenate(
        [
            (centre - lowers) / spans,
            np.clip(box.size / size_max, 0.0, 1.0),
            [(box.yaw + math.pi) / (2.0 * math.pi)],
            np.clip((box.velocity + v_max) / (2.0 * v_max), 0.0, 1.0),
        ]
    )


def denormalize_box(
    vector: npt.ArrayLike,
    spec: RangeSpec,
    v_max: float = 30.0,
    size_max: float = 25.0,
    class_id: int = 1,
) -> Box3D:
    """Inverse of :func:`normalize_box`."""
    b = np.asarray(vector, dtype=np.float64)
    lowers = np.array([axis.lower for axis in spec.axes])
    spans = np.array([axis.span for axis in spec.axes])
    centre = b[:3] * spans + lowers
    size = b[3:6] * size_max
    velocity = b[7:9] * 2.0 * v_max - v_max
    return Box3D(
        *centre,
        *size,
        yaw=b[6] * 2.0 * math.pi - math.pi,
        vx=velocity[0],
        vy=velocity[1],
        class_id=class_id,
    )


@dataclass
class LayoutSet:
    """
    Represents a fixed size set of layout objects.

    Parameters
    ----------
    boxes
        ``n x 9`` normalized boxes; row 0 is the global object and padding
        rows are zero.
    classes
        ``n`` class ids: ``0`` for the global object, ``C + 1`` for padding.
    count
        Number of annotated boxes held.
    truncated
        Whether boxes were dropped to fit the set.
    """

    boxes: np.ndarray
    classes: np.ndarray
    count: int
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.classes)


def build_layout_set(
    boxes: Sequence[Box3D],
    n: int,
    spec: RangeSpec,
    config: LayoutConfig | None = None,
    seed: int | np.random.Generator | None = 0,
) -> LayoutSet:
    """
    Build the layout set ``[global object, boxes..., padding...]`` of exactly
    ``n`` objects.

    A frame with more than ``n - 1`` boxes keeps a uniform random subset, in
    their original order, and the set is flagged as truncated.

    Examples
    --------
    ```
    >>> from radiff.values import Profile
    >>> layout = build_layout_set([], 8, RangeSpec.for_profile(Profile.TOY))
    >>> layout.classes
    array([0, 4, 4, 4, 4, 4, 4, 4])

    ```
    """
    config = config or LayoutConfig()
    if n < 2:
        raise ConfigurationError(f"A layout set needs at least two objects, got {n}")
    selected = list(boxes)
    truncated = len(selected) > n - 1
    if truncated:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(selected), size=n - 1, replace=False))
        warnings.warn(
            f"Frame holds {len(selected)} boxes but the layout set has {n - 1} "
            "slots, a random subset is kept.",
            stacklevel=2,
        )
        selected = [selected[index] for index in keep]

    vectors = np.zeros((n, 9))
    classes = np.full(n, config.num_classes + 1, dtype=np.int64)
    vectors[0] = GLOBAL_OBJECT
    classes[0] = GLOBAL_CLASS
    for index, box in enumerate(selected, start=1):
        if not 1 <= box.class_id <= config.num_classes:
            raise ValidationError(f"Unknown class id {box.class_id}")
        vectors[index] = normalize_box(box, spec, config.v_max, config.size_max)
        classes[index] = box.class_id
    return LayoutSet(vectors, classes, len(selected), truncated)


class LayoutEncoder(Module):
    """
    Represents the layout encoder: box and class embeddings are summed per
    object, then fused by self-attention layers without positional encoding.
    The fused global object is the global embedding and all fused objects are
    the condition tokens.

    Parameters
    ----------
    config
        Layout settings.
    width
        Embedding width, the condition width of the denoiser.
    seed
        Seed of the parameter initialization.
    """

    def __init__(
        self, config: LayoutConfig | None = None, width: int = 128, seed: int = 0
    ) -> None:
        self.config = config or LayoutConfig()
        rng = np.random.default_rng(seed)
        self.box_embedding = Linear(9, width, rng)
        self.class_embedding = Embedding(self.config.num_classes + 2, width, rng)
        self.fusion = ModuleList(
            [
                TransformerBlock(width, self.config.heads, rng)
                for _ in range(self.config.fusion_layers)
            ]
        )
        self.norm = LayerNorm(width)
        self.width = width

    def __call__(self, layout: LayoutSet) -> Condition:
        h = self.box_embedding(Tensor(layout.boxes))
        h = h + self.class_embedding(layout.classes)
        for block in self.fusion:
            h = block(h)
        tokens = self.norm(h)
        return Condition(global_embedding=tokens[0], tokens=tokens)


@dataclass
class PillarGrid:
    """
    Represents the non-empty bird's-eye view pillars of a *LiDAR* scan.

    Parameters
    ----------
    cells
        ``K x 2`` integer ``(ix, iy)`` cell indices in ascending row-major
        order.
    features
        ``K x P x 5`` point features ``(x, y, z, dx, dy)`` with the offsets to
        the pillar centre; empty slots are zero.
    mask
        ``K x P`` flags of the occupied slots.
    centres
        ``K x 2`` pillar centres in meters.
    spec
        Range the grid covers.
    cell
        Pillar edge length in meters.
    """

    cells: np.ndarray
    features: np.ndarray
    mask: np.ndarray
    centres: np.ndarray
    spec: RangeSpec
    cell: float

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, int]:
        """Grid extent ``(H, W)`` in cells along ``x`` and ``y``."""
        return (
            math.ceil(self.spec.x.span / self.cell),
            math.ceil(self.spec.y.span / self.cell),
        )

    @property
    def point_count(self) -> int:
        """Number of points held by the pillars."""
        return int(self.mask.sum())


def pillarize(
    lidar: npt.ArrayLike,
    spec: RangeSpec,
    cell: float = 0.8,
    points_per_pillar: int = 16,
    seed: int | np.random.Generator | None = 0,
) -> PillarGrid:
    """
    Bucket *LiDAR* points into bird's-eye view pillars.

    Cells are half-open ``[lower, upper)`` along ``x`` and ``y``; points
    outside the range are dropped and a pillar holding more than
    ``points_per_pillar`` points keeps a seeded random subset.

    Examples
    --------
    ```
    >>> from radiff.values import Profile
    >>> grid = pillarize([[0.8, 0.0, 0.0]], RangeSpec.for_profile(Profile.TOY))
    >>> grid.cells
    array([[ 1, 12]])

    ```
    """
    if cell <= 0 or points_per_pillar < 1:
        raise ConfigurationError(
            f"Pillars need a positive cell size and capacity, got {cell} and "
            f"{points_per_pillar}"
        )
    rng = np.random.default_rng(seed)
    points = np.asarray(lidar, dtype=np.float64).reshape(-1, 3)
    height = math.ceil(spec.x.span / cell)
    width = math.ceil(spec.y.span / cell)

    ix = np.floor((points[:, 0] - spec.x.lower) / cell).astype(np.int64)
    iy = np.floor((points[:, 1] - spec.y.lower) / cell).astype(np.int64)
    inside = (
        spec.x.contains(points[:, 0])
        & spec.y.contains(points[:, 1])
        & (points[:, 0] < spec.x.upper)
        & (points[:, 1] < spec.y.upper)
        & spec.z.contains(points[:, 2])
        & (ix >= 0)
        & (ix < height)
        & (iy >= 0)
        & (iy < width)
    )
    points, ix, iy = points[inside], ix[inside], iy[inside]
    keys, inverse = np.unique(ix * width + iy, return_inverse=True)

    count = len(keys)
    features = np.zeros((count, points_per_pillar, 5))
    mask = np.zeros((count, points_per_pillar), dtype=bool)
    cells = np.stack([keys // width, keys % width], axis=1).reshape(-1, 2)
    centres = np.stack(
        [
            spec.x.lower + (cells[:, 0] + 0.5) * cell,
            spec.y.lower + (cells[:, 1] + 0.5) * cell,
        ],
        axis=1,
    ).reshape(-1, 2)
    for pillar in range(count):
        members = np.flatnonzero(inverse == pillar)
        if len(members) > points_per_pillar:
            members = np.sort(
                rng.choice(members, size=points_per_pillar, replace=False)
            )
        selected = points[members]
        features[pillar, : len(members), :3] = selected
        features[pillar, : len(members), 3:] = selected[:, :2] - centres[pillar]
        mask[pillar, : len(members)] = True
    return PillarGrid(cells, features, mask, centres, spec, cell)


class PillarEncoder(Module):
    """
    Represents the pillar encoder: a shared point network max-pooled per
    pillar, plus a sinusoidal encoding of the pillar centre. Pillars beyond
    the token budget are thinned by farthest point sampling of their centres;
    the mean token is the global embedding.

    Parameters
    ----------
    config
        Pillar settings.
    width
        Token width, the condition width of the denoiser; divisible by 4.
    seed
        Seed of the parameter initialization.
    """

    def __init__(
        self, config: PillarConfig | None = None, width: int = 128, seed: int = 0
    ) -> None:
        self.config = config or PillarConfig()
        if width % 4 != 0:
            raise ConfigurationError(
                f"Pillar token width must be divisible by 4, got {width}"
            )
        rng = np.random.default_rng(seed)
        self.point_network = MLP([5, self.config.hidden, self.config.hidden], rng)
        self.projection = Linear(self.config.hidden, width, rng)
        self.width = width

    def select(self, grid: PillarGrid) -> np.ndarray:
        """Return the indices of the pillars kept as tokens."""
        if len(grid) <= self.config.max_tokens:
            return np.arange(len(grid))
        kept = fps_downsample(grid.centres, self.config.max_tokens, start=0).kept
        return np.sort(kept)

    def __call__(self, grid: PillarGrid) -> Condition:
        if not len(grid):
            return Condition(
                Tensor(np.zeros(self.width)), Tensor(np.zeros((0, self.width)))
            )

        keep = self.select(grid)
        features = grid.features[keep]
        mask = grid.mask[keep]
        # Empty slots repeat the first point of their pillar.
        features = np.where(mask[..., None], features, features[:, :1])
        positions = [
            axis.to_unit(features[..., i]) for i, axis in enumerate(grid.spec.axes)
        ]
        inputs = np.concatenate(
            [np.stack(positions, axis=-1), features[..., 3:] / grid.cell], axis=-1
        )
        pooled = self.point_network(Tensor(inputs)).max(axis=1)
        centres = grid.centres[keep]
        half = self.width // 2
        position = np.concatenate(
            [
                sinusoidal_embedding(centres[:, 0], half).data,
                sinusoidal_embedding(centres[:, 1], half).data,
            ],
            axis=-1,
        )
        tokens = self.projection(pooled) + position
        return Condition(global_embedding=tokens.mean(axis=0), tokens=tokens)


def make_condition_encoder(
    task: Task, config: RunConfig, seed: int = 0
) -> LayoutEncoder | PillarEncoder:
    """
    Return the condition encoder of a task: box layouts for the foreground,
    *LiDAR* pillars for the background.
    """
    width = config.diffusion.condition_width
    if Task(task) == Task.FOREGROUND:
        return LayoutEncoder(config.layout, width, seed)
    return PillarEncoder(config.pillars, width, seed)


def condition_for_frame(
    frame: Frame,
    task: Task,
    encoder: LayoutEncoder | PillarEncoder,
    config: RunConfig,
    seed: int | np.random.Generator | None = 0,
) -> Condition:
    """
    Encode the condition of a frame: its boxes for the foreground task, its
    *LiDAR* scan for the background task.

    Raises
    ------
    :class:`ValidationError`
        If the encoder does not serve the task.
    """
    spec = config.data.range_spec()
    if Task(task) == Task.FOREGROUND:
        if not isinstance(encoder, LayoutEncoder):
            raise ValidationError(
                "The foreground task is conditioned by a layout encoder"
            )
        layout = build_layout_set(
            frame.boxes, config.layout.objects, spec, config.layout, seed
        )
        return encoder(layout)
    if not isinstance(encoder, PillarEncoder):
        raise ValidationError("The background task is conditioned by a pillar encoder")
    grid = pillarize(
        frame.lidar, spec, config.pillars.cell, config.pillars.points_per_pillar, seed
    )
    return encoder(grid)
