"""
Metrics
=======

Defines the generation quality metrics:

-   :func:`cd`: Chamfer distance between two clouds,
-   :func:`cd_feature`: mean absolute Doppler or RCS error of every generated
    point to its nearest real point,
-   :func:`jsd_bev`: Jensen-Shannon divergence of the bird's-eye view
    occupancy of two cloud collections,
-   :func:`mmd`: minimum matching distance of two cloud collections.

Distances are computed in metric units on the denormalized clouds.
"""

from __future__ import annotations

import logging
import os
import warnings
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np
import numpy.typing as npt
from scipy.stats import entropy

from radiff.config import RunConfig
from radiff.errors import ValidationError
from radiff.frames import Frame, RadarPointCloud, RangeSpec, read_dataset
from radiff.losses import chamfer, nearest_indices
from radiff.numcore import no_grad
from radiff.values import FeatureChannel

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "MMD_DISPLAY_SCALE",
    "cd",
    "cd_feature",
    "bev_histogram",
    "jsd_bev",
    "mmd",
    "MetricReport",
    "evaluate_frames",
    "evaluate",
    "format_report",
]

LOGGER = logging.getLogger(__name__)

MMD_DISPLAY_SCALE = 1e4

CloudLike = RadarPointCloud | npt.ArrayLike


def _points(cloud: CloudLike) -> np.ndarray:
    if isinstance(cloud, RadarPointCloud):
        return cloud.valid_points()
    return np.asarray(cloud, dtype=np.float64)


def cd(real: CloudLike, generated: CloudLike) -> float:
    """
    Return the Chamfer distance between the positions of two clouds.

    Raises
    ------
    :class:`ValidationError`
        If either cloud is empty.

    Examples
    --------
    ```
    >>> cd([[0, 0, 0, 0, 0]], [[0, 0, 1, 0, 0]])
    2.0

    ```
    """
    with no_grad():
        return chamfer(_points(real)[:, :3], _points(generated)[:, :3]).item()


def cd_feature(
    real: CloudLike, generated: CloudLike, channel: FeatureChannel | str
) -> float:
    """
    Return the mean absolute difference of a feature channel between every
    generated point and its nearest real point by position.

    The metric is directional: it averages over the generated points.

    Raises
    ------
    :class:`ValidationError`
        If either cloud is empty.

    Examples
    --------
    ```
    >>> cd_feature([[0, 0, 0, 1.0, 0]], [[0, 0, 0, 1.5, 0]], "doppler")
    0.5

    ```
    """
    column = FeatureChannel(channel).column()
    a, b = _points(real), _points(generated)
    if not len(a) or not len(b):
        raise ValidationError("Feature distance is undefined for empty point sets")
    nearest = nearest_indices(b[:, :3], a[:, :3])
    return float(np.mean(np.abs(b[:, column] - a[nearest, column])))


def bev_histogram(
    clouds: Sequence[CloudLike], spec: RangeSpec, grid: int = 100
) -> np.ndarray:
    """
    Return the ``grid x grid`` bird's-eye view occupancy counts of all points
    of a collection over the range; points outside the range are ignored.
    """
    counts = np.zeros((grid, grid))
    for cloud in clouds:
        points = _points(cloud)
        if not len(points):
            continue
        histogram, _, _ = np.histogram2d(
            points[:, 0],
            points[:, 1],
            bins=grid,
            range=[[spec.x.lower, spec.x.upper], [spec.y.lower, spec.y.upper]],
        )
        counts += histogram
    return counts


def jsd_bev(
    real: Sequence[CloudLike],
    generated: Sequence[CloudLike],
    spec: RangeSpec,
    grid: int = 100,
) -> float:
    """
    Return the base-2 Jensen-Shannon divergence, in ``[0, 1]``, between the
    normalized bird's-eye view occupancy histograms of two collections.

    Raises
    ------
    :class:`ValidationError`
        If either collection holds no point inside the range.
    """
    p = bev_histogram(real, spec, grid).ravel()
    q = bev_histogram(generated, spec, grid).ravel()
    if not p.sum() or not q.sum():
        raise ValidationError("Occupancy divergence needs points in both collections")
    p, q = p / p.sum(), q / q.sum()
    divergence = entropy((p + q) / 2.0, base=2) - (
        entropy(p, base=2) + entropy(q, base=2)
    ) / 2.0
    return float(np.clip(divergence, 0.0, 1.0))


def mmd(real: Sequence[CloudLike], generated: Sequence[CloudLike]) -> float:
    """
    Return the minimum matching distance: the Chamfer distance of every real
    cloud to its closest generated cloud, averaged over the real clouds.

    Raises
    ------
    :class:`ValidationError`
        If either collection is empty.
    """
    if not len(real) or not len(generated):
        raise ValidationError(
            "Minimum matching distance needs two non-empty collections"
        )
    return float(np.mean([min(cd(a, b) for b in generated) for a in real]))


@dataclass
class MetricReport:
    """
    Represents the result of an evaluation; distances are in raw metric
    units.

    Parameters
    ----------
    cd, cd_doppler, cd_rcs
        Per frame metrics averaged over the paired frames.
    jsd
        Occupancy divergence of the two collections.
    mmd
        Minimum matching distance of the two collections.
    real_count, generated_count
        Number of frames evaluated on each side.
    frame_ids
        Identifiers of the evaluated frames.
    settings
        Configuration echo.
    """

    cd: float
    cd_doppler: float
    cd_rcs: float
    jsd: float
    mmd: float
    real_count: int
    generated_count: int
    frame_ids: list[int] = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Return the report as a *JSON* serializable mapping."""
        return asdict(self)


def evaluate_frames(
    real: Sequence[Frame], generated: Sequence[Frame], config: RunConfig | None = None
) -> MetricReport:
    """
    Evaluate generated frames against real frames paired by frame id.

    Frames present on one side only are skipped with a warning; pairs where
    either cloud is empty do not contribute to the per frame metrics.

    Raises
    ------
    :class:`ValidationError`
        If no frame pair holds points on both sides.
    """
    config = config or RunConfig()
    real_by_id = {frame.frame_id: frame for frame in real}
    generated_by_id = {frame.frame_id: frame for frame in generated}
    ids = sorted(real_by_id.keys() & generated_by_id.keys())
    if len(ids) != len(real_by_id) or len(ids) != len(generated_by_id):
        warnings.warn(
            f"Real and generated frame ids differ ({len(real_by_id)} real, "
            f"{len(generated_by_id)} generated), evaluating the {len(ids)} shared ids.",
            stacklevel=2,
        )

    real_clouds = [real_by_id[i].radar for i in ids]
    generated_clouds = [generated_by_id[i].radar for i in ids]
    pairs = [
        (a, b)
        for a, b in zip(real_clouds, generated_clouds)
        if a.valid_count and b.valid_count
    ]
    if not pairs:
        raise ValidationError("No frame pair holds points on both sides")
    LOGGER.info("Evaluating %d frame pairs.", len(pairs))

    spec = config.data.range_spec()
    return MetricReport(
        cd=float(np.mean([cd(a, b) for a, b in pairs])),
        cd_doppler=float(
            np.mean([cd_feature(a, b, FeatureChannel.DOPPLER) for a, b in pairs])
        ),
        cd_rcs=float(
            np.mean([cd_feature(a, b, FeatureChannel.RCS) for a, b in pairs])
        ),
        jsd=jsd_bev(real_clouds, generated_clouds, spec, config.metrics.grid),
        mmd=mmd([a for a, _ in pairs], [b for _, b in pairs]),
        real_count=len(real_clouds),
        generated_count=len(generated_clouds),
        frame_ids=ids,
        settings={
            "grid": config.metrics.grid,
            "jsd_log_base": 2,
            "units": "metric",
            "profile": config.data.profile.value,
        },
    )


def evaluate(
    real_directory: str | os.PathLike,
    generated_directory: str | os.PathLike,
    config: RunConfig | None = None,
) -> MetricReport:
    """Evaluate the frames of two dataset directories."""
    return evaluate_frames(
        read_dataset(real_directory), read_dataset(generated_directory), config
    )


def format_report(report: MetricReport) -> str:
    """
    Return a human readable summary of a report; the minimum matching
    distance is displayed multiplied by ``1e4``.
    """
    return "\n".join(
        [
            f"Frames        : {len(report.frame_ids)}",
            f"CD            : {report.cd:.6g}",
            f"CD Doppler    : {report.cd_doppler:.6g}",
            f"CD RCS        : {report.cd_rcs:.6g}",
            f"JSD           : {report.jsd:.6g}",
            f"MMD (x1e4)    : {report.mmd * MMD_DISPLAY_SCALE:.6g}",
        ]
    )
