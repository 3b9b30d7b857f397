"""
Radiff
======

Synthesizes 4D radar point clouds with two conditional latent diffusion
models: a foreground model conditioned on 3D bounding boxes and a background
model conditioned on *LiDAR* scans, whose outputs are fused into complete
frames.

The main functionality is exposed through the following methods:
-   :func:`radiff.read_frame`: Read a file in the RDF format and return the
    corresponding :class:`radiff.Frame`.
-   :func:`radiff.parse_frame`: Read a string that contains an RDF document
    and return the corresponding :class:`radiff.Frame`.
-   :func:`radiff.load_config`: Read a run configuration.
"""

from __future__ import annotations

__application_name__ = "Radiff"

__major_version__ = "0"
__minor_version__ = "1"
__change_version__ = "0"
__version__ = ".".join((__major_version__, __minor_version__, __change_version__))

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "read_frame",
    "parse_frame",
    "write_frame",
    "format_frame",
    "load_config",
    "RunConfig",
    "Frame",
    "Box3D",
    "RadarPointCloud",
    "RangeSpec",
    "FeatureRanges",
    "Interval",
    "PointVae",
    "Denoiser",
    "LayoutEncoder",
    "PillarEncoder",
    "MetricReport",
    "GtDatabase",
    "Profile",
    "Task",
    "FeatureChannel",
    "Provenance",
    "DiffusionSpace",
    "ObjectClass",
]

from .augment import GtDatabase
from .conditioning import LayoutEncoder, PillarEncoder
from .config import RunConfig, load_config
from .diffusion import Denoiser
from .frames import (
    Box3D,
    FeatureRanges,
    Frame,
    Interval,
    RadarPointCloud,
    RangeSpec,
    format_frame,
    parse_frame,
    read_frame,
    write_frame,
)
from .metrics import MetricReport
from .vae import PointVae
from .values import (
    DiffusionSpace,
    FeatureChannel,
    ObjectClass,
    Profile,
    Provenance,
    Task,
)
