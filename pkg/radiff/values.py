"""
Values
=======

Defines enums that represent allowed values of the fields used across radar
frames, configurations and commands.

"""

from __future__ import annotations

import enum
from enum import Enum

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "Profile",
    "Task",
    "ScheduleKind",
    "FeatureChannel",
    "Provenance",
    "DiffusionSpace",
    "ObjectClass",
]


class Profile(Enum):
    """
    Represents the named range profiles a dataset can be generated for.

    Examples
    --------
    ```
    >>> from radiff.values import Profile
    >>> Profile("vod").default_sweeps()
    5
    >>> Profile.all()
    ['vod', 'truckscenes', 'toy']

    ```
    """

    VOD = "vod"
    TRUCKSCENES = "truckscenes"
    TOY = "toy"

    def default_sweeps(self) -> int:
        """Return the number of aggregated radar sweeps used with the profile."""
        if self == Profile.VOD:
            return 5
        elif self == Profile.TRUCKSCENES:
            return 6
        elif self == Profile.TOY:
            return 1
        raise NotImplementedError()

    @classmethod
    def all(cls) -> list[str]:
        """Return a list of all valid profile names."""
        return [e.value for e in cls]


class Task(Enum):
    """
    Represents the two generation tasks: foreground points conditioned on
    boxes, and background points conditioned on *LiDAR* points.
    """

    FOREGROUND = "fg"
    BACKGROUND = "bg"


class ScheduleKind(Enum):
    """
    Represents the supported learning rate schedules.
    """

    ONE_CYCLE = "one-cycle"
    STEP_DECAY = "step-decay"
    CONSTANT = "constant"


class FeatureChannel(enum.Enum):
    """
    Represents the radar feature channels following the position channels.

    Examples
    --------
    ```
    >>> from radiff.values import FeatureChannel
    >>> FeatureChannel.RCS.column()
    4

    ```
    """

    DOPPLER = "doppler"
    RCS = "rcs"

    def column(self) -> int:
        """Return the column of the channel in an *N x 5* point array."""
        return 3 if self == FeatureChannel.DOPPLER else 4


class Provenance(enum.IntEnum):
    """
    Represents where a point of a fused cloud came from.
    """

    FOREGROUND = 1
    BACKGROUND = 2


class DiffusionSpace(Enum):
    """
    Represents the space the denoiser operates in: *VAE* latents or the
    normalized point set itself.
    """

    LATENT = "latent"
    POINT = "point"


class ObjectClass(enum.IntEnum):
    """
    Represents the object classes emitted by the scene generator. Class ids
    start at 1, id 0 is reserved for the global layout object.
    """

    CAR = 1
    PEDESTRIAN = 2
    CYCLIST = 3
