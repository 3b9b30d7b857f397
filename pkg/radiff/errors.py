"""
Errors
======

Defines errors that are raised while parsing, validating and computing with
radar frames, models and checkpoints.

"""

from __future__ import annotations

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "RadiffError",
    "ParsingError",
    "ValidationError",
    "ShapeError",
    "ConfigurationError",
    "NumericalError",
    "CheckpointError",
    "TrainingDivergedError",
]


class RadiffError(Exception):
    """
    Base class of all errors raised by *radiff*.
    """


class ParsingError(RadiffError):
    """
    Indicates an error with parsing an RDF document, a config file or a
    checkpoint.
    """


class ValidationError(RadiffError):
    """
    Indicates a semantic error with the data, e.g. an unknown class id or a
    degenerate interval.
    """


class ShapeError(RadiffError, ValueError):
    """
    Indicates that the shapes of two tensors are incompatible for an operation.
    """


class ConfigurationError(RadiffError):
    """
    Indicates invalid hyper-parameters or unknown configuration keys.
    """


class NumericalError(RadiffError):
    """
    Indicates that a non-finite value was produced or consumed.
    """


class CheckpointError(ParsingError):
    """
    Indicates a corrupted checkpoint or a checkpoint of an unsupported format
    version.
    """


class TrainingDivergedError(NumericalError):
    """
    Indicates that a training run produced a non-finite loss.

    Parameters
    ----------
    message
        Error message.
    last_good_state
        Parameter state of the last epoch that finished with a finite loss.
    epoch
        Index of the epoch that diverged.
    """

    def __init__(self, message: str, last_good_state: dict, epoch: int) -> None:
        super().__init__(message)
        self.last_good_state = last_good_state
        self.epoch = epoch
