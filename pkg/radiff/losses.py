"""
Losses
======

Defines the Chamfer distance and the training objective of the point
autoencoder: reconstruction (final and intermediate Chamfer terms plus the
feature term), density, cardinality and KL regularization.

Nearest neighbours are searched exhaustively, the results are exact.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt

from radiff.config import VaeConfig
from radiff.errors import ValidationError
from radiff.numcore import Tensor, as_tensor

if TYPE_CHECKING:
    from radiff.vae import DecoderStage, EncoderStage, LatentEncoding, Reconstruction

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "nearest_indices",
    "chamfer",
    "feature_loss",
    "stage_density_loss",
    "density_loss",
    "cardinality_loss",
    "kl_regularizer",
    "VaeLoss",
    "combine_vae_terms",
    "vae_loss",
]

CHUNK_SIZE = 1024


def _values(points: Tensor | npt.ArrayLike) -> np.ndarray:
    if isinstance(points, Tensor):
        return points.data
    return np.asarray(points, dtype=np.float64)


def nearest_indices(queries: npt.ArrayLike, references: npt.ArrayLike) -> np.ndarray:
    """
    Return for every query row the index of its nearest reference row by
    exhaustive search; ties resolve to the lowest index.

    Raises
    ------
    :class:`ValidationError`
        If there is no reference row.
    """
    a = np.asarray(queries, dtype=np.float64)
    b = np.asarray(references, dtype=np.float64)
    if not len(b):
        raise ValidationError("Cannot search nearest neighbours in an empty set")
    result = np.empty(len(a), dtype=np.int64)
    for start in range(0, len(a), CHUNK_SIZE):
        block = a[start : start + CHUNK_SIZE]
        distances = ((block[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
        result[start : start + CHUNK_SIZE] = np.argmin(distances, axis=1)
    return result


def chamfer(a: Tensor | npt.ArrayLike, b: Tensor | npt.ArrayLike) -> Tensor:
    """
    Return the Chamfer distance of two point sets: the mean squared distance
    of every point of ``a`` to its nearest point of ``b``, plus the symmetric
    term.

    Raises
    ------
    :class:`ValidationError`
        If either set is empty.

    Examples
    --------
    ```
    >>> chamfer([[0.0, 0.0, 0.0]], [[1.0, 0.0, 0.0]]).item()
    2.0

    ```
    """
    a, b = as_tensor(a), as_tensor(b)
    if not a.shape[0] or not b.shape[0]:
        raise ValidationError("Chamfer distance is undefined for empty point sets")
    forward = nearest_indices(a.data, b.data)
    backward = nearest_indices(b.data, a.data)
    a_to_b = a - b[forward]
    b_to_a = b - a[backward]
    return (a_to_b * a_to_b).sum(axis=1).mean() + (b_to_a * b_to_a).sum(axis=1).mean()


def feature_loss(
    features: Tensor | npt.ArrayLike,
    reconstructed_features: Tensor | npt.ArrayLike,
    positions: npt.ArrayLike,
    reconstructed_positions: Tensor | npt.ArrayLike,
) -> Tensor:
    """
    Return the mean squared feature error of every reconstructed point to its
    nearest ground truth point.

    Raises
    ------
    :class:`ValidationError`
        If the ground truth is empty.

    Examples
    --------
    ```
    >>> feature_loss(
    ...     [[0.0, 0.0]], [[0.5, -0.5]], [[0.0, 0.0, 0.0]], [[0.1, 0.0, 0.0]]
    ... ).item()
    0.5

    ```
    """
    truth = as_tensor(features)
    if not truth.shape[0]:
        raise ValidationError("Feature loss is undefined without ground truth points")
    assignment = nearest_indices(_values(reconstructed_positions), _values(positions))
    difference = truth[assignment] - as_tensor(reconstructed_features)
    return (difference * difference).sum(axis=1).mean()


def stage_density_loss(
    counts: npt.ArrayLike,
    mean_distances: npt.ArrayLike,
    predicted_counts: Tensor | npt.ArrayLike,
    predicted_mean_distances: Tensor | npt.ArrayLike,
    lambda_d: float = 50.0,
) -> Tensor:
    """
    Return the density loss of one stage from aligned ground truth and
    predicted collapsed set sizes and mean distances: the mean of
    ``|u - u~| + lambda_d |d - d~|``.

    Examples
    --------
    ```
    >>> stage_density_loss([3], [0.5], [2.0], [0.5]).item()
    1.0

    ```
    """
    counts = np.asarray(counts, dtype=np.float64)
    mean_distances = np.asarray(mean_distances, dtype=np.float64)
    count_error = (as_tensor(predicted_counts) - counts).abs()
    distance_error = (as_tensor(predicted_mean_distances) - mean_distances).abs()
    return (count_error + distance_error * lambda_d).mean()


def density_loss(
    encoder_stages: Sequence[EncoderStage],
    decoder_stages: Sequence[DecoderStage],
    lambda_d: float = 50.0,
) -> Tensor:
    """
    Return the density loss summed over stages. Every point upsampled by a
    decoder stage is compared to the nearest kept point of the matching
    encoder stage; the predicted set size is the continuous count minus the
    point itself.
    """
    if len(encoder_stages) != len(decoder_stages):
        raise ValidationError(
            f"Got {len(encoder_stages)} encoder stages but {len(decoder_stages)} "
            "decoder stages"
        )
    total = Tensor(0.0)
    for encoded, decoded in zip(encoder_stages, decoder_stages):
        match = nearest_indices(decoded.parent_positions.data, encoded.kept_positions)
        total = total + stage_density_loss(
            encoded.counts[match],
            encoded.mean_distances[match],
            decoded.count_raw - 1.0,
            decoded.predicted_mean_distances(),
            lambda_d,
        )
    return total


def cardinality_loss(counts: Sequence[int], predicted_counts: Sequence[int]) -> int:
    """
    Return the summed absolute difference of the per-stage point counts.

    Examples
    --------
    ```
    >>> cardinality_loss((100, 25), (90, 25))
    10

    ```
    """
    if len(counts) != len(predicted_counts):
        raise ValidationError(
            f"Got {len(counts)} stage counts but {len(predicted_counts)} predicted"
        )
    return int(sum(abs(int(a) - int(b)) for a, b in zip(counts, predicted_counts)))


def kl_regularizer(
    mean: Tensor | npt.ArrayLike, log_variance: Tensor | npt.ArrayLike
) -> Tensor:
    """
    Return the KL divergence of the diagonal Gaussian posterior to the
    standard normal, summed over dimensions and averaged over tokens.

    Examples
    --------
    ```
    >>> kl_regularizer([[1.0]], [[0.0]]).item()
    0.5

    ```
    """
    mean, log_variance = as_tensor(mean), as_tensor(log_variance)
    terms = mean * mean + log_variance.exp() - 1.0 - log_variance
    return (terms.sum(axis=-1) * 0.5).mean()


@dataclass
class VaeLoss:
    """
    Represents the autoencoder objective and its breakdown.

    Parameters
    ----------
    total
        Weighted objective.
    terms
        Unweighted values of every term plus the reconstruction and total.
    """

    total: Tensor
    terms: dict[str, float] = field(default_factory=dict)


def combine_vae_terms(
    chamfer_term: Tensor,
    intermediate_term: Tensor,
    feature_term: Tensor,
    density_term: Tensor,
    cardinality_term: float,
    kl_term: Tensor,
    config: VaeConfig | None = None,
) -> VaeLoss:
    """
    Weigh the loss terms into the objective:
    ``L_rec + lambda_den L_den + lambda_card L_card + lambda_reg L_reg`` with
    ``L_rec = CD + lambda_c CD_intermediate + lambda_f L_feat``.
    """
    config = config or VaeConfig()
    reconstruction = (
        chamfer_term
        + intermediate_term * config.lambda_c
        + feature_term * config.lambda_f
    )
    total = (
        reconstruction
        + density_term * config.lambda_den
        + kl_term * config.lambda_reg
        + config.lambda_card * float(cardinality_term)
    )
    terms = {
        "chamfer": chamfer_term.item(),
        "intermediate": intermediate_term.item(),
        "feature": feature_term.item(),
        "reconstruction": reconstruction.item(),
        "density": density_term.item(),
        "cardinality": float(cardinality_term),
        "kl": kl_term.item(),
        "total": total.item(),
    }
    return VaeLoss(total=total, terms=terms)


def vae_loss(
    points: npt.ArrayLike,
    reconstruction: Reconstruction,
    encoding: LatentEncoding,
    config: VaeConfig | None = None,
) -> VaeLoss:
    """
    Return the autoencoder objective of one cloud.

    Parameters
    ----------
    points
        ``n x 5`` normalized ground truth points.
    reconstruction
        Decoder output.
    encoding
        Encoder output holding the stage intermediates and the posterior.
    config
        Loss weights.

    Notes
    -----
    The intermediate ground truth ``P_s`` of level ``s`` is the input of the
    encoder stage ``s``, the kept points of the last stage for the structured
    latent level.
    """
    array = np.asarray(points, dtype=np.float64)
    stages = encoding.stages
    truths = [stage.positions for stage in stages] + [stages[-1].kept_positions]
    final = reconstruction.points

    chamfer_term = chamfer(final[:, :3], array[:, :3])
    intermediate_term = Tensor(0.0)
    for level, truth in zip(reconstruction.levels[1:], truths[1:]):
        intermediate_term = intermediate_term + chamfer(level, truth)
    feature_term = feature_loss(
        array[:, 3:], final[:, 3:], array[:, :3], final.data[:, :3]
    )
    density_term = density_loss(
        stages, reconstruction.stages, (config or VaeConfig()).lambda_d
    )
    cardinality_term = cardinality_loss(
        [len(truth) for truth in truths[:-1]],
        [level.shape[0] for level in reconstruction.levels[:-1]],
    )
    kl_term = kl_regularizer(encoding.mean, encoding.log_variance)
    return combine_vae_terms(
        chamfer_term,
        intermediate_term,
        feature_term,
        density_term,
        cardinality_term,
        kl_term,
        config,
    )
