"""
Point Autoencoder
=================

Defines the density-preserving point variational autoencoder mapping
normalized radar clouds to a small latent token set and back.

The encoder downsamples the cloud in stages with farthest point sampling.
Every discarded point collapses into its nearest kept point ``p``, forming the
collapsed set ``C(p)``. Each stage fuses three embeddings of ``p``:

-   the density embedding of ``u = |C(p)|``,
-   the local position embedding of the offsets of ``C(p)`` to ``p``,
-   the ancestor embedding attending the previous stage features of
    ``C(p) + {p}``.

The decoder mirrors the encoder: every stage predicts an upsampling count per
point and offsets from learned slots, and a segmentation head recovers the
Doppler and RCS channels.

All clouds are processed on their valid points only.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from scipy.spatial import cKDTree

from radiff.config import VaeConfig
from radiff.errors import NumericalError, ValidationError
from radiff.frames import RadarPointCloud
from radiff.numcore import (
    MLP,
    Embedding,
    LayerNorm,
    Linear,
    Module,
    ModuleList,
    MultiHeadAttention,
    Parameter,
    Tensor,
    concat,
    no_grad,
    where,
)

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "CollapsedAssignment",
    "fps_downsample",
    "EncoderStage",
    "DecoderStage",
    "LatentEncoding",
    "Reconstruction",
    "DensityEmbedding",
    "LocalPositionEmbedding",
    "AncestorEmbedding",
    "EncoderBlock",
    "StructureNetwork",
    "DecoderBlock",
    "PointVae",
    "as_point_array",
]

LOGGER = logging.getLogger(__name__)


def as_point_array(points: RadarPointCloud | npt.ArrayLike) -> np.ndarray:
    """Return the valid points of a cloud, or the given rows, as ``n x 5`` array."""
    if isinstance(points, RadarPointCloud):
        return points.valid_points()
    return np.asarray(points, dtype=np.float64).reshape(-1, 5)


@dataclass
class CollapsedAssignment:
    """
    Represents the outcome of a downsampling step.

    Parameters
    ----------
    kept
        Indices of the kept points in the stage input, in selection order.
    owner
        For every input point, the position in ``kept`` of the kept point it
        collapsed into; kept points own themselves.
    """

    kept: np.ndarray
    owner: np.ndarray

    @property
    def counts(self) -> np.ndarray:
        """Sizes ``u = |C(p)|`` of the collapsed sets of the kept points."""
        return np.bincount(self.owner, minlength=len(self.kept)) - 1

    def members(self, index: int) -> np.ndarray:
        """Return the input indices of the collapsed set of ``kept[index]``."""
        members = np.flatnonzero(self.owner == index)
        return members[members != self.kept[index]]

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        """
        Return the collapsed sets as an ``m x c`` index array padded with the
        kept point index, and the ``m x c`` validity mask, ``c`` being the
        largest set size.
        """
        counts = self.counts
        width = int(counts.max()) if len(counts) else 0
        index = np.repeat(self.kept[:, None], width, axis=1)
        mask = np.zeros((len(self.kept), width), dtype=bool)
        discarded = np.ones(len(self.owner), dtype=bool)
        discarded[self.kept] = False
        members = np.flatnonzero(discarded)
        owners = self.owner[members]
        order = np.argsort(owners, kind="stable")
        members, owners = members[order], owners[order]
        starts = np.cumsum(counts) - counts
        slots = np.arange(len(members)) - starts[owners]
        index[owners, slots] = members
        mask[owners, slots] = True
        return index, mask

    def mean_distances(self, positions: np.ndarray) -> np.ndarray:
        """
        Return the mean distance of each collapsed set to its kept point, zero
        for empty sets.
        """
        distances = np.linalg.norm(positions - positions[self.kept][self.owner], axis=1)
        sums = np.bincount(self.owner, weights=distances, minlength=len(self.kept))
        return sums / np.maximum(self.counts, 1)


def fps_downsample(
    points: npt.ArrayLike,
    count: int,
    seed: int | np.random.Generator | None = None,
    start: int | None = None,
) -> CollapsedAssignment:
    """
    Select ``count`` points by greedy farthest point sampling and collapse
    every discarded point into its nearest kept point.

    Parameters
    ----------
    points
        ``n x k`` coordinates.
    count
        Number of points to keep.
    seed
        Seed of the random start index; index 0 starts when neither ``seed``
        nor ``start`` is given.
    start
        Explicit start index.

    Raises
    ------
    :class:`ValidationError`
        If ``count`` exceeds the number of points.

    Examples
    --------
    ```
    >>> import numpy as np
    >>> points = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [3.0, 0, 0]])
    >>> fps_downsample(points, 2, start=0).kept
    array([0, 3])

    ```
    """
    array = np.asarray(points, dtype=np.float64)
    n = len(array)
    if count > n or count < 0 or (n and count < 1):
        raise ValidationError(f"Cannot keep {count} of {n} points")
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return CollapsedAssignment(empty, empty.copy())
    if start is None:
        start = 0 if seed is None else int(np.random.default_rng(seed).integers(n))

    kept = np.empty(count, dtype=np.int64)
    kept[0] = start
    distances = ((array - array[start]) ** 2).sum(axis=1)
    distances[start] = -1.0
    for i in range(1, count):
        chosen = int(np.argmax(distances))
        kept[i] = chosen
        distances = np.minimum(distances, ((array - array[chosen]) ** 2).sum(axis=1))
        distances[chosen] = -1.0

    _, owner = cKDTree(array[kept]).query(array)
    owner = np.asarray(owner, dtype=np.int64)
    owner[kept] = np.arange(count)
    return CollapsedAssignment(kept=kept, owner=owner)


@dataclass
class EncoderStage:
    """
    Intermediates of one encoder stage.

    Parameters
    ----------
    positions
        Stage input coordinates ``P_s``.
    assignment
        Downsampling outcome.
    features
        Output features of the kept points.
    """

    positions: np.ndarray
    assignment: CollapsedAssignment
    features: Tensor

    @property
    def kept_positions(self) -> np.ndarray:
        """Coordinates ``P_{s+1}`` of the kept points."""
        return self.positions[self.assignment.kept]

    @property
    def counts(self) -> np.ndarray:
        """Collapsed set sizes of the kept points."""
        return self.assignment.counts

    @property
    def mean_distances(self) -> np.ndarray:
        """Mean collapsed set distances of the kept points."""
        return self.assignment.mean_distances(self.positions)


@dataclass
class DecoderStage:
    """
    Intermediates of one decoder stage.

    Parameters
    ----------
    parent_positions
        Coordinates of the points being upsampled.
    count_raw
        Continuous upsampling counts, before rounding.
    counts
        Upsampling counts ``k`` in ``[1, U_max]``.
    offsets
        ``m x (U_max - 1) x 3`` offsets of the slots beyond the parent.
    positions
        Coordinates of the upsampled points.
    features
        Features of the upsampled points.
    parents
        Parent index of every upsampled point.
    """

    parent_positions: Tensor
    count_raw: Tensor
    counts: np.ndarray
    offsets: Tensor
    positions: Tensor
    features: Tensor
    parents: np.ndarray

    def predicted_mean_distances(self) -> Tensor:
        """
        Mean offset length of the predicted collapsed sets, slots ``1 .. k-1``,
        zero for ``k = 1``.
        """
        slots = self.offsets.shape[1]
        mask = np.arange(slots)[None, :] < (self.counts - 1)[:, None]
        lengths = ((self.offsets * self.offsets).sum(axis=-1) + 1e-12).sqrt()
        return (lengths * mask).sum(axis=1) * (1.0 / np.maximum(self.counts - 1, 1))


@dataclass
class LatentEncoding:
    """
    Output of :meth:`PointVae.encode`.

    Parameters
    ----------
    mean
        ``M x d_z`` posterior means.
    log_variance
        ``M x d_z`` posterior log-variances.
    sample
        Reparameterized sample, the mean when encoding without generator.
    stages
        Encoder stage intermediates.
    """

    mean: Tensor
    log_variance: Tensor
    sample: Tensor
    stages: list[EncoderStage] = field(default_factory=list)


@dataclass
class Reconstruction:
    """
    Output of :meth:`PointVae.decode`.

    Parameters
    ----------
    points
        ``n x 5`` reconstructed points, features squashed to ``[-1, 1]``.
    levels
        Coordinates of every level, ``levels[s]`` mirroring the encoder
        stage input ``P_s`` and ``levels[S]`` the structured latent.
    stages
        Decoder stage intermediates, ``stages[s]`` producing ``levels[s]``.
    """

    points: Tensor
    levels: list[Tensor]
    stages: list[DecoderStage]

    def cloud(self) -> RadarPointCloud:
        """Return the reconstruction as a cloud."""
        return RadarPointCloud.from_points(self.points.data)


class DensityEmbedding(Module):
    """Embeds collapsed set sizes, scaled to ``[0, 1]`` by the stage cap."""

    def __init__(self, width: int, cap: int, rng: np.random.Generator) -> None:
        self.network = MLP([1, width, width], rng)
        self.cap = cap

    def __call__(self, counts: npt.ArrayLike) -> Tensor:
        scaled = np.minimum(np.asarray(counts, dtype=np.float64) / self.cap, 1.0)
        return self.network(Tensor(scaled.reshape(-1, 1)))


class LocalPositionEmbedding(Module):
    """
    Embeds the offsets (direction and distance) of collapsed sets to their
    kept point with a shared network, self-attention and a masked mean; empty
    sets map to a learned null token.

    Offsets are sorted canonically first, so that the embedding does not
    depend on the order of the set members.
    """

    def __init__(self, width: int, heads: int, rng: np.random.Generator) -> None:
        self.offset_network = MLP([4, width, width], rng)
        self.norm = LayerNorm(width)
        self.attention = MultiHeadAttention(width, heads, rng)
        self.null = Parameter(rng.normal(0.0, 0.02, width))
        self.width = width

    def __call__(self, offsets: npt.ArrayLike, mask: npt.ArrayLike) -> Tensor:
        """
        Parameters
        ----------
        offsets
            ``m x c x 3`` offsets of the set members to their kept point.
        mask
            ``m x c`` membership mask.
        """
        offsets = np.asarray(offsets, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        rows, width = mask.shape
        counts = mask.sum(axis=1)
        null = self.null.reshape(1, self.width).expand(rows, self.width)
        if width == 0:
            return null

        primary = np.where(mask, offsets[..., 0], np.inf)
        order = np.lexsort((offsets[..., 2], offsets[..., 1], primary), axis=-1)
        offsets = np.take_along_axis(offsets, order[..., None], axis=1)
        mask = np.take_along_axis(mask, order, axis=1)
        offsets = np.where(mask[..., None], offsets, 0.0)

        distances = np.linalg.norm(offsets, axis=-1, keepdims=True)
        directions = np.divide(
            offsets, distances, out=np.zeros_like(offsets), where=distances > 0
        )
        embedded = self.offset_network(
            Tensor(np.concatenate([directions, distances], axis=-1))
        )
        normed = self.norm(embedded)
        attended = embedded + self.attention(normed, normed, mask)
        weights = mask / np.maximum(counts, 1)[:, None]
        pooled = (attended * weights[..., None]).sum(axis=1)
        return where((counts > 0)[:, None], pooled, null)


class AncestorEmbedding(Module):
    """
    Aggregates the previous stage features of ``C(p) + {p}`` into ``p`` with
    attention, relative position encodings being added to keys and values.
    """

    def __init__(self, width: int, heads: int, rng: np.random.Generator) -> None:
        self.position_encoding = MLP([3, width, width], rng)
        self.norm = LayerNorm(width)
        self.attention = MultiHeadAttention(width, heads, rng)
        self.width = width

    def __call__(
        self,
        features: Tensor,
        positions: np.ndarray,
        kept: np.ndarray,
        index: np.ndarray,
        mask: np.ndarray,
    ) -> Tensor:
        """
        Parameters
        ----------
        features
            ``n x d`` stage input features.
        positions
            ``n x 3`` stage input coordinates.
        kept
            ``m`` kept point indices.
        index, mask
            Padded collapsed sets, see :meth:`CollapsedAssignment.padded`.
        """
        group = np.concatenate([kept[:, None], index], axis=1)
        group_mask = np.concatenate([np.ones((len(kept), 1), dtype=bool), mask], axis=1)
        relative = positions[group] - positions[kept][:, None, :]
        normed = self.norm(features)
        keys_values = normed[group] + self.position_encoding(Tensor(relative))
        queries = normed[kept].reshape(len(kept), 1, self.width)
        attended = self.attention(queries, keys_values, group_mask)
        return features[kept] + attended.reshape(len(kept), self.width)


class EncoderBlock(Module):
    """
    Represents one downsampling stage: farthest point sampling, then fusion of
    the density, local position and ancestor embeddings with the kept point
    coordinates.
    """

    def __init__(
        self, width: int, heads: int, factor: int, rng: np.random.Generator
    ) -> None:
        self.density = DensityEmbedding(width, 2 * factor, rng)
        self.local_position = LocalPositionEmbedding(width, heads, rng)
        self.ancestor = AncestorEmbedding(width, heads, rng)
        self.coordinates = Linear(3, width, rng)
        self.fusion = MLP([4 * width, width, width], rng)
        self.factor = factor

    def __call__(
        self,
        positions: np.ndarray,
        features: Tensor,
        seed: np.random.Generator | None = None,
    ) -> EncoderStage:
        count = -(-len(positions) // self.factor)
        assignment = fps_downsample(positions, count, seed)
        kept = assignment.kept
        index, mask = assignment.padded()
        offsets = positions[index] - positions[kept][:, None, :]
        fused = self.fusion(
            concat(
                [
                    self.density(assignment.counts),
                    self.local_position(offsets, mask),
                    self.ancestor(features, positions, kept, index, mask),
                    self.coordinates(Tensor(positions[kept])),
                ],
                axis=1,
            )
        )
        return EncoderStage(positions=positions, assignment=assignment, features=fused)


class StructureNetwork(Module):
    """
    Turns latent tokens into a structured point set: a point-wise network with
    a global max-pooled context regresses coordinates, a separate network
    produces features.
    """

    def __init__(self, latent_dim: int, width: int, rng: np.random.Generator) -> None:
        self.point_network = MLP([latent_dim, width, width], rng)
        self.coordinate_network = MLP(
            [2 * width, width, 3], rng, final_activation="tanh"
        )
        self.feature_network = MLP([latent_dim, width, width], rng)
        self.width = width

    def __call__(self, z: Tensor) -> tuple[Tensor, Tensor]:
        tokens = z.shape[0]
        pointwise = self.point_network(z)
        pooled = pointwise.max(axis=0).reshape(1, self.width).expand(tokens, self.width)
        coordinates = self.coordinate_network(concat([pointwise, pooled], axis=1))
        return coordinates, self.feature_network(z)


class DecoderBlock(Module):
    """
    Represents one upsampling stage predicting a count ``k`` in ``[1, U_max]``
    per point, from a softplus-activated scalar rounded and clamped, and the
    offsets of ``U_max`` slots, slot 0 being the point itself.
    """

    def __init__(self, width: int, cap: int, rng: np.random.Generator) -> None:
        self.count_head = Linear(width, 1, rng)
        self.offset_head = Linear(width, 3 * (cap - 1), rng, scale=0.1)
        self.slot_embedding = Embedding(cap, width, rng)
        self.child_network = MLP([2 * width, width, width], rng)
        self.cap = cap

    def __call__(self, positions: Tensor, features: Tensor) -> DecoderStage:
        rows = positions.shape[0]
        count_raw = self.count_head(features).softplus().reshape(rows)
        counts = np.clip(np.rint(count_raw.data), 1, self.cap).astype(np.int64)
        offsets = self.offset_head(features).reshape(rows, self.cap - 1, 3)
        slot_offsets = concat([Tensor(np.zeros((rows, 1, 3))), offsets], axis=1)

        parents = np.repeat(np.arange(rows), counts)
        slots = np.concatenate([np.arange(k) for k in counts]) if rows else parents
        children = positions[parents] + slot_offsets[parents, slots]
        child_features = self.child_network(
            concat([features[parents], self.slot_embedding(slots)], axis=1)
        )
        return DecoderStage(
            parent_positions=positions,
            count_raw=count_raw,
            counts=counts,
            offsets=offsets,
            positions=children,
            features=child_features,
            parents=parents,
        )


class PointVae(Module):
    """
    Represents the point variational autoencoder.

    Parameters
    ----------
    config
        Architecture settings.
    seed
        Seed of the parameter initialization.

    Examples
    --------
    ```
    >>> import numpy as np
    >>> from radiff.config import VaeConfig
    >>> vae = PointVae(VaeConfig(width=16), seed=0)
    >>> points = np.random.default_rng(0).uniform(-1, 1, (128, 5))
    >>> vae.encode(points).mean.shape
    (8, 4)

    ```
    """

    def __init__(self, config: VaeConfig | None = None, seed: int = 0) -> None:
        self.config = config or VaeConfig()
        rng = np.random.default_rng(seed)
        width, heads = self.config.width, self.config.heads
        self.input_network = MLP([5, width, width], rng)
        self.encoder_blocks = ModuleList(
            [EncoderBlock(width, heads, f, rng) for f in self.config.factors]
        )
        self.latent_head = Linear(width, 2 * self.config.latent_dim, rng)
        self.structure = StructureNetwork(self.config.latent_dim, width, rng)
        self.decoder_blocks = ModuleList(
            [DecoderBlock(width, cap, rng) for cap in self.config.upsampling_caps()]
        )
        self.segmentation_head = MLP([width, width, 2], rng, final_activation="tanh")

    def encode(
        self,
        points: RadarPointCloud | npt.ArrayLike,
        rng: np.random.Generator | None = None,
    ) -> LatentEncoding:
        """
        Encode the valid points of a normalized cloud.

        Parameters
        ----------
        points
            Normalized cloud, or ``n x 5`` rows of valid points.
        rng
            Generator of the sampling start indices and of the
            reparameterization noise; without it, sampling starts at index 0
            and the sample is the mean.

        Raises
        ------
        :class:`NumericalError`
            If a stage produces a non-finite activation.
        """
        array = as_point_array(points)
        if not len(array):
            raise ValidationError("Cannot encode a cloud without valid points")
        positions = array[:, :3]
        features = self.input_network(Tensor(array))
        stages = []
        for index, block in enumerate(self.encoder_blocks):
            stage = block(positions, features, rng)
            if not np.all(np.isfinite(stage.features.data)):
                raise NumericalError(f"Non-finite activation in encoder stage {index}")
            stages.append(stage)
            positions, features = stage.kept_positions, stage.features

        head = self.latent_head(features)
        latent_dim = self.config.latent_dim
        mean, log_variance = head[:, :latent_dim], head[:, latent_dim:]
        if not np.all(np.isfinite(head.data)):
            raise NumericalError("Non-finite activation in the latent head")
        sample = mean
        if rng is not None:
            noise = rng.standard_normal(mean.shape)
            sample = mean + (log_variance * 0.5).exp() * noise
        return LatentEncoding(mean, log_variance, sample, stages)

    def latent_to_structured(self, z: Tensor | npt.ArrayLike) -> tuple[Tensor, Tensor]:
        """Return the coordinates ``M x 3`` and features ``M x d`` of latent ``z``."""
        return self.structure(z if isinstance(z, Tensor) else Tensor(z))

    def decode(self, z: Tensor | npt.ArrayLike) -> Reconstruction:
        """
        Decode latent tokens ``z`` into a normalized cloud of
        ``sum(k)`` points at the last stage.
        """
        positions, features = self.latent_to_structured(z)
        levels = [positions]
        stages: list[DecoderStage] = []
        for block in reversed(list(self.decoder_blocks)):
            stage = block(positions, features)
            stages.insert(0, stage)
            positions, features = stage.positions, stage.features
            levels.insert(0, positions)
        points = concat([positions, self.segmentation_head(features)], axis=1)
        return Reconstruction(points=points, levels=levels, stages=stages)

    def reconstruct(
        self,
        points: RadarPointCloud | npt.ArrayLike,
        rng: np.random.Generator | None = None,
    ) -> tuple[LatentEncoding, Reconstruction]:
        """Encode then decode the reparameterized sample."""
        encoding = self.encode(points, rng)
        return encoding, self.decode(encoding.sample)

    def encode_dataset(
        self, clouds: Sequence[RadarPointCloud | npt.ArrayLike]
    ) -> np.ndarray:
        """
        Return the posterior means of normalized, mask-complete clouds as a
        ``B x M x d_z`` array.

        Raises
        ------
        :class:`ValidationError`
            If the clouds do not encode to the same token count.
        """
        with no_grad():
            latents = [self.encode(cloud).mean.data for cloud in clouds]
        if not latents:
            return np.zeros((0, 0, self.config.latent_dim))
        if len({latent.shape for latent in latents}) != 1:
            raise ValidationError(
                "Clouds encode to different token counts, fill them to a fixed "
                "size first"
            )
        LOGGER.debug("Encoded %d clouds into latents.", len(latents))
        return np.stack(latents)

    def decode_to_cloud(self, z: npt.ArrayLike) -> RadarPointCloud:
        """Decode latent tokens without recording gradients."""
        with no_grad():
            return self.decode(Tensor(z)).cloud()
