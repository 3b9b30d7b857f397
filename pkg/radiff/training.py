"""
Training
========

Defines the two training stages: the point autoencoder on normalized clouds,
then the conditional denoiser with its condition encoder on the latents of
the frozen autoencoder.

Both loops are seeded and single-threaded; a non-finite loss or gradient
aborts with :class:`radiff.errors.TrainingDivergedError` carrying the
parameters of the last completed epoch.
"""

from __future__ import annotations

import json
import logging
import math
import os
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from radiff.conditioning import condition_for_frame, make_condition_encoder
from radiff.config import RunConfig
from radiff.diffusion import Condition, Denoiser, ldm_loss, make_schedule
from radiff.errors import NumericalError, TrainingDivergedError, ValidationError
from radiff.frames import Frame
from radiff.losses import vae_loss
from radiff.numcore import AdamW, Module, OptimizerState, Tensor, lr_value
from radiff.vae import PointVae
from radiff.values import Task

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "TrainingHistory",
    "LatentDiffusionModel",
    "train_vae",
    "train_ldm",
]

LOGGER = logging.getLogger(__name__)


@dataclass
class TrainingHistory:
    """
    Represents the per epoch averages of the loss terms of a training run.
    """

    epochs: list[dict[str, float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.epochs)

    def values(self, term: str = "total") -> list[float]:
        """Return the per epoch values of a loss term."""
        return [epoch[term] for epoch in self.epochs]

    def to_dict(self) -> dict:
        """Return the history as a *JSON* serializable mapping."""
        return {"epochs": self.epochs}

    def save(self, path: str | os.PathLike) -> None:
        """Write the history as *JSON*."""
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2)
            handle.write("\n")


class LatentDiffusionModel(Module):
    """
    Represents the jointly trained condition encoder and denoiser of a task.

    Parameters
    ----------
    config
        Run configuration.
    task
        Task, selecting the layout or the pillar condition encoder.
    token_dim
        Dimension of the denoised tokens.
    seed
        Seed of the parameter initialization.
    """

    def __init__(
        self, config: RunConfig, task: Task, token_dim: int, seed: int = 0
    ) -> None:
        self.encoder = make_condition_encoder(task, config, seed)
        self.denoiser = Denoiser(config.diffusion, token_dim, seed + 1)
        self.config = config
        self.task = Task(task)

    def condition(self, frame: Frame) -> Condition:
        """
        Encode the condition of a frame; pillar subsets are seeded by the
        frame id.
        """
        return condition_for_frame(
            frame, self.task, self.encoder, self.config, frame.frame_id
        )


def _mean_terms(records: Sequence[dict[str, float]]) -> dict[str, float]:
    return {
        key: float(np.mean([record[key] for record in records])) for key in records[0]
    }


def _step(
    model: Module,
    optimizer: AdamW,
    loss: Tensor,
    lr: float,
    last_good_state: dict,
    epoch: int,
) -> None:
    if not math.isfinite(loss.item()):
        raise TrainingDivergedError(
            f"Non-finite loss at epoch {epoch}", last_good_state, epoch
        )
    loss.backward()
    try:
        optimizer.step(lr)
    except NumericalError as error:
        raise TrainingDivergedError(
            f"{error} at epoch {epoch}", last_good_state, epoch
        ) from error
    finally:
        model.zero_grad()


def train_vae(
    clouds: Sequence[npt.ArrayLike],
    config: RunConfig | None = None,
    task: Task = Task.FOREGROUND,
    seed: int = 0,
    epochs: int | None = None,
) -> tuple[PointVae, TrainingHistory]:
    """
    Train the point autoencoder.

    Parameters
    ----------
    clouds
        Normalized ``N x 5`` clouds without padding.
    config
        Run configuration; the ``[vae]`` section drives the run.
    task
        Task selecting the batch size.
    seed
        Seed of the initialization, the shuffling and the sampling noise.
    epochs
        Epoch count, the configured one by default.

    Raises
    ------
    :class:`TrainingDivergedError`
        If a loss or gradient becomes non-finite.
    """
    config = config or RunConfig()
    if not len(clouds):
        raise ValidationError("Cannot train the autoencoder without clouds")
    settings = config.vae
    epochs = epochs or settings.epochs
    vae = PointVae(settings, seed)
    optimizer = AdamW(
        vae.parameters(),
        OptimizerState(lr=settings.lr, weight_decay=settings.weight_decay),
    )
    schedule = settings.lr_schedule(epochs)
    batch_size = settings.batch_size(Task(task))
    rng = np.random.default_rng(seed)
    arrays = [np.asarray(cloud, dtype=np.float64) for cloud in clouds]
    history = TrainingHistory()
    last_good_state = vae.state_dict()
    LOGGER.info(
        "Training the autoencoder with %d parameters on %d clouds for %d epochs.",
        vae.parameter_count(),
        len(arrays),
        epochs,
    )

    for epoch in range(epochs):
        lr = lr_value(schedule, epoch)
        order = rng.permutation(len(arrays))
        records = []
        for start in range(0, len(order), batch_size):
            batch = order[start : start + batch_size]
            total = Tensor(0.0)
            for index in batch:
                try:
                    encoding, reconstruction = vae.reconstruct(arrays[index], rng)
                except NumericalError as error:
                    raise TrainingDivergedError(
                        f"{error} at epoch {epoch}", last_good_state, epoch
                    ) from error
                loss = vae_loss(arrays[index], reconstruction, encoding, settings)
                total = total + loss.total
                records.append(loss.terms)
            mean = total * (1.0 / len(batch))
            _step(vae, optimizer, mean, lr, last_good_state, epoch)

        history.epochs.append({"epoch": float(epoch), "lr": lr, **_mean_terms(records)})
        last_good_state = vae.state_dict()
        LOGGER.info(
            "Autoencoder epoch %d: loss %.6g, chamfer %.6g.",
            epoch,
            history.epochs[-1]["total"],
            history.epochs[-1]["chamfer"],
        )
    return vae, history


def train_ldm(
    latents: npt.ArrayLike,
    frames: Sequence[Frame],
    config: RunConfig | None = None,
    task: Task = Task.FOREGROUND,
    seed: int = 0,
    epochs: int | None = None,
    vae: PointVae | None = None,
) -> tuple[LatentDiffusionModel, TrainingHistory]:
    """
    Jointly train the condition encoder and the denoiser.

    Parameters
    ----------
    latents
        ``B x M x d`` clean tokens: latents of the frozen autoencoder, or
        normalized points in point space.
    frames
        Frame of every latent, providing its condition.
    config
        Run configuration; the ``[diffusion]`` section drives the run.
    task
        Task selecting the condition encoder and the batch size.
    seed
        Seed of the initialization, the shuffling, the timesteps and the
        noise.
    epochs
        Epoch count, the configured one by default.
    vae
        Frozen autoencoder the latents come from; its parameters are checked
        to be unchanged by the run.

    Raises
    ------
    :class:`TrainingDivergedError`
        If a loss or gradient becomes non-finite.
    """
    config = config or RunConfig()
    tokens = np.asarray(latents, dtype=np.float64)
    if tokens.ndim != 3 or not len(tokens):
        raise ValidationError(
            f"Latents must be a non-empty B x M x d array, got shape {tokens.shape}"
        )
    if len(frames) != len(tokens):
        raise ValidationError(
            f"Got {len(frames)} condition frames for {len(tokens)} latents"
        )
    settings = config.diffusion
    epochs = epochs or settings.epochs
    model = LatentDiffusionModel(config, task, tokens.shape[-1], seed)
    optimizer = AdamW(
        model.parameters(),
        OptimizerState(lr=settings.lr, weight_decay=settings.weight_decay),
    )
    batch_size = settings.batch_size(Task(task))
    steps_per_epoch = math.ceil(len(tokens) / batch_size)
    schedule = settings.lr_schedule(epochs * steps_per_epoch)
    noise_schedule = make_schedule(
        settings.beta_start, settings.beta_end, settings.steps
    )
    rng = np.random.default_rng(seed)
    frozen = vae.checksum() if vae is not None else None
    history = TrainingHistory()
    last_good_state = model.state_dict()
    LOGGER.info(
        "Training the '%s' denoiser with %d parameters on %d latent sets for %d "
        "epochs.",
        Task(task).value,
        model.parameter_count(),
        len(tokens),
        epochs,
    )

    step = 0
    for epoch in range(epochs):
        order = rng.permutation(len(tokens))
        losses = []
        for start in range(0, len(order), batch_size):
            batch = order[start : start + batch_size]
            conditions = [model.condition(frames[index]) for index in batch]
            loss = ldm_loss(
                tokens[batch], conditions, model.denoiser, noise_schedule, rng
            )
            lr = lr_value(schedule, step)
            losses.append(loss.item())
            _step(model, optimizer, loss, lr, last_good_state, epoch)
            step += 1

        total = float(np.mean(losses))
        history.epochs.append({"epoch": float(epoch), "lr": lr, "total": total})
        last_good_state = model.state_dict()
        LOGGER.info("Denoiser epoch %d: loss %.6g.", epoch, total)

    if vae is not None and vae.checksum() != frozen:
        raise ValidationError(
            "The frozen autoencoder was modified during denoiser training"
        )
    return model, history
