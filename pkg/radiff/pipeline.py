"""
Pipeline
========

Defines the steps of the generation pipeline on dataset directories:
synthesis, preparation of the training clouds, the two training stages, the
conditional generation, fusion, augmentation, evaluation and validation.

Every step is deterministic given its inputs and seed; the command line
interface is a thin layer over these functions.
"""

from __future__ import annotations

import logging
import os
import warnings
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from radiff.augment import (
    GtDatabase,
    build_gt_database,
    fuse,
    gt_sample_insert,
    load_gt_database,
    polar_mix_fill,
    random_global_augment,
    save_gt_database,
)
from radiff.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from radiff.config import RunConfig
from radiff.diffusion import make_schedule, sample
from radiff.errors import CheckpointError, RadiffError, ValidationError
from radiff.frames import (
    Frame,
    RadarPointCloud,
    frame_file_name,
    read_dataset,
    write_frame,
    write_manifest,
)
from radiff.metrics import MetricReport, evaluate
from radiff.numcore import no_grad
from radiff.processing import (
    aggregate_sweeps,
    clip_to_range,
    denormalize,
    fill_by_replication,
    normalize,
    split_fg_bg,
    validate_frame,
)
from radiff.synthesis import GENERATOR_VERSION, synth_dataset
from radiff.training import LatentDiffusionModel, TrainingHistory, train_ldm, train_vae
from radiff.vae import PointVae
from radiff.values import DiffusionSpace, Profile, Task

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "KIND_VAE",
    "KIND_LDM",
    "TrainingData",
    "task_cloud",
    "prepare_training_data",
    "vae_to_checkpoint",
    "vae_from_checkpoint",
    "ldm_to_checkpoint",
    "ldm_from_checkpoint",
    "history_path",
    "write_dataset",
    "run_synth",
    "run_train_vae",
    "run_train_ldm",
    "generate_frames",
    "run_generate",
    "fuse_frames",
    "run_fuse",
    "augment_frame",
    "run_augment",
    "run_build_db",
    "run_eval",
    "run_validate",
]

LOGGER = logging.getLogger(__name__)

KIND_VAE = 0
KIND_LDM = 1

_TASK_CODES = {Task.FOREGROUND: 0, Task.BACKGROUND: 1}


def _task_code(task: Task) -> int:
    return _TASK_CODES[Task(task)]


def _task_from_code(code: float) -> Task:
    return {value: key for key, value in _TASK_CODES.items()}[round(code)]


@dataclass
class TrainingData:
    """
    Represents the training clouds of a task and the frames they came from.

    Parameters
    ----------
    clouds
        Normalized ``N x 5`` clouds without padding.
    frames
        Source frame of every cloud.
    """

    clouds: list[np.ndarray]
    frames: list[Frame]


def task_cloud(frame: Frame, task: Task) -> RadarPointCloud:
    """Return the foreground or background part of the radar cloud of a frame."""
    foreground, background = split_fg_bg(frame.radar, frame.boxes)
    return foreground if Task(task) == Task.FOREGROUND else background


def _sweep_frames(frames: Sequence[Frame], sweeps: int) -> list[Frame]:
    if sweeps <= 1:
        return list(frames)
    aggregated = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for index, frame in enumerate(frames):
            window = frames[max(0, index - sweeps + 1) : index + 1]
            cloud = aggregate_sweeps(window, sweeps).cloud
            aggregated.append(frame.replace(radar=cloud))
    return aggregated


def prepare_training_data(
    frames: Sequence[Frame], task: Task, config: RunConfig, seed: int = 0
) -> TrainingData:
    """
    Return the normalized training clouds of a task: sweeps are aggregated,
    the task points are split out and clipped to the range, then filled to
    the configured point count. Frames without task points are skipped.

    Raises
    ------
    :class:`ValidationError`
        If the foreground task is requested on frames without boxes, or if no
        frame holds task points.
    """
    task = Task(task)
    if task == Task.FOREGROUND and not any(frame.boxes for frame in frames):
        raise ValidationError("The foreground task needs frames annotated with boxes")
    spec = config.data.range_spec()
    features = config.data.feature_ranges()
    children = np.random.SeedSequence(seed).spawn(len(frames))
    clouds, kept = [], []
    for frame, child in zip(_sweep_frames(frames, config.data.sweeps), children):
        cloud = clip_to_range(task_cloud(frame, task), spec)
        if not cloud.valid_count:
            LOGGER.debug(
                "Frame %d holds no '%s' points, skipping it.",
                frame.frame_id,
                task.value,
            )
            continue
        filled = fill_by_replication(
            cloud, config.data.points, np.random.default_rng(child)
        )
        clouds.append(normalize(filled, spec, features).valid_points())
        kept.append(frame)
    if not clouds:
        raise ValidationError(f"No frame holds '{task.value}' points")
    LOGGER.info(
        "Prepared %d '%s' clouds of %d frames.", len(clouds), task.value, len(frames)
    )
    return TrainingData(clouds, kept)


def vae_to_checkpoint(
    vae: PointVae, config: RunConfig, task: Task, seed: int = 0
) -> Checkpoint:
    """Return the checkpoint of a trained autoencoder."""
    return Checkpoint.from_state(
        vae.state_dict(),
        {"kind": KIND_VAE, "task": _task_code(task), "seed": seed},
        config,
    )


def _checked(checkpoint: Checkpoint, kind: int) -> tuple[RunConfig, Task]:
    metadata = checkpoint.metadata()
    config = checkpoint.config()
    if config is None or "kind" not in metadata or "task" not in metadata:
        raise CheckpointError("Checkpoint does not describe its model")
    if round(metadata["kind"]) != kind:
        expected = "an autoencoder" if kind == KIND_VAE else "a denoiser"
        raise CheckpointError(f"Checkpoint does not hold {expected}")
    return config, _task_from_code(metadata["task"])


def vae_from_checkpoint(checkpoint: Checkpoint) -> tuple[PointVae, RunConfig, Task]:
    """Rebuild an autoencoder, its run configuration and task from a checkpoint."""
    config, task = _checked(checkpoint, KIND_VAE)
    vae = PointVae(config.vae)
    vae.load_state_dict(checkpoint.state())
    return vae, config, task


def ldm_to_checkpoint(
    model: LatentDiffusionModel,
    config: RunConfig,
    task: Task,
    tokens: int,
    seed: int = 0,
) -> Checkpoint:
    """Return the checkpoint of a trained condition encoder and denoiser."""
    return Checkpoint.from_state(
        model.state_dict(),
        {
            "kind": KIND_LDM,
            "task": _task_code(task),
            "tokens": tokens,
            "token_dim": model.denoiser.token_dim,
            "seed": seed,
        },
        config,
    )


def ldm_from_checkpoint(
    checkpoint: Checkpoint,
) -> tuple[LatentDiffusionModel, RunConfig, Task, int]:
    """
    Rebuild a condition encoder and denoiser from a checkpoint, with its run
    configuration, task and token count.
    """
    config, task = _checked(checkpoint, KIND_LDM)
    metadata = checkpoint.metadata()
    model = LatentDiffusionModel(config, task, round(metadata["token_dim"]))
    model.load_state_dict(checkpoint.state())
    return model, config, task, round(metadata["tokens"])


def history_path(checkpoint_path: str | os.PathLike) -> str:
    """Return the loss history path written next to a checkpoint."""
    return f"{os.path.splitext(os.fspath(checkpoint_path))[0]}.history.json"


def write_dataset(
    frames: Sequence[Frame], directory: str | os.PathLike, **metadata  # noqa: ANN003
) -> None:
    """Write frames and the manifest of a dataset directory."""
    os.makedirs(directory, exist_ok=True)
    for frame in frames:
        write_frame(frame, os.path.join(directory, frame_file_name(frame.frame_id)))
    write_manifest(directory, [frame.frame_id for frame in frames], **metadata)


def run_synth(
    directory: str | os.PathLike,
    frames: int,
    seed: int = 0,
    profile: Profile | str = Profile.TOY,
    force: bool = False,
) -> list[Frame]:
    """
    Generate a synthetic dataset directory.

    Raises
    ------
    :class:`ValidationError`
        If the directory exists, is not empty and ``force`` is not set.
    """
    if os.path.isdir(directory) and os.listdir(directory) and not force:
        raise ValidationError(
            f"Directory '{directory}' is not empty, use --force to overwrite"
        )
    profile = Profile(profile)
    dataset = synth_dataset(seed, frames, profile)
    write_dataset(
        dataset,
        directory,
        generator_version=GENERATOR_VERSION,
        seed=seed,
        profile=profile.value,
    )
    LOGGER.info(
        "Wrote %d synthetic '%s' frames to '%s'.",
        len(dataset),
        profile.value,
        directory,
    )
    return dataset


def run_train_vae(
    data: str | os.PathLike,
    out: str | os.PathLike,
    config: RunConfig,
    task: Task,
    seed: int = 0,
    epochs: int | None = None,
) -> TrainingHistory:
    """Train the autoencoder of a task and write its checkpoint and loss history."""
    prepared = prepare_training_data(read_dataset(data), task, config, seed)
    vae, history = train_vae(prepared.clouds, config, task, seed, epochs)
    save_checkpoint(vae_to_checkpoint(vae, config, task, seed), out)
    history.save(history_path(out))
    return history


def run_train_ldm(
    data: str | os.PathLike,
    vae_path: str | os.PathLike,
    out: str | os.PathLike,
    config: RunConfig,
    task: Task,
    seed: int = 0,
    epochs: int | None = None,
) -> TrainingHistory:
    """
    Train the denoiser of a task on the latents of a frozen autoencoder and
    write its checkpoint and loss history.

    Raises
    ------
    :class:`ValidationError`
        If the autoencoder was trained for another task.
    """
    task = Task(task)
    vae, _, vae_task = vae_from_checkpoint(load_checkpoint(vae_path))
    if vae_task != task:
        raise ValidationError(
            f"Autoencoder was trained for the '{vae_task.value}' task, "
            f"not '{task.value}'"
        )
    prepared = prepare_training_data(read_dataset(data), task, config, seed)
    if config.diffusion.space == DiffusionSpace.LATENT:
        latents = vae.encode_dataset(prepared.clouds)
    else:
        latents = np.stack(prepared.clouds)
    model, history = train_ldm(
        latents, prepared.frames, config, task, seed, epochs, vae
    )
    checkpoint = ldm_to_checkpoint(model, config, task, latents.shape[1], seed)
    save_checkpoint(checkpoint, out)
    history.save(history_path(out))
    return history


def generate_frames(
    model: LatentDiffusionModel,
    vae: PointVae | None,
    conditions: Sequence[Frame],
    config: RunConfig,
    tokens: int,
    steps: int | None = None,
    seed: int = 0,
) -> list[Frame]:
    """
    Sample one frame per condition frame.

    Sampled tokens are decoded by the autoencoder in latent space, clamped to
    the normalized range, denormalized and filled to the configured point
    count. Foreground frames carry the conditioning boxes, background frames
    the conditioning *LiDAR* scan.
    """
    spec = config.data.range_spec()
    features = config.data.feature_ranges()
    schedule = make_schedule(
        config.diffusion.beta_start, config.diffusion.beta_end, config.diffusion.steps
    )
    shape = (tokens, model.denoiser.token_dim)
    generated = []
    for frame in conditions:
        rng = np.random.default_rng([seed, frame.frame_id])
        with no_grad():
            condition = model.condition(frame)
        z = sample(model.denoiser, schedule, condition, shape, steps, rng)
        if vae is not None:
            points = vae.decode_to_cloud(z).valid_points()
        else:
            points = z
        cloud = RadarPointCloud.from_points(np.clip(points, -1.0, 1.0))
        cloud = fill_by_replication(cloud, config.data.points, rng)
        cloud = denormalize(cloud, spec, features)
        generated_frame = Frame(frame.frame_id, frame.timestamp_us, radar=cloud)
        if model.task == Task.FOREGROUND:
            generated_frame = generated_frame.replace(boxes=list(frame.boxes))
        else:
            generated_frame = generated_frame.replace(lidar=frame.lidar)
        generated.append(generated_frame)
        LOGGER.debug("Generated frame %d.", frame.frame_id)
    return generated


def run_generate(
    ldm_path: str | os.PathLike,
    vae_path: str | os.PathLike | None,
    conditions: str | os.PathLike,
    out: str | os.PathLike,
    task: Task | None = None,
    steps: int | None = None,
    seed: int = 0,
) -> list[Frame]:
    """
    Generate a dataset directory from the condition frames of a directory.

    Raises
    ------
    :class:`ValidationError`
        If the checkpoints disagree on the task, or if a latent space
        denoiser is given no autoencoder.
    """
    model, config, model_task, tokens = ldm_from_checkpoint(load_checkpoint(ldm_path))
    if task is not None and Task(task) != model_task:
        raise ValidationError(
            f"Denoiser was trained for the '{model_task.value}' task, "
            f"not '{Task(task).value}'"
        )
    vae = None
    if config.diffusion.space == DiffusionSpace.LATENT:
        if vae_path is None:
            raise ValidationError(
                "A latent space denoiser needs its autoencoder checkpoint"
            )
        vae, _, vae_task = vae_from_checkpoint(load_checkpoint(vae_path))
        if vae_task != model_task:
            raise ValidationError(
                "Autoencoder and denoiser were trained for different tasks"
            )
    frames = generate_frames(
        model, vae, read_dataset(conditions), config, tokens, steps, seed
    )
    write_dataset(frames, out, task=model_task.value, seed=seed)
    LOGGER.info(
        "Generated %d '%s' frames into '%s'.", len(frames), model_task.value, out
    )
    return frames


def fuse_frames(
    foreground: Sequence[Frame], background: Sequence[Frame]
) -> list[Frame]:
    """
    Fuse generated foreground and background frames paired by frame id.

    Raises
    ------
    :class:`ValidationError`
        If the two sides hold different frame ids.
    """
    fg_by_id = {frame.frame_id: frame for frame in foreground}
    bg_by_id = {frame.frame_id: frame for frame in background}
    if fg_by_id.keys() != bg_by_id.keys():
        raise ValidationError(
            f"Foreground and background frame ids differ: "
            f"{sorted(fg_by_id.keys() ^ bg_by_id.keys())}"
        )
    return [
        bg_by_id[i].replace(
            radar=fuse(fg_by_id[i].radar, bg_by_id[i].radar),
            boxes=list(fg_by_id[i].boxes),
        )
        for i in sorted(fg_by_id)
    ]


def run_fuse(
    foreground: str | os.PathLike, background: str | os.PathLike, out: str | os.PathLike
) -> list[Frame]:
    """Fuse two generated dataset directories."""
    frames = fuse_frames(read_dataset(foreground), read_dataset(background))
    write_dataset(frames, out)
    return frames


def augment_frame(
    frame: Frame,
    database: GtDatabase,
    config: RunConfig,
    seed: int | np.random.Generator = 0,
    global_transforms: bool = True,
) -> Frame:
    """
    Augment a frame: ground truth sampling, sector-wise filling of sparse
    frames, then the random global transforms. Points and boxes leaving the
    range are dropped.
    """
    rng = np.random.default_rng(seed)
    settings = config.augment
    frame = gt_sample_insert(frame, database, settings.class_counts(), rng)
    frame = polar_mix_fill(
        frame, database, settings.target_fg_points, settings.sectors, rng
    )
    if not global_transforms:
        return frame
    frame = random_global_augment(frame, settings, rng)
    spec = config.data.range_spec()
    return frame.replace(
        radar=clip_to_range(frame.radar, spec),
        lidar=frame.lidar[spec.contains(frame.lidar)],
        boxes=[box for box in frame.boxes if spec.contains(box.centre[None, :])[0]],
    )


def run_augment(
    data: str | os.PathLike,
    database: str | os.PathLike,
    out: str | os.PathLike,
    config: RunConfig,
    seed: int = 0,
    global_transforms: bool = True,
) -> list[Frame]:
    """Augment every frame of a dataset directory."""
    gt_database = load_gt_database(database)
    frames = read_dataset(data)
    children = np.random.SeedSequence(seed).spawn(len(frames))
    augmented = [
        augment_frame(
            frame,
            gt_database,
            config,
            np.random.default_rng(child),
            global_transforms,
        )
        for frame, child in zip(frames, children)
    ]
    write_dataset(augmented, out, seed=seed, augmented=True)
    return augmented


def run_build_db(
    data: str | os.PathLike, out: str | os.PathLike, config: RunConfig
) -> int:
    """Build the ground truth database of a dataset directory, return its size."""
    database = build_gt_database(read_dataset(data), config.augment.min_points)
    save_gt_database(database, out)
    return len(database)


def run_eval(
    real: str | os.PathLike, generated: str | os.PathLike, config: RunConfig
) -> MetricReport:
    """Evaluate a generated dataset directory against a real one."""
    return evaluate(real, generated, config)


def run_validate(data: str | os.PathLike, config: RunConfig) -> dict[int, str]:
    """
    Check the invariants of every frame of a dataset directory; return the
    failure message of every invalid frame keyed by frame id.
    """
    spec = config.data.range_spec()
    failures = {}
    for frame in read_dataset(data):
        try:
            validate_frame(frame, spec, config.layout.num_classes)
        except RadiffError as error:
            failures[frame.frame_id] = str(error)
    return failures
