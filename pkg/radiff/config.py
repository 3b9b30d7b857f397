"""
Configuration
=============

Defines the run configuration: one frozen dataclass per ``[section]`` of the
plain-text configuration files, aggregated by :class:`RunConfig`.

Configuration files are read with :mod:`configparser`; unknown sections and
keys are rejected and missing keys take their defaults. The canonical text of
a configuration lists every section in a fixed order and every key in
declaration order, so that ``RunConfig.parse(config.canonical()) == config``.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, ClassVar

from radiff.errors import ConfigurationError
from radiff.frames import FeatureRanges, Interval, RangeSpec
from radiff.numcore import LrSchedule
from radiff.values import DiffusionSpace, Profile, ScheduleKind, Task

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "ROOT_CONFIGS",
    "DataConfig",
    "VaeConfig",
    "DiffusionConfig",
    "LayoutConfig",
    "PillarConfig",
    "MetricsConfig",
    "AugmentConfig",
    "RunConfig",
    "load_config",
]

ROOT_CONFIGS: str = os.path.join(os.path.dirname(__file__), "resources", "configs")


def _format_value(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def _parse_value(text: str, default: Any, name: str) -> Any:
    try:
        if isinstance(default, Enum):
            return type(default)(text)
        if isinstance(default, bool):
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else int
            return tuple(kind(part.strip()) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigurationError(f"Invalid value '{text}' for key '{name}'") from None
    return text


class _Section:
    """Mixin giving a config dataclass its INI (de)serialization."""

    section: ClassVar[str]

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> Any:
        defaults = cls()  # pyright: ignore
        known = {f.name for f in dataclasses.fields(defaults)}  # pyright: ignore
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigurationError(
                f"Unknown keys {unknown} in section [{cls.section}]"
            )
        changes = {
            key: _parse_value(text, getattr(defaults, key), f"{cls.section}.{key}")
            for key, text in values.items()
        }
        return dataclasses.replace(defaults, **changes)  # pyright: ignore

    def to_lines(self) -> list[str]:
        lines = [f"[{self.section}]"]
        for f in dataclasses.fields(self):  # pyright: ignore
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return lines


@dataclass(frozen=True)
class DataConfig(_Section):
    """
    Data settings.

    Parameters
    ----------
    profile
        Named range profile.
    points
        Fixed point count ``N`` of training clouds.
    sweeps
        Number of aggregated sweeps.
    doppler_min, doppler_max
        Doppler normalization range in m/s.
    rcs_min, rcs_max
        RCS normalization range in dBsm.
    """

    section: ClassVar[str] = "data"

    profile: Profile = Profile.TOY
    points: int = 128
    sweeps: int = 1
    doppler_min: float = -30.0
    doppler_max: float = 30.0
    rcs_min: float = -40.0
    rcs_max: float = 20.0

    def range_spec(self) -> RangeSpec:
        """Return the spatial range of the profile."""
        return RangeSpec.for_profile(self.profile)

    def feature_ranges(self) -> FeatureRanges:
        """Return the feature normalization ranges."""
        return FeatureRanges(
            doppler=Interval(self.doppler_min, self.doppler_max),
            rcs=Interval(self.rcs_min, self.rcs_max),
        )


@dataclass(frozen=True)
class VaeConfig(_Section):
    """
    Autoencoder architecture, loss weights and training settings.

    Parameters
    ----------
    factors
        Downsampling factor ``f_s`` of each stage, at least 2.
    width
        Embedding width ``d``.
    latent_dim
        Latent token dimension ``d_z``.
    heads
        Attention heads of the local position and ancestor embeddings.
    lambda_reg, lambda_den, lambda_card, lambda_d, lambda_c, lambda_f
        Weights of the KL, density, cardinality, mean distance, intermediate
        Chamfer and feature terms.
    """

    section: ClassVar[str] = "vae"

    factors: tuple[int, ...] = (4, 4)
    width: int = 64
    latent_dim: int = 4
    heads: int = 4
    lambda_reg: float = 1e-5
    lambda_den: float = 1e-4
    lambda_card: float = 5e-7
    lambda_d: float = 50.0
    lambda_c: float = 0.1
    lambda_f: float = 0.05
    epochs: int = 300
    batch_size_fg: int = 128
    batch_size_bg: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.0
    schedule: ScheduleKind = ScheduleKind.STEP_DECAY
    step_size: int = 45
    gamma: float = 0.5

    def __post_init__(self) -> None:
        if not self.factors or any(f < 2 for f in self.factors):
            raise ConfigurationError(
                f"Downsampling factors must be >= 2, got {self.factors}"
            )
        weights = (
            self.lambda_reg, self.lambda_den, self.lambda_card,
            self.lambda_d, self.lambda_c, self.lambda_f,
        )
        if any(w < 0 for w in weights):
            raise ConfigurationError(
                f"Loss weights must be non-negative, got {weights}"
            )
        if self.width % self.heads:
            raise ConfigurationError(
                f"VAE width {self.width} is not divisible by {self.heads} heads"
            )

    @property
    def stages(self) -> int:
        """Number of stages ``S``."""
        return len(self.factors)

    def upsampling_caps(self) -> tuple[int, ...]:
        """Return the per-stage cap ``U_max = 2 f_s`` of predicted upsampling counts."""
        return tuple(2 * f for f in self.factors)

    def latent_tokens(self, points: int) -> int:
        """Return the token count ``M`` of a complete cloud of ``points`` points."""
        tokens = points
        for factor in self.factors:
            tokens = -(-tokens // factor)
        return tokens

    def batch_size(self, task: Task) -> int:
        """Return the batch size of ``task``."""
        return self.batch_size_fg if task == Task.FOREGROUND else self.batch_size_bg

    def lr_schedule(self, epochs: int | None = None) -> LrSchedule:
        """Return the per-epoch learning rate schedule."""
        return LrSchedule(
            self.schedule, self.lr, epochs or self.epochs, self.step_size, self.gamma
        )


@dataclass(frozen=True)
class DiffusionConfig(_Section):
    """
    Diffusion schedule, denoiser architecture and training settings.

    Parameters
    ----------
    space
        Whether the denoiser operates on VAE latents or directly on points.
    beta_start, beta_end, steps
        Linear noise schedule ``beta_1 .. beta_T`` over ``T`` steps.
    width, blocks, heads
        Denoiser width ``w``, block count ``B`` and attention heads.
    time_dim
        Dimension of the sinusoidal timestep embedding.
    condition_width
        Width of the condition tokens.
    """

    section: ClassVar[str] = "diffusion"

    space: DiffusionSpace = DiffusionSpace.LATENT
    beta_start: float = 1e-4
    beta_end: float = 0.02
    steps: int = 1000
    width: int = 128
    blocks: int = 4
    heads: int = 4
    time_dim: int = 128
    condition_width: int = 128
    epochs: int = 1000
    batch_size_fg: int = 128
    batch_size_bg: int = 16
    lr: float = 1e-4
    weight_decay: float = 1e-6
    schedule: ScheduleKind = ScheduleKind.ONE_CYCLE
    pct_start: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4

    def __post_init__(self) -> None:
        if self.width % self.heads:
            raise ConfigurationError(
                f"Denoiser width {self.width} is not divisible by {self.heads} heads"
            )

    def batch_size(self, task: Task) -> int:
        """Return the batch size of ``task``."""
        return self.batch_size_fg if task == Task.FOREGROUND else self.batch_size_bg

    def lr_schedule(self, total_steps: int) -> LrSchedule:
        """Return the per-optimizer-step learning rate schedule."""
        return LrSchedule(
            self.schedule,
            self.lr,
            total_steps,
            pct_start=self.pct_start,
            div_factor=self.div_factor,
            final_div_factor=self.final_div_factor,
        )


@dataclass(frozen=True)
class LayoutConfig(_Section):
    """
    Box layout encoder settings.

    Parameters
    ----------
    objects
        Size ``n`` of the layout set, global object included.
    num_classes
        Number of object classes ``C``.
    fusion_layers
        Self-attention layers of the layout fusion.
    size_max
        Box size normalization bound in meters.
    v_max
        Box velocity normalization bound in m/s.
    """

    section: ClassVar[str] = "layout"

    objects: int = 16
    num_classes: int = 3
    fusion_layers: int = 2
    heads: int = 4
    size_max: float = 25.0
    v_max: float = 30.0


@dataclass(frozen=True)
class PillarConfig(_Section):
    """
    *LiDAR* pillar encoder settings.

    Parameters
    ----------
    cell
        Pillar edge length ``g`` in meters.
    points_per_pillar
        Maximum points ``P`` kept per pillar.
    max_tokens
        Maximum number ``K_max`` of pillar tokens.
    hidden
        Width of the per-point pillar network.
    """

    section: ClassVar[str] = "pillars"

    cell: float = 0.8
    points_per_pillar: int = 16
    max_tokens: int = 256
    hidden: int = 64


@dataclass(frozen=True)
class MetricsConfig(_Section):
    """Metric settings: the BEV grid of the JSD histogram."""

    section: ClassVar[str] = "metrics"

    grid: int = 100


@dataclass(frozen=True)
class AugmentConfig(_Section):
    """
    Augmentation settings.

    Parameters
    ----------
    samples_car, samples_pedestrian, samples_cyclist
        GT-sampling insertion counts per class.
    min_points
        Minimum points of a GT database entry.
    target_fg_points
        Foreground point count polar mixing fills scenes up to.
    sectors
        Azimuth sectors of polar mixing.
    flip_probability, max_rotation, scale_min, scale_max
        Global augmentation sampler.
    """

    section: ClassVar[str] = "augment"

    samples_car: int = 6
    samples_pedestrian: int = 4
    samples_cyclist: int = 4
    min_points: int = 5
    target_fg_points: int = 128
    sectors: int = 8
    flip_probability: float = 0.5
    max_rotation: float = 0.7853981633974483
    scale_min: float = 0.95
    scale_max: float = 1.05

    def class_counts(self) -> dict[int, int]:
        """Return the insertion count keyed by class id."""
        return {
            1: self.samples_car,
            2: self.samples_pedestrian,
            3: self.samples_cyclist,
        }


@dataclass(frozen=True)
class RunConfig:
    """
    Aggregates all configuration sections.

    Examples
    --------
    ```
    >>> config = RunConfig.parse("[vae]\\nepochs = 200\\n")
    >>> config.vae.epochs, config.vae.lambda_d
    (200, 50.0)
    >>> RunConfig.parse(config.canonical()) == config
    True

    ```
    """

    data: DataConfig = field(default_factory=DataConfig)
    vae: VaeConfig = field(default_factory=VaeConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    pillars: PillarConfig = field(default_factory=PillarConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    SECTIONS: ClassVar[dict[str, type]] = {
        "data": DataConfig,
        "vae": VaeConfig,
        "diffusion": DiffusionConfig,
        "layout": LayoutConfig,
        "pillars": PillarConfig,
        "metrics": MetricsConfig,
        "augment": AugmentConfig,
    }

    @classmethod
    def parse(cls, text: str) -> RunConfig:
        """
        Parse the configuration file content ``text``.

        Raises
        ------
        :class:`ConfigurationError`
            If the text is malformed, or names an unknown section or key, or a
            value is invalid.
        """
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # pyright: ignore
        try:
            parser.read_string(text)
        except configparser.Error as error:
            raise ConfigurationError(f"Malformed configuration: {error}") from None
        unknown = sorted(set(parser.sections()) - set(cls.SECTIONS))
        if unknown:
            raise ConfigurationError(f"Unknown configuration sections {unknown}")
        sections = {
            name: (
                section.from_mapping(dict(parser[name]))
                if parser.has_section(name)
                else section()
            )
            for name, section in cls.SECTIONS.items()
        }
        return cls(**sections)

    @classmethod
    def load(cls, path: str | os.PathLike) -> RunConfig:
        """Read the configuration file at ``path``."""
        with open(path, encoding="utf-8") as handle:
            return cls.parse(handle.read())

    @classmethod
    def for_profile(cls, profile: Profile | str) -> RunConfig:
        """Return the shipped default configuration of ``profile``."""
        return cls.load(os.path.join(ROOT_CONFIGS, f"{Profile(profile).value}.cfg"))

    def canonical(self) -> str:
        """Return the canonical text of the configuration."""
        blocks = ["\n".join(getattr(self, name).to_lines()) for name in self.SECTIONS]
        return "\n\n".join(blocks) + "\n"

    def save(self, path: str | os.PathLike) -> None:
        """Write the canonical text of the configuration to ``path``."""
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.canonical())

    def replace(self, **sections: Any) -> RunConfig:
        """Return a copy with the given sections replaced."""
        return dataclasses.replace(self, **sections)


def load_config(
    path: str | os.PathLike | None, profile: Profile | str | None = None
) -> RunConfig:
    """
    Return the configuration at ``path``, the shipped configuration of
    ``profile`` when no path is given, or the defaults.
    """
    if path is not None:
        return RunConfig.load(path)
    if profile is not None:
        return RunConfig.for_profile(profile)
    return RunConfig()
