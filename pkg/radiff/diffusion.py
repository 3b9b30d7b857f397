"""
Diffusion
=========

Defines the denoising diffusion process over token sets: the linear noise
schedule, forward noising, the noise prediction objective, the reverse
sampler and the attention denoiser conditioned by cross-attention on
condition tokens and additively on a global condition embedding.

Timesteps are 1-based, ``t = 1 .. T``.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from radiff.config import DiffusionConfig
from radiff.errors import (
    ConfigurationError,
    NumericalError,
    ShapeError,
    ValidationError,
)
from radiff.numcore import (
    MLP,
    LayerNorm,
    Linear,
    Module,
    ModuleList,
    Tensor,
    TransformerBlock,
    no_grad,
    sinusoidal_embedding,
)

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "DiffusionSchedule",
    "make_schedule",
    "q_sample",
    "p_mean",
    "p_sample_step",
    "Condition",
    "Denoiser",
    "ldm_loss",
    "sample",
]

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiffusionSchedule:
    """
    Holds the ``beta_t``, ``alpha_t = 1 - beta_t`` and cumulative
    ``alpha_bar_t`` tables; entry ``t - 1`` belongs to timestep ``t``.
    """

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def steps(self) -> int:
        """Number of timesteps ``T``."""
        return len(self.betas)

    def check(self, t: int) -> int:
        """
        Return ``t - 1``.

        Raises
        ------
        :class:`ValidationError`
            If ``t`` lies outside ``[1, T]``.
        """
        if not 1 <= t <= self.steps:
            raise ValidationError(f"Timestep {t} lies outside [1, {self.steps}]")
        return int(t) - 1

    def beta(self, t: int) -> float:
        """Return ``beta_t``."""
        return float(self.betas[self.check(t)])

    def alpha(self, t: int) -> float:
        """Return ``alpha_t``."""
        return float(self.alphas[self.check(t)])

    def alpha_bar(self, t: int) -> float:
        """Return ``alpha_bar_t``."""
        return float(self.alpha_bars[self.check(t)])


def make_schedule(
    beta_start: float = 1e-4, beta_end: float = 0.02, steps: int = 1000
) -> DiffusionSchedule:
    """
    Return the linear schedule
    ``beta_t = beta_start + (t - 1) / (T - 1) * (beta_end - beta_start)``.

    Raises
    ------
    :class:`ConfigurationError`
        Unless ``0 < beta_start < beta_end < 1`` and ``T >= 2``.

    Examples
    --------
    ```
    >>> schedule = make_schedule()
    >>> schedule.beta(1), schedule.beta(1000)
    (0.0001, 0.02)

    ```
    """
    if not 0 < beta_start < beta_end < 1 or steps < 2:
        raise ConfigurationError(
            f"Noise schedule needs 0 < beta_start < beta_end < 1 and at least two "
            f"steps, got ({beta_start}, {beta_end}, {steps})"
        )
    betas = np.linspace(beta_start, beta_end, steps)
    alphas = 1.0 - betas
    return DiffusionSchedule(betas=betas, alphas=alphas, alpha_bars=np.cumprod(alphas))


def q_sample(
    schedule: DiffusionSchedule, z0: npt.ArrayLike, t: int, noise: npt.ArrayLike
) -> np.ndarray:
    """
    Return ``z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) noise``.
    """
    alpha_bar = schedule.alpha_bar(t)
    return np.sqrt(alpha_bar) * np.asarray(z0, dtype=np.float64) + np.sqrt(
        1.0 - alpha_bar
    ) * np.asarray(noise, dtype=np.float64)


def p_mean(
    schedule: DiffusionSchedule,
    z_t: npt.ArrayLike,
    t: int,
    noise_estimate: npt.ArrayLike,
) -> np.ndarray:
    """
    Return the reverse step mean
    ``(z_t - beta_t / sqrt(1 - alpha_bar_t) noise_estimate) / sqrt(alpha_t)``.
    """
    beta, alpha, alpha_bar = schedule.beta(t), schedule.alpha(t), schedule.alpha_bar(t)
    return (
        np.asarray(z_t, dtype=np.float64)
        - beta / np.sqrt(1.0 - alpha_bar) * np.asarray(noise_estimate, dtype=np.float64)
    ) / np.sqrt(alpha)


def p_sample_step(
    schedule: DiffusionSchedule,
    z_t: npt.ArrayLike,
    t: int,
    noise_estimate: npt.ArrayLike,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Return ``z_{t-1} = mean + sqrt(beta_t) xi`` with standard normal ``xi``;
    the final step ``t = 1`` adds no noise.
    """
    mean = p_mean(schedule, z_t, t, noise_estimate)
    if t == 1:
        return mean
    return mean + np.sqrt(schedule.beta(t)) * rng.standard_normal(mean.shape)


@dataclass
class Condition:
    """
    Represents the output of a condition encoder.

    Parameters
    ----------
    global_embedding
        Global condition vector, omitted for unconditional denoising.
    tokens
        ``K x c`` condition tokens attended by cross-attention; a condition
        with zero tokens is unconditional and its global embedding is ignored.
    """

    global_embedding: Tensor | None = None
    tokens: Tensor | None = None

    @classmethod
    def empty(cls) -> Condition:
        """Return the unconditional condition."""
        return cls()

    @property
    def is_empty(self) -> bool:
        """Return whether the condition carries no scene information."""
        if self.tokens is not None and self.tokens.shape[0] == 0:
            return True
        return self.global_embedding is None and self.tokens is None

    def detach(self) -> Condition:
        """Return the condition without its gradient graph."""
        return Condition(
            None if self.global_embedding is None else self.global_embedding.detach(),
            None if self.tokens is None else self.tokens.detach(),
        )


class Denoiser(Module):
    """
    Represents the noise prediction network: tokens are lifted to width
    ``w``, the embedded timestep plus the projected global condition is added
    to every token, then ``B`` pre-normalized blocks of self-attention,
    cross-attention to the condition tokens and feed-forward run before the
    output head.

    Parameters
    ----------
    config
        Denoiser settings.
    token_dim
        Dimension of the denoised tokens, ``d_z`` for latents and 5 in point
        space.
    seed
        Seed of the parameter initialization.
    """

    def __init__(
        self, config: DiffusionConfig | None = None, token_dim: int = 4, seed: int = 0
    ) -> None:
        self.config = config or DiffusionConfig()
        rng = np.random.default_rng(seed)
        width = self.config.width
        self.lift = Linear(token_dim, width, rng)
        self.time_network = MLP([self.config.time_dim, width, width], rng)
        self.global_projection = Linear(self.config.condition_width, width, rng)
        self.blocks = ModuleList(
            [
                TransformerBlock(
                    width, self.config.heads, rng, self.config.condition_width
                )
                for _ in range(self.config.blocks)
            ]
        )
        self.norm = LayerNorm(width)
        self.head = Linear(width, token_dim, rng)
        self.token_dim = token_dim

    def __call__(
        self,
        z_t: Tensor | npt.ArrayLike,
        t: int,
        condition: Condition | None = None,
    ) -> Tensor:
        """
        Predict the noise of ``M x token_dim`` tokens ``z_t`` at timestep ``t``.

        Raises
        ------
        :class:`ShapeError`
            If the tokens or the condition width do not match the denoiser.
        """
        z = z_t if isinstance(z_t, Tensor) else Tensor(z_t)
        condition = condition or Condition.empty()
        if z.ndim != 2 or z.shape[1] != self.token_dim:
            raise ShapeError(
                f"Denoiser expects M x {self.token_dim} tokens, got shape {z.shape}"
            )
        width = self.config.condition_width
        for name, value in (
            ("global embedding", condition.global_embedding),
            ("tokens", condition.tokens),
        ):
            if value is not None and value.shape[-1] != width:
                raise ShapeError(
                    f"Condition {name} have width {value.shape[-1]}, the denoiser "
                    f"expects width {width}"
                )
        if condition.is_empty:
            condition = Condition.empty()

        shift = self.time_network(sinusoidal_embedding(float(t), self.config.time_dim))
        if condition.global_embedding is not None:
            shift = shift + self.global_projection(condition.global_embedding)
        h = self.lift(z) + shift
        tokens = condition.tokens
        for block in self.blocks:
            h = block(h, tokens)
        return self.head(self.norm(h))


def ldm_loss(
    z0: npt.ArrayLike,
    conditions: Sequence[Condition],
    denoiser: Denoiser,
    schedule: DiffusionSchedule,
    rng: np.random.Generator,
) -> Tensor:
    """
    Return the noise prediction objective of a batch: a uniform timestep per
    element, then the squared norm of the noise error summed over token
    dimensions and averaged over tokens and batch.

    Parameters
    ----------
    z0
        ``B x M x d`` clean tokens.
    conditions
        Condition of every batch element, computed on the same graph as the
        denoiser so that both receive gradients.
    """
    batch = np.asarray(z0, dtype=np.float64)
    if len(conditions) != len(batch):
        raise ValidationError(
            f"Got {len(conditions)} conditions for {len(batch)} samples"
        )
    total = Tensor(0.0)
    for tokens, condition in zip(batch, conditions):
        t = int(rng.integers(1, schedule.steps + 1))
        noise = rng.standard_normal(tokens.shape)
        prediction = denoiser(q_sample(schedule, tokens, t, noise), t, condition)
        error = prediction - noise
        total = total + (error * error).sum(axis=-1).mean()
    return total * (1.0 / max(len(batch), 1))


def sample(
    denoiser: Denoiser,
    schedule: DiffusionSchedule,
    condition: Condition | None,
    shape: tuple[int, int],
    steps: int | None = None,
    seed: int | np.random.Generator | None = 0,
) -> np.ndarray:
    """
    Draw tokens from the reverse chain: ``z_T`` standard normal, then one
    reverse step per timestep down to ``t = 1``.

    Parameters
    ----------
    denoiser
        Trained denoiser.
    schedule
        Noise schedule.
    condition
        Condition of the sample, unconditional by default.
    shape
        ``M x d`` token shape.
    steps
        Timestep the chain starts from, ``T`` by default.
    seed
        Seed of the initial noise and of the step noise.

    Raises
    ------
    :class:`NumericalError`
        If an intermediate sample is not finite; the message names the step.
    """
    rng = np.random.default_rng(seed)
    start = schedule.steps if steps is None else steps
    schedule.check(start)
    condition = (condition or Condition.empty()).detach()
    z = rng.standard_normal(shape)
    with no_grad():
        for t in range(start, 0, -1):
            z = p_sample_step(schedule, z, t, denoiser(z, t, condition).data, rng)
            if not np.all(np.isfinite(z)):
                raise NumericalError(f"Non-finite sample at reverse step t={t}")
            if t % 100 == 0:
                LOGGER.debug("Reverse diffusion at step %d.", t)
    return z
