"""
Optimisation
============

Defines the decoupled weight decay *Adam* optimizer and the learning rate
schedules used to train the autoencoder and the denoiser.

"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from radiff.errors import ConfigurationError, NumericalError, ShapeError
from radiff.numcore.tensor import Parameter
from radiff.values import ScheduleKind

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "OptimizerState",
    "adamw_step",
    "AdamW",
    "LrSchedule",
    "lr_value",
]


@dataclass
class OptimizerState:
    """
    Holds the moment accumulators and hyper-parameters of *AdamW*.

    Parameters
    ----------
    lr
        Learning rate, overwritten by the schedule before each step.
    beta1
        Decay of the first moment.
    beta2
        Decay of the second moment.
    eps
        Denominator offset.
    weight_decay
        Decoupled weight decay; ``0`` gives plain *Adam*.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    first_moments: dict[str, np.ndarray] = field(default_factory=dict)
    second_moments: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(
    state: OptimizerState,
    params: dict[str, Parameter],
    grads: dict[str, np.ndarray] | None = None,
) -> dict[str, Parameter]:
    """
    Apply one bias-corrected *Adam* update with decoupled weight decay to
    ``params`` in place.

    Parameters
    ----------
    state
        Optimizer state, its step counter is incremented.
    params
        Parameters keyed by name.
    grads
        Gradients keyed by name, the ``grad`` attribute of each parameter by
        default. Parameters without gradient are only decayed.

    Returns
    -------
    :class:`dict`
        The updated ``params``.

    Raises
    ------
    :class:`NumericalError`
        If a gradient holds a non-finite value; no parameter is modified.
    :class:`ShapeError`
        If a gradient does not match its parameter.

    Examples
    --------
    ```
    >>> import numpy as np
    >>> from radiff.numcore import Parameter
    >>> theta = {"theta": Parameter(np.array([0.0]))}
    >>> state = OptimizerState(lr=0.1)
    >>> _ = adamw_step(state, theta, {"theta": np.array([1.0])})
    >>> np.round(theta["theta"].data, 6)
    array([-0.1])

    ```
    """
    if grads is None:
        grads = {name: p.grad for name, p in params.items() if p.grad is not None}
    for name, grad in grads.items():
        if grad.shape != params[name].shape:
            raise ShapeError(
                f"Gradient of '{name}' has shape {grad.shape}, parameter has "
                f"shape {params[name].shape}"
            )
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"Non-finite gradient for parameter '{name}'")

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for name, parameter in params.items():
        if state.weight_decay:
            parameter.data = parameter.data * (1.0 - state.lr * state.weight_decay)
        grad = grads.get(name)
        if grad is None:
            continue
        m = state.first_moments.get(name)
        v = state.second_moments.get(name)
        if m is None or v is None:
            m = np.zeros_like(parameter.data)
            v = np.zeros_like(parameter.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moments[name] = m
        state.second_moments[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        update = m_hat / (np.sqrt(v_hat) + state.eps)
        parameter.data = parameter.data - state.lr * update
    return params


class AdamW:
    """
    Binds an :class:`OptimizerState` to a set of parameters.
    """

    def __init__(self, params: dict[str, Parameter], state: OptimizerState) -> None:
        self.params = params
        self.state = state

    def zero_grad(self) -> None:
        """Reset the gradients of all bound parameters."""
        for parameter in self.params.values():
            parameter.grad = None

    def step(self, lr: float | None = None) -> None:
        """Update the bound parameters from their gradients."""
        if lr is not None:
            self.state.lr = lr
        adamw_step(self.state, self.params)


@dataclass(frozen=True)
class LrSchedule:
    """
    Describes a learning rate schedule.

    Parameters
    ----------
    kind
        Schedule kind.
    max_lr
        Peak rate (one-cycle) or base rate (step-decay, constant).
    total
        Number of steps (one-cycle) or epochs (step-decay) the schedule spans.
    step_size
        Epochs between two decays of the step-decay schedule.
    gamma
        Multiplicative decay of the step-decay schedule.
    pct_start
        Fraction of the one-cycle schedule spent warming up.
    div_factor
        One-cycle start rate is ``max_lr / div_factor``.
    final_div_factor
        One-cycle final rate is ``max_lr / final_div_factor``.
    """

    kind: ScheduleKind = ScheduleKind.CONSTANT
    max_lr: float = 1e-3
    total: int = 1
    step_size: int = 45
    gamma: float = 0.5
    pct_start: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4

    def __post_init__(self) -> None:
        if self.max_lr <= 0 or self.total < 1:
            raise ConfigurationError(
                f"Learning rate schedule needs max_lr > 0 and total >= 1, got "
                f"{self.max_lr} and {self.total}"
            )
        if self.step_size < 1 or not 0 < self.gamma <= 1:
            raise ConfigurationError(
                f"Step decay needs step_size >= 1 and gamma in (0, 1], got "
                f"{self.step_size} and {self.gamma}"
            )

    def peak_step(self) -> int:
        """Return the step at which the one-cycle schedule reaches ``max_lr``."""
        return math.floor(self.pct_start * (self.total - 1))


def _cosine(start: float, end: float, fraction: float) -> float:
    return end + (start - end) * (1.0 + math.cos(math.pi * fraction)) / 2.0


def lr_value(schedule: LrSchedule, step: int) -> float:
    """
    Return the learning rate of ``schedule`` at ``step``.

    The one-cycle schedule ramps with a cosine from ``max_lr / div_factor`` to
    ``max_lr`` at :meth:`LrSchedule.peak_step`, then anneals with a cosine to
    ``max_lr / final_div_factor`` at the last step. The step-decay schedule
    returns ``max_lr * gamma ** (step // step_size)``.

    Examples
    --------
    ```
    >>> from radiff.values import ScheduleKind
    >>> decay = LrSchedule(ScheduleKind.STEP_DECAY, 1e-3, 300, 45, 0.5)
    >>> lr_value(decay, 45)
    0.0005
    >>> cycle = LrSchedule(ScheduleKind.ONE_CYCLE, 1e-4, 1000)
    >>> lr_value(cycle, cycle.peak_step())
    0.0001

    ```
    """
    if not 0 <= step < schedule.total:
        raise ConfigurationError(
            f"Step {step} lies outside the schedule range [0, {schedule.total})"
        )
    if schedule.kind == ScheduleKind.CONSTANT:
        return schedule.max_lr
    if schedule.kind == ScheduleKind.STEP_DECAY:
        return schedule.max_lr * schedule.gamma ** (step // schedule.step_size)

    initial = schedule.max_lr / schedule.div_factor
    final = schedule.max_lr / schedule.final_div_factor
    peak = schedule.peak_step()
    if step <= peak:
        if peak == 0:
            return schedule.max_lr
        return _cosine(initial, schedule.max_lr, step / peak)
    remaining = schedule.total - 1 - peak
    return _cosine(schedule.max_lr, final, (step - peak) / remaining)
