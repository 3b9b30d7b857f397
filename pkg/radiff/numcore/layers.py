"""
Layers
======

Defines the trainable building blocks shared by the autoencoder, the denoiser
and the condition encoders: linear maps, multi-layer perceptrons, layer
normalization, embedding tables, multi-head attention and pre-normalized
transformer blocks.

"""

from __future__ import annotations

import hashlib
import math
from collections.abc import Iterator, Sequence

import numpy as np
import numpy.typing as npt

from radiff.errors import ConfigurationError, ShapeError, ValidationError
from radiff.numcore.tensor import Parameter, Tensor, softmax

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "Module",
    "ModuleList",
    "Linear",
    "MLP",
    "LayerNorm",
    "Embedding",
    "scaled_dot_product_attention",
    "attention_block",
    "MultiHeadAttention",
    "FeedForward",
    "TransformerBlock",
    "sinusoidal_embedding",
    "activate",
]

MASKED_LOGIT = -1e30


def activate(x: Tensor, activation: str | None) -> Tensor:
    """
    Apply the named activation function to ``x``.

    Parameters
    ----------
    x
        Input tensor.
    activation
        One of ``"silu"``, ``"relu"``, ``"tanh"``, ``"sigmoid"``,
        ``"softplus"`` or :py:data:`None` for the identity.
    """
    if activation is None:
        return x
    if activation == "silu":
        return x.silu()
    if activation == "relu":
        return x.relu()
    if activation == "tanh":
        return x.tanh()
    if activation == "sigmoid":
        return x.sigmoid()
    if activation == "softplus":
        return x.softplus()
    raise ConfigurationError(f"Unknown activation function '{activation}'")


class Module:
    """
    Define the base class of objects owning trainable parameters.

    Parameters are discovered by walking the instance attributes in
    definition order: :class:`Parameter` attributes are leaves, :class:`Module`
    attributes and :class:`ModuleList` items are recursed into.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        """Yield ``(name, parameter)`` pairs with dotted names."""
        for attribute, value in vars(self).items():
            name = f"{prefix}{attribute}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")

    def parameters(self) -> dict[str, Parameter]:
        """Return the parameters keyed by their dotted names."""
        return dict(self.named_parameters())

    def zero_grad(self) -> None:
        """Reset the gradients of all parameters."""
        for _, parameter in self.named_parameters():
            parameter.grad = None

    def parameter_count(self) -> int:
        """Return the number of scalar parameters."""
        return sum(p.size for _, p in self.named_parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        """Return copies of the parameter values keyed by name."""
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, npt.ArrayLike]) -> None:
        """
        Overwrite the parameter values from ``state``.

        Raises
        ------
        :class:`ValidationError`
            If names are missing or unexpected.
        :class:`ShapeError`
            If a value does not match the shape of its parameter.
        """
        parameters = self.parameters()
        missing = sorted(set(parameters) - set(state))
        unexpected = sorted(set(state) - set(parameters))
        if missing or unexpected:
            raise ValidationError(
                f"State does not match module parameters; missing: {missing}, "
                f"unexpected: {unexpected}"
            )
        for name, parameter in parameters.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != parameter.shape:
                raise ShapeError(
                    f"Parameter '{name}' has shape {parameter.shape} but the state "
                    f"holds shape {value.shape}"
                )
            parameter.data = np.ascontiguousarray(value).copy()

    def checksum(self) -> str:
        """Return a SHA-256 digest over names and values of all parameters."""
        digest = hashlib.sha256()
        for name, parameter in sorted(self.named_parameters()):
            digest.update(name.encode("utf-8"))
            digest.update(parameter.data.tobytes())
        return digest.hexdigest()


class ModuleList(Module):
    """
    Holds an ordered sequence of modules, named by their index.
    """

    def __init__(self, modules: Sequence[Module] = ()) -> None:
        self._modules = list(modules)

    def named_parameters(  # noqa: D102
        self, prefix: str = ""
    ) -> Iterator[tuple[str, Parameter]]:
        for index, module in enumerate(self._modules):
            yield from module.named_parameters(f"{prefix}{index}.")

    def append(self, module: Module) -> None:
        """Append a module."""
        self._modules.append(module)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._modules)

    def __len__(self) -> int:
        return len(self._modules)

    def __getitem__(self, index: int) -> Module:
        return self._modules[index]


class Linear(Module):
    """
    Represents the affine map ``x @ W + b`` over the last axis.

    Weights are drawn uniformly from ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``;
    biases start at zero.
    """

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        bias: bool = True,
        scale: float = 1.0,
    ) -> None:
        bound = scale / math.sqrt(in_features)
        self.weight = Parameter(rng.uniform(-bound, bound, (in_features, out_features)))
        self.bias = Parameter(np.zeros(out_features)) if bias else None
        self.in_features = in_features
        self.out_features = out_features

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ShapeError(
                f"Linear layer expects last extent {self.in_features}, got input of "
                f"shape {x.shape}"
            )
        if x.ndim >= 2:
            out = x @ self.weight
        else:
            out = (x.reshape(1, -1) @ self.weight).reshape(-1)
        if self.bias is not None:
            out = out + self.bias
        return out


class MLP(Module):
    """
    Represents a stack of :class:`Linear` layers with an activation between
    consecutive layers.

    Parameters
    ----------
    sizes
        Widths ``[in, hidden..., out]``.
    rng
        Random generator for the initialization.
    activation
        Activation between layers.
    final_activation
        Activation applied after the last layer.
    """

    def __init__(
        self,
        sizes: Sequence[int],
        rng: np.random.Generator,
        activation: str = "silu",
        final_activation: str | None = None,
    ) -> None:
        if len(sizes) < 2:
            raise ConfigurationError(f"An MLP needs at least two sizes, got {sizes}")
        self.layers = ModuleList(
            [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        )
        self.activation = activation
        self.final_activation = final_activation

    def __call__(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for index, layer in enumerate(self.layers):
            x = layer(x)
            x = activate(x, self.activation if index < last else self.final_activation)
        return x


class LayerNorm(Module):
    """
    Represents layer normalization over the last axis with a learned gain and
    offset.
    """

    def __init__(self, width: int, eps: float = 1e-5) -> None:
        self.gain = Parameter(np.ones(width))
        self.offset = Parameter(np.zeros(width))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        centred = x - x.mean(axis=-1, keepdims=True)
        variance = (centred * centred).mean(axis=-1, keepdims=True)
        return centred / (variance + self.eps).sqrt() * self.gain + self.offset


class Embedding(Module):
    """
    Represents a lookup table mapping integer ids to learned vectors.
    """

    def __init__(self, rows: int, width: int, rng: np.random.Generator) -> None:
        self.weight = Parameter(rng.normal(0.0, 1.0 / math.sqrt(width), (rows, width)))
        self.rows = rows

    def __call__(self, ids: npt.ArrayLike) -> Tensor:
        index = np.asarray(ids, dtype=np.int64)
        if index.size and (index.min() < 0 or index.max() >= self.rows):
            raise ValidationError(
                f"Embedding ids must lie in [0, {self.rows - 1}], got range "
                f"[{index.min()}, {index.max()}]"
            )
        return self.weight[index]


def scaled_dot_product_attention(
    queries: Tensor,
    keys: Tensor,
    values: Tensor,
    key_mask: np.ndarray | None = None,
) -> tuple[Tensor, Tensor]:
    """
    Compute ``softmax(Q K^T / sqrt(d)) V`` over the last two axes.

    Parameters
    ----------
    queries
        Tensor of shape ``(..., M, d)``.
    keys
        Tensor of shape ``(..., K, d)``.
    values
        Tensor of shape ``(..., K, d_v)``.
    key_mask
        Optional boolean array broadcastable to ``(..., M, K)``; ``False``
        entries are excluded from the softmax.

    Returns
    -------
    :class:`tuple`
        Attended values ``(..., M, d_v)`` and the attention weights
        ``(..., M, K)``, whose rows sum to one.
    """
    scale = 1.0 / math.sqrt(queries.shape[-1])
    logits = (queries @ keys.swapaxes(-1, -2)) * scale
    if key_mask is not None:
        logits = logits + np.where(key_mask, 0.0, MASKED_LOGIT)
    weights = softmax(logits, axis=-1)
    return weights @ values, weights


class MultiHeadAttention(Module):
    """
    Represents multi-head scaled dot-product attention with query, key, value
    and output projections. Self-attention is the case where queries and
    keys/values are the same tensor.

    Parameters
    ----------
    width
        Width ``w`` of the queries and of the output.
    heads
        Number of heads, ``w`` must be divisible by it.
    rng
        Random generator for the initialization.
    context_width
        Width of the keys/values input, ``w`` by default.

    Raises
    ------
    :class:`ConfigurationError`
        If ``width`` is not divisible by ``heads``.
    """

    def __init__(
        self,
        width: int,
        heads: int,
        rng: np.random.Generator,
        context_width: int | None = None,
    ) -> None:
        if heads < 1 or width % heads != 0:
            raise ConfigurationError(
                f"Attention width {width} is not divisible by {heads} heads"
            )
        context_width = width if context_width is None else context_width
        self.query = Linear(width, width, rng, bias=False)
        self.key = Linear(context_width, width, rng, bias=False)
        self.value = Linear(context_width, width, rng)
        self.output = Linear(width, width, rng)
        self.width = width
        self.heads = heads
        self.last_weights: np.ndarray | None = None

    def _split(self, x: Tensor) -> Tensor:
        *batch, rows, _ = x.shape
        heads = x.reshape(*batch, rows, self.heads, self.width // self.heads)
        return heads.swapaxes(-2, -3)

    def __call__(
        self,
        queries: Tensor,
        keys_values: Tensor,
        key_mask: np.ndarray | None = None,
    ) -> Tensor:
        if queries.shape[-1] != self.width:
            raise ShapeError(
                f"Attention expects queries of width {self.width}, got shape "
                f"{queries.shape}"
            )
        q = self._split(self.query(queries))
        k = self._split(self.key(keys_values))
        v = self._split(self.value(keys_values))
        mask = None
        if key_mask is not None:
            mask = np.asarray(key_mask, dtype=bool)[..., None, None, :]
        attended, weights = scaled_dot_product_attention(q, k, v, mask)
        self.last_weights = weights.data
        *batch, _, rows, _ = attended.shape
        merged = attended.swapaxes(-2, -3).reshape(*batch, rows, self.width)
        return self.output(merged)


def attention_block(
    queries: Tensor,
    keys_values: Tensor,
    heads: int,
    rng: np.random.Generator,
) -> Tensor:
    """
    Apply a freshly initialized :class:`MultiHeadAttention` of ``heads`` heads
    to ``queries`` attending ``keys_values``.

    Examples
    --------
    ```
    >>> import numpy as np
    >>> from radiff.numcore import Tensor
    >>> rng = np.random.default_rng(0)
    >>> attention_block(Tensor(np.ones((3, 4))), Tensor(np.ones((1, 4))), 2, rng).shape
    (3, 4)

    ```
    """
    return MultiHeadAttention(queries.shape[-1], heads, rng, keys_values.shape[-1])(
        queries, keys_values
    )


class FeedForward(Module):
    """
    Represents the position-wise two-layer feed-forward network of a
    transformer block.
    """

    def __init__(
        self, width: int, rng: np.random.Generator, expansion: int = 2
    ) -> None:
        self.network = MLP([width, expansion * width, width], rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.network(x)


class TransformerBlock(Module):
    """
    Represents a pre-normalized transformer block: self-attention, optional
    cross-attention to a context token set, then a feed-forward network, each
    wrapped in a residual connection.

    Cross-attention is skipped when the block is called without context or
    with an empty context.
    """

    def __init__(
        self,
        width: int,
        heads: int,
        rng: np.random.Generator,
        context_width: int | None = None,
    ) -> None:
        self.self_norm = LayerNorm(width)
        self.self_attention = MultiHeadAttention(width, heads, rng)
        self.cross_norm = LayerNorm(width) if context_width else None
        self.cross_attention = (
            MultiHeadAttention(width, heads, rng, context_width)
            if context_width
            else None
        )
        self.feed_forward_norm = LayerNorm(width)
        self.feed_forward = FeedForward(width, rng)

    def __call__(
        self,
        x: Tensor,
        context: Tensor | None = None,
        mask: np.ndarray | None = None,
        context_mask: np.ndarray | None = None,
    ) -> Tensor:
        h = self.self_norm(x)
        x = x + self.self_attention(h, h, mask)
        if (
            self.cross_attention is not None
            and self.cross_norm is not None
            and context is not None
            and context.shape[-2] > 0
        ):
            x = x + self.cross_attention(self.cross_norm(x), context, context_mask)
        return x + self.feed_forward(self.feed_forward_norm(x))


def sinusoidal_embedding(
    positions: npt.ArrayLike, width: int, base: float = 10000.0
) -> Tensor:
    """
    Return sinusoidal embeddings of shape ``(*positions.shape, width)``.

    The first half of the channels holds sines and the second half cosines of
    ``position / base^(2i / width)``.

    Examples
    --------
    ```
    >>> sinusoidal_embedding([0.0], 4).data
    array([[0., 0., 1., 1.]])

    ```
    """
    if width % 2 != 0:
        raise ConfigurationError(
            f"Sinusoidal embedding width must be even, got {width}"
        )
    values = np.asarray(positions, dtype=np.float64)[..., None]
    half = width // 2
    frequencies = base ** (-np.arange(half, dtype=np.float64) / half)
    angles = values * frequencies
    return Tensor(np.concatenate([np.sin(angles), np.cos(angles)], axis=-1))

