# !/usr/bin/env python
"""Define the unit tests for the :mod:`radiff.numcore` module."""

import unittest

import numpy as np

from radiff.config import DiffusionConfig
from radiff.diffusion import Condition, Denoiser, ldm_loss, make_schedule
from radiff.errors import (
    ConfigurationError,
    NumericalError,
    ShapeError,
    ValidationError,
)
from radiff.numcore import (
    MLP,
    AdamW,
    Embedding,
    LayerNorm,
    Linear,
    LrSchedule,
    MultiHeadAttention,
    OptimizerState,
    Parameter,
    Tensor,
    TransformerBlock,
    adamw_step,
    concat,
    gradcheck,
    lr_value,
    no_grad,
    scaled_dot_product_attention,
    sinusoidal_embedding,
    softmax,
    stack,
    where,
)
from radiff.losses import chamfer, feature_loss, kl_regularizer, stage_density_loss
from radiff.values import ScheduleKind

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "TestTensor",
    "TestLayers",
    "TestMicroNetworks",
    "TestOptimizer",
]

TOLERANCE = 1e-5


def _away_from_zero(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return rng.uniform(0.5, 1.5, shape) * rng.choice([-1.0, 1.0], shape)


class TestTensor(unittest.TestCase):
    """
    Define tests for the reverse-mode differentiation of :class:`Tensor`.
    """

    def setUp(self):
        self.rng = np.random.default_rng(4)

    def test_elementwise_gradients(self):
        """
        Test the gradients of the element-wise functions against finite
        differences.
        """
        x = Tensor(_away_from_zero(self.rng, (3, 2)), requires_grad=True)
        positive = Tensor(self.rng.uniform(0.5, 2.0, (3, 2)), requires_grad=True)
        functions = [
            lambda: (x * x + 3.0 * x - 1.0).sum(),
            lambda: (x.exp() / (positive + 1.0)).sum(),
            lambda: (positive.log() * positive.sqrt()).sum(),
            lambda: (x.tanh() + x.sigmoid() + x.silu() + x.softplus()).sum(),
            lambda: (x.relu() * x.abs()).sum(),
            lambda: (x**3).mean(),
            lambda: (1.0 / positive - (2.0 - x)).sum(),
        ]
        for function in functions:
            self.assertLess(gradcheck(function, [x, positive]), TOLERANCE)

    def test_reduction_and_shape_gradients(self):
        """
        Test the gradients of reductions, reshapes and indexing.
        """
        x = Tensor(self.rng.normal(size=(2, 3, 4)), requires_grad=True)
        functions = [
            lambda: (x.sum(axis=1) ** 2).sum(),
            lambda: (x.mean(axis=(0, 2)) ** 2).sum(),
            lambda: x.max(axis=-1).sum(),
            lambda: (x.reshape(6, 4).T ** 2).sum(),
            lambda: (x.transpose(2, 0, 1)[1] ** 2).sum(),
            lambda: (x[:, [0, 0, 2]] ** 2).sum(),
            lambda: (concat([x, x * 2.0], axis=1) ** 2).sum(),
            lambda: (stack([x[0], x[1]], axis=-1) ** 2).sum(),
            lambda: (softmax(x, axis=-1) * Tensor(np.arange(4.0))).sum(),
            lambda: where(x.data > 0, x, x * 0.1).sum(),
        ]
        for function in functions:
            self.assertLess(gradcheck(function, [x]), TOLERANCE)

    def test_matmul_gradients(self):
        """
        Test the gradients of batched matrix products with broadcast operands.
        """
        a = Tensor(self.rng.normal(size=(2, 3, 4)), requires_grad=True)
        b = Tensor(self.rng.normal(size=(4, 5)), requires_grad=True)
        self.assertLess(gradcheck(lambda: ((a @ b) ** 2).sum(), [a, b]), TOLERANCE)

    def test_broadcast_gradient(self):
        """
        Test that gradients of broadcast operands are summed back to their
        shape.
        """
        bias = Tensor(np.zeros(3), requires_grad=True)
        x = Tensor(np.ones((4, 3)))
        (x + bias).sum().backward()
        np.testing.assert_array_equal(bias.grad, np.full(3, 4.0))

    def test_shared_subexpression(self):
        """
        Test that a tensor used twice accumulates both gradient paths.
        """
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = x * x
        (y + y).sum().backward()
        np.testing.assert_array_equal(x.grad, [8.0])

    def test_shape_errors(self):
        """
        Test that incompatible operands raise :class:`ShapeError`.
        """
        with self.assertRaises(ShapeError):
            Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))
        with self.assertRaises(ShapeError):
            Tensor(np.ones(3)) + Tensor(np.ones(4))
        with self.assertRaises(ShapeError):
            Tensor(np.ones(6)).reshape(4, 2)
        with self.assertRaises(ShapeError):
            Tensor(np.ones(3)).item()
        with self.assertRaises(ShapeError):
            Tensor(np.ones(3), requires_grad=True).backward()

    def test_no_grad(self):
        """
        Test that no graph is recorded inside :func:`no_grad`.
        """
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = (x * 2.0).sum()
        self.assertFalse(y.requires_grad)
        y.backward()
        self.assertIsNone(x.grad)
        self.assertTrue((x * 2.0).requires_grad)

    def test_softmax_rows(self):
        """
        Test that softmax rows sum to one, also for large logits.
        """
        logits = Tensor(np.array([[1000.0, 1000.0], [0.0, -1000.0]]))
        np.testing.assert_array_almost_equal(
            softmax(logits).data.sum(axis=-1), [1.0, 1.0]
        )
        np.testing.assert_array_almost_equal(softmax(logits).data[0], [0.5, 0.5])


class TestLayers(unittest.TestCase):
    """
    Define tests for the trainable layers and :class:`Module` bookkeeping.
    """

    def setUp(self):
        self.rng = np.random.default_rng(11)

    def test_linear(self):
        """
        Test :class:`Linear` on batched and one-dimensional inputs.
        """
        layer = Linear(3, 2, self.rng)
        x = self.rng.normal(size=(5, 3))
        np.testing.assert_array_almost_equal(
            layer(Tensor(x)).data, x @ layer.weight.data + layer.bias.data
        )
        self.assertEqual(layer(Tensor(x[0])).shape, (2,))
        with self.assertRaises(ShapeError):
            layer(Tensor(np.ones((5, 4))))

    def test_layer_norm(self):
        """
        Test that :class:`LayerNorm` standardizes the last axis.
        """
        out = LayerNorm(8)(Tensor(self.rng.normal(3.0, 5.0, size=(4, 8)))).data
        np.testing.assert_array_almost_equal(out.mean(axis=-1), np.zeros(4))
        np.testing.assert_array_almost_equal(out.std(axis=-1), np.ones(4), decimal=4)

    def test_embedding(self):
        """
        Test :class:`Embedding` lookups and the rejection of unknown ids.
        """
        table = Embedding(5, 4, self.rng)
        np.testing.assert_array_equal(table([4, 0]).data, table.weight.data[[4, 0]])
        with self.assertRaises(ValidationError):
            table([5])

    def test_attention_mask(self):
        """
        Test that masked keys receive zero attention weight.
        """
        queries = Tensor(self.rng.normal(size=(3, 4)))
        keys = Tensor(self.rng.normal(size=(5, 4)))
        mask = np.array([True, False, True, False, False])
        attended, weights = scaled_dot_product_attention(queries, keys, keys, mask)
        np.testing.assert_array_equal(weights.data[:, ~mask], np.zeros((3, 3)))
        np.testing.assert_array_almost_equal(weights.data.sum(axis=-1), np.ones(3))
        self.assertEqual(attended.shape, (3, 4))

    def test_attention_heads(self):
        """
        Test that attention rejects widths not divisible by the head count.
        """
        with self.assertRaises(ConfigurationError):
            MultiHeadAttention(6, 4, self.rng)

    def test_transformer_block_gradients(self):
        """
        Test the parameter and input gradients of a transformer block with
        cross-attention.
        """
        block = TransformerBlock(4, 2, self.rng, context_width=3)
        x = Tensor(self.rng.normal(size=(3, 4)), requires_grad=True)
        context = Tensor(self.rng.normal(size=(2, 3)), requires_grad=True)
        inputs = [x, context, *block.parameters().values()]
        self.assertLess(
            gradcheck(lambda: (block(x, context) ** 2).sum(), inputs), 1e-4
        )

    def test_transformer_block_equivariance(self):
        """
        Test that a transformer block commutes with token permutations.
        """
        block = TransformerBlock(8, 2, self.rng)
        x = self.rng.normal(size=(6, 8))
        permutation = self.rng.permutation(6)
        np.testing.assert_array_almost_equal(
            block(Tensor(x[permutation])).data, block(Tensor(x)).data[permutation]
        )

    def test_state_dict(self):
        """
        Test the state round trip, the state validation and the checksum.
        """
        network = MLP([3, 4, 2], self.rng)
        other = MLP([3, 4, 2], np.random.default_rng(12))
        self.assertNotEqual(network.checksum(), other.checksum())
        other.load_state_dict(network.state_dict())
        self.assertEqual(network.checksum(), other.checksum())
        self.assertEqual(
            sorted(network.parameters()),
            ["layers.0.bias", "layers.0.weight", "layers.1.bias", "layers.1.weight"],
        )
        self.assertEqual(network.parameter_count(), 3 * 4 + 4 + 4 * 2 + 2)

        state = network.state_dict()
        del state["layers.0.bias"]
        with self.assertRaises(ValidationError):
            other.load_state_dict(state)
        state = network.state_dict()
        state["layers.0.bias"] = np.zeros(5)
        with self.assertRaises(ShapeError):
            other.load_state_dict(state)

    def test_sinusoidal_embedding(self):
        """
        Test the sinusoidal embedding layout and its width check.
        """
        embedding = sinusoidal_embedding([0.0, 1.0], 6).data
        self.assertEqual(embedding.shape, (2, 6))
        np.testing.assert_array_almost_equal(
            embedding[1, :3], np.sin([1.0, 10000 ** (-1 / 3), 10000 ** (-2 / 3)])
        )
        np.testing.assert_array_almost_equal(embedding[0], [0, 0, 0, 1, 1, 1])
        with self.assertRaises(ConfigurationError):
            sinusoidal_embedding([0.0], 5)


def _leaf(rng: np.random.Generator, shape: tuple[int, ...]) -> Tensor:
    return Tensor(rng.normal(size=shape), requires_grad=True)


def _mlp_case(rng: np.random.Generator):
    sizes = [int(rng.integers(2, 5)) for _ in range(int(rng.integers(2, 5)))]
    network = MLP(sizes, rng)
    x = _leaf(rng, (int(rng.integers(1, 4)), sizes[0]))
    return lambda: (network(x) ** 2).sum(), [x, *network.parameters().values()]


def _self_attention_case(rng: np.random.Generator):
    heads = int(rng.integers(1, 3))
    attention = MultiHeadAttention(2 * heads, heads, rng)
    x = _leaf(rng, (int(rng.integers(2, 5)), 2 * heads))
    return lambda: (attention(x, x) ** 2).sum(), [
        x,
        *attention.parameters().values(),
    ]


def _cross_attention_case(rng: np.random.Generator):
    heads = int(rng.integers(1, 3))
    attention = MultiHeadAttention(2 * heads, heads, rng, int(rng.integers(2, 4)))
    x = _leaf(rng, (int(rng.integers(1, 4)), 2 * heads))
    context = _leaf(rng, (int(rng.integers(1, 4)), attention.key.in_features))
    return lambda: (attention(x, context) ** 2).sum(), [
        x,
        context,
        *attention.parameters().values(),
    ]


def _chamfer_case(rng: np.random.Generator):
    a = _leaf(rng, (int(rng.integers(2, 8)), 3))
    b = _leaf(rng, (int(rng.integers(2, 8)), 3))
    return lambda: chamfer(a, b), [a, b]


def _feature_case(rng: np.random.Generator):
    count = int(rng.integers(2, 8))
    features = _leaf(rng, (count, 2))
    reconstructed = _leaf(rng, (int(rng.integers(2, 8)), 2))
    positions = rng.normal(size=(count, 3))
    reconstructed_positions = rng.normal(size=(reconstructed.shape[0], 3))
    return (
        lambda: feature_loss(
            features, reconstructed, positions, reconstructed_positions
        ),
        [features, reconstructed],
    )


def _density_case(rng: np.random.Generator):
    count = int(rng.integers(1, 6))
    counts = rng.integers(1, 8, count).astype(np.float64)
    distances = rng.uniform(0.1, 0.5, count)
    predicted_counts = Tensor(
        counts + _away_from_zero(rng, (count,)), requires_grad=True
    )
    predicted_distances = Tensor(
        distances + 0.05 * _away_from_zero(rng, (count,)), requires_grad=True
    )
    return (
        lambda: stage_density_loss(
            counts, distances, predicted_counts, predicted_distances
        ),
        [predicted_counts, predicted_distances],
    )


def _kl_case(rng: np.random.Generator):
    shape = (int(rng.integers(1, 5)), int(rng.integers(1, 4)))
    mean, log_variance = _leaf(rng, shape), _leaf(rng, shape)
    return lambda: kl_regularizer(mean, log_variance), [mean, log_variance]


def _noise_prediction_case(rng: np.random.Generator):
    config = DiffusionConfig(
        width=4, blocks=1, heads=2, time_dim=4, condition_width=4
    )
    token_dim = int(rng.integers(2, 4))
    denoiser = Denoiser(config, token_dim, seed=int(rng.integers(1000)))
    batch = rng.normal(size=(2, int(rng.integers(2, 4)), token_dim))
    tokens = _leaf(rng, (int(rng.integers(1, 3)), 4))
    schedule = make_schedule(steps=50)
    seed = int(rng.integers(1000))

    def function():
        condition = Condition(tokens.mean(axis=0), tokens)
        return ldm_loss(
            batch,
            [condition] * len(batch),
            denoiser,
            schedule,
            np.random.default_rng(seed),
        )

    return function, [tokens, *denoiser.parameters().values()]


class TestMicroNetworks(unittest.TestCase):
    """
    Define gradient checks of small random networks and objectives.
    """

    def test_gradients(self):
        """
        Test the reverse-mode gradients of random multi-layer perceptrons,
        self and cross attention, the autoencoder loss terms and the noise
        prediction objective against finite differences.
        """
        builders = [
            _mlp_case,
            _self_attention_case,
            _cross_attention_case,
            _chamfer_case,
            _feature_case,
            _density_case,
            _kl_case,
            _noise_prediction_case,
        ]
        rng = np.random.default_rng(2024)
        cases = 0
        for _ in range(7):
            for builder in builders:
                function, inputs = builder(rng)
                with self.subTest(case=builder.__name__, index=cases):
                    self.assertLess(gradcheck(function, inputs), 1e-4)
                cases += 1
        self.assertGreaterEqual(cases, 50)


class TestOptimizer(unittest.TestCase):
    """
    Define tests for *AdamW* and the learning rate schedules.
    """

    def test_first_step(self):
        """
        Test that the first bias-corrected step moves by the learning rate
        against the gradient sign.
        """
        params = {"w": Parameter(np.array([1.0, -2.0]))}
        adamw_step(OptimizerState(lr=0.01), params, {"w": np.array([3.0, -0.5])})
        np.testing.assert_array_almost_equal(params["w"].data, [0.99, -1.99])

    def test_weight_decay(self):
        """
        Test that decoupled weight decay shrinks parameters without gradient.
        """
        params = {"w": Parameter(np.array([2.0]))}
        adamw_step(OptimizerState(lr=0.1, weight_decay=0.5), params, {})
        np.testing.assert_array_almost_equal(params["w"].data, [1.9])

    def test_non_finite_gradient(self):
        """
        Test that a non-finite gradient raises and leaves parameters intact.
        """
        params = {"w": Parameter(np.array([1.0])), "v": Parameter(np.array([1.0]))}
        state = OptimizerState(lr=0.1)
        with self.assertRaises(NumericalError):
            adamw_step(state, params, {"w": np.array([1.0]), "v": np.array([np.nan])})
        np.testing.assert_array_equal(params["w"].data, [1.0])
        self.assertEqual(state.step, 0)

    def test_minimizes_quadratic(self):
        """
        Test that :class:`AdamW` minimizes a quadratic bowl.
        """
        target = np.array([0.5, -1.5, 2.0])
        weight = Parameter(np.zeros(3))
        optimizer = AdamW({"weight": weight}, OptimizerState(lr=0.05))
        for _ in range(500):
            ((weight - target) ** 2).sum().backward()
            optimizer.step()
            optimizer.zero_grad()
        np.testing.assert_array_almost_equal(weight.data, target, decimal=2)

    def test_step_decay(self):
        """
        Test the step-decay schedule.
        """
        schedule = LrSchedule(ScheduleKind.STEP_DECAY, 1e-3, 300, 45, 0.5)
        self.assertAlmostEqual(lr_value(schedule, 0), 1e-3)
        self.assertAlmostEqual(lr_value(schedule, 44), 1e-3)
        self.assertAlmostEqual(lr_value(schedule, 90), 2.5e-4)
        self.assertAlmostEqual(lr_value(schedule, 299), 1e-3 * 0.5**6)

    def test_one_cycle(self):
        """
        Test the end points and the peak of the one-cycle schedule.
        """
        schedule = LrSchedule(ScheduleKind.ONE_CYCLE, 1e-4, 1000)
        values = [lr_value(schedule, step) for step in range(1000)]
        self.assertAlmostEqual(values[0], 1e-4 / 25.0)
        self.assertAlmostEqual(max(values), 1e-4)
        self.assertEqual(int(np.argmax(values)), schedule.peak_step())
        self.assertAlmostEqual(values[-1], 1e-4 / 1e4)
        with self.assertRaises(ConfigurationError):
            lr_value(schedule, 1000)

    def test_schedule_validation(self):
        """
        Test the rejection of invalid schedules.
        """
        with self.assertRaises(ConfigurationError):
            LrSchedule(ScheduleKind.ONE_CYCLE, 0.0, 10)
        with self.assertRaises(ConfigurationError):
            LrSchedule(ScheduleKind.STEP_DECAY, 1e-3, 10, gamma=1.5)


if __name__ == "__main__":
    unittest.main()
