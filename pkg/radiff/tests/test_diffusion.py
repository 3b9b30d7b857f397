# !/usr/bin/env python
"""Define the unit tests for the :mod:`radiff.diffusion` module."""

import unittest

import numpy as np

from radiff.conditioning import PillarEncoder, pillarize
from radiff.config import DiffusionConfig, PillarConfig
from radiff.diffusion import (
    Condition,
    Denoiser,
    ldm_loss,
    make_schedule,
    p_mean,
    p_sample_step,
    q_sample,
    sample,
)
from radiff.errors import ConfigurationError, ShapeError, ValidationError
from radiff.frames import RangeSpec
from radiff.numcore import Tensor
from radiff.values import Profile

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "TestSchedule",
    "TestDenoiser",
]

SMALL = DiffusionConfig(width=16, blocks=2, heads=2, time_dim=8, condition_width=8)


class TestSchedule(unittest.TestCase):
    """
    Define tests for the noise schedule and the forward and reverse steps.
    """

    def setUp(self):
        self.schedule = make_schedule()

    def test_linear_schedule(self):
        """
        Test the end points and the cumulative products of the schedule.
        """
        schedule = self.schedule
        self.assertEqual(schedule.steps, 1000)
        self.assertEqual(schedule.beta(1), 1e-4)
        self.assertEqual(schedule.beta(1000), 0.02)
        self.assertAlmostEqual(schedule.beta(500), 1e-4 + 499 / 999 * (0.02 - 1e-4))
        self.assertAlmostEqual(schedule.alpha(10), 1.0 - schedule.beta(10))
        self.assertAlmostEqual(schedule.alpha_bar(3), np.prod(1.0 - schedule.betas[:3]))
        self.assertTrue(np.all(np.diff(schedule.alpha_bars) < 0))
        self.assertLess(schedule.alpha_bar(1000), 1e-4)

    def test_check(self):
        """
        Test that timesteps outside ``[1, T]`` are rejected.
        """
        self.assertEqual(self.schedule.check(1), 0)
        self.assertEqual(self.schedule.check(1000), 999)
        for t in (0, 1001, -3):
            with self.assertRaises(ValidationError):
                self.schedule.check(t)

    def test_fail_on_invalid_schedule(self):
        """
        Test the rejection of invalid schedule parameters.
        """
        for arguments in (
            (0.0, 0.02, 10),
            (0.02, 1e-4, 10),
            (1e-4, 1.0, 10),
            (1e-4, 0.02, 1),
        ):
            with self.assertRaises(ConfigurationError, msg=str(arguments)):
                make_schedule(*arguments)

    def test_q_sample_moments(self):
        """
        Test the mean and variance of the forward process.
        """
        rng = np.random.default_rng(0)
        t = 300
        z0 = np.full((20000, 2), 1.5)
        z_t = q_sample(self.schedule, z0, t, rng.standard_normal(z0.shape))
        alpha_bar = self.schedule.alpha_bar(t)
        np.testing.assert_allclose(
            z_t.mean(axis=0), 1.5 * np.sqrt(alpha_bar), atol=0.03
        )
        np.testing.assert_allclose(z_t.var(axis=0), 1.0 - alpha_bar, atol=0.03)

    def test_reverse_step(self):
        """
        Test that the exact noise recovers ``z0`` at ``t = 1`` and that the
        final step is deterministic.
        """
        rng = np.random.default_rng(1)
        z0 = rng.normal(size=(6, 4))
        noise = rng.standard_normal(z0.shape)
        z1 = q_sample(self.schedule, z0, 1, noise)
        np.testing.assert_array_almost_equal(p_mean(self.schedule, z1, 1, noise), z0)
        np.testing.assert_array_equal(
            p_sample_step(self.schedule, z1, 1, noise, np.random.default_rng(2)),
            p_sample_step(self.schedule, z1, 1, noise, np.random.default_rng(3)),
        )
        self.assertFalse(
            np.array_equal(
                p_sample_step(self.schedule, z1, 2, noise, np.random.default_rng(2)),
                p_sample_step(self.schedule, z1, 2, noise, np.random.default_rng(3)),
            )
        )


class TestDenoiser(unittest.TestCase):
    """
    Define tests for the noise prediction network, its objective and the
    sampler.
    """

    def setUp(self):
        self.denoiser = Denoiser(SMALL, token_dim=4, seed=0)
        rng = np.random.default_rng(4)
        self.z = rng.normal(size=(10, 4))
        self.condition = Condition(
            Tensor(rng.normal(size=8)), Tensor(rng.normal(size=(3, 8)))
        )

    def test_output_shape(self):
        """
        Test the shape of the noise prediction with and without condition.
        """
        self.assertEqual(self.denoiser(self.z, 5).shape, (10, 4))
        self.assertEqual(self.denoiser(self.z, 5, self.condition).shape, (10, 4))
        self.assertFalse(
            np.allclose(
                self.denoiser(self.z, 5).data,
                self.denoiser(self.z, 5, self.condition).data,
            )
        )
        self.assertFalse(
            np.allclose(self.denoiser(self.z, 5).data, self.denoiser(self.z, 900).data)
        )

    def test_fail_on_shape_mismatch(self):
        """
        Test that mismatching tokens and conditions are rejected.
        """
        with self.assertRaises(ShapeError):
            self.denoiser(np.zeros((10, 5)), 5)
        with self.assertRaises(ShapeError):
            self.denoiser(np.zeros(4), 5)
        with self.assertRaises(ShapeError):
            self.denoiser(self.z, 5, Condition(tokens=Tensor(np.zeros((2, 7)))))
        with self.assertRaises(ShapeError):
            self.denoiser(self.z, 5, Condition(global_embedding=Tensor(np.zeros(3))))

    def test_empty_scene_is_unconditional(self):
        """
        Test that an encoded scene without tokens takes the unconditional
        path whatever the global projection bias.
        """
        rng = np.random.default_rng(11)
        bias = self.denoiser.global_projection.bias
        bias.data[...] = rng.normal(size=bias.data.shape)
        encoder = PillarEncoder(PillarConfig(hidden=8), width=8, seed=0)
        empty = encoder(pillarize(np.zeros((0, 3)), RangeSpec.for_profile(Profile.TOY)))
        self.assertTrue(empty.is_empty)
        self.assertTrue(Condition.empty().is_empty)
        self.assertFalse(self.condition.is_empty)

        unconditional = self.denoiser(self.z, 10, Condition.empty()).data
        np.testing.assert_array_equal(
            self.denoiser(self.z, 10, empty).data, unconditional
        )
        global_only = Condition(global_embedding=Tensor(np.ones(8)))
        self.assertFalse(
            np.allclose(self.denoiser(self.z, 10, global_only).data, unconditional)
        )

    def test_permutation_equivariance(self):
        """
        Test that permuting the tokens permutes the noise prediction.
        """
        permutation = np.random.default_rng(5).permutation(10)
        np.testing.assert_array_almost_equal(
            self.denoiser(self.z[permutation], 7, self.condition).data,
            self.denoiser(self.z, 7, self.condition).data[permutation],
        )

    def test_ldm_loss(self):
        """
        Test that a zero prediction costs the token dimension on average and
        that the objective reaches the condition tokens.
        """
        self.denoiser.head.weight.data[...] = 0.0
        batch = np.random.default_rng(6).normal(size=(8, 64, 4))
        loss = ldm_loss(
            batch,
            [Condition.empty()] * 8,
            self.denoiser,
            make_schedule(),
            np.random.default_rng(7),
        )
        self.assertAlmostEqual(loss.item(), 4.0, delta=0.5)

        denoiser = Denoiser(SMALL, token_dim=4, seed=1)
        tokens = Tensor(
            np.random.default_rng(8).normal(size=(3, 8)), requires_grad=True
        )
        loss = ldm_loss(
            batch[:2],
            [Condition(tokens=tokens)] * 2,
            denoiser,
            make_schedule(),
            np.random.default_rng(9),
        )
        loss.backward()
        self.assertIsNotNone(tokens.grad)
        self.assertTrue(np.any(tokens.grad != 0))
        with self.assertRaises(ValidationError):
            ldm_loss(
                batch,
                [Condition.empty()],
                denoiser,
                make_schedule(),
                np.random.default_rng(0),
            )

    def test_sample(self):
        """
        Test that sampling is deterministic for a seed and honours the
        starting timestep.
        """
        schedule = make_schedule(steps=20)
        first = sample(self.denoiser, schedule, self.condition, (6, 4), seed=3)
        second = sample(self.denoiser, schedule, self.condition, (6, 4), seed=3)
        self.assertEqual(first.shape, (6, 4))
        np.testing.assert_array_equal(first, second)
        self.assertTrue(np.all(np.isfinite(first)))
        other = sample(self.denoiser, schedule, self.condition, (6, 4), seed=4)
        self.assertFalse(np.array_equal(first, other))
        short = sample(self.denoiser, schedule, None, (2, 4), steps=5)
        self.assertEqual(short.shape, (2, 4))
        with self.assertRaises(ValidationError):
            sample(self.denoiser, schedule, None, (2, 4), steps=21)


if __name__ == "__main__":
    unittest.main()
