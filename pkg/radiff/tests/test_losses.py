# !/usr/bin/env python
"""Define the unit tests for the :mod:`radiff.losses` module."""

import unittest

import numpy as np

from radiff.config import VaeConfig
from radiff.errors import ValidationError
from radiff.losses import (
    cardinality_loss,
    chamfer,
    feature_loss,
    kl_regularizer,
    nearest_indices,
    stage_density_loss,
    vae_loss,
)
from radiff.numcore import Tensor, gradcheck
from radiff.vae import PointVae

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "TestChamfer",
    "TestVaeTerms",
]


def _brute_force_chamfer(a: np.ndarray, b: np.ndarray) -> float:
    squared = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    return float(squared.min(axis=1).mean() + squared.min(axis=0).mean())


class TestChamfer(unittest.TestCase):
    """
    Define tests for the nearest neighbour search and the Chamfer distance.
    """

    def test_nearest_indices(self):
        """
        Test exhaustive nearest neighbour search and its tie breaking.
        """
        references = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 0.0]])
        np.testing.assert_array_equal(
            nearest_indices([[1.9, 0.1], [-1.0, 0.0], [1.0, 0.0]], references),
            [1, 0, 0],
        )
        with self.assertRaises(ValidationError):
            nearest_indices([[0.0, 0.0]], np.zeros((0, 2)))

    def test_chamfer_oracle(self):
        """
        Test the Chamfer distance against a brute force evaluation.
        """
        rng = np.random.default_rng(8)
        for size_a, size_b in ((7, 7), (5, 13), (40, 2)):
            a, b = rng.normal(size=(size_a, 3)), rng.normal(size=(size_b, 3))
            self.assertAlmostEqual(chamfer(a, b).item(), _brute_force_chamfer(a, b))
            self.assertAlmostEqual(chamfer(a, b).item(), chamfer(b, a).item())
        self.assertEqual(chamfer(a, a).item(), 0.0)
        with self.assertRaises(ValidationError):
            chamfer(np.zeros((0, 3)), a)

    def test_chamfer_gradient(self):
        """
        Test the Chamfer gradient with respect to the first set.
        """
        rng = np.random.default_rng(9)
        a = Tensor(rng.normal(size=(6, 3)), requires_grad=True)
        b = rng.normal(size=(9, 3))
        self.assertLess(gradcheck(lambda: chamfer(a, b), [a]), 1e-5)


class TestVaeTerms(unittest.TestCase):
    """
    Define tests for the autoencoder loss terms.
    """

    def test_feature_loss(self):
        """
        Test that reconstructed features are compared to the nearest ground
        truth point.
        """
        loss = feature_loss(
            [[1.0, 0.0], [0.0, 1.0]],
            [[0.5, 0.0], [0.0, 0.0], [0.0, 1.0]],
            [[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]],
            [[0.1, 0.0, 0.0], [4.0, 0.0, 0.0], [6.0, 0.0, 0.0]],
        )
        self.assertAlmostEqual(loss.item(), (0.25 + 1.0 + 0.0) / 3.0)

    def test_stage_density_loss(self):
        """
        Test the weighting of the count and distance errors.
        """
        loss = stage_density_loss(
            [3, 0], [0.2, 0.0], [2.5, 1.0], [0.3, 0.1], lambda_d=10.0
        )
        self.assertAlmostEqual(loss.item(), ((0.5 + 1.0) + (1.0 + 1.0)) / 2.0)

    def test_cardinality_loss(self):
        """
        Test the stage count differences.
        """
        self.assertEqual(cardinality_loss([512, 128], [500, 130]), 14)
        with self.assertRaises(ValidationError):
            cardinality_loss([512], [500, 130])

    def test_kl_regularizer(self):
        """
        Test the KL divergence closed form and its gradient.
        """
        self.assertEqual(kl_regularizer(np.zeros((3, 4)), np.zeros((3, 4))).item(), 0.0)
        self.assertAlmostEqual(
            kl_regularizer([[0.0, 2.0]], [[np.log(2.0), 0.0]]).item(),
            0.5 * ((2.0 - 1.0 - np.log(2.0)) + 4.0),
        )
        rng = np.random.default_rng(1)
        mean = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        log_variance = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        deviation = gradcheck(
            lambda: kl_regularizer(mean, log_variance), [mean, log_variance]
        )
        self.assertLess(deviation, 1e-5)

    def test_vae_loss(self):
        """
        Test that the objective is the weighted sum of its terms.
        """
        config = VaeConfig(width=16, heads=2)
        vae = PointVae(config, seed=0)
        points = np.random.default_rng(0).uniform(-1.0, 1.0, (48, 5))
        encoding, reconstruction = vae.reconstruct(points)
        loss = vae_loss(points, reconstruction, encoding, config)
        terms = loss.terms
        self.assertEqual(
            sorted(terms),
            sorted(
                [
                    "chamfer", "intermediate", "feature", "reconstruction",
                    "density", "cardinality", "kl", "total",
                ]
            ),
        )
        self.assertAlmostEqual(
            terms["reconstruction"],
            terms["chamfer"] + config.lambda_c * terms["intermediate"]
            + config.lambda_f * terms["feature"],
        )
        self.assertAlmostEqual(
            terms["total"],
            terms["reconstruction"]
            + config.lambda_den * terms["density"]
            + config.lambda_card * terms["cardinality"]
            + config.lambda_reg * terms["kl"],
        )
        self.assertEqual(
            terms["cardinality"],
            abs(48 - reconstruction.levels[0].shape[0])
            + abs(12 - reconstruction.levels[1].shape[0]),
        )
        self.assertTrue(all(value >= 0 for value in terms.values()))


if __name__ == "__main__":
    unittest.main()
