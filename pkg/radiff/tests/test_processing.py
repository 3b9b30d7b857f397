# !/usr/bin/env python
"""Define the unit tests for the :mod:`radiff.processing` module."""

import math
import unittest

import numpy as np

from radiff.errors import ValidationError
from radiff.frames import (
    Box3D,
    FeatureRanges,
    Frame,
    Interval,
    RadarPointCloud,
    RangeSpec,
)
from radiff.geometry import PlanarPose
from radiff.processing import (
    aggregate_sweeps,
    clip_to_range,
    compensate_doppler,
    denormalize,
    derive_box_velocity,
    fill_by_replication,
    integrate_ego_poses,
    normalize,
    pad_or_downsample,
    split_fg_bg,
    validate_frame,
    validate_sequence,
)
from radiff.values import Profile, Provenance

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "TestSweeps",
    "TestNormalization",
    "TestResampling",
    "TestValidation",
]

TOY = RangeSpec.for_profile(Profile.TOY)


def _cloud(count: int, seed: int = 0) -> RadarPointCloud:
    rng = np.random.default_rng(seed)
    points = np.column_stack(
        [
            rng.uniform(0.5, 20.0, count),
            rng.uniform(-10.0, 10.0, count),
            rng.uniform(-2.0, 2.0, count),
            rng.uniform(-30.0, 30.0, count),
            rng.uniform(-40.0, 20.0, count),
        ]
    )
    return RadarPointCloud.from_points(points)


class TestSweeps(unittest.TestCase):
    """
    Define tests for the ego motion integration and the sweep aggregation.
    """

    def test_integrate_ego_poses(self):
        """
        Test the integration of a straight then turning ego motion.
        """
        frames = [
            Frame(0, 0, ego_velocity=(10.0, 0.0)),
            Frame(1, 100000, ego_velocity=(10.0, 0.0), yaw_rate=math.pi / 2),
            Frame(2, 200000, ego_velocity=(10.0, 0.0)),
        ]
        poses = integrate_ego_poses(frames)
        self.assertEqual(len(poses), 3)
        self.assertAlmostEqual(poses[1].x, 1.0)
        self.assertAlmostEqual(poses[2].x, 2.0)
        self.assertAlmostEqual(poses[2].yaw, math.pi / 20)

    def test_static_scene_alignment(self):
        """
        Test that a static point observed from a moving ego vehicle aligns in
        the latest sweep.
        """
        first = RadarPointCloud.from_points([[10.0, 2.0, 0.0, 0.0, 5.0]])
        second = RadarPointCloud.from_points([[9.0, 2.0, 0.0, 0.0, 5.0]])
        frames = [
            Frame(0, 0, ego_velocity=(10.0, 0.0), radar=first),
            Frame(1, 100000, ego_velocity=(10.0, 0.0), radar=second),
        ]
        aggregate = aggregate_sweeps(frames, 2)
        self.assertEqual(aggregate.sweeps_used, 2)
        self.assertFalse(aggregate.truncated)
        np.testing.assert_array_almost_equal(
            aggregate.cloud.points,
            [[9.0, 2.0, 0.0, 0.0, 5.0], [9.0, 2.0, 0.0, 0.0, 5.0]],
        )

    def test_truncated_aggregation(self):
        """
        Test that asking for more sweeps than available warns and uses all.
        """
        frames = [Frame(0, 0, radar=_cloud(3)), Frame(1, 50000, radar=_cloud(4))]
        with self.assertWarns(UserWarning):
            aggregate = aggregate_sweeps(frames, 5)
        self.assertTrue(aggregate.truncated)
        self.assertEqual(len(aggregate.cloud), 7)
        self.assertEqual(len(aggregate_sweeps(frames, 1).cloud), 4)

    def test_aggregation_errors(self):
        """
        Test the rejection of invalid aggregation requests.
        """
        frames = [Frame(0, 10), Frame(1, 10)]
        with self.assertRaises(ValidationError):
            aggregate_sweeps(frames, 2)
        with self.assertRaises(ValidationError):
            aggregate_sweeps(frames[:1], 0)
        with self.assertRaises(ValidationError):
            aggregate_sweeps(frames[:1], 1, [PlanarPose(), PlanarPose()])

    def test_compensate_doppler(self):
        """
        Test that a static target has zero compensated Doppler.
        """
        positions = np.array([[10.0, 0.0, 0.0], [0.0, 5.0, 0.0], [3.0, 4.0, 0.0]])
        ego = np.array([4.0, 2.0])
        rays = positions / np.linalg.norm(positions, axis=1)[:, None]
        raw = -(rays[:, :2] @ ego)
        np.testing.assert_array_almost_equal(
            compensate_doppler(raw, positions, ego), np.zeros(3)
        )
        self.assertIsInstance(compensate_doppler(1.0, [1.0, 0.0, 0.0], ego), float)
        with self.assertRaises(ValidationError):
            compensate_doppler([0.0], [[0.0, 0.0, 0.0]], ego)


class TestNormalization(unittest.TestCase):
    """
    Define tests for the range clipping and the channel normalization.
    """

    def test_clip_to_range(self):
        """
        Test that points outside the range are dropped with their provenance.
        """
        cloud = RadarPointCloud.from_points(
            [
                [1.0, 0.0, 0.0, 0.0, 0.0],
                [25.0, 0.0, 0.0, 0.0, 0.0],
                [5.0, -10.0, 2.0, 0.0, 0.0],
            ]
        ).with_provenance(Provenance.BACKGROUND)
        clipped = clip_to_range(cloud, TOY)
        self.assertEqual(len(clipped), 2)
        np.testing.assert_array_equal(clipped.provenance, [2, 2])

    def test_normalize_round_trip(self):
        """
        Test that normalized channels lie in ``[-1, 1]`` and round trip.
        """
        cloud = _cloud(50)
        normalized = normalize(cloud, TOY)
        self.assertTrue(np.all(np.abs(normalized.points) <= 1.0))
        np.testing.assert_array_almost_equal(
            denormalize(normalized, TOY).points, cloud.points
        )

    def test_normalize_bounds(self):
        """
        Test the channel bounds and that padding stays zero.
        """
        features = FeatureRanges(doppler=Interval(-10.0, 10.0), rcs=Interval(0.0, 10.0))
        cloud = RadarPointCloud(
            [[0.0, -10.0, 2.0, 10.0, 0.0], [7.0, 7.0, 7.0, 7.0, 7.0]], [True, False]
        )
        normalized = normalize(cloud, TOY, features)
        np.testing.assert_array_almost_equal(
            normalized.points[0], [-1.0, -1.0, 1.0, 1.0, -1.0]
        )
        np.testing.assert_array_equal(normalized.points[1], np.zeros(5))


class TestResampling(unittest.TestCase):
    """
    Define tests for padding, downsampling, replication and the foreground
    split.
    """

    def test_pad(self):
        """
        Test padding of a small cloud.
        """
        cloud = _cloud(3)
        padded = pad_or_downsample(cloud, 8)
        self.assertEqual(len(padded), 8)
        self.assertEqual(padded.valid_count, 3)
        np.testing.assert_array_equal(padded.points[:3], cloud.points)
        np.testing.assert_array_equal(padded.points[3:], np.zeros((5, 5)))

    def test_downsample(self):
        """
        Test that downsampling keeps a seeded ordered subset.
        """
        cloud = _cloud(40)
        subset = pad_or_downsample(cloud, 10, seed=5)
        self.assertEqual(subset.valid_count, 10)
        rows = [
            int(np.flatnonzero(np.all(cloud.points == p, axis=1))[0])
            for p in subset.points
        ]
        self.assertEqual(rows, sorted(rows))
        self.assertEqual(len(set(rows)), 10)
        np.testing.assert_array_equal(
            pad_or_downsample(cloud, 10, seed=5).points, subset.points
        )
        with self.assertRaises(ValidationError):
            pad_or_downsample(cloud, 0)

    def test_fill_by_replication(self):
        """
        Test that replication fills a cloud with copies of valid points.
        """
        cloud = _cloud(5)
        filled = fill_by_replication(cloud, 32, seed=1)
        self.assertEqual(filled.valid_count, 32)
        np.testing.assert_array_equal(filled.points[:5], cloud.points)
        for point in filled.points:
            self.assertTrue(np.any(np.all(cloud.points == point, axis=1)))
        self.assertEqual(fill_by_replication(_cloud(64), 32).valid_count, 32)
        with self.assertRaises(ValidationError):
            fill_by_replication(RadarPointCloud.empty(), 4)

    def test_split_fg_bg(self):
        """
        Test that the foreground split partitions the valid points.
        """
        cloud = _cloud(200)
        boxes = [
            Box3D(5.0, 0.0, 0.0, 4.0, 3.0, 4.0, yaw=0.3),
            Box3D(15.0, 5.0, 0.0, 5.0, 4.0, 4.0),
        ]
        foreground, background = split_fg_bg(cloud, boxes)
        self.assertEqual(len(foreground) + len(background), 200)
        self.assertGreater(len(foreground), 0)
        self.assertEqual(len(split_fg_bg(foreground, boxes)[1]), 0)
        self.assertEqual(len(split_fg_bg(background, boxes)[0]), 0)

    def test_derive_box_velocity(self):
        """
        Test the finite difference velocities of an object track.
        """
        track = [Box3D(x, 2.0 * x, 0.0, 4.0, 2.0, 1.5) for x in (0.0, 0.5, 1.5)]
        estimate = derive_box_velocity(track, [0, 100000, 200000])
        np.testing.assert_array_almost_equal(
            estimate.velocities, [[5.0, 10.0], [7.5, 15.0], [10.0, 20.0]]
        )
        self.assertFalse(estimate.flagged)
        with self.assertWarns(UserWarning):
            single = derive_box_velocity(track[:1], [0])
        self.assertTrue(single.flagged)
        np.testing.assert_array_equal(single.velocities, np.zeros((1, 2)))
        with self.assertRaises(ValidationError):
            derive_box_velocity(track[:2], [5, 5])


class TestValidation(unittest.TestCase):
    """
    Define tests for the frame and sequence invariants.
    """

    def test_validate_frame(self):
        """
        Test that valid frames pass and out of range points fail.
        """
        frame = Frame(
            1, 0, radar=_cloud(20), boxes=[Box3D(5.0, 0.0, 0.0, 4.0, 2.0, 1.5)]
        )
        validate_frame(frame, TOY)
        outside = frame.replace(
            radar=RadarPointCloud.from_points([[30.0, 0.0, 0.0, 0.0, 0.0]])
        )
        validate_frame(outside)
        with self.assertRaises(ValidationError):
            validate_frame(outside, TOY)
        nan = frame.replace(
            radar=RadarPointCloud.from_points([[1.0, np.nan, 0.0, 0.0, 0.0]])
        )
        with self.assertRaises(ValidationError):
            validate_frame(nan)
        with self.assertRaises(ValidationError):
            validate_frame(frame, TOY, num_classes=0)

    def test_validate_sequence(self):
        """
        Test that timestamps must strictly increase.
        """
        validate_sequence([Frame(0, 0), Frame(1, 1)])
        with self.assertRaises(ValidationError):
            validate_sequence([Frame(0, 5), Frame(1, 5)])


if __name__ == "__main__":
    unittest.main()
