# !/usr/bin/env python
"""Define the unit tests for the :mod:`radiff.pipeline` module."""

import os
import shutil
import tempfile
import unittest

import numpy as np

from radiff.augment import build_gt_database
from radiff.checkpoint import load_checkpoint
from radiff.errors import CheckpointError, ValidationError
from radiff.frames import Frame, RadarPointCloud, read_dataset, read_manifest
from radiff.pipeline import (
    augment_frame,
    fuse_frames,
    history_path,
    ldm_from_checkpoint,
    prepare_training_data,
    run_build_db,
    run_eval,
    run_fuse,
    run_generate,
    run_synth,
    run_train_ldm,
    run_train_vae,
    run_validate,
    vae_from_checkpoint,
)
from radiff.processing import validate_frame
from radiff.synthesis import GENERATOR_VERSION, synth_dataset
from radiff.tests.test_common import small_config
from radiff.values import DiffusionSpace, Profile, Provenance, Task

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "TestPrepare",
    "TestEndToEnd",
]


class TestPrepare(unittest.TestCase):
    """
    Define tests for the preparation of the training clouds and the frame
    level helpers.
    """

    @classmethod
    def setUpClass(cls):
        cls.config = small_config()
        cls.frames = synth_dataset(21, 6, Profile.TOY)

    def test_prepare_training_data(self):
        """
        Test that the task clouds are normalized and filled.
        """
        for task in Task:
            prepared = prepare_training_data(self.frames, task, self.config, seed=1)
            self.assertEqual(len(prepared.clouds), len(prepared.frames))
            self.assertGreater(len(prepared.clouds), 0)
            for cloud in prepared.clouds:
                self.assertEqual(cloud.shape, (64, 5))
                self.assertTrue(np.all(np.abs(cloud) <= 1.0))
        with self.assertRaises(ValidationError):
            prepare_training_data([Frame(0, 0)], Task.FOREGROUND, self.config)
        with self.assertRaises(ValidationError):
            prepare_training_data([Frame(0, 0)], Task.BACKGROUND, self.config)

    def test_fuse_frames(self):
        """
        Test the pairing of foreground and background frames.
        """
        ones = RadarPointCloud.from_points(np.ones((2, 5)))
        zeros = RadarPointCloud.from_points(np.zeros((3, 5)))
        foreground = [
            Frame(i, 0, radar=ones, boxes=f.boxes) for i, f in enumerate(self.frames)
        ]
        background = [
            Frame(i, 0, radar=zeros, lidar=f.lidar) for i, f in enumerate(self.frames)
        ]
        fused = fuse_frames(foreground, background)
        self.assertEqual([frame.frame_id for frame in fused], list(range(6)))
        np.testing.assert_array_equal(
            fused[0].radar.provenance,
            [Provenance.FOREGROUND] * 2 + [Provenance.BACKGROUND] * 3,
        )
        self.assertEqual(fused[2].boxes, self.frames[2].boxes)
        np.testing.assert_array_equal(fused[2].lidar, self.frames[2].lidar)
        with self.assertRaises(ValidationError):
            fuse_frames(foreground[:2], background)

    def test_augment_frame(self):
        """
        Test that augmented frames stay inside the range.
        """
        database = build_gt_database(self.frames, min_points=1)
        spec = self.config.data.range_spec()
        for index, frame in enumerate(self.frames):
            augmented = augment_frame(frame, database, self.config, seed=index)
            validate_frame(augmented, spec)
            self.assertTrue(np.all(spec.contains(augmented.lidar)))
        unchanged = augment_frame(
            self.frames[0], database, self.config, global_transforms=False
        )
        self.assertGreaterEqual(len(unchanged.boxes), len(self.frames[0].boxes))


class TestEndToEnd(unittest.TestCase):
    """
    Define tests running the pipeline steps on dataset directories.
    """

    @classmethod
    def setUpClass(cls):
        cls.directory = tempfile.mkdtemp()
        cls.data = os.path.join(cls.directory, "data")
        cls.latent_config = small_config()
        cls.point_config = small_config(DiffusionSpace.POINT)
        run_synth(cls.data, 5, seed=3)

        cls.paths = {}
        for task, config in (
            (Task.FOREGROUND, cls.latent_config),
            (Task.BACKGROUND, cls.point_config),
        ):
            vae = os.path.join(cls.directory, f"{task.value}_vae.ckpt")
            ldm = os.path.join(cls.directory, f"{task.value}_ldm.ckpt")
            run_train_vae(cls.data, vae, config, task, seed=0, epochs=1)
            run_train_ldm(cls.data, vae, ldm, config, task, seed=0, epochs=1)
            cls.paths[task] = (vae, ldm)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.directory)

    def test_synth(self):
        """
        Test the synthetic dataset directory and its manifest.
        """
        frames = read_dataset(self.data)
        self.assertEqual(len(frames), 5)
        manifest = read_manifest(self.data)
        self.assertEqual(manifest["generator_version"], GENERATOR_VERSION)
        self.assertEqual((manifest["seed"], manifest["profile"]), (3, "toy"))
        with self.assertRaises(ValidationError):
            run_synth(self.data, 2)
        self.assertEqual(run_validate(self.data, self.latent_config), {})

    def test_checkpoints(self):
        """
        Test that checkpoints rebuild their models with task and config.
        """
        vae_path, ldm_path = self.paths[Task.FOREGROUND]
        vae, config, task = vae_from_checkpoint(load_checkpoint(vae_path))
        self.assertEqual(task, Task.FOREGROUND)
        self.assertEqual(config, self.latent_config)
        model, _, task, tokens = ldm_from_checkpoint(load_checkpoint(ldm_path))
        self.assertEqual(task, Task.FOREGROUND)
        self.assertEqual(tokens, self.latent_config.vae.latent_tokens(64))
        self.assertEqual(model.denoiser.token_dim, self.latent_config.vae.latent_dim)
        self.assertTrue(os.path.exists(history_path(vae_path)))

        _, ldm_path = self.paths[Task.BACKGROUND]
        model, config, task, tokens = ldm_from_checkpoint(load_checkpoint(ldm_path))
        self.assertEqual(
            (task, tokens, model.denoiser.token_dim), (Task.BACKGROUND, 64, 5)
        )
        with self.assertRaises(CheckpointError):
            vae_from_checkpoint(load_checkpoint(ldm_path))

    def test_task_mismatch(self):
        """
        Test that checkpoints of another task are rejected.
        """
        fg_vae, fg_ldm = self.paths[Task.FOREGROUND]
        bg_vae, _ = self.paths[Task.BACKGROUND]
        out = os.path.join(self.directory, "mismatch.ckpt")
        with self.assertRaises(ValidationError):
            run_train_ldm(
                self.data, bg_vae, out, self.latent_config, Task.FOREGROUND, epochs=1
            )
        with self.assertRaises(ValidationError):
            run_generate(fg_ldm, fg_vae, self.data, out, task=Task.BACKGROUND, steps=2)
        with self.assertRaises(ValidationError):
            run_generate(fg_ldm, None, self.data, out, steps=2)
        with self.assertRaises(ValidationError):
            run_generate(fg_ldm, bg_vae, self.data, out, steps=2)

    def test_generate_fuse_eval(self):
        """
        Test generation of both tasks, their fusion and the evaluation.
        """
        fg_vae, fg_ldm = self.paths[Task.FOREGROUND]
        _, bg_ldm = self.paths[Task.BACKGROUND]
        fg_out = os.path.join(self.directory, "gen_fg")
        bg_out = os.path.join(self.directory, "gen_bg")
        fused_out = os.path.join(self.directory, "gen_fused")

        foreground = run_generate(fg_ldm, fg_vae, self.data, fg_out, steps=3, seed=1)
        again = run_generate(fg_ldm, fg_vae, self.data, fg_out, steps=3, seed=1)
        for frame, other in zip(foreground, again):
            np.testing.assert_array_equal(frame.radar.points, other.radar.points)
        background = run_generate(bg_ldm, None, self.data, bg_out, steps=3, seed=1)

        conditions = read_dataset(self.data)
        spec = self.latent_config.data.range_spec()
        self.assertEqual(len(foreground), len(conditions))
        for frame, condition in zip(foreground, conditions):
            self.assertEqual(frame.radar.valid_count, 64)
            self.assertTrue(np.all(spec.contains(frame.radar.points)))
            self.assertEqual(frame.boxes, condition.boxes)
        for frame in background:
            self.assertEqual(frame.radar.valid_count, 64)

        fused = run_fuse(fg_out, bg_out, fused_out)
        self.assertEqual(len(fused), 5)
        self.assertEqual(fused[0].radar.valid_count, 128)
        self.assertEqual(run_validate(fused_out, self.latent_config), {})

        report = run_eval(self.data, fused_out, self.latent_config)
        self.assertEqual(len(report.frame_ids), 5)
        self.assertGreater(report.cd, 0.0)
        self.assertTrue(0.0 <= report.jsd <= 1.0)

    def test_build_db(self):
        """
        Test that the database of a dataset directory is written.
        """
        out = os.path.join(self.directory, "db")
        count = run_build_db(self.data, out, self.latent_config)
        expected = len(build_gt_database(read_dataset(self.data), 5))
        self.assertEqual(count, expected)
        self.assertTrue(os.path.exists(os.path.join(out, "index.json")))


if __name__ == "__main__":
    unittest.main()
