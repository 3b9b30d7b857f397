# !/usr/bin/env python
"""Define the unit tests for the :mod:`radiff.cli` module."""

import contextlib
import io
import json
import os
import shutil
import tempfile
import unittest

from radiff.cli import build_parser, main
from radiff.frames import Frame, RadarPointCloud, frame_file_name, write_frame
from radiff.tests.test_common import small_config

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "TestCli",
]


def _run(*argv: str) -> tuple[int, dict | None]:
    output = io.StringIO()
    with contextlib.redirect_stdout(output):
        status = main(list(argv))
    text = output.getvalue()
    return status, json.loads(text) if text else None


class TestCli(unittest.TestCase):
    """
    Define tests for the ``radiff`` command.
    """

    def setUp(self):
        self._temporary_directory = tempfile.mkdtemp()
        self.data = os.path.join(self._temporary_directory, "data")

    def tearDown(self):
        shutil.rmtree(self._temporary_directory)

    def _path(self, name: str) -> str:
        return os.path.join(self._temporary_directory, name)

    def test_parser(self):
        """
        Test the global options and the sub-command arguments.
        """
        arguments = build_parser().parse_args(
            "--seed 7 synth --out data --frames 4 --profile vod".split()
        )
        self.assertEqual((arguments.seed, arguments.command), (7, "synth"))
        self.assertEqual((arguments.frames, arguments.profile), (4, "vod"))
        with self.assertRaises(SystemExit), contextlib.redirect_stderr(io.StringIO()):
            build_parser().parse_args(["train-vae", "--task", "objects"])

    def test_synth(self):
        """
        Test that synthesis writes the frames and refuses non-empty directories.
        """
        status, summary = _run(
            "--seed", "3", "synth", "--out", self.data, "--frames", "4"
        )
        self.assertEqual(status, 0)
        self.assertEqual(summary["frames"], 4)
        self.assertTrue(os.path.exists(os.path.join(self.data, "manifest.json")))
        self.assertTrue(os.path.exists(os.path.join(self.data, frame_file_name(3))))

        self.assertEqual(_run("synth", "--out", self.data, "--frames", "2")[0], 1)
        status, _ = _run("synth", "--out", self.data, "--frames", "2", "--force")
        self.assertEqual(status, 0)

    def test_eval_against_itself(self):
        """
        Test that a dataset evaluated against itself scores zero and that the
        report file is written.
        """
        _run("synth", "--out", self.data, "--frames", "4")
        report = self._path("report.json")
        status, summary = _run(
            "eval", "--real", self.data, "--generated", self.data, "--report", report
        )
        self.assertEqual(status, 0)
        for key in ("cd", "cd_doppler", "cd_rcs", "mmd"):
            self.assertEqual(summary[key], 0.0)
        self.assertAlmostEqual(summary["jsd"], 0.0)
        with open(report) as json_file:
            self.assertEqual(json.load(json_file)["frame_ids"], [0, 1, 2, 3])

    def test_fuse_id_mismatch(self):
        """
        Test that fusing directories with different frame ids fails.
        """
        _run("--seed", "1", "synth", "--out", self._path("fg"), "--frames", "3")
        _run("--seed", "2", "synth", "--out", self._path("bg"), "--frames", "2")
        status, summary = _run(
            "fuse",
            "--fg",
            self._path("fg"),
            "--bg",
            self._path("bg"),
            "--out",
            self._path("out"),
        )
        self.assertEqual(status, 1)
        self.assertIsNone(summary)

    def test_validate(self):
        """
        Test that invalid frames are reported with a failing status.
        """
        _run("synth", "--out", self.data, "--frames", "3")
        self.assertEqual(_run("validate", "--data", self.data), (0, {"invalid": {}}))
        write_frame(
            Frame(
                9, 0, radar=RadarPointCloud.from_points([[100.0, 0.0, 0.0, 0.0, 0.0]])
            ),
            os.path.join(self.data, frame_file_name(9)),
        )
        status, summary = _run("validate", "--data", self.data, "--profile", "toy")
        self.assertEqual(status, 1)
        self.assertEqual(list(summary["invalid"]), ["9"])
        self.assertEqual(_run("validate", "--data", self._path("missing"))[0], 1)

    def test_train_and_generate(self):
        """
        Test a short training and generation run driven by a config file.
        """
        _run("synth", "--out", self.data, "--frames", "3")
        config = self._path("run.cfg")
        small_config().save(config)
        vae = self._path("fg_vae.ckpt")
        ldm = self._path("fg_ldm.ckpt")
        out = self._path("gen")

        status, summary = _run(
            *f"train-vae --task fg --data {self.data} --out {vae}".split(),
            *f"--epochs 1 --config {config}".split(),
        )
        self.assertEqual(status, 0)
        self.assertEqual(summary["epochs"], 1)
        status, _ = _run(
            *f"train-ldm --task fg --data {self.data} --vae {vae} --out {ldm}".split(),
            *f"--epochs 1 --config {config}".split(),
        )
        self.assertEqual(status, 0)
        status, summary = _run(
            *f"generate --ldm {ldm} --vae {vae} --cond {self.data}".split(),
            *f"--out {out} --steps 2".split(),
        )
        self.assertEqual((status, summary["frames"]), (0, 3))

        database = self._path("db")
        status, summary = _run("build-db", "--data", self.data, "--out", database)
        self.assertEqual(status, 0)
        status, summary = _run(
            "augment", "--data", self.data, "--db", database, "--out", self._path("aug")
        )
        self.assertEqual((status, summary["frames"]), (0, 3))


if __name__ == "__main__":
    unittest.main()
