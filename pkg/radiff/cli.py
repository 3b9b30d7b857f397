"""
Command Line Interface
======================

Defines the ``radiff`` command and its sub-commands. Every sub-command prints
a *JSON* summary on success and exits with a non-zero status on failure.

Examples
--------
```
radiff --seed 7 synth --out data/toy --frames 64 --profile toy
radiff train-vae --task fg --data data/toy --out fg_vae.ckpt
radiff train-ldm --task fg --data data/toy --vae fg_vae.ckpt --out fg_ldm.ckpt
radiff generate --ldm fg_ldm.ckpt --vae fg_vae.ckpt --cond data/toy --out gen/fg
radiff eval --real data/toy --generated gen/fused --report report.json
```
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence

from radiff import pipeline
from radiff.config import RunConfig, load_config
from radiff.errors import RadiffError
from radiff.metrics import format_report
from radiff.training import TrainingHistory
from radiff.values import Profile, Task

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = [
    "build_parser",
    "main",
]

LOGGER = logging.getLogger(__name__)


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Run configuration file.")
    parser.add_argument(
        "--profile",
        choices=Profile.all(),
        help="Shipped configuration used when --config is not given.",
    )


def _add_task_argument(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument(
        "--task",
        choices=[task.value for task in Task],
        required=required,
        help="Generation task.",
    )


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser of the ``radiff`` command."""
    parser = argparse.ArgumentParser(
        prog="radiff",
        description="Synthesize 4D radar point clouds with conditional latent "
        "diffusion.",
    )
    parser.add_argument(
        "--seed", type=int, default=0, help="Seed threaded to every generator."
    )
    parser.add_argument("--verbose", action="store_true", help="Log debug messages.")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="Generate a synthetic dataset.")
    synth.add_argument("--out", required=True)
    synth.add_argument("--frames", type=int, required=True)
    synth.add_argument("--profile", choices=Profile.all(), default=Profile.TOY.value)
    synth.add_argument(
        "--force", action="store_true", help="Write into a non-empty directory."
    )

    train_vae = commands.add_parser(
        "train-vae", help="Train the point autoencoder of a task."
    )
    _add_task_argument(train_vae)
    train_vae.add_argument("--data", required=True)
    train_vae.add_argument("--out", required=True)
    train_vae.add_argument("--epochs", type=int)
    _add_config_arguments(train_vae)

    train_ldm = commands.add_parser(
        "train-ldm", help="Train the conditional denoiser of a task."
    )
    _add_task_argument(train_ldm)
    train_ldm.add_argument("--data", required=True)
    train_ldm.add_argument("--vae", required=True)
    train_ldm.add_argument("--out", required=True)
    train_ldm.add_argument("--epochs", type=int)
    _add_config_arguments(train_ldm)

    generate = commands.add_parser(
        "generate", help="Generate frames from condition frames."
    )
    _add_task_argument(generate, required=False)
    generate.add_argument("--ldm", required=True)
    generate.add_argument("--vae")
    generate.add_argument("--cond", required=True)
    generate.add_argument("--out", required=True)
    generate.add_argument(
        "--steps",
        type=int,
        help="Timestep the reverse chain starts from, the schedule length by "
        "default.",
    )

    fuse = commands.add_parser(
        "fuse", help="Fuse generated foreground and background frames."
    )
    fuse.add_argument("--fg", required=True)
    fuse.add_argument("--bg", required=True)
    fuse.add_argument("--out", required=True)

    augment = commands.add_parser(
        "augment", help="Augment a dataset with stored objects."
    )
    augment.add_argument("--data", required=True)
    augment.add_argument("--db", required=True)
    augment.add_argument("--out", required=True)
    augment.add_argument(
        "--no-global", action="store_true", help="Skip the global transforms."
    )
    _add_config_arguments(augment)

    evaluate = commands.add_parser(
        "eval", help="Evaluate generated frames against real frames."
    )
    evaluate.add_argument("--real", required=True)
    evaluate.add_argument("--generated", required=True)
    evaluate.add_argument("--report", help="JSON report file.")
    _add_config_arguments(evaluate)

    build_db = commands.add_parser(
        "build-db", help="Build the ground truth database of a dataset."
    )
    build_db.add_argument("--data", required=True)
    build_db.add_argument("--out", required=True)
    _add_config_arguments(build_db)

    validate = commands.add_parser(
        "validate", help="Check the invariants of a dataset."
    )
    validate.add_argument("--data", required=True)
    _add_config_arguments(validate)

    return parser


def _config(arguments: argparse.Namespace) -> RunConfig:
    return load_config(arguments.config, arguments.profile)


def _training_summary(history: TrainingHistory, out: str) -> dict:
    return {"epochs": len(history), "final": history.epochs[-1], "out": out}


def _run(arguments: argparse.Namespace) -> tuple[dict, int]:
    command, seed = arguments.command, arguments.seed
    if command == "synth":
        frames = pipeline.run_synth(
            arguments.out, arguments.frames, seed, arguments.profile, arguments.force
        )
        return {"frames": len(frames), "out": arguments.out}, 0
    if command == "train-vae":
        history = pipeline.run_train_vae(
            arguments.data,
            arguments.out,
            _config(arguments),
            Task(arguments.task),
            seed,
            arguments.epochs,
        )
        return _training_summary(history, arguments.out), 0
    if command == "train-ldm":
        history = pipeline.run_train_ldm(
            arguments.data,
            arguments.vae,
            arguments.out,
            _config(arguments),
            Task(arguments.task),
            seed,
            arguments.epochs,
        )
        return _training_summary(history, arguments.out), 0
    if command == "generate":
        frames = pipeline.run_generate(
            arguments.ldm,
            arguments.vae,
            arguments.cond,
            arguments.out,
            None if arguments.task is None else Task(arguments.task),
            arguments.steps,
            seed,
        )
        return {"frames": len(frames), "out": arguments.out}, 0
    if command == "fuse":
        frames = pipeline.run_fuse(arguments.fg, arguments.bg, arguments.out)
        return {"frames": len(frames), "out": arguments.out}, 0
    if command == "augment":
        frames = pipeline.run_augment(
            arguments.data,
            arguments.db,
            arguments.out,
            _config(arguments),
            seed,
            not arguments.no_global,
        )
        return {"frames": len(frames), "out": arguments.out}, 0
    if command == "eval":
        report = pipeline.run_eval(
            arguments.real, arguments.generated, _config(arguments)
        )
        if arguments.report:
            with open(arguments.report, "w", encoding="utf-8") as handle:
                json.dump(report.to_dict(), handle, indent=2, sort_keys=True)
                handle.write("\n")
        LOGGER.info("Evaluation report:\n%s", format_report(report))
        return report.to_dict(), 0
    if command == "build-db":
        entries = pipeline.run_build_db(
            arguments.data, arguments.out, _config(arguments)
        )
        return {"entries": entries, "out": arguments.out}, 0

    failures = pipeline.run_validate(arguments.data, _config(arguments))
    invalid = {str(key): value for key, value in failures.items()}
    return {"invalid": invalid}, int(bool(failures))


def main(argv: Sequence[str] | None = None) -> int:
    """
    Run the ``radiff`` command and return its exit status.
    """
    arguments = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if arguments.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        summary, status = _run(arguments)
    except (RadiffError, OSError) as error:
        LOGGER.error("'%s' failed: %s", arguments.command, error)
        return 1
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
