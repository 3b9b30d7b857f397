"""
Defines helper functionality for the *Radiff* tests.
"""

import dataclasses

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection

from radiff.config import RunConfig
from radiff.values import DiffusionSpace, Profile

__author__ = "Radiff Developers"
__copyright__ = "Copyright 2025 Radiff Developers"
__license__ = "BSD-3-Clause - https://opensource.org/licenses/BSD-3-Clause"
__maintainer__ = "Radiff Developers"
__email__ = "radiff-developers@radiff.org"
__status__ = "Production"

__all__ = ["small_config", "random_clouds", "halfspace_overlap"]


def small_config(space: DiffusionSpace = DiffusionSpace.LATENT) -> RunConfig:
    """
    Return a toy configuration small enough for unit tests.

    The networks are narrowed to a width of 16 with two heads and the
    diffusion chain is shortened to 20 steps.
    """
    config = RunConfig.for_profile(Profile.TOY)
    return config.replace(
        data=dataclasses.replace(config.data, points=64),
        vae=dataclasses.replace(config.vae, width=16, heads=2),
        diffusion=dataclasses.replace(
            config.diffusion,
            space=space,
            steps=20,
            width=16,
            blocks=1,
            heads=2,
            time_dim=8,
            condition_width=8,
        ),
        layout=dataclasses.replace(config.layout, heads=2, objects=6),
        pillars=dataclasses.replace(config.pillars, hidden=8, max_tokens=8),
    )


def random_clouds(count: int, points: int = 32, seed: int = 0) -> list[np.ndarray]:
    """Return ``count`` uniform normalized clouds of ``points`` x 5 features."""
    rng = np.random.default_rng(seed)
    return [rng.uniform(-0.5, 0.5, (points, 5)) for _ in range(count)]


def halfspace_overlap(vertices_a: np.ndarray, vertices_b: np.ndarray) -> float:
    """
    Compute the intersection area of two convex counter-clockwise polygons
    with *SciPy*: the Chebyshev centre of the stacked edge half-planes seeds
    a half-space intersection whose hull area is returned.
    """
    rows = []
    for vertices in (vertices_a, vertices_b):
        edges = np.roll(vertices, -1, axis=0) - vertices
        normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
        offsets = -np.sum(normals * vertices, axis=1)
        rows.append(np.column_stack([normals, offsets]))
    halfspaces = np.concatenate(rows)
    norms = np.linalg.norm(halfspaces[:, :2], axis=1, keepdims=True)
    result = linprog(
        [0.0, 0.0, -1.0],
        A_ub=np.hstack([halfspaces[:, :2], norms]),
        b_ub=-halfspaces[:, 2],
        bounds=[(None, None), (None, None), (0.0, None)],
    )
    if result.status != 0 or result.x[2] < 1e-9:
        return 0.0
    intersection = HalfspaceIntersection(halfspaces, result.x[:2])
    return ConvexHull(intersection.intersections).volume
