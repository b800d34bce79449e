"""A 2-D segment-stitching toy.

Each segment is a straight run of ``L`` points along one directed edge of a square
lattice. A chain of ``J`` segments is stitched when consecutive segments meet and the
chain connects the origin anchor to the target anchor.
"""

import itertools

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveFloat

from crepe.diffusion.schedules import NoiseSchedule
from crepe.models.mixture import GaussianMixtureModel, SegmentProductModel

SUCCESS_RADIUS = 0.45
"""The anchor distance below which a chain counts as stitched."""


class StitchWeights(BaseModel):
    """Coefficients of the stitching reward."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    origin: PositiveFloat
    """The weight of the origin anchor term."""

    target: PositiveFloat
    """The weight of the target anchor term."""

    neighbor: PositiveFloat = 100.0
    """The weight of the consecutive-segment terms."""

    intermediate: PositiveFloat
    """The weight of the intermediate-point term."""

    l2: PositiveFloat = 1.0
    l1: PositiveFloat = 10.0

    temperature: PositiveFloat = 10.0
    """The sharpness of the intermediate-point attention."""

    @classmethod
    def defaults(cls, segments: int) -> "StitchWeights":
        """The default weights for a chain of ``segments`` segments."""
        return cls(
            origin=100.0 * segments,
            target=100.0 * segments,
            intermediate=100.0 * segments,
        )


def lattice_nodes(spacing: float = 3.0, size: int = 3) -> np.ndarray:
    """The nodes of a ``size`` x ``size`` lattice centred at the origin."""
    offsets = (np.arange(size) - (size - 1) / 2.0) * spacing

    return np.array(list(itertools.product(offsets, offsets)))


def lattice_segments(spacing: float = 3.0, points: int = 8, size: int = 3) -> np.ndarray:
    """Every directed edge of the lattice as a run of evenly spaced points.

    :return: shape ``(edges, points, 2)``
    """
    nodes = lattice_nodes(spacing, size)
    fractions = np.linspace(0.0, 1.0, points)[:, None]
    segments = []

    for a, b in itertools.permutations(range(len(nodes)), 2):
        if np.isclose(np.linalg.norm(nodes[a] - nodes[b]), spacing):
            segments.append(nodes[a] + fractions * (nodes[b] - nodes[a]))

    return np.array(segments)


def build_segment_model(
    schedule: NoiseSchedule,
    spacing: float = 3.0,
    points: int = 8,
    std: float = 0.1,
    label: str = "segments",
) -> GaussianMixtureModel:
    """An equal-weight mixture centred on every directed lattice edge."""
    segments = lattice_segments(spacing, points)
    count = segments.shape[0]

    return GaussianMixtureModel(
        np.full(count, 1.0 / count),
        segments.reshape(count, -1),
        np.full(count, std**2),
        schedule,
        label,
    )


def build_chain_model(
    schedule: NoiseSchedule,
    segments: int = 3,
    spacing: float = 3.0,
    points: int = 8,
    std: float = 0.1,
    label: str = "segments",
) -> SegmentProductModel:
    """``segments`` independent segments concatenated into one chain state."""
    return SegmentProductModel(
        build_segment_model(schedule, spacing, points, std, label),
        segments,
        label,
    )


def chain_points(x: np.ndarray, segments: int) -> np.ndarray:
    """Reshape chain states to ``(batch, segments, points, 2)``."""
    x = np.atleast_2d(x)

    return x.reshape(x.shape[0], segments, -1, 2)


def anchor_distances(
    x: np.ndarray,
    segments: int,
    origin,
    target,
) -> np.ndarray:
    """The origin, neighbour and target gaps of every chain.

    :return: shape ``(batch, segments + 1)``; the origin gap first and the target gap
        last
    """
    pts = chain_points(x, segments)

    gaps = [np.linalg.norm(pts[:, 0, 0] - np.asarray(origin), axis=-1)]
    gaps += [
        np.linalg.norm(pts[:, j + 1, 0] - pts[:, j, -1], axis=-1) for j in range(segments - 1)
    ]
    gaps.append(np.linalg.norm(pts[:, -1, -1] - np.asarray(target), axis=-1))

    return np.stack(gaps, axis=1)


def is_stitched(x: np.ndarray, segments: int, origin, target) -> np.ndarray:
    return np.all(anchor_distances(x, segments, origin, target) < SUCCESS_RADIUS, axis=1)


def passes_through(x: np.ndarray, segments: int, point) -> np.ndarray:
    """Whether any point of each chain lies within the success radius of ``point``."""
    pts = chain_points(x, segments).reshape(np.atleast_2d(x).shape[0], -1, 2)

    return np.any(np.linalg.norm(pts - np.asarray(point), axis=-1) < SUCCESS_RADIUS, axis=1)
