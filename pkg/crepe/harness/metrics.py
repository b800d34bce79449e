"""Sample-quality metrics against exact desk-scale targets."""

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from crepe.models.segments import is_stitched, passes_through

LogDensity = Callable[[np.ndarray], np.ndarray]

POINTS_PER_BIN = 64
"""Quadrature points used to integrate the exact density over each bin."""


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    empirical: np.ndarray
    """The share of samples in each bin. Samples outside the range are not counted."""

    exact: np.ndarray
    """The exact mass of each bin, normalized over the histogram range."""

    @property
    def tvd(self) -> float:
        """Total variation between the binned distributions. Empirical mass outside
        the range counts as disagreement.
        """
        outside = max(0.0, 1.0 - float(self.empirical.sum()))

        return 0.5 * (float(np.abs(self.empirical - self.exact).sum()) + outside)


def exact_bin_masses(log_density: LogDensity, edges: np.ndarray) -> np.ndarray:
    """Integrate an unnormalized 1-D density over every bin and normalize."""
    grids = [np.linspace(a, b, POINTS_PER_BIN + 1) for a, b in zip(edges[:-1], edges[1:])]
    values = [log_density(g[:, None]) for g in grids]
    log_max = max(float(np.max(v)) for v in values)

    masses = np.array(
        [
            integrate.trapezoid(np.exp(value - log_max), grid)
            for grid, value in zip(grids, values, strict=True)
        ],
    )

    return masses / masses.sum()


def _first_coordinate(samples) -> np.ndarray:
    values = np.asarray(samples, dtype=float)

    return values[:, 0] if values.ndim > 1 else values


def _normalized(weights, size: int) -> np.ndarray:
    if weights is None:
        return np.full(size, 1.0 / max(size, 1))

    weights = np.asarray(weights, dtype=float)

    return weights / weights.sum()


def histogram(
    samples: np.ndarray,
    log_density: LogDensity,
    low: float,
    high: float,
    bins: int,
    weights: np.ndarray | None = None,
) -> Histogram:
    """Bin the first coordinate of ``samples`` against an exact 1-D density.

    :param weights: optional sample weights, normalized internally
    """
    values = _first_coordinate(samples)
    edges = np.linspace(low, high, bins + 1)

    empirical, _ = np.histogram(values, edges, weights=_normalized(weights, values.size))

    return Histogram(edges, empirical, exact_bin_masses(log_density, edges))


def tvd_histogram(
    samples: np.ndarray,
    log_density: LogDensity,
    low: float = -4.0,
    high: float = 4.0,
    bins: int = 64,
    weights: np.ndarray | None = None,
) -> float:
    return histogram(samples, log_density, low, high, bins, weights).tvd


def discrete_histogram(
    samples: np.ndarray,
    exact: np.ndarray,
    vocab_size: int,
    weights: np.ndarray | None = None,
) -> Histogram:
    """Count token samples over the enumerated states, one bin per state.

    :param samples: tokens with shape ``(n, D)``
    :param exact: probabilities in the order of ``ExactDiscreteModel.enumerate_states``
    """
    samples = np.asarray(samples, dtype=np.int64)
    index = np.ravel_multi_index(samples.T, (vocab_size,) * samples.shape[1])
    empirical = np.bincount(
        index,
        weights=_normalized(weights, samples.shape[0]),
        minlength=exact.size,
    )

    return Histogram(np.arange(exact.size + 1) - 0.5, empirical, exact)


def tvd_discrete(
    samples: np.ndarray,
    exact: np.ndarray,
    vocab_size: int,
    weights: np.ndarray | None = None,
) -> float:
    """Total variation between token samples and exact probabilities."""
    hist = discrete_histogram(samples, exact, vocab_size, weights)

    return 0.5 * float(np.abs(hist.empirical - hist.exact).sum())


def w2_1d(a: np.ndarray, b: np.ndarray) -> float:
    """The 1-D Wasserstein-2 distance by coupling quantiles.

    Equal sample sizes couple the order statistics directly. Otherwise both samples
    are evaluated at the midpoints of ``max(len(a), len(b))`` quantile levels.
    """
    a = np.sort(np.ravel(a).astype(float))
    b = np.sort(np.ravel(b).astype(float))

    if a.size != b.size:
        levels = (np.arange(max(a.size, b.size)) + 0.5) / max(a.size, b.size)
        a = np.quantile(a, levels)
        b = np.quantile(b, levels)

    return float(np.sqrt(np.mean((a - b) ** 2)))


def quantile_samples(
    log_density: LogDensity,
    low: float,
    high: float,
    n: int,
    resolution: int = 4096,
) -> np.ndarray:
    """``n`` deterministic draws from a 1-D density by inverting its CDF at the
    quantile midpoints.
    """
    grid = np.linspace(low, high, resolution + 1)
    log_values = log_density(grid[:, None])
    values = np.exp(log_values - np.max(log_values))

    cdf = integrate.cumulative_trapezoid(values, grid, initial=0.0)
    cdf /= cdf[-1]

    return np.interp((np.arange(n) + 0.5) / n, cdf, grid)


def mode_occupancy(
    samples: np.ndarray,
    centers,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """The share of samples nearest to each mode centre, by first coordinate."""
    values = _first_coordinate(samples)
    centers = np.asarray(centers, dtype=float)

    if values.size == 0:
        return np.zeros(centers.size)

    nearest = np.argmin(np.abs(values[:, None] - centers), axis=1)

    return np.bincount(
        nearest,
        weights=_normalized(weights, values.size),
        minlength=centers.size,
    )


def stitch_success_rate(
    samples: np.ndarray,
    segments: int,
    origin,
    target,
    weights: np.ndarray | None = None,
) -> float:
    if len(samples) == 0:
        return 0.0

    return float(np.average(is_stitched(samples, segments, origin, target), weights=weights))


def pass_through_rate(
    samples: np.ndarray,
    segments: int,
    point,
    weights: np.ndarray | None = None,
) -> float:
    if len(samples) == 0:
        return 0.0

    return float(np.average(passes_through(samples, segments, point), weights=weights))


def quartile_rates(values: np.ndarray) -> tuple[float, float]:
    """The mean of a per-sample indicator over the first and last quartile."""
    values = np.asarray(values, dtype=float)
    quarter = values.size // 4

    if quarter == 0:
        return 0.0, 0.0

    return float(values[:quarter].mean()), float(values[-quarter:].mean())
