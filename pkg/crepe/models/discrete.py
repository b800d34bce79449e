"""Enumerable token models under linear masking.

With survival probability ``1 - t`` every token is masked independently, so the
marginal of a partially masked sequence is ``t^m (1 - t)^(D - m)`` times the data
probability of its visible tokens.
"""

import itertools
from functools import cached_property

import numpy as np
from numpy.random import Generator
from scipy import special

from crepe.errors import EnumerationGuardError

ENUMERATION_LIMIT = 10**6
"""The largest ``V^D`` a model may enumerate."""


def _xlogy(count: np.ndarray, value: np.ndarray) -> np.ndarray:
    """``count * log(value)`` with ``0 * log(0) = 0``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(count == 0, 0.0, count * np.log(value))


class ExactDiscreteModel:
    """A joint data distribution over ``D`` tokens drawn from ``V - 1`` values.

    The last vocabulary entry is the mask.
    """

    def __init__(self, vocab_size: int, joint, label: str = ""):
        joint = np.asarray(joint, dtype=float)
        values = vocab_size - 1

        if vocab_size < 2:
            raise ValueError("The vocabulary needs at least one token and the mask")

        num_tokens = joint.ndim

        if joint.shape != (values,) * num_tokens:
            raise ValueError(f"The joint table must have {values} entries along every axis")

        if float(vocab_size) ** num_tokens > ENUMERATION_LIMIT:
            raise EnumerationGuardError(
                f"{vocab_size}^{num_tokens} states exceed the enumeration limit of "
                f"{ENUMERATION_LIMIT}",
            )

        if np.any(joint < 0) or not np.isclose(joint.sum(), 1.0, atol=1e-10):
            raise ValueError("The data distribution must be non-negative and sum to one")

        self.vocab_size = vocab_size
        self.num_tokens = num_tokens
        self.joint = joint.reshape((values,) * num_tokens)
        self.label = label

    @classmethod
    def from_factorized(cls, vocab_size: int, tables, label: str = "") -> "ExactDiscreteModel":
        """Build a model whose tokens are independent with the given per-token tables.

        :param tables: per-token probabilities with shape ``(D, V - 1)``
        """
        tables = np.atleast_2d(np.asarray(tables, dtype=float))

        if tables.shape[1] != vocab_size - 1:
            raise ValueError("Every token table needs one entry per unmasked value")

        if float(vocab_size) ** tables.shape[0] > ENUMERATION_LIMIT:
            raise EnumerationGuardError(
                f"{vocab_size}^{tables.shape[0]} states exceed the enumeration limit of "
                f"{ENUMERATION_LIMIT}",
            )

        joint = tables[0]

        for table in tables[1:]:
            joint = np.multiply.outer(joint, table)

        return cls(vocab_size, joint, label)

    @property
    def mask_index(self) -> int:
        return self.vocab_size - 1

    @cached_property
    def _log_marginals(self) -> dict[tuple[int, ...], np.ndarray]:
        """The log data marginal of every subset of visible positions."""
        positions = range(self.num_tokens)
        marginals = {}

        with np.errstate(divide="ignore"):
            for size in range(self.num_tokens + 1):
                for visible in itertools.combinations(positions, size):
                    hidden = tuple(i for i in positions if i not in visible)
                    marginals[visible] = np.log(self.joint.sum(axis=hidden))

        return marginals

    def _log_visible(self, x: np.ndarray) -> np.ndarray:
        """``log P_0(visible tokens)`` for every row of ``x``."""
        out = np.empty(x.shape[0])
        visible = x != self.mask_index

        for pattern in np.unique(visible, axis=0):
            rows = np.all(visible == pattern, axis=1)
            positions = tuple(np.flatnonzero(pattern))
            table = self._log_marginals[positions]

            out[rows] = table[tuple(x[rows][:, i] for i in positions)]

        return out

    def log_prob(self, x: np.ndarray, t) -> np.ndarray:
        """The exact marginal ``log p_t(x)`` under linear masking.

        :param x: tokens with shape ``(batch, D)``
        :param t: times in ``[0, 1]``
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.int64))
        t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))

        masked = np.sum(x == self.mask_index, axis=1)

        return (
            _xlogy(masked, t)
            + _xlogy(self.num_tokens - masked, 1.0 - t)
            + self._log_visible(x)
        )

    def log_unmask_conditional(self, x: np.ndarray) -> np.ndarray:
        """``log P_0(x_i = v | visible tokens of x)`` for every position and value.

        Rows whose visible tokens have zero data probability get a uniform
        conditional. Entries at unmasked positions are zero.

        :return: shape ``(batch, D, V - 1)``
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.int64))
        values = self.vocab_size - 1
        out = np.zeros((*x.shape, values))
        visible = x != self.mask_index

        for pattern in np.unique(visible, axis=0):
            rows = np.flatnonzero(np.all(visible == pattern, axis=1))
            shown = tuple(np.flatnonzero(pattern))
            sub = x[rows]

            denominator = np.broadcast_to(
                self._log_marginals[shown][tuple(sub[:, i] for i in shown)],
                rows.shape,
            )

            for i in np.flatnonzero(~pattern):
                joined = tuple(sorted((*shown, int(i))))
                index = tuple(
                    np.arange(values)[None, :] if j == i else sub[:, j][:, None]
                    for j in joined
                )

                with np.errstate(invalid="ignore"):
                    conditional = self._log_marginals[joined][index] - denominator[:, None]

                out[rows, i] = np.where(
                    np.isneginf(denominator)[:, None],
                    -np.log(values),
                    conditional,
                )

        return out

    def log_ratios(self, x: np.ndarray, t) -> np.ndarray:
        """``log p_t(y) - log p_t(x)`` for every single-token change ``y`` of ``x``.

        :return: shape ``(batch, D, V)``; entries for ``y = x`` are zero
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.int64))
        batch, tokens = x.shape
        t = np.broadcast_to(np.asarray(t, dtype=float), (batch,))

        changed = np.repeat(x[:, None, None, :], tokens, axis=1)
        changed = np.repeat(changed, self.vocab_size, axis=2)
        rows = np.arange(tokens)
        changed[:, rows, :, rows] = np.arange(self.vocab_size)

        log_y = self.log_prob(
            changed.reshape(-1, tokens),
            np.repeat(t, tokens * self.vocab_size),
        ).reshape(batch, tokens, self.vocab_size)

        log_x = self.log_prob(x, t)

        with np.errstate(invalid="ignore"):
            ratios = log_y - log_x[:, None, None]

        same = np.arange(self.vocab_size) == x[..., None]

        return np.where(same, 0.0, ratios)

    def enumerate_states(self) -> np.ndarray:
        """Every token sequence including masked ones, with shape ``(V^D, D)``."""
        grids = np.meshgrid(*[np.arange(self.vocab_size)] * self.num_tokens, indexing="ij")

        return np.stack([g.ravel() for g in grids], axis=1)

    def probabilities(self, t: float) -> np.ndarray:
        """``p_t`` over :meth:`enumerate_states`."""
        states = self.enumerate_states()

        return np.exp(self.log_prob(states, np.full(states.shape[0], t)))

    def sample(self, n: int, rng: Generator, t: float = 0.0) -> np.ndarray:
        flat = rng.choice(self.joint.size, size=n, p=self.joint.ravel())
        tokens = np.stack(np.unravel_index(flat, self.joint.shape), axis=1)

        return np.where(rng.random(tokens.shape) < t, self.mask_index, tokens)


def exact_discrete_marginal(model: ExactDiscreteModel, x: np.ndarray, t) -> np.ndarray:
    """Return ``log p_t(x)`` of an enumerable model."""
    return model.log_prob(x, t)


def product_log_target(
    models: list[ExactDiscreteModel],
    weights: list[float],
    t: float,
) -> np.ndarray:
    """The normalized log-density of ``prod_j p^j_t ^ w_j`` over the enumerated states."""
    states = models[0].enumerate_states()
    times = np.full(states.shape[0], t)

    with np.errstate(invalid="ignore"):
        unnormalized = sum(
            w * m.log_prob(states, times) for m, w in zip(models, weights, strict=True)
        )

    unnormalized = np.where(np.isnan(unnormalized), -np.inf, unnormalized)

    return unnormalized - special.logsumexp(unnormalized)
