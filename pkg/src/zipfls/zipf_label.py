"""Zipf-law distributions over ranks and rank-based soft label synthesis.

A soft label assigns probability mass to the non-target classes in
proportion to rank^(-alpha). Classes beyond the reliably ranked prefix share
one uniform "clipped" value: the mean of the Zipf weights their ranks would
have carried, which keeps the full curve normalized and non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import InvalidInputError, as_prob_vector


@dataclass(frozen=True)
class ZipfParams:
    """Decay exponent and support size of a Zipf distribution over ranks 1..N."""

    alpha: float
    support_size: int

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise InvalidInputError(f"alpha must be finite and >= 0, got {self.alpha}")
        if self.support_size < 1:
            raise InvalidInputError(f"support_size must be >= 1, got {self.support_size}")


@dataclass(frozen=True)
class RankAssignment:
    """Partition of the classes of one sample into ranked / unranked / target.

    ``ranked`` lists class indices from rank 1 down; ``unranked`` classes all
    share the lowest rank; ``excluded`` is the target class, which never
    receives soft-label mass.
    """

    ranked: tuple[int, ...]
    unranked: frozenset[int]
    excluded: int

    def __init__(self, ranked, unranked, excluded: int):
        object.__setattr__(self, "ranked", tuple(int(c) for c in ranked))
        object.__setattr__(self, "unranked", frozenset(int(c) for c in unranked))
        object.__setattr__(self, "excluded", int(excluded))

    def validate_for(self, num_classes: int) -> None:
        """Check that ranked/unranked/excluded partition {0..num_classes-1}."""
        ranked = self.ranked
        if len(set(ranked)) != len(ranked):
            raise InvalidInputError("ranked classes contain duplicates")
        parts = set(ranked) | self.unranked | {self.excluded}
        if len(ranked) + len(self.unranked) + 1 != num_classes or parts != set(range(num_classes)):
            raise InvalidInputError(
                f"ranked/unranked/excluded do not partition 0..{num_classes - 1}"
            )


@dataclass(frozen=True)
class ZipfSoftLabel:
    """Synthetic target distribution over classes; zero mass on the target."""

    probs: np.ndarray
    target: int


def zipf_pmf(params: ZipfParams) -> np.ndarray:
    """Zipf pmf over ranks 1..N: f(r) = r^(-alpha) / sum_r r^(-alpha)."""
    ranks = np.arange(1, params.support_size + 1, dtype=np.float64)
    w = ranks ** -params.alpha
    return w / w.sum()


def make_zipf_soft_label(ranks: RankAssignment, alpha: float, num_classes: int) -> ZipfSoftLabel:
    """Build the Zipf soft label for one sample from its rank assignment.

    The class at rank r (r <= k, k ranked classes) gets raw weight r^(-alpha).
    Each unranked class gets the mean of the leftover weights
    (sum of r^(-alpha) for r = k+1..C-1) / (C-1-k). Weights are normalized to
    sum to 1 and the target class gets exactly 0.
    """
    if num_classes < 2:
        raise InvalidInputError("need at least one non-target class (num_classes >= 2)")
    if not np.isfinite(alpha) or alpha <= 0:
        raise InvalidInputError(f"alpha must be finite and > 0, got {alpha}")
    ranks.validate_for(num_classes)

    n_nontarget = num_classes - 1
    k = len(ranks.ranked)
    all_weights = np.arange(1, n_nontarget + 1, dtype=np.float64) ** -float(alpha)

    raw = np.zeros(num_classes, dtype=np.float64)
    raw[list(ranks.ranked)] = all_weights[:k]
    if ranks.unranked:
        tail_mean = all_weights[k:].sum() / (n_nontarget - k)
        raw[list(ranks.unranked)] = tail_mean

    probs = raw / raw.sum()
    return ZipfSoftLabel(probs=as_prob_vector(probs), target=ranks.excluded)
