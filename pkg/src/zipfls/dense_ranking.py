"""Rank non-target classes by dense spatial votes or by sorted global probabilities.

A shared linear classifier is applied at every spatial location of a feature
map; each location votes for its argmax class. Vote counts order the classes,
with global softmax probability breaking ties. Classes that receive no votes
share the unranked tail. The logit baseline skips voting and sorts the global
probabilities directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import InvalidInputError, as_prob_vector
from .zipf_label import RankAssignment


@dataclass(frozen=True)
class FeatureMap:
    """Spatial features, shape (H, W, D)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidInputError(f"feature map must be H x W x D with H, W >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("feature map contains non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class SharedClassifier:
    """Linear head applied per location and, after average pooling, globally."""

    weight: np.ndarray  # (C, D)
    bias: np.ndarray  # (C,)

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise InvalidInputError(
                f"weight must be C x D and bias length C, got {w.shape} and {b.shape}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise InvalidInputError("classifier parameters contain non-finite entries")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def num_classes(self) -> int:
        return self.weight.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True)
class VoteHistogram:
    """Per-class counts of location argmaxes; sums to the number of locations."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 1 or np.any(c < 0):
            raise InvalidInputError("counts must be a 1-D non-negative integer vector")
        object.__setattr__(self, "counts", c)

    @property
    def num_votes(self) -> int:
        return int(self.counts.sum())


def local_predictions(fm: FeatureMap, clf: SharedClassifier) -> np.ndarray:
    """Per-location logits (H, W, C) from the shared classifier.

    Softmax is deliberately not applied: voting needs only the argmax and
    argmax(softmax(z)) == argmax(z).
    """
    if fm.channels != clf.feature_dim:
        raise InvalidInputError(
            f"feature map has {fm.channels} channels but classifier expects {clf.feature_dim}"
        )
    return fm.values @ clf.weight.T + clf.bias


def vote_histogram(spatial_logits: np.ndarray) -> VoteHistogram:
    """Count the per-location argmax classes. Within-location ties go to the lowest index."""
    sl = np.asarray(spatial_logits, dtype=np.float64)
    if sl.ndim != 3:
        raise InvalidInputError(f"spatial logits must be H x W x C, got shape {sl.shape}")
    num_classes = sl.shape[2]
    votes = sl.reshape(-1, num_classes).argmax(axis=1)
    return VoteHistogram(counts=np.bincount(votes, minlength=num_classes))


def rank_from_votes(hist: VoteHistogram, global_probs: np.ndarray, target: int) -> RankAssignment:
    """Order non-target classes by descending vote count.

    Equal counts are broken by descending global probability, then ascending
    class index. Non-target classes with zero votes form the unranked tail.
    The target class is excluded outright, whatever its count.
    """
    probs = as_prob_vector(global_probs)
    counts = hist.counts
    num_classes = counts.shape[0]
    if probs.shape[0] != num_classes:
        raise InvalidInputError(
            f"histogram has {num_classes} classes but global_probs has {probs.shape[0]}"
        )
    if not 0 <= target < num_classes:
        raise InvalidInputError(f"target {target} out of range for {num_classes} classes")

    nontarget = np.array([c for c in range(num_classes) if c != target], dtype=np.int64)
    # lexsort keys: last key is primary
    order = np.lexsort((nontarget, -probs[nontarget], -counts[nontarget]))
    ordered = nontarget[order]
    voted = ordered[counts[ordered] > 0]
    unvoted = ordered[counts[ordered] == 0]
    return RankAssignment(ranked=voted, unranked=unvoted, excluded=target)


def logit_ranking(global_probs: np.ndarray, target: int) -> RankAssignment:
    """Rank every non-target class by descending global probability; no tail.

    Ties keep ascending class index order.
    """
    probs = as_prob_vector(global_probs)
    num_classes = probs.shape[0]
    if not 0 <= target < num_classes:
        raise InvalidInputError(f"target {target} out of range for {num_classes} classes")
    nontarget = np.array([c for c in range(num_classes) if c != target], dtype=np.int64)
    order = np.lexsort((nontarget, -probs[nontarget]))
    return RankAssignment(ranked=nontarget[order], unranked=(), excluded=target)


def stack_feature_maps(maps: list[FeatureMap]) -> FeatureMap:
    """Concatenate the locations of several same-channel maps into one voting pool.

    The result is a (total_locations, 1, D) map, so one classifier pass gives
    every pooled location a vote.
    """
    if not maps:
        raise InvalidInputError("need at least one feature map")
    channels = maps[0].channels
    for fm in maps[1:]:
        if fm.channels != channels:
            raise InvalidInputError(
                f"channel mismatch: {fm.channels} vs {channels}; all maps must share D"
            )
    flat = np.concatenate([fm.values.reshape(-1, channels) for fm in maps], axis=0)
    return FeatureMap(values=flat[:, np.newaxis, :])
