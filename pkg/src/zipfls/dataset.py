"""Synthetic image-like classification data with controlled class similarity.

Each class is a fixed spatial prototype plus Gaussian pixel noise. Prototypes
are built around a small number of group centers, so classes within a group
are deliberately confusable. That structure is the point: non-target
predictions then carry real information for rank-based soft labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import InvalidInputError, SeededRng


@dataclass(frozen=True)
class SyntheticDataset:
    """Balanced train/test splits plus the generating prototypes."""

    train_images: np.ndarray  # (N_train, 1, S, S)
    train_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray
    prototypes: np.ndarray  # (C, S*S), per-pixel RMS 1
    class_similarity: np.ndarray  # (C, C) cosine of prototypes
    noise_sigma: float

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def image_size(self) -> int:
        return self.train_images.shape[2]


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def generate_dataset(
    seed: int,
    num_classes: int = 20,
    n_per_class: int = 200,
    image_size: int = 16,
    n_test_per_class: int = 50,
    num_groups: int = 5,
    within_group_scale: float = 0.35,
    noise_sigma: float = 0.35,
) -> SyntheticDataset:
    """Deterministic desk-scale dataset: prototypes + pixel noise.

    Classes c and c' with c % num_groups == c' % num_groups share a group
    center and differ only by a within_group_scale perturbation, so their
    similarity is high by construction. Prototypes are scaled to unit
    per-pixel RMS, which keeps the per-pixel signal commensurate with
    noise_sigma at any image size.
    """
    if num_classes < 3:
        raise InvalidInputError(f"need at least 3 classes, got {num_classes}")
    if n_per_class < 1 or n_test_per_class < 1 or image_size < 2:
        raise InvalidInputError("sizes must be positive (image_size >= 2)")
    if not 1 <= num_groups <= num_classes:
        raise InvalidInputError(f"num_groups must be in 1..{num_classes}, got {num_groups}")
    if noise_sigma < 0 or within_group_scale < 0:
        raise InvalidInputError("noise_sigma and within_group_scale must be >= 0")

    rng = SeededRng(seed)
    dim = image_size * image_size
    centers = rng.standard_normal((num_groups, dim))
    centers = centers / np.linalg.norm(centers, axis=1, keepdims=True)

    prototypes = np.empty((num_classes, dim))
    for c in range(num_classes):
        offset = _unit(rng.standard_normal(dim))
        raw = centers[c % num_groups] + within_group_scale * offset
        prototypes[c] = _unit(raw) * np.sqrt(dim)  # unit per-pixel RMS

    def draw_split(n: int) -> tuple[np.ndarray, np.ndarray]:
        images = np.empty((num_classes * n, dim))
        labels = np.empty(num_classes * n, dtype=np.int64)
        for c in range(num_classes):
            block = slice(c * n, (c + 1) * n)
            images[block] = prototypes[c] + noise_sigma * rng.standard_normal((n, dim))
            labels[block] = c
        return images.reshape(-1, 1, image_size, image_size), labels

    train_images, train_labels = draw_split(n_per_class)
    test_images, test_labels = draw_split(n_test_per_class)

    norms = np.linalg.norm(prototypes, axis=1)
    similarity = (prototypes @ prototypes.T) / np.outer(norms, norms)
    np.fill_diagonal(similarity, 1.0)

    return SyntheticDataset(
        train_images=train_images,
        train_labels=train_labels,
        test_images=test_images,
        test_labels=test_labels,
        prototypes=prototypes,
        class_similarity=similarity,
        noise_sigma=noise_sigma,
    )
