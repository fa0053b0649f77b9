"""Shared numerical primitives: stable softmax, divergences, sorting, seeded RNG.

All probability math is done in 64-bit floats. Vectors of class scores
("logits") and probability vectors are plain 1-D numpy arrays; helpers here
validate them at API boundaries instead of wrapping them in classes.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

PROB_SUM_ATOL = 1e-12


class InvalidInputError(ValueError):
    """Raised when an input violates a precondition (shape, finiteness, range)."""


class SupportViolationError(ValueError):
    """Raised when KL(p || q) is requested with p_i > 0 where q_i = 0."""


def as_logits(z) -> np.ndarray:
    """Validate and return a 1-D float64 logit vector (finite, length >= 2)."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise InvalidInputError(f"logits must be a 1-D vector of length >= 2, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits must be finite")
    return z


def as_prob_vector(p, *, atol: float = PROB_SUM_ATOL) -> np.ndarray:
    """Validate and return a 1-D float64 probability vector.

    Entries must be >= 0 and sum to 1 within ``atol``.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise InvalidInputError(f"probability vector must be 1-D, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("probability vector must be finite")
    if np.any(p < 0.0):
        raise InvalidInputError("probability vector has negative entries")
    s = float(p.sum())
    if abs(s - 1.0) > atol:
        raise InvalidInputError(f"probability vector sums to {s!r}, not 1 within {atol}")
    return p


def softmax(z, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along ``axis`` (max-subtraction).

    Accepts any finite float array; 1-D input yields a probability vector.
    """
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("softmax input must be finite")
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(z, axis: int = -1) -> np.ndarray:
    """log(softmax(z)) without intermediate underflow."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("log_softmax input must be finite")
    shifted = z - z.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def kl_divergence(p, q) -> float:
    """KL(p || q) = sum_i p_i log(p_i / q_i), with the 0*log(0) := 0 convention.

    Raises SupportViolationError if p puts mass where q has none.
    """
    p = as_prob_vector(p)
    q = as_prob_vector(q)
    if p.shape != q.shape:
        raise InvalidInputError(f"shape mismatch: {p.shape} vs {q.shape}")
    mask = p > 0.0
    if np.any(q[mask] == 0.0):
        raise SupportViolationError("p has mass where q is zero; KL(p||q) is undefined")
    val = float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))
    # KL >= 0 mathematically; clamp float round-off on the p ~ q boundary.
    return max(val, 0.0)


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence (natural log): 0.5 KL(p||m) + 0.5 KL(q||m)."""
    p = as_prob_vector(p)
    q = as_prob_vector(q)
    if p.shape != q.shape:
        raise InvalidInputError(f"shape mismatch: {p.shape} vs {q.shape}")
    m = 0.5 * (p + q)
    return 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m)


def sort_desc_with_indices(v) -> tuple[np.ndarray, np.ndarray]:
    """Stable descending sort; ties keep original index order.

    Returns (sorted values, original indices).
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise InvalidInputError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("entries must be finite")
    idx = np.argsort(-v, kind="stable")
    return v[idx], idx


class SeededRng:
    """Deterministic random source: PCG64 stream + inverse-CDF transforms.

    All derived quantities are fixed functions of the PCG64 bit stream:

    * uniforms are (k + 0.5) / 2^53 for a 53-bit draw k, so they lie in the
      open interval (0, 1);
    * standard normals are the inverse normal CDF of those uniforms;
    * categorical draws invert the CDF of the given pmf via searchsorted.

    The same seed therefore reproduces the same values on any platform
    running the same numpy/scipy build. Instances are single-owner: do not
    share one across threads.
    """

    def __init__(self, seed: int, _seq: np.random.SeedSequence | None = None):
        self.seed = int(seed)
        self._seq = _seq if _seq is not None else np.random.SeedSequence(self.seed)
        self._gen = np.random.Generator(np.random.PCG64(self._seq))

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, spawn_key={self._seq.spawn_key})"

    def uniform_open(self, shape=None) -> np.ndarray:
        """Uniforms strictly inside (0, 1)."""
        k = self._gen.integers(0, 1 << 53, size=shape, dtype=np.uint64)
        return (k.astype(np.float64) + 0.5) * 2.0**-53

    def standard_normal(self, shape=None) -> np.ndarray:
        """i.i.d. N(0, 1) draws via the inverse-CDF transform."""
        return ndtri(self.uniform_open(shape))

    def categorical(self, pmf, size: int) -> np.ndarray:
        """``size`` draws of indices 0..K-1 distributed per ``pmf``."""
        pmf = as_prob_vector(pmf)
        cdf = np.cumsum(pmf)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, self.uniform_open(size), side="right").astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def spawn(self, n: int) -> list["SeededRng"]:
        """n independent child streams, deterministic in the parent seed."""
        return [SeededRng(self.seed, _seq=child) for child in self._seq.spawn(n)]


def standard_normal_matrix(rng: SeededRng, rows: int, cols: int) -> np.ndarray:
    """(rows, cols) matrix of i.i.d. N(0, 1) entries from ``rng``."""
    if rows < 1 or cols < 1:
        raise InvalidInputError("rows and cols must be >= 1")
    return rng.standard_normal((rows, cols))
