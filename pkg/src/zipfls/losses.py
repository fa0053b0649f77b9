"""Classification losses with analytic per-logit gradients.

Cross-entropy, uniform label smoothing, the Zipf KL term over normalized
non-target predictions, and the combined objective
CE + zipf_weight * KL (+ optional auxiliary-head CE). Soft targets are
constants: gradients flow only through the logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import InvalidInputError, as_logits, log_softmax
from .zipf_label import ZipfSoftLabel


@dataclass(frozen=True)
class LossValue:
    """Scalar loss plus its gradient with respect to the logits.

    ``aux_gradient`` is the gradient on the auxiliary head's logits when the
    combined loss carries an auxiliary CE term, else None.
    """

    value: float
    gradient: np.ndarray
    aux_gradient: np.ndarray | None = None


@dataclass(frozen=True)
class SmoothingConfig:
    """Loss weights: Zipf KL strength, LS mass, auxiliary-head CE weight.

    The source formulas reuse one symbol for the LS mass and the aux-CE
    weight; they are independent knobs here.
    """

    zipf_weight: float = 0.1
    ls_epsilon: float = 0.1
    aux_ce_weight: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.zipf_weight) or self.zipf_weight < 0:
            raise InvalidInputError(f"zipf_weight must be >= 0, got {self.zipf_weight}")
        if not 0.0 <= self.ls_epsilon < 1.0:
            raise InvalidInputError(f"ls_epsilon must be in [0, 1), got {self.ls_epsilon}")
        if not np.isfinite(self.aux_ce_weight) or self.aux_ce_weight < 0:
            raise InvalidInputError(f"aux_ce_weight must be >= 0, got {self.aux_ce_weight}")


def _check_target(num_classes: int, y: int) -> None:
    if not 0 <= y < num_classes:
        raise InvalidInputError(f"target {y} out of range for {num_classes} classes")


def cross_entropy(z, y: int) -> LossValue:
    """CE = -log softmax(z)[y]; gradient = softmax(z) - onehot(y)."""
    z = as_logits(z)
    _check_target(z.shape[0], y)
    logp = log_softmax(z)
    grad = np.exp(logp)
    grad[y] -= 1.0
    return LossValue(value=float(-logp[y]), gradient=grad)


def normalized_nontarget_probs(z, y: int) -> np.ndarray:
    """Softmax over the non-target logits only; entry y is exactly 0."""
    z = as_logits(z)
    _check_target(z.shape[0], y)
    mask = np.arange(z.shape[0]) != y
    out = np.zeros_like(z)
    shifted = z[mask] - z[mask].max()
    e = np.exp(shifted)
    out[mask] = e / e.sum()
    return out


def zipf_loss(z, y: int, ptilde: ZipfSoftLabel) -> LossValue:
    """KL(ptilde || normalized non-target prediction) and its logit gradient.

    gradient[y] = 0; gradient[c] = phat_c - ptilde_c for c != y. Evaluated
    through log-softmax differences so tiny phat entries cannot underflow.
    """
    z = as_logits(z)
    _check_target(z.shape[0], y)
    if ptilde.target != y:
        raise InvalidInputError(f"soft label targets class {ptilde.target}, loss targets {y}")
    pt = ptilde.probs
    if pt.shape != z.shape:
        raise InvalidInputError(f"shape mismatch: logits {z.shape}, soft label {pt.shape}")

    mask = np.arange(z.shape[0]) != y
    log_phat = log_softmax(z[mask])
    pt_nt = pt[mask]
    pos = pt_nt > 0.0
    value = float(np.sum(pt_nt[pos] * (np.log(pt_nt[pos]) - log_phat[pos])))
    grad = np.zeros_like(z)
    grad[mask] = np.exp(log_phat) - pt_nt
    return LossValue(value=max(value, 0.0), gradient=grad)


def label_smoothing_loss(z, y: int, ls_epsilon: float) -> LossValue:
    """CE against the uniformly smoothed target: 1-eps on y, eps/(C-1) elsewhere."""
    z = as_logits(z)
    _check_target(z.shape[0], y)
    if not 0.0 <= ls_epsilon < 1.0:
        raise InvalidInputError(f"ls_epsilon must be in [0, 1), got {ls_epsilon}")
    num_classes = z.shape[0]
    target = np.full(num_classes, ls_epsilon / (num_classes - 1))
    target[y] = 1.0 - ls_epsilon
    logp = log_softmax(z)
    return LossValue(value=float(-(target @ logp)), gradient=np.exp(logp) - target)


def combined_loss(
    z,
    y: int,
    ptilde: ZipfSoftLabel | None,
    cfg: SmoothingConfig,
    aux: tuple[np.ndarray, int] | None = None,
) -> LossValue:
    """CE + zipf_weight * Zipf KL, plus aux_ce_weight * CE on an auxiliary head.

    zipf_weight == 0 skips the Zipf term entirely, so the result is bitwise
    identical to plain cross-entropy.
    """
    ce = cross_entropy(z, y)
    value = ce.value
    grad = ce.gradient
    if cfg.zipf_weight != 0.0:
        if ptilde is None:
            raise InvalidInputError("zipf_weight > 0 requires a soft label")
        zl = zipf_loss(z, y, ptilde)
        value = value + cfg.zipf_weight * zl.value
        grad = grad + cfg.zipf_weight * zl.gradient

    aux_grad = None
    if aux is not None and cfg.aux_ce_weight != 0.0:
        aux_z, aux_y = aux
        aux_ce = cross_entropy(aux_z, aux_y)
        value = value + cfg.aux_ce_weight * aux_ce.value
        aux_grad = cfg.aux_ce_weight * aux_ce.gradient
    return LossValue(value=value, gradient=grad, aux_gradient=aux_grad)


# Batched forms used by the trainer. Each returns the mean loss over rows and
# the gradient of that mean with respect to the full logit matrix.


def batch_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    logits = np.asarray(logits, dtype=np.float64)
    batch = logits.shape[0]
    rows = np.arange(batch)
    logp = log_softmax(logits, axis=-1)
    value = float(-logp[rows, targets].mean())
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    return value, grad / batch


def batch_label_smoothing(
    logits: np.ndarray, targets: np.ndarray, ls_epsilon: float
) -> tuple[float, np.ndarray]:
    logits = np.asarray(logits, dtype=np.float64)
    batch, num_classes = logits.shape
    rows = np.arange(batch)
    smoothed = np.full((batch, num_classes), ls_epsilon / (num_classes - 1))
    smoothed[rows, targets] = 1.0 - ls_epsilon
    logp = log_softmax(logits, axis=-1)
    value = float(-(smoothed * logp).sum(axis=1).mean())
    return value, (np.exp(logp) - smoothed) / batch


def batch_zipf(
    logits: np.ndarray, targets: np.ndarray, ptilde_rows: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean Zipf KL over rows; ptilde_rows[i] must put 0 on targets[i]."""
    logits = np.asarray(logits, dtype=np.float64)
    batch, num_classes = logits.shape
    rows = np.arange(batch)
    masked = logits.copy()
    masked[rows, targets] = -np.inf  # excluded from the non-target normalizer
    shifted = masked - masked.max(axis=1, keepdims=True)
    log_phat = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_phat[rows, targets] = 0.0  # placeholder; ptilde is 0 there

    pt = np.asarray(ptilde_rows, dtype=np.float64)
    pos = pt > 0.0
    terms = np.zeros_like(pt)
    terms[pos] = pt[pos] * (np.log(pt[pos]) - log_phat[pos])
    value = max(float(terms.sum(axis=1).mean()), 0.0)

    grad = np.exp(log_phat) - pt
    grad[rows, targets] = 0.0
    return value, grad / batch
