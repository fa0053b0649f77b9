"""Experiment runner comparing one-hot CE, uniform LS, and Zipf soft labels.

A run is a pure function of its TrainConfig: dataset, weight init, and batch
order all derive from the one seed. The two Zipf methods differ only in how
non-target classes are ranked each step (sorted global probabilities vs
dense spatial votes); the soft label itself is rebuilt from the current
forward pass and treated as a constant, so no teacher or history is kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .dataset import SyntheticDataset, generate_dataset
from .dense_ranking import VoteHistogram, logit_ranking, rank_from_votes
from .losses import SmoothingConfig, batch_cross_entropy, batch_label_smoothing, batch_zipf
from .network import ForwardPass, TinyNet
from .numerics import InvalidInputError, SeededRng, softmax
from .zipf_label import ZipfParams, make_zipf_soft_label

METHODS = ("ce", "ls", "zipf-logit", "zipf-dense")


class TrainingDivergedError(RuntimeError):
    """A training step produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    """Desk-scale defaults: 20 classes, 16x16 images, a 4x4 voting map."""

    num_classes: int = 20
    image_size: int = 16
    channels: tuple[int, ...] = (12, 24)
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.25
    momentum: float = 0.9
    seed: int = 0
    method: str = "ce"
    alpha: float = 1.0
    dense_layers: int = 1
    warmup_steps: int = 0
    smoothing: SmoothingConfig = field(
        default_factory=lambda: SmoothingConfig(zipf_weight=1.0, ls_epsilon=0.1, aux_ce_weight=0.5)
    )
    n_per_class: int = 200
    n_test_per_class: int = 50
    num_groups: int = 5
    within_group_scale: float = 0.35
    noise_sigma: float = 0.35

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if isinstance(self.smoothing, dict):
            object.__setattr__(self, "smoothing", _smoothing_from_dict(self.smoothing))
        if self.method not in METHODS:
            raise InvalidInputError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.num_classes < 3:
            raise InvalidInputError("num_classes must be >= 3")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("epochs and batch_size must be >= 1")
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise InvalidInputError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidInputError(f"momentum must be in [0, 1), got {self.momentum}")
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise InvalidInputError(f"alpha must be > 0, got {self.alpha}")
        if self.dense_layers not in (1, 2):
            raise InvalidInputError(f"dense_layers must be 1 or 2, got {self.dense_layers}")
        if self.dense_layers == 2 and len(self.channels) < 2:
            raise InvalidInputError("dense_layers=2 needs at least two conv blocks")
        if self.warmup_steps < 0:
            raise InvalidInputError("warmup_steps must be >= 0")

    @property
    def zipf_params(self) -> ZipfParams:
        return ZipfParams(alpha=self.alpha, support_size=self.num_classes - 1)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "channels":
                value = list(value)
            elif f.name == "smoothing":
                value = {
                    "zipf_weight": value.zipf_weight,
                    "ls_epsilon": value.ls_epsilon,
                    "aux_ce_weight": value.aux_ce_weight,
                }
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidInputError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidInputError("config JSON must be an object")
        return cls.from_dict(data)


def _smoothing_from_dict(data: dict) -> SmoothingConfig:
    known = {"zipf_weight", "ls_epsilon", "aux_ce_weight"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InvalidInputError(f"unknown smoothing keys: {', '.join(unknown)}")
    return SmoothingConfig(**data)


@dataclass
class MetricsHistory:
    """Per-epoch metrics; every list has one entry per completed epoch.

    ce_loss holds the base objective (plain CE, or the smoothed CE for the
    ls method); zipf_loss holds the unweighted Zipf KL term, 0 when unused.
    train_accuracy is the running average over the epoch's batches, measured
    before each step.
    """

    method: str
    seed: int
    train_accuracy: list[float] = field(default_factory=list)
    test_accuracy: list[float] = field(default_factory=list)
    ce_loss: list[float] = field(default_factory=list)
    zipf_loss: list[float] = field(default_factory=list)
    nontarget_entropy: list[float] = field(default_factory=list)

    CSV_COLUMNS = ("epoch", "train_accuracy", "test_accuracy", "ce_loss", "zipf_loss", "nontarget_entropy")

    @property
    def num_epochs(self) -> int:
        return len(self.train_accuracy)

    def to_csv(self, path) -> None:
        lines = [",".join(self.CSV_COLUMNS)]
        for e in range(self.num_epochs):
            row = [str(e + 1)] + [
                f"{series[e]:.17g}"
                for series in (
                    self.train_accuracy,
                    self.test_accuracy,
                    self.ce_loss,
                    self.zipf_loss,
                    self.nontarget_entropy,
                )
            ]
            lines.append(",".join(row))
        Path(path).write_text("\n".join(lines) + "\n")

    def summary(self) -> dict:
        if self.num_epochs == 0:
            raise InvalidInputError("no epochs recorded")
        return {
            "method": self.method,
            "seed": self.seed,
            "epochs": self.num_epochs,
            "final_train_accuracy": self.train_accuracy[-1],
            "final_test_accuracy": self.test_accuracy[-1],
            "best_test_accuracy": max(self.test_accuracy),
            "final_ce_loss": self.ce_loss[-1],
            "final_zipf_loss": self.zipf_loss[-1],
            "final_nontarget_entropy": self.nontarget_entropy[-1],
        }

    def write_summary(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2) + "\n")


def mean_nontarget_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean entropy (nats) of the renormalized non-target prediction rows."""
    p = np.asarray(probs, dtype=np.float64).copy()
    rows = np.arange(p.shape[0])
    p[rows, labels] = 0.0
    total = p.sum(axis=1, keepdims=True)
    total[total == 0.0] = 1.0
    p /= total
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return float(-terms.sum(axis=1).mean())


def _rowwise_vote_counts(fmap: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Per-sample vote histograms, (B, C), from per-location argmaxes."""
    batch, _, height, width = fmap.shape
    num_classes = weight.shape[0]
    local = np.tensordot(fmap, weight, axes=([1], [1])) + bias  # (B, H, W, C)
    votes = local.reshape(batch, height * width, num_classes).argmax(axis=2)
    offsets = np.arange(batch)[:, None] * num_classes
    flat = np.bincount((votes + offsets).ravel(), minlength=batch * num_classes)
    return flat.reshape(batch, num_classes)


def _soft_label_rows(
    net: TinyNet, cfg: TrainConfig, fp: ForwardPass, probs: np.ndarray, labels: np.ndarray
) -> np.ndarray:
    """One Zipf soft label per row, built from the current (detached) forward pass."""
    batch, num_classes = probs.shape
    out = np.empty((batch, num_classes))
    if cfg.method == "zipf-logit":
        for i in range(batch):
            ranks = logit_ranking(probs[i], int(labels[i]))
            out[i] = make_zipf_soft_label(ranks, cfg.alpha, num_classes).probs
    else:
        counts = _rowwise_vote_counts(fp.pooled[-1], net.params["Wc"], net.params["bc"])
        if cfg.dense_layers == 2:
            counts += _rowwise_vote_counts(fp.pooled[-2], net.params["Wa"], net.params["ba"])
        for i in range(batch):
            ranks = rank_from_votes(VoteHistogram(counts[i]), probs[i], int(labels[i]))
            out[i] = make_zipf_soft_label(ranks, cfg.alpha, num_classes).probs
    return out


def batch_objective(
    net: TinyNet,
    images: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    step: int = 0,
    ptilde_rows: np.ndarray | None = None,
) -> tuple[float, dict, np.ndarray, np.ndarray | None, ForwardPass]:
    """Forward pass plus the configured mean loss and its logit gradients.

    Returns (value, components, dlogits, daux_logits, forward_pass). With
    ptilde_rows given, the soft labels are held fixed instead of rebuilt;
    finite-difference gradient checks rely on that.
    """
    fp = net.forward(images)
    comps = {"correct": int((fp.logits.argmax(axis=1) == labels).sum()), "zipf": 0.0, "aux": 0.0}
    daux = None

    if cfg.method == "ls":
        value, dlogits = batch_label_smoothing(fp.logits, labels, cfg.smoothing.ls_epsilon)
        comps["ce"] = value
        return value, comps, dlogits, daux, fp

    value, dlogits = batch_cross_entropy(fp.logits, labels)
    comps["ce"] = value
    if cfg.method == "ce":
        return value, comps, dlogits, daux, fp

    lam = cfg.smoothing.zipf_weight
    if lam != 0.0 and step >= cfg.warmup_steps:
        if ptilde_rows is None:
            probs = softmax(fp.logits, axis=-1)
            ptilde_rows = _soft_label_rows(net, cfg, fp, probs, labels)
        zipf_value, zipf_grad = batch_zipf(fp.logits, labels, ptilde_rows)
        comps["zipf"] = zipf_value
        value = value + lam * zipf_value
        dlogits = dlogits + lam * zipf_grad

    if cfg.method == "zipf-dense" and cfg.dense_layers == 2 and cfg.smoothing.aux_ce_weight != 0.0:
        aux_value, aux_grad = batch_cross_entropy(fp.aux_logits, labels)
        comps["aux"] = aux_value
        value = value + cfg.smoothing.aux_ce_weight * aux_value
        daux = cfg.smoothing.aux_ce_weight * aux_grad

    return value, comps, dlogits, daux, fp


def backward_and_step(
    net: TinyNet,
    velocities: dict[str, np.ndarray],
    images: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    step: int = 0,
) -> dict:
    """One SGD-with-momentum step in place; returns the loss components."""
    value, comps, dlogits, daux, fp = batch_objective(net, images, labels, cfg, step)
    if not np.isfinite(value):
        raise TrainingDivergedError(
            f"non-finite loss {value!r} at step {step} (method={cfg.method}, "
            f"lr={cfg.learning_rate})"
        )
    grads = net.backward(fp, dlogits, daux)
    for key, grad in grads.items():
        velocities[key] = cfg.momentum * velocities[key] - cfg.learning_rate * grad
        net.params[key] += velocities[key]
    comps["loss"] = value
    return comps


def _evaluate(net: TinyNet, images: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    probs = net.global_probs(images)
    accuracy = float((probs.argmax(axis=1) == labels).mean())
    return accuracy, mean_nontarget_entropy(probs, labels)


def train_model(cfg: TrainConfig) -> tuple[TinyNet, SyntheticDataset, MetricsHistory]:
    """Full training run; returns the trained net, its data, and the metrics."""
    ds = generate_dataset(
        seed=cfg.seed,
        num_classes=cfg.num_classes,
        n_per_class=cfg.n_per_class,
        image_size=cfg.image_size,
        n_test_per_class=cfg.n_test_per_class,
        num_groups=cfg.num_groups,
        within_group_scale=cfg.within_group_scale,
        noise_sigma=cfg.noise_sigma,
    )
    init_rng, shuffle_rng = SeededRng(cfg.seed).spawn(2)
    net = TinyNet(
        init_rng,
        num_classes=cfg.num_classes,
        image_size=cfg.image_size,
        channels=cfg.channels,
        aux_head=(cfg.dense_layers == 2),
    )
    velocities = {key: np.zeros_like(value) for key, value in net.params.items()}
    history = MetricsHistory(method=cfg.method, seed=cfg.seed)

    n_train = ds.train_images.shape[0]
    step = 0
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(n_train)
        hits = 0
        seen = 0
        ce_sum = 0.0
        zipf_sum = 0.0
        batches = 0
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            comps = backward_and_step(
                net, velocities, ds.train_images[idx], ds.train_labels[idx], cfg, step
            )
            hits += comps["correct"]
            seen += idx.shape[0]
            ce_sum += comps["ce"]
            zipf_sum += comps["zipf"]
            batches += 1
            step += 1
        test_accuracy, test_entropy = _evaluate(net, ds.test_images, ds.test_labels)
        history.train_accuracy.append(hits / seen)
        history.test_accuracy.append(test_accuracy)
        history.ce_loss.append(ce_sum / batches)
        history.zipf_loss.append(zipf_sum / batches)
        history.nontarget_entropy.append(test_entropy)
    return net, ds, history


def run_experiment(cfg: TrainConfig) -> MetricsHistory:
    return train_model(cfg)[2]
