"""A small convolutional network with hand-written backpropagation.

Blocks of 3x3 same-padding convolution + tanh + 2x2 average pooling, then
global average pooling and one linear classifier. The classifier weights are
shared between the pooled (global) path and the per-location (voting) path:
both read the same arrays. An optional auxiliary classifier sits on the
penultimate pooled map so a second feature map can contribute votes.

Everything is float64 and explicit so parameter gradients can be checked
against finite differences. tanh is used instead of ReLU because the check
needs a smooth loss surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .numerics import InvalidInputError, SeededRng

KERNEL = 3
PAD = 1


def im2col(x: np.ndarray) -> np.ndarray:
    """(B, D, S, S) -> (D*9, B*S*S) patch matrix for a 3x3 same conv.

    Column-major-in-location layout so the convolution is one BLAS matmul.
    """
    batch, depth, height, width = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (PAD, PAD), (PAD, PAD)))
    windows = sliding_window_view(padded, (KERNEL, KERNEL), axis=(2, 3))
    cols = windows.transpose(1, 4, 5, 0, 2, 3)
    return np.ascontiguousarray(cols).reshape(depth * KERNEL * KERNEL, batch * height * width)


def col2im(dcols: np.ndarray, batch: int, depth: int, height: int, width: int) -> np.ndarray:
    """Adjoint of im2col: scatter patch-gradients back onto the image grid."""
    dc = dcols.reshape(depth, KERNEL, KERNEL, batch, height, width)
    out = np.zeros((batch, depth, height + 2 * PAD, width + 2 * PAD))
    for i in range(KERNEL):
        for j in range(KERNEL):
            out[:, :, i : i + height, j : j + width] += dc[:, i, j].transpose(1, 0, 2, 3)
    return out[:, :, PAD : PAD + height, PAD : PAD + width]


def avgpool2(x: np.ndarray) -> np.ndarray:
    """2x2 average pooling, stride 2. Spatial dims must be even."""
    return (
        x[:, :, 0::2, 0::2] + x[:, :, 0::2, 1::2] + x[:, :, 1::2, 0::2] + x[:, :, 1::2, 1::2]
    ) * 0.25


def avgpool2_backward(dy: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(dy, 2, axis=2), 2, axis=3) * 0.25


@dataclass
class ForwardPass:
    """Outputs plus every intermediate needed for the backward pass."""

    logits: np.ndarray  # (B, C)
    pooled: list[np.ndarray]  # per block, (B, D_i, S_i, S_i); pooled[-1] is the voting map
    aux_logits: np.ndarray | None  # (B, C) from the auxiliary head, if present
    _cols: list[np.ndarray]
    _activations: list[np.ndarray]
    _gap: np.ndarray
    _aux_gap: np.ndarray | None
    _batch: int


class TinyNet:
    """Conv blocks + GAP + shared classifier, parameters in a flat dict.

    channels gives the output depth of each conv block; the spatial side
    halves per block, so image_size must be divisible by 2^len(channels) with
    at least a 2x2 map left for voting.
    """

    def __init__(
        self,
        rng: SeededRng,
        num_classes: int,
        image_size: int = 16,
        channels: tuple[int, ...] = (12, 24),
        aux_head: bool = False,
    ):
        if num_classes < 2:
            raise InvalidInputError("num_classes must be >= 2")
        if not channels:
            raise InvalidInputError("need at least one conv block")
        side = image_size
        for _ in channels:
            if side % 2 != 0:
                raise InvalidInputError(
                    f"image_size {image_size} not divisible by 2^{len(channels)}"
                )
            side //= 2
        if side < 2:
            raise InvalidInputError(f"final map {side}x{side} too small for voting (need >= 2)")
        if aux_head and len(channels) < 2:
            raise InvalidInputError("auxiliary head needs at least two conv blocks")

        self.num_classes = num_classes
        self.image_size = image_size
        self.channels = tuple(channels)
        self.final_side = side
        self.params: dict[str, np.ndarray] = {}
        depth_in = 1
        for i, depth_out in enumerate(self.channels, start=1):
            fan_in = depth_in * KERNEL * KERNEL
            self.params[f"W{i}"] = rng.standard_normal((depth_out, fan_in)) * np.sqrt(1.0 / fan_in)
            self.params[f"b{i}"] = np.zeros(depth_out)
            depth_in = depth_out
        self.params["Wc"] = rng.standard_normal((num_classes, depth_in)) * np.sqrt(1.0 / depth_in)
        self.params["bc"] = np.zeros(num_classes)
        if aux_head:
            aux_depth = self.channels[-2]
            self.params["Wa"] = rng.standard_normal((num_classes, aux_depth)) * np.sqrt(
                1.0 / aux_depth
            )
            self.params["ba"] = np.zeros(num_classes)
        self.aux_head = aux_head

    def forward(self, x: np.ndarray) -> ForwardPass:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2] != self.image_size:
            raise InvalidInputError(
                f"expected (B, 1, {self.image_size}, {self.image_size}) images, got {x.shape}"
            )
        batch = x.shape[0]
        side = self.image_size
        current = x
        cols: list[np.ndarray] = []
        activations: list[np.ndarray] = []
        pooled: list[np.ndarray] = []
        for i, depth in enumerate(self.channels, start=1):
            col = im2col(current)
            act = np.tanh(self.params[f"W{i}"] @ col + self.params[f"b{i}"][:, None])
            act = act.reshape(depth, batch, side, side).transpose(1, 0, 2, 3)
            current = avgpool2(act)
            side //= 2
            cols.append(col)
            activations.append(act)
            pooled.append(current)

        gap = pooled[-1].mean(axis=(2, 3))
        logits = gap @ self.params["Wc"].T + self.params["bc"]

        aux_logits = None
        aux_gap = None
        if self.aux_head:
            aux_gap = pooled[-2].mean(axis=(2, 3))
            aux_logits = aux_gap @ self.params["Wa"].T + self.params["ba"]

        return ForwardPass(
            logits=logits,
            pooled=pooled,
            aux_logits=aux_logits,
            _cols=cols,
            _activations=activations,
            _gap=gap,
            _aux_gap=aux_gap,
            _batch=batch,
        )

    def backward(
        self,
        fp: ForwardPass,
        dlogits: np.ndarray,
        daux_logits: np.ndarray | None = None,
    ) -> dict[str, np.ndarray]:
        """Gradients for every parameter given d(loss)/d(logits).

        dlogits must already include the batch reduction (gradients of the
        MEAN loss), so the returned gradients feed SGD directly.
        """
        grads: dict[str, np.ndarray] = {}
        grads["Wc"] = dlogits.T @ fp._gap
        grads["bc"] = dlogits.sum(axis=0)

        final = fp.pooled[-1]
        locations = final.shape[2] * final.shape[3]
        dgap = dlogits @ self.params["Wc"]
        dpooled = np.broadcast_to(dgap[:, :, None, None] / locations, final.shape).copy()

        if daux_logits is not None:
            if not self.aux_head:
                raise InvalidInputError("daux_logits given but the net has no auxiliary head")
            grads["Wa"] = daux_logits.T @ fp._aux_gap
            grads["ba"] = daux_logits.sum(axis=0)

        for i in range(len(self.channels), 0, -1):
            act = fp._activations[i - 1]
            dact = avgpool2_backward(dpooled)
            dpre = (dact * (1.0 - act * act)).transpose(1, 0, 2, 3)
            depth = dpre.shape[0]
            dpre = dpre.reshape(depth, -1)
            grads[f"W{i}"] = dpre @ fp._cols[i - 1].T
            grads[f"b{i}"] = dpre.sum(axis=1)
            if i > 1:
                below = fp.pooled[i - 2]
                dcols = self.params[f"W{i}"].T @ dpre
                dpooled = col2im(dcols, fp._batch, below.shape[1], below.shape[2], below.shape[3])
                # the auxiliary head hangs off the penultimate pooled map
                if daux_logits is not None and i == len(self.channels):
                    daux_gap = daux_logits @ self.params["Wa"]
                    aux_locs = below.shape[2] * below.shape[3]
                    dpooled = dpooled + daux_gap[:, :, None, None] / aux_locs
        return grads

    def global_probs(self, x: np.ndarray, batch_size: int = 500) -> np.ndarray:
        """Softmax predictions over x, evaluated in batches."""
        from .numerics import softmax

        outputs = []
        for i in range(0, x.shape[0], batch_size):
            outputs.append(softmax(self.forward(x[i : i + batch_size]).logits, axis=-1))
        return np.concatenate(outputs, axis=0)
