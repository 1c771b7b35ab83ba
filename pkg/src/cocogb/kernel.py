"""Reference numerics for guided-attention caption losses.

Everything here is a pure function of numpy arrays.  The captioning model
itself is out of scope: callers hand in attention grids, images (or feature
maps), per-step token distributions and person masks.
"""
from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .attention import upsample_bilinear
from .coco import SegMask
from .lexicon import DEFAULT_LEXICON, GenderLexicon

# Training weights for the gender-evidence and gender-attention terms.
DEFAULT_MU = 0.1
DEFAULT_ETA = 0.05


class KernelError(ValueError):
    pass


class ShapeError(KernelError):
    pass


class NormalizationError(KernelError):
    pass


@dataclass(frozen=True)
class MaskParams:
    """Sigmoid threshold and sharpness of the soft mask.

    The defaults assume the grid was max-normalized to [0, 1] first.
    """

    threshold: float = 0.5
    sharpness: float = 10.0

    def __post_init__(self):
        if not self.sharpness > 0:
            raise KernelError(f"sharpness must be > 0, got {self.sharpness}")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def soft_mask(alpha, params: MaskParams = MaskParams()) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    return _sigmoid(params.sharpness * (alpha - params.threshold))


def grad_soft_mask(alpha, params: MaskParams = MaskParams()) -> np.ndarray:
    """Elementwise derivative of :func:`soft_mask`."""
    t = soft_mask(alpha, params)
    return params.sharpness * t * (1.0 - t)


def max_normalize(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    peak = alpha.max()
    if not peak > 0:
        raise NormalizationError("cannot max-normalize a grid without positive entries")
    return alpha / peak


def masked_image(image, alpha, params: MaskParams = MaskParams(), normalize_peak: bool = True) -> np.ndarray:
    """Suppress the attended regions: ``I - I * T(alpha)``.

    ``image`` is ``(channels, height, width)``; ``alpha`` is resized to the
    spatial size (mass-preserving bilinear) and broadcast over channels.
    """
    image = np.asarray(image, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if image.ndim != 3:
        raise ShapeError(f"image must be (channels, height, width), got shape {image.shape}")
    if alpha.ndim != 2:
        raise ShapeError(f"attention must be 2-D, got shape {alpha.shape}")
    if not np.isfinite(image).all():
        raise KernelError("image contains non-finite values")
    _, h, w = image.shape
    up = alpha if alpha.shape == (h, w) else upsample_bilinear(alpha, w, h)
    if normalize_peak:
        up = max_normalize(up)
    t = soft_mask(up, params)
    if t.shape != (h, w):
        raise ShapeError(f"mask shape {t.shape} does not match image {(h, w)}")
    return image - image * t[None, :, :]


@dataclass
class TokenProbSeq:
    """Per-step vocabulary distributions ``probs[t]`` and targets ``targets[t]``."""

    probs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=int)
        if self.probs.ndim != 2 or self.targets.shape != (self.probs.shape[0],):
            raise ShapeError("probs must be (steps, vocab) with one target per step")
        if (self.probs < 0).any():
            raise KernelError("probabilities must be nonnegative")
        if not np.allclose(self.probs.sum(axis=1), 1.0, atol=1e-6, rtol=0):
            raise KernelError("each step's distribution must sum to 1")
        if ((self.targets < 0) | (self.targets >= self.probs.shape[1])).any():
            raise KernelError("target index outside the vocabulary")


def token_nll(seq: TokenProbSeq) -> float:
    p = seq.probs[np.arange(len(seq.targets)), seq.targets]
    if (p <= 0).any():
        raise KernelError(f"zero probability at target step(s) {np.flatnonzero(p <= 0).tolist()}: loss is infinite")
    return float(-np.sum(np.log(p)))


def neutral_targets(targets: Sequence[int], vocab: Sequence[str],
                    lexicon: GenderLexicon = DEFAULT_LEXICON) -> np.ndarray:
    """Map target token ids through the neutralization table (for the gender-evidence loss)."""
    index = {w: i for i, w in enumerate(vocab)}
    out = []
    for t in targets:
        rep = lexicon.replace.get(vocab[t])
        if rep is None:
            out.append(int(t))
        elif rep in index:
            out.append(index[rep])
        else:
            raise KernelError(f"neutral replacement {rep!r} for {vocab[t]!r} is not in the vocabulary")
    return np.asarray(out, dtype=int)


def downsample_mask(mask, grid_h: int, grid_w: int) -> np.ndarray:
    """Area-majority vote of a pixel mask onto a coarser grid.

    A cell is set when strictly more than half of its (fractional) area is
    covered.
    """
    bits = mask.bits if isinstance(mask, SegMask) else np.asarray(mask, dtype=bool)
    return _area_fraction(bits.astype(float), grid_h, grid_w) > 0.5


def _overlap(n_px: int, n_cells: int) -> np.ndarray:
    # [cell, pixel] = fraction of the cell covered by that pixel
    edges = np.linspace(0.0, n_px, n_cells + 1)
    px = np.arange(n_px)
    lo = np.maximum(edges[:-1, None], px[None, :])
    hi = np.minimum(edges[1:, None], px[None, :] + 1)
    return np.clip(hi - lo, 0.0, None) / (n_px / n_cells)


def _area_fraction(bits: np.ndarray, grid_h: int, grid_w: int) -> np.ndarray:
    return _overlap(bits.shape[0], grid_h) @ bits @ _overlap(bits.shape[1], grid_w).T


def _mask_like(alpha: np.ndarray, mask) -> np.ndarray:
    if isinstance(mask, SegMask):
        bits = mask.bits
    else:
        bits = np.asarray(mask)
        if bits.dtype != bool and not np.isin(bits, (0, 1)).all():
            raise KernelError("mask entries must be 0 or 1")
        bits = bits.astype(bool)
    if bits.shape != alpha.shape:
        bits = downsample_mask(bits, *alpha.shape)
    return bits.astype(float)


def normalize(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    total = alpha.sum()
    if not total > 0:
        raise NormalizationError("attention has no positive mass")
    return alpha / total


def attention_outside(alpha, mask) -> float:
    """Share of (sum-normalized) attention falling outside the mask."""
    a = normalize(alpha)
    return float(np.sum(a * (1.0 - _mask_like(a, mask))))


def gender_attention_loss(alpha, mask, tol: float = 1e-9) -> float:
    """Attention mass escaping the person region; ``alpha`` must sum to 1."""
    alpha = np.asarray(alpha, dtype=float)
    if (alpha < 0).any():
        raise NormalizationError("attention must be nonnegative")
    if abs(alpha.sum() - 1.0) > tol:
        raise NormalizationError(f"attention must sum to 1 (got {alpha.sum():.12g})")
    return float(np.sum(alpha * (1.0 - _mask_like(alpha, mask))))


def grad_gender_attention_loss(alpha, mask) -> np.ndarray:
    """Gradient of :func:`attention_outside` w.r.t. the raw (unnormalized) grid."""
    alpha = np.asarray(alpha, dtype=float)
    m = _mask_like(alpha, mask)
    total = alpha.sum()
    if not total > 0:
        raise NormalizationError("attention has no positive mass")
    loss = np.sum(alpha * (1.0 - m)) / total
    return ((1.0 - m) - loss) / total


def total_gender_attention_loss(alphas: Iterable, mask) -> float:
    """Sum over the grids of every gendered token in a caption."""
    return float(sum(gender_attention_loss(a, mask) for a in alphas))


@dataclass(frozen=True)
class LossBundle:
    l_lq: float
    l_ge: float
    l_self: float
    l_ga: float
    l_es: float
    mu: float
    eta: float


def combine_losses(l_lq: float, l_ge: float, l_ga: float, mu: float = DEFAULT_MU,
                   eta: float = DEFAULT_ETA) -> LossBundle:
    if mu < 0 or eta < 0:
        raise KernelError("loss weights must be nonnegative")
    l_self = l_lq + mu * l_ge
    return LossBundle(l_lq, l_ge, l_self, l_ga, l_self + eta * l_ga, mu, eta)
