"""Per-sample robustness cues: input-gradient norm, entropy, MC-dropout variance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import SeededRng, Tensor
from .errors import ConfigError

DEGENERATE_RANGE = 1e-12


@dataclass
class RawCues:
    g: np.ndarray
    H: np.ndarray
    u: np.ndarray


@dataclass
class CueVector:
    """Batch-normalized cues; ``as_matrix`` gives the [B, 3] scheduler input."""

    g: np.ndarray
    H: np.ndarray
    u: np.ndarray
    raw: RawCues | None = None

    def as_matrix(self) -> np.ndarray:
        return np.stack([self.g, self.H, self.u], axis=1)


def input_gradient(model, x, y) -> np.ndarray:
    """Rows of d(sum of per-sample CE)/dx under an eval-mode forward."""
    leaf = Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
    loss = ad.softmax_cross_entropy(model.forward(leaf, train=False), y, reduction="sum")
    return ad.grad(loss, [leaf])[0]


def gradient_norm(model, x, y) -> np.ndarray:
    return np.linalg.norm(input_gradient(model, x, y), axis=1)


def prediction_entropy(logits) -> np.ndarray:
    """Entropy in nats of softmax(logits), row-wise; 0 log 0 counts as 0."""
    logits = np.asarray(getattr(logits, "data", logits), dtype=np.float64)
    logp = ad.log_softmax(logits)
    p = np.exp(logp)
    terms = np.where(p > 0, p * logp, 0.0)
    return np.maximum(-terms.sum(axis=1), 0.0)


def variance_across_passes(probs: np.ndarray) -> np.ndarray:
    """``probs`` is [T, B, K]; population variance over T, averaged over K."""
    return np.asarray(probs).var(axis=0).mean(axis=1)


def mc_dropout_uncertainty(model, x, T: int, rng: SeededRng) -> np.ndarray:
    if T < 1:
        raise ConfigError(f"MC dropout needs T >= 1 passes, got {T}")
    x = np.asarray(x, dtype=np.float64)
    passes = [ad.softmax(model.forward(x, train=True, rng=rng).data) for _ in range(T)]
    return variance_across_passes(np.stack(passes))


def batch_minmax_normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi - lo < DEGENERATE_RANGE:
        return np.full_like(v, 0.5)
    return np.clip((v - lo) / (hi - lo), 0.0, 1.0)


def extract_raw_cues(model, x, y, T: int, rng: SeededRng) -> RawCues:
    x = np.asarray(x, dtype=np.float64)
    leaf = Tensor(x, requires_grad=True)
    logits = model.forward(leaf, train=False)
    loss = ad.softmax_cross_entropy(logits, y, reduction="sum")
    g = np.linalg.norm(ad.grad(loss, [leaf])[0], axis=1)
    H = prediction_entropy(logits.data)
    u = mc_dropout_uncertainty(model, x, T, rng)
    return RawCues(g, H, u)


def assemble_cues(model, x, y, T: int, rng: SeededRng) -> CueVector:
    """Normalized cue vector for a batch. Plain arrays: no graph back to the model."""
    raw = extract_raw_cues(model, x, y, T, rng)
    return CueVector(batch_minmax_normalize(raw.g), batch_minmax_normalize(raw.H),
                     batch_minmax_normalize(raw.u), raw=raw)
