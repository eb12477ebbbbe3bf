"""Discriminative anchor embedding trained with a pairwise hinge ranking loss.

Two linear maps share a latent space of dimension E: w_f projects raw
frame features (dim V) into it, and the K columns of w_a are per-label
anchor points.  A frame's score vector holds its similarity to each
anchor, f = w_a^T w_f x; training pushes a frame's true-label score above
every other anchor's score by a margin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass
class FeatureCorpus:
    """Per-video raw feature matrices (J_i x V each), in id order."""

    ids: list[str]
    videos: list[np.ndarray]

    def __post_init__(self):
        if len(self.ids) != len(self.videos):
            raise InputError("ids and videos length mismatch")
        if not self.videos:
            raise InputError("corpus is empty")
        dims = {m.shape[1] for m in self.videos}
        if len(dims) != 1:
            raise InputError(f"inconsistent feature dimensions: {sorted(dims)}")
        for vid, m in zip(self.ids, self.videos):
            if m.shape[0] < 1:
                raise InputError(f"video {vid} has no frames")
            if not np.all(np.isfinite(m)):
                raise InputError(f"video {vid} contains non-finite values")

    @property
    def dim(self) -> int:
        return self.videos[0].shape[1]

    @property
    def frame_counts(self) -> list[int]:
        return [m.shape[0] for m in self.videos]


@dataclass
class EmbeddingWeights:
    w_f: np.ndarray  # E x V
    w_a: np.ndarray  # E x K
    margin: float = 1.0
    l2: float = 1e-4
    embed_dim: int = field(default=0)

    def __post_init__(self):
        self.w_f = np.asarray(self.w_f, dtype=float)
        self.w_a = np.asarray(self.w_a, dtype=float)
        if self.w_f.shape[0] != self.w_a.shape[0]:
            raise InputError("w_f and w_a disagree on the latent dimension")
        if not (np.all(np.isfinite(self.w_f)) and np.all(np.isfinite(self.w_a))):
            raise InputError("weights contain non-finite values")
        self.embed_dim = self.w_f.shape[0]

    @property
    def n_labels(self) -> int:
        return self.w_a.shape[1]


def standardize(corpus: FeatureCorpus) -> FeatureCorpus:
    """Zero-mean unit-variance scaling per dimension, pooled over all frames.

    Constant dimensions are left centered with scale 1.  Hinge margins are
    scale sensitive, so all downstream consumers see standardized features.
    """
    stacked = np.concatenate(corpus.videos, axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std[std < 1e-12] = 1.0
    return FeatureCorpus(corpus.ids, [(m - mean) / std for m in corpus.videos])


def score_matrix(weights: EmbeddingWeights, x: np.ndarray) -> np.ndarray:
    """Anchor-similarity scores for a stack of feature rows (J x V -> J x K)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != weights.w_f.shape[1]:
        raise InputError(
            f"feature dim {x.shape[-1]} does not match w_f ({weights.w_f.shape[1]})"
        )
    return (x @ weights.w_f.T) @ weights.w_a


def scores(weights: EmbeddingWeights, x: np.ndarray) -> np.ndarray:
    """Score vector of a single frame: w_a^T w_f x."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError("scores expects a single feature vector")
    return score_matrix(weights, x[None, :])[0]


def _check_batch(weights, xs, labels):
    if xs.shape[0] == 0:
        raise InputError("batch is empty")
    k = weights.n_labels
    if np.any(labels < 1) or np.any(labels > k):
        raise InputError(f"labels must lie in 1..{k}")


def ranking_loss(weights: EmbeddingWeights, batch) -> float:
    """Hinge ranking loss over a batch of (x, label) pairs plus l2 penalty.

    For each frame, every wrong anchor pays max(0, f_k - f_{k*} + margin).
    """
    xs = np.asarray([b[0] for b in batch], dtype=float)
    labels = np.asarray([b[1] for b in batch], dtype=int)
    _check_batch(weights, xs, labels)
    f = score_matrix(weights, xs)
    target = f[np.arange(len(labels)), labels - 1]
    viol = np.maximum(0.0, f - target[:, None] + weights.margin)
    viol[np.arange(len(labels)), labels - 1] = 0.0
    reg = weights.l2 * (np.sum(weights.w_f**2) + np.sum(weights.w_a**2))
    return float(viol.sum() + reg)


def ranking_loss_grad(weights: EmbeddingWeights, batch):
    """Subgradient of ranking_loss wrt (w_f, w_a); hinges at exactly 0 give 0."""
    xs = np.asarray([b[0] for b in batch], dtype=float)
    labels = np.asarray([b[1] for b in batch], dtype=int)
    _check_batch(weights, xs, labels)
    f = score_matrix(weights, xs)
    rows = np.arange(len(labels))
    target = f[rows, labels - 1]
    active = (f - target[:, None] + weights.margin) > 0.0
    active[rows, labels - 1] = False
    # d loss / d f: +1 on each active wrong anchor, -(#active) on the true one
    df = active.astype(float)
    df[rows, labels - 1] = -active.sum(axis=1).astype(float)
    h = xs @ weights.w_f.T  # J x E, latent embeddings
    grad_w_a = h.T @ df + 2.0 * weights.l2 * weights.w_a
    grad_w_f = (weights.w_a @ df.T) @ xs + 2.0 * weights.l2 * weights.w_f
    return grad_w_f, grad_w_a


def init_weights(
    n_features: int,
    n_labels: int,
    embed_dim: int,
    margin: float,
    l2: float,
    rng: np.random.Generator,
) -> EmbeddingWeights:
    """Entries i.i.d. uniform in [-1/sqrt(E), 1/sqrt(E)]."""
    bound = 1.0 / np.sqrt(embed_dim)
    w_f = rng.uniform(-bound, bound, size=(embed_dim, n_features))
    w_a = rng.uniform(-bound, bound, size=(embed_dim, n_labels))
    return EmbeddingWeights(w_f=w_f, w_a=w_a, margin=margin, l2=l2)


def train_embedding(
    xs: np.ndarray,
    labels: np.ndarray,
    n_labels: int,
    rng: np.random.Generator,
    embed_dim: int = 200,
    margin: float = 1.0,
    l2: float = 1e-4,
    learning_rate: float = 0.01,
    momentum: float = 0.9,
    epochs: int = 12,
    batch_size: int = 200,
    init: EmbeddingWeights | None = None,
) -> EmbeddingWeights:
    """Minibatch SGD with momentum on the ranking loss.

    xs is the pooled (N x V) training matrix, labels in 1..n_labels.
    Deterministic given the generator: initialization and shuffle order both
    derive from it.  Pass `init` to continue training existing weights.
    """
    xs = np.asarray(xs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if xs.shape[0] == 0:
        raise InputError("no training frames")
    if labels.shape[0] != xs.shape[0]:
        raise InputError("labels/frames length mismatch")
    if init is None:
        weights = init_weights(xs.shape[1], n_labels, embed_dim, margin, l2, rng)
    else:
        weights = EmbeddingWeights(
            w_f=init.w_f.copy(), w_a=init.w_a.copy(), margin=margin, l2=l2
        )
    vel_f = np.zeros_like(weights.w_f)
    vel_a = np.zeros_like(weights.w_a)
    n = xs.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            batch = list(zip(xs[idx], labels[idx]))
            grad_f, grad_a = ranking_loss_grad(weights, batch)
            vel_f = momentum * vel_f - learning_rate * grad_f
            vel_a = momentum * vel_a - learning_rate * grad_a
            weights.w_f = weights.w_f + vel_f
            weights.w_a = weights.w_a + vel_a
    return weights
