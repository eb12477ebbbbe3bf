"""Gaussian mixtures over score vectors and cached frame log-likelihoods.

Each label gets a Q-component mixture with one diagonal covariance shared
across its components (score vectors are low-dimensional, but per-label
sample counts can be small).  Caches hold per-frame log densities so the
samplers only ever sum lookups.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, StateError

VAR_FLOOR = 1e-6
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class Mixture:
    weights: np.ndarray  # (Q,), simplex
    means: np.ndarray  # (Q, D)
    var: np.ndarray  # (D,), shared diagonal covariance
    loglik_trace: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.var = np.asarray(self.var, dtype=float)
        if abs(self.weights.sum() - 1.0) > 1e-9 or np.any(self.weights < 0):
            raise InputError("mixture weights must form a simplex")
        if np.any(self.var < VAR_FLOOR * (1 - 1e-12)):
            raise InputError(f"variances must respect the floor {VAR_FLOOR}")


@dataclass
class SubActivityMixtures:
    """One mixture per label 1..K, plus an optional background mixture."""

    per_label: list[Mixture]
    background: Mixture | None = None

    @property
    def k(self) -> int:
        return len(self.per_label)


def _log_densities(mixture: Mixture, points: np.ndarray) -> np.ndarray:
    """(N, Q) matrix of log w_q + log N(x; mu_q, diag var)."""
    diff = points[:, None, :] - mixture.means[None, :, :]
    quad = np.sum(diff * diff / mixture.var[None, None, :], axis=2)
    log_norm = -0.5 * (LOG_2PI * points.shape[1] + np.sum(np.log(mixture.var)))
    with np.errstate(divide="ignore"):
        log_w = np.log(mixture.weights)
    return log_w[None, :] + log_norm - 0.5 * quad


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))).squeeze(axis)


def frame_log_likelihood(mixture: Mixture, f: np.ndarray) -> float:
    """Log mixture density at a single score vector, via log-sum-exp."""
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size != mixture.means.shape[1]:
        raise InputError(
            f"score dim {f.shape} does not match mixture dim {mixture.means.shape[1]}"
        )
    return float(_logsumexp(_log_densities(mixture, f[None, :]), axis=1)[0])


def _kmeanspp_means(points: np.ndarray, q: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; duplicates chosen means once distinct points run out."""
    n = points.shape[0]
    means = [points[int(rng.integers(n))]]
    for _ in range(1, q):
        d2 = np.min(
            [np.sum((points - m) ** 2, axis=1) for m in means], axis=0
        )
        total = d2.sum()
        if total <= 0.0:
            means.append(means[int(rng.integers(len(means)))].copy())
            continue
        means.append(points[int(rng.choice(n, p=d2 / total))])
    return np.asarray(means, dtype=float)


def fit_mixture(
    points: np.ndarray,
    q: int,
    rng: np.random.Generator,
    max_iters: int = 50,
    tol: float = 1e-6,
) -> Mixture:
    """EM fit of a Q-component mixture with one shared diagonal covariance.

    Log-likelihood is non-decreasing over iterations; stops once the
    improvement falls below `tol`.  The fitted trace is attached for
    diagnostics.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise InputError("cannot fit a mixture to an empty point set")
    if q < 1:
        raise InputError("q must be >= 1")
    n, d = points.shape
    means = _kmeanspp_means(points, q, rng)
    var = np.maximum(points.var(axis=0), VAR_FLOOR)
    weights = np.full(q, 1.0 / q)
    mixture = Mixture(weights=weights, means=means, var=var)

    trace = []
    for _ in range(max_iters):
        logd = _log_densities(mixture, points)
        ll = float(np.sum(_logsumexp(logd, axis=1)))
        trace.append(ll)
        if len(trace) > 1 and ll - trace[-2] < tol:
            break
        resp = np.exp(logd - _logsumexp(logd, axis=1)[:, None])
        nk = resp.sum(axis=0)
        weights = nk / n
        # components with no mass keep their means; avoids 0/0
        means = np.where(
            (nk > 1e-12)[:, None], (resp.T @ points) / np.maximum(nk, 1e-12)[:, None], mixture.means
        )
        diff = points[:, None, :] - means[None, :, :]
        var = np.maximum(np.sum(resp[:, :, None] * diff * diff, axis=(0, 1)) / n, VAR_FLOOR)
        mixture = Mixture(weights=weights / weights.sum(), means=means, var=var)

    mixture.loglik_trace = np.asarray(trace)
    return mixture


def fallback_mixture(center: np.ndarray, q: int) -> Mixture:
    """Unit-variance mixture collapsed onto one center; sampler deadlock guard."""
    center = np.asarray(center, dtype=float)
    return Mixture(
        weights=np.full(q, 1.0 / q),
        means=np.tile(center, (q, 1)),
        var=np.ones(center.size),
    )


def fit_label_mixtures(
    score_list: list[np.ndarray],
    z_list: list[np.ndarray],
    k: int,
    q: int,
    rng: np.random.Generator,
    previous: SubActivityMixtures | None = None,
    with_background: bool = False,
    max_iters: int = 50,
) -> SubActivityMixtures:
    """Fit one mixture per label on its currently assigned score vectors.

    Labels with no assigned frames keep their previous mixture, or fall back
    to a unit-variance mixture at the global score mean if there is none.
    """
    all_scores = np.concatenate(score_list, axis=0)
    all_z = np.concatenate(z_list)
    global_mean = all_scores.mean(axis=0)
    per_label = []
    for label in range(1, k + 1):
        pts = all_scores[all_z == label]
        if pts.shape[0] > 0:
            per_label.append(fit_mixture(pts, q, rng, max_iters=max_iters))
        elif previous is not None:
            per_label.append(previous.per_label[label - 1])
        else:
            per_label.append(fallback_mixture(global_mean, q))
    background = None
    if with_background:
        pts = all_scores[all_z == 0]
        if pts.shape[0] > 0:
            background = fit_mixture(pts, q, rng, max_iters=max_iters)
        elif previous is not None and previous.background is not None:
            background = previous.background
        else:
            background = fallback_mixture(global_mean, q)
    return SubActivityMixtures(per_label=per_label, background=background)


def build_loglik_cache(
    score_list: list[np.ndarray], mixtures: SubActivityMixtures
) -> list[np.ndarray]:
    """Per-video (J x K) or (J x K+1) log-likelihood matrices.

    Column k-1 holds log P(f | label k); the extra last column holds the
    background log-likelihood when a background mixture is present.
    """
    if any(m is None for m in mixtures.per_label):
        raise StateError("missing mixture for a sub-activity label")
    caches = []
    for f in score_list:
        cols = [_logsumexp(_log_densities(m, f), axis=1) for m in mixtures.per_label]
        if mixtures.background is not None:
            cols.append(_logsumexp(_log_densities(mixtures.background, f), axis=1))
        caches.append(np.column_stack(cols))
    return caches


def video_log_likelihood(cache: np.ndarray, z: np.ndarray) -> float:
    """Sum of per-frame log-likelihood entries selected by the labels z.

    z uses 0 for background (valid only if the cache carries a background
    column) and 1..K for sub-activities.
    """
    z = np.asarray(z, dtype=int)
    if z.shape[0] != cache.shape[0]:
        raise InputError("label sequence length does not match cache")
    n_cols = cache.shape[1]
    if np.any(z < 0) or np.any(z > n_cols):
        raise InputError("label out of range for this cache")
    has_background = z == 0
    if np.any(has_background):
        k = n_cols - 1
        if np.any(z > k):
            raise InputError("label out of range for this cache")
        cols = np.where(has_background, k, z - 1)
    else:
        cols = z - 1
    return float(cache[np.arange(z.size), cols].sum())
