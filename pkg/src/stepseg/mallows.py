"""Generalized Mallows model over permutations of K items.

Permutations are sequences of the integers 1..K.  A permutation is encoded
as an inversion vector v of length K-1 where v[k-1] counts the elements of
{k+1..K} placed before k; the canonical ordering is the identity, so the
distance to it is sum_k rho_k * v_k.  Position k has n = K-k+1 admissible
inversion counts {0..K-k}.

All densities are computed in log space.  Sampling functions take an
explicit numpy Generator and are pure given its state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

# psi overflows / the density degenerates far outside this range
RHO_MIN = 1e-4
RHO_MAX = 50.0


@dataclass
class MallowsParams:
    """Per-position dispersions rho (length K-1) with their common prior."""

    rho: np.ndarray
    rho0: float = 1.0
    nu0: float = 0.1

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        if np.any(self.rho <= 0):
            raise InputError("all dispersions must be positive")
        if self.rho0 <= 0 or self.nu0 <= 0:
            raise InputError("rho0 and nu0 must be positive")

    @property
    def k(self) -> int:
        return self.rho.size + 1


def _check_permutation(perm) -> np.ndarray:
    perm = np.asarray(perm, dtype=int)
    k = perm.size
    if k < 1 or sorted(perm.tolist()) != list(range(1, k + 1)):
        raise InputError(f"not a permutation of 1..{k}: {perm.tolist()}")
    return perm


def inversions_from_permutation(perm) -> np.ndarray:
    """Inversion vector of a permutation of 1..K (length K-1).

    v[k-1] is the number of elements greater than k that appear before k.
    """
    perm = _check_permutation(perm)
    k = perm.size
    pos = np.empty(k + 1, dtype=int)
    pos[perm] = np.arange(k)
    v = np.empty(max(k - 1, 0), dtype=int)
    for item in range(1, k):
        v[item - 1] = int(np.sum(pos[item + 1:] < pos[item]))
    return v


def permutation_from_inversions(v) -> np.ndarray:
    """Inverse codec: rebuild the permutation whose inversion vector is v.

    Starting from [K], item k (K-1 down to 1) is inserted so that exactly
    v[k-1] already-placed elements precede it.
    """
    v = np.asarray(v, dtype=int)
    k = v.size + 1
    for i, vi in enumerate(v):
        if not 0 <= vi <= k - (i + 1):
            raise InputError(f"inversion count v[{i}]={vi} outside 0..{k - (i + 1)}")
    order = [k]
    for item in range(k - 1, 0, -1):
        order.insert(int(v[item - 1]), item)
    return np.asarray(order, dtype=int)


def log_psi(rho_k: float, n: int) -> float:
    """log of the normalizer psi(rho) = (1 - e^{-n rho}) / (1 - e^{-rho}).

    Equals log sum_{c=0}^{n-1} e^{-rho c}; computed via expm1 so small rho
    stays accurate.
    """
    if rho_k <= 0:
        raise InputError("rho must be positive")
    if n < 1:
        raise InputError("n must be >= 1")
    if n == 1:
        return 0.0
    return math.log(-math.expm1(-n * rho_k)) - math.log(-math.expm1(-rho_k))


def gmm_log_prob(v, params: MallowsParams) -> float:
    """Log probability of an inversion vector: sum_k (-rho_k v_k - log psi_k)."""
    v = np.asarray(v, dtype=int)
    rho = params.rho
    if v.size != rho.size:
        raise InputError(f"length mismatch: v has {v.size}, rho has {rho.size}")
    k = params.k
    total = 0.0
    for i in range(rho.size):
        total += -rho[i] * v[i] - log_psi(rho[i], k - i)
    return total


def prior_inversion_mean(rho0: float, n: int) -> float:
    """Expected inversion count at a position with n admissible values.

    Closed form of sum_c c e^{-rho0 c} / psi over c in 0..n-1:
    1/(e^{rho0}-1) - n/(e^{n rho0}-1).
    """
    if rho0 <= 0:
        raise InputError("rho0 must be positive")
    if n < 2:
        raise InputError("n must be >= 2")
    return 1.0 / math.expm1(rho0) - n / math.expm1(n * rho0)


def log_prior_rho(rho_k: float, v_k0: float, nu0: float, n: int) -> float:
    """Unnormalized log density of the conjugate dispersion prior/posterior.

    Exponent -nu0 * (rho v_k0 + log psi(rho, n)): nu0 pseudo-observations
    averaging v_k0 inversions each.  Maximized where the expected inversion
    count under rho equals v_k0.
    """
    if rho_k <= 0 or nu0 < 0:
        raise InputError("rho must be positive and nu0 non-negative")
    return -nu0 * (rho_k * v_k0 + log_psi(rho_k, n))


def sample_inversion_count(rho_k: float, n: int, rng: np.random.Generator) -> int:
    """Draw c in {0..n-1} with P(c) proportional to e^{-rho_k c}."""
    if n < 1:
        raise InputError("n must be >= 1")
    if n == 1:
        return 0
    w = np.exp(-rho_k * np.arange(n))
    return int(rng.choice(n, p=w / w.sum()))


def posterior_rho_params(sum_v_k: float, count: int, v_k0: float, nu0: float):
    """Conjugate update: combine observed inversion counts with the prior.

    Returns (v_post, nu_post) to feed back into log_prior_rho.
    """
    if count < 0 or sum_v_k < 0:
        raise InputError("counts must be non-negative")
    nu_post = count + nu0
    v_post = (sum_v_k + nu0 * v_k0) / nu_post
    return v_post, nu_post


def slice_sample_rho(
    current: float,
    v_post: float,
    nu_post: float,
    n: int,
    rng: np.random.Generator,
    width: float = 1.0,
    max_steps: int = 50,
) -> float:
    """One univariate slice-sampling update of a dispersion parameter.

    Step-out with initial interval `width` (at most `max_steps` expansions
    per side) followed by shrinkage, on the domain [RHO_MIN, RHO_MAX].
    """
    if current <= 0:
        raise InputError("current rho must be positive")
    x0 = min(max(current, RHO_MIN), RHO_MAX)

    def logf(x):
        return log_prior_rho(x, v_post, nu_post, n)

    log_y = logf(x0) + math.log(rng.random())

    r = rng.random()
    left = x0 - r * width
    right = x0 + (1.0 - r) * width
    steps = 0
    while left > RHO_MIN and logf(max(left, RHO_MIN)) > log_y and steps < max_steps:
        left -= width
        steps += 1
    steps = 0
    while right < RHO_MAX and logf(min(right, RHO_MAX)) > log_y and steps < max_steps:
        right += width
        steps += 1
    left = max(left, RHO_MIN)
    right = min(right, RHO_MAX)

    while True:
        x1 = left + rng.random() * (right - left)
        if logf(x1) > log_y:
            return x1
        if x1 < x0:
            left = x1
        elif x1 > x0:
            right = x1
        else:
            return x0
