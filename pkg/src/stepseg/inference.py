"""Corpus latent state and the alternating discriminative/generative fit.

Latent variables per video: a bag of per-frame sub-activity units (`slots`,
realizing the count vector `a`), an ordering `pi` encoded by its inversion
vector `v`, and background flags `b`.  The label sequence `z` is the
deterministic reordering of the bag: background frames get 0, foreground
frames get pi(1) for the first a[pi(1)] slots, then pi(2), and so on.

Sampling a frame moves that frame's bag unit (not its z label: moving one
unit shifts every later segment boundary), which is what makes the collapsed
conditionals exact.  Mixture parameters and the embedding are refreshed from
z between Gibbs sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embedding import (
    EmbeddingWeights,
    FeatureCorpus,
    init_weights,
    score_matrix,
    standardize,
    train_embedding,
)
from .errors import InputError, StateError
from .mallows import (
    MallowsParams,
    gmm_log_prob,
    inversions_from_permutation,
    log_psi,
    log_prior_rho,
    permutation_from_inversions,
    posterior_rho_params,
    prior_inversion_mean,
    slice_sample_rho,
)
from .mixtures import (
    SubActivityMixtures,
    build_loglik_cache,
    fit_label_mixtures,
    video_log_likelihood,
)


@dataclass
class RunConfig:
    k: int
    q: int = 3
    embed_dim: int = 200
    margin: float = 1.0
    l2: float = 1e-4
    learning_rate: float = 0.01
    epochs: int = 12
    outer_iterations: int = 5
    theta0: float = 0.1
    rho0: float = 1.0
    nu0: float = 0.1
    alpha: float = 0.2
    beta: float = 0.2
    background_enabled: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.q < 1:
            raise InputError("k and q must be >= 1")
        for name in ("margin", "learning_rate", "theta0", "rho0", "nu0", "alpha", "beta"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be positive")
        if self.l2 < 0:
            raise InputError("l2 must be non-negative")
        if self.epochs < 1 or self.outer_iterations < 1 or self.embed_dim < 1:
            raise InputError("epochs, outer_iterations and embed_dim must be >= 1")


@dataclass
class VideoState:
    a: np.ndarray  # (K,) label counts of the bag
    pi: np.ndarray  # permutation of 1..K
    v: np.ndarray  # (K-1,) inversion vector of pi
    b: np.ndarray  # (J,) True = background
    z: np.ndarray  # (J,) labels, 0 = background
    slots: np.ndarray  # (J,) per-frame bag unit, 0 at background frames


@dataclass
class CorpusCounts:
    n_k: np.ndarray  # (K,) corpus-wide per-label frame counts
    n_f: int
    n_b: int


def construct_z(a, pi, b) -> np.ndarray:
    """Rebuild the label sequence from bag counts, ordering and flags."""
    a = np.asarray(a, dtype=int)
    pi = np.asarray(pi, dtype=int)
    b = np.asarray(b, dtype=bool)
    fg = ~b
    if int(a.sum()) != int(fg.sum()):
        raise StateError(
            f"bag holds {int(a.sum())} units but {int(fg.sum())} frames are foreground"
        )
    z = np.zeros(b.size, dtype=int)
    z[fg] = np.repeat(pi, a[pi - 1])
    return z


def init_state(frame_count: int, config: RunConfig) -> VideoState:
    """Deterministic starting point: even label split, identity ordering,
    and (with background on) every other frame background, starting with
    the first."""
    if frame_count < 1:
        raise InputError("videos must have at least one frame")
    k = config.k
    if config.background_enabled:
        b = np.arange(frame_count) % 2 == 0
    else:
        b = np.zeros(frame_count, dtype=bool)
    t = int((~b).sum())
    base, rem = divmod(t, k)
    a = np.full(k, base, dtype=int)
    a[:rem] += 1
    pi = np.arange(1, k + 1)
    v = np.zeros(max(k - 1, 0), dtype=int)
    z = construct_z(a, pi, b)
    return VideoState(a=a, pi=pi, v=v, b=b, z=z, slots=z.copy())


def counts_from_states(states: list[VideoState], k: int) -> CorpusCounts:
    n_k = np.zeros(k, dtype=int)
    n_b = 0
    for st in states:
        n_k += st.a
        n_b += int(st.b.sum())
    return CorpusCounts(n_k=n_k, n_f=int(n_k.sum()), n_b=n_b)


def verify_consistency(states: list[VideoState], counts: CorpusCounts, config: RunConfig):
    """Raise StateError unless every redundant representation agrees."""
    for st in states:
        fg = ~st.b
        if int(st.a.sum()) != int(fg.sum()):
            raise StateError("bag size disagrees with foreground count")
        if not np.array_equal(st.v, inversions_from_permutation(st.pi)):
            raise StateError("inversion vector out of sync with ordering")
        if not np.array_equal(st.z, construct_z(st.a, st.pi, st.b)):
            raise StateError("z out of sync with (a, pi, b)")
        if np.any(st.slots[st.b] != 0) or np.any(st.slots[fg] == 0):
            raise StateError("slot labels out of sync with background flags")
        if not np.array_equal(
            np.bincount(st.slots[fg], minlength=config.k + 1)[1:], st.a
        ):
            raise StateError("slot labels out of sync with bag counts")
    recomputed = counts_from_states(states, config.k)
    if (
        not np.array_equal(recomputed.n_k, counts.n_k)
        or recomputed.n_f != counts.n_f
        or recomputed.n_b != counts.n_b
    ):
        raise StateError("corpus counts out of sync with video states")


# --- candidate likelihood machinery -------------------------------------
#
# Candidate evaluation needs the full-video log-likelihood under a candidate
# z.  With per-frame log-likelihoods cached, each segment of the candidate z
# is a contiguous run of one label over the foreground frames, so prefix
# sums over the foreground rows evaluate a candidate in O(K) instead of
# O(J).


def _fg_prefix(cache: np.ndarray, fg_idx: np.ndarray, k: int) -> np.ndarray:
    p = np.zeros((fg_idx.size + 1, k))
    np.cumsum(cache[fg_idx, :k], axis=0, out=p[1:])
    return p


def _seg_loglik(prefix: np.ndarray, counts: np.ndarray, pi: np.ndarray) -> float:
    total = 0.0
    pos = 0
    for lab in pi:
        end = pos + counts[lab - 1]
        total += prefix[end, lab - 1] - prefix[pos, lab - 1]
        pos = end
    return float(total)


def _seg_loglik_insert(prefix, counts, pi, t_j, row_j) -> float:
    """Segment sum when frame j (cache row `row_j`) joins the foreground at
    rank t_j of a sequence whose other rows back `prefix`."""
    total = 0.0
    pos = 0
    for lab in pi:
        end = pos + counts[lab - 1]
        lo = pos - (pos > t_j)
        hi = end - (end > t_j)
        total += prefix[hi, lab - 1] - prefix[lo, lab - 1]
        if pos <= t_j < end:
            total += row_j[lab - 1]
        pos = end
    return float(total)


def _normalize_logweights(logw) -> np.ndarray:
    logw = np.asarray(logw, dtype=float)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def _draw(probs: np.ndarray, rng: np.random.Generator) -> int:
    r = rng.random()
    acc = 0.0
    for idx, p in enumerate(probs):
        acc += p
        if r < acc:
            return idx
    return len(probs) - 1


def frame_conditional_standard(
    frame: int,
    state: VideoState,
    counts: CorpusCounts,
    cache: np.ndarray,
    config: RunConfig,
    prefix: np.ndarray | None = None,
) -> np.ndarray:
    """Categorical distribution over the frame's bag label, Dirichlet prior
    ratio times full-video likelihood, with the frame's own unit excluded
    from the counts."""
    if state.b[frame]:
        raise StateError("standard sampler hit a background frame")
    k = config.k
    if prefix is None:
        prefix = _fg_prefix(cache, np.flatnonzero(~state.b), k)
    k_old = int(state.slots[frame])
    a_minus = state.a.copy()
    a_minus[k_old - 1] -= 1
    nk_minus = counts.n_k.astype(float).copy()
    nk_minus[k_old - 1] -= 1
    if a_minus[k_old - 1] < 0 or nk_minus[k_old - 1] < 0:
        raise StateError("count exclusion went negative")
    log_denom = math.log(nk_minus.sum() + k * config.theta0)
    logw = np.empty(k)
    for cand in range(k):
        a_minus[cand] += 1
        logw[cand] = (
            math.log(nk_minus[cand] + config.theta0)
            - log_denom
            + _seg_loglik(prefix, a_minus, state.pi)
        )
        a_minus[cand] -= 1
    return _normalize_logweights(logw)


def sample_frame_standard(frame, state, counts, cache, config, rng, prefix=None):
    probs = frame_conditional_standard(frame, state, counts, cache, config, prefix)
    k_new = _draw(probs, rng) + 1
    k_old = int(state.slots[frame])
    if k_new != k_old:
        state.a[k_old - 1] -= 1
        counts.n_k[k_old - 1] -= 1
        state.slots[frame] = k_new
        state.a[k_new - 1] += 1
        counts.n_k[k_new - 1] += 1
    state.z = construct_z(state.a, state.pi, state.b)


def frame_conditional_joint(
    frame: int,
    state: VideoState,
    counts: CorpusCounts,
    cache: np.ndarray,
    config: RunConfig,
) -> np.ndarray:
    """Joint (label, background) conditional: K foreground candidates
    followed by the background candidate, Beta-Bernoulli times Dirichlet
    prior ratios times the full-video likelihood."""
    k = config.k
    was_bg = bool(state.b[frame])
    a_minus = state.a.copy()
    nk_minus = counts.n_k.astype(float).copy()
    nf_minus = counts.n_f
    nb_minus = counts.n_b
    if was_bg:
        nb_minus -= 1
    else:
        k_old = int(state.slots[frame])
        a_minus[k_old - 1] -= 1
        nk_minus[k_old - 1] -= 1
        nf_minus -= 1
        if a_minus[k_old - 1] < 0:
            raise StateError("count exclusion went negative")

    fg_idx = np.flatnonzero(~state.b)
    others = fg_idx[fg_idx != frame]
    t_j = int(np.searchsorted(others, frame))
    prefix = _fg_prefix(cache, others, k)
    bg_idx = np.flatnonzero(state.b)
    bg_others = float(cache[bg_idx[bg_idx != frame], k].sum())

    log_bern_denom = math.log(nf_minus + nb_minus + config.alpha + config.beta)
    log_dir_denom = math.log(nk_minus.sum() + k * config.theta0)
    row_j = cache[frame]
    logw = np.empty(k + 1)
    for cand in range(k):
        a_minus[cand] += 1
        logw[cand] = (
            math.log(nf_minus + config.beta)
            - log_bern_denom
            + math.log(nk_minus[cand] + config.theta0)
            - log_dir_denom
            + _seg_loglik_insert(prefix, a_minus, state.pi, t_j, row_j)
            + bg_others
        )
        a_minus[cand] -= 1
    logw[k] = (
        math.log(nb_minus + config.alpha)
        - log_bern_denom
        + _seg_loglik(prefix, a_minus, state.pi)
        + bg_others
        + row_j[k]
    )
    return _normalize_logweights(logw)


def sample_frame_joint(frame, state, counts, cache, config, rng):
    probs = frame_conditional_joint(frame, state, counts, cache, config)
    choice = _draw(probs, rng)
    # remove the frame's current contribution, then add the drawn one
    if state.b[frame]:
        counts.n_b -= 1
    else:
        k_old = int(state.slots[frame])
        state.a[k_old - 1] -= 1
        counts.n_k[k_old - 1] -= 1
        counts.n_f -= 1
    if choice == config.k:
        state.b[frame] = True
        state.slots[frame] = 0
        counts.n_b += 1
    else:
        state.b[frame] = False
        state.slots[frame] = choice + 1
        state.a[choice] += 1
        counts.n_k[choice] += 1
        counts.n_f += 1
    state.z = construct_z(state.a, state.pi, state.b)


def inversion_conditional(
    position: int,
    state: VideoState,
    cache: np.ndarray,
    rho: np.ndarray,
    prefix: np.ndarray | None = None,
) -> np.ndarray:
    """Distribution over inversion counts c in {0..K-position} at one
    position: dispersion weight e^{-rho c} times the likelihood of the
    reordered z."""
    k = state.a.size
    if not 1 <= position <= k - 1:
        raise InputError(f"inversion position must lie in 1..{k - 1}")
    if prefix is None:
        prefix = _fg_prefix(cache, np.flatnonzero(~state.b), k)
    bg_idx = np.flatnonzero(state.b)
    bg_total = float(cache[bg_idx, k].sum()) if (bg_idx.size and cache.shape[1] > k) else 0.0
    n = k - position + 1
    rho_k = float(rho[position - 1])
    lp = log_psi(rho_k, n)
    v_cand = state.v.copy()
    logw = np.empty(n)
    for c in range(n):
        v_cand[position - 1] = c
        pi_c = permutation_from_inversions(v_cand)
        logw[c] = -rho_k * c - lp + _seg_loglik(prefix, state.a, pi_c) + bg_total
    return _normalize_logweights(logw)


def sample_inversion_position(position, state, cache, rho, rng, prefix=None):
    probs = inversion_conditional(position, state, cache, rho, prefix)
    c = _draw(probs, rng)
    if c != int(state.v[position - 1]):
        state.v[position - 1] = c
        state.pi = permutation_from_inversions(state.v)
        state.z = construct_z(state.a, state.pi, state.b)


def update_rho(
    states: list[VideoState], params: MallowsParams, rng: np.random.Generator
) -> MallowsParams:
    """Slice-sample each dispersion from its conjugate posterior given the
    videos' current inversion vectors."""
    if not states:
        raise InputError("need at least one video")
    k = params.k
    m = len(states)
    new_rho = params.rho.copy()
    for pos in range(1, k):
        n = k - pos + 1
        sum_v = sum(int(st.v[pos - 1]) for st in states)
        v0 = prior_inversion_mean(params.rho0, n)
        v_post, nu_post = posterior_rho_params(sum_v, m, v0, params.nu0)
        new_rho[pos - 1] = slice_sample_rho(
            float(params.rho[pos - 1]), v_post, nu_post, n, rng
        )
    return MallowsParams(rho=new_rho, rho0=params.rho0, nu0=params.nu0)


def log_joint(states, counts, caches, params: MallowsParams, config: RunConfig) -> float:
    """Collapsed log-joint of the current state; convergence diagnostic.

    Sums the Dirichlet-multinomial term over bag counts, the Beta-Bernoulli
    term over background flags (when enabled), the ordering model and its
    dispersion prior (unnormalized), and the cached frame likelihoods.
    """
    verify_consistency(states, counts, config)
    k, theta0 = config.k, config.theta0
    lg = math.lgamma
    total = lg(k * theta0) - lg(k * theta0 + counts.n_f)
    for lab in range(k):
        total += lg(counts.n_k[lab] + theta0) - lg(theta0)
    for st in states:
        t_i = int(st.a.sum())
        total += lg(t_i + 1) - sum(lg(int(c) + 1) for c in st.a)
    if config.background_enabled:
        a, b = config.alpha, config.beta
        total += lg(a + b) - lg(a) - lg(b)
        total += lg(counts.n_b + a) + lg(counts.n_f + b) - lg(counts.n_b + counts.n_f + a + b)
    for st in states:
        total += gmm_log_prob(st.v, params)
    for pos in range(1, k):
        n = k - pos + 1
        v0 = prior_inversion_mean(params.rho0, n)
        total += log_prior_rho(float(params.rho[pos - 1]), v0, params.nu0, n)
    for st, cache in zip(states, caches):
        total += video_log_likelihood(cache, st.z, background=config.background_enabled)
    return total


@dataclass
class Diagnostics:
    log_joint: list[float] = field(default_factory=list)
    rho_trace: list[list[float]] = field(default_factory=list)
    z_trace: list[list[np.ndarray]] = field(default_factory=list)


@dataclass
class InferenceResult:
    states: list[VideoState]
    params: MallowsParams
    weights: EmbeddingWeights
    mixtures: SubActivityMixtures
    diagnostics: Diagnostics


def gibbs_sweep(states, counts, caches, params, config, rng):
    """One pass: per video, resample every frame, then every inversion
    position, in fixed order (videos in input order, frames left to right,
    positions ascending)."""
    for state, cache in zip(states, caches):
        if config.background_enabled:
            for j in range(state.b.size):
                sample_frame_joint(j, state, counts, cache, config, rng)
            prefix = _fg_prefix(cache, np.flatnonzero(~state.b), config.k)
        else:
            prefix = _fg_prefix(cache, np.flatnonzero(~state.b), config.k)
            for j in range(state.b.size):
                sample_frame_standard(j, state, counts, cache, config, rng, prefix)
        for pos in range(1, config.k):
            sample_inversion_position(pos, state, cache, params.rho, rng, prefix)


def _training_set(corpus: FeatureCorpus, states: list[VideoState]):
    xs, labels = [], []
    for video, st in zip(corpus.videos, states):
        fg = ~st.b
        xs.append(video[fg])
        labels.append(st.z[fg])
    return np.concatenate(xs, axis=0), np.concatenate(labels)


def run_inference(
    corpus: FeatureCorpus, config: RunConfig, rng: np.random.Generator | None = None
) -> InferenceResult:
    """The full alternating fit.

    Per outer iteration: refresh the embedding from the current labels,
    refit the per-label mixtures, rebuild the likelihood caches, run one
    Gibbs sweep over all videos, resample the dispersions, and record
    diagnostics.  Deterministic given the seed.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    std_corpus = standardize(corpus)
    states = [init_state(j, config) for j in std_corpus.frame_counts]
    counts = counts_from_states(states, config.k)
    params = MallowsParams(
        rho=np.full(max(config.k - 1, 0), config.rho0),
        rho0=config.rho0,
        nu0=config.nu0,
    )
    weights: EmbeddingWeights | None = None
    mixtures: SubActivityMixtures | None = None
    diagnostics = Diagnostics()

    for _ in range(config.outer_iterations):
        xs, labels = _training_set(std_corpus, states)
        if xs.shape[0] > 0:
            weights = train_embedding(
                xs,
                labels,
                config.k,
                rng,
                embed_dim=config.embed_dim,
                margin=config.margin,
                l2=config.l2,
                learning_rate=config.learning_rate,
                epochs=config.epochs,
                init=weights,
            )
        elif weights is None:
            weights = init_weights(
                std_corpus.dim, config.k, config.embed_dim, config.margin, config.l2, rng
            )
        score_list = [score_matrix(weights, m) for m in std_corpus.videos]
        mixtures = fit_label_mixtures(
            score_list,
            [st.z for st in states],
            config.k,
            config.q,
            rng,
            previous=mixtures,
            with_background=config.background_enabled,
        )
        caches = build_loglik_cache(score_list, mixtures)
        gibbs_sweep(states, counts, caches, params, config, rng)
        params = update_rho(states, params, rng)
        diagnostics.log_joint.append(log_joint(states, counts, caches, params, config))
        diagnostics.rho_trace.append([float(r) for r in params.rho])
        diagnostics.z_trace.append([st.z.copy() for st in states])

    return InferenceResult(
        states=states,
        params=params,
        weights=weights,
        mixtures=mixtures,
        diagnostics=diagnostics,
    )
