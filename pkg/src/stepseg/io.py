"""File formats, synthetic corpus generation, and result emission.

Feature files are `<id>.feat.csv` (one frame per row, comma-separated
decimals, no header), labels are `<id>.labels.csv` (one non-negative
integer per line, 0 = background).  Ids sorted lexicographically define the
video order.  Segmentations are written as `<id>.seg.csv` with `frame,label`
rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding import FeatureCorpus
from .errors import InputError
from .inference import InferenceResult, construct_z
from .mallows import permutation_from_inversions, sample_inversion_count

FEAT_SUFFIX = ".feat.csv"
LABEL_SUFFIX = ".labels.csv"
SEG_SUFFIX = ".seg.csv"


@dataclass
class GeneratorConfig:
    k: int
    q: int
    videos: int
    mean_frames: int
    dim: int
    rho: np.ndarray
    background_rate: float
    separation: float
    seed: int = 0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        if min(self.k, self.q, self.videos, self.mean_frames, self.dim) < 1:
            raise InputError("k, q, videos, mean_frames and dim must be >= 1")
        if not 0.0 <= self.background_rate < 1.0:
            raise InputError("background rate must lie in [0, 1)")
        if self.separation <= 0:
            raise InputError("separation must be positive")
        if self.rho.size != self.k - 1 or np.any(self.rho <= 0):
            raise InputError(f"rho must hold {self.k - 1} positive values")
        needed = self.k + (1 if self.background_rate > 0 else 0)
        if self.dim < needed:
            raise InputError(f"dim must be >= {needed} to separate the class means")


def read_features(directory) -> FeatureCorpus:
    directory = Path(directory)
    files = sorted(directory.glob(f"*{FEAT_SUFFIX}"))
    if not files:
        raise InputError(f"no {FEAT_SUFFIX} files in {directory}")
    ids, videos = [], []
    dim = None
    dim_file = None
    for path in files:
        rows = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                cells = line.split(",")
                try:
                    row = [float(c) for c in cells]
                except ValueError:
                    raise InputError(f"{path}:{lineno}: non-numeric cell") from None
                if rows and len(row) != len(rows[0]):
                    raise InputError(
                        f"{path}:{lineno}: row has {len(row)} columns, expected {len(rows[0])}"
                    )
                rows.append(row)
        if not rows:
            raise InputError(f"{path}: empty feature file")
        if dim is None:
            dim, dim_file = len(rows[0]), path
        elif len(rows[0]) != dim:
            raise InputError(
                f"inconsistent feature dimension: {dim_file} has {dim}, "
                f"{path} has {len(rows[0])}"
            )
        ids.append(path.name[: -len(FEAT_SUFFIX)])
        videos.append(np.asarray(rows, dtype=float))
    return FeatureCorpus(ids=ids, videos=videos)


def _read_label_file(path: Path) -> np.ndarray:
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if path.name.endswith(SEG_SUFFIX):
                line = line.split(",")[-1]
            try:
                value = int(line)
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-integer label") from None
            if value < 0:
                raise InputError(f"{path}:{lineno}: negative label")
            labels.append(value)
    if not labels:
        raise InputError(f"{path}: empty label file")
    return np.asarray(labels, dtype=int)


def read_labels(directory) -> dict[str, np.ndarray]:
    """Label sequences by video id; accepts both label and segmentation
    files (segmentation rows keep only the label column)."""
    directory = Path(directory)
    out: dict[str, np.ndarray] = {}
    for path in sorted(directory.glob(f"*{LABEL_SUFFIX}")):
        out[path.name[: -len(LABEL_SUFFIX)]] = _read_label_file(path)
    for path in sorted(directory.glob(f"*{SEG_SUFFIX}")):
        vid = path.name[: -len(SEG_SUFFIX)]
        if vid not in out:
            out[vid] = _read_label_file(path)
    if not out:
        raise InputError(f"no label files in {directory}")
    return out


def match_labels(corpus: FeatureCorpus, labels: dict[str, np.ndarray]):
    """Per-video ground truth in corpus order, or None if any video lacks
    labels (metrics are then skipped corpus-wide)."""
    if any(vid not in labels for vid in corpus.ids):
        return None
    out = []
    for vid, video in zip(corpus.ids, corpus.videos):
        seq = labels[vid]
        if seq.size != video.shape[0]:
            raise InputError(
                f"{vid}: {seq.size} labels but {video.shape[0]} feature rows"
            )
        out.append(seq)
    return out


def generate_synthetic(gen: GeneratorConfig, rng: np.random.Generator):
    """Forward-sample a corpus from the generative model.

    Per video: frame count ~ Poisson(mean), background flags i.i.d.
    Bernoulli, bag counts ~ Multinomial(theta) over foreground frames,
    ordering via per-position inversion draws, raw features from unit-norm
    Gaussians around well-separated per-label means.  Returns the corpus,
    the ground-truth label sequences, and the true parameters.
    """
    k = gen.k
    theta = rng.dirichlet(np.ones(k))
    # scaled basis vectors: any two label means sit `separation` apart
    scale = gen.separation / np.sqrt(2.0)
    means = np.zeros((k + 1, gen.dim))
    for lab in range(1, k + 1):
        means[lab, lab - 1] = scale
    if gen.background_rate > 0:
        means[0, k] = scale
    ids, videos, label_seqs, video_truth = [], [], [], []
    for m in range(gen.videos):
        frames = max(1, int(rng.poisson(gen.mean_frames)))
        b = rng.random(frames) < gen.background_rate
        t = int((~b).sum())
        a = rng.multinomial(t, theta)
        v = np.asarray(
            [sample_inversion_count(gen.rho[pos], k - pos, rng) for pos in range(k - 1)],
            dtype=int,
        )
        pi = permutation_from_inversions(v)
        z = construct_z(a, pi, b)
        x = means[z] + rng.standard_normal((frames, gen.dim))
        vid = f"v{m:04d}"
        ids.append(vid)
        videos.append(x)
        label_seqs.append(z)
        video_truth.append(
            {"id": vid, "a": a.tolist(), "v": v.tolist(), "pi": pi.tolist()}
        )
    truth = {
        "theta": theta.tolist(),
        "rho": gen.rho.tolist(),
        "background_rate": gen.background_rate,
        "separation": gen.separation,
        "videos": video_truth,
    }
    return FeatureCorpus(ids=ids, videos=videos), label_seqs, truth


def write_corpus(corpus: FeatureCorpus, labels, out_dir, truth=None):
    """Feature and label files round-trip exactly (shortest float repr)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for vid, video, seq in zip(corpus.ids, corpus.videos, labels):
        with open(out_dir / f"{vid}{FEAT_SUFFIX}", "w") as fh:
            for row in video:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")
        with open(out_dir / f"{vid}{LABEL_SUFFIX}", "w") as fh:
            fh.writelines(f"{int(lab)}\n" for lab in seq)
    if truth is not None:
        with open(out_dir / "truth.json", "w") as fh:
            json.dump(truth, fh, indent=2, sort_keys=True)
            fh.write("\n")


def segments_from_labels(z) -> list[tuple[int, int, int]]:
    """Maximal constant runs as (start, end_exclusive, label)."""
    z = np.asarray(z, dtype=int)
    boundaries = np.flatnonzero(np.diff(z) != 0) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [z.size]])
    return [(int(s), int(e), int(z[s])) for s, e in zip(starts, ends)]


def write_outputs(result: InferenceResult, ids, summary: dict, out_dir, rng):
    """Segmentations, the run summary, and one random frame per predicted
    foreground segment (for external single-frame scoring protocols)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for vid, state in zip(ids, result.states):
        with open(out_dir / f"{vid}{SEG_SUFFIX}", "w") as fh:
            fh.writelines(f"{j},{int(lab)}\n" for j, lab in enumerate(state.z))
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "segments_sample.csv", "w") as fh:
        fh.write("video,label,frame\n")
        for vid, state in zip(ids, result.states):
            for start, end, label in segments_from_labels(state.z):
                if label == 0:
                    continue
                frame = int(rng.integers(start, end))
                fh.write(f"{vid},{label},{frame}\n")


def build_summary(result: InferenceResult, ids, config, metrics=None, metrics_trace=None):
    summary = {
        "seed": config.seed,
        "config": {
            "k": config.k,
            "q": config.q,
            "embed_dim": config.embed_dim,
            "margin": config.margin,
            "l2": config.l2,
            "learning_rate": config.learning_rate,
            "epochs": config.epochs,
            "outer_iterations": config.outer_iterations,
            "theta0": config.theta0,
            "rho0": config.rho0,
            "nu0": config.nu0,
            "alpha": config.alpha,
            "beta": config.beta,
            "background_enabled": config.background_enabled,
        },
        "log_joint": result.diagnostics.log_joint,
        "rho_trace": result.diagnostics.rho_trace,
        "metrics": metrics,
        "metrics_trace": metrics_trace,
        "videos": [
            {"id": vid, "segments": [list(s) for s in segments_from_labels(st.z)]}
            for vid, st in zip(ids, result.states)
        ],
    }
    return summary
