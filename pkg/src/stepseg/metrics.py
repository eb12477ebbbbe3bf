"""Scoring of unsupervised segmentations against ground truth.

Predicted labels carry no semantics, so an optimal one-to-one mapping onto
ground-truth labels (background stays background) is found first; the three
frame-level scores are then computed under that mapping.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError


def hungarian(cost) -> np.ndarray:
    """Minimum-cost assignment of a square cost matrix.

    Rectangular input is padded with zeros.  Returns the column assigned to
    each row; ties break deterministically toward lower indices.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise InputError("cost must be a matrix")
    if not np.all(np.isfinite(cost)):
        raise InputError("cost matrix must be finite")
    n = max(cost.shape)
    if cost.shape != (n, n):
        padded = np.zeros((n, n))
        padded[: cost.shape[0], : cost.shape[1]] = cost
        cost = padded
    _, cols = linear_sum_assignment(cost)
    return cols


def _as_labels(seq) -> np.ndarray:
    arr = np.asarray(seq, dtype=int)
    if arr.ndim != 1:
        raise InputError("label sequences must be one-dimensional")
    if np.any(arr < 0):
        raise InputError("labels must be non-negative")
    return arr


def optimal_mapping(gt, pred) -> dict[int, int]:
    """Injective map from predicted to ground-truth labels maximizing frame
    overlap (Hungarian on the negated contingency counts).  Background (0)
    is fixed and excluded from the assignment."""
    gt = _as_labels(gt)
    pred = _as_labels(pred)
    if gt.shape != pred.shape:
        raise InputError("gt and pred lengths differ")
    pred_labels = np.unique(pred[pred > 0])
    gt_labels = np.unique(gt[gt > 0])
    if pred_labels.size == 0 or gt_labels.size == 0:
        return {}
    overlap = np.zeros((pred_labels.size, gt_labels.size))
    for i, p in enumerate(pred_labels):
        mask = pred == p
        for j, g in enumerate(gt_labels):
            overlap[i, j] = np.sum(mask & (gt == g))
    cols = hungarian(-overlap)
    mapping = {}
    for i, p in enumerate(pred_labels):
        j = cols[i]
        if j < gt_labels.size:
            mapping[int(p)] = int(gt_labels[j])
    return mapping


def apply_mapping(pred, mapping: dict[int, int]) -> np.ndarray:
    """Relabel predictions; background passes through, unmapped labels
    become -1 (they can never match)."""
    pred = _as_labels(pred)
    out = np.full(pred.shape, -1, dtype=int)
    out[pred == 0] = 0
    for p, g in mapping.items():
        out[pred == p] = g
    return out


def _check_pair(gt, pred):
    gt = _as_labels(gt)
    pred = _as_labels(pred)
    if gt.shape != pred.shape:
        raise InputError("gt and pred lengths differ")
    return gt, pred


def mof(gt, pred, mapping: dict[int, int]) -> float:
    """Fraction of frames whose mapped prediction matches ground truth."""
    gt, pred = _check_pair(gt, pred)
    return float(np.mean(apply_mapping(pred, mapping) == gt))


def jaccard_iod(gt, pred, mapping: dict[int, int]) -> float:
    """Mean over ground-truth classes of intersection over detections."""
    gt, pred = _check_pair(gt, pred)
    mapped = apply_mapping(pred, mapping)
    terms = []
    for c in np.unique(gt):
        inter = np.sum((gt == c) & (mapped == c))
        det = np.sum(mapped == c)
        terms.append(inter / det if det > 0 else 0.0)
    return float(np.mean(terms))


def f1_frames(gt, pred, mapping: dict[int, int]) -> float:
    """Macro F1 over ground-truth classes of the mapped frame labels."""
    gt, pred = _check_pair(gt, pred)
    mapped = apply_mapping(pred, mapping)
    terms = []
    for c in np.unique(gt):
        inter = np.sum((gt == c) & (mapped == c))
        det = np.sum(mapped == c)
        support = np.sum(gt == c)
        prec = inter / det if det > 0 else 0.0
        rec = inter / support
        terms.append(2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0)
    return float(np.mean(terms))


def evaluate_segmentation(gt_seqs, pred_seqs) -> dict[str, float]:
    """Corpus-level scores: one mapping over the concatenated sequences."""
    if len(gt_seqs) != len(pred_seqs):
        raise InputError("gt and pred corpora differ in size")
    for g, p in zip(gt_seqs, pred_seqs):
        if len(g) != len(p):
            raise InputError("gt and pred lengths differ for a video")
    gt = np.concatenate([_as_labels(g) for g in gt_seqs])
    pred = np.concatenate([_as_labels(p) for p in pred_seqs])
    mapping = optimal_mapping(gt, pred)
    return {
        "mof": mof(gt, pred, mapping),
        "jaccard": jaccard_iod(gt, pred, mapping),
        "f1": f1_frames(gt, pred, mapping),
    }
