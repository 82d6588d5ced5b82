"""Teacher-distribution diagnostics.

Tools for inspecting what a frozen teacher actually predicts: per-class
average soft predictions, the strict probability enhancement produced
by renormalizing away the top class, a knee-point heuristic for picking
the top-k cutoff, and teacher/student discrepancy matrices.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .numeric import check_temperature, softmax

__all__ = [
    "ClassPredictionProfile",
    "EnhancementResult",
    "KneePoint",
    "DiscrepancyMatrix",
    "class_profiles",
    "enhancement_check",
    "knee_point_k",
    "multimodality_ratio",
    "discrepancy_matrix",
    "profiles_to_csv",
    "profiles_to_json",
    "discrepancy_to_csv",
]


def _check_batch(logits, labels=None):
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] < 2:
        raise ValueError(f"expected a (n_samples, n_classes) logit matrix, got {z.shape}")
    if not np.isfinite(z).all():
        raise ValueError("logits contain non-finite entries")
    if labels is None:
        return z
    y = np.asarray(labels, dtype=np.int64).ravel()
    if y.size != z.shape[0]:
        raise ValueError(f"{y.size} labels for {z.shape[0]} samples")
    if y.size and (y.min() < 0 or y.max() >= z.shape[1]):
        raise ValueError("labels out of range")
    return z, y


@dataclass(frozen=True)
class ClassPredictionProfile:
    """Average softened teacher prediction over one class's samples."""

    class_id: int
    mean_probs: np.ndarray
    top_indices: np.ndarray  # class indices sorted by descending mean prob

    @property
    def sorted_curve(self) -> np.ndarray:
        return self.mean_probs[self.top_indices]


def class_profiles(logits, labels, temperature: float = 4.0) -> list:
    """Per-class mean of softmax(teacher logits / T).

    Classes with no samples are omitted with a warning.
    """
    z, y = _check_batch(logits, labels)
    t = check_temperature(temperature)
    n_classes = z.shape[1]
    probs = np.stack([softmax(row, t) for row in z])
    profiles = []
    missing = []
    for cls in range(n_classes):
        mask = y == cls
        if not mask.any():
            missing.append(cls)
            continue
        mean = probs[mask].mean(axis=0)
        order = np.argsort(-mean, kind="stable")
        profiles.append(ClassPredictionProfile(cls, mean, order))
    if missing:
        warnings.warn(f"no samples for classes {missing}; profiles omitted")
    return profiles


@dataclass(frozen=True)
class EnhancementResult:
    """Original vs renormalized non-top probabilities of one teacher vector."""

    top_index: int
    nontop_indices: np.ndarray
    original: np.ndarray      # p_i at temperature T, non-top coordinates
    renormalized: np.ndarray  # same coordinates renormalized without the top class

    @property
    def min_gap(self) -> float:
        return float((self.renormalized - self.original).min())


def enhancement_check(z_teacher, temperature: float = 1.0) -> EnhancementResult:
    """Compare non-top probabilities before/after removing the top class.

    Renormalizing over the non-top classes strictly increases every
    retained probability (the removed exp term is positive), so a
    violation can only mean numerical trouble and raises.
    """
    z = np.asarray(z_teacher, dtype=np.float64)
    t = check_temperature(temperature)
    p = softmax(z, t)
    top = int(np.argmax(z))
    rest = np.concatenate([np.arange(top), np.arange(top + 1, z.size)])
    mass = float(p[rest].sum())
    renorm = p[rest] / mass
    result = EnhancementResult(top, rest, p[rest], renorm)
    if not np.all(result.renormalized > result.original):
        raise RuntimeError("renormalized probabilities failed to exceed the originals")
    return result


@dataclass(frozen=True)
class KneePoint:
    """Chosen top-k cutoff plus the averaged decay curve it came from."""

    k: int
    degenerate: bool
    curve: np.ndarray


def knee_point_k(profiles) -> KneePoint:
    """Pick k at the knee of the teacher's sorted prediction-mass curve.

    Each profile's mean probabilities are sorted descending, averaged
    across classes, and the index of maximum discrete curvature (the
    largest second difference) is returned, clamped to [1, C-1].  A
    flat curve has no knee: k = 1 with the degenerate flag set.
    """
    profiles = list(profiles)
    if not profiles:
        raise ValueError("no profiles given")
    curve = np.mean([p.sorted_curve for p in profiles], axis=0)
    n = curve.size
    # Normalizing by the peak makes the choice invariant to uniform
    # scaling of the curve.
    peak = float(curve.max())
    scaled = curve / peak if peak > 0 else curve
    if float(scaled.max() - scaled.min()) < 1e-9:
        return KneePoint(k=1, degenerate=True, curve=curve)
    second = scaled[2:] - 2.0 * scaled[1:-1] + scaled[:-2]
    k = int(np.argmax(second)) + 1 if second.size else 1
    return KneePoint(k=min(max(k, 1), n - 1), degenerate=False, curve=curve)


def multimodality_ratio(profile: ClassPredictionProfile, k: int = 5) -> float:
    """Mass ratio top1 / (top2..k) of a class profile.

    A small ratio means the class's prediction mass is spread over
    several high-probability classes.  This is a house diagnostic, not
    a published quantity.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    curve = profile.sorted_curve
    tail = float(curve[1 : min(k, curve.size)].sum())
    if tail == 0.0:
        return math.inf
    return float(curve[0]) / tail


@dataclass(frozen=True)
class DiscrepancyMatrix:
    """Mean absolute teacher/student differences binned by true class.

    Row r, column j holds the mean |teacher - student| of coordinate j
    over samples whose true class is r, for raw logits and for
    temperature-softened probabilities.  With `diagonal_masked` the
    (r, r) entries (the target-label coordinates) are excluded from
    summaries.
    """

    logit_diff: np.ndarray
    prob_diff: np.ndarray
    diagonal_masked: bool
    temperature: float

    def summary(self) -> dict:
        def mean_of(mat):
            if self.diagonal_masked:
                mask = ~np.eye(mat.shape[0], dtype=bool)
                return float(mat[mask].mean())
            return float(mat.mean())

        return {
            "mean_logit_diff": mean_of(self.logit_diff),
            "mean_prob_diff": mean_of(self.prob_diff),
        }


def discrepancy_matrix(
    teacher_logits,
    student_logits,
    labels,
    temperature: float = 4.0,
    diagonal_masked: bool = True,
) -> DiscrepancyMatrix:
    """Per-class mean absolute logit and probability discrepancies."""
    z_t, y = _check_batch(teacher_logits, labels)
    z_s = _check_batch(student_logits)
    if z_t.shape != z_s.shape:
        raise ValueError(
            f"shape mismatch: teacher {z_t.shape} vs student {z_s.shape}"
        )
    t = check_temperature(temperature)
    n_classes = z_t.shape[1]
    logit_diff = np.zeros((n_classes, n_classes))
    prob_diff = np.zeros((n_classes, n_classes))
    abs_logit = np.abs(z_t - z_s)
    abs_prob = np.abs(
        np.stack([softmax(r, t) for r in z_t]) - np.stack([softmax(r, t) for r in z_s])
    )
    for cls in range(n_classes):
        mask = y == cls
        if mask.any():
            logit_diff[cls] = abs_logit[mask].mean(axis=0)
            prob_diff[cls] = abs_prob[mask].mean(axis=0)
    return DiscrepancyMatrix(logit_diff, prob_diff, diagonal_masked, t)


def profiles_to_csv(path, profiles) -> None:
    """Write profiles in long format: class_id, rank, prob."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["class_id", "rank", "prob"])
        for p in profiles:
            for rank, idx in enumerate(p.top_indices):
                writer.writerow([p.class_id, rank, repr(float(p.mean_probs[idx]))])


def discrepancy_to_csv(path, matrix: DiscrepancyMatrix) -> None:
    """Write both discrepancy matrices in long format."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["true_class", "class", "logit_diff", "prob_diff"])
        n = matrix.logit_diff.shape[0]
        for r in range(n):
            for j in range(n):
                writer.writerow(
                    [r, j, repr(float(matrix.logit_diff[r, j])), repr(float(matrix.prob_diff[r, j]))]
                )


def profiles_to_json(profiles) -> str:
    return json.dumps(
        [
            {
                "class_id": p.class_id,
                "mean_probs": p.mean_probs.tolist(),
                "top_indices": p.top_indices.tolist(),
            }
            for p in profiles
        ]
    )
