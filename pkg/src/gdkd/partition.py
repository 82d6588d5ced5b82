"""Class-index partitions and the two-level decomposition of a distribution.

A partition splits the class indices {0..C-1} into mutually exclusive,
jointly exhaustive, nonempty groups.  Decomposing a probability vector
against a partition yields (1) the group-mass distribution  b, with
b_m = sum of p_i over group m, and (2) one renormalized "leaf"
distribution per group.  Together they reconstruct the original
distribution: p_i = b_m * leaf_m[i] for i in group m.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .numeric import as_logit_vector, as_prob_vector

__all__ = [
    "Partition",
    "DecomposedDistribution",
    "make_partition",
    "partition_topk",
    "partition_target",
    "partition_gdkd3",
    "decompose",
]

# Stable descending order: ties share the value order of np.argsort on
# the negated vector, so the lowest class index wins each tie.
def _descending_order(z: np.ndarray) -> np.ndarray:
    return np.argsort(-z, kind="stable")


@dataclass(frozen=True, eq=False)
class Partition:
    """An ordered family of disjoint, exhaustive class-index sets."""

    groups: tuple  # tuple of sorted int64 arrays
    n_classes: int
    strategy: str = "explicit"  # "target" | "topk" | "top1-topk-rest" | "explicit"

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def group_of(self) -> np.ndarray:
        """Group index per class, shape (n_classes,)."""
        owner = np.empty(self.n_classes, dtype=np.int64)
        for m, g in enumerate(self.groups):
            owner[g] = m
        return owner

    def to_json(self) -> str:
        return json.dumps([g.tolist() for g in self.groups])

    @staticmethod
    def from_json(text: str, n_classes: int, strategy: str = "explicit") -> "Partition":
        return make_partition(json.loads(text), n_classes, strategy)


def make_partition(groups, n_classes: int, strategy: str = "explicit") -> Partition:
    """Validate raw index groups and build a Partition.

    Groups must be nonempty, pairwise disjoint, jointly exhaustive over
    {0..n_classes-1}, and there must be at least two of them.
    """
    if n_classes < 2:
        raise ValueError(f"a partition needs at least 2 classes, got {n_classes}")
    cleaned = []
    for g in groups:
        idx = np.asarray(g, dtype=np.int64).ravel()
        if idx.size == 0:
            raise ValueError("partition contains an empty group")
        cleaned.append(np.sort(idx))
    if len(cleaned) < 2:
        raise ValueError(f"a partition needs at least 2 groups, got {len(cleaned)}")
    merged = np.concatenate(cleaned)
    if merged.size != n_classes or not np.array_equal(np.sort(merged), np.arange(n_classes)):
        raise ValueError("groups must be disjoint and cover every class exactly once")
    return Partition(groups=tuple(cleaned), n_classes=n_classes, strategy=strategy)


def partition_topk(z_teacher, k: int) -> Partition:
    """Two groups: the k largest teacher logits, and the rest.

    Ties at the k-th value are broken toward the lowest class index, so
    the result is deterministic for any input.
    """
    z = as_logit_vector(z_teacher, "teacher logits")
    c = z.size
    if not 1 <= k <= c - 1:
        raise ValueError(f"k must be in [1, {c - 1}], got {k}")
    order = _descending_order(z)
    return Partition(
        groups=(np.sort(order[:k]), np.sort(order[k:])),
        n_classes=c,
        strategy="topk",
    )


def partition_target(target: int, n_classes: int) -> Partition:
    """Two groups: the target class alone, and every other class."""
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    t = int(target)
    if not 0 <= t < n_classes:
        raise ValueError(f"target {target} out of range for {n_classes} classes")
    rest = np.concatenate([np.arange(t), np.arange(t + 1, n_classes)])
    return Partition(
        groups=(np.array([t], dtype=np.int64), rest.astype(np.int64)),
        n_classes=n_classes,
        strategy="target",
    )


def partition_gdkd3(z_teacher, k: int) -> Partition:
    """Three groups: the top-1 logit, ranks 2..k, and all remaining classes.

    Same tie-break rule as `partition_topk`.
    """
    z = as_logit_vector(z_teacher, "teacher logits")
    c = z.size
    if not 2 <= k <= c - 1:
        raise ValueError(f"k must be in [2, {c - 1}], got {k}")
    order = _descending_order(z)
    return Partition(
        groups=(order[:1].copy(), np.sort(order[1:k]), np.sort(order[k:])),
        n_classes=c,
        strategy="top1-topk-rest",
    )


@dataclass(frozen=True, eq=False)
class DecomposedDistribution:
    """Group masses plus renormalized within-group distributions.

    `degenerate[m]` marks a group whose mass underflowed to exactly 0;
    its leaf is then defined as uniform, and loss code treats the
    group's KL term as 0.
    """

    partition: Partition
    group_masses: np.ndarray
    leaves: tuple
    degenerate: tuple = field(default_factory=tuple)

    def reconstruct(self) -> np.ndarray:
        """Rebuild the flat distribution: p_i = b_m * leaf_m[i]."""
        p = np.zeros(self.partition.n_classes)
        for g, mass, leaf in zip(self.partition.groups, self.group_masses, self.leaves):
            p[g] = mass * leaf
        return p

    def any_degenerate(self) -> bool:
        return any(self.degenerate)


def decompose(p, partition: Partition) -> DecomposedDistribution:
    """Split a distribution into group masses and per-group leaves."""
    p = as_prob_vector(p)
    if p.size != partition.n_classes:
        raise ValueError(
            f"distribution has {p.size} classes, partition expects {partition.n_classes}"
        )
    masses = np.array([float(p[g].sum()) for g in partition.groups])
    leaves = []
    degenerate = []
    for g, mass in zip(partition.groups, masses):
        if mass == 0.0:
            leaves.append(np.full(g.size, 1.0 / g.size))
            degenerate.append(True)
        else:
            leaves.append(p[g] / mass)
            degenerate.append(False)
    return DecomposedDistribution(
        partition=partition,
        group_masses=masses,
        leaves=tuple(leaves),
        degenerate=tuple(degenerate),
    )
