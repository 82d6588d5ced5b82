"""Closed-form gradients of the loss family w.r.t. student logits.

The teacher is frozen, so every gradient here is taken with respect to
the student logits only.  Temperature enters through the 1/T chain
factor of softmax(z/T); the optional T^2 loss scaling turns that into a
net factor of T.  A central finite-difference oracle is provided so any
analytic form can be cross-checked against the loss it claims to
differentiate.

For the binary split on a pivot class c (masses b = [p_c, eta] with
eta = 1 - p_c), the group-mass term has the case form

    d KL(b_t || b_s) / d z_s[i] = (1/T) * (p_s[c] - p_t[c])                  if i = c
                                  (1/T) * p_s[i] (p_t[c] - eta_t/eta_s p_s[c])  otherwise

and the renormalized non-pivot term reduces to the difference of the
renormalized distributions, with exact zero at the pivot coordinate.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .losses import LossConfig, logit_standardize, warmup_factor
from .numeric import (
    as_logit_vector,
    check_temperature,
    log_softmax,
    softmax,
    subset_log_softmax,
    subset_softmax,
)
from .partition import Partition, partition_gdkd3, partition_target, partition_topk

__all__ = [
    "finite_diff",
    "grad_kd",
    "grad_topkd",
    "grad_otherkd",
    "grad_group_mass_kl",
    "grad_subset_kl",
    "grad_loss",
    "grad_distill_term",
    "grad_total_objective",
    "GradMagnitudeReport",
    "grad_magnitude_report",
    "save_reports_csv",
    "REPORT_CSV_COLUMNS",
]

# Denominator floor preventing NaN/Inf when a group mass underflows.
_MASS_FLOOR = 1e-300


def finite_diff(fn, z, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function at z.

    grad[i] = (fn(z + h e_i) - fn(z - h e_i)) / (2 h)
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    z = np.asarray(z, dtype=np.float64)
    grad = np.empty_like(z)
    for i in range(z.size):
        zp = z.copy()
        zp[i] = z[i] + h
        zm = z.copy()
        zm[i] = z[i] - h
        grad[i] = (fn(zp) - fn(zm)) / (2.0 * h)
    return grad


def _pair(z_t, z_s):
    z_t = as_logit_vector(z_t, "teacher logits")
    z_s = as_logit_vector(z_s, "student logits")
    if z_t.shape != z_s.shape:
        raise ValueError(
            f"shape mismatch: teacher has {z_t.shape}, student has {z_s.shape}"
        )
    return z_t, z_s


def grad_kd(z_t, z_s, temperature: float = 1.0) -> np.ndarray:
    """Gradient of KL(p_t || p_s): (p_s - p_t) / T."""
    z_t, z_s = _pair(z_t, z_s)
    t = check_temperature(temperature)
    return (softmax(z_s, t) - softmax(z_t, t)) / t


def grad_topkd(z_t, z_s, c: int, temperature: float = 1.0) -> np.ndarray:
    """Gradient of the binary group-mass KL pivoted on class c."""
    z_t, z_s = _pair(z_t, z_s)
    t = check_temperature(temperature)
    c = int(c)
    if not 0 <= c < z_t.size:
        raise ValueError(f"pivot class {c} out of range for {z_t.size} classes")
    p_t = softmax(z_t, t)
    p_s = softmax(z_s, t)
    eta_t = 1.0 - p_t[c]
    eta_s = 1.0 - p_s[c]
    if eta_s < _MASS_FLOOR:
        warnings.warn("student non-pivot mass underflowed; gradient saturated")
        eta_s = _MASS_FLOOR
    g = p_s * (p_t[c] - (eta_t / eta_s) * p_s[c])
    g[c] = p_s[c] - p_t[c]
    return g / t


def grad_otherkd(z_t, z_s, c: int, temperature: float = 1.0) -> np.ndarray:
    """Gradient of the renormalized non-pivot KL; exactly 0 at c."""
    z_t, z_s = _pair(z_t, z_s)
    t = check_temperature(temperature)
    c = int(c)
    if not 0 <= c < z_t.size:
        raise ValueError(f"pivot class {c} out of range for {z_t.size} classes")
    rest = np.concatenate([np.arange(c), np.arange(c + 1, z_t.size)])
    g = np.zeros(z_t.size)
    g[rest] = (subset_softmax(z_s, rest, t) - subset_softmax(z_t, rest, t)) / t
    return g


def _log_group_masses(z: np.ndarray, partition: Partition, t: float) -> np.ndarray:
    s = z / t
    m = s.max()
    e = np.exp(s - m)
    log_total = math.log(float(e.sum()))
    return np.array([math.log(float(e[g].sum())) - log_total for g in partition.groups])


def grad_group_mass_kl(z_t, z_s, partition: Partition, temperature: float = 1.0) -> np.ndarray:
    """Gradient of KL(b_t || b_s) for an arbitrary partition.

    grad[i] = (1/T) * p_s[i] * (1 - b_t[m(i)] / b_s[m(i)]), where m(i)
    is the group owning class i.
    """
    z_t, z_s = _pair(z_t, z_s)
    t = check_temperature(temperature)
    if partition.n_classes != z_t.size:
        raise ValueError(
            f"partition expects {partition.n_classes} classes, logits have {z_t.size}"
        )
    b_t = np.exp(_log_group_masses(z_t, partition, t))
    b_s = np.exp(_log_group_masses(z_s, partition, t))
    if np.any(b_s < _MASS_FLOOR):
        warnings.warn("student group mass underflowed; gradient saturated")
        b_s = np.maximum(b_s, _MASS_FLOOR)
    ratio = b_t / b_s
    p_s = softmax(z_s, t)
    return p_s * (1.0 - ratio[partition.group_of()]) / t


def grad_subset_kl(z_t, z_s, indices, temperature: float = 1.0) -> np.ndarray:
    """Gradient of the within-group KL(leaf_t || leaf_s) for one group.

    Zero outside the group; (u_s - u_t)/T inside, where u are the
    renormalized distributions over the group.
    """
    z_t, z_s = _pair(z_t, z_s)
    t = check_temperature(temperature)
    idx = np.asarray(indices, dtype=np.int64).ravel()
    g = np.zeros(z_t.size)
    g[idx] = (subset_softmax(z_s, idx, t) - subset_softmax(z_t, idx, t)) / t
    return g


@dataclass(frozen=True)
class _DistillPlan:
    """Teacher-side quantities of a configured loss, precomputed once.

    The teacher is frozen, so for a fixed sample everything except the
    student logits is constant across training steps: the partition,
    the realized term weights (including dynamic factors), the teacher
    group masses, and the teacher leaf distributions.  `_evaluate_plan`
    then computes the loss value and its student-logit gradient in one
    pass.  For the plain KL variant `groups` is None and the full
    teacher distribution is kept instead.
    """

    temperature: float
    scale: float  # T^2 when configured, else 1
    groups: tuple  # None for the plain KL variant
    group_of: np.ndarray
    high_weight: float
    leaf_weights: tuple
    b_t: np.ndarray
    log_b_t: np.ndarray
    p_t_leaves: tuple
    log_p_t_leaves: tuple
    p_t_full: np.ndarray
    log_p_t_full: np.ndarray


def _plan_distillation(z_t, target: int, cfg: LossConfig) -> _DistillPlan:
    z_t = as_logit_vector(z_t, "teacher logits")
    cfg.validate(z_t.size)
    t = cfg.temperature
    scale = t * t if cfg.scale_t_squared else 1.0
    lp_t = log_softmax(z_t, t)
    p_t = np.exp(lp_t)
    if cfg.variant == "kd":
        return _DistillPlan(
            t, scale, None, np.zeros(0, dtype=np.int64), 1.0, (), np.zeros(0),
            np.zeros(0), (), (), p_t, lp_t,
        )
    if cfg.variant == "dkd":
        part = partition_target(int(target), z_t.size)
        high_w, leaf_ws = cfg.alpha, [0.0, cfg.beta]
    elif cfg.variant == "gdkd":
        part = partition_topk(z_t, cfg.k)
        high_w, leaf_ws = cfg.w0, [cfg.w1, cfg.w2]
    elif cfg.variant == "gdkd2":
        part = partition_target(int(np.argmax(z_t)), z_t.size)
        high_w, leaf_ws = 1.0, [0.0, cfg.beta2]
    elif cfg.variant == "gdkd3":
        part = partition_gdkd3(z_t, cfg.k)
        high_w, leaf_ws = cfg.w0, [1.0, cfg.w1, cfg.w2]
    else:
        part = partition_topk(z_t, cfg.k)
        log_b = _log_group_masses(z_t, part, t)
        b = np.exp(log_b)
        if cfg.variant == "gdkd-v1":
            high_w, leaf_ws = 1.0, [cfg.m1 * b[0], cfg.m2 * b[1]]
        elif cfg.variant == "gdkd-v2":
            high_w, leaf_ws = 1.0, [cfg.w1, cfg.m2 * b[1]]
        else:  # gdkd-v3
            high_w, leaf_ws = 1.0, [cfg.m1 * b[0], cfg.w2]
    log_b_t = _log_group_masses(z_t, part, t)
    b_t = np.exp(log_b_t)
    lp_leaves = tuple(subset_log_softmax(z_t, g, t) for g in part.groups)
    return _DistillPlan(
        temperature=t,
        scale=scale,
        groups=part.groups,
        group_of=part.group_of(),
        high_weight=high_w,
        leaf_weights=tuple(leaf_ws),
        b_t=b_t,
        log_b_t=log_b_t,
        p_t_leaves=tuple(np.exp(lp) for lp in lp_leaves),
        log_p_t_leaves=lp_leaves,
        p_t_full=p_t,
        log_p_t_full=lp_t,
    )


def _evaluate_plan(plan: _DistillPlan, z_s: np.ndarray):
    """Loss value and student-logit gradient for a precomputed plan."""
    t = plan.temperature
    s = z_s / t
    s = s - s.max()
    e = np.exp(s)
    total = float(e.sum())
    lse = math.log(total)
    lp_s = s - lse
    if plan.groups is None:
        p_t, lp_t = plan.p_t_full, plan.log_p_t_full
        loss = max(0.0, float(np.dot(p_t, lp_t - lp_s)))
        grad = (np.exp(lp_s) - p_t) / t
        return plan.scale * loss, plan.scale * grad

    b_s = np.array([float(e[g].sum()) for g in plan.groups]) / total
    b_s_safe = np.maximum(b_s, _MASS_FLOOR)
    live = plan.b_t > 0.0
    high = max(
        0.0,
        float(np.dot(plan.b_t[live], plan.log_b_t[live] - np.log(b_s_safe[live]))),
    )
    p_s = e / total
    grad = plan.high_weight * p_s * (1.0 - (plan.b_t / b_s_safe)[plan.group_of]) / t
    loss = plan.high_weight * high
    for m, g in enumerate(plan.groups):
        w = plan.leaf_weights[m]
        if w == 0.0 or plan.b_t[m] == 0.0 or g.size < 2:
            continue
        s_g = z_s[g] / t
        s_g = s_g - s_g.max()
        lp_leaf_s = s_g - math.log(float(np.exp(s_g).sum()))
        leaf_kl = max(0.0, float(np.dot(plan.p_t_leaves[m], plan.log_p_t_leaves[m] - lp_leaf_s)))
        loss += w * leaf_kl
        grad[g] += w * (np.exp(lp_leaf_s) - plan.p_t_leaves[m]) / t
    return plan.scale * loss, plan.scale * grad


def grad_loss(z_t, z_s, target: int, cfg: LossConfig) -> np.ndarray:
    """Analytic gradient of `distillation_loss(...).total` w.r.t. z_s."""
    z_t, z_s = _pair(z_t, z_s)
    plan = _plan_distillation(z_t, target, cfg)
    return _evaluate_plan(plan, z_s)[1]


def grad_distill_term(z_t, z_s, target: int, cfg: LossConfig, epoch: int) -> np.ndarray:
    """Gradient of the warmup-scaled distillation part of the objective.

    When logits are standardized for the distillation term, the chain
    rule through the z-score map is applied:  for g the gradient in
    standardized coordinates and v the standardized student logits,

        grad_raw = (g - mean(g) - v * mean(g * v)) / std(z_s).
    """
    z_t, z_s = _pair(z_t, z_s)
    tgt = int(target)
    w = warmup_factor(epoch, cfg.warmup_epochs)
    if w == 0.0:
        return np.zeros(z_s.size)
    if cfg.use_ls:
        zt_d = logit_standardize(z_t)
        zs_d = logit_standardize(z_s)
        gd = cfg.ls_scale * grad_loss(zt_d, zs_d, tgt, cfg)
        std = float(z_s.std())
        gd = (gd - gd.mean() - zs_d * np.mean(gd * zs_d)) / std
    else:
        gd = grad_loss(z_t, z_s, tgt, cfg)
    return w * gd


def grad_total_objective(z_t, z_s, target: int, cfg: LossConfig, epoch: int) -> np.ndarray:
    """Gradient of the training objective (CE + warmup * distillation)."""
    z_t, z_s = _pair(z_t, z_s)
    tgt = int(target)
    g = cfg.ce_weight * (softmax(z_s, 1.0) - np.eye(z_s.size)[tgt])
    return g + grad_distill_term(z_t, z_s, tgt, cfg, epoch)


@dataclass(frozen=True)
class GradMagnitudeReport:
    """Batch-averaged gradient magnitudes split by logit role.

    Non-pivot ("non-top") magnitudes are reported for the raw
    group-mass term, for the beta-weighted renormalized term, and for
    the same term under the coupled weight (1 - p_t[c]) it carries
    inside the plain KL.  eta_t/eta_s are the mean non-pivot masses.
    """

    epoch: int
    mean_abs_top: float
    mean_abs_nontop_topkd: float
    mean_abs_nontop_otherkd_weighted: float
    mean_abs_nontop_coupledkd: float
    eta_t: float
    eta_s: float


REPORT_CSV_COLUMNS = (
    "epoch",
    "mean_abs_top",
    "mean_abs_nontop_topkd",
    "mean_abs_nontop_otherkd_weighted",
    "mean_abs_nontop_coupledkd",
    "eta_T",
    "eta_S",
)


def grad_magnitude_report(
    z_t,
    z_s,
    c,
    beta: float,
    temperature: float = 1.0,
    epoch: int = 0,
) -> GradMagnitudeReport:
    """Average per-sample gradient magnitudes over a batch.

    `z_t`, `z_s` are (B, C) logit matrices and `c` the (B,) pivot
    classes.  Each sample contributes the mean |gradient| over its
    non-pivot coordinates; those per-sample means are then averaged.
    """
    z_t = np.asarray(z_t, dtype=np.float64)
    z_s = np.asarray(z_s, dtype=np.float64)
    c = np.asarray(c, dtype=np.int64).ravel()
    if z_t.ndim != 2 or z_t.shape != z_s.shape or c.size != z_t.shape[0]:
        raise ValueError("expected aligned (B, C) teacher/student logits and (B,) pivots")
    if c.size == 0:
        raise ValueError("batch is empty")
    tops, topkds, weighteds, coupleds, eta_ts, eta_ss = [], [], [], [], [], []
    for zt_i, zs_i, c_i in zip(z_t, z_s, c):
        gt = grad_topkd(zt_i, zs_i, c_i, temperature)
        go = grad_otherkd(zt_i, zs_i, c_i, temperature)
        coupled = 1.0 - softmax(zt_i, temperature)[c_i]
        nontop = np.arange(zt_i.size) != c_i
        tops.append(abs(gt[c_i]))
        topkds.append(np.abs(gt[nontop]).mean())
        weighteds.append(beta * np.abs(go[nontop]).mean())
        coupleds.append(coupled * np.abs(go[nontop]).mean())
        eta_ts.append(coupled)
        eta_ss.append(1.0 - softmax(zs_i, temperature)[c_i])
    return GradMagnitudeReport(
        epoch=int(epoch),
        mean_abs_top=float(np.mean(tops)),
        mean_abs_nontop_topkd=float(np.mean(topkds)),
        mean_abs_nontop_otherkd_weighted=float(np.mean(weighteds)),
        mean_abs_nontop_coupledkd=float(np.mean(coupleds)),
        eta_t=float(np.mean(eta_ts)),
        eta_s=float(np.mean(eta_ss)),
    )


def save_reports_csv(path, reports) -> None:
    """Write gradient-magnitude reports with the fixed column layout."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_CSV_COLUMNS)
        for r in reports:
            writer.writerow(
                [
                    r.epoch,
                    repr(r.mean_abs_top),
                    repr(r.mean_abs_nontop_topkd),
                    repr(r.mean_abs_nontop_otherkd_weighted),
                    repr(r.mean_abs_nontop_coupledkd),
                    repr(r.eta_t),
                    repr(r.eta_s),
                ]
            )
