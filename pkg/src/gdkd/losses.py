"""The decoupled knowledge-distillation loss family.

Every loss is a pure function of (teacher logits, student logits,
hyperparameters).  The family is built around one identity: for any
partition of the classes, the plain distillation KL splits exactly into
a group-mass KL plus the teacher-mass-weighted within-group KLs:

    KL(p_t || p_s) = KL(b_t || b_s) + sum_m b_t[m] * KL(leaf_t[m] || leaf_s[m])

Replacing the coupled weights (1 and b_t[m]) with free weights gives the
generalized decoupled loss (GDKD); choosing the target-label partition
recovers DKD; choosing the teacher's top-1 class gives GDKD-top1.

All KL terms are evaluated in the log domain straight from the logits,
so they stay finite and accurate for any finite inputs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .numeric import as_logit_vector, check_temperature, log_softmax, subset_log_softmax
from .partition import Partition, partition_gdkd3, partition_target, partition_topk

__all__ = [
    "KL_CAP",
    "VARIANTS",
    "LossBreakdown",
    "LossConfig",
    "kd_loss",
    "kd_loss_decomposed",
    "dkd_loss",
    "gdkd_loss",
    "gdkd_n_loss",
    "gdkd2_loss",
    "gdkd_dynamic_loss",
    "logit_standardize",
    "cross_entropy",
    "warmup_factor",
    "distillation_loss",
    "distill_term",
    "total_objective",
]

# Saturation value for a KL term that would otherwise be infinite
# (possible only through underflow; finite logits keep every term
# finite on the log-domain path).
KL_CAP = 1e6

VARIANTS = ("kd", "dkd", "gdkd", "gdkd2", "gdkd3", "gdkd-v1", "gdkd-v2", "gdkd-v3")


@dataclass(frozen=True)
class LossBreakdown:
    """A decoupled loss split into its weighted components.

    `total` always equals
    ``high_weight * high_kd + sum(low_weights[m] * low_terms[m])``;
    the effective weights fold in any temperature-squared scaling and,
    for the dynamic variants, the realized per-sample factors.
    """

    total: float
    high_kd: float
    low_terms: tuple
    high_weight: float
    low_weights: tuple
    capped: bool = False

    def recombine(self) -> float:
        return self.high_weight * self.high_kd + sum(
            w * t for w, t in zip(self.low_weights, self.low_terms)
        )


def _cap(value: float) -> tuple:
    """Saturate a non-finite KL term at KL_CAP; returns (value, capped)."""
    if math.isfinite(value):
        return value, False
    return KL_CAP, True


def _kl_from_logs(log_t: np.ndarray, log_s: np.ndarray) -> float:
    """KL between two distributions given as log-probabilities."""
    p = np.exp(log_t)
    return max(0.0, float(np.dot(p, log_t - log_s)))


def _group_log_masses(z: np.ndarray, partition: Partition, t: float) -> np.ndarray:
    """log b_m = logsumexp(z[g]/T) - logsumexp(z/T), per group."""
    s = z / t
    m = s.max()
    e = np.exp(s - m)
    log_total = math.log(float(e.sum()))
    return np.array([math.log(float(e[g].sum())) - log_total for g in partition.groups])


def _group_mass_kl(z_t: np.ndarray, z_s: np.ndarray, partition: Partition, t: float):
    """KL between the teacher and student group-mass distributions.

    Returns (kl, teacher_masses).  Groups whose teacher mass underflowed
    to zero contribute nothing (the 0*log0 convention).
    """
    log_bt = _group_log_masses(z_t, partition, t)
    log_bs = _group_log_masses(z_s, partition, t)
    bt = np.exp(log_bt)
    live = bt > 0.0
    kl = max(0.0, float(np.dot(bt[live], log_bt[live] - log_bs[live])))
    return kl, bt


def _leaf_kl(z_t: np.ndarray, z_s: np.ndarray, group: np.ndarray, t: float) -> float:
    """KL between teacher and student renormalized within one group."""
    return _kl_from_logs(
        subset_log_softmax(z_t, group, t), subset_log_softmax(z_s, group, t)
    )


def _pair(z_t, z_s):
    z_t = as_logit_vector(z_t, "teacher logits")
    z_s = as_logit_vector(z_s, "student logits")
    if z_t.shape != z_s.shape:
        raise ValueError(
            f"shape mismatch: teacher has {z_t.shape}, student has {z_s.shape}"
        )
    return z_t, z_s


def _check_weight(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise ValueError(f"{name} must be a finite nonnegative real, got {value!r}")
    return value


def _assemble(
    z_t: np.ndarray,
    z_s: np.ndarray,
    partition: Partition,
    high_weight: float,
    leaf_weight_fn,
    t: float,
    scale_t_squared: bool,
) -> LossBreakdown:
    """Shared decoupled-loss assembly.

    `leaf_weight_fn(m, teacher_masses)` supplies the raw weight of group
    m's leaf term; the temperature-squared factor is folded into the
    recorded effective weights.
    """
    scale = t * t if scale_t_squared else 1.0
    high_raw, bt = _group_mass_kl(z_t, z_s, partition, t)
    high_kd, capped = _cap(high_raw)
    low_terms = []
    low_weights = []
    for m, g in enumerate(partition.groups):
        if bt[m] == 0.0:
            # Degenerate teacher mass: the group's KL is defined as 0.
            term, w = 0.0, 0.0
        else:
            term, term_capped = _cap(_leaf_kl(z_t, z_s, g, t))
            capped = capped or term_capped
            w = leaf_weight_fn(m, bt)
        low_terms.append(term)
        low_weights.append(scale * w)
    high_weight_eff = scale * high_weight
    total = high_weight_eff * high_kd + sum(
        w * term for w, term in zip(low_weights, low_terms)
    )
    return LossBreakdown(
        total=total,
        high_kd=high_kd,
        low_terms=tuple(low_terms),
        high_weight=high_weight_eff,
        low_weights=tuple(low_weights),
        capped=capped,
    )


def kd_loss(z_t, z_s, temperature: float = 1.0, scale_t_squared: bool = False) -> float:
    """Plain distillation loss: KL(softmax(z_t/T) || softmax(z_s/T))."""
    z_t, z_s = _pair(z_t, z_s)
    t = check_temperature(temperature)
    kl = _kl_from_logs(log_softmax(z_t, t), log_softmax(z_s, t))
    return (t * t if scale_t_squared else 1.0) * kl


def kd_loss_decomposed(
    z_t, z_s, partition: Partition, temperature: float = 1.0, scale_t_squared: bool = False
) -> LossBreakdown:
    """The plain KL written in decomposed form.

    The leaf weights are the teacher's group masses, so `total` equals
    `kd_loss` to floating-point accuracy for any partition.  This is
    the executable form of the decomposition identity.
    """
    z_t, z_s = _pair(z_t, z_s)
    t = check_temperature(temperature)
    return _assemble(z_t, z_s, partition, 1.0, lambda m, bt: bt[m], t, scale_t_squared)


def dkd_loss(
    z_t,
    z_s,
    target: int,
    alpha: float = 1.0,
    beta: float = 8.0,
    temperature: float = 1.0,
    scale_t_squared: bool = False,
) -> LossBreakdown:
    """Decoupled loss on the target-label partition.

    total = alpha * KL(b_t || b_s) + beta * KL(nontarget_t || nontarget_s).
    The target group is a singleton, so its leaf KL is identically zero
    and carries weight 0 in the breakdown.
    """
    z_t, z_s = _pair(z_t, z_s)
    t = check_temperature(temperature)
    alpha = _check_weight(alpha, "alpha")
    beta = _check_weight(beta, "beta")
    part = partition_target(target, z_t.size)
    return _assemble(
        z_t, z_s, part, alpha, lambda m, bt: 0.0 if m == 0 else beta, t, scale_t_squared
    )


def gdkd_loss(
    z_t,
    z_s,
    k: int = 5,
    w0: float = 1.0,
    w1: float = 1.0,
    w2: float = 8.0,
    temperature: float = 1.0,
    scale_t_squared: bool = False,
) -> LossBreakdown:
    """Generalized decoupled loss on the teacher top-k partition.

    total = w0 * KL(b_t || b_s)
          + w1 * KL(topk leaves) + w2 * KL(other leaves),
    with the top-k classes selected from the raw teacher logits
    (temperature does not affect the ranking).
    """
    z_t, z_s = _pair(z_t, z_s)
    t = check_temperature(temperature)
    ws = [_check_weight(w0, "w0"), _check_weight(w1, "w1"), _check_weight(w2, "w2")]
    part = partition_topk(z_t, k)
    return _assemble(z_t, z_s, part, ws[0], lambda m, bt: ws[m + 1], t, scale_t_squared)


def gdkd_n_loss(
    z_t,
    z_s,
    partition: Partition,
    weights,
    temperature: float = 1.0,
    scale_t_squared: bool = False,
) -> LossBreakdown:
    """Flat multi-group decoupled loss over an explicit partition.

    `weights` holds the group-mass weight followed by one weight per
    group: total = weights[0] * KL(b_t || b_s)
                 + sum_m weights[m + 1] * KL(leaf_m_t || leaf_m_s).
    """
    z_t, z_s = _pair(z_t, z_s)
    t = check_temperature(temperature)
    ws = [_check_weight(w, f"weights[{i}]") for i, w in enumerate(weights)]
    if len(ws) != partition.n_groups + 1:
        raise ValueError(
            f"expected {partition.n_groups + 1} weights "
            f"(group-mass weight + one per group), got {len(ws)}"
        )
    return _assemble(z_t, z_s, partition, ws[0], lambda m, bt: ws[m + 1], t, scale_t_squared)


def gdkd2_loss(
    z_t,
    z_s,
    c: int,
    beta2: float = 8.0,
    temperature: float = 1.0,
    scale_t_squared: bool = False,
) -> LossBreakdown:
    """Two-group decoupled loss with a single pivot class c.

    total = KL(b_t || b_s) + beta2 * KL(rest leaves).  With c equal to
    the teacher's top class this is GDKD-top1; with c equal to the true
    label and beta2 = beta it coincides with DKD at alpha = 1.
    """
    z_t, z_s = _pair(z_t, z_s)
    t = check_temperature(temperature)
    beta2 = _check_weight(beta2, "beta2")
    part = partition_target(c, z_t.size)
    return _assemble(
        z_t, z_s, part, 1.0, lambda m, bt: 0.0 if m == 0 else beta2, t, scale_t_squared
    )


def gdkd_dynamic_loss(
    z_t,
    z_s,
    variant: str,
    k: int = 5,
    m1: float = None,
    m2: float = None,
    w1: float = 1.0,
    w2: float = 8.0,
    temperature: float = 1.0,
    scale_t_squared: bool = False,
) -> LossBreakdown:
    """Top-k decoupled loss with dynamically scaled leaf weights.

    The dynamic factors multiply the teacher's group masses, restoring
    per-sample coupling with a tunable magnitude:

      gdkd-v1: KL(b) + m1*b_topk * KL(topk) + m2*b_other * KL(other)
      gdkd-v2: KL(b) + w1       * KL(topk) + m2*b_other * KL(other)
      gdkd-v3: KL(b) + m1*b_topk * KL(topk) + w2        * KL(other)

    The realized per-sample weights are recorded in `low_weights`.
    """
    if variant not in ("gdkd-v1", "gdkd-v2", "gdkd-v3"):
        raise ValueError(f"unknown dynamic variant {variant!r}")
    if variant in ("gdkd-v1", "gdkd-v3") and m1 is None:
        raise ValueError(f"{variant} requires m1")
    if variant in ("gdkd-v1", "gdkd-v2") and m2 is None:
        raise ValueError(f"{variant} requires m2")
    z_t, z_s = _pair(z_t, z_s)
    t = check_temperature(temperature)
    if m1 is not None:
        m1 = _check_weight(m1, "m1")
    if m2 is not None:
        m2 = _check_weight(m2, "m2")
    w1 = _check_weight(w1, "w1")
    w2 = _check_weight(w2, "w2")
    part = partition_topk(z_t, k)

    def leaf_weight(m, bt):
        if m == 0:
            return w1 if variant == "gdkd-v2" else m1 * bt[0]
        return w2 if variant == "gdkd-v3" else m2 * bt[1]

    return _assemble(z_t, z_s, part, 1.0, leaf_weight, t, scale_t_squared)


def logit_standardize(z) -> np.ndarray:
    """Z-score a logit vector: (z - mean) / population std."""
    z = as_logit_vector(z)
    std = float(z.std())
    if std < 1e-12:
        raise ValueError("cannot standardize a constant logit vector (zero std)")
    return (z - z.mean()) / std


def cross_entropy(z_s, target: int) -> float:
    """One-hot cross-entropy -log softmax(z_s)[target] at temperature 1."""
    z_s = as_logit_vector(z_s, "student logits")
    t = int(target)
    if not 0 <= t < z_s.size:
        raise ValueError(f"target {target} out of range for {z_s.size} classes")
    return -float(log_softmax(z_s, 1.0)[t])


def warmup_factor(epoch: int, warmup_epochs: int) -> float:
    """Linear distillation warmup: min(1, epoch / warmup_epochs).

    Epochs are 0-indexed; a warmup of 0 epochs means full weight from
    the start.
    """
    if epoch < 0:
        raise ValueError(f"epoch must be nonnegative, got {epoch}")
    if warmup_epochs <= 0:
        return 1.0
    return min(1.0, epoch / warmup_epochs)


@dataclass
class LossConfig:
    """Hyperparameters selecting and weighting a distillation loss.

    `scale_t_squared` multiplies the distillation loss by T^2 (the
    classical convention that keeps gradient magnitudes comparable
    across temperatures); it defaults on for training but every
    raw-equation identity holds with it off.
    """

    variant: str = "gdkd"
    temperature: float = 4.0
    k: int = 5
    w0: float = 1.0
    w1: float = 1.0
    w2: float = 8.0
    alpha: float = 1.0
    beta: float = 8.0
    beta2: float = 8.0
    m1: float = None
    m2: float = None
    use_ls: bool = False
    ls_scale: float = 9.0
    ce_weight: float = 1.0
    warmup_epochs: int = 20
    scale_t_squared: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self, n_classes: int = None) -> "LossConfig":
        if self.variant not in VARIANTS:
            raise ValueError(
                f"unknown variant {self.variant!r}; expected one of {VARIANTS}"
            )
        check_temperature(self.temperature)
        for name in ("w0", "w1", "w2", "alpha", "beta", "beta2", "ls_scale"):
            _check_weight(getattr(self, name), name)
        for name in ("m1", "m2"):
            value = getattr(self, name)
            if value is not None:
                _check_weight(value, name)
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.variant == "gdkd3" and self.k < 2:
            raise ValueError(f"gdkd3 needs k >= 2, got {self.k}")
        uses_k = self.variant in ("gdkd", "gdkd3", "gdkd-v1", "gdkd-v2", "gdkd-v3")
        if uses_k and n_classes is not None and self.k > n_classes - 1:
            raise ValueError(f"k must be <= {n_classes - 1}, got {self.k}")
        if self.warmup_epochs < 0:
            raise ValueError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")
        if self.variant in ("gdkd-v1", "gdkd-v3") and self.m1 is None:
            raise ValueError(f"{self.variant} requires m1")
        if self.variant in ("gdkd-v1", "gdkd-v2") and self.m2 is None:
            raise ValueError(f"{self.variant} requires m2")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "LossConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown loss-config fields: {sorted(unknown)}")
        return cls(**data)

    def replace(self, **changes) -> "LossConfig":
        merged = self.to_dict()
        merged.update(changes)
        return LossConfig.from_dict(merged)


def distillation_loss(z_t, z_s, target: int, cfg: LossConfig) -> LossBreakdown:
    """Dispatch to the configured loss variant.

    The gdkd2 variant pivots on the teacher's top class (GDKD-top1);
    use the dkd variant for target-label pivoting.
    """
    z_t, z_s = _pair(z_t, z_s)
    cfg.validate(z_t.size)
    t, sq = cfg.temperature, cfg.scale_t_squared
    if cfg.variant == "kd":
        kl = kd_loss(z_t, z_s, t, sq)
        scale = t * t if sq else 1.0
        return LossBreakdown(
            total=kl, high_kd=kl / scale, low_terms=(), high_weight=scale, low_weights=()
        )
    if cfg.variant == "dkd":
        return dkd_loss(z_t, z_s, target, cfg.alpha, cfg.beta, t, sq)
    if cfg.variant == "gdkd":
        return gdkd_loss(z_t, z_s, cfg.k, cfg.w0, cfg.w1, cfg.w2, t, sq)
    if cfg.variant == "gdkd2":
        c = int(np.argmax(z_t))
        return gdkd2_loss(z_t, z_s, c, cfg.beta2, t, sq)
    if cfg.variant == "gdkd3":
        part = partition_gdkd3(z_t, cfg.k)
        # The top-1 group is a singleton with identically zero KL; its
        # weight slot is inert.
        return gdkd_n_loss(z_t, z_s, part, (cfg.w0, 1.0, cfg.w1, cfg.w2), t, sq)
    return gdkd_dynamic_loss(
        z_t, z_s, cfg.variant, cfg.k, cfg.m1, cfg.m2, cfg.w1, cfg.w2, t, sq
    )


def distill_term(z_t, z_s, target: int, cfg: LossConfig, epoch: int) -> float:
    """The warmup-scaled distillation part of the training objective.

    With `use_ls` both logit vectors are z-scored first and the result
    is multiplied by `ls_scale`.
    """
    w = warmup_factor(epoch, cfg.warmup_epochs)
    if w == 0.0:
        return 0.0
    if cfg.use_ls:
        z_t, z_s = logit_standardize(z_t), logit_standardize(z_s)
        return w * cfg.ls_scale * distillation_loss(z_t, z_s, target, cfg).total
    return w * distillation_loss(z_t, z_s, target, cfg).total


def total_objective(z_t, z_s, target: int, cfg: LossConfig, epoch: int) -> float:
    """Training objective: cross-entropy plus warmup-scaled distillation.

    total = ce_weight * CE(z_s, target)
          + warmup(epoch) * distill(z_t, z_s, target, cfg)

    Cross-entropy always sees the raw student logits at temperature 1,
    even when the distillation term standardizes its inputs.
    """
    z_t, z_s = _pair(z_t, z_s)
    ce = cfg.ce_weight * cross_entropy(z_s, target)
    return ce + distill_term(z_t, z_s, target, cfg, epoch)
