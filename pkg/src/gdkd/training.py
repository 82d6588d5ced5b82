"""Desk-scale distillation harness.

A synthetic classification task with tunable class confusability, a
small feed-forward teacher, and a student trained with cross-entropy
plus the warmup-scaled distillation objective.  The distillation part
of the backward pass uses the closed-form logit gradients from
`gdkd.gradients`; no autodiff framework is involved, so runs are
deterministic down to the bit for a fixed seed.

Both classifiers follow the scikit-learn estimator conventions
(constructor stores hyperparameters verbatim, `fit` creates trailing-
underscore attributes, `get_params`/`set_params` work), so they compose
with the usual pipeline and model-selection tooling.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .gradients import (
    GradMagnitudeReport,
    _evaluate_plan,
    _plan_distillation,
    grad_magnitude_report,
)
from .losses import LossConfig, logit_standardize, warmup_factor


def _row_softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    s = logits / temperature
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)

__all__ = [
    "SyntheticTaskSpec",
    "SyntheticData",
    "MlpSpec",
    "TrainRecord",
    "gen_synthetic",
    "MlpClassifier",
    "DistillationClassifier",
    "train_teacher",
    "distill",
    "save_mlp",
    "load_mlp",
    "records_to_csv",
]

# Consecutive classes are grouped in fours; `overlap` pulls the class
# centers within a group together, which is what makes a well-trained
# teacher spread prediction mass over several classes.
_CONFUSION_GROUP = 4
_GROUP_CENTER_SCALE = 4.0
_CLASS_OFFSET_SCALE = 2.0
_NOISE_SCALE = 1.0


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Parameters of the synthetic classification task."""

    n_classes: int = 20
    input_dim: int = 16
    clusters_per_class: int = 1
    overlap: float = 0.0
    n_train: int = 2000
    n_test: int = 500
    seed: int = 0

    def validate(self) -> "SyntheticTaskSpec":
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")
        for name in ("input_dim", "clusters_per_class", "n_train", "n_test"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.overlap <= 1.0:
            raise ValueError(f"overlap must be in [0, 1], got {self.overlap}")
        return self


@dataclass(frozen=True)
class SyntheticData:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    spec: SyntheticTaskSpec

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.X_train, self.y_train, self.X_test, self.y_test):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _sample_split(rng, centers, cluster_count, n, n_classes, dim):
    # Balanced labels so every class is represented, shuffled so batches
    # stay mixed.
    y = rng.permutation(np.arange(n) % n_classes).astype(np.int64)
    cluster = rng.integers(0, cluster_count, size=n)
    x = centers[y, cluster] + rng.normal(0.0, _NOISE_SCALE, size=(n, dim))
    return x, y


def gen_synthetic(spec: SyntheticTaskSpec) -> SyntheticData:
    """Deterministically generate the synthetic task for a spec."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    c, dim, k = spec.n_classes, spec.input_dim, spec.clusters_per_class
    n_groups = (c + _CONFUSION_GROUP - 1) // _CONFUSION_GROUP
    group_centers = rng.normal(0.0, _GROUP_CENTER_SCALE, size=(n_groups, k, dim))
    class_offsets = rng.normal(0.0, _CLASS_OFFSET_SCALE, size=(c, k, dim))
    group_of = np.arange(c) // _CONFUSION_GROUP
    centers = group_centers[group_of] + (1.0 - spec.overlap) * class_offsets
    x_train, y_train = _sample_split(rng, centers, k, spec.n_train, c, dim)
    x_test, y_test = _sample_split(rng, centers, k, spec.n_test, c, dim)
    return SyntheticData(x_train, y_train, x_test, y_test, spec)


@dataclass(frozen=True)
class MlpSpec:
    """Full layer-width description of a feed-forward net."""

    layer_widths: tuple
    activation: str = "relu"
    seed: int = 0

    def validate(self, input_dim: int = None, n_classes: int = None) -> "MlpSpec":
        if len(self.layer_widths) < 2:
            raise ValueError("layer_widths needs at least input and output widths")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError("layer widths must be positive")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if input_dim is not None and self.layer_widths[0] != input_dim:
            raise ValueError(
                f"first width {self.layer_widths[0]} != input dim {input_dim}"
            )
        if n_classes is not None and self.layer_widths[-1] != n_classes:
            raise ValueError(
                f"last width {self.layer_widths[-1]} != class count {n_classes}"
            )
        return self


@dataclass(frozen=True)
class TrainRecord:
    """One epoch of distillation metrics."""

    epoch: int
    train_loss: float
    test_accuracy: float
    nontop_prob_discrepancy: float
    grad_report: GradMagnitudeReport = None


def _init_params(widths, activation, rng):
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        if activation == "relu":
            scale = math.sqrt(2.0 / fan_in)
        else:
            scale = math.sqrt(1.0 / fan_in)
        weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _act(x, activation):
    return np.maximum(x, 0.0) if activation == "relu" else np.tanh(x)


def _act_grad(a, activation):
    return (a > 0.0).astype(np.float64) if activation == "relu" else 1.0 - a * a


def _forward(x, weights, biases, activation):
    """Returns (hidden activations incl. input, logits)."""
    acts = [x]
    h = x
    for w, b in zip(weights[:-1], biases[:-1]):
        h = _act(h @ w + b, activation)
        acts.append(h)
    return acts, h @ weights[-1] + biases[-1]


def _backward(acts, delta, weights, activation):
    """Parameter gradients from per-sample logit gradients `delta`.

    delta is (B, C) = dLoss_i/dlogits_i; the returned gradients are
    averaged over the batch.
    """
    n = delta.shape[0]
    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        grads_w[layer] = acts[layer].T @ delta / n
        grads_b[layer] = delta.mean(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * _act_grad(acts[layer], activation)
    return grads_w, grads_b


def _sgd_train(
    x,
    y,
    widths,
    activation,
    epochs,
    lr,
    momentum,
    weight_decay,
    batch_size,
    seed,
    distill_grad=None,
    epoch_end=None,
    on_nan="raise",
):
    """Mini-batch SGD with momentum shared by teacher and student.

    `distill_grad(idx, logits, epoch)`, when given, returns the extra
    per-sample logit gradients and the extra mean loss of a batch.  The
    callback consumes no randomness, so a callback returning zeros
    leaves the trajectory bit-identical to plain cross-entropy
    training.
    """
    rng = np.random.default_rng(seed)
    weights, biases = _init_params(widths, activation, rng)
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    onehot = np.eye(widths[-1])[y]
    loss_curve = []
    aborted = False
    for epoch in range(epochs):
        order = rng.permutation(x.shape[0])
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, x.shape[0], batch_size):
            idx = order[start : start + batch_size]
            acts, logits = _forward(x[idx], weights, biases, activation)
            shift = logits - logits.max(axis=1, keepdims=True)
            log_probs = shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))
            probs = np.exp(log_probs)
            ce = -(onehot[idx] * log_probs).sum(axis=1).mean()
            delta = probs - onehot[idx]
            batch_loss = ce
            if distill_grad is not None:
                extra_delta, extra_loss = distill_grad(idx, logits, epoch)
                delta = delta + extra_delta
                batch_loss = batch_loss + extra_loss
            if not math.isfinite(batch_loss):
                if on_nan == "raise":
                    raise RuntimeError(
                        f"training diverged at epoch {epoch}: loss={batch_loss!r}, "
                        f"|logits|max={np.abs(logits).max()!r}"
                    )
                aborted = True
                break
            grads_w, grads_b = _backward(acts, delta, weights, activation)
            for layer in range(len(weights)):
                gw = grads_w[layer] + weight_decay * weights[layer]
                vel_w[layer] = momentum * vel_w[layer] + gw
                weights[layer] -= lr * vel_w[layer]
                vel_b[layer] = momentum * vel_b[layer] + grads_b[layer]
                biases[layer] -= lr * vel_b[layer]
            epoch_loss += batch_loss
            n_batches += 1
        if aborted:
            break
        loss_curve.append(epoch_loss / n_batches)
        if epoch_end is not None:
            epoch_end(epoch, weights, biases, loss_curve[-1])
    return weights, biases, loss_curve, aborted


class MlpClassifier(BaseEstimator, ClassifierMixin):
    """Small feed-forward classifier trained with plain cross-entropy."""

    def __init__(
        self,
        hidden_layer_sizes=(64,),
        activation="relu",
        epochs=100,
        lr=0.05,
        momentum=0.9,
        weight_decay=5e-4,
        batch_size=64,
        seed=0,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.epochs = epochs
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.seed = seed

    def _widths(self, n_features, n_classes):
        return (n_features, *self.hidden_layer_sizes, n_classes)

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        X = X.astype(np.float64)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ValueError("need at least 2 classes")
        self.n_features_in_ = X.shape[1]
        widths = self._widths(X.shape[1], self.classes_.size)
        self.weights_, self.biases_, self.loss_curve_, _ = _sgd_train(
            X,
            y_idx,
            widths,
            self.activation,
            self.epochs,
            self.lr,
            self.momentum,
            self.weight_decay,
            self.batch_size,
            self.seed,
            on_nan="raise",
        )
        return self

    def predict_logits(self, X) -> np.ndarray:
        check_is_fitted(self, "weights_")
        X = check_array(X).astype(np.float64)
        _, logits = _forward(X, self.weights_, self.biases_, self.activation)
        return logits

    decision_function = predict_logits

    def predict_proba(self, X) -> np.ndarray:
        return _row_softmax(self.predict_logits(X), 1.0)

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.predict_logits(X), axis=1)]


class DistillationClassifier(BaseEstimator, ClassifierMixin):
    """Student trained with cross-entropy plus a distillation loss.

    The teacher must expose `predict_logits`; it is treated as frozen.
    Per-epoch metrics land in `history_`; when `collect_grad_reports`
    is set and the variant pivots on the teacher's top class (gdkd2),
    each record carries a gradient-magnitude report computed on a fixed
    training subsample.
    """

    _GRAD_REPORT_SAMPLES = 256

    def __init__(
        self,
        teacher=None,
        config=None,
        hidden_layer_sizes=(32,),
        activation="relu",
        epochs=100,
        lr=0.05,
        momentum=0.9,
        weight_decay=5e-4,
        batch_size=64,
        seed=0,
        collect_grad_reports=False,
    ):
        self.teacher = teacher
        self.config = config
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.epochs = epochs
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.seed = seed
        self.collect_grad_reports = collect_grad_reports

    def fit(self, X, y, eval_set=None):
        if self.teacher is None:
            raise ValueError("a fitted teacher is required")
        cfg = self.config if self.config is not None else LossConfig()
        X, y = check_X_y(X, y)
        X = X.astype(np.float64)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ValueError("need at least 2 classes")
        cfg.validate(self.classes_.size)
        self.n_features_in_ = X.shape[1]
        widths = (X.shape[1], *self.hidden_layer_sizes, self.classes_.size)

        teacher_logits = np.asarray(self.teacher.predict_logits(X), dtype=np.float64)
        if teacher_logits.shape != (X.shape[0], self.classes_.size):
            raise ValueError(
                f"teacher produced logits of shape {teacher_logits.shape}, "
                f"expected {(X.shape[0], self.classes_.size)}"
            )
        if eval_set is not None:
            x_ev = check_array(eval_set[0]).astype(np.float64)
            y_ev = np.asarray(eval_set[1])
            y_ev_idx = np.searchsorted(self.classes_, y_ev)
            t_ev_logits = np.asarray(self.teacher.predict_logits(x_ev), dtype=np.float64)
            t_ev_probs = _row_softmax(t_ev_logits, cfg.temperature)
            t_ev_top = np.argmax(t_ev_logits, axis=1)

        report_idx = np.arange(min(self._GRAD_REPORT_SAMPLES, X.shape[0]))
        want_reports = self.collect_grad_reports and cfg.variant == "gdkd2"
        history = []

        # The teacher side of every loss term is constant across steps,
        # so partitions, realized weights, and teacher distributions are
        # planned once per sample.
        plan_input = teacher_logits
        if cfg.use_ls:
            plan_input = np.stack([logit_standardize(row) for row in teacher_logits])
        plans = [
            _plan_distillation(plan_input[i], int(y_idx[i]), cfg)
            for i in range(X.shape[0])
        ]

        def distill_grad(idx, logits, epoch):
            # Only the distillation part; the base loop owns the CE term.
            delta = np.zeros_like(logits)
            w = warmup_factor(epoch, cfg.warmup_epochs)
            if w == 0.0:
                return delta, 0.0
            loss = 0.0
            for row, sample in enumerate(idx):
                if cfg.use_ls:
                    z_s = logit_standardize(logits[row])
                    term, g = _evaluate_plan(plans[sample], z_s)
                    term *= cfg.ls_scale
                    g = cfg.ls_scale * g
                    g = (g - g.mean() - z_s * np.mean(g * z_s)) / float(logits[row].std())
                else:
                    term, g = _evaluate_plan(plans[sample], logits[row])
                delta[row] = w * g
                loss += w * term
            return delta, loss / idx.size

        def epoch_end(epoch, weights, biases, train_loss):
            acc = math.nan
            disc = math.nan
            report = None
            if eval_set is not None:
                _, s_logits = _forward(x_ev, weights, biases, self.activation)
                acc = float((np.argmax(s_logits, axis=1) == y_ev_idx).mean())
                s_probs = _row_softmax(s_logits, cfg.temperature)
                diff = np.abs(t_ev_probs - s_probs)
                mask = np.ones_like(diff, dtype=bool)
                mask[np.arange(diff.shape[0]), t_ev_top] = False
                disc = float(diff[mask].reshape(diff.shape[0], -1).mean())
            if want_reports:
                _, r_logits = _forward(
                    X[report_idx], weights, biases, self.activation
                )
                report = grad_magnitude_report(
                    teacher_logits[report_idx],
                    r_logits,
                    np.argmax(teacher_logits[report_idx], axis=1),
                    beta=cfg.beta2,
                    temperature=cfg.temperature,
                    epoch=epoch,
                )
            history.append(TrainRecord(epoch, float(train_loss), acc, disc, report))

        self.weights_, self.biases_, self.loss_curve_, self.aborted_ = _sgd_train(
            X,
            y_idx,
            widths,
            self.activation,
            self.epochs,
            self.lr,
            self.momentum,
            self.weight_decay,
            self.batch_size,
            self.seed,
            distill_grad=distill_grad,
            epoch_end=epoch_end,
            on_nan="abort",
        )
        self.history_ = history
        self.config_ = cfg
        return self

    predict_logits = MlpClassifier.predict_logits
    decision_function = MlpClassifier.predict_logits
    predict_proba = MlpClassifier.predict_proba
    predict = MlpClassifier.predict


def train_teacher(spec: MlpSpec, data: SyntheticData, epochs: int = 150, lr: float = 0.05) -> MlpClassifier:
    """Fit the teacher network described by `spec` on the task data."""
    spec.validate(data.spec.input_dim, data.spec.n_classes)
    clf = MlpClassifier(
        hidden_layer_sizes=tuple(spec.layer_widths[1:-1]),
        activation=spec.activation,
        epochs=epochs,
        lr=lr,
        seed=spec.seed,
    )
    return clf.fit(data.X_train, data.y_train)


def distill(
    teacher,
    student_spec: MlpSpec,
    data: SyntheticData,
    cfg: LossConfig,
    epochs: int = 100,
    lr: float = 0.05,
    seed: int = 0,
    collect_grad_reports: bool = False,
) -> list:
    """Run one distillation and return the per-epoch records."""
    student_spec.validate(data.spec.input_dim, data.spec.n_classes)
    student = DistillationClassifier(
        teacher=teacher,
        config=cfg,
        hidden_layer_sizes=tuple(student_spec.layer_widths[1:-1]),
        activation=student_spec.activation,
        epochs=epochs,
        lr=lr,
        seed=seed,
        collect_grad_reports=collect_grad_reports,
    )
    student.fit(data.X_train, data.y_train, eval_set=(data.X_test, data.y_test))
    return student.history_


def save_mlp(path, clf) -> None:
    """Serialize a fitted classifier's parameters to an .npz file."""
    check_is_fitted(clf, "weights_")
    meta = {
        "activation": clf.activation,
        "classes": np.asarray(clf.classes_).tolist(),
        "n_features": int(clf.n_features_in_),
        "hidden_layer_sizes": [int(w.shape[1]) for w in clf.weights_[:-1]],
    }
    arrays = {f"w{i}": w for i, w in enumerate(clf.weights_)}
    arrays.update({f"b{i}": b for i, b in enumerate(clf.biases_)})
    np.savez(path, meta=json.dumps(meta), **arrays)


def load_mlp(path) -> MlpClassifier:
    """Restore a classifier saved by `save_mlp` (already fitted)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        n_layers = len([k for k in data.files if k.startswith("w")])
        weights = [data[f"w{i}"] for i in range(n_layers)]
        biases = [data[f"b{i}"] for i in range(n_layers)]
    clf = MlpClassifier(
        hidden_layer_sizes=tuple(meta["hidden_layer_sizes"]),
        activation=meta["activation"],
    )
    clf.weights_ = weights
    clf.biases_ = biases
    clf.classes_ = np.asarray(meta["classes"])
    clf.n_features_in_ = meta["n_features"]
    clf.loss_curve_ = []
    return clf


def records_to_csv(path, records) -> None:
    import csv

    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_loss", "test_accuracy", "nontop_prob_discrepancy"])
        for r in records:
            writer.writerow(
                [
                    r.epoch,
                    repr(r.train_loss),
                    repr(r.test_accuracy),
                    repr(r.nontop_prob_discrepancy),
                ]
            )
