"""Command-line front door.

Subcommands:
    verify   run the identity / gradient / enhancement property suites
    distill  generate a synthetic task, train or load a teacher, distill
    analyze  compute reports from a binary logit dump

Exit codes: 0 success, 1 a verification check failed, 2 usage or
configuration error.  Every command writes a run manifest before any
result file.  The GDKD_THREADS environment variable caps the worker
count used by the verify suites; with 1 worker (the default) every
output is byte-identical across runs with the same seed, timestamps in
the manifest aside.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .analysis import (
    class_profiles,
    discrepancy_matrix,
    discrepancy_to_csv,
    enhancement_check,
    knee_point_k,
    multimodality_ratio,
    profiles_to_csv,
)
from .gradients import finite_diff, grad_loss, save_reports_csv
from .io import atomic_write_text, read_labels, read_logits, write_labels, write_logits
from .losses import LossConfig, distillation_loss, kd_loss, kd_loss_decomposed
from .partition import make_partition
from .presets import preset
from .training import (
    DistillationClassifier,
    MlpClassifier,
    SyntheticTaskSpec,
    gen_synthetic,
    load_mlp,
    records_to_csv,
    save_mlp,
)

_GRAD_TOL_REL = 1e-6
_GRAD_TOL_ABS = 1e-8
_IDENTITY_TOL = 1e-10


def _worker_count() -> int:
    raw = os.environ.get("GDKD_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"GDKD_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def _map_trials(fn, n_trials: int):
    """Evaluate fn(trial_index) for all trials, preserving order."""
    workers = _worker_count()
    if workers == 1:
        return [fn(i) for i in range(n_trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_trials)))


def _write_manifest(out_dir: str, command: str, seed, config_path=None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "command": command,
        "config_path": config_path,
        "seed": seed,
        "output_dir": os.path.abspath(out_dir),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "library_version": __version__,
    }
    atomic_write_text(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, indent=2))


# ----------------------------------------------------------------- verify


def _random_two_group_partition(rng, c: int):
    size = int(rng.integers(1, c))
    perm = rng.permutation(c)
    return make_partition([perm[:size], perm[size:]], c)


def _identity_trial(seed: int, index: int):
    rng = np.random.default_rng((seed, 0, index))
    c = int(rng.integers(3, 201))
    t = float(rng.choice([1.0, 2.0, 4.0]))
    z_t = rng.normal(0.0, 3.0, c)
    z_s = rng.normal(0.0, 3.0, c)
    part = _random_two_group_partition(rng, c)
    err = abs(kd_loss(z_t, z_s, t) - kd_loss_decomposed(z_t, z_s, part, t).total)
    ok = err < _IDENTITY_TOL
    example = None
    if not ok:
        example = {
            "z_t": z_t.tolist(),
            "z_s": z_s.tolist(),
            "temperature": t,
            "partition": [g.tolist() for g in part.groups],
        }
    return ok, err, example

_GRAD_FAMILIES = ("topkd", "otherkd", "kd", "gdkd", "gdkd3", "gdkd-v1", "gdkd-v2", "gdkd-v3")


def _gradient_trial(seed: int, family: str, index: int):
    from .gradients import grad_otherkd, grad_topkd
    from .numeric import subset_log_softmax, log_softmax
    from .partition import partition_target

    rng = np.random.default_rng((seed, 1, _GRAD_FAMILIES.index(family), index))
    # Log-uniform class counts keep the finite-difference oracle cheap
    # while still exercising three-digit dimensions.
    c = int(np.exp(rng.uniform(np.log(3), np.log(100))))
    c = max(3, c)
    t = float(rng.choice([1.0, 4.0]))
    z_t = rng.normal(0.0, 3.0, c)
    z_s = rng.normal(0.0, 3.0, c)
    tgt = int(rng.integers(c))

    if family == "topkd":
        pivot = int(np.argmax(z_t))
        analytic = grad_topkd(z_t, z_s, pivot, t)

        def loss_fn(z):
            part = partition_target(pivot, c)
            return kd_loss_decomposed(z_t, z, part, t).high_kd

    elif family == "otherkd":
        pivot = int(np.argmax(z_t))
        rest = np.concatenate([np.arange(pivot), np.arange(pivot + 1, c)])
        analytic = grad_otherkd(z_t, z_s, pivot, t)
        lp_t = subset_log_softmax(z_t, rest, t)

        def loss_fn(z):
            lp_s = subset_log_softmax(z, rest, t)
            return float(np.dot(np.exp(lp_t), lp_t - lp_s))

    else:
        if family == "kd":
            cfg = LossConfig(variant="kd", temperature=t, scale_t_squared=bool(rng.integers(2)))
        elif family == "gdkd":
            cfg = LossConfig(
                variant="gdkd",
                temperature=t,
                k=int(rng.integers(2, min(6, c))),
                w0=1.0,
                w1=2.0,
                w2=8.0,
                scale_t_squared=bool(rng.integers(2)),
            )
        elif family == "gdkd3":
            cfg = LossConfig(
                variant="gdkd3",
                temperature=t,
                k=int(rng.integers(2, min(6, c))),
                w0=1.0,
                w1=1.0,
                w2=1.0,
                scale_t_squared=bool(rng.integers(2)),
            )
        else:
            cfg = LossConfig(
                variant=family,
                temperature=t,
                k=int(rng.integers(2, min(6, c))),
                m1=6.0,
                m2=14.0,
                w1=2.0,
                w2=8.0,
                scale_t_squared=bool(rng.integers(2)),
            )
        analytic = grad_loss(z_t, z_s, tgt, cfg)

        def loss_fn(z):
            return distillation_loss(z_t, z, tgt, cfg).total

    fd = finite_diff(loss_fn, z_s)
    err = np.abs(analytic - fd)
    tol = np.maximum(_GRAD_TOL_ABS, _GRAD_TOL_REL * np.abs(fd))
    ok = bool((err <= tol).all())
    example = None
    if not ok:
        example = {
            "family": family,
            "z_t": z_t.tolist(),
            "z_s": z_s.tolist(),
            "temperature": t,
            "target": tgt,
        }
    return ok, float((err / np.maximum(tol, 1e-300)).max()), example


def _enhancement_trial(seed: int, index: int):
    rng = np.random.default_rng((seed, 2, index))
    c = int(rng.integers(2, 201))
    t = float(rng.choice([1.0, 2.0, 4.0]))
    z = rng.normal(0.0, 3.0, c)
    try:
        result = enhancement_check(z, t)
        ok = result.min_gap > 0.0
    except RuntimeError:
        ok = False
        result = None
    example = None if ok else {"z": z.tolist(), "temperature": t}
    margin = result.min_gap if result is not None else float("-inf")
    return ok, margin, example


def cmd_verify(args) -> int:
    if args.trials < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return 2
    suites = ["identity", "gradients", "enhancement"] if args.suite == "all" else [args.suite]
    if args.out:
        _write_manifest(args.out, "verify", args.seed)
    results = {}
    failed = False
    first_example = None
    for suite in suites:
        if suite == "identity":
            rows = _map_trials(lambda i: _identity_trial(args.seed, i), args.trials)
            worst = max(r[1] for r in rows)
            stat_name, stat = "max_abs_err", worst
        elif suite == "gradients":
            rows = []
            for family in _GRAD_FAMILIES:
                rows.extend(
                    _map_trials(lambda i, f=family: _gradient_trial(args.seed, f, i), args.trials)
                )
            stat_name, stat = "max_rel_to_tol", max(r[1] for r in rows)
        else:
            rows = _map_trials(lambda i: _enhancement_trial(args.seed, i), args.trials)
            stat_name, stat = "min_gap", min(r[1] for r in rows)
        failures = [r for r in rows if not r[0]]
        if failures and first_example is None:
            first_example = failures[0][2]
        ok = not failures
        failed = failed or not ok
        results[suite] = {"trials": len(rows), "failures": len(failures), stat_name: stat}
        print(f"{suite}: {'PASS' if ok else 'FAIL'} ({len(rows)} trials, {stat_name}={stat:.3e})")
    report = {"seed": args.seed, "passed": not failed, "suites": results}
    if first_example is not None:
        report["first_counterexample"] = first_example
        print("first counterexample:", json.dumps(first_example)[:400], file=sys.stderr)
    if args.out:
        atomic_write_text(os.path.join(args.out, "verify_results.json"), json.dumps(report, indent=2))
    return 1 if failed else 0


# ----------------------------------------------------------------- distill


def _build_loss_config(config: dict) -> LossConfig:
    overrides = dict(config.get("loss", {}))
    name = config.get("preset")
    pair = config.get("pair")
    if name is not None:
        teacher, student = (pair[0], pair[1]) if pair else (None, None)
        return preset(name, teacher, student, **overrides)
    if pair is not None:
        raise ValueError("'pair' requires a 'preset' to apply the weights to")
    return LossConfig.from_dict(overrides)


def cmd_distill(args) -> int:
    try:
        with open(args.config) as f:
            config = json.load(f)
    except FileNotFoundError:
        print(f"error: config file {args.config!r} not found", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: {args.config}:{exc.lineno}:{exc.colno}: {exc.msg}", file=sys.stderr)
        return 2
    try:
        seed = args.seed if args.seed is not None else int(config.get("seed", 0))
        cfg = _build_loss_config(config)
        task = SyntheticTaskSpec(**{"seed": seed, **config.get("task", {})})
        teacher_conf = dict(config.get("teacher", {}))
        student_conf = dict(config.get("student", {}))
    except (TypeError, ValueError, KeyError) as exc:
        print(f"error: bad config field: {exc}", file=sys.stderr)
        return 2

    out = args.out
    _write_manifest(out, "distill", seed, config_path=os.path.abspath(args.config))
    data = gen_synthetic(task)

    checkpoint = teacher_conf.pop("checkpoint", None)
    teacher_epochs = teacher_conf.pop("epochs", 150)
    teacher_lr = teacher_conf.pop("lr", 0.05)
    if checkpoint is not None and os.path.exists(checkpoint):
        teacher = load_mlp(checkpoint)
    elif args.train_teacher:
        teacher = MlpClassifier(
            epochs=teacher_epochs, lr=teacher_lr, seed=seed, **teacher_conf
        ).fit(data.X_train, data.y_train)
        save_mlp(os.path.join(out, "teacher.npz"), teacher)
    else:
        where = f" at {checkpoint!r}" if checkpoint else ""
        print(
            f"error: no teacher checkpoint{where}; pass --train-teacher to fit one",
            file=sys.stderr,
        )
        return 2

    student_epochs = student_conf.pop("epochs", 100)
    student_lr = student_conf.pop("lr", 0.05)
    student = DistillationClassifier(
        teacher=teacher,
        config=cfg,
        epochs=student_epochs,
        lr=student_lr,
        seed=seed,
        collect_grad_reports=bool(config.get("collect_grad_reports", False)),
        **student_conf,
    )
    student.fit(data.X_train, data.y_train, eval_set=(data.X_test, data.y_test))

    records_to_csv(os.path.join(out, "train_records.csv"), student.history_)
    reports = [r.grad_report for r in student.history_ if r.grad_report is not None]
    if reports:
        save_reports_csv(os.path.join(out, "grad_reports.csv"), reports)

    t_logits = teacher.predict_logits(data.X_test)
    s_logits = student.predict_logits(data.X_test)
    write_logits(os.path.join(out, "teacher_logits.bin"), t_logits)
    write_labels(os.path.join(out, "labels.bin"), data.y_test)
    write_logits(os.path.join(out, "student_logits.bin"), s_logits)

    profiles = class_profiles(t_logits, data.y_test, cfg.temperature)
    profiles_to_csv(os.path.join(out, "class_profiles.csv"), profiles)
    knee = knee_point_k(profiles)
    atomic_write_text(
        os.path.join(out, "knee.json"),
        json.dumps({"recommended_k": knee.k, "degenerate": knee.degenerate}),
    )
    disc = discrepancy_matrix(t_logits, s_logits, data.y_test, cfg.temperature)
    discrepancy_to_csv(os.path.join(out, "discrepancy.csv"), disc)

    final = student.history_[-1] if student.history_ else None
    summary = {
        "dataset_hash": data.content_hash(),
        "loss_config": cfg.to_dict(),
        "aborted": bool(student.aborted_),
        "final_test_accuracy": final.test_accuracy if final else None,
        "final_nontop_prob_discrepancy": final.nontop_prob_discrepancy if final else None,
        "discrepancy_summary": disc.summary(),
    }
    atomic_write_text(os.path.join(out, "summary.json"), json.dumps(summary, indent=2))
    print(
        f"distill: done (final accuracy "
        f"{summary['final_test_accuracy']}, records {len(student.history_)})"
    )
    return 0


# ----------------------------------------------------------------- analyze


def cmd_analyze(args) -> int:
    try:
        logits = read_logits(args.logits).astype(np.float64)
        labels = read_labels(args.labels)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if labels.size != logits.shape[0]:
        print(
            f"error: {labels.size} labels for {logits.shape[0]} logit rows",
            file=sys.stderr,
        )
        return 2
    if labels.size and labels.max() >= logits.shape[1]:
        print("error: labels out of range for the logit class count", file=sys.stderr)
        return 2
    out = args.out
    _write_manifest(out, "analyze", None)

    profiles = class_profiles(logits, labels, args.temperature)
    profiles_to_csv(os.path.join(out, "class_profiles.csv"), profiles)

    rows = ["sample,min_gap,mean_gap"]
    for i, z in enumerate(logits):
        res = enhancement_check(z, args.temperature)
        gaps = res.renormalized - res.original
        rows.append(f"{i},{res.min_gap!r},{float(gaps.mean())!r}")
    atomic_write_text(os.path.join(out, "enhancement.csv"), "\n".join(rows) + "\n")

    knee = knee_point_k(profiles)
    ratios = {p.class_id: multimodality_ratio(p, max(2, args.k)) for p in profiles}
    atomic_write_text(
        os.path.join(out, "knee.json"),
        json.dumps(
            {
                "recommended_k": knee.k,
                "degenerate": knee.degenerate,
                "curve": [repr(float(v)) for v in knee.curve],
                "multimodality_ratio": {str(k): repr(v) for k, v in sorted(ratios.items())},
            },
            indent=2,
        ),
    )
    print(f"analyze: recommended k = {knee.k} (degenerate={knee.degenerate})")

    if args.student_logits:
        try:
            s_logits = read_logits(args.student_logits).astype(np.float64)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        if s_logits.shape != logits.shape:
            print("error: student logits shape differs from teacher logits", file=sys.stderr)
            return 2
        disc = discrepancy_matrix(logits, s_logits, labels, args.temperature)
        discrepancy_to_csv(os.path.join(out, "discrepancy.csv"), disc)
        atomic_write_text(
            os.path.join(out, "discrepancy_summary.json"), json.dumps(disc.summary())
        )
    return 0


# ----------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gdkd",
        description="Decoupled knowledge-distillation losses: verification, training, analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run numerical property suites")
    p_verify.add_argument(
        "suite", choices=["identity", "gradients", "enhancement", "all"]
    )
    p_verify.add_argument("--trials", type=int, default=1000)
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--out", default=None, help="directory for result files")
    p_verify.set_defaults(func=cmd_verify)

    p_distill = sub.add_parser("distill", help="train a student against a frozen teacher")
    p_distill.add_argument("--config", required=True, help="JSON run configuration")
    p_distill.add_argument("--out", required=True)
    p_distill.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_distill.add_argument(
        "--train-teacher", action="store_true", help="fit the teacher when no checkpoint exists"
    )
    p_distill.set_defaults(func=cmd_distill)

    p_analyze = sub.add_parser("analyze", help="reports from a binary logit dump")
    p_analyze.add_argument("--logits", required=True)
    p_analyze.add_argument("--labels", required=True)
    p_analyze.add_argument("--student-logits", default=None)
    p_analyze.add_argument("--temperature", type=float, default=4.0)
    p_analyze.add_argument("--k", type=int, default=5)
    p_analyze.add_argument("--out", required=True)
    p_analyze.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
