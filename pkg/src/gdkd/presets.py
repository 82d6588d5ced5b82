"""Named hyperparameter presets.

`PAIR_WEIGHTS` holds the published per-(teacher, student) loss weights
used on CIFAR-100-scale experiments: the top-k leaf weight w1, the
other-leaf weight w2 (also the DKD beta for the same pair), and the
dynamic scale factors m1/m2 where reported.  The group-mass weight w0
is 1 and the temperature 4 throughout.
"""

from __future__ import annotations

from .losses import LossConfig

__all__ = ["PAIR_WEIGHTS", "PRESETS", "pair_weights", "preset"]

PAIR_WEIGHTS = {
    ("resnet56", "resnet20"): {"w1": 1.0, "w2": 1.0, "m1": 3.0, "m2": 2.0},
    ("resnet110", "resnet32"): {"w1": 1.0, "w2": 1.0},
    ("wrn-40-2", "shufflenet-v1"): {"w1": 2.0, "w2": 6.0, "m1": 6.0, "m2": 10.0},
    ("wrn-40-2", "wrn-16-2"): {"w1": 2.0, "w2": 6.0, "m1": 6.0, "m2": 10.0},
    ("wrn-40-2", "wrn-40-1"): {"w1": 2.0, "w2": 6.0},
    ("vgg13", "vgg8"): {"w1": 1.0, "w2": 6.0, "m1": 3.0, "m2": 10.0},
    ("vgg13", "mobilenet-v2"): {"w1": 1.0, "w2": 6.0, "m1": 3.0, "m2": 10.0},
    ("resnet50", "mobilenet-v2"): {"w1": 1.0, "w2": 8.0, "m1": 2.0, "m2": 16.0},
    ("resnet32x4", "resnet8x4"): {"w1": 2.0, "w2": 8.0, "m1": 6.0, "m2": 14.0},
    ("resnet32x4", "shufflenet-v1"): {"w1": 1.0, "w2": 8.0},
    ("resnet32x4", "shufflenet-v2"): {"w1": 1.0, "w2": 8.0, "m1": 3.0, "m2": 14.0},
}

# Base settings per named preset; pair weights are merged on top.
PRESETS = {
    "kd": {"variant": "kd"},
    "dkd": {"variant": "dkd", "alpha": 1.0, "beta": 8.0},
    "gdkd-default": {"variant": "gdkd", "k": 5, "w0": 1.0, "w1": 2.0, "w2": 8.0},
    "gdkd-top1": {"variant": "gdkd2", "beta2": 8.0},
    "gdkd3": {"variant": "gdkd3", "k": 5, "w0": 1.0, "w1": 1.0, "w2": 1.0},
    "gdkd-v1": {"variant": "gdkd-v1", "k": 5, "m1": 6.0, "m2": 14.0},
    "gdkd-v2": {"variant": "gdkd-v2", "k": 5, "w1": 2.0, "m2": 14.0},
    "gdkd-v3": {"variant": "gdkd-v3", "k": 5, "m1": 6.0, "w2": 8.0},
    "gdkd-ls": {"variant": "gdkd", "k": 5, "use_ls": True, "ls_scale": 9.0},
}

_COMMON = {"temperature": 4.0, "warmup_epochs": 20, "ce_weight": 1.0}


def pair_weights(teacher: str, student: str) -> dict:
    """Published weights for a teacher/student pair (case-insensitive)."""
    key = (teacher.strip().lower(), student.strip().lower())
    if key not in PAIR_WEIGHTS:
        known = ", ".join("/".join(k) for k in sorted(PAIR_WEIGHTS))
        raise KeyError(f"no preset weights for pair {key[0]}/{key[1]}; known: {known}")
    return dict(PAIR_WEIGHTS[key])


def preset(name: str, teacher: str = None, student: str = None, **overrides) -> LossConfig:
    """Build a LossConfig from a named preset.

    A teacher/student pair pulls that pair's published weights; for the
    dkd preset the pair's w2 is used as beta, for gdkd-top1 as beta2.
    Explicit keyword overrides win over everything.
    """
    key = name.strip().lower()
    if key not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    cfg = dict(_COMMON)
    cfg.update(PRESETS[key])
    if teacher is not None and student is not None:
        pw = pair_weights(teacher, student)
        if cfg["variant"] == "dkd":
            cfg["beta"] = pw["w2"]
        elif cfg["variant"] == "gdkd2":
            cfg["beta2"] = pw["w2"]
        else:
            for field in ("w1", "w2", "m1", "m2"):
                if field in pw:
                    cfg[field] = pw[field]
    elif (teacher is None) != (student is None):
        raise ValueError("teacher and student must be given together")
    cfg.update(overrides)
    return LossConfig.from_dict(cfg)
