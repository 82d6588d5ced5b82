"""Tests for the decoupled loss family.

Frozen constants were computed with the straight-line 50-digit
implementations in _oracles.py; several tests also recompute oracle
values at runtime on random instances.
"""

import math

import numpy as np
import pytest

from gdkd.losses import (
    LossConfig,
    cross_entropy,
    distill_term,
    distillation_loss,
    dkd_loss,
    gdkd2_loss,
    gdkd_dynamic_loss,
    gdkd_loss,
    gdkd_n_loss,
    kd_loss,
    kd_loss_decomposed,
    logit_standardize,
    total_objective,
    warmup_factor,
)
from gdkd.numeric import softmax
from gdkd.partition import make_partition, partition_gdkd3, partition_topk
from gdkd.presets import pair_weights, preset

from _oracles import gdkd_n_hp, kd_hp, kd_identity_hp


def random_two_group(rng, c):
    cut = int(rng.integers(1, c))
    perm = rng.permutation(c)
    return make_partition([perm[:cut], perm[cut:]], c)


class TestKdLoss:
    def test_identical_logits_give_zero(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            z = rng.normal(0, 4, 10)
            assert kd_loss(z, z, 4.0) == 0.0

    def test_frozen_reversed_ramp(self):
        # KL between softmax([1,2,3]) and softmax([3,2,1]); frozen from
        # the oracle.
        np.testing.assert_allclose(
            kd_loss([1, 2, 3], [3, 2, 1], 1.0), 1.1504207652088829, rtol=1e-12
        )

    def test_frozen_confident_student(self):
        np.testing.assert_allclose(
            kd_loss([0, 0], [0, 10], 1.0), 4.306898218339272, rtol=1e-12
        )

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            kd_loss([1, 2, 3], [1, 2])

    def test_t_squared_scaling(self):
        base = kd_loss([1, 2, 3], [3, 1, 2], 4.0)
        np.testing.assert_allclose(kd_loss([1, 2, 3], [3, 1, 2], 4.0, True), 16 * base)

    def test_matches_oracle_random(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            c = int(rng.integers(2, 20))
            z_t = rng.normal(0, 4, c).tolist()
            z_s = rng.normal(0, 4, c).tolist()
            t = float(rng.choice([1.0, 2.0, 4.0]))
            np.testing.assert_allclose(
                kd_loss(z_t, z_s, t), float(kd_hp(z_t, z_s, t)), rtol=1e-11, atol=1e-15
            )


class TestDecompositionIdentity:
    def test_identical_logits_all_terms_zero(self):
        z = np.array([1.0, -2.0, 0.5, 3.0])
        lb = kd_loss_decomposed(z, z, make_partition([[0, 3], [1, 2]], 4), 2.0)
        assert lb.total == 0.0 and lb.high_kd == 0.0 and all(t == 0.0 for t in lb.low_terms)

    def test_total_equals_kd_loss_topk_partition(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            z_t = rng.normal(0, 4, 10)
            z_s = rng.normal(0, 4, 10)
            part = partition_topk(z_t, 3)
            lb = kd_loss_decomposed(z_t, z_s, part, 1.0)
            assert abs(lb.total - kd_loss(z_t, z_s, 1.0)) < 1e-10

    def test_four_class_head_split(self):
        z_t, z_s = [4.0, 3.0, 2.0, 1.0], [1.0, 2.0, 3.0, 4.0]
        part = make_partition([[0], [1, 2, 3]], 4)
        lb = kd_loss_decomposed(z_t, z_s, part, 1.0)
        assert abs(lb.total - kd_loss(z_t, z_s, 1.0)) < 1e-10
        # Weighted recombination reproduces the total exactly.
        np.testing.assert_allclose(lb.recombine(), lb.total, atol=1e-10)
        # Leaf weights are the teacher group masses.
        p_t = softmax(np.array(z_t), 1.0)
        np.testing.assert_allclose(lb.low_weights, [p_t[0], p_t[1:].sum()], atol=1e-12)

    def test_bulk_identity_random_partitions(self):
        rng = np.random.default_rng(7)
        for _ in range(2000):
            c = int(rng.integers(3, 60))
            z_t = rng.normal(0, 3, c)
            z_s = rng.normal(0, 3, c)
            t = float(rng.choice([1.0, 2.0, 4.0]))
            part = random_two_group(rng, c)
            assert abs(kd_loss(z_t, z_s, t) - kd_loss_decomposed(z_t, z_s, part, t).total) < 1e-10

    def test_matches_oracle_identity_total(self):
        rng = np.random.default_rng(9)
        z_t = rng.normal(0, 3, 8).tolist()
        z_s = rng.normal(0, 3, 8).tolist()
        groups = [[0, 2, 5], [1, 3, 4, 6, 7]]
        lb = kd_loss_decomposed(z_t, z_s, make_partition(groups, 8), 2.0)
        np.testing.assert_allclose(lb.total, float(kd_identity_hp(z_t, z_s, groups, 2.0)), rtol=1e-11)


class TestDkdLoss:
    def test_identity_zero(self):
        z = np.array([0.3, 1.2, -0.7, 2.0])
        assert dkd_loss(z, z, 1, 1.0, 8.0, 4.0).total == 0.0

    def test_coupled_weights_recover_plain_kd(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            c = int(rng.integers(3, 30))
            z_t = rng.normal(0, 3, c)
            z_s = rng.normal(0, 3, c)
            t = float(rng.choice([1.0, 4.0]))
            tgt = int(rng.integers(c))
            beta = 1.0 - softmax(z_t, t)[tgt]
            lb = dkd_loss(z_t, z_s, tgt, 1.0, beta, t)
            assert abs(lb.total - kd_loss(z_t, z_s, t)) < 1e-10

    def test_published_pair_weights(self):
        assert pair_weights("ResNet32x4", "ResNet8x4")["w2"] == 8.0
        cfg = preset("dkd", "ResNet32x4", "ResNet8x4")
        assert cfg.alpha == 1.0 and cfg.beta == 8.0 and cfg.temperature == 4.0

    def test_weights_scale_terms(self):
        z_t, z_s = [3.0, 1.0, 0.0], [0.0, 1.0, 3.0]
        a = dkd_loss(z_t, z_s, 0, 2.0, 5.0, 1.0)
        high = kd_loss_decomposed(z_t, z_s, make_partition([[0], [1, 2]], 3), 1.0)
        np.testing.assert_allclose(
            a.total, 2.0 * high.high_kd + 5.0 * high.low_terms[1], rtol=1e-12
        )


class TestGdkdLoss:
    def test_identity_zero_any_weights(self):
        z = np.array([5.0, 1.0, 0.0, -2.0, 3.0])
        assert gdkd_loss(z, z, 2, 3.0, 7.0, 11.0, 4.0).total == 0.0

    def test_k1_reduces_to_gdkd2(self):
        # With k=1 the top group is a singleton, its leaf KL vanishes,
        # and any w1 gives the same value as the two-group pivot loss.
        rng = np.random.default_rng(13)
        for _ in range(200):
            c = int(rng.integers(3, 20))
            z_t = rng.normal(0, 3, c)
            z_s = rng.normal(0, 3, c)
            lb1 = gdkd_loss(z_t, z_s, 1, 1.0, 123.0, 6.0, 4.0)
            lb2 = gdkd2_loss(z_t, z_s, int(np.argmax(z_t)), 6.0, 4.0)
            assert abs(lb1.total - lb2.total) < 1e-12
            assert lb1.low_terms[0] == 0.0

    def test_frozen_six_class_case(self):
        # w0=1, w1=2, w2=8, k=2, T=4, raw equations (no T^2 factor);
        # frozen from the oracle composition of the partition softmaxes.
        lb = gdkd_loss([5, 4, 3, 2, 1, 0], [0, 1, 2, 3, 4, 5], 2, 1.0, 2.0, 8.0, 4.0)
        np.testing.assert_allclose(lb.total, 1.5502777406273081, rtol=1e-12)
        np.testing.assert_allclose(lb.high_kd, 0.25972058658348104, rtol=1e-12)
        np.testing.assert_allclose(lb.low_terms[0], 0.031088250442899052, rtol=1e-12)
        np.testing.assert_allclose(lb.low_terms[1], 0.15354758164475362, rtol=1e-12)

    def test_matches_oracle_random(self):
        rng = np.random.default_rng(15)
        for _ in range(50):
            c = int(rng.integers(4, 16))
            z_t = rng.normal(0, 3, c).tolist()
            z_s = rng.normal(0, 3, c).tolist()
            k = int(rng.integers(2, c - 1))
            part = partition_topk(np.array(z_t), k)
            expected = gdkd_n_hp(z_t, z_s, [g.tolist() for g in part.groups], [1.0, 2.0, 8.0], 4.0)
            got = gdkd_loss(z_t, z_s, k, 1.0, 2.0, 8.0, 4.0).total
            np.testing.assert_allclose(got, float(expected), rtol=1e-11, atol=1e-15)

    def test_partition_uses_raw_teacher_ranking(self):
        # Ranking comes from raw teacher logits, so temperature cannot
        # change which classes land in the top group.
        z_t = np.array([2.0, 1.9, -5.0, -6.0])
        z_s = np.array([0.0, 1.0, 2.0, 3.0])
        for t in (0.5, 1.0, 8.0):
            lb = gdkd_loss(z_t, z_s, 2, 1.0, 1.0, 1.0, t)
            assert lb.total > 0


class TestGdkdNLoss:
    def test_two_groups_equal_gdkd(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            c = int(rng.integers(4, 20))
            z_t = rng.normal(0, 3, c)
            z_s = rng.normal(0, 3, c)
            k = int(rng.integers(1, c))
            part = partition_topk(z_t, k)
            a = gdkd_n_loss(z_t, z_s, part, (1.0, 2.0, 8.0), 4.0).total
            b = gdkd_loss(z_t, z_s, k, 1.0, 2.0, 8.0, 4.0).total
            assert abs(a - b) < 1e-12

    def test_identity_zero(self):
        z = np.arange(6.0)
        part = partition_gdkd3(z, 3)
        assert gdkd_n_loss(z, z, part, (1, 1, 1, 1), 4.0).total == 0.0

    def test_gdkd3_all_unit_weights_matches_oracle(self):
        rng = np.random.default_rng(19)
        z_t = rng.normal(0, 3, 12).tolist()
        z_s = rng.normal(0, 3, 12).tolist()
        part = partition_gdkd3(np.array(z_t), 5)
        got = gdkd_n_loss(z_t, z_s, part, (1, 1, 1, 1), 4.0).total
        expected = gdkd_n_hp(z_t, z_s, [g.tolist() for g in part.groups], [1, 1, 1, 1], 4.0)
        np.testing.assert_allclose(got, float(expected), rtol=1e-11)

    def test_weight_count_mismatch(self):
        z = np.arange(6.0)
        part = partition_gdkd3(z, 3)
        with pytest.raises(ValueError, match="weights"):
            gdkd_n_loss(z, z + 1, part, (1, 1, 1), 4.0)


class TestGdkd2Loss:
    def test_identity_zero(self):
        z = np.array([1.0, 5.0, 2.0])
        assert gdkd2_loss(z, z, 1, 8.0, 4.0).total == 0.0

    def test_top_pivot_equals_gdkd_k1(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            c = int(rng.integers(3, 25))
            z_t = rng.normal(0, 3, c)
            z_s = rng.normal(0, 3, c)
            c_top = int(np.argmax(z_t))
            a = gdkd2_loss(z_t, z_s, c_top, 7.0, 4.0).total
            b = gdkd_loss(z_t, z_s, 1, 1.0, 0.0, 7.0, 4.0).total
            assert abs(a - b) < 1e-12

    def test_coupled_beta_recovers_decomposed_form(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            c = int(rng.integers(3, 25))
            z_t = rng.normal(0, 3, c)
            z_s = rng.normal(0, 3, c)
            pivot = int(rng.integers(c))
            t = float(rng.choice([1.0, 4.0]))
            beta2 = 1.0 - softmax(z_t, t)[pivot]
            part = make_partition([[pivot], [i for i in range(c) if i != pivot]], c)
            expected = kd_loss_decomposed(z_t, z_s, part, t).total
            assert abs(gdkd2_loss(z_t, z_s, pivot, beta2, t).total - expected) < 1e-10

    def test_dkd_special_case_exact(self):
        rng = np.random.default_rng(25)
        for _ in range(1000):
            c = int(rng.integers(3, 40))
            z_t = rng.normal(0, 3, c)
            z_s = rng.normal(0, 3, c)
            tgt = int(rng.integers(c))
            beta = float(rng.uniform(0, 10))
            a = gdkd2_loss(z_t, z_s, tgt, beta, 4.0).total
            b = dkd_loss(z_t, z_s, tgt, 1.0, beta, 4.0).total
            assert abs(a - b) <= 1e-12


class TestDynamicVariants:
    def test_identity_zero_all_variants(self):
        z = np.array([3.0, 2.0, 1.0, 0.0, -1.0])
        for v in ("gdkd-v1", "gdkd-v2", "gdkd-v3"):
            assert gdkd_dynamic_loss(z, z, v, 2, 6.0, 14.0, 2.0, 8.0, 4.0).total == 0.0

    def test_constructed_m_matches_static_gdkd(self):
        # Choose m1, m2 so the realized dynamic weights equal the static
        # ones for this specific sample.
        rng = np.random.default_rng(27)
        for _ in range(200):
            c = int(rng.integers(4, 20))
            z_t = rng.normal(0, 3, c)
            z_s = rng.normal(0, 3, c)
            k = int(rng.integers(1, c))
            t = 4.0
            part = partition_topk(z_t, k)
            p_t = softmax(z_t, t)
            b_top = float(p_t[part.groups[0]].sum())
            b_other = float(p_t[part.groups[1]].sum())
            w1, w2 = 2.0, 8.0
            got = gdkd_dynamic_loss(
                z_t, z_s, "gdkd-v1", k, w1 / b_top, w2 / b_other, 0.0, 0.0, t
            ).total
            want = gdkd_loss(z_t, z_s, k, 1.0, w1, w2, t).total
            assert abs(got - want) < 1e-10

    def test_v2_v3_mix_static_and_dynamic(self):
        z_t = np.array([4.0, 3.0, 1.0, 0.0])
        z_s = np.array([0.0, 1.0, 3.0, 4.0])
        t, k = 4.0, 2
        part = partition_topk(z_t, k)
        p_t = softmax(z_t, t)
        b = [float(p_t[g].sum()) for g in part.groups]
        base = gdkd_loss(z_t, z_s, k, 1.0, 0.0, 0.0, t)
        topk_kl, other_kl = base.low_terms
        v2 = gdkd_dynamic_loss(z_t, z_s, "gdkd-v2", k, None, 14.0, 2.0, 0.0, t).total
        np.testing.assert_allclose(
            v2, base.high_kd + 2.0 * topk_kl + 14.0 * b[1] * other_kl, rtol=1e-12
        )
        v3 = gdkd_dynamic_loss(z_t, z_s, "gdkd-v3", k, 6.0, None, 0.0, 8.0, t).total
        np.testing.assert_allclose(
            v3, base.high_kd + 6.0 * b[0] * topk_kl + 8.0 * other_kl, rtol=1e-12
        )

    def test_missing_dynamic_factor_rejected(self):
        z = np.arange(5.0)
        with pytest.raises(ValueError, match="m1"):
            gdkd_dynamic_loss(z, z + 1, "gdkd-v1", 2, None, 14.0)
        with pytest.raises(ValueError, match="m2"):
            gdkd_dynamic_loss(z, z + 1, "gdkd-v2", 2, 6.0, None)

    def test_published_dynamic_factors(self):
        cfg = preset("gdkd-v1", "ResNet32x4", "ResNet8x4")
        assert cfg.m1 == 6.0 and cfg.m2 == 14.0


class TestLogitStandardize:
    def test_already_standard(self):
        np.testing.assert_allclose(logit_standardize([1, -1]), [1, -1], atol=1e-12)

    def test_even_ramp(self):
        np.testing.assert_allclose(
            logit_standardize([2, 4, 6]),
            [-1.224744871391589, 0.0, 1.224744871391589],
            atol=1e-12,
        )

    def test_output_is_zero_mean_unit_std(self):
        rng = np.random.default_rng(29)
        for _ in range(100):
            z = rng.normal(3, 7, int(rng.integers(2, 40)))
            s = logit_standardize(z)
            assert abs(s.mean()) < 1e-9 and abs(s.std() - 1.0) < 1e-9

    def test_constant_vector_rejected(self):
        with pytest.raises(ValueError, match="constant"):
            logit_standardize([5.0, 5.0, 5.0])


class TestTotalObjective:
    def test_warmup_schedule(self):
        assert warmup_factor(0, 20) == 0.0
        assert warmup_factor(10, 20) == 0.5
        assert warmup_factor(20, 20) == 1.0
        assert warmup_factor(500, 20) == 1.0
        assert warmup_factor(0, 0) == 1.0

    def test_epoch_zero_is_pure_cross_entropy(self):
        cfg = LossConfig(variant="gdkd", warmup_epochs=20)
        z_t, z_s = [3.0, 1.0, 0.0], [0.0, 1.0, 2.0]
        np.testing.assert_allclose(total_objective(z_t, z_s, 0, cfg, 0), cross_entropy(z_s, 0))

    def test_half_warmup_factor(self):
        cfg = LossConfig(variant="gdkd", k=2, warmup_epochs=20)
        z_t, z_s = [3.0, 1.0, 0.0, -1.0], [0.0, 1.0, 2.0, 0.5]
        full = distillation_loss(z_t, z_s, 0, cfg).total
        got = total_objective(z_t, z_s, 0, cfg, 10)
        np.testing.assert_allclose(got, cross_entropy(z_s, 0) + 0.5 * full, rtol=1e-12)

    def test_post_warmup_full_weight(self):
        cfg = LossConfig(variant="kd", warmup_epochs=5)
        z_t, z_s = [2.0, 0.0], [0.0, 2.0]
        full = distillation_loss(z_t, z_s, 0, cfg).total
        np.testing.assert_allclose(
            total_objective(z_t, z_s, 0, cfg, 7), cross_entropy(z_s, 0) + full
        )

    def test_ls_standardizes_and_scales(self):
        cfg = LossConfig(variant="gdkd", k=2, use_ls=True, ls_scale=9.0, warmup_epochs=0)
        z_t = np.array([4.0, 2.0, 1.0, -1.0])
        z_s = np.array([1.0, 3.0, 0.0, 2.0])
        manual = 9.0 * distillation_loss(
            logit_standardize(z_t), logit_standardize(z_s), 1, cfg
        ).total
        np.testing.assert_allclose(
            total_objective(z_t, z_s, 1, cfg, 50), cross_entropy(z_s, 1) + manual
        )

    def test_distill_term_matches_warmup_times_loss(self):
        cfg = LossConfig(variant="gdkd2", beta2=6.0, warmup_epochs=8)
        z_t, z_s = [3.0, 1.0, 0.0], [0.5, 2.0, -1.0]
        for epoch in (0, 3, 8, 30):
            expected = warmup_factor(epoch, 8) * distillation_loss(z_t, z_s, 0, cfg).total
            np.testing.assert_allclose(distill_term(z_t, z_s, 0, cfg, epoch), expected)


class TestLossProperties:
    def _all_losses(self, z_t, z_s, tgt, t):
        yield kd_loss(z_t, z_s, t)
        yield dkd_loss(z_t, z_s, tgt, 1.0, 8.0, t).total
        yield gdkd_loss(z_t, z_s, 2, 1.0, 2.0, 8.0, t).total
        yield gdkd2_loss(z_t, z_s, int(np.argmax(z_t)), 8.0, t).total
        yield gdkd_n_loss(z_t, z_s, partition_gdkd3(z_t, 2), (1, 1, 1, 1), t).total
        yield gdkd_dynamic_loss(z_t, z_s, "gdkd-v1", 2, 6.0, 14.0, 2.0, 8.0, t).total

    def test_nonnegative_with_nonnegative_weights(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            c = int(rng.integers(3, 20))
            z_t = rng.normal(0, 3, c)
            z_s = rng.normal(0, 3, c)
            tgt = int(rng.integers(c))
            for value in self._all_losses(z_t, z_s, tgt, 4.0):
                assert value >= 0.0

    def test_shift_invariance(self):
        rng = np.random.default_rng(33)
        for _ in range(200):
            c = int(rng.integers(3, 20))
            z_t = rng.normal(0, 3, c)
            z_s = rng.normal(0, 3, c)
            tgt = int(rng.integers(c))
            shift = float(rng.normal(0, 50))
            before = list(self._all_losses(z_t, z_s, tgt, 4.0))
            after = list(self._all_losses(z_t + shift, z_s + shift, tgt, 4.0))
            np.testing.assert_allclose(before, after, atol=1e-9)

    def test_full_complement_partition_is_structural_noop(self):
        # A two-group partition fed through the n-group form reproduces
        # the dedicated two-group implementation.
        z_t = np.array([3.0, 2.0, 1.0, 0.0, -1.0])
        z_s = np.array([-1.0, 0.0, 1.0, 2.0, 3.0])
        part = partition_topk(z_t, 2)
        a = gdkd_n_loss(z_t, z_s, part, (1.0, 2.0, 8.0), 4.0)
        b = gdkd_loss(z_t, z_s, 2, 1.0, 2.0, 8.0, 4.0)
        assert a.total == b.total


class TestLossConfig:
    def test_round_trip(self):
        cfg = LossConfig(variant="gdkd-v2", k=4, w1=2.0, m2=14.0, temperature=4.0)
        again = LossConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError, match="unknown loss-config fields"):
            LossConfig.from_dict({"variant": "kd", "nonsense": 1})

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError, match="variant"):
            LossConfig(variant="banana")
        with pytest.raises(ValueError, match="temperature"):
            LossConfig(temperature=0.0)
        with pytest.raises(ValueError, match="w2"):
            LossConfig(w2=-1.0)
        with pytest.raises(ValueError, match="m1"):
            LossConfig(variant="gdkd-v1", m2=1.0)

    def test_k_checked_against_class_count(self):
        cfg = LossConfig(variant="gdkd", k=5)
        with pytest.raises(ValueError, match="k must be <= 3"):
            cfg.validate(4)

    def test_dispatch_matches_direct_calls(self):
        z_t = np.array([4.0, 1.0, 0.0, 2.0, -1.0, 0.5])
        z_s = np.array([0.5, -1.0, 2.0, 0.0, 1.0, 4.0])
        c_top = int(np.argmax(z_t))
        cases = [
            (LossConfig(variant="kd", temperature=4.0), kd_loss(z_t, z_s, 4.0, True)),
            (
                LossConfig(variant="dkd", alpha=1.0, beta=8.0, temperature=4.0),
                dkd_loss(z_t, z_s, 2, 1.0, 8.0, 4.0, True).total,
            ),
            (
                LossConfig(variant="gdkd", k=2, w1=2.0, w2=8.0, temperature=4.0),
                gdkd_loss(z_t, z_s, 2, 1.0, 2.0, 8.0, 4.0, True).total,
            ),
            (
                LossConfig(variant="gdkd2", beta2=6.0, temperature=4.0),
                gdkd2_loss(z_t, z_s, c_top, 6.0, 4.0, True).total,
            ),
            (
                LossConfig(variant="gdkd3", k=3, w0=1.0, w1=1.0, w2=1.0, temperature=4.0),
                gdkd_n_loss(z_t, z_s, partition_gdkd3(z_t, 3), (1, 1, 1, 1), 4.0, True).total,
            ),
            (
                LossConfig(variant="gdkd-v1", k=2, m1=6.0, m2=14.0, temperature=4.0),
                gdkd_dynamic_loss(z_t, z_s, "gdkd-v1", 2, 6.0, 14.0, 1.0, 8.0, 4.0, True).total,
            ),
        ]
        for cfg, expected in cases:
            np.testing.assert_allclose(distillation_loss(z_t, z_s, 2, cfg).total, expected)

    def test_breakdown_recombination_invariant(self):
        rng = np.random.default_rng(35)
        for _ in range(200):
            c = int(rng.integers(3, 20))
            z_t = rng.normal(0, 3, c)
            z_s = rng.normal(0, 3, c)
            cfg = LossConfig(
                variant=str(rng.choice(["dkd", "gdkd", "gdkd2", "gdkd3", "gdkd-v1"])),
                k=int(rng.integers(2, min(5, c))),
                m1=6.0,
                m2=14.0,
                temperature=4.0,
            )
            lb = distillation_loss(z_t, z_s, int(rng.integers(c)), cfg)
            assert abs(lb.total - lb.recombine()) < 1e-10
