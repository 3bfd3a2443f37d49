import itertools

import numpy as np
import pytest

from helpers import (central_diff, grad_rel_err, guarded_directional_checks,
                     jaccard_loss_brute, lovasz_region_signature, rel_err)

from occspot.balance import default_loss_weights
from occspot.learn import (lovasz_softmax, softmax_field, softmax_vjp,
                           total_loss, weighted_ce)

W15 = default_loss_weights(15)


def random_instance(seed, h=6, w=6, n_cls=15, scale=2.0):
    rng = np.random.default_rng(seed)
    logits = rng.normal(0.0, scale, (h, w, n_cls + 1))
    gt = rng.integers(0, n_cls + 1, (h, w))
    return logits, gt


class TestSoftmaxField:
    def test_equal_logits_uniform(self):
        p = softmax_field(np.zeros((3, 3, 16)))
        np.testing.assert_allclose(p, 1.0 / 16, atol=1e-15)

    def test_shift_invariance(self):
        logits, _ = random_instance(0)
        p1 = softmax_field(logits)
        p2 = softmax_field(logits + 7.3)
        assert np.abs(p1 - p2).max() <= 1e-12

    def test_matches_extended_precision(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(0, 3, (4, 4, 3))
        got = softmax_field(logits)
        # longdouble reference, no stabilization trick
        ref64 = np.exp(logits.astype(np.longdouble))
        ref64 /= ref64.sum(axis=-1, keepdims=True)
        assert np.abs(got - ref64.astype(np.float64)).max() <= 1e-12

    def test_normalization(self):
        logits, _ = random_instance(2, scale=30.0)
        p = softmax_field(logits)
        assert np.abs(p.sum(axis=-1) - 1.0).max() <= 1e-9
        assert (p >= 0).all()

    def test_nan_rejected(self):
        bad = np.zeros((2, 2, 3))
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="NaN"):
            softmax_field(bad)


class TestWeightedCE:
    def test_perfect_prediction_zero_loss(self):
        gt = np.array([[1, 2], [0, 15]])
        pred = np.zeros((2, 2, 16))
        np.put_along_axis(pred, gt[..., None], 1.0, axis=-1)
        loss, grad = weighted_ce(pred, gt, W15)
        assert loss == 0.0

    def test_uniform_prediction_log_c(self):
        _, gt = random_instance(3)
        pred = np.full((6, 6, 16), 1.0 / 16)
        loss, _ = weighted_ce(pred, gt, W15)
        assert loss == pytest.approx(np.log(16.0), abs=1e-12)

    def test_gradient_matches_central_differences(self):
        logits, gt = random_instance(4)

        def f(lg):
            return weighted_ce(softmax_field(lg), gt, W15)[0]

        _, grad = weighted_ce(softmax_field(logits), gt, W15)
        fd = central_diff(f, logits, h=1e-5)
        assert grad_rel_err(fd, grad) <= 1e-6

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            weighted_ce(np.zeros((2, 2, 16)), np.zeros((3, 3), dtype=int), W15)
        with pytest.raises(ValueError):
            weighted_ce(np.zeros((2, 2, 16)), np.zeros((2, 2), dtype=int),
                        np.ones(4))

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            weighted_ce(np.zeros((1, 1, 3)), np.array([[3]]), np.ones(3))


class TestLovaszSoftmax:
    def test_perfect_one_hot_zero(self):
        _, gt = random_instance(5)
        pred = np.zeros((6, 6, 16))
        np.put_along_axis(pred, gt[..., None], 1.0, axis=-1)
        loss, grad = lovasz_softmax(pred, gt)
        assert loss == 0.0

    def test_single_cell_one_minus_p(self):
        for p in (0.0, 0.2, 0.7, 1.0):
            pred = np.array([[[1.0 - p, p]]])
            gt = np.array([[1]])
            loss, _ = lovasz_softmax(pred, gt)
            assert loss == pytest.approx(1.0 - p, abs=1e-12)

    def test_binary_vertices_match_jaccard_2x2(self):
        # exhaustive over every (gt, pred) mask pair on a 2x2 grid
        cells = 4
        for gt_bits, pr_bits in itertools.product(range(16), range(16)):
            gt = np.array([(gt_bits >> i) & 1 for i in range(cells)]).reshape(2, 2)
            pr = np.array([(pr_bits >> i) & 1 for i in range(cells)]).reshape(2, 2)
            pred = np.stack([1.0 - pr, pr.astype(float)], axis=-1)
            loss, _ = lovasz_softmax(pred, gt, classes="all")
            want = jaccard_loss_brute(pr.astype(bool), gt.astype(bool))
            assert abs(loss - want) <= 1e-9, (gt_bits, pr_bits)

    def test_multiclass_vertices_match_mean_jaccard(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            gt = rng.integers(0, 4, (3, 3))
            hard = rng.integers(0, 4, (3, 3))
            pred = np.zeros((3, 3, 4))
            np.put_along_axis(pred, hard[..., None], 1.0, axis=-1)
            loss, _ = lovasz_softmax(pred, gt, classes="all")
            want = np.mean([jaccard_loss_brute(hard == n, gt == n)
                            for n in (1, 2, 3)])
            assert abs(loss - want) <= 1e-9

    def test_gradient_constant_within_region(self):
        logits, gt = random_instance(7)
        pred = softmax_field(logits)
        _, g1 = lovasz_softmax(pred, gt)
        _, g2 = lovasz_softmax(np.clip(pred + 1e-12, 0, 1), gt)
        assert np.abs(g1 - g2).max() <= 1e-9

    def test_gradient_matches_fd_along_clean_directions(self):
        rng = np.random.default_rng(8)
        logits, gt = random_instance(9)
        pred = softmax_field(logits)

        checks = guarded_directional_checks(
            lambda p: lovasz_softmax(p, gt)[0],
            lambda p: lovasz_softmax(p, gt)[1],
            lambda p: lovasz_region_signature(p, gt),
            pred, rng, n_dirs=5)
        for fd, an in checks:
            assert rel_err(fd, an) <= 1e-6

    def test_empty_gt_present_mode_zero(self):
        pred = softmax_field(np.random.default_rng(10).normal(size=(3, 3, 4)))
        loss, grad = lovasz_softmax(pred, np.zeros((3, 3), dtype=int))
        assert loss == 0.0 and np.all(grad == 0.0)

    def test_out_of_range_gt_rejected(self):
        with pytest.raises(ValueError):
            lovasz_softmax(np.zeros((1, 1, 3)), np.array([[7]]))

    def test_nonnegative(self):
        for seed in range(20):
            logits, gt = random_instance(seed, h=4, w=4)
            loss, _ = lovasz_softmax(softmax_field(logits), gt)
            assert loss >= 0.0


class TestTotalLoss:
    def test_lambda_zero_equals_ce(self):
        logits, gt = random_instance(11)
        pred = softmax_field(logits)
        ce, gce = weighted_ce(pred, gt, W15)
        tot, gtot = total_loss(pred, gt, W15, lam=0.0)
        assert tot == ce
        np.testing.assert_array_equal(gtot, gce)

    def test_perfect_prediction_zero(self):
        _, gt = random_instance(12)
        pred = np.zeros((6, 6, 16))
        np.put_along_axis(pred, gt[..., None], 1.0, axis=-1)
        loss, _ = total_loss(pred, gt, W15, lam=1.0)
        assert loss == 0.0

    def test_gradient_matches_central_differences(self):
        # full-tensor FD; the seeded instance keeps the probe kink-free
        logits, gt = random_instance(13)

        def f(lg):
            return total_loss(softmax_field(lg), gt, W15, lam=1.0)[0]

        _, grad = total_loss(softmax_field(logits), gt, W15, lam=1.0)
        fd = central_diff(f, logits, h=1e-5)
        assert grad_rel_err(fd, grad) <= 1e-6

    def test_negative_lambda_rejected(self):
        logits, gt = random_instance(14)
        with pytest.raises(ValueError):
            total_loss(softmax_field(logits), gt, W15, lam=-0.1)


def test_softmax_vjp_matches_jacobian():
    rng = np.random.default_rng(15)
    logits = rng.normal(size=(5,))
    v = rng.normal(size=(5,))
    p = softmax_field(logits)
    jac = np.diag(p) - np.outer(p, p)  # explicit softmax Jacobian
    np.testing.assert_allclose(softmax_vjp(p, v), jac.T @ v, atol=1e-12)
