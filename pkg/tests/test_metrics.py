"""The six evaluation metrics, aggregation, and the inverse-proportional
diagnostic fit."""

import numpy as np
import pytest

from depthalign import (
    ConfigError,
    DepthMap,
    EmptyMaskError,
    NumericError,
    ScaleShift,
    ValidityMask,
    aggregate,
    evaluate,
    fit_inverse_proportional,
)
from depthalign.metrics import MetricReport, scale_depth_diagnostic


def dm(values):
    return DepthMap(np.atleast_2d(np.asarray(values, dtype=np.float32)))


def full(shape):
    return ValidityMask(np.ones(shape, dtype=bool))


class TestEvaluate:
    def test_perfect_prediction(self):
        gt = dm([0.5, 1.0, 2.0, 8.0])
        r = evaluate(gt, gt, full((1, 4)))
        assert r.abs_rel == 0.0
        assert r.rmse == 0.0
        assert r.log10 == 0.0
        assert r.rmse_log == 0.0
        assert r.delta1 == r.delta2 == r.delta3 == 1.0
        assert r.n_pixels == 4

    def test_two_pixel_hand_case(self):
        # pred=[2,4], gt=[1,4]:
        #   abs_rel = (|1-2|/1 + 0)/2 = 0.5
        #   rmse = sqrt((1 + 0)/2) = 0.70710678
        #   log10 = |log10(1)-log10(2)|/2 = 0.15051499
        #   rmse_log = sqrt(ln(2)^2 / 2) = 0.49012907
        #   ratios = [2, 1]: delta1 = delta2 = delta3 = 0.5
        #   (2 is >= 1.25, 1.5625 and 1.953125 under the strict rule)
        r = evaluate(dm([2.0, 4.0]), dm([1.0, 4.0]), full((1, 2)))
        assert r.abs_rel == pytest.approx(0.5, abs=1e-9)
        assert r.rmse == pytest.approx(0.70710678, abs=1e-8)
        assert r.log10 == pytest.approx(np.log10(2.0) / 2, abs=1e-9)
        assert r.rmse_log == pytest.approx(np.log(2.0) / np.sqrt(2.0), abs=1e-9)
        assert r.delta1 == 0.5
        assert r.delta2 == 0.5
        assert r.delta3 == 0.5

    def test_delta_boundary_is_strict(self):
        # pred exactly 1.25 * gt: ratio == threshold, counts as failure
        gt = dm([2.0, 4.0, 8.0])
        pred = dm([2.5, 5.0, 10.0])
        r = evaluate(pred, gt, full((1, 3)))
        assert r.delta1 == 0.0
        assert r.delta2 == 1.0

    def test_delta_monotone_in_threshold(self):
        rng = np.random.default_rng(50)
        for _ in range(20):
            gt = rng.uniform(0.5, 10, size=(6, 6)).astype(np.float32)
            pred = (gt * rng.uniform(0.3, 3.0, size=gt.shape)).astype(np.float32)
            r = evaluate(DepthMap(pred), DepthMap(gt), full((6, 6)))
            assert r.delta1 <= r.delta2 <= r.delta3 <= 1.0

    def test_uniform_scaling_increases_abs_rel(self):
        gt = dm(np.linspace(1.0, 5.0, 8))
        base = evaluate(gt, gt, full((1, 8))).abs_rel
        scaled = evaluate(dm(gt.values * 1.3), gt, full((1, 8))).abs_rel
        assert scaled > base

    def test_log_metrics_for_constant_ratio(self):
        # pred = r * gt: log10 = |log10 r|, rmse_log = |ln r|
        gt = dm(np.linspace(0.5, 4.0, 10))
        for ratio in (0.5, 2.0, 3.7):
            r = evaluate(dm(gt.values * ratio), gt, full((1, 10)))
            assert r.log10 == pytest.approx(abs(np.log10(ratio)), rel=1e-5)
            assert r.rmse_log == pytest.approx(abs(np.log(ratio)), rel=1e-5)

    def test_mask_restricts_pixels(self):
        pred = dm([1.0, 100.0])
        gt = dm([1.0, 1.0])
        m = ValidityMask(np.array([[True, False]]))
        r = evaluate(pred, gt, m)
        assert r.abs_rel == 0.0 and r.n_pixels == 1

    def test_nonpositive_prediction_on_mask_rejected(self):
        with pytest.raises(NumericError, match=r"prediction.*\(0, 1\)"):
            evaluate(dm([1.0, 0.0]), dm([1.0, 1.0]), full((1, 2)))

    def test_nonpositive_gt_on_mask_rejected(self):
        with pytest.raises(NumericError, match="ground truth"):
            evaluate(dm([1.0, 1.0]), dm([1.0, 0.0]), full((1, 2)))

    def test_empty_mask_rejected(self):
        with pytest.raises(EmptyMaskError):
            evaluate(dm([1.0]), dm([1.0]),
                     ValidityMask(np.zeros((1, 1), dtype=bool)))

    def test_crop_rectangle(self):
        pred = np.ones((4, 4), dtype=np.float32)
        gt = np.ones((4, 4), dtype=np.float32)
        gt[0, :] = 2.0  # wrong outside the crop only
        r = evaluate(DepthMap(pred), DepthMap(gt), full((4, 4)),
                     crop=(1, 4, 0, 4))
        assert r.abs_rel == 0.0 and r.n_pixels == 12

    def test_crop_outside_image_rejected(self):
        with pytest.raises(ConfigError):
            evaluate(dm([1.0]), dm([1.0]), full((1, 1)), crop=(0, 2, 0, 1))


class TestAggregate:
    def rep(self, abs_rel, n_pixels):
        return MetricReport(abs_rel=abs_rel, rmse=0, log10=0, rmse_log=0,
                            delta1=1, delta2=1, delta3=1, n_pixels=n_pixels)

    def test_single_report_unchanged(self):
        r = self.rep(0.25, 10)
        agg = aggregate([r])
        assert agg.abs_rel == 0.25 and agg.n_images == 1

    def test_identical_reports_unchanged(self):
        r = self.rep(0.25, 10)
        agg = aggregate([r, r, r])
        assert agg.abs_rel == pytest.approx(0.25)
        assert agg.n_images == 3 and agg.n_pixels == 30

    def test_image_mean_vs_pixel_mean(self):
        # abs_rel 0.1 over 10 px and 0.3 over 30 px:
        # image-mean = 0.2, pixel-mean = (0.1*10 + 0.3*30)/40 = 0.25
        reports = [self.rep(0.1, 10), self.rep(0.3, 30)]
        assert aggregate(reports, "image-mean").abs_rel == pytest.approx(0.2)
        assert aggregate(reports, "pixel-mean").abs_rel == pytest.approx(0.25)

    def test_mode_recorded(self):
        agg = aggregate([self.rep(0.1, 10)], "pixel-mean")
        assert agg.aggregation == "pixel-mean"

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            aggregate([])

    def test_kv_text_round_trips_fields(self):
        text = self.rep(0.125, 7).to_kv_text()
        assert "abs_rel=0.125" in text and "n_pixels=7" in text


class TestInverseProportionalFit:
    def test_two_point_closed_form(self):
        # a = (2/1 + 1/2) / (1/1 + 1/4) = 2.5 / 1.25 = 2.0
        fit = fit_inverse_proportional([(1.0, 2.0), (2.0, 1.0)])
        assert fit.coefficient == pytest.approx(2.0)

    def test_two_point_matches_grid_search(self):
        points = [(1.0, 2.0), (2.0, 1.0)]
        a_grid = min(
            (sum((a / m - v) ** 2 for m, v in points), a)
            for a in np.arange(0.0, 3.0, 1e-3)
        )[1]
        fit = fit_inverse_proportional(points)
        assert abs(fit.coefficient - a_grid) <= 1e-3

    def test_single_point_exact(self):
        fit = fit_inverse_proportional([(4.0, 0.5)])
        assert fit.coefficient == pytest.approx(2.0)
        assert fit.r_squared == 1.0

    def test_noiseless_model_recovery(self):
        m = np.linspace(0.5, 8.0, 12)
        points = [(mi, 3.0 / mi) for mi in m]
        fit = fit_inverse_proportional(points)
        assert fit.coefficient == pytest.approx(3.0, rel=1e-9)
        assert fit.r_squared == pytest.approx(1.0)

    def test_identical_abscissae_still_solvable(self):
        fit = fit_inverse_proportional([(2.0, 1.0), (2.0, 3.0)])
        # best a/2 for targets {1, 3} is their mean: a = 4
        assert fit.coefficient == pytest.approx(4.0)

    def test_rejects_empty_and_nonpositive(self):
        with pytest.raises(ConfigError):
            fit_inverse_proportional([])
        with pytest.raises(NumericError):
            fit_inverse_proportional([(0.0, 1.0)])

    def test_diagnostic_points(self):
        gt = dm([1.0, 2.0, 3.0])
        points = scale_depth_diagnostic(
            [(gt, full((1, 3)), ScaleShift(0.7, 0.1))]
        )
        assert points == [(2.0, 0.7)]
