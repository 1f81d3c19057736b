import math

import numpy as np
import pytest

from dler_lab.bias import (BiasExperiment, analytic_moments, bias_curve,
                           mc_conditional_moments)


def test_analytic_constants_for_default_group():
    # alpha = (N-1)^2 / N^2 sigma^2, beta = (N-1) / N^2 at N=16, sigma=1
    num0, d2_0 = analytic_moments(16, 1.0, 0.0)
    assert num0 == 0.0
    assert d2_0 == pytest.approx(0.87890625, abs=1e-12)
    num1, d2_1 = analytic_moments(16, 1.0, 1.0)
    assert num1 == pytest.approx(15.0 / 16.0, abs=1e-12)
    assert d2_1 == pytest.approx(0.87890625 + 0.05859375, abs=1e-12)
    _, d2_half = analytic_moments(16, 1.0, 0.5)
    assert d2_half == pytest.approx(0.89355469, abs=1e-8)
    _, d2_two = analytic_moments(16, 1.0, 2.0)
    assert d2_two == pytest.approx(1.11328125, abs=1e-8)


def test_analytic_moments_scale_with_sigma():
    _, d2 = analytic_moments(16, 2.0, 0.0)
    assert d2 == pytest.approx(4.0 * 0.87890625, abs=1e-12)
    num, _ = analytic_moments(16, 2.0, 3.0)
    assert num == pytest.approx((1 - 1 / 16) * 3.0, abs=1e-12)


def test_mc_matches_analytic_within_3se():
    exp = BiasExperiment(group_size=16, sigma=1.0,
                         epsilon_values=(0.0, 0.5, 1.0),
                         samples=200_000, seed=7)
    result = mc_conditional_moments(exp)
    assert result.experiment is exp
    for pt in result.points:
        num, d2 = analytic_moments(16, 1.0, pt.epsilon)
        assert abs(pt.numerator_mean - num) <= 3 * pt.numerator_se
        assert abs(pt.d2_mean - d2) <= 3 * pt.d2_se
        assert pt.samples_used + pt.skipped == exp.samples
        assert pt.bias == pytest.approx(pt.advantage_mean - pt.epsilon)


def test_mc_is_deterministic():
    exp = BiasExperiment(samples=50_000, seed=3)
    a = mc_conditional_moments(exp)
    b = mc_conditional_moments(exp)
    assert [pt.advantage_mean for pt in a.points] == \
        [pt.advantage_mean for pt in b.points]
    c = mc_conditional_moments(BiasExperiment(samples=50_000, seed=4))
    assert a.points[0].advantage_mean != c.points[0].advantage_mean


def test_single_sample_reports_unusable_se():
    exp = BiasExperiment(samples=1, seed=0)
    result = mc_conditional_moments(exp)
    for pt in result.points:
        assert math.isinf(pt.numerator_se) or pt.skipped == 1


def test_degenerate_draws_are_skipped_not_divided():
    # sigma tiny and epsilon 0 makes D^2 collapse toward 0; every produced
    # advantage must still be finite
    exp = BiasExperiment(group_size=2, sigma=1.0, epsilon_values=(0.0,),
                         samples=10_000, seed=0)
    result = mc_conditional_moments(exp)
    pt = result.points[0]
    assert math.isfinite(pt.advantage_mean)
    assert pt.samples_used <= exp.samples


def test_bias_curve_common_random_numbers():
    a = bias_curve(16, (0.5, 1.0, 2.0), 0.5, 40_000, seed=5)
    b = bias_curve(16, (0.5, 1.0, 2.0), 0.5, 40_000, seed=5)
    assert [p.bias_abs for p in a] == [p.bias_abs for p in b]
    assert [p.sigma for p in a] == [0.5, 1.0, 2.0]
    for p in a:
        assert p.se > 0 and math.isfinite(p.bias_abs)


def test_bias_curve_validates_sigmas():
    with pytest.raises(ValueError):
        bias_curve(16, (1.0, 0.5), 0.5, 1000, seed=0)
    with pytest.raises(ValueError):
        bias_curve(16, (0.0, 1.0), 0.5, 1000, seed=0)


def test_experiment_validation():
    with pytest.raises(ValueError):
        BiasExperiment(group_size=1)
    with pytest.raises(ValueError):
        BiasExperiment(sigma=0.0)
    with pytest.raises(ValueError):
        BiasExperiment(samples=0)
    with pytest.raises(ValueError):
        BiasExperiment(epsilon_values=())
