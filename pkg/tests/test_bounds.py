import math
from fractions import Fraction

import numpy as np
import pytest

from flgame.bounds import (EULER_GAMMA, BoundEvaluationError, harmonic, harmonic_diff, harmonic_table,
                           metric_spoa_constant, metric_spoa_ub, metric_spoa_ub_curve,
                           metric_spoa_ub_denominator, pos_lb_asymptotic, pos_lb_asymptotic_curve,
                           pos_lb_best, pos_lb_ratio, pos_lb_table, pos_ub, pos_ub_curve, scalar_maximize)


def test_harmonic_values():
    assert harmonic(0) == 0.0
    assert harmonic(1) == 1.0
    assert harmonic(4) == pytest.approx(float(Fraction(25, 12)), abs=1e-15)
    assert harmonic(10) == pytest.approx(2.928968, abs=1e-6)
    with pytest.raises(ValueError):
        harmonic(-1)
    assert harmonic_diff(10, 4) == pytest.approx(harmonic(10) - harmonic(4))


def test_harmonic_bracket():
    n = np.arange(1, 10 ** 6 + 1)
    H = harmonic_table(10 ** 6)[1:]
    logs = np.log(n)
    assert np.all(EULER_GAMMA + logs <= H + 1e-12)
    assert np.all(H <= 1 + logs + 1e-12)
    assert H[-1] == pytest.approx(harmonic(10 ** 6), rel=1e-13)


def test_compound_limit_stays_below_e():
    r = np.arange(1, 10 ** 6 + 1, dtype=float)
    assert np.all(np.exp(r * np.log1p(1 / r)) < math.e)


def test_pos_ub_values():
    assert pos_ub(1.0) == pytest.approx(5 / 3)
    assert pos_ub(2.47) == pytest.approx(2.359, abs=1e-3)
    curve = pos_ub_curve(1, 100)
    assert 2.35 <= curve.max <= 2.37 and 2.3 <= curve.argmax <= 2.6
    assert curve.max == pytest.approx(pos_ub(curve.argmax))
    assert list(curve.xs) == sorted(curve.xs)
    assert curve.max >= curve.fs.max()


def test_pos_lb_asymptotic_values():
    assert pos_lb_asymptotic(1.0) == pytest.approx(0.6)
    assert pos_lb_asymptotic(0.18) == pytest.approx(1.455, abs=1e-3)
    curve = pos_lb_asymptotic_curve()
    assert 1.45 <= curve.max <= 1.47 and 0.15 <= curve.argmax <= 0.22
    with pytest.raises(ValueError):
        pos_lb_asymptotic_curve(0.0, 1.0)


def test_scalar_maximize():
    x, fx = scalar_maximize(lambda x: -(x - 2) ** 2, (0, 5), tol=1e-6)
    assert x == pytest.approx(2, abs=1e-6) and fx == pytest.approx(0, abs=1e-12)
    x, fx = scalar_maximize("pos-ub", (1, 100))
    assert x == pytest.approx(2.47, abs=0.01) and fx == pytest.approx(2.36, abs=0.005)
    x, fx = scalar_maximize("pos-lb-asym", (1e-4, 1 - 1e-4))
    assert x == pytest.approx(0.18, abs=0.01) and fx == pytest.approx(1.455, abs=0.005)
    assert scalar_maximize("pos-ub", (1, 100)) == scalar_maximize("pos-ub", (1, 100))


def test_scalar_maximize_errors():
    with pytest.raises(BoundEvaluationError, match="x="):
        scalar_maximize(lambda x: np.where(x > 1, np.nan, x), (0, 2))
    with pytest.raises(ValueError):
        scalar_maximize(lambda x: x, (0, 1), points=100)
    with pytest.raises(ValueError):
        scalar_maximize(lambda x: x, (1, 0))
    with pytest.raises(ValueError):
        scalar_maximize(lambda x: x, (0, 1), tol=0)


def test_metric_spoa_denominator_zero_term():
    den = metric_spoa_ub_denominator(math.e, math.e, 0.5)
    assert den == pytest.approx(0.5 * math.e / (1 + math.e), abs=1e-12)


def test_metric_spoa_curve_finite():
    curve = metric_spoa_ub_curve(1, 1e6, math.e, 0.5)
    assert math.isfinite(curve.max)
    assert 1 < curve.argmax < 1e6
    assert curve.max == pytest.approx(metric_spoa_ub(curve.argmax, math.e, 0.5))
    assert metric_spoa_constant() == pytest.approx(metric_spoa_ub_curve().max)


def test_alpha_one_variants_have_interior_maxima():
    for curve in (metric_spoa_ub_curve(1, 1e6, 1.0), pos_ub_curve(1, 1e6, points=100_001)):
        assert math.isfinite(curve.max)
        assert curve.xs[0] < curve.argmax < curve.xs[-1]
        assert curve.max > curve.fs[0] and curve.max > curve.fs[-1]


def test_metric_spoa_denominator_minimum():
    # Minimized at y = alpha with value alpha gamma / (1 + alpha), so positive for gamma > 0.
    for alpha in (1.0, math.e, 10.0):
        ys = np.geomspace(1, 1e6, 200_001)
        den = metric_spoa_ub_denominator(ys, alpha, 0.5)
        assert den.min() == pytest.approx(0.5 * alpha / (1 + alpha), rel=1e-6)
        assert ys[np.argmin(den)] == pytest.approx(alpha, rel=1e-3)
    with pytest.raises(ValueError):
        metric_spoa_ub_curve(alpha=0.5)
    with pytest.raises(ValueError):
        metric_spoa_ub_curve(gamma=0.0)


def test_pos_lb_table_values():
    assert pos_lb_table(10 ** 8) == pytest.approx(1.7716, abs=0.005)
    assert pos_lb_table(10 ** 6) == pytest.approx(1.76927, abs=0.01)
    assert pos_lb_table(10 ** 2, maximize_r=True) == pytest.approx(1.52471, abs=0.02)


def test_pos_lb_table_monotone():
    vals = [pos_lb_table(n) for n in (10 ** 2, 10 ** 4, 10 ** 6, 10 ** 8)]
    assert vals == sorted(vals)
    best = [pos_lb_table(n, maximize_r=True) for n in (10 ** 2, 10 ** 4, 10 ** 6)]
    assert best == sorted(best)


def test_pos_lb_best_dominates():
    r, val = pos_lb_best(100)
    assert all(pos_lb_ratio(100, t) <= val for t in range(1, 10))
    assert pos_lb_ratio(100, r) == val


def test_pos_lb_table_errors():
    with pytest.raises(ValueError):
        pos_lb_table(99)
    with pytest.raises(ValueError):
        pos_lb_ratio(100, 10)
