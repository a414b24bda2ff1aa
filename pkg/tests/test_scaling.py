import numpy as np
import pytest

from nesslab.scaling import (
    MODEL_CONST,
    MODEL_LOG,
    MODEL_POWER,
    REGIME_BALLISTIC,
    REGIME_DIFFUSIVE,
    REGIME_SUBDIFFUSIVE,
    REGIME_SUPER_LOG,
    REGIME_SUPER_POWER,
    ExponentCurveError,
    FitError,
    ScalingSeries,
    classify_regime,
    exponent_curve,
    fit_const,
    fit_log,
    fit_powerlaw,
)

LENGTHS = (64, 96, 128, 192, 256, 384, 512)
LARR = np.array(LENGTHS, dtype=float)


def _series(resistances, alpha=1.0, gamma=10.0):
    return ScalingSeries(
        alpha=alpha,
        gamma=gamma,
        drive=1.0,
        lengths=LENGTHS,
        currents=tuple(1.0 / np.asarray(resistances)),
    )


def test_series_validation():
    with pytest.raises(FitError):
        _series([1.0, 2.0, 3.0][:3])  # too few handled below
    with pytest.raises(FitError):
        ScalingSeries(1.0, 1.0, 1.0, (64, 96, 128), (1.0, 1.0, 1.0))
    with pytest.raises(FitError):
        ScalingSeries(1.0, 1.0, 1.0, (64, 96, 96, 128), (1, 1, 1, 1))
    with pytest.raises(FitError):
        ScalingSeries(1.0, 1.0, 1.0, (64, 96, 128, 192), (1.0, -1.0, 1.0, 1.0))


def test_fit_log_exact():
    fit = fit_log(_series(3.0 * np.log(LARR) + 1.0))
    assert fit.params[0] == pytest.approx(3.0, abs=1e-10)
    assert fit.params[1] == pytest.approx(1.0, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.stderr[0] == pytest.approx(0.0, abs=1e-9)


def test_fit_powerlaw_exact():
    fit = fit_powerlaw(_series(2.0 * LARR**0.7))
    assert fit.params[0] == pytest.approx(0.7, abs=1e-12)
    assert fit.params[1] == pytest.approx(2.0, rel=1e-10)
    assert fit.stderr[0] == pytest.approx(0.0, abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_const_on_flat_data():
    fit = fit_const(_series(np.full(7, 4.0)))
    assert fit.params[1] == pytest.approx(4.0, rel=1e-12)
    assert fit.model == MODEL_CONST


def test_log_r2_lower_on_power_data():
    series = _series(0.5 * LARR**0.45)
    assert fit_log(series).r_squared < fit_powerlaw(series).r_squared


def test_power_nu_zero_on_constant():
    fit = fit_powerlaw(_series(np.full(7, 2.5)))
    assert fit.params[0] == pytest.approx(0.0, abs=1e-12)


def test_classify_log_data():
    label, fit = classify_regime(_series(2.0 * np.log(LARR) + 0.5))
    assert label == REGIME_SUPER_LOG
    assert fit.model == MODEL_LOG


def test_classify_power_regimes():
    assert classify_regime(_series(0.1 * LARR**0.6))[0] == REGIME_SUPER_POWER
    assert classify_regime(_series(0.1 * LARR**1.0))[0] == REGIME_DIFFUSIVE
    assert classify_regime(_series(0.1 * LARR**1.05))[0] == REGIME_DIFFUSIVE
    assert classify_regime(_series(0.1 * LARR**1.4))[0] == REGIME_SUBDIFFUSIVE


def test_classify_ballistic():
    label, _ = classify_regime(_series(np.full(7, 2.0)))
    assert label == REGIME_BALLISTIC
    # nearly flat power law also counts as ballistic
    label, _ = classify_regime(_series(1.7 * LARR**0.02))
    assert label == REGIME_BALLISTIC


def test_scale_equivariance():
    base = _series(0.2 * LARR**0.8)
    scaled = _series(5.0 * 0.2 * LARR**0.8)
    fit_a = fit_powerlaw(base)
    fit_b = fit_powerlaw(scaled)
    assert fit_b.params[0] == pytest.approx(fit_a.params[0], abs=1e-12)
    assert classify_regime(base)[0] == classify_regime(scaled)[0]
    log_a, log_b = fit_log(base), fit_log(scaled)
    assert log_b.params[0] == pytest.approx(5.0 * log_a.params[0], rel=1e-10)


def test_residuals_sum_to_zero():
    rng = np.random.default_rng(0)
    series = _series((0.3 * LARR**0.9) * np.exp(rng.normal(0, 0.02, 7)))
    fit = fit_powerlaw(series)
    x = np.log(LARR)
    resid = np.log(series.resistances) - (fit.params[0] * x + np.log(fit.params[1]))
    assert resid.sum() == pytest.approx(0.0, abs=1e-10)


def test_classification_deterministic():
    rng = np.random.default_rng(42)
    series = _series((0.3 * LARR**0.9) * np.exp(rng.normal(0, 0.05, 7)))
    first = classify_regime(series)
    for _ in range(3):
        assert classify_regime(series) == first


def test_exponent_curve_with_stub_solver():
    def current(length, alpha, gamma, drive):
        return 1.0 / (0.2 * length ** (alpha / 2.0))

    points = exponent_curve([1.0, 1.6], 10.0, LENGTHS, current_fn=current)
    assert [round(nu, 6) for _, nu, _ in points] == [0.5, 0.8]
    alphas = [a for a, _, _ in points]
    assert alphas == [1.0, 1.6]


def test_exponent_curve_aborts_on_failure():
    def current(length, alpha, gamma, drive):
        if length > 200:
            raise RuntimeError("boom")
        return 1.0 / length

    with pytest.raises(ExponentCurveError):
        exponent_curve([1.0], 10.0, LENGTHS, current_fn=current)


def test_exponent_curve_real_solver_small():
    points = exponent_curve([30.0], 0.0, (8, 12, 16, 24), )
    # no dephasing, short range: ballistic, nu ~ 0
    assert abs(points[0][1]) < 0.05
