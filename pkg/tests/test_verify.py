import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from cr_infinity.verify import (
    BoundEnvelope,
    DecayFit,
    envelope_check,
    exponent_check,
    fit_decay,
    kappa_r0,
    ode_limit_envelope,
    regime_eta,
    regime_eta_j,
    regime_metric_remainder,
    regime_scalar,
    regime_y_minus_z,
    shape_norm_envelope,
    trace_lower_envelope,
    value_check,
    volume_upper_exponent,
)

R = np.linspace(0.0, 30.0, 3001)


@settings(max_examples=50)
@given(st.floats(-1.5, 3.0), st.floats(-5.0, 5.0))
def test_fit_recovers_exact_exponent(rate, logc):
    fit = fit_decay(R, np.exp(logc - rate * R), noise_floor=1e-300)
    assert not fit.noise_floor
    assert fit.exponent == pytest.approx(rate, abs=1e-9)
    assert fit.converged
    assert fit.window == (15.0, 30.0)


def test_fit_with_polynomial_prefactor_is_biased_low():
    fit = fit_decay(R, (R + 1) * np.exp(-0.5 * R))
    assert 0.4 < fit.exponent < 0.5


def test_fit_reports_noise_floor():
    fit = fit_decay(R, 1e-20 * np.exp(-R))
    assert fit.noise_floor and math.isnan(fit.exponent) and fit.converged


def test_fit_on_constant_series_is_converged():
    fit = fit_decay(R, np.full_like(R, 2.0))
    assert fit.exponent == pytest.approx(0.0, abs=1e-12)
    assert fit.converged


def test_fit_with_stable_local_rate_is_converged():
    # nearly flat on the window: polynomial growth against a slow exponential
    fit = fit_decay(R, (R + 1) * np.exp(-R / 23.5))
    assert fit.r2 < 0.99 and fit.rms > 1e-3
    assert fit.drift < 0.05 and fit.converged
    assert fit.exponent == pytest.approx(0.0, abs=0.01)


def test_fit_flags_erratic_series():
    rng = np.random.default_rng(0)
    fit = fit_decay(R, np.exp(rng.normal(0, 3, R.size)))
    assert not fit.converged
    assert "exponent" in fit.to_dict() and fit.to_dict()["converged"] is False


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_decay(R, R[:-1])
    with pytest.raises(ValueError, match="degenerate"):
        fit_decay(R, np.exp(-R), window=(10.0, 10.02))


@pytest.mark.parametrize("fn, a, expected", [
    (regime_eta, 0.8, (0.8, False)),
    (regime_eta, 1.5, (1.5, True)),
    (regime_eta, 3.0, (1.5, False)),
    (regime_eta_j, 1.2, (0.7, False)),
    (regime_eta_j, 2.0, (1.0, False)),
    (regime_y_minus_z, 1.2, (0.2, False)),
    (regime_y_minus_z, 2.5, (0.5, False)),
    (regime_metric_remainder, 1.2, (0.8, False)),
    (regime_metric_remainder, 1.5, (0.5, True)),
    (regime_metric_remainder, 2.0, (0.5, False)),
])
def test_regime_tables(fn, a, expected):
    got = fn(a)
    assert got[0] == pytest.approx(expected[0]) and got[1] == expected[1]


def test_scalar_regimes():
    assert regime_scalar("f", 2.0) == (0.0, False)
    assert regime_scalar("f", 3.0) == (1.0, True)
    assert regime_scalar("f", 4.0) == (1.0, False)
    assert regime_scalar("fj", 2.5) == (0.5, True)
    assert regime_scalar("fj", 2.2)[0] == pytest.approx(0.2)


@pytest.mark.parametrize("a, value_at_1", [
    (1.0, 1 + (2.0 + 0.5) * math.exp(-1.0)),
    (2.0, 1 + (2.0 + 0.5) * 2 * math.exp(-2.0)),
    (3.0, 1 + (2.0 + 0.5) * math.exp(-2.0)),
])
def test_shape_norm_envelope_regimes(a, value_at_1):
    env = shape_norm_envelope(a, 0.5, 2.0)
    assert env(1.0) == pytest.approx(value_at_1)
    assert env.side == "upper"
    assert env(100.0) == pytest.approx(1.0)


def test_shape_norm_envelope_needs_positive_decay():
    with pytest.raises(ValueError):
        shape_norm_envelope(0.0, 0.5, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.3, 3.0), st.floats(0.0, 2.0), st.floats(-2.0, 2.0))
def test_damped_ode_stays_inside_its_envelopes(alpha, beta, gamma, f0p):
    """f'' + alpha f' = gamma e^{-beta t} saturates the forcing bound."""
    t = np.linspace(0.0, 20.0, 401)
    T = 80.0  # f(T) equals the limit to round-off for rates >= 0.3
    sol = solve_ivp(lambda s, y: [y[1], -alpha * y[1] + gamma * math.exp(-beta * s)],
                    (0, T), [0.0, f0p], t_eval=np.append(t, T), rtol=1e-12, atol=1e-15)
    f, fp = sol.y[0][:-1], sol.y[1][:-1]
    tail = sol.y[0][-1] - f
    d1, d0 = ode_limit_envelope(alpha, beta, gamma, f0p)
    assert np.all(np.abs(fp) <= d1(t) * (1 + 1e-8) + 1e-12)
    assert np.all(np.abs(tail) <= d0(t) * (1 + 1e-8) + 1e-11)


def test_damped_ode_envelope_resonant_case():
    d1, d0 = ode_limit_envelope(1.0, 1.0, 2.0, 0.5)
    assert d1(1.0) == pytest.approx((0.5 + 2.0) * math.exp(-1.0))
    with pytest.raises(ValueError):
        ode_limit_envelope(0.0, 1.0, 1.0, 0.0)


def test_kappa_and_r0():
    kappa, r0 = kappa_r0(1, 2.0, 0.5, 0.25)
    assert kappa == pytest.approx(0.5 - 0.25 / 3)
    assert r0 == max(math.log(0.5 / (0.25 - kappa**2)) / 2.0, 1.0)
    assert kappa_r0(1, math.inf, 0.0, 0.25)[1] == 1.0
    with pytest.raises(ValueError):
        kappa_r0(1, 2.0, 0.5, 1.5)
    env = trace_lower_envelope(1, 2.0, 0.5, 0.25)
    assert env(np.array([0.0]))[0] == -np.inf
    assert env(np.array([50.0]))[0] == pytest.approx(3 * kappa)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("a", [1.2, 1.5, 2.0])
def test_volume_exponent_full_rank_is_n_plus_one(n, a):
    assert volume_upper_exponent(n, a, 2 * n + 1) == (n + 1.0, 0)


def test_volume_exponent_rank_defect():
    assert volume_upper_exponent(1, 1.5, 2) == (1.0, 1)
    assert volume_upper_exponent(1, 1.2, 2)[0] == pytest.approx(1.0 + 0.5 - 0.2)
    assert volume_upper_exponent(1, 2.0, 3, eta_vanishes=True)[0] == 1.5
    with pytest.raises(ValueError):
        volume_upper_exponent(1, 2.0, 4)
    with pytest.raises(ValueError):
        volume_upper_exponent(1, 0.5, 3)


def _fit(exponent, converged=True):
    return DecayFit(exponent, 0.0, 1.0 if converged else 0.5, (15.0, 30.0), False, 100,
                    0.0 if converged else 1.0)


@pytest.mark.parametrize("mode, fitted, ok", [
    ("two-sided", 1.05, True), ("two-sided", 1.2, False), ("at-least", 5.0, True),
    ("at-least", 0.85, False), ("at-most", 0.2, True), ("at-most", 1.2, False),
])
def test_exponent_check_modes(mode, fitted, ok):
    e = exponent_check("x", "s", _fit(fitted), 1.0, mode)
    assert e.passed is ok
    assert e.fitted == fitted and e.mode == mode


def test_exponent_check_growth_and_convergence():
    e = exponent_check("g", "s", _fit(-0.5), 0.5, "two-sided", growth=True)
    assert e.passed and e.fitted == 0.5
    bad = exponent_check("g", "s", _fit(1.0, converged=False), 1.0)
    assert not bad.passed and "unconverged" in bad.annotation
    exact = exponent_check("z", "s", DecayFit(math.nan, math.nan, math.nan, (0, 1), True, 0), 1.0)
    assert exact.passed and "noise floor" in exact.annotation
    with pytest.raises(ValueError):
        exponent_check("x", "s", _fit(1.0), 1.0, "sideways")


def test_envelope_and_value_checks():
    grid = np.linspace(0, 1, 11)
    env = BoundEnvelope("e", "upper", lambda r: 2.0 + r, {"c": 1}, "bounded")
    assert envelope_check("e", "s", grid, 1.0 + grid, env).passed
    failing = envelope_check("e", "s", grid, 2.5 + grid, env)
    assert not failing.passed and failing.margin < 0
    assert envelope_check("l", "s", grid, 3.0 + grid, env, side="lower").passed
    inactive = np.full_like(grid, -np.inf)
    with pytest.raises(ValueError):
        envelope_check("i", "s", grid, grid, inactive)
    assert value_check("v", "s", 1e-4, 1e-3).passed
    assert not value_check("v", "s", 1e-2, 1e-3).passed
    assert value_check("v", "s", 0.2, 0.0, side="lower").passed
    assert value_check("v", "s", 0.2, 0.0).to_dict()["status"] == "fail"
