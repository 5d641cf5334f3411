"""Estimator layer: parametric baselines, local-derivative estimators,
control-variable construction, potential-outcome summaries, bootstrap."""

import numpy as np
import pytest

from endoctrl import dgp
from endoctrl import estimators as est
from endoctrl.dgp import DataSet
from endoctrl.errors import (
    ConfigurationError,
    InstabilityError,
    NearZeroDenominatorError,
    OverlapError,
    SupportError,
    WeakInstrumentWarning,
)
from endoctrl.smoothers import SmootherConfig


@pytest.fixture
def rng():
    return np.random.default_rng(17)


def linear_data(rng, n=400, tau=2.0, beta=1.0, noise=0.0):
    x = rng.normal(size=n)
    d = 0.8 * x + rng.normal(size=n)
    y = tau * d + beta * x + noise * rng.normal(size=n)
    return DataSet(y=y, d=d, x=x[:, None])


def triangular_data(rng, n=400, tau=2.0):
    x = rng.normal(size=n)
    z = rng.normal(size=n)
    d = z + 0.8 * x + rng.normal(size=n)
    y = tau * d + x
    return DataSet(y=y, d=d, x=x[:, None], z=z)


# --- parametric baselines ----------------------------------------------


def test_ols_exact_on_exact_linear_data(rng):
    fit = est.ols_fit(linear_data(rng))
    assert fit.tau == pytest.approx(2.0, abs=1e-10)
    assert fit["x1"] == pytest.approx(1.0, abs=1e-10)
    assert np.all(fit.se >= 0)


def test_theoretical_lp_closed_form_matches_large_sample_ols():
    spec = dgp.make_spec("linear_endo_beta")
    lp = est.theoretical_lp(spec)
    assert lp.first_stage_f is None
    # treatment coefficient unbiased, control coefficient absorbs the
    # conditional error mean
    assert lp.tau == pytest.approx(spec.outcome.tau, abs=1e-9)
    assert lp["x1"] - spec.outcome.beta == pytest.approx(0.5, abs=1e-9)
    data = dgp.sample(spec, 400_000, 0)
    fit = est.ols_fit(data)
    assert fit.tau == pytest.approx(lp.tau, abs=0.02)
    assert fit["x1"] == pytest.approx(lp["x1"], abs=0.02)


def test_theoretical_lp_monte_carlo_fallback():
    spec = dgp.make_spec("linear_endo_tau")  # nonlinear assignment
    lp = est.theoretical_lp(spec, mc_draws=2_000_000, seed=0)
    data = dgp.sample(spec, 400_000, 1)
    fit = est.ols_fit(data)
    assert fit.tau == pytest.approx(lp.tau, abs=0.03)


def test_tsls_recovers_tau_with_endogenous_control(rng):
    data = dgp.sample(dgp.make_spec("triangular_endo"), 100_000, 2)
    fit = est.tsls_fit(data)
    assert fit.tau == pytest.approx(2.0, abs=0.05)
    assert fit.first_stage_f > 10


def test_tsls_warns_on_weak_instrument(rng):
    x = rng.normal(size=300)
    z = rng.normal(size=300)
    d = 0.001 * z + rng.normal(size=300)
    data = DataSet(y=2 * d + x, d=d, x=x[:, None], z=z)
    with pytest.warns(WeakInstrumentWarning):
        est.tsls_fit(data)


def test_tsls_requires_instrument(rng):
    with pytest.raises(ConfigurationError):
        est.tsls_fit(linear_data(rng))


# --- derivative-ratio estimator ----------------------------------------


def test_iv_ratio_exact_on_noiseless_data(rng):
    x = rng.normal(size=500)
    z = rng.normal(size=500)
    d = z + 0.8 * x
    data = DataSet(y=2.0 * d + x, d=d, x=x[:, None], z=z)
    assert est.iv_ratio(data, 0.0, 0.0).value == pytest.approx(2.0, abs=1e-6)


def test_iv_ratio_near_zero_denominator(rng):
    x = rng.normal(size=400)
    z = rng.normal(size=400)
    d = rng.normal(size=400)  # treatment does not respond to z
    data = DataSet(y=d + x, d=d, x=x[:, None], z=z)
    with pytest.raises(NearZeroDenominatorError):
        est.iv_ratio(data, 0.0, 0.0, denominator_floor=0.5)


def test_iv_ratio_requires_instrument_and_degree(rng):
    with pytest.raises(ConfigurationError):
        est.iv_ratio(linear_data(rng), 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        est.iv_ratio(triangular_data(rng), 0.0, 0.0,
                     SmootherConfig(degree=0))


# --- continuous-treatment local estimators -----------------------------


def test_clar_continuous_exact_on_noiseless_linear(rng):
    data = linear_data(rng)
    out = est.clar_continuous(data, 0.0, 0.0)
    assert out.value == pytest.approx(2.0, abs=1e-6)
    assert out.estimator_id == "clar_continuous"
    assert out.bandwidths is not None and len(out.bandwidths) == 2


def test_lar_continuous_exact_on_noiseless_linear(rng):
    data = linear_data(rng)
    assert est.lar_continuous(data, 0.0).value == pytest.approx(2.0, abs=1e-6)


def test_clar_outside_support_raises(rng):
    with pytest.raises(SupportError):
        est.clar_continuous(linear_data(rng), 50.0, 0.0)


def test_lar_trimmed_fraction_reported(rng):
    out = est.lar_continuous(linear_data(rng, n=800), 0.0)
    assert 0.0 <= out.trimmed_fraction <= 1.0


def test_clar_scale_equivariance(rng):
    data = linear_data(rng, noise=0.3)
    base = est.clar_continuous(data, 0.0, 0.0)
    scaled = est.clar_continuous(
        DataSet(y=3.0 * data.y - 1.0, d=data.d, x=data.x), 0.0, 0.0)
    assert scaled.value == pytest.approx(3.0 * base.value, rel=1e-12)


def test_estimators_never_read_latent_columns(rng):
    spec = dgp.make_spec("linear_endo_tau")
    data = dgp.sample(spec, 1000, 3)
    poisoned = DataSet(y=data.y, d=data.d, x=data.x,
                       latent={"eps": np.full(1000, 1e6),
                               "eta": np.full(1000, -1e6)})
    a = est.clar_continuous(data, 0.0, 0.0)
    b = est.clar_continuous(poisoned, 0.0, 0.0)
    assert a.value == b.value
    assert est.ols_fit(data).tau == est.ols_fit(poisoned).tau


# --- binary-treatment estimators ---------------------------------------


def test_binary_estimators_on_noiseless_effect(rng):
    data = dgp.sample(dgp.make_spec("binary_dx"), 3000, 0)
    # effect at x is exactly x
    out = est.clar_binary(data, 0.5)
    assert out.value == pytest.approx(0.5, abs=0.05)


def test_binary_estimators_reject_continuous_treatment(rng):
    with pytest.raises(ConfigurationError):
        est.clar_binary(linear_data(rng), 0.0)
    with pytest.raises(ConfigurationError):
        est.lar_binary(dgp.sample(dgp.make_spec("binary_dx"), 200, 0), 0.5)


def test_one_arm_dataset_raises_overlap_error(rng):
    x = rng.normal(size=200)
    data = DataSet(y=x, d=np.ones(200), x=x[:, None])
    with pytest.raises(OverlapError):
        est.clar_binary(data, 0.0)
    with pytest.raises(OverlapError):
        est.lar_binary(data, 1.0)


def test_att_binary_identical_to_lar_at_one(rng):
    data = dgp.sample(dgp.make_spec("binary_constant"), 2000, 1)
    a = est.att(data)
    l = est.lar_binary(data, 1.0)
    assert a.value == l.value
    assert a.estimator_id == "att"
    assert l.estimator_id == "lar_binary"


def test_ate_requires_d_for_continuous(rng):
    with pytest.raises(ConfigurationError):
        est.ate(linear_data(rng))


def test_att_ate_on_constant_effect_binary(rng):
    data = dgp.sample(dgp.make_spec("binary_constant"), 4000, 2)
    assert est.att(data).value == pytest.approx(1.5, abs=0.1)
    assert est.ate(data).value == pytest.approx(1.5, abs=0.1)


# --- control variable ---------------------------------------------------


def test_control_variable_bounded_and_roughly_uniform(rng):
    data = dgp.sample(dgp.make_spec("triangular_endo"), 2000, 0)
    v_col = est.construct_control_variable(data)
    assert np.nanmin(v_col.v) >= 0.0 and np.nanmax(v_col.v) <= 1.0
    assert abs(np.nanmean(v_col.v) - 0.5) < 0.03
    assert v_col.trimmed.shape == (2000,)


def test_control_variable_requires_instrument(rng):
    with pytest.raises(ConfigurationError):
        est.construct_control_variable(linear_data(rng))


def test_triangular_estimators_exact_on_noiseless_model(rng):
    spec = dgp.make_spec("noiseless_triangular")
    data = dgp.sample(spec, 500, 0)
    v_col = est.construct_control_variable(data)
    assert est.clar_triangular(data, v_col, 0.0, 0.0).value == \
        pytest.approx(spec.true_tau, abs=1e-6)
    assert est.lar_triangular(data, v_col, 0.0).value == \
        pytest.approx(spec.true_tau, abs=1e-6)


def test_triangular_estimators_validate_column_length(rng):
    data = dgp.sample(dgp.make_spec("noiseless_triangular"), 300, 0)
    v_col = est.construct_control_variable(data)
    short = est.ControlVariableColumn(
        v=v_col.v[:100], trimmed=v_col.trimmed[:100],
        bandwidths=v_col.bandwidths, d_bandwidth=v_col.d_bandwidth)
    with pytest.raises(ConfigurationError):
        est.clar_triangular(data, short, 0.0, 0.0)


def test_control_variable_column_rejects_out_of_range():
    with pytest.raises(ConfigurationError):
        est.ControlVariableColumn(v=np.array([0.5, 1.2]),
                                  trimmed=np.zeros(2, bool),
                                  bandwidths=(1.0,), d_bandwidth=1.0)


# --- counterfactual means ----------------------------------------------


def test_counterfactual_mean_binary_equals_treated_mean(rng):
    data = dgp.sample(dgp.make_spec("binary_dx"), 2000, 0)
    cm = est.counterfactual_mean(data, 1.0, 1.0)
    assert cm.value == pytest.approx(data.y[data.d == 1.0].mean(), abs=0.05)


def test_att_continuous_on_noiseless_linear(rng):
    data = linear_data(rng, n=600)
    out = est.att(data, d=0.0)
    assert out.value == pytest.approx(2.0, abs=0.05)


def test_counterfactual_mean_unknown_mode(rng):
    with pytest.raises(ConfigurationError):
        est.counterfactual_mean(linear_data(rng), 0.0, 0.0, mode="plugin")
    with pytest.raises(ConfigurationError):
        est.counterfactual_mean(linear_data(rng), 0.0, 0.0, mode="triangular")


# --- bootstrap ---------------------------------------------------------


def test_bootstrap_requires_enough_replicates(rng):
    with pytest.raises(ValueError):
        est.bootstrap_se(lambda d: est.ols_fit(d).tau, linear_data(rng), b=10)


def test_bootstrap_deterministic_and_positive(rng):
    data = linear_data(rng, noise=0.5)
    se1 = est.bootstrap_se(lambda d: est.ols_fit(d).tau, data, b=60, seed=3)
    se2 = est.bootstrap_se(lambda d: est.ols_fit(d).tau, data, b=60, seed=3)
    assert se1 == se2 and se1 > 0
    # bootstrap SE should be in the ballpark of the analytic OLS SE
    analytic = est.ols_fit(data).se[1]
    assert se1 == pytest.approx(analytic, rel=0.5)


def test_bootstrap_surfaces_unstable_estimators(rng):
    data = linear_data(rng)
    calls = iter(range(10 ** 6))

    def flaky(d):
        if next(calls) % 3 == 0:
            raise SupportError("boom")
        return est.ols_fit(d).tau

    with pytest.raises(InstabilityError):
        est.bootstrap_se(flaky, data, b=60, seed=0)


# --- estimate container ------------------------------------------------


def test_estimate_record_and_csv_row(rng):
    out = est.clar_continuous(linear_data(rng), 0.0, 0.0).with_se(0.1)
    rec = out.to_record()
    assert rec["estimator_id"] == "clar_continuous"
    assert rec["se"] == 0.1
    row = out.csv_row()
    assert row.startswith("clar_continuous,")
    assert len(row.split(",")) == 7
