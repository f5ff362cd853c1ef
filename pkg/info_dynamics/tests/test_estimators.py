import numpy as np
import pytest

import src.estimators as estimators
from conftest import coupled_values
from src.aux_utils import ConfigError, DataError
from src.estimators import (
    EstimatorConfig,
    active_information_storage,
    collective_te,
    conditional_te,
    gaussian_cmi,
    kl_entropy,
    ksg_cmi,
    local_values,
    multi_information,
    select_delay,
    select_history,
    transfer_entropy,
)
from src.series_utils import TimeSeries

MI_RHO_06 = -0.5 * np.log(1 - 0.6**2)  # 0.22314


def gaussian_pair(n, rho, seed=0):
    gen = np.random.default_rng(seed)
    cov = [[1.0, rho], [rho, 1.0]]
    return gen.multivariate_normal([0.0, 0.0], cov, size=n).T


def ar1(n, a, seed=0, burn=500):
    gen = np.random.default_rng(seed)
    e = gen.standard_normal(n + burn)
    x = np.zeros(n + burn)
    for t in range(1, n + burn):
        x[t] = a * x[t - 1] + e[t]
    return x[burn:]


def test_ksg_mi_bivariate_gaussian():
    x, y = gaussian_pair(10_000, 0.6)
    res = ksg_cmi(x, y, K=4)
    assert res.measure == "mi"
    assert res.n == 10_000
    assert res.value == pytest.approx(MI_RHO_06, abs=0.02)


def test_ksg_mi_independent_near_zero():
    gen = np.random.default_rng(3)
    res = ksg_cmi(gen.standard_normal(3000), gen.standard_normal(3000), K=4)
    assert abs(res.value) < 0.02


def test_ksg_cmi_conditioning_removes_common_driver():
    gen = np.random.default_rng(5)
    z = gen.standard_normal(4000)
    x = z + 0.5 * gen.standard_normal(4000)
    y = z + 0.5 * gen.standard_normal(4000)
    assert ksg_cmi(x, y).value > 0.4
    assert abs(ksg_cmi(x, y, z).value) < 0.03


def test_ksg_requires_more_samples_than_k():
    with pytest.raises(DataError):
        ksg_cmi(np.arange(4.0), np.arange(4.0) ** 2, K=4)


def test_zero_variance_input_rejected():
    with pytest.raises(DataError, match="varianza cero"):
        ksg_cmi(np.ones(100), np.arange(100.0))


def test_jitter_allows_discretized_input():
    gen = np.random.default_rng(2)
    x = gen.integers(0, 3, 500).astype(float)
    y = x + gen.integers(0, 2, 500)
    plain = ksg_cmi(x, y)
    jittered = ksg_cmi(x, y, jitter=True, seed=11)
    assert np.isfinite(plain.value) and np.isfinite(jittered.value)
    assert jittered.value == ksg_cmi(x, y, jitter=True, seed=11).value


def test_gaussian_estimator_matches_closed_form():
    x, y = gaussian_pair(20_000, 0.6, seed=4)
    res = gaussian_cmi(x, y)
    assert res.value == pytest.approx(MI_RHO_06, abs=0.01)
    assert np.mean(res.locals) == pytest.approx(res.value, abs=1e-9)


def test_kl_entropy_of_standard_normal():
    sample = np.random.default_rng(8).standard_normal(10_000)
    assert kl_entropy(sample) == pytest.approx(0.5 * np.log(2 * np.pi * np.e), abs=0.03)


def test_ais_of_ar1():
    x = TimeSeries(ar1(10_000, 0.6))
    res = active_information_storage(x, EstimatorConfig(k=1))
    assert res.measure == "ais"
    assert res.value == pytest.approx(MI_RHO_06, abs=0.02)


def test_transfer_entropy_direction(coupled_pair):
    x, y = coupled_pair
    cfg = EstimatorConfig()
    forward = transfer_entropy(x, y, cfg)
    backward = transfer_entropy(y, x, cfg)
    assert forward.measure == "te"
    # k = l = δ = 1: el primer objetivo utilizable es t = 2
    assert forward.n == len(x) - 2
    assert forward.value > 0.15
    assert abs(backward.value) < 0.04


def test_gaussian_te_of_linear_coupling():
    x_vals, y_vals = coupled_values(8000, coupling=0.8, seed=1)
    x, y = TimeSeries(x_vals), TimeSeries(y_vals)
    te = transfer_entropy(x, y, EstimatorConfig(kind="gaussian"))
    # Y_t = 0.8 X_{t-1} + ε: TE = ½ ln(1 + 0.64)
    assert te.value == pytest.approx(0.5 * np.log(1.64), abs=0.02)


def test_conditional_te_without_conditionals_is_plain_te(coupled_pair):
    x, y = coupled_pair
    cfg = EstimatorConfig()
    assert conditional_te(x, y, [], cfg).value == transfer_entropy(x, y, cfg).value


def test_conditional_te_removes_common_driver():
    gen = np.random.default_rng(12)
    n = 3000
    z = gen.standard_normal(n)
    x = z + 0.3 * gen.standard_normal(n)
    y = np.concatenate([[0.0], 0.9 * z[:-1]]) + 0.3 * gen.standard_normal(n)
    X, Y, Z = TimeSeries(x, label="X"), TimeSeries(y, label="Y"), TimeSeries(z, label="Z")
    cfg = EstimatorConfig()
    # X solo copia a Z: su TE aparente hacia Y desaparece al condicionar en Z
    assert transfer_entropy(X, Y, cfg).value > 0.5
    assert abs(conditional_te(X, Y, [Z], cfg).value) < 0.05


def test_collective_te_single_source_equals_te(coupled_pair):
    x, y = coupled_pair
    cfg = EstimatorConfig()
    res = collective_te(y, [x], cfg)
    assert res.value == pytest.approx(transfer_entropy(x, y, cfg).value)
    assert res.terms[0][0] == "X"


def test_collective_te_is_sum_of_terms():
    gen = np.random.default_rng(4)
    n = 2000
    a, b = gen.standard_normal(n), gen.standard_normal(n)
    target = np.concatenate([[0.0], 0.6 * a[:-1] + 0.6 * b[:-1]]) + 0.5 * gen.standard_normal(n)
    A, B, T = TimeSeries(a, label="A"), TimeSeries(b, label="B"), TimeSeries(target, label="T")
    cfg = EstimatorConfig()
    res = collective_te(T, [A, B], cfg, delays=[1, 1])
    assert [label for label, _ in res.terms] == ["A", "B"]
    assert res.value == pytest.approx(sum(v for _, v in res.terms))
    assert res.terms[0][1] == pytest.approx(transfer_entropy(A, T, cfg).value)
    assert res.value > transfer_entropy(A, T, cfg).value
    with pytest.raises(ConfigError):
        collective_te(T, [A, B], cfg, delays=[1])
    with pytest.raises(ConfigError):
        collective_te(T, [], cfg)


def test_multi_information_two_series_equals_mi():
    x, y = gaussian_pair(2000, 0.5, seed=6)
    cfg = EstimatorConfig()
    mi = multi_information([TimeSeries(x), TimeSeries(y)], cfg)
    assert mi.value == pytest.approx(ksg_cmi(x, y, K=cfg.K).value, abs=1e-12)


def test_multi_information_three_equicorrelated():
    rho = 0.5
    cov = np.full((3, 3), rho) + (1 - rho) * np.eye(3)
    expected = -0.5 * np.log(np.linalg.det(cov))
    data = np.random.default_rng(9).multivariate_normal(np.zeros(3), cov, size=8000)
    series = [TimeSeries(col) for col in data.T]
    gaussian = multi_information(series, EstimatorConfig(kind="gaussian"))
    ksg = multi_information(series, EstimatorConfig())
    assert gaussian.value == pytest.approx(expected, abs=0.01)
    assert ksg.value == pytest.approx(expected, abs=0.05)


def test_multi_information_requires_shared_grid():
    with pytest.raises(ConfigError):
        multi_information([TimeSeries(np.arange(10.0))], EstimatorConfig())
    with pytest.raises(DataError):
        multi_information([TimeSeries(np.arange(10.0)), TimeSeries(np.arange(9.0))], EstimatorConfig())


@pytest.mark.parametrize("seed", range(10))
def test_local_values_average_to_global(seed):
    gen = np.random.default_rng(seed)
    n = int(gen.integers(200, 600))
    x = TimeSeries(gen.standard_normal(n))
    y = TimeSeries(np.concatenate([[0.0], 0.5 * x.values[:-1]]) + gen.standard_normal(n))
    cfg = EstimatorConfig(k=int(gen.integers(1, 3)))
    assert np.mean(local_values("te", [x, y], cfg)) == pytest.approx(transfer_entropy(x, y, cfg).value, abs=1e-9)
    assert np.mean(local_values("ais", [y], cfg)) == pytest.approx(
        active_information_storage(y, cfg).value, abs=1e-9
    )
    assert np.mean(local_values("mi", [x, y], cfg)) == pytest.approx(multi_information([x, y], cfg).value, abs=1e-9)


def test_local_values_unknown_measure():
    with pytest.raises(ConfigError):
        local_values("entropy", [TimeSeries(np.arange(10.0))], EstimatorConfig())


def test_select_history_prefers_smaller_on_ties(monkeypatch):
    monkeypatch.setattr(estimators, "history_scan", lambda x, kappa_max, cfg: [0.1, 0.3, 0.3, 0.2])
    assert select_history(TimeSeries(np.arange(10.0)), 4, EstimatorConfig()) == 2


def test_select_history_tie_margin(monkeypatch):
    monkeypatch.setattr(estimators, "history_scan", lambda x, kappa_max, cfg: [0.295, 0.3, 0.1])
    x = TimeSeries(np.arange(10.0))
    assert select_history(x, 3, EstimatorConfig()) == 1
    assert select_history(x, 3, EstimatorConfig(), tol=0.0) == 2


@pytest.mark.parametrize("seed", [0, 1])
def test_select_history_on_noise_returns_one(seed):
    x = TimeSeries(np.random.default_rng(seed).standard_normal(8192))
    assert select_history(x, 4, EstimatorConfig()) == 1


def test_select_delay_recovers_lag():
    x_vals, y_vals = coupled_values(3000, coupling=0.9, seed=21, lag=3)
    delay, res = select_delay(TimeSeries(x_vals), TimeSeries(y_vals), 5, EstimatorConfig())
    assert delay == 3
    assert res.config.delay == 3
    with pytest.raises(ConfigError):
        select_delay(TimeSeries(x_vals), TimeSeries(y_vals), 0, EstimatorConfig())


def test_estimator_config_validation():
    with pytest.raises(ConfigError):
        EstimatorConfig(kind="binning")
    with pytest.raises(ConfigError):
        EstimatorConfig(K=0)
    with pytest.raises(ConfigError):
        EstimatorConfig(delay=0)


def test_result_json_shape(coupled_pair):
    x, y = coupled_pair
    res = transfer_entropy(x, y, EstimatorConfig())
    out = res.to_json(include_locals=True)
    assert out["measure"] == "te"
    assert len(out["locals"]) == res.n
    assert "p_value" not in out
    assert res.to_json()["config"]["K"] == 4


def test_gaussian_estimator_misses_nonlinear_dependence():
    x = np.random.default_rng(17).standard_normal(4000)
    y = x**2
    # correlación nula: el estimador gaussiano no ve la dependencia, el KSG sí
    assert abs(gaussian_cmi(x, y).value) < 0.01
    assert ksg_cmi(x, y).value > 0.5


def test_collective_te_duplicated_source_adds_nothing():
    gen = np.random.default_rng(23)
    n = 2000
    a = gen.standard_normal(n)
    target = np.concatenate([[0.0], 0.7 * a[:-1]]) + 0.5 * gen.standard_normal(n)
    A, T = TimeSeries(a, label="A"), TimeSeries(target, label="T")
    copy = TimeSeries(a.copy(), label="A_copia")
    res = collective_te(T, [A, copy], EstimatorConfig())
    assert res.terms[0][1] > 0.2
    assert abs(res.terms[1][1]) < 0.01
