import numpy as np
import pandas as pd
import pytest
from pandas.testing import assert_frame_equal

from src.aux_utils import ConfigError
from src.estimators import EstimatorConfig
from src.experiments_utils import (
    MEASURES,
    build_scenario,
    local_te_profile,
    regime_ordering,
    run_regime_ensemble,
    run_sweep,
    summarize_ensemble,
)
from src.models_utils import SigmoidSpec


def test_scenario_presets():
    causal = build_scenario("causal_driver", T=4000)
    assert causal.t_C == 2000
    assert causal.params.C == SigmoidSpec(1.0, 0.05, 2000, 0.0)
    assert causal.params.K == 0.01

    hidden = build_scenario("hidden_driver", T=4000, s=2.0)
    assert hidden.params.K.s == 2.0
    assert hidden.params.C == 0.5

    main = build_scenario("uncertainty")
    strong = build_scenario("uncertainty", variant="strong")
    assert main.params.beta1 == main.params.beta2
    assert (main.params.C, main.params.K) == (0.3, 0.3)
    assert (strong.params.C, strong.params.K) == (1.0, 1.0)


def test_scenario_constant_override():
    assert build_scenario("causal_driver", constant=0.2).params.K == 0.2
    assert build_scenario("hidden_driver", constant=0.1).params.C == 0.1
    assert build_scenario("uncertainty", constant=0.7).params.C == 0.7


def test_scenario_errors():
    with pytest.raises(ConfigError):
        build_scenario("feedback")
    with pytest.raises(ConfigError):
        build_scenario("uncertainty", variant="otra")
    with pytest.raises(ConfigError):
        build_scenario("causal_driver", T=1000, t_C=950)


def test_ensemble_shape_and_worker_invariance():
    scenario = build_scenario("causal_driver", T=600)
    cfg = EstimatorConfig()
    serial = run_regime_ensemble(scenario, n_runs=3, seed=5, cfg=cfg, workers=1)
    threaded = run_regime_ensemble(scenario, n_runs=3, seed=5, cfg=cfg, workers=2)
    assert list(serial.columns) == ["run", "regime", *MEASURES]
    assert len(serial) == 6
    assert set(serial["regime"]) == {"before", "after"}
    assert_frame_equal(serial, threaded)


def test_regime_ordering_on_synthetic_frame():
    gen = np.random.default_rng(0)
    before = gen.normal(0.1, 0.01, 30)
    frame = pd.DataFrame({
        "run": np.repeat(np.arange(30), 2),
        "regime": ["before", "after"] * 30,
        "te": np.column_stack([before, before + 0.05]).ravel(),
        "ais": np.column_stack([before, before - 0.05]).ravel(),
        "mi": np.column_stack([before, before]).ravel(),
    })
    up = regime_ordering(frame, "te")
    assert up["direction"] == "up" and up["p_value"] < 0.01
    assert up["mean_after"] == pytest.approx(up["mean_before"] + 0.05)
    assert regime_ordering(frame, "ais")["direction"] == "down"
    flat = regime_ordering(frame, "mi")
    assert flat["direction"] == "flat" and flat["p_value"] == 1.0
    assert list(summarize_ensemble(frame)["measure"]) == list(MEASURES)


def test_local_te_profile_alignment(coupled_pair):
    x, y = coupled_pair
    cfg = EstimatorConfig()
    profile = local_te_profile(x, y, cfg, width=50)
    assert len(profile) == len(y) - 2
    assert profile.start_time == y.start_time + 2 * y.period
    assert profile.label == "local_te:X->Y"
    assert np.mean(profile.values) > 0.15


def test_small_sweep():
    config = {
        "scenario": "hidden_driver",
        "T": 600,
        "margin": 50,
        "n_runs": 2,
        "seed": 1,
        "grid": {"s": [1.0], "b": [0.05, 0.5], "c": [0.5]},
    }
    table = run_sweep(config)
    assert len(table) == 2 * len(MEASURES)
    assert set(table["b"]) == {0.05, 0.5}
    assert (table["c"] == 0.5).all()
    assert {"scenario", "s", "b", "c", "measure", "direction", "p_value"} <= set(table.columns)
    with pytest.raises(ConfigError):
        run_sweep({"grid": {}})


@pytest.mark.slow
def test_causal_step_raises_transfer_entropy():
    scenario = build_scenario("causal_driver", T=4000)
    ensemble = run_regime_ensemble(scenario, 100, 20240101, EstimatorConfig(), workers=4)
    te = regime_ordering(ensemble, "te")
    assert te["direction"] == "up" and te["p_value"] < 0.01


@pytest.mark.slow
def test_hidden_driver_step_raises_mutual_information():
    scenario = build_scenario("hidden_driver", T=4000)
    ensemble = run_regime_ensemble(scenario, 100, 20240101, EstimatorConfig(), workers=4)
    mi = regime_ordering(ensemble, "mi")
    assert mi["direction"] == "up" and mi["p_value"] < 0.01
