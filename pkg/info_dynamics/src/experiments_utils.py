"""
Experimentos de cambio de régimen sobre el VAR acoplado: ensambles con
semillas independientes, comparación antes/después de t_C con prueba
pareada y barridos de parámetros de la sigmoide.
"""
import itertools
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy import stats

from src.aux_utils import ConfigError, log, map_parallel
from src.estimators import (
    EstimatorConfig,
    active_information_storage,
    ksg_cmi,
    local_values,
    transfer_entropy,
)
from src.kernels_utils import RngHandle
from src.models_utils import SigmoidSpec, VarParams, simulate_var
from src.series_utils import TimeSeries, embedding_start

SCENARIOS = ("causal_driver", "hidden_driver", "uncertainty")
MEASURES = ("te", "ais", "mi")


@dataclass(frozen=True)
class RegimeScenario:
    name: str
    params: VarParams
    t_C: int
    margin: int = 100


def build_scenario(
    name: str,
    T: int = 4000,
    t_C: int = None,
    s: float = 1.0,
    b: float = 0.05,
    offset: float = None,
    variant: str = "main",
    margin: int = 100,
    constant: float = None,
) -> RegimeScenario:
    """
    Escenarios de la sigmoide:
    - causal_driver: C(t) escalón, K = 0.01
    - hidden_driver: K(t) escalón, C = 0.5 constante
    - uncertainty: β(t) escalón en ambos procesos, C = K = 0.3 (variant="main") o 1 (variant="strong")

    `constant` reemplaza la intensidad del acople que no cambia en el tiempo.
    """
    t_C = T // 2 if t_C is None else t_C
    base = VarParams(alpha1=0.2, alpha2=0.2, beta1=1.0, beta2=1.0, d=0.5, T=T)
    if name == "causal_driver":
        step = SigmoidSpec(s, b, t_C, 0.0 if offset is None else offset)
        params = replace(base, C=step, K=0.01 if constant is None else constant)
    elif name == "hidden_driver":
        step = SigmoidSpec(s, b, t_C, 0.01 if offset is None else offset)
        params = replace(base, K=step, C=0.5 if constant is None else constant)
    elif name == "uncertainty":
        if variant not in ("main", "strong"):
            raise ConfigError(f"Variante desconocida: {variant}")
        strength = (0.3 if variant == "main" else 1.0) if constant is None else constant
        step = SigmoidSpec(s, b, t_C, 0.5 if offset is None else offset)
        params = replace(base, beta1=step, beta2=step, C=strength, K=strength)
    else:
        raise ConfigError(f"Escenario desconocido '{name}' (opciones: {SCENARIOS})")
    if not margin < t_C < T - margin:
        raise ConfigError("t_C debe dejar al menos `margin` pasos a cada lado")
    return RegimeScenario(name, params, t_C, margin)


def _segment_measures(x: TimeSeries, y: TimeSeries, cfg: EstimatorConfig) -> dict:
    return {
        "te": transfer_entropy(x, y, cfg).value,
        "ais": active_information_storage(y, cfg).value,
        "mi": ksg_cmi(x.values, y.values, K=cfg.K).value,
    }


def run_regime_ensemble(
    scenario: RegimeScenario, n_runs: int, seed: int, cfg: EstimatorConfig, workers: int = 1
) -> pd.DataFrame:
    """TE X→Y, AIS(Y) y MI(X;Y) antes y después de t_C para cada corrida del ensamble."""
    rng = RngHandle(seed)
    cut_before = scenario.t_C - scenario.margin
    cut_after = scenario.t_C + scenario.margin

    def one(run):
        x, y = simulate_var(scenario.params, rng.child(run))
        rows = []
        for regime, (lo, hi) in (("before", (0, cut_before)), ("after", (cut_after, len(x)))):
            vals = _segment_measures(x.slice(lo, hi), y.slice(lo, hi), cfg)
            rows.append({"run": run, "regime": regime, **vals})
        return rows

    rows = [row for chunk in map_parallel(one, range(n_runs), workers) for row in chunk]
    log(f"Ensamble '{scenario.name}' completo ({n_runs} corridas)", "success")
    return pd.DataFrame(rows, columns=["run", "regime", *MEASURES])


def regime_ordering(ensemble: pd.DataFrame, measure: str) -> dict:
    """Dirección del cambio después - antes y p-valor de Wilcoxon pareado entre corridas."""
    wide = ensemble.pivot(index="run", columns="regime", values=measure)
    before, after = wide["before"].to_numpy(), wide["after"].to_numpy()
    diff = after - before
    try:
        p_value = float(stats.wilcoxon(after, before).pvalue)
    except ValueError:
        # todas las diferencias nulas
        p_value = 1.0
    if not np.isfinite(p_value):
        p_value = 1.0
    direction = "up" if np.mean(diff) > 0 else "down" if np.mean(diff) < 0 else "flat"
    return {
        "measure": measure,
        "mean_before": float(before.mean()),
        "mean_after": float(after.mean()),
        "direction": direction,
        "p_value": p_value,
    }


def summarize_ensemble(ensemble: pd.DataFrame) -> pd.DataFrame:
    return pd.DataFrame([regime_ordering(ensemble, m) for m in MEASURES])


def local_te_profile(x: TimeSeries, y: TimeSeries, cfg: EstimatorConfig, width: int) -> TimeSeries:
    """Media móvil centrada de la TE local X→Y, indexada en los instantes del objetivo."""
    locals_ = local_values("te", [x, y], cfg)
    t0 = embedding_start(cfg.k, cfg.l, cfg.delay)
    smooth = pd.Series(locals_).rolling(width, center=True, min_periods=1).mean().to_numpy()
    return TimeSeries(smooth, y.start_time + t0 * y.period, y.period, f"local_te:{x.label}->{y.label}")


def run_sweep(config: dict, workers: int = 1) -> pd.DataFrame:
    """
    Barrido sobre la grilla (s, b, c) de la sigmoide para un escenario.

    Parámetros:
    - config: dict con claves scenario, T, t_C, margin, n_runs, seed, variant, offset,
      estimator {K, k} y grid {s: [...], b: [...], c: [...]}, con c la
      intensidad del acople constante.
    """
    try:
        name = config["scenario"]
        grid = config["grid"]
        n_runs = int(config.get("n_runs", 100))
    except KeyError as e:
        raise ConfigError(f"Configuración de barrido sin la clave {e}") from e
    est = config.get("estimator", {})
    cfg = EstimatorConfig(K=int(est.get("K", 4)), k=int(est.get("k", 1)))
    seed = int(config.get("seed", 0))

    rows = []
    points = list(itertools.product(grid.get("s", [1.0]), grid.get("b", [0.05]), grid.get("c", [None])))
    for i, (s, b, c) in enumerate(points):
        scenario = build_scenario(
            name,
            T=int(config.get("T", 4000)),
            t_C=config.get("t_C"),
            s=float(s),
            b=float(b),
            offset=config.get("offset"),
            variant=config.get("variant", "main"),
            margin=int(config.get("margin", 100)),
            constant=None if c is None else float(c),
        )
        ensemble = run_regime_ensemble(scenario, n_runs, seed + i, cfg, workers)
        for row in summarize_ensemble(ensemble).to_dict("records"):
            rows.append({"scenario": name, "s": s, "b": b, "c": c, **row})
        log(f"Punto {i + 1}/{len(points)} del barrido listo", "info")
    return pd.DataFrame(rows)
