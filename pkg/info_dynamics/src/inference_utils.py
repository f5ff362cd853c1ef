"""
Inferencia estadística: pruebas con series sustitutas, control FDR de
Benjamini–Yekutieli, diagnóstico de sesgo del KSG y pruebas ADF / KS.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import stats
from statsmodels.stats.multitest import multipletests
from statsmodels.tsa.stattools import adfuller

from src.aux_utils import ConfigError, DataError, log, map_parallel
from src.config import DEFAULT_ALPHA, DEFAULT_SURROGATES
from src.estimators import EstimateResult, EstimatorConfig, Significance, transfer_entropy
from src.kernels_utils import RngHandle
from src.series_utils import TimeSeries

SURROGATE_KINDS = ("circular_shift", "shuffle")


@dataclass(frozen=True)
class SignificanceSpec:
    n_surrogates: int = DEFAULT_SURROGATES
    alpha: float = DEFAULT_ALPHA
    surrogate_kind: str = "circular_shift"

    def __post_init__(self):
        if self.n_surrogates < 1:
            raise ConfigError("n_surrogates debe ser ≥ 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha debe estar en (0, 1)")
        if self.surrogate_kind not in SURROGATE_KINDS:
            raise ConfigError(f"Tipo de sustituto desconocido: {self.surrogate_kind}")


@dataclass(frozen=True)
class BiasRow:
    K: int
    slice_count: int
    slice_length: int
    mean_te: float
    std_te: float
    std_defined: bool


@dataclass(frozen=True)
class BiasProfile:
    rows: tuple = field(default_factory=tuple)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "K": [r.K for r in self.rows],
                "n_slice": [r.slice_length for r in self.rows],
                "mean_te": [r.mean_te for r in self.rows],
                "std_te": [r.std_te for r in self.rows],
                "slice_count": [r.slice_count for r in self.rows],
                "std_defined": [r.std_defined for r in self.rows],
            }
        )


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    reject_at_5pct: bool
    p_value: float
    critical_value: float
    max_lag: int


# === Sustitutos ===

def make_surrogate(source: TimeSeries, kind: str, rng: RngHandle) -> TimeSeries:
    """Copia de la fuente con el acople destruido (desplazamiento circular o permutación)."""
    gen = rng.generator()
    n = len(source)
    if kind == "circular_shift":
        lo = max(n // 4, 1)
        hi = max((3 * n) // 4, lo)
        offset = int(gen.integers(lo, hi + 1))
        values = np.roll(source.values, offset)
    elif kind == "shuffle":
        values = gen.permutation(source.values)
    else:
        raise ConfigError(f"Tipo de sustituto desconocido: {kind}")
    return source.with_values(values)


def surrogate_test(
    estimate_fn: Callable,
    source: Union[TimeSeries, Sequence[TimeSeries]],
    spec: SignificanceSpec,
    rng: RngHandle,
    observed: Optional[float] = None,
    workers: int = 1,
):
    """
    Prueba de significancia por sustitutos.

    Parámetros:
    - estimate_fn: función determinista de la(s) fuente(s) que devuelve un valor en nats.
    - source: serie fuente, o lista de fuentes (cada una recibe su propio sustituto).
    - rng: flujo base; el sustituto i usa el flujo hijo (i,).
    - observed: valor ya estimado sobre los datos originales (se calcula si es None).

    Retorna:
    - (p_value, significant) con p = (1 + #{sustituto ≥ observado}) / (1 + n_surrogates).
    """
    multi = not isinstance(source, TimeSeries)
    if observed is None:
        observed = estimate_fn(source)

    def one(i):
        child = rng.child(i)
        if multi:
            surr = [make_surrogate(s, spec.surrogate_kind, child.child(j)) for j, s in enumerate(source)]
        else:
            surr = make_surrogate(source, spec.surrogate_kind, child)
        return estimate_fn(surr)

    null = np.asarray(map_parallel(one, range(spec.n_surrogates), workers), dtype=float)
    p_value = (1.0 + np.sum(null >= observed)) / (1.0 + spec.n_surrogates)
    return float(p_value), bool(p_value <= spec.alpha)


def with_significance(result: EstimateResult, p_value: float, spec: SignificanceSpec) -> EstimateResult:
    sig = Significance(p_value, spec.n_surrogates, spec.alpha, bool(p_value <= spec.alpha))
    return replace(result, significance=sig)


def benjamini_yekutieli(p_values: Sequence[float], q: float) -> np.ndarray:
    """Máscara de hipótesis rechazadas con el procedimiento BY (c(m) = Σ 1/i)."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        raise DataError("Benjamini–Yekutieli requiere al menos un p-valor")
    if not 0 < q < 1:
        raise ConfigError("q debe estar en (0, 1)")
    reject, _, _, _ = multipletests(p, alpha=q, method="fdr_by")
    return np.asarray(reject, dtype=bool)


def by_min_surrogates(n_tests: int, q: float) -> int:
    """
    Menor número de sustitutos S con el que el p-valor mínimo 1/(S+1) pasa el
    umbral BY de rango 1, q / (m·c(m)), para m pruebas.
    """
    if n_tests < 1:
        raise ConfigError("Se requiere al menos una prueba")
    if not 0 < q < 1:
        raise ConfigError("q debe estar en (0, 1)")
    c_m = float(np.sum(1.0 / np.arange(1, n_tests + 1)))
    return int(np.ceil(n_tests * c_m / q)) - 1


# === Diagnóstico de sesgo del KSG ===

def subsample_bias_profile(
    source: TimeSeries,
    target: TimeSeries,
    cfg: EstimatorConfig,
    K_list: Sequence[int],
    max_slices: int,
) -> BiasProfile:
    """
    TE estimada sobre 1..max_slices tajadas disjuntas de igual tamaño para cada K;
    reporta la media y la desviación estándar entre tajadas.
    """
    if max_slices < 1 or not K_list:
        raise ConfigError("Se requiere max_slices ≥ 1 y al menos un K")
    shortest = len(target) // max_slices
    if shortest <= max(K_list) + cfg.k + cfg.l + cfg.delay:
        raise DataError(f"Serie demasiado corta ({len(target)}) para {max_slices} tajadas")

    rows = []
    for K in K_list:
        kcfg = replace(cfg, K=int(K))
        for count in range(1, max_slices + 1):
            length = len(target) // count
            values = [
                transfer_entropy(source.slice(i * length, (i + 1) * length),
                                 target.slice(i * length, (i + 1) * length), kcfg).value
                for i in range(count)
            ]
            std_defined = count > 1
            std = float(np.std(values, ddof=1)) if std_defined else 0.0
            rows.append(BiasRow(int(K), count, length, float(np.mean(values)), std, std_defined))
        log(f"Perfil de sesgo K={K} listo", "info")
    return BiasProfile(tuple(rows))


# === Pruebas clásicas ===

def adf_test(x: TimeSeries, max_lag: Optional[int] = None) -> AdfResult:
    """ADF con constante y rezago fijo (por defecto ⌊(n-1)^{1/3}⌋), comparado con el valor crítico al 5%."""
    values = np.asarray(x.values, dtype=float)
    n = values.size
    if max_lag is None:
        max_lag = int(np.floor((n - 1) ** (1.0 / 3.0)))
    if n <= max_lag + 10:
        raise DataError(f"Serie '{x.label}' demasiado corta para ADF con max_lag={max_lag}")
    if np.ptp(values) == 0:
        raise DataError(f"Serie '{x.label}' constante: la regresión ADF es degenerada")
    stat, pvalue, usedlag, _, crit = adfuller(values, maxlag=max_lag, regression="c", autolag=None)
    return AdfResult(float(stat), bool(stat < crit["5%"]), float(pvalue), float(crit["5%"]), int(usedlag))


def ks_2sample(a, b):
    """Kolmogorov–Smirnov de dos muestras, p-valor asintótico."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise DataError("La prueba KS requiere dos muestras no vacías")
    res = stats.ks_2samp(a, b, alternative="two-sided", method="asymp")
    return float(res.statistic), float(res.pvalue)
