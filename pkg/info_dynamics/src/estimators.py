"""
Medidas de dinámica de información: información mutua (condicional),
transferencia de entropía (aparente, condicional y colectiva),
almacenamiento activo de información y multi-información.

Todas las medidas se estiman en nats con el estimador KSG de vecinos más
cercanos (norma máxima) o, como línea base, bajo el supuesto gaussiano lineal.
"""
from dataclasses import dataclass, field, replace, asdict
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from src.aux_utils import ConfigError, DataError, NumericError
from src.config import DEFAULT_K, DEFAULT_SEED, HISTORY_TIE_TOL
from src.kernels_utils import KnnIndex, PointCloud, RngHandle, add_jitter, digamma
from src.series_utils import TimeSeries, build_embedding

KINDS = ("ksg", "gaussian")
JITTER_STREAM = 9_999


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str = "ksg"
    K: int = DEFAULT_K
    k: int = 1
    l: int = 1
    m: int = 1
    delay: int = 1
    jitter: bool = False
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"Estimador desconocido '{self.kind}' (opciones: {KINDS})")
        if self.K < 1 or min(self.k, self.l, self.m) < 1 or self.delay < 1:
            raise ConfigError(
                f"Configuración inválida: K={self.K}, k={self.k}, l={self.l}, m={self.m}, delay={self.delay}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Significance:
    p_value: float
    n_surrogates: int
    alpha: float
    significant: bool
    # decisión tras Benjamini–Yekutieli; None si no se aplicó
    by_rejected: Optional[bool] = None

    def passed(self, use_by: bool = True) -> bool:
        if use_by and self.by_rejected is not None:
            return self.by_rejected
        return self.significant


@dataclass(frozen=True)
class EstimateResult:
    measure: str
    value: float
    config: EstimatorConfig
    n: int
    locals: Optional[np.ndarray] = None
    significance: Optional[Significance] = None
    terms: tuple = field(default_factory=tuple)

    def is_significant(self, use_by: bool = True) -> bool:
        return self.significance is not None and self.significance.passed(use_by)

    def to_json(self, include_locals: bool = False) -> dict:
        out = {
            "measure": self.measure,
            "value_nats": float(self.value),
            "n": int(self.n),
            "config": self.config.to_dict(),
        }
        if self.significance is not None:
            out["p_value"] = float(self.significance.p_value)
            out["n_surrogates"] = int(self.significance.n_surrogates)
            out["significant"] = bool(self.significance.significant)
            if self.significance.by_rejected is not None:
                out["by_significant"] = bool(self.significance.by_rejected)
        if self.terms:
            out["terms"] = [{"source": label, "value_nats": float(v)} for label, v in self.terms]
        if include_locals and self.locals is not None:
            out["locals"] = [float(v) for v in self.locals]
        return out


# === Preparación de bloques ===

def _as_block(values, n: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if n is not None and arr.shape[0] != n:
        raise DataError(f"Número de muestras distinto entre bloques ({arr.shape[0]} vs {n})")
    return arr


def _standardized_blocks(blocks, jitter: bool, seed: int):
    """Concatena, opcionalmente agrega jitter, estandariza y vuelve a separar."""
    sizes = [b.shape[1] for b in blocks]
    joint = np.hstack(blocks)
    if jitter:
        joint = add_jitter(joint, RngHandle(seed, JITTER_STREAM))
    std = joint.std(axis=0)
    if np.any(std == 0):
        raise DataError("Entrada con varianza cero; use la opción de jitter para datos discretizados")
    joint = (joint - joint.mean(axis=0)) / std
    return np.split(joint, np.cumsum(sizes)[:-1], axis=1)


# === Estimadores base ===

def ksg_cmi(x, y, z=None, K: int = DEFAULT_K, jitter: bool = False, seed: int = DEFAULT_SEED) -> EstimateResult:
    """
    I(X;Y|Z) con KSG (algoritmo 1) en norma máxima. Sin Z se reduce a
    I(X;Y) = ψ(K) + ψ(n) - <ψ(n_x+1) + ψ(n_y+1)>; con Z se usa
    ψ(K) - <ψ(n_xz+1) + ψ(n_yz+1) - ψ(n_z+1)>. Los conteos marginales son
    estrictos (distancia < ε). El valor no se recorta a cero.
    """
    xb = _as_block(x)
    n = xb.shape[0]
    yb = _as_block(y, n)
    zb = _as_block(z, n) if z is not None else None
    if n <= K:
        raise DataError(f"Se requieren más de K={K} muestras (hay {n})")

    blocks = [xb, yb] + ([zb] if zb is not None else [])
    blocks = _standardized_blocks(blocks, jitter, seed)
    xs, ys = blocks[0], blocks[1]
    cfg = EstimatorConfig(kind="ksg", K=K, jitter=jitter, seed=seed)

    joint = PointCloud.from_blocks(*blocks)
    eps = KnnIndex(joint).kth_radius(K)

    if zb is None:
        n_x = KnnIndex(PointCloud(xs)).count_within(eps)
        n_y = KnnIndex(PointCloud(ys)).count_within(eps)
        local = digamma(K) + digamma(n) - digamma(n_x + 1.0) - digamma(n_y + 1.0)
        measure = "mi"
    else:
        zs = blocks[2]
        n_xz = KnnIndex(PointCloud.from_blocks(xs, zs)).count_within(eps)
        n_yz = KnnIndex(PointCloud.from_blocks(ys, zs)).count_within(eps)
        n_z = KnnIndex(PointCloud(zs)).count_within(eps)
        local = digamma(K) - digamma(n_xz + 1.0) - digamma(n_yz + 1.0) + digamma(n_z + 1.0)
        measure = "cmi"

    local = np.asarray(local, dtype=float)
    return EstimateResult(measure, float(np.mean(local)), cfg, n, locals=local)


def _logdet(cov: np.ndarray) -> float:
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise NumericError("Matriz de covarianza singular en el estimador gaussiano")
    return float(logdet)


def _gaussian_logpdf(block: np.ndarray) -> np.ndarray:
    mean = block.mean(axis=0)
    cov = np.atleast_2d(np.cov(block, rowvar=False, bias=True))
    _logdet(cov)
    return stats.multivariate_normal(mean=mean, cov=cov).logpdf(block).reshape(-1)


def gaussian_cmi(x, y, z=None) -> EstimateResult:
    """
    I(X;Y|Z) bajo normalidad conjunta: ½[log|Σ_xz| + log|Σ_yz| - log|Σ_z| - log|Σ_xyz|].
    Los valores locales usan las densidades gaussianas ajustadas por máxima verosimilitud.
    """
    xb = _as_block(x)
    n = xb.shape[0]
    yb = _as_block(y, n)
    zb = _as_block(z, n) if z is not None else None
    dims = xb.shape[1] + yb.shape[1] + (zb.shape[1] if zb is not None else 0)
    if n <= dims + 2:
        raise DataError(f"Se requieren más de {dims + 2} muestras para el estimador gaussiano (hay {n})")

    def cov_logdet(*blocks):
        joint = np.hstack(blocks)
        return _logdet(np.atleast_2d(np.cov(joint, rowvar=False, bias=True)))

    if zb is None:
        value = 0.5 * (cov_logdet(xb) + cov_logdet(yb) - cov_logdet(xb, yb))
        local = _gaussian_logpdf(np.hstack([xb, yb])) - _gaussian_logpdf(xb) - _gaussian_logpdf(yb)
        measure = "mi"
    else:
        value = 0.5 * (cov_logdet(xb, zb) + cov_logdet(yb, zb) - cov_logdet(zb) - cov_logdet(xb, yb, zb))
        local = (
            _gaussian_logpdf(np.hstack([xb, yb, zb]))
            + _gaussian_logpdf(zb)
            - _gaussian_logpdf(np.hstack([xb, zb]))
            - _gaussian_logpdf(np.hstack([yb, zb]))
        )
        measure = "cmi"
    return EstimateResult(measure, float(value), EstimatorConfig(kind="gaussian"), n, locals=local)


def kl_entropy(samples, K: int = DEFAULT_K) -> float:
    """Entropía diferencial de Kozachenko–Leonenko en norma máxima (nats)."""
    cloud = PointCloud(samples)
    if cloud.n <= K:
        raise DataError(f"Se requieren más de K={K} muestras (hay {cloud.n})")
    eps = KnnIndex(cloud).kth_radius(K)
    if np.any(eps <= 0):
        raise DataError("Muestras repetidas: la entropía KL no está definida")
    return float(digamma(cloud.n) - digamma(K) + cloud.d * np.mean(np.log(2.0 * eps)))


def _cmi(x, y, z, cfg: EstimatorConfig) -> EstimateResult:
    if cfg.kind == "gaussian":
        return gaussian_cmi(x, y, z)
    return ksg_cmi(x, y, z, K=cfg.K, jitter=cfg.jitter, seed=cfg.seed)


# === Medidas sobre series de tiempo ===

def transfer_entropy(source: TimeSeries, target: TimeSeries, cfg: EstimatorConfig) -> EstimateResult:
    """T_{Y→X} = I(Y^(l)_{t-δ}; X_t | X^(k)_{t-1})."""
    emb = build_embedding(target, source, None, k=cfg.k, l=cfg.l, delay=cfg.delay)
    res = _cmi(emb.source_past, emb.target, emb.target_past, cfg)
    return replace(res, measure="te", config=cfg)


def conditional_te(
    source: TimeSeries, target: TimeSeries, conditionals: Sequence[TimeSeries], cfg: EstimatorConfig
) -> EstimateResult:
    """T_{Y→X|Z} = I(Y^(l)_{t-δ}; X_t | X^(k)_{t-1}, Z^(m)_{t-1})."""
    if not conditionals:
        return transfer_entropy(source, target, cfg)
    emb = build_embedding(target, source, list(conditionals), k=cfg.k, l=cfg.l, m=cfg.m, delay=cfg.delay)
    res = _cmi(emb.source_past, emb.target, np.hstack([emb.target_past, emb.cond_past]), cfg)
    return replace(res, measure="cte", config=cfg)


def collective_te(
    target: TimeSeries,
    sources: Sequence[TimeSeries],
    cfg: EstimatorConfig,
    delays: Optional[Sequence[int]] = None,
) -> EstimateResult:
    """
    Suma incremental T_X = Σ_β T_{Y^β→X | Y^1..Y^{β-1}} en el orden recibido.
    El desglose por término queda en `terms`. `delays` permite un retardo por fuente.
    """
    if not sources:
        raise ConfigError("La TE colectiva requiere al menos una fuente")
    if delays is not None and len(delays) != len(sources):
        raise ConfigError("Debe haber un retardo por fuente")

    terms = []
    n_used = None
    for beta, src in enumerate(sources):
        term_cfg = cfg if delays is None else replace(cfg, delay=int(delays[beta]))
        res = conditional_te(src, target, list(sources[:beta]), term_cfg)
        terms.append((src.label, res.value))
        n_used = res.n if n_used is None else min(n_used, res.n)
    total = float(sum(v for _, v in terms))
    return EstimateResult("collective_te", total, cfg, n_used, terms=tuple(terms))


def active_information_storage(x: TimeSeries, cfg: EstimatorConfig) -> EstimateResult:
    """A_X = I(X^(k)_{t-1}; X_t)."""
    emb = build_embedding(x, k=cfg.k)
    res = _cmi(emb.target_past, emb.target, None, cfg)
    return replace(res, measure="ais", config=cfg)


def multi_information(series: Sequence[TimeSeries], cfg: EstimatorConfig) -> EstimateResult:
    """
    I(X^1;...;X^N) = Σ_α H(X^α) - H(X^1..X^N). La entropía conjunta usa el
    radio del K-ésimo vecino; las marginales usan el estimador de
    Kozachenko–Leonenko evaluado en ese mismo radio, de modo que los términos
    logarítmicos se cancelan y queda ψ(K) + (N-1)ψ(n) - <Σ_α ψ(n_α+1)>.
    Para N=2 coincide con la información mutua KSG.
    """
    if len(series) < 2:
        raise ConfigError("La multi-información requiere al menos dos series")
    first = series[0]
    for s in series[1:]:
        if not first.same_grid(s):
            raise DataError(f"Las series '{first.label}' y '{s.label}' no comparten grilla")

    if cfg.kind == "gaussian":
        data = np.column_stack([s.values for s in series])
        corr = np.corrcoef(data, rowvar=False)
        value = -0.5 * _logdet(corr)
        return EstimateResult("multi_information", float(value), cfg, data.shape[0])

    n = len(first)
    if n <= cfg.K:
        raise DataError(f"Se requieren más de K={cfg.K} muestras (hay {n})")
    blocks = _standardized_blocks([_as_block(s.values) for s in series], cfg.jitter, cfg.seed)
    eps = KnnIndex(PointCloud.from_blocks(*blocks)).kth_radius(cfg.K)
    marginal = sum(digamma(KnnIndex(PointCloud(b)).count_within(eps) + 1.0) for b in blocks)
    local = np.asarray(digamma(cfg.K) + (len(series) - 1) * digamma(n) - marginal, dtype=float)
    return EstimateResult("multi_information", float(np.mean(local)), cfg, n, locals=local)


def local_values(measure: str, inputs: Sequence[TimeSeries], cfg: EstimatorConfig) -> np.ndarray:
    """
    Valores locales (por muestra) de TE, AIS o MI; su media es la estimación global.

    Parámetros:
    - measure: "te" (inputs = [fuente, objetivo]), "ais" (inputs = [serie]) o "mi" (inputs = N series).
    """
    if measure == "te":
        res = transfer_entropy(inputs[0], inputs[1], cfg)
    elif measure == "ais":
        res = active_information_storage(inputs[0], cfg)
    elif measure == "mi":
        res = multi_information(list(inputs), cfg)
    else:
        raise ConfigError(f"Medida local no soportada: {measure}")
    if res.locals is None:
        raise ConfigError(f"El estimador '{cfg.kind}' no produce valores locales para '{measure}'")
    return res.locals


# === Selección de parámetros ===

def history_scan(x: TimeSeries, kappa_max: int, cfg: EstimatorConfig) -> list:
    if kappa_max < 1:
        raise ConfigError("kappa_max debe ser ≥ 1")
    return [active_information_storage(x, replace(cfg, k=kappa)).value for kappa in range(1, kappa_max + 1)]


def select_history(x: TimeSeries, kappa_max: int, cfg: EstimatorConfig, tol: float = HISTORY_TIE_TOL) -> int:
    """
    k = argmax_κ AIS(κ). Los κ cuya AIS queda a menos de `tol` del máximo
    cuentan como empate y gana el más pequeño.
    """
    values = np.asarray(history_scan(x, kappa_max, cfg))
    return int(np.flatnonzero(values >= values.max() - tol)[0]) + 1


def select_delay(source: TimeSeries, target: TimeSeries, delay_max: int, cfg: EstimatorConfig):
    """δ que maximiza la TE en [1, delay_max], junto con la estimación ganadora."""
    if delay_max < 1:
        raise ConfigError("delay_max debe ser ≥ 1")
    best = None
    for delay in range(1, delay_max + 1):
        res = transfer_entropy(source, target, replace(cfg, delay=delay))
        if best is None or res.value > best[1].value:
            best = (delay, res)
    return best
