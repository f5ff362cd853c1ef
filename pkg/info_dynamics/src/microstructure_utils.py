"""
Ingesta de trades y snapshots del libro de órdenes, alineación de
timestamps a la grilla de minutos y cálculo de observables:
precio medio, retornos, spread e imbalance de órdenes (en base y en quote).
"""
import os
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import pandas as pd
from scipy import stats

from src.aux_utils import DataError, ConfigError, log
from src.config import DAY_MS, KS_ALPHA, LEAD_LAG_THRESHOLD_S, MINUTE_MS
from src.inference_utils import ks_2sample
from src.series_utils import TimeSeries

OBSERVABLES = ("mid_price", "returns", "spread", "imbalance_base", "imbalance_quote")


@dataclass(frozen=True)
class TradeRecord:
    timestamp: int
    price: float
    volume: float
    sign: int

    def __post_init__(self):
        if self.price <= 0 or self.volume <= 0:
            raise DataError(f"Trade inválido en {self.timestamp}: precio y volumen deben ser > 0")
        if self.sign not in (-1, 1):
            raise DataError(f"Trade inválido en {self.timestamp}: el signo debe ser ±1")


@dataclass(frozen=True)
class LobSnapshot:
    timestamp: int
    best_bid: float
    best_ask: float

    def __post_init__(self):
        if self.best_bid <= 0 or self.best_ask <= 0:
            raise DataError(f"Snapshot inválido en {self.timestamp}: precios deben ser > 0")

    @property
    def crossed(self) -> bool:
        return self.best_ask < self.best_bid


@dataclass(frozen=True)
class ObservableSet:
    market: str
    mid_price: TimeSeries
    returns: TimeSeries
    spread: TimeSeries
    imbalance_base: TimeSeries
    imbalance_quote: TimeSeries
    gap_minutes: int = 0
    rejected_rows: int = 0

    def get(self, name: str) -> TimeSeries:
        if name not in OBSERVABLES:
            raise ConfigError(f"Observable desconocido: {name}")
        return getattr(self, name)


@dataclass(frozen=True)
class OffsetDiagnostics:
    capture_histogram: pd.DataFrame
    offsets_s: np.ndarray
    mean_s: float
    skewness: float
    lead_lag_flag: bool

    def summary(self) -> dict:
        return {
            "n_minutes": int(self.offsets_s.size),
            "mean_offset_s": self.mean_s,
            "skewness": self.skewness,
            "lead_lag_flag": self.lead_lag_flag,
        }


Trades = Union[pd.DataFrame, Sequence[TradeRecord]]


# === Lectura estricta ===

def _strict_numeric(df: pd.DataFrame, columns, path) -> pd.DataFrame:
    out = {}
    for col in columns:
        values = pd.to_numeric(df[col], errors="coerce")
        bad = df.index[values.isna()]
        if len(bad):
            # +2: encabezado y numeración desde 1
            raise DataError(f"{path}: valor no numérico en '{col}', líneas {[int(i) + 2 for i in bad[:10]]}")
        out[col] = values
    return pd.DataFrame(out)


def read_trades_csv(path) -> pd.DataFrame:
    """
    Lee `timestamp_ms,price,volume,side` (side ∈ {buy, sell}).

    Retorna:
    - DataFrame con columnas timestamp_ms, price, volume, sign ordenado por tiempo.
    """
    if not os.path.exists(path):
        raise DataError(f"No existe el archivo {path}")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = {"timestamp_ms", "price", "volume", "side"} - set(raw.columns)
    if missing:
        raise DataError(f"{path}: faltan columnas {sorted(missing)}")
    df = _strict_numeric(raw, ["timestamp_ms", "price", "volume"], path)

    side = raw["side"].str.strip().str.lower()
    bad = raw.index[~side.isin(["buy", "sell"])]
    if len(bad):
        raise DataError(f"{path}: 'side' debe ser buy/sell, líneas {[int(i) + 2 for i in bad[:10]]}")
    bad = raw.index[(df["price"] <= 0) | (df["volume"] <= 0)]
    if len(bad):
        raise DataError(f"{path}: precio o volumen no positivo, líneas {[int(i) + 2 for i in bad[:10]]}")

    df["timestamp_ms"] = df["timestamp_ms"].astype(np.int64)
    df["sign"] = np.where(side == "buy", 1, -1)
    if np.any(np.diff(df["timestamp_ms"].to_numpy()) < 0):
        raise DataError(f"{path}: los trades no están ordenados por tiempo")
    return df


def read_lob_csv(path) -> list:
    """Lee `timestamp_ms,best_bid,best_ask`; niveles más profundos se aceptan y se ignoran."""
    if not os.path.exists(path):
        raise DataError(f"No existe el archivo {path}")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = {"timestamp_ms", "best_bid", "best_ask"} - set(raw.columns)
    if missing:
        raise DataError(f"{path}: faltan columnas {sorted(missing)}")
    df = _strict_numeric(raw, ["timestamp_ms", "best_bid", "best_ask"], path)
    bad = raw.index[(df["best_bid"] <= 0) | (df["best_ask"] <= 0)]
    if len(bad):
        raise DataError(f"{path}: precios no positivos, líneas {[int(i) + 2 for i in bad[:10]]}")
    return [
        LobSnapshot(int(t), float(b), float(a))
        for t, b, a in zip(df["timestamp_ms"], df["best_bid"], df["best_ask"])
    ]


def _trade_arrays(trades: Trades):
    if isinstance(trades, pd.DataFrame):
        return (
            trades["timestamp_ms"].to_numpy(dtype=np.int64),
            trades["price"].to_numpy(dtype=float),
            trades["volume"].to_numpy(dtype=float),
            trades["sign"].to_numpy(dtype=float),
        )
    ts = np.array([t.timestamp for t in trades], dtype=np.int64)
    price = np.array([t.price for t in trades], dtype=float)
    volume = np.array([t.volume for t in trades], dtype=float)
    sign = np.array([t.sign for t in trades], dtype=float)
    return ts, price, volume, sign


# === Alineación ===

def floor_align(snapshots: Sequence[LobSnapshot]) -> pd.DataFrame:
    """
    Lleva cada snapshot al minuto ⌊t⌋. Si dos caen en el mismo minuto se
    conserva el primero; los minutos faltantes se rellenan hacia adelante
    con la marca `gap`.

    Retorna:
    - DataFrame indexado por minute_ms con best_bid, best_ask, capture_ms, gap.
    """
    if not snapshots:
        raise DataError("No hay snapshots para alinear")
    ts = np.array([s.timestamp for s in snapshots], dtype=np.int64)
    if np.any(np.diff(ts) <= 0):
        raise DataError("Los timestamps de los snapshots deben ser estrictamente crecientes")

    minute = (ts // MINUTE_MS) * MINUTE_MS
    _, first = np.unique(minute, return_index=True)
    kept = pd.DataFrame(
        {
            "best_bid": [snapshots[i].best_bid for i in first],
            "best_ask": [snapshots[i].best_ask for i in first],
            "capture_ms": ts[first],
        },
        index=pd.Index(minute[first], name="minute_ms"),
    )
    grid = np.arange(minute[0], minute[-1] + MINUTE_MS, MINUTE_MS, dtype=np.int64)
    aligned = kept.reindex(grid)
    aligned.index.name = "minute_ms"
    aligned["gap"] = aligned["capture_ms"].isna()
    aligned = aligned.ffill()
    aligned["capture_ms"] = aligned["capture_ms"].astype(np.int64)
    n_gaps = int(aligned["gap"].sum())
    if n_gaps:
        log(f"{n_gaps} minutos sin snapshot rellenados hacia adelante", "warning")
    return aligned


# === Imbalance de órdenes ===

def interval_imbalance(trades: Trades, starts, ends):
    """Σ ε_i v_i y Σ ε_i v_i p_i sobre intervalos semiabiertos (start, end]."""
    ts, price, volume, sign = _trade_arrays(trades)
    if np.any(np.diff(ts) < 0):
        raise DataError("Los trades deben estar ordenados por tiempo")
    signed = sign * volume
    cum_base = np.concatenate([[0.0], np.cumsum(signed)])
    cum_quote = np.concatenate([[0.0], np.cumsum(signed * price)])
    hi = np.searchsorted(ts, np.asarray(ends), side="right")
    lo = np.searchsorted(ts, np.asarray(starts), side="right")
    return cum_base[hi] - cum_base[lo], cum_quote[hi] - cum_quote[lo]


def order_imbalance(trades: Trades, grid, agg_window: int = MINUTE_MS):
    """𝒪_t y 𝒪_{$,t} sobre (t - agg_window, t] para cada t de la grilla; intervalo vacío → 0."""
    if agg_window <= 0:
        raise ConfigError("agg_window debe ser positivo")
    grid = np.asarray(grid, dtype=np.int64)
    return interval_imbalance(trades, grid - agg_window, grid)


# === Observables ===

def observables(
    snapshots: Sequence[LobSnapshot],
    trades: Trades,
    market: str = "",
    agg_window: int = MINUTE_MS,
    mode: str = "minute",
) -> ObservableSet:
    """
    Calcula p = (p^a + p^b)/2, r_t = p_t - p_{t-1}, s = p^a - p^b y el imbalance.

    Parámetros:
    - mode: "minute" agrega trades en (τ - agg_window, τ]; "snapshot" usa los
      intervalos entre capturas reales (t1, t2] antes de llevarlas al minuto.

    Todas las series comparten la grilla desde el segundo minuto (donde r está definido).
    """
    if mode not in ("minute", "snapshot"):
        raise ConfigError(f"Modo de imbalance desconocido: {mode}")
    valid = [s for s in snapshots if not s.crossed]
    rejected = len(snapshots) - len(valid)
    if rejected:
        log(f"{market}: {rejected} snapshots con ask < bid descartados", "warning")

    aligned = floor_align(valid)
    if len(aligned) < 3:
        raise DataError(f"{market}: se requieren al menos 3 minutos de libro")
    grid = aligned.index.to_numpy(dtype=np.int64)
    bid = aligned["best_bid"].to_numpy()
    ask = aligned["best_ask"].to_numpy()
    mid = (ask + bid) / 2.0
    spread = ask - bid
    returns = np.diff(mid)

    if mode == "minute":
        base, quote = order_imbalance(trades, grid[1:], agg_window)
    else:
        capture = aligned["capture_ms"].to_numpy(dtype=np.int64)
        base, quote = interval_imbalance(trades, capture[:-1], capture[1:])

    start = int(grid[1])
    prefix = f"{market}:" if market else ""
    return ObservableSet(
        market=market,
        mid_price=TimeSeries(mid[1:], start, MINUTE_MS, f"{prefix}mid_price"),
        returns=TimeSeries(returns, start, MINUTE_MS, f"{prefix}returns"),
        spread=TimeSeries(spread[1:], start, MINUTE_MS, f"{prefix}spread"),
        imbalance_base=TimeSeries(base, start, MINUTE_MS, f"{prefix}imbalance_base"),
        imbalance_quote=TimeSeries(quote, start, MINUTE_MS, f"{prefix}imbalance_quote"),
        gap_minutes=int(aligned["gap"].iloc[1:].sum()),
        rejected_rows=rejected,
    )


# === Diagnósticos de alineación ===

def snapshot_offset_diagnostics(market_a: Sequence[LobSnapshot], market_b: Sequence[LobSnapshot]) -> OffsetDiagnostics:
    """
    Histograma del segundo de captura dentro del minuto por mercado y
    distribución de t^a - t^b (segundos) en los minutos compartidos.
    """
    ts_a = np.array([s.timestamp for s in market_a], dtype=np.int64)
    ts_b = np.array([s.timestamp for s in market_b], dtype=np.int64)
    if ts_a.size == 0 or ts_b.size == 0:
        raise DataError("Ambos mercados deben tener snapshots")

    hist = pd.DataFrame({
        "second": np.arange(60),
        "count_a": np.bincount((ts_a % MINUTE_MS) // 1000, minlength=60)[:60],
        "count_b": np.bincount((ts_b % MINUTE_MS) // 1000, minlength=60)[:60],
    })

    aligned_a = floor_align(market_a)
    aligned_b = floor_align(market_b)
    cap_a = aligned_a.loc[~aligned_a["gap"], "capture_ms"]
    cap_b = aligned_b.loc[~aligned_b["gap"], "capture_ms"]
    shared = cap_a.index.intersection(cap_b.index)
    if len(shared) == 0:
        raise DataError("Los mercados no comparten minutos")

    offsets = (cap_a.loc[shared].to_numpy() - cap_b.loc[shared].to_numpy()) / 1000.0
    mean = float(offsets.mean())
    skew = float(stats.skew(offsets)) if offsets.std() > 0 else 0.0
    flag = abs(mean) > LEAD_LAG_THRESHOLD_S
    if flag:
        log(f"Desfase sistemático entre mercados: {mean:.2f} s", "warning")
    return OffsetDiagnostics(hist, offsets, mean, skew, flag)


# === Resumen de imbalance por régimen ===

def _daily_sums(trades: Trades) -> pd.DataFrame:
    ts, price, volume, sign = _trade_arrays(trades)
    df = pd.DataFrame({"day": ts // DAY_MS, "base": sign * volume, "quote": sign * volume * price})
    return df.groupby("day", sort=True)[["base", "quote"]].sum()


def imbalance_regime_summary(trades_by_market: dict, split_time: int, alpha: float = KS_ALPHA) -> pd.DataFrame:
    """
    Promedio de las sumas diarias de 𝒪 y 𝒪_$ antes/después de `split_time` y
    prueba KS de dos colas entre ambas muestras diarias.
    """
    rows = []
    for market in sorted(trades_by_market):
        daily = _daily_sums(trades_by_market[market])
        after_mask = daily.index.to_numpy() * DAY_MS >= split_time
        before, after = daily[~after_mask], daily[after_mask]
        if before.empty or after.empty:
            raise DataError(f"{market}: un régimen quedó sin días de trades")

        row = {
            "market": market,
            "days_before": len(before),
            "days_after": len(after),
            "mean_imbalance_quote_before": float(before["quote"].mean()),
            "mean_imbalance_base_before": float(before["base"].mean()),
            "mean_imbalance_quote_after": float(after["quote"].mean()),
            "mean_imbalance_base_after": float(after["base"].mean()),
        }
        if len(before) < 2 or len(after) < 2:
            log(f"{market}: un solo día en un régimen, se omite la prueba KS", "warning")
            row.update({"ks_p_quote": None, "ks_p_base": None, "ks_reject_quote": None, "ks_reject_base": None})
        else:
            _, p_quote = ks_2sample(before["quote"], after["quote"])
            _, p_base = ks_2sample(before["base"], after["base"])
            row.update({
                "ks_p_quote": p_quote,
                "ks_p_base": p_base,
                "ks_reject_quote": p_quote < alpha,
                "ks_reject_base": p_base < alpha,
            })
        rows.append(row)
    return pd.DataFrame(rows)
