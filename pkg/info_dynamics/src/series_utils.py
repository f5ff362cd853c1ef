"""
Contenedores de series de tiempo, embebimientos con retardo, ventanas
móviles y diferenciación.
"""
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.aux_utils import DataError, ConfigError, header_lines, read_csv, save_csv


@dataclass(frozen=True)
class TimeSeries:
    """
    Observaciones escalares sobre una grilla uniforme. El índice i corresponde
    al instante start_time + i·period (milisegundos desde epoch).
    """
    values: np.ndarray
    start_time: int = 0
    period: int = 1
    label: str = ""

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 1:
            raise DataError(f"La serie '{self.label}' debe ser un vector no vacío")
        if self.period <= 0:
            raise DataError(f"Periodo inválido ({self.period}) en '{self.label}'")
        if vals.flags.writeable:
            vals = vals.copy()
            vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "start_time", int(self.start_time))
        object.__setattr__(self, "period", int(self.period))

    def __len__(self):
        return self.values.size

    @property
    def timestamps(self) -> np.ndarray:
        return self.start_time + np.arange(len(self)) * self.period

    def same_grid(self, other: "TimeSeries") -> bool:
        return len(self) == len(other) and self.start_time == other.start_time and self.period == other.period

    def with_values(self, values, label: Optional[str] = None) -> "TimeSeries":
        return TimeSeries(values, self.start_time, self.period, self.label if label is None else label)

    def slice(self, start: int, stop: int) -> "TimeSeries":
        # vista: el arreglo de solo lectura se comparte, no se copia
        return TimeSeries(self.values[start:stop], self.start_time + start * self.period, self.period, self.label)


@dataclass(frozen=True)
class EmbeddedDataset:
    """Matriz conjunta de muestras (X_t, X^(k)_{t-1}, Y^(l)_{t-δ}, Z^(m)_{t-1})."""
    target: np.ndarray
    target_past: np.ndarray
    source_past: Optional[np.ndarray]
    cond_past: Optional[np.ndarray]
    n: int


@dataclass(frozen=True)
class WindowSpec:
    width: int
    step: int

    def __post_init__(self):
        if self.width < 2 or self.step < 1 or self.step > self.width:
            raise ConfigError(f"Ventana inválida: width={self.width}, step={self.step}")


def _lag_matrix(values: np.ndarray, first_lag: int, length: int, t0: int, n: int) -> np.ndarray:
    # columna j contiene values[t - first_lag - j] para t = t0..t0+n-1
    cols = [values[t0 - first_lag - j: t0 - first_lag - j + n] for j in range(length)]
    return np.column_stack(cols)


def embedding_start(k: int, l: Optional[int] = None, delay: Optional[int] = None, m: Optional[int] = None) -> int:
    """Primer índice t utilizable como objetivo; n = Q - embedding_start(...)."""
    terms = [k]
    if l is not None:
        terms.append(l + delay)
    if m is not None:
        terms.append(m)
    return max(terms)


def build_embedding(
    x: TimeSeries,
    y: Optional[TimeSeries] = None,
    z: Optional[Sequence[TimeSeries]] = None,
    k: int = 1,
    l: int = 1,
    m: int = 1,
    delay: int = 1,
) -> EmbeddedDataset:
    """
    Construye el conjunto embebido para TE / AIS.

    Parámetros:
    - x: serie objetivo.
    - y: serie fuente (opcional), con historia l y retardo `delay`.
    - z: series condicionales (opcional), cada una con historia m.

    Retorna:
    - EmbeddedDataset con las filas materializadas (copias contiguas).
    """
    z = list(z or [])
    if k < 1 or (y is not None and l < 1) or (z and m < 1) or delay < 1:
        raise ConfigError(f"Parámetros de embebimiento inválidos: k={k}, l={l}, m={m}, delay={delay}")
    for other in ([y] if y is not None else []) + z:
        if not x.same_grid(other):
            raise DataError(f"Las series '{x.label}' y '{other.label}' no comparten grilla o longitud")

    t0 = embedding_start(k, l if y is not None else None, delay, m if z else None)
    n = len(x) - t0
    if n <= 0:
        raise DataError(f"Serie '{x.label}' demasiado corta ({len(x)}) para el embebimiento (inicio {t0})")

    target = np.array(x.values[t0:t0 + n])
    target_past = _lag_matrix(x.values, 1, k, t0, n)
    source_past = _lag_matrix(y.values, delay, l, t0, n) if y is not None else None
    cond_past = np.hstack([_lag_matrix(s.values, 1, m, t0, n) for s in z]) if z else None
    return EmbeddedDataset(target, target_past, source_past, cond_past, n)


def difference(x: TimeSeries) -> TimeSeries:
    if len(x) < 2:
        raise DataError(f"No se puede diferenciar '{x.label}': longitud < 2")
    return TimeSeries(np.diff(x.values), x.start_time + x.period, x.period, f"{x.label}|diff")


def cumulative_sum(dx: TimeSeries, anchor: float) -> TimeSeries:
    """Inversa de `difference`: reconstruye la serie anclada en su primer valor."""
    values = np.concatenate([[anchor], anchor + np.cumsum(dx.values)])
    label = dx.label[:-5] if dx.label.endswith("|diff") else dx.label
    return TimeSeries(values, dx.start_time - dx.period, dx.period, label)


def rolling_windows(x: TimeSeries, spec: WindowSpec) -> list:
    if spec.width > len(x):
        raise DataError(f"Ventana de {spec.width} pasos más larga que la serie '{x.label}' ({len(x)})")
    count = (len(x) - spec.width) // spec.step + 1
    return [x.slice(j * spec.step, j * spec.step + spec.width) for j in range(count)]


# === Entrada / salida CSV ===

def read_series_csv(path, label: Optional[str] = None) -> TimeSeries:
    df = read_csv(path)
    if list(df.columns[:2]) != ["timestamp_ms", "value"]:
        raise DataError(f"{path}: se esperaban columnas 'timestamp_ms,value'")
    if df.empty:
        raise DataError(f"{path}: archivo sin observaciones")
    ts = pd.to_numeric(df["timestamp_ms"], errors="coerce")
    vals = pd.to_numeric(df["value"], errors="coerce")
    bad = df.index[ts.isna() | vals.isna()]
    if len(bad):
        # +2: fila de columnas y numeración desde 1
        offset = header_lines(path) + 2
        raise DataError(f"{path}: filas mal formadas en las líneas {[int(i) + offset for i in bad[:10]]}")
    ts = ts.to_numpy(dtype=np.int64)
    period = int(ts[1] - ts[0]) if ts.size > 1 else 1
    if ts.size > 1 and np.any(np.diff(ts) != period):
        raise DataError(f"{path}: la grilla de tiempo no es uniforme")
    if label is None:
        label = os.path.splitext(os.path.basename(path))[0]
    return TimeSeries(vals.to_numpy(dtype=float), int(ts[0]), period, label)


def write_series_csv(series: TimeSeries, path, header: dict):
    df = pd.DataFrame({"timestamp_ms": series.timestamps, "value": series.values})
    save_csv(df, path, header)
