"""
Estadísticas agregadas por ventana: TE aparente y colectiva del sistema,
multi-información, AIS promedio, promedios por mercado antes/después de
un corte y el multigrafo de observables con sus pesos ω.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.aux_utils import ConfigError, DataError
from src.estimators import EstimateResult


@dataclass(frozen=True)
class WindowResult:
    index: int
    start_time: int
    end_time: int
    # (mercado fuente, mercado destino, observable) -> TE
    pair_te: dict = field(default_factory=dict)
    # (mercado, observable fuente, observable destino) -> TE
    cross_te: dict = field(default_factory=dict)
    # (mercado, observable) -> AIS / TE colectiva
    ais: dict = field(default_factory=dict)
    collective: dict = field(default_factory=dict)
    # observable -> multi-información entre mercados
    multi_info: dict = field(default_factory=dict)
    history: dict = field(default_factory=dict)
    delays: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Edge:
    src_market: str
    dst_market: str
    src_obs: str
    dst_obs: str
    value: float


@dataclass(frozen=True)
class InfoGraph:
    markets: tuple
    observables: tuple
    edges: tuple = ()

    def __post_init__(self):
        n = len(self.markets)
        for e in self.edges:
            if e.src_obs == e.dst_obs and e.src_market == e.dst_market:
                raise DataError(f"Arista inválida: {e.src_market}/{e.src_obs} hacia sí misma")
            if e.src_obs != e.dst_obs and e.src_market != e.dst_market:
                raise DataError("Las aristas entre observables deben quedar dentro de un mercado")
        for obs in self.observables:
            loops = sum(1 for e in self.edges if e.src_obs == obs and e.dst_obs == obs)
            if loops > n * (n - 1):
                raise DataError(f"Más de N(N-1) auto-lazos para '{obs}'")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(e.src_market, e.dst_market, e.src_obs, e.dst_obs, e.value) for e in self.edges],
            columns=["src_market", "dst_market", "src_obs", "dst_obs", "te_nats"],
        )


def _contributes(result: Optional[EstimateResult], use_by: bool) -> bool:
    if result is None:
        return False
    return result.significance is None or result.significance.passed(use_by)


def _masked(result: Optional[EstimateResult], use_by: bool) -> float:
    return float(result.value) if _contributes(result, use_by) else 0.0


# === Totales del sistema ===

def total_apparent_te(window: WindowResult, observable: str, use_by: bool = True) -> float:
    """T^{app,sys}: suma de las TE significativas entre pares ordenados de mercados."""
    return float(sum(
        _masked(res, use_by) for (src, dst, obs), res in window.pair_te.items() if obs == observable and src != dst
    ))


def total_collective_te(window: WindowResult, observable: str, use_by: bool = True) -> float:
    """T^{coll,sys} = Σ_α T_{X^α}."""
    return float(sum(_masked(res, use_by) for (_, obs), res in window.collective.items() if obs == observable))


def system_multi_information(window: WindowResult, observable: str, use_by: bool = True) -> float:
    return _masked(window.multi_info.get(observable), use_by)


def average_ais(window: WindowResult, observable: str, use_by: bool = True) -> float:
    """A^{sys}: promedio de la AIS sobre mercados (no significativa cuenta como 0)."""
    values = [_masked(res, use_by) for (_, obs), res in window.ais.items() if obs == observable]
    if not values:
        raise DataError(f"La ventana {window.index} no tiene AIS para '{observable}'")
    return float(np.mean(values))


def system_summary(results: Sequence[WindowResult], observables: Sequence[str], use_by: bool = True) -> pd.DataFrame:
    rows = []
    for w in results:
        for obs in observables:
            rows.append({
                "window": w.index,
                "start_time": w.start_time,
                "observable": obs,
                "T_app_sys": total_apparent_te(w, obs, use_by),
                "T_coll_sys": total_collective_te(w, obs, use_by),
                "I_sys": system_multi_information(w, obs, use_by),
                "A_sys": average_ais(w, obs, use_by),
            })
    return pd.DataFrame(rows)


def market_averages(
    results: Sequence[WindowResult], split_time: int, observable: str, use_by: bool = True
) -> pd.DataFrame:
    """
    Promedios por mercado de A_{X^α} y T^{coll}_{X^α} sobre las ventanas que
    terminan antes de `split_time` y las que empiezan después (las que lo
    cruzan se excluyen).
    """
    if not results:
        raise DataError("No hay ventanas para promediar")
    before = [w for w in results if w.end_time <= split_time]
    after = [w for w in results if w.start_time >= split_time]
    if not before or not after:
        raise DataError("El corte deja un régimen sin ventanas")

    markets = sorted({m for w in results for (m, obs) in w.ais if obs == observable})
    rows = []
    for m in markets:
        row = {"market": m, "observable": observable}
        for regime, windows in (("before", before), ("after", after)):
            row[f"A_{regime}"] = float(np.mean([_masked(w.ais.get((m, observable)), use_by) for w in windows]))
            row[f"T_coll_{regime}"] = float(
                np.mean([_masked(w.collective.get((m, observable)), use_by) for w in windows])
            )
        rows.append(row)
    return pd.DataFrame(rows)


# === Multigrafo de observables ===

def build_info_graph(
    results: Sequence[WindowResult], markets: Sequence[str], observables: Sequence[str], use_by: bool = True
) -> InfoGraph:
    """
    Aristas = TE significativas entre mercados (mismo observable) y entre
    observables de un mismo mercado. Con varias ventanas el valor es el
    promedio, contando como 0 las ventanas sin enlace.
    """
    if not results:
        raise DataError("No hay ventanas para construir el grafo")
    totals = {}
    for w in results:
        for (src, dst, obs), res in w.pair_te.items():
            if src != dst and obs in observables:
                key = (src, dst, obs, obs)
                totals[key] = totals.get(key, 0.0) + _masked(res, use_by)
        for (m, src_obs, dst_obs), res in w.cross_te.items():
            if src_obs != dst_obs and src_obs in observables and dst_obs in observables:
                key = (m, m, src_obs, dst_obs)
                totals[key] = totals.get(key, 0.0) + _masked(res, use_by)

    edges = tuple(
        Edge(*key, value / len(results)) for key, value in sorted(totals.items()) if value != 0.0
    )
    return InfoGraph(tuple(markets), tuple(observables), edges)


def omega(graph: InfoGraph) -> dict:
    """
    ω^self_X: promedio sobre los N(N-1) pares ordenados de mercados.
    ω^in_X / ω^out_X: promedio sobre los N(|obs|-1) enlaces posibles entre X
    y los demás observables dentro de cada mercado.
    """
    n = len(graph.markets)
    if n < 2:
        raise ConfigError("ω requiere al menos dos mercados")
    n_links_self = n * (n - 1)
    n_links_cross = n * (len(graph.observables) - 1)

    out = {}
    for obs in graph.observables:
        self_sum = sum(e.value for e in graph.edges if e.src_obs == obs and e.dst_obs == obs)
        in_sum = sum(e.value for e in graph.edges if e.dst_obs == obs and e.src_obs != obs)
        out_sum = sum(e.value for e in graph.edges if e.src_obs == obs and e.dst_obs != obs)
        out[obs] = {
            "omega_self": self_sum / n_links_self,
            "omega_in": in_sum / n_links_cross if n_links_cross else 0.0,
            "omega_out": out_sum / n_links_cross if n_links_cross else 0.0,
        }
    return out


def window_summary(window: WindowResult, observables: Sequence[str], use_by: bool = True) -> dict:
    """Resumen JSON de una ventana: totales del sistema y resultados individuales."""
    def key(parts):
        return "|".join(str(p) for p in parts)

    return {
        "window": window.index,
        "start_time": window.start_time,
        "end_time": window.end_time,
        "totals": {
            obs: {
                "T_app_sys": total_apparent_te(window, obs, use_by),
                "T_coll_sys": total_collective_te(window, obs, use_by),
                "I_sys": system_multi_information(window, obs, use_by),
                "A_sys": average_ais(window, obs, use_by),
            }
            for obs in observables
        },
        "pair_te": {key(k): r.to_json() for k, r in sorted(window.pair_te.items())},
        "cross_te": {key(k): r.to_json() for k, r in sorted(window.cross_te.items())},
        "ais": {key(k): r.to_json() for k, r in sorted(window.ais.items())},
        "collective_te": {key(k): r.to_json() for k, r in sorted(window.collective.items())},
        "multi_information": {k: r.to_json() for k, r in sorted(window.multi_info.items())},
        "history": {key(k): v for k, v in sorted(window.history.items())},
        "delays": {key(k): v for k, v in sorted(window.delays.items())},
    }
