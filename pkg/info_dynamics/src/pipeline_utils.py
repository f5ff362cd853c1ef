"""
Pipeline por ventanas: ingesta, alineación, prueba ADF, selección de
historia y retardo, TE / AIS / multi-información con significancia,
corrección Benjamini–Yekutieli, agregación y exportación.
"""
import os
from dataclasses import dataclass, field, replace
from itertools import permutations
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from src.aux_utils import (
    ConfigError,
    DataError,
    load_json,
    log,
    map_parallel,
    output_header,
    prepare_folders,
    save_csv,
    save_json,
    stage,
)
from src.config import (
    DEFAULT_ALPHA,
    DEFAULT_K,
    DEFAULT_SEED,
    DEFAULT_SURROGATES,
    DELAY_MAX,
    KAPPA_MAX_CROSS,
    KAPPA_MAX_SINGLE,
    TEMPLATE_PATH,
)
from src.estimators import (
    EstimatorConfig,
    active_information_storage,
    collective_te,
    multi_information,
    select_delay,
    select_history,
    transfer_entropy,
)
from src.inference_utils import (
    SignificanceSpec,
    adf_test,
    benjamini_yekutieli,
    by_min_surrogates,
    surrogate_test,
    with_significance,
)
from src.kernels_utils import RngHandle
from src.metrics_utils import (
    WindowResult,
    build_info_graph,
    market_averages,
    omega,
    system_summary,
    window_summary,
)
from src.microstructure_utils import OBSERVABLES, observables, read_lob_csv, read_trades_csv
from src.reports.render_report import render
from src.series_utils import TimeSeries, WindowSpec, difference, read_series_csv, rolling_windows

LEVEL_OBSERVABLES = ("mid_price",)

# claves de flujo aleatorio por tipo de tarea
STREAM_AIS, STREAM_PAIR, STREAM_MULTI, STREAM_COLLECTIVE, STREAM_CROSS = range(5)


@dataclass(frozen=True)
class MarketSource:
    name: str
    trades: Optional[str] = None
    lob: Optional[str] = None
    series: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PipelineConfig:
    markets: tuple
    observables: tuple
    window: WindowSpec
    estimator: EstimatorConfig
    kappa_max: int
    kappa_max_cross: int
    delay_max: int
    significance: SignificanceSpec
    use_by: bool
    by_scope: str
    cross_observable: bool
    split_time: Optional[int]
    adf_max_lag: Optional[int]
    output_dir: str
    seed: int
    workers: int
    raw: dict

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "PipelineConfig":
        """Valida el JSON de configuración; rutas relativas se resuelven desde `base_dir`."""
        def resolve(path):
            full = path if os.path.isabs(path) else os.path.join(base_dir, path)
            if not os.path.exists(full):
                raise ConfigError(f"No existe el archivo referenciado {full}")
            return full

        if not data.get("markets"):
            raise ConfigError("La configuración requiere al menos un mercado")
        markets = []
        for m in data["markets"]:
            if "name" not in m:
                raise ConfigError("Cada mercado requiere 'name'")
            if "series" in m:
                series = {obs: resolve(p) for obs, p in m["series"].items()}
                markets.append(MarketSource(m["name"], series=series))
            elif "trades" in m and "lob" in m:
                markets.append(MarketSource(m["name"], resolve(m["trades"]), resolve(m["lob"])))
            else:
                raise ConfigError(f"Mercado '{m['name']}': se requiere 'series' o 'trades' + 'lob'")
        names = [m.name for m in markets]
        if len(set(names)) != len(names):
            raise ConfigError("Nombres de mercado repetidos")

        obs = tuple(data.get("observables", ["returns", "spread", "imbalance_quote"]))
        if not obs:
            raise ConfigError("La lista de observables está vacía")
        unknown = [o for o in obs if o not in OBSERVABLES]
        if unknown:
            raise ConfigError(f"Observables desconocidos: {unknown}")
        for m in markets:
            if m.series and set(obs) - set(m.series):
                raise ConfigError(f"Mercado '{m.name}' sin series para {sorted(set(obs) - set(m.series))}")

        win = data.get("window", {})
        est = data.get("estimator", {})
        sig = data.get("significance", {})
        estimator = EstimatorConfig(
            K=int(est.get("K", DEFAULT_K)),
            l=int(est.get("l", 1)),
            jitter=bool(est.get("jitter", False)),
            seed=int(data.get("seed", DEFAULT_SEED)),
        )
        kappa_max = int(est.get("kappa_max", KAPPA_MAX_SINGLE))
        kappa_max_cross = int(est.get("kappa_max_cross", KAPPA_MAX_CROSS))
        delay_max = int(est.get("delay_max", DELAY_MAX))
        if min(kappa_max, kappa_max_cross, delay_max) < 1:
            raise ConfigError("Los rangos de κ y δ no pueden estar vacíos")
        by_scope = sig.get("by_scope", "window")
        if by_scope not in ("window", "global"):
            raise ConfigError("by_scope debe ser 'window' o 'global'")
        workers = int(data.get("workers", 1))

        return cls(
            markets=tuple(markets),
            observables=obs,
            window=WindowSpec(int(win.get("width", 7 * 1440)), int(win.get("step", 3 * 1440))),
            estimator=estimator,
            kappa_max=kappa_max,
            kappa_max_cross=kappa_max_cross,
            delay_max=delay_max,
            significance=SignificanceSpec(
                int(sig.get("n_surrogates", DEFAULT_SURROGATES)),
                float(sig.get("alpha", DEFAULT_ALPHA)),
                sig.get("surrogate_kind", "circular_shift"),
            ),
            use_by=bool(sig.get("by", True)),
            by_scope=by_scope,
            cross_observable=bool(data.get("cross_observable", False)),
            split_time=data.get("split_time"),
            adf_max_lag=data.get("adf", {}).get("max_lag"),
            output_dir=os.path.join(base_dir, data.get("output_dir", "outputs")),
            seed=int(data.get("seed", DEFAULT_SEED)),
            workers=max(workers, 1),
            raw=data,
        )


def load_pipeline_config(path, overrides: Optional[dict] = None) -> PipelineConfig:
    data = load_json(path)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, name = key.partition(".")
        if name:
            data.setdefault(section, {})[name] = value
        else:
            data[section] = value
    return PipelineConfig.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))


# === Ingesta y alineación ===

def ingest_market(market: MarketSource, obs_names, snapshot_mode: bool = False) -> dict:
    """Series por observable de un mercado, desde CSV de series o desde trades + libro."""
    if market.series:
        return {
            obs: read_series_csv(market.series[obs], label=f"{market.name}:{obs}") for obs in obs_names
        }
    trades = read_trades_csv(market.trades)
    snapshots = read_lob_csv(market.lob)
    obs_set = observables(snapshots, trades, market=market.name, mode="snapshot" if snapshot_mode else "minute")
    return {obs: obs_set.get(obs) for obs in obs_names}


def common_grid(series_by_market: dict) -> dict:
    """Recorta todas las series al rango de tiempo común."""
    all_series = [s for by_obs in series_by_market.values() for s in by_obs.values()]
    periods = {s.period for s in all_series}
    if len(periods) != 1:
        raise DataError(f"Las series tienen periodos distintos: {sorted(periods)}")
    period = periods.pop()
    start = max(s.start_time for s in all_series)
    end = min(s.timestamps[-1] for s in all_series)
    if end < start:
        raise DataError("Las series no se superponen en el tiempo")
    if any((s.start_time - start) % period for s in all_series):
        raise DataError("Las grillas de las series no están en fase")

    out = {}
    for market, by_obs in series_by_market.items():
        out[market] = {}
        for obs, s in by_obs.items():
            lo = (start - s.start_time) // period
            hi = (end - s.start_time) // period + 1
            out[market][obs] = s.slice(lo, hi)
    return out


def _common_tail(a: TimeSeries, b: TimeSeries):
    """Alinea dos series de igual periodo a sus instantes comunes."""
    start = max(a.start_time, b.start_time)
    n = min(a.start_time + len(a) * a.period, b.start_time + len(b) * b.period)
    a2 = a.slice((start - a.start_time) // a.period, (n - a.start_time) // a.period)
    b2 = b.slice((start - b.start_time) // b.period, (n - b.start_time) // b.period)
    return a2, b2


def screen_window(window: dict, obs_names, max_lag, index: int):
    """
    ADF por mercado y observable. Un observable de nivel (precio) con raíz
    unitaria en algún mercado se diferencia en todos los mercados de la ventana.
    """
    rows = []
    screened = {m: dict(by_obs) for m, by_obs in window.items()}
    for obs in obs_names:
        results = {}
        for market, by_obs in window.items():
            try:
                results[market] = adf_test(by_obs[obs], max_lag)
            except DataError as e:
                log(f"⚠️ ADF omitido ({market}/{obs}, ventana {index}): {e}", "warning")
                results[market] = None
        differenced = obs in LEVEL_OBSERVABLES and any(r is None or not r.reject_at_5pct for r in results.values())
        for market, res in results.items():
            if differenced:
                screened[market][obs] = difference(window[market][obs])
            elif res is not None and not res.reject_at_5pct:
                log(f"⚠️ {market}/{obs} no rechaza raíz unitaria en la ventana {index}", "warning")
            rows.append({
                "window": index,
                "market": market,
                "observable": obs,
                "adf_statistic": None if res is None else res.statistic,
                "adf_reject_5pct": None if res is None else res.reject_at_5pct,
                "differenced": differenced,
            })
    return screened, rows


# === Análisis de una ventana ===

def _significance(result, estimate_fn, source, spec, rng, workers=1):
    p, _ = surrogate_test(estimate_fn, source, spec, rng, observed=result.value, workers=workers)
    return with_significance(result, p, spec)


def analyze_window(
    index: int,
    start_time: int,
    end_time: int,
    window: dict,
    cfg: PipelineConfig,
    kappa_max: int,
    cross: bool = False,
) -> WindowResult:
    """
    Calcula AIS, TE entre mercados, TE colectiva y multi-información para cada
    observable; con `cross` también la TE entre observables de cada mercado (δ=1).
    Cada tarea usa el flujo aleatorio (ventana, tipo, índices...).
    """
    rng = RngHandle(cfg.seed, (index,))
    markets = sorted(window)
    spec = cfg.significance
    shuffle_spec = replace(spec, surrogate_kind="shuffle")
    base = cfg.estimator

    history, delays = {}, {}
    ais, pair_te, collective, multi, cross_te = {}, {}, {}, {}, {}

    for oi, obs in enumerate(cfg.observables):
        # historia del objetivo y AIS
        for mi, m in enumerate(markets):
            x = window[m][obs]
            k = select_history(x, kappa_max, base)
            history[(m, obs)] = k
            kcfg = replace(base, k=k)
            res = active_information_storage(x, kcfg)
            ais[(m, obs)] = _significance(
                res, lambda s, c=kcfg: active_information_storage(s, c).value, x, shuffle_spec,
                rng.child(STREAM_AIS, oi, mi),
            )

        # TE entre pares ordenados de mercados
        for (ai, src), (bi, dst) in permutations(list(enumerate(markets)), 2):
            kcfg = replace(base, k=history[(dst, obs)])
            s_series, d_series = _common_tail(window[src][obs], window[dst][obs])
            delay, res = select_delay(s_series, d_series, cfg.delay_max, kcfg)
            delays[(src, dst, obs)] = delay
            dcfg = replace(kcfg, delay=delay)
            pair_te[(src, dst, obs)] = _significance(
                res, lambda s, t=d_series, c=dcfg: transfer_entropy(s, t, c).value, s_series, spec,
                rng.child(STREAM_PAIR, oi, ai, bi),
            )

        # multi-información entre mercados
        if len(markets) >= 2:
            group = [window[m][obs] for m in markets]
            res = multi_information(group, base)
            multi[obs] = _significance(
                res, lambda rest, first=group[0]: multi_information([first, *rest], base).value, group[1:], spec,
                rng.child(STREAM_MULTI, oi),
            )

            # TE colectiva: fuentes en orden lexicográfico, con el retardo elegido por par
            for mi, m in enumerate(markets):
                sources = [window[s][obs] for s in markets if s != m]
                source_delays = [delays[(s, m, obs)] for s in markets if s != m]
                kcfg = replace(base, k=history[(m, obs)])
                target = window[m][obs]
                res = collective_te(target, sources, kcfg, source_delays)
                collective[(m, obs)] = _significance(
                    res,
                    lambda srcs, t=target, c=kcfg, d=source_delays: collective_te(t, srcs, c, d).value,
                    sources, spec, rng.child(STREAM_COLLECTIVE, oi, mi),
                )

    if cross:
        for mi, m in enumerate(markets):
            for (si, src_obs), (ti, dst_obs) in permutations(list(enumerate(cfg.observables)), 2):
                s_series, d_series = _common_tail(window[m][src_obs], window[m][dst_obs])
                k = select_history(d_series, cfg.kappa_max_cross, base)
                ccfg = replace(base, k=k, delay=1)
                res = transfer_entropy(s_series, d_series, ccfg)
                cross_te[(m, src_obs, dst_obs)] = _significance(
                    res, lambda s, t=d_series, c=ccfg: transfer_entropy(s, t, c).value, s_series, spec,
                    rng.child(STREAM_CROSS, mi, si, ti),
                )

    log(f"Ventana {index} analizada", "info")
    return WindowResult(index, start_time, end_time, pair_te, cross_te, ais, collective, multi, history, delays)


# === Benjamini–Yekutieli ===

def apply_by(results: list, q: float, scope: str = "window") -> list:
    """
    Marca `by_rejected` en las TE entre pares (y entre observables). Por
    defecto por ventana; con scope="global" sobre todas las ventanas juntas.
    """
    def tests(w):
        return [("pair_te", k) for k in sorted(w.pair_te)] + [("cross_te", k) for k in sorted(w.cross_te)]

    def apply(windows):
        entries = [(wi, attr, key) for wi, w in windows for attr, key in tests(w)]
        if not entries:
            return {}
        pvals = [getattr(w_by_index[wi], attr)[key].significance.p_value for wi, attr, key in entries]
        mask = benjamini_yekutieli(pvals, q)
        return {entry: bool(flag) for entry, flag in zip(entries, mask)}

    w_by_index = dict(enumerate(results))
    if scope == "global":
        decisions = apply(list(w_by_index.items()))
    else:
        decisions = {}
        for item in w_by_index.items():
            decisions.update(apply([item]))

    updated = []
    for wi, w in w_by_index.items():
        fields = {}
        for attr in ("pair_te", "cross_te"):
            new = {}
            for key, res in getattr(w, attr).items():
                sig = replace(res.significance, by_rejected=decisions[(wi, attr, key)])
                new[key] = replace(res, significance=sig)
            fields[attr] = new
        updated.append(replace(w, **fields))
    return updated


def check_by_resolution(n_tests: int, spec: SignificanceSpec) -> bool:
    """
    Indica si con `spec.n_surrogates` un enlace aislado puede pasar BY entre
    `n_tests` pruebas. Si no, lo advierte con el número de sustitutos necesario.
    """
    needed = by_min_surrogates(n_tests, spec.alpha)
    if spec.n_surrogates >= needed:
        return True
    log(
        f"Con {spec.n_surrogates} sustitutos el p-valor mínimo es 1/{spec.n_surrogates + 1}: "
        f"un enlace aislado no pasa BY entre {n_tests} pruebas (se requieren al menos {needed})",
        "warning",
    )
    return False


# === Pipeline completo ===

def _slice_all(series_by_market: dict, lo: int, hi: int) -> dict:
    return {m: {o: s.slice(lo, hi) for o, s in by_obs.items()} for m, by_obs in series_by_market.items()}


def run_pipeline(cfg: PipelineConfig) -> dict:
    """
    Ejecuta el análisis completo y escribe las salidas en cfg.output_dir.

    Retorna:
    - dict con las rutas de las salidas principales.
    """
    # la carpeta de salida y el número de trabajadores no cambian los resultados
    hashed = {k: v for k, v in cfg.raw.items() if k not in ("output_dir", "workers")}
    header = output_header(hashed, cfg.seed)
    obs_names = list(cfg.observables)

    with stage("ingesta"):
        raw = {m.name: ingest_market(m, obs_names) for m in cfg.markets}
        series = common_grid(raw)
        any_market = next(iter(series.values()))
        first = any_market[obs_names[0]]
        log(f"Grilla común: {len(first)} pasos, {len(series)} mercados", "success")

    with stage("ventanas"):
        template = rolling_windows(first, cfg.window)
        bounds = [
            (j, j * cfg.window.step, j * cfg.window.step + cfg.window.width) for j in range(len(template))
        ]
        if cfg.use_by:
            per_window = len(series) * (len(series) - 1) * len(obs_names)
            n_tests = per_window * (len(bounds) if cfg.by_scope == "global" else 1)
            if n_tests:
                check_by_resolution(n_tests, cfg.significance)

    with stage("adf"):
        screened, adf_rows = [], []
        for j, lo, hi in bounds:
            win, rows = screen_window(_slice_all(series, lo, hi), obs_names, cfg.adf_max_lag, j)
            screened.append(win)
            adf_rows.extend(rows)

    with stage("estimacion"):
        def run_one(item):
            (j, lo, hi), win = item
            return analyze_window(
                j, int(first.timestamps[lo]), int(first.timestamps[hi - 1]), win, cfg, cfg.kappa_max
            )
        results = map_parallel(run_one, list(zip(bounds, screened)), cfg.workers)

    regime_results = []
    if cfg.cross_observable:
        with stage("entre_observables"):
            if cfg.split_time is None:
                raise ConfigError("El análisis entre observables requiere split_time")
            snap = {
                m.name: ingest_market(m, obs_names, snapshot_mode=True) for m in cfg.markets
            }
            snap = common_grid(snap)
            ts = next(iter(snap.values()))[obs_names[0]].timestamps
            cut = int(np.searchsorted(ts, cfg.split_time))
            if cut < 2 or cut > len(ts) - 2:
                raise DataError("split_time deja un régimen vacío")
            for j, (lo, hi) in enumerate([(0, cut), (cut, len(ts))]):
                win, _ = screen_window(_slice_all(snap, lo, hi), obs_names, cfg.adf_max_lag, j)
                regime_results.append(analyze_window(
                    10_000 + j, int(ts[lo]), int(ts[hi - 1]), win, cfg, cfg.kappa_max_cross, cross=True
                ))

    if cfg.use_by:
        with stage("benjamini_yekutieli"):
            results = apply_by(results, cfg.significance.alpha, cfg.by_scope)
            if regime_results:
                regime_results = apply_by(regime_results, cfg.significance.alpha, "window")

    with stage("agregacion"):
        dirs = prepare_folders(cfg.output_dir, "", ["ventanas", "tablas", "grafos", "reporte"])
        markets = sorted(series)
        summary = system_summary(results, obs_names, cfg.use_by)
        save_csv(summary, os.path.join(dirs["tablas"], "resumen_sistema.csv"), header)
        save_csv(pd.DataFrame(adf_rows), os.path.join(dirs["tablas"], "adf.csv"), header)

        for w in results:
            save_json({"meta": header, **window_summary(w, obs_names, cfg.use_by)},
                      os.path.join(dirs["ventanas"], f"ventana_{w.index:04d}.json"))

        graph = build_info_graph(results, markets, obs_names, cfg.use_by)
        save_csv(graph.to_frame(), os.path.join(dirs["grafos"], "grafo_ventanas.csv"), header)
        omegas = {"ventanas": omega(graph)} if len(markets) >= 2 else {}

        regime_tables = {}
        if cfg.split_time is not None:
            for obs in obs_names:
                try:
                    table = market_averages(results, cfg.split_time, obs, cfg.use_by)
                except DataError as e:
                    log(f"⚠️ Sin tabla de regímenes para {obs}: {e}", "warning")
                    continue
                regime_tables[obs] = table
                save_csv(table, os.path.join(dirs["tablas"], f"regimenes_{obs}.csv"), header)

        for name, w in zip(("antes", "despues"), regime_results):
            g = build_info_graph([w], markets, obs_names, cfg.use_by)
            save_csv(g.to_frame(), os.path.join(dirs["grafos"], f"grafo_{name}.csv"), header)
            omegas[name] = omega(g)
        save_json({"meta": header, "omega": omegas}, os.path.join(dirs["grafos"], "omega.json"))

    with stage("reporte"):
        report = build_report(cfg, header, summary, omegas, regime_tables, len(results))
        json_path = os.path.join(dirs["reporte"], "reporte_pipeline.json")
        html_path = os.path.join(dirs["reporte"], "reporte_pipeline.html")
        save_json(report, json_path)
        render(Path(TEMPLATE_PATH), Path(json_path), Path(html_path))
        log(f"Reporte generado: {html_path}", "success")

    return {"output_dir": dirs["root"], "report": html_path, "windows": len(results)}


def build_report(cfg, header, summary: pd.DataFrame, omegas: dict, regime_tables: dict, n_windows: int) -> dict:
    """Datos del reporte HTML: promedios del sistema por observable, ω y tablas de régimen."""
    totals = []
    for obs, group in summary.groupby("observable", sort=False):
        totals.append({
            "OBSERVABLE": obs,
            "T_APP": round(float(group["T_app_sys"].mean()), 6),
            "T_COLL": round(float(group["T_coll_sys"].mean()), 6),
            "I_SYS": round(float(group["I_sys"].mean()), 6),
            "A_SYS": round(float(group["A_sys"].mean()), 6),
        })
    omega_rows = [
        {"GRAFO": g, "OBSERVABLE": obs, **{k.upper(): round(v, 6) for k, v in vals.items()}}
        for g, by_obs in omegas.items() for obs, vals in by_obs.items()
    ]
    regimes = [
        {"OBSERVABLE": obs, "FILAS": table.round(6).to_dict("records")}
        for obs, table in regime_tables.items()
    ]
    return {
        "TITULO": "Dinámica de información entre mercados",
        "META": header,
        "MERCADOS": [m.name for m in cfg.markets],
        "OBSERVABLES": list(cfg.observables),
        "N_VENTANAS": n_windows,
        "BY": cfg.use_by,
        "TOTALES": totals,
        "OMEGA": omega_rows,
        "REGIMENES": regimes,
    }
