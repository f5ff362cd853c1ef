#!/usr/bin/env python3
import argparse
import json
import os
import sys
import warnings
from dataclasses import replace

from src.aux_utils import (
    ConfigError,
    InfoDynamicsError,
    load_json,
    log,
    output_header,
    save_csv,
    save_json,
)
from src.config import (
    DEFAULT_ALPHA,
    DEFAULT_K,
    DEFAULT_SEED,
    DEFAULT_SURROGATES,
    DEFAULT_WORKERS,
    KS_ALPHA,
    ORACLE_N_INNER,
    ORACLE_N_OUTER,
    OUTPUTS_BASE,
)
from src.estimators import (
    EstimatorConfig,
    active_information_storage,
    collective_te,
    conditional_te,
    multi_information,
    transfer_entropy,
)
from src.experiments_utils import run_sweep
from src.inference_utils import SignificanceSpec, subsample_bias_profile, surrogate_test, with_significance
from src.kernels_utils import RngHandle
from src.microstructure_utils import imbalance_regime_summary, read_lob_csv, read_trades_csv, snapshot_offset_diagnostics
from src.models_utils import (
    GARCH_PARAMETER_SETS,
    GarchParams,
    VarParams,
    garch_moments,
    sample_moments,
    simulate_garch_spread,
    simulate_var,
    theoretical_te_r_to_s,
    theoretical_te_s_to_r,
)
from src.pipeline_utils import load_pipeline_config, run_pipeline
from src.series_utils import read_series_csv, write_series_csv

# statsmodels avisa sobre tablas de interpolación del ADF; no afecta los resultados
warnings.filterwarnings("ignore", message=".*p-value.*", module="statsmodels")

MEASURES = ("te", "conditional_te", "collective_te", "ais", "mi")


def _garch_params(args) -> GarchParams:
    if args.params:
        return GarchParams.from_dict(load_json(args.params))
    if args.set:
        return GARCH_PARAMETER_SETS[args.set]
    raise ConfigError("Se requiere --params o --set para el modelo GARCH")


def _header(args, **extra):
    # la carpeta de salida y los trabajadores no entran al hash
    config = {k: v for k, v in vars(args).items() if k not in ("out", "workers", "func")}
    config.update(extra)
    return output_header(config, args.seed)


def _out_dir(args, name):
    out = args.out or os.path.join(OUTPUTS_BASE, name)
    os.makedirs(out, exist_ok=True)
    return out


# === Subcomandos ===

def cmd_simulate(args):
    out = _out_dir(args, "simulate")
    rng = RngHandle(args.seed)
    header = _header(args)
    if args.model == "var":
        params = VarParams.from_dict(load_json(args.params)) if args.params else VarParams()
        if args.T:
            params = replace(params, T=args.T)
        x, y = simulate_var(params, rng)
        write_series_csv(x, os.path.join(out, "var_X.csv"), header)
        write_series_csv(y, os.path.join(out, "var_Y.csv"), header)
        save_json({"meta": header, "model": "var", "params": params.to_dict()}, os.path.join(out, "params.json"))
    else:
        params = _garch_params(args)
        r, s, sigma = simulate_garch_spread(params, args.T or 10_000, rng, allow_nonstationary=args.allow_nonstationary)
        write_series_csv(r, os.path.join(out, "garch_r.csv"), header)
        write_series_csv(s, os.path.join(out, "garch_s.csv"), header)
        write_series_csv(sigma, os.path.join(out, "garch_sigma.csv"), header)
        summary = {"meta": header, "model": "garch", "params": params.to_dict(), "sample_moments": sample_moments(s, sigma)}
        if params.stationary:
            summary["moments"] = garch_moments(params).to_dict()
        save_json(summary, os.path.join(out, "params.json"))
    log(f"Series simuladas en {out}", "success")
    return 0


def cmd_estimate(args):
    files = args.inputs
    needed = {"te": 2, "conditional_te": 2, "collective_te": 2, "ais": 1, "mi": 2}[args.measure]
    if len(files) < needed:
        raise ConfigError(f"'{args.measure}' requiere al menos {needed} archivos de entrada")
    series = [read_series_csv(f) for f in files]
    cfg = EstimatorConfig(
        kind=args.estimator, K=args.K, k=args.k, l=args.l, m=args.m, delay=args.delay,
        jitter=args.jitter, seed=args.seed,
    )

    # cada medida: estimador sobre la(s) fuente(s) + qué se reemplaza por sustitutos
    if args.measure == "te":
        src, dst = series[0], series[1]
        estimate = lambda s: transfer_entropy(s, dst, cfg)
        source = src
    elif args.measure == "conditional_te":
        src, dst, cond = series[0], series[1], series[2:]
        estimate = lambda s: conditional_te(s, dst, cond, cfg)
        source = src
    elif args.measure == "collective_te":
        dst, sources = series[0], series[1:]
        estimate = lambda srcs: collective_te(dst, srcs, cfg)
        source = sources
    elif args.measure == "ais":
        estimate = lambda s: active_information_storage(s, cfg)
        source = series[0]
    else:
        first = series[0]
        estimate = lambda rest: multi_information([first, *rest], cfg)
        source = series[1:]

    result = estimate(source)
    if args.significance:
        kind = "shuffle" if args.measure == "ais" else "circular_shift"
        spec = SignificanceSpec(args.surrogates, args.alpha, kind)
        p, _ = surrogate_test(lambda s: estimate(s).value, source, spec, RngHandle(args.seed, (1,)),
                              observed=result.value, workers=args.workers)
        result = with_significance(result, p, spec)

    payload = {"meta": _header(args), **result.to_json(include_locals=args.local)}
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        save_json(payload, args.out)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))
    return 0


def cmd_pipeline(args):
    overrides = {
        "seed": args.seed,
        "workers": args.workers,
        "output_dir": os.path.abspath(args.out) if args.out else None,
        "significance.alpha": args.alpha,
        "significance.n_surrogates": args.surrogates,
        "significance.by": False if args.no_by else None,
    }
    cfg = load_pipeline_config(args.config, overrides)
    outputs = run_pipeline(cfg)
    log(f"✅ Pipeline completo: {outputs['windows']} ventanas en {outputs['output_dir']}", "success")
    return 0


def cmd_diagnose(args):
    out = _out_dir(args, "diagnose")
    header = _header(args)
    if args.kind == "ksg_bias":
        if len(args.inputs) != 2:
            raise ConfigError("ksg_bias requiere dos archivos: fuente y objetivo")
        source, target = (read_series_csv(f) for f in args.inputs)
        cfg = EstimatorConfig(k=args.k, l=args.l, delay=args.delay)
        profile = subsample_bias_profile(source, target, cfg, args.K_list, args.max_slices)
        save_csv(profile.to_frame(), os.path.join(out, "ksg_bias.csv"), header)
    elif args.kind == "alignment":
        if len(args.inputs) != 2:
            raise ConfigError("alignment requiere dos archivos de libro de órdenes")
        diag = snapshot_offset_diagnostics(read_lob_csv(args.inputs[0]), read_lob_csv(args.inputs[1]))
        save_csv(diag.capture_histogram, os.path.join(out, "capture_histogram.csv"), header)
        save_json({"meta": header, **diag.summary()}, os.path.join(out, "offsets.json"))
    else:
        if args.split_time is None:
            raise ConfigError("imbalance requiere --split-time")
        trades = {}
        for item in args.inputs:
            name, sep, path = item.partition("=")
            if not sep:
                raise ConfigError(f"Entrada '{item}': use mercado=ruta_trades.csv")
            trades[name] = read_trades_csv(path)
        table = imbalance_regime_summary(trades, args.split_time, args.ks_alpha)
        save_csv(table, os.path.join(out, "imbalance_regimes.csv"), header)
    log(f"Diagnóstico '{args.kind}' guardado en {out}", "success")
    return 0


def cmd_moments(args):
    params = _garch_params(args)
    payload = {"meta": _header(args), "params": params.to_dict(), "moments": garch_moments(params).to_dict()}
    out = _out_dir(args, "moments")
    save_json(payload, os.path.join(out, "moments.json"))
    return 0


def cmd_oracle(args):
    params = _garch_params(args)
    rng = RngHandle(args.seed)
    if args.direction == "s_to_r":
        res = theoretical_te_s_to_r(params, args.n_outer, args.n_inner, rng)
    else:
        res = theoretical_te_r_to_s(params, args.n_outer, args.n_inner, rng)
    if res.n_rejected:
        log(f"{res.n_rejected} muestras no finitas descartadas", "warning")
    out = _out_dir(args, "oracle")
    save_json(
        {"meta": _header(args), "direction": args.direction, "params": params.to_dict(), **res.to_dict()},
        os.path.join(out, f"oracle_{args.direction}.json"),
    )
    return 0


def cmd_sweep(args):
    config = load_json(args.config)
    config["seed"] = args.seed
    table = run_sweep(config, args.workers)
    out = _out_dir(args, "sweep")
    name = os.path.splitext(os.path.basename(args.config))[0]
    save_csv(table, os.path.join(out, f"{name}.csv"), output_header(config, args.seed))
    return 0


# === Argumentos ===

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Semilla maestra")
    common.add_argument("--workers", type=int, default=None, help="Trabajadores en paralelo")
    common.add_argument("--alpha", type=float, default=None, help="Nivel de significancia")
    common.add_argument("--surrogates", type=int, default=None, help="Número de sustitutos")
    common.add_argument("--no-by", action="store_true", help="Desactiva la corrección Benjamini–Yekutieli")
    common.add_argument("--out", default=None, help="Carpeta (o archivo, en estimate) de salida")

    parser = argparse.ArgumentParser(description="Dinámica de información en series de tiempo y mercados")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="Simula el VAR o el GARCH retornos–spread")
    p.add_argument("--model", choices=["var", "garch"], required=True)
    p.add_argument("--params", help="JSON de parámetros")
    p.add_argument("--set", choices=sorted(GARCH_PARAMETER_SETS), help="Conjunto GARCH predefinido")
    p.add_argument("--T", type=int, default=None, help="Longitud de la serie")
    p.add_argument("--allow-nonstationary", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", parents=[common], help="Estima TE, AIS o multi-información")
    p.add_argument("--measure", choices=MEASURES, required=True)
    p.add_argument("--inputs", nargs="+", required=True,
                   help="te/conditional_te: fuente objetivo [condicionales]; collective_te: objetivo fuentes; "
                        "ais: serie; mi: series")
    p.add_argument("--estimator", choices=["ksg", "gaussian"], default="ksg")
    p.add_argument("--K", type=int, default=DEFAULT_K)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--l", type=int, default=1)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--delay", type=int, default=1)
    p.add_argument("--jitter", action="store_true", help="Ruido uniforme de 1e-8·std para datos discretizados")
    p.add_argument("--significance", action="store_true", help="Prueba por sustitutos")
    p.add_argument("--local", action="store_true", help="Incluye los valores locales")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("pipeline", parents=[common], help="Pipeline por ventanas desde un JSON de configuración")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("diagnose", parents=[common], help="Diagnósticos: sesgo KSG, alineación, imbalance")
    p.add_argument("--kind", choices=["ksg_bias", "alignment", "imbalance"], required=True)
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--K-list", dest="K_list", type=int, nargs="+", default=[2, 3, 4, 5, 6])
    p.add_argument("--max-slices", type=int, default=10)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--l", type=int, default=1)
    p.add_argument("--delay", type=int, default=1)
    p.add_argument("--split-time", type=int, default=None, help="Corte de régimen (ms)")
    p.add_argument("--ks-alpha", type=float, default=KS_ALPHA)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("moments", parents=[common], help="Momentos cerrados del GARCH retornos–spread")
    p.add_argument("--params")
    p.add_argument("--set", choices=sorted(GARCH_PARAMETER_SETS))
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("oracle-te", parents=[common], help="TE teórica del GARCH por Monte Carlo")
    p.add_argument("--params")
    p.add_argument("--set", choices=sorted(GARCH_PARAMETER_SETS))
    p.add_argument("--direction", choices=["s_to_r", "r_to_s"], required=True)
    p.add_argument("--n-outer", type=int, default=ORACLE_N_OUTER)
    p.add_argument("--n-inner", type=int, default=ORACLE_N_INNER)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", parents=[common], help="Barrido de la sigmoide sobre ensambles del VAR")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # en pipeline los valores ausentes se toman del JSON de configuración
    if args.command != "pipeline":
        args.seed = DEFAULT_SEED if args.seed is None else args.seed
        args.workers = DEFAULT_WORKERS if args.workers is None else args.workers
        args.alpha = DEFAULT_ALPHA if args.alpha is None else args.alpha
        args.surrogates = DEFAULT_SURROGATES if args.surrogates is None else args.surrogates
    try:
        return args.func(args)
    except InfoDynamicsError as e:
        log(f"{e}", "error")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
