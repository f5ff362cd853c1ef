"""
Modelos generativos: VAR acoplado con cambio de régimen (sigmoide) y el
modelo GARCH retornos–spread, con su análisis de momentos, la densidad
condicional del spread y los oráculos de TE por marginalización Monte Carlo.
"""
from dataclasses import dataclass, asdict
from typing import Union

import numpy as np
from scipy import special, stats

from src.aux_utils import ConfigError, NumericError, log
from src.config import BURN_IN, ORACLE_N_INNER, ORACLE_N_OUTER
from src.kernels_utils import RngHandle
from src.series_utils import TimeSeries

VAR_FORMS = ("abs", "power")
OUTER_CHUNK = 1024


# === Tipos de parámetros ===

@dataclass(frozen=True)
class SigmoidSpec:
    s: float
    b: float
    t_C: float
    C: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.b):
            raise ConfigError("La pendiente b de la sigmoide debe ser finita")


Schedule = Union[float, SigmoidSpec]


def sigmoid(t, spec: SigmoidSpec):
    """s / (1 + e^{-b(t - t_C)}) + C."""
    out = spec.s * special.expit(spec.b * (np.asarray(t, dtype=float) - spec.t_C)) + spec.C
    return float(out) if np.ndim(t) == 0 else out


def evaluate_schedule(value: Schedule, t: np.ndarray) -> np.ndarray:
    if isinstance(value, SigmoidSpec):
        return sigmoid(t, value)
    return np.full(np.shape(t), float(value))


def _schedule_from_json(value, name: str) -> Schedule:
    if isinstance(value, dict):
        try:
            return SigmoidSpec(float(value["s"]), float(value["b"]), float(value["t_C"]), float(value.get("C", 0.0)))
        except KeyError as e:
            raise ConfigError(f"Sigmoide de '{name}' sin la clave {e}") from e
    try:
        return float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Valor inválido para '{name}': {value!r}") from e


def _schedule_to_json(value: Schedule):
    return asdict(value) if isinstance(value, SigmoidSpec) else value


@dataclass(frozen=True)
class VarParams:
    alpha1: float = 0.2
    alpha2: float = 0.2
    beta1: Schedule = 1.0
    beta2: Schedule = 1.0
    K: Schedule = 0.0
    C: Schedule = 0.0
    d: float = 0.5
    T: int = 2000
    form: str = "abs"

    def __post_init__(self):
        if abs(self.alpha1) >= 1 or abs(self.alpha2) >= 1:
            raise ConfigError("Se requiere |alpha1|, |alpha2| < 1")
        if self.T < 2:
            raise ConfigError("T debe ser ≥ 2")
        if self.form not in VAR_FORMS:
            raise ConfigError(f"Forma de acople desconocida: {self.form}")
        if self.form == "power" and float(self.d) != int(self.d):
            raise ConfigError("La forma 'power' solo admite exponentes enteros")

    @classmethod
    def from_dict(cls, data: dict) -> "VarParams":
        known = {"alpha1", "alpha2", "beta1", "beta2", "K", "C", "d", "T", "form"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Claves desconocidas en parámetros VAR: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("beta1", "beta2", "K", "C"):
            if key in kwargs:
                kwargs[key] = _schedule_from_json(kwargs[key], key)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("beta1", "beta2", "K", "C"):
            out[key] = _schedule_to_json(getattr(self, key))
        return out


@dataclass(frozen=True)
class GarchParams:
    w: float
    alpha: float
    beta: float
    gamma: float
    a: float
    b: float
    c: float

    def __post_init__(self):
        values = asdict(self)
        negative = [k for k, v in values.items() if v < 0]
        if negative:
            raise ConfigError(f"Parámetros GARCH negativos: {negative}")
        if self.a >= 1:
            raise ConfigError("Se requiere a < 1")

    @property
    def stationary(self) -> bool:
        return (1 - self.alpha - self.beta) * (1 - self.a) - self.gamma * self.b > 0

    @classmethod
    def from_dict(cls, data: dict) -> "GarchParams":
        try:
            return cls(**{k: float(data[k]) for k in ("w", "alpha", "beta", "gamma", "a", "b", "c")})
        except KeyError as e:
            raise ConfigError(f"Falta el parámetro GARCH {e}") from e

    def to_dict(self) -> dict:
        return asdict(self)


# Conjuntos de referencia: acople s→r, acople r→s y acople bidireccional
GARCH_PARAMETER_SETS = {
    "set1": GarchParams(w=0.1, alpha=0.1, beta=0.4, gamma=0.9, a=0.8, b=0.0, c=0.1),
    "set2": GarchParams(w=0.1, alpha=0.1, beta=0.1, gamma=0.0, a=0.1, b=0.9, c=0.1),
    "set3": GarchParams(w=0.1, alpha=0.1, beta=0.5, gamma=0.5, a=0.1, b=0.5, c=0.1),
}


@dataclass(frozen=True)
class GarchMoments:
    sigma2: float
    s2: float
    sigma4: float
    s4: float
    sigma2_s2: float
    stationary: bool
    moments_finite: bool

    @property
    def fourth_moments(self):
        return (self.sigma4, self.s4, self.sigma2_s2)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class OracleResult:
    value: float
    ci_low: float
    ci_high: float
    stderr: float
    n_used: int
    n_rejected: int
    support_violations: int = 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["value_nats"] = out.pop("value")
        return out


# === VAR con cambio de régimen ===

def simulate_var(params: VarParams, rng: RngHandle, burn_in: int = BURN_IN):
    """
    X_t = α1 X_{t-1} + β1 ε1 + K(t) ε
    Y_t = α2 Y_{t-1} + β2 ε2 + K(t) ε + C(t) |X_{t-1}|^d
    con ε compartido. Se descartan `burn_in` pasos (evaluados en t < 0).
    """
    total = burn_in + params.T
    t = np.arange(-burn_in, params.T, dtype=float)
    beta1 = evaluate_schedule(params.beta1, t)
    beta2 = evaluate_schedule(params.beta2, t)
    hidden = evaluate_schedule(params.K, t)
    coupling = evaluate_schedule(params.C, t)
    noise = rng.generator().standard_normal((3, total))

    drive_x = (beta1 * noise[0] + hidden * noise[2]).tolist()
    drive_y = (beta2 * noise[1] + hidden * noise[2]).tolist()
    coupling = coupling.tolist()
    a1, a2, d = params.alpha1, params.alpha2, params.d
    use_abs = params.form == "abs"
    power = int(d) if not use_abs else None

    x = [0.0] * total
    y = [0.0] * total
    for i in range(1, total):
        prev = x[i - 1]
        drive = abs(prev) ** d if use_abs else prev ** power
        x[i] = a1 * prev + drive_x[i]
        y[i] = a2 * y[i - 1] + drive_y[i] + coupling[i] * drive

    x = np.asarray(x[burn_in:])
    y = np.asarray(y[burn_in:])
    return TimeSeries(x, 0, 1, "var:X"), TimeSeries(y, 0, 1, "var:Y")


# === GARCH retornos–spread ===

def garch_moments(params: GarchParams) -> GarchMoments:
    """
    Momentos incondicionales:
    σ² = (w(1-a) + γc) / ((1-α-β)(1-a) - γb),  s² = (bσ² + c) / (1-a),
    y los cuartos momentos (E[σ⁴], E[s⁴], E[σ²s²]) resolviendo un sistema lineal 3×3
    con E[ε⁴] = 3.
    """
    w, al, be, ga, a, b, c = params.w, params.alpha, params.beta, params.gamma, params.a, params.b, params.c
    denom = (1 - al - be) * (1 - a) - ga * b
    if denom == 0:
        raise NumericError("Denominador nulo en los momentos de segundo orden")
    sig2 = (w * (1 - a) + ga * c) / denom
    s2 = (b * sig2 + c) / (1 - a)

    # incógnitas: [E[σ⁴], E[s⁴], E[σ²s²]]
    A = np.array([
        [1 - 3 * al**2 - be**2 - 2 * al * be, -ga**2, -2 * al * ga - 2 * be * ga],
        [-b**2, 1 - a**2, -2 * a * b],
        [-(al * b + be * b), -ga * a, 1 - al * a - be * a - ga * b],
    ])
    rhs = np.array([
        w**2 + 2 * w * al * sig2 + 2 * w * be * sig2 + 2 * w * ga * s2,
        3 * c**2 + 2 * a * c * s2 + 2 * b * c * sig2,
        w * a * s2 + w * b * sig2 + w * c + al * c * sig2 + be * c * sig2 + ga * c * s2,
    ])
    try:
        sigma4, s4, cross = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"Sistema de cuartos momentos singular: {e}") from e

    stationary = params.stationary
    fourth = np.array([sigma4, s4, cross])
    finite = bool(stationary and np.all(np.isfinite(fourth)) and np.all(fourth > 0))
    return GarchMoments(float(sig2), float(s2), float(sigma4), float(s4), float(cross), stationary, finite)


def simulate_garch_spread(
    params: GarchParams, T: int, rng: RngHandle, burn_in: int = BURN_IN, allow_nonstationary: bool = False
):
    """
    r_t = σ_t ε1
    σ_t² = w + α r²_{t-1} + β σ²_{t-1} + γ s²_{t-1}
    s_t = +√(a s²_{t-1} + b σ²_{t-1} + c ϵ²)

    Retorna (r, s, σ) como TimeSeries tras descartar el burn-in.
    """
    if T < 2:
        raise ConfigError("T debe ser ≥ 2")
    if not params.stationary and not allow_nonstationary:
        raise ConfigError("Parámetros no estacionarios: (1-α-β)(1-a) - γb ≤ 0")

    if params.stationary:
        m = garch_moments(params)
        sig2, s2 = m.sigma2, m.s2
    else:
        sig2, s2 = params.w, params.c

    total = burn_in + T
    noise = rng.generator().standard_normal((2, total))
    e1 = noise[0].tolist()
    e2sq = (noise[1] ** 2).tolist()
    w, al, be, ga, a, b, c = params.w, params.alpha, params.beta, params.gamma, params.a, params.b, params.c

    r_out = [0.0] * total
    s_out = [0.0] * total
    sig_out = [0.0] * total
    r_prev = np.sqrt(sig2) * e1[0]
    r_out[0], s_out[0], sig_out[0] = r_prev, np.sqrt(s2), np.sqrt(sig2)
    for i in range(1, total):
        sig2_new = w + al * r_prev * r_prev + be * sig2 + ga * s2
        s2_new = a * s2 + b * sig2 + c * e2sq[i]
        sig2, s2 = sig2_new, s2_new
        r_prev = sig2 ** 0.5 * e1[i]
        r_out[i], s_out[i], sig_out[i] = r_prev, s2 ** 0.5, sig2 ** 0.5

    r = np.asarray(r_out[burn_in:])
    s = np.asarray(s_out[burn_in:])
    sig = np.asarray(sig_out[burn_in:])
    if not np.all(np.isfinite(sig)):
        raise NumericError("La simulación GARCH divergió (valores no finitos)")
    return TimeSeries(r, 0, 1, "garch:r"), TimeSeries(s, 0, 1, "garch:s"), TimeSeries(sig, 0, 1, "garch:sigma")


def sample_moments(s: TimeSeries, sigma: TimeSeries) -> dict:
    return {"sigma2": float(np.mean(sigma.values ** 2)), "s2": float(np.mean(s.values ** 2))}


def variance_growth(params: GarchParams, lengths, rng: RngHandle) -> list:
    """Varianza muestral de σ² para trayectorias de longitud creciente (detector de divergencia)."""
    out = []
    for i, T in enumerate(lengths):
        _, _, sig = simulate_garch_spread(params, int(T), rng.child(i), allow_nonstationary=True)
        out.append(float(np.var(sig.values ** 2)))
    return out


# === Densidad condicional del spread ===

def _c_star(s1, s2, r2, sig2, params: GarchParams):
    c_star = params.a * np.square(s1) + params.b * (
        params.w + params.alpha * np.square(r2) + params.beta * np.square(sig2) + params.gamma * np.square(s2)
    )
    if np.any(np.asarray(c_star) < 0):
        raise NumericError("c* negativo: imposible con parámetros no negativos")
    return c_star


def _log_spread_density(y, c_star, c):
    y = np.asarray(y, dtype=float)
    gap = np.square(y) - c_star
    inside = (gap > 0) & (y > 0)
    safe_gap = np.where(inside, gap, 1.0)
    safe_y = np.where(inside, y, 1.0)
    logf = (
        np.log(2.0 * safe_y)
        - special.gammaln(0.5)
        - 0.5 * np.log(2.0 * c * safe_gap)
        - safe_gap / (2.0 * c)
    )
    return np.where(inside, logf, -np.inf)


def spread_conditional_density(y, s_prev1, s_prev2, r_prev2, sigma_prev2, params: GarchParams):
    """
    φ(y) = 2y / (Γ(½) √(2c(y² - c*))) · exp(-(y² - c*) / (2c)) para y > √c*, 0 en otro caso,
    con c* = a s²_{t-1} + b(w + α r²_{t-2} + β σ²_{t-2} + γ s²_{t-2}).
    """
    if params.c <= 0:
        raise ConfigError("La densidad del spread requiere c > 0")
    c_star = _c_star(s_prev1, s_prev2, r_prev2, sigma_prev2, params)
    out = np.exp(_log_spread_density(y, c_star, params.c))
    return float(out) if np.ndim(out) == 0 else out


# === Oráculos de TE ===

def _stationary_run(params: GarchParams, length: int, rng: RngHandle):
    r, s, sig = simulate_garch_spread(params, length, rng)
    return r.values, s.values, sig.values


def _summarize_log_ratios(log_ratios: np.ndarray, support_violations: int = 0) -> OracleResult:
    finite = np.isfinite(log_ratios)
    rejected = int((~finite).sum())
    used = log_ratios[finite]
    if used.size < 2:
        raise NumericError("Todas las muestras del oráculo fueron rechazadas (densidad nula)")
    if rejected:
        log(f"Oráculo TE: {rejected} muestras no finitas descartadas", "warning")
    value = float(used.mean())
    stderr = float(used.std(ddof=1) / np.sqrt(used.size))
    return OracleResult(value, value - 1.96 * stderr, value + 1.96 * stderr, stderr, int(used.size), rejected,
                        support_violations)


def theoretical_te_s_to_r(
    params: GarchParams, n_outer: int = ORACLE_N_OUTER, n_inner: int = ORACLE_N_INNER, rng: RngHandle = None
) -> OracleResult:
    """
    E[log f(r_t | r_{t-1}, s_{t-1}) / f(r_t | r_{t-1})] por Monte Carlo. σ_{t-1} (y s_{t-1}
    en el denominador) se marginalizan muestreando de una trayectoria estacionaria independiente.
    """
    if not params.stationary:
        raise ConfigError("El oráculo s→r requiere parámetros estacionarios")
    if params.b != 0:
        raise ConfigError("El oráculo s→r solo está derivado para b = 0")
    rng = rng or RngHandle(0)
    r, s, _ = _stationary_run(params, n_outer + 1, rng.child(0))
    _, s_pool, sig_pool = _stationary_run(params, max(n_outer, n_inner), rng.child(1))
    gen = rng.child(2).generator()

    r_t, r_prev, s_prev = r[1:], r[:-1], s[:-1]
    log_ratios = np.empty(n_outer)
    for lo in range(0, n_outer, OUTER_CHUNK):
        hi = min(lo + OUTER_CHUNK, n_outer)
        idx = gen.integers(0, sig_pool.size, size=(hi - lo, n_inner))
        base = params.w + params.alpha * np.square(r_prev[lo:hi, None]) + params.beta * np.square(sig_pool[idx])
        var_num = base + params.gamma * np.square(s_prev[lo:hi, None])
        var_den = base + params.gamma * np.square(s_pool[idx])
        x = r_t[lo:hi, None]
        log_num = special.logsumexp(stats.norm.logpdf(x, scale=np.sqrt(var_num)), axis=1) - np.log(n_inner)
        log_den = special.logsumexp(stats.norm.logpdf(x, scale=np.sqrt(var_den)), axis=1) - np.log(n_inner)
        log_ratios[lo:hi] = log_num - log_den
    return _summarize_log_ratios(log_ratios)


def theoretical_te_r_to_s(
    params: GarchParams, n_outer: int = ORACLE_N_OUTER, n_inner: int = ORACLE_N_INNER, rng: RngHandle = None
) -> OracleResult:
    """
    E[log f(s_t | s_{t-1}, s_{t-2}, r_{t-1}, r_{t-2}) / f(s_t | s_{t-1}, s_{t-2})] usando φ(y).
    El numerador marginaliza σ_{t-2}; el denominador marginaliza el par (r_{t-2}, σ_{t-2}).
    """
    if params.gamma != 0:
        raise ConfigError("El oráculo r→s solo está derivado para γ = 0")
    if not params.stationary:
        raise ConfigError("El oráculo r→s requiere parámetros estacionarios")
    if params.c <= 0:
        raise ConfigError("El oráculo r→s requiere c > 0")
    rng = rng or RngHandle(0)
    r, s, sig = _stationary_run(params, n_outer + 2, rng.child(0))
    r_pool, _, sig_pool = _stationary_run(params, max(n_outer, n_inner), rng.child(1))
    gen = rng.child(2).generator()

    s_t, s1, s2 = s[2:], s[1:-1], s[:-2]
    r2, sig2 = r[:-2], sig[:-2]

    true_c_star = _c_star(s1, s2, r2, sig2, params)
    support_violations = int(np.sum(np.square(s_t) <= true_c_star))

    log_ratios = np.empty(n_outer)
    for lo in range(0, n_outer, OUTER_CHUNK):
        hi = min(lo + OUTER_CHUNK, n_outer)
        idx_num = gen.integers(0, sig_pool.size, size=(hi - lo, n_inner))
        idx_den = gen.integers(0, sig_pool.size, size=(hi - lo, n_inner))
        y = s_t[lo:hi, None]
        c_num = _c_star(s1[lo:hi, None], s2[lo:hi, None], r2[lo:hi, None], sig_pool[idx_num], params)
        c_den = _c_star(s1[lo:hi, None], s2[lo:hi, None], r_pool[idx_den], sig_pool[idx_den], params)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_num = special.logsumexp(_log_spread_density(y, c_num, params.c), axis=1) - np.log(n_inner)
            log_den = special.logsumexp(_log_spread_density(y, c_den, params.c), axis=1) - np.log(n_inner)
            log_ratios[lo:hi] = log_num - log_den
    return _summarize_log_ratios(log_ratios, support_violations)
