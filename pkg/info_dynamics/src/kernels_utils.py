"""
Primitivas numéricas: digamma, búsqueda k-NN en norma máxima (Chebyshev),
muestreo reproducible y cuadratura unidimensional.
"""
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special
from sklearn.neighbors import KDTree

from src.aux_utils import ConfigError, DataError, NumericError
from src.config import BRUTE_FORCE_BELOW, JITTER_SCALE


@dataclass(frozen=True)
class PointCloud:
    """Matriz n × d de muestras finitas. Se guarda como arreglo de solo lectura."""
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise DataError(f"Nube de puntos inválida con forma {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DataError("La nube de puntos contiene valores no finitos")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @classmethod
    def from_blocks(cls, *blocks) -> "PointCloud":
        cols = [np.asarray(b, dtype=float).reshape(len(b), -1) for b in blocks if b is not None]
        return cls(np.hstack(cols))

    def project(self, columns: Sequence[int]) -> "PointCloud":
        return PointCloud(self.points[:, list(columns)])


@dataclass(frozen=True)
class RngHandle:
    """
    Semilla maestra + identificador de flujo. El mismo par (seed, stream)
    produce siempre la misma secuencia. `stream` puede ser un entero o una
    tupla de enteros (ventana, par, sustituto, ...).
    """
    seed: int
    stream: tuple = ()

    def __post_init__(self):
        stream = self.stream
        if isinstance(stream, (int, np.integer)):
            stream = (int(stream),)
        stream = tuple(int(s) for s in stream)
        if any(s < 0 for s in stream) or int(self.seed) < 0:
            raise ConfigError("La semilla y los identificadores de flujo deben ser no negativos")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream", stream)

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream))

    def child(self, *keys: int) -> "RngHandle":
        return RngHandle(self.seed, self.stream + tuple(int(k) for k in keys))


def digamma(x):
    """ψ(x) para x > 0 (escalar o arreglo)."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise NumericError("digamma solo está definida aquí para x > 0")
    out = special.digamma(arr)
    return float(out) if np.ndim(x) == 0 else out


# === Vecinos más cercanos ===

def _chebyshev_matrix(points: np.ndarray) -> np.ndarray:
    dist = np.abs(points[:, None, :] - points[None, :, :]).max(axis=2)
    np.fill_diagonal(dist, np.inf)
    return dist


class KnnIndex:
    """
    Índice de solo lectura sobre una PointCloud. Usa KDTree con métrica
    Chebyshev y cae a búsqueda exhaustiva para nubes pequeñas.
    """

    def __init__(self, cloud: PointCloud, brute_force_below: int = BRUTE_FORCE_BELOW):
        self.cloud = cloud
        self._tree = None
        self._dist = None
        if cloud.n < brute_force_below:
            self._dist = _chebyshev_matrix(cloud.points)
        else:
            self._tree = KDTree(cloud.points, metric="chebyshev")

    def kth_radius(self, K: int) -> np.ndarray:
        """Distancia al K-ésimo vecino de cada punto (excluyendo al propio punto)."""
        if K < 1 or K >= self.cloud.n:
            raise DataError(f"K={K} debe cumplir 1 ≤ K < n={self.cloud.n}")
        if self._tree is None:
            return np.partition(self._dist, K - 1, axis=1)[:, K - 1]
        # el propio punto ocupa una de las K+1 posiciones (distancia 0)
        dist, _ = self._tree.query(self.cloud.points, k=K + 1)
        return dist[:, K]

    def count_within(self, radii: np.ndarray, strict: bool = True) -> np.ndarray:
        """Cuenta, para cada punto, los otros puntos a distancia < radio (o ≤ si strict=False)."""
        radii = np.asarray(radii, dtype=float)
        if self._tree is None:
            if strict:
                return (self._dist < radii[:, None]).sum(axis=1)
            return (self._dist <= radii[:, None]).sum(axis=1)

        if strict:
            # query_radius usa d <= r; el flotante anterior a r da la desigualdad estricta
            r = np.nextafter(radii, 0.0)
        else:
            r = radii
        counts = self._tree.query_radius(self.cloud.points, r=np.maximum(r, 0.0), count_only=True) - 1
        if strict:
            counts = np.where(radii > 0, counts, 0)
        return counts


def knn_radius(cloud: PointCloud, query_index: int, K: int) -> float:
    """ε = distancia en norma máxima al K-ésimo vecino del punto `query_index`."""
    if K >= cloud.n:
        raise DataError(f"K={K} debe ser menor que n={cloud.n}")
    dist = np.abs(cloud.points - cloud.points[query_index]).max(axis=1)
    dist[query_index] = np.inf
    return float(np.partition(dist, K - 1)[K - 1])


def count_within(cloud: PointCloud, query_index: int, eps: float, strict: bool = True) -> int:
    if not 0 <= query_index < cloud.n:
        raise DataError(f"Índice {query_index} fuera de rango")
    dist = np.abs(cloud.points - cloud.points[query_index]).max(axis=1)
    dist[query_index] = np.inf
    return int((dist < eps).sum() if strict else (dist <= eps).sum())


# === Muestreo ===

def sample_standard(rng: RngHandle, dist: str, size: int) -> np.ndarray:
    gen = rng.generator()
    if dist == "normal":
        return gen.standard_normal(size)
    if dist == "chi_square_1":
        return gen.chisquare(1, size)
    raise ConfigError(f"Distribución no soportada: {dist}")


def add_jitter(values: np.ndarray, rng: RngHandle, scale: float = JITTER_SCALE) -> np.ndarray:
    """Ruido uniforme de amplitud scale·std por columna, para datos muy discretizados."""
    values = np.asarray(values, dtype=float)
    std = values.std(axis=0)
    amplitude = scale * np.where(std > 0, std, 1.0)
    noise = rng.generator().uniform(-1.0, 1.0, size=values.shape)
    return values + amplitude * noise


# === Cuadratura ===

def integrate_1d(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10, limit: int = 200) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, _ = integrate.quad(f, a, b, epsabs=tol, epsrel=tol, limit=limit)
        except integrate.IntegrationWarning as e:
            raise NumericError(f"La cuadratura no convergió en [{a}, {b}]: {e}") from e
    return float(value)
