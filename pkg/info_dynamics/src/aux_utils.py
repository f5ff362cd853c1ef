import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path

import numpy as np
import pandas as pd

from src.config import TOOL_VERSION


def log(msg, level="info"):
    colors = {
        "info": "\033[94m",    # azul
        "success": "\033[92m", # verde
        "warning": "\033[93m", # amarillo
        "error": "\033[91m"    # rojo
    }
    reset = "\033[0m"
    prefix = f"[{datetime.now().strftime('%H:%M:%S')}]"
    # stderr: las salidas en stdout y en disco no deben llevar la hora
    print(f"{colors.get(level, '')}{prefix} {msg}{reset}", file=sys.stderr)


# === Errores ===

class InfoDynamicsError(Exception):
    exit_code = 4


class ConfigError(InfoDynamicsError, ValueError):
    """Configuración o parámetros inválidos."""
    exit_code = 2


class DataError(InfoDynamicsError, ValueError):
    """Datos de entrada mal formados o insuficientes."""
    exit_code = 3


class NumericError(InfoDynamicsError, RuntimeError):
    """Fallo numérico: sistema singular, cuadratura sin convergencia, densidad nula."""
    exit_code = 4


class PipelineStageError(InfoDynamicsError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"Falló la etapa '{stage}': {cause}")
        self.stage = stage
        self.cause = cause
        # fallos sin clasificar dentro de una etapa salen como fallo numérico
        self.exit_code = getattr(cause, "exit_code", NumericError.exit_code)


@contextmanager
def stage(name: str):
    """Envuelve una etapa del pipeline para que cualquier fallo lleve su nombre."""
    log(f"Etapa: {name}", "info")
    try:
        yield
    except PipelineStageError:
        raise
    except Exception as e:
        log(f"Error en la etapa '{name}': {e}", "error")
        raise PipelineStageError(name, e) from e


# === JSON ===

def _to_builtin(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Tipo no serializable: {type(obj).__name__}")


def save_json(data, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, ensure_ascii=False, sort_keys=True, default=_to_builtin)
        f.write("\n")
    log(f"JSON guardado en {path}", "success")


def load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"No existe el archivo {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"JSON inválido en {path} (línea {e.lineno}): {e.msg}") from e


# === Encabezados de salida ===

def config_hash(config) -> str:
    """Hash estable (sha256, 12 caracteres) de una configuración JSON-serializable."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_to_builtin)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def output_header(config, seed) -> dict:
    return {"tool_version": TOOL_VERSION, "config_hash": config_hash(config), "seed": seed}


def save_csv(df: pd.DataFrame, path, header: dict):
    """Escribe un CSV precedido por un bloque de comentarios `# clave=valor`."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        for key in sorted(header):
            f.write(f"# {key}={header[key]}\n")
        df.to_csv(f, index=False, float_format="%.12g", lineterminator="\n")
    log(f"CSV guardado en {path}", "success")


def read_csv(path, **kwargs) -> pd.DataFrame:
    if not os.path.exists(path):
        raise DataError(f"No existe el archivo {path}")
    return pd.read_csv(path, comment="#", **kwargs)


def header_lines(path) -> int:
    """Número de líneas `# clave=valor` al inicio del archivo."""
    count = 0
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            count += 1
    return count


def prepare_folders(base_path, name, components):
    """Crea los directorios de salida organizados por componente"""
    output_dir = os.path.join(base_path, name)
    os.makedirs(output_dir, exist_ok=True)

    dirs = {k: os.path.join(output_dir, k) for k in components}
    for d in dirs.values():
        os.makedirs(d, exist_ok=True)
    dirs["root"] = output_dir
    return dirs


# === Paralelismo ===

def map_parallel(func, items, workers: int = 1):
    """
    Aplica `func` a cada elemento conservando el orden de entrada. Con más de
    un trabajador usa un ThreadPoolExecutor; las consultas k-NN liberan el GIL.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="info-dyn") as executor:
        return list(executor.map(func, items))
