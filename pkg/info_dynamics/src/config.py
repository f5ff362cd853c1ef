import os
from pathlib import Path
from dotenv import load_dotenv

# Buscar .env en la raíz del repositorio (src -> info_dynamics -> raíz)
env_path = Path(__file__).parent.parent.parent / ".env"
load_dotenv(env_path)

# === Paths base ===
BASE_DIR = Path(__file__).resolve().parent.parent
OUTPUTS_BASE = os.getenv("INFO_DYNAMICS_OUTPUTS", os.path.join(BASE_DIR, "outputs"))
TEMPLATE_PATH = BASE_DIR / "src" / "reports" / "report_template.html"

# === Versión de la herramienta (va en el encabezado de cada salida) ===
TOOL_VERSION = "1.0.0"

# === Estimador KSG ===
DEFAULT_K = int(os.getenv("DEFAULT_K", 4))
BRUTE_FORCE_BELOW = 64  # puntos; por debajo no vale la pena construir el árbol
JITTER_SCALE = 1e-8

# === Selección de parámetros ===
KAPPA_MAX_SINGLE = 60   # historia k para el estudio de un solo observable
KAPPA_MAX_CROSS = 10    # historia k para el estudio entre observables
DELAY_MAX = 10
HISTORY_TIE_TOL = 0.01  # nats; AIS dentro de este margen del máximo cuenta como empate

# === Significancia ===
DEFAULT_SURROGATES = int(os.getenv("DEFAULT_SURROGATES", 100))
DEFAULT_ALPHA = float(os.getenv("DEFAULT_ALPHA", 0.05))
KS_ALPHA = 0.01
LEAD_LAG_THRESHOLD_S = 5.0

# === Semillas y paralelismo ===
DEFAULT_SEED = int(os.getenv("DEFAULT_SEED", 20240101))
DEFAULT_WORKERS = int(os.getenv("DEFAULT_WORKERS", 1))

# === Modelos ===
BURN_IN = 1000
ORACLE_N_OUTER = int(os.getenv("ORACLE_N_OUTER", 20000))
ORACLE_N_INNER = int(os.getenv("ORACLE_N_INNER", 512))

# === Microestructura ===
MINUTE_MS = 60_000
DAY_MS = 86_400_000
