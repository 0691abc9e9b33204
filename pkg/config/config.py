import os
from dotenv import load_dotenv

load_dotenv()

TOOL_VERSION = "0.1"

CONFIG_DIR = os.path.dirname(os.path.abspath(__file__))
COSTS_FILENAME = "costs.yaml"
PACKAGED_COSTS_FILE = os.path.join(CONFIG_DIR, COSTS_FILENAME)

LOGS_DIR = os.getenv("MODEL_RISK_LOG_DIR", "logs")

DEFAULT_SEED = int(os.getenv("MODEL_RISK_SEED", "2024"))
DEFAULT_SAMPLES = int(os.getenv("MODEL_RISK_SAMPLES", "1000000"))
DEFAULT_VOPI_SAMPLES = int(os.getenv("MODEL_RISK_VOPI_SAMPLES", "100000"))
CHUNK_SIZE = int(os.getenv("MODEL_RISK_CHUNK_SIZE", "65536"))
DEFAULT_THREADS = int(os.getenv("MODEL_RISK_THREADS", "1"))

MIN_RISK_SAMPLES = 1_000
MIN_VOPI_SAMPLES = 10_000

# Uniform Dirichlet prior over model outputs
DEFAULT_PRIOR = 1.0

NO_ANOMALY = "none"
CRACKING = "cracking"
POROSITY = "porosity"
LACK_OF_PENETRATION = "lack_of_penetration"
CLASS_LABELS = (NO_ANOMALY, CRACKING, POROSITY, LACK_OF_PENETRATION)

HISTOGRAM_BINS = 60
MARGINAL_GRID_POINTS = 201
