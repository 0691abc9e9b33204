"""Report emission: JSON reports with a run manifest, CSV plot data, PGM images."""

import json
import os
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd

from config.config import CHUNK_SIZE, TOOL_VERSION
from utils.custom_exception import InputError
from utils.logger import get_logger

logger = get_logger(__name__)

CSV_FLOAT_FORMAT = "%.10g"
# Fields allowed to differ between otherwise identical runs
VOLATILE_FIELDS = ("wall_clock_seconds", "created_at")


@dataclass
class RunManifest:
    command: str
    seed: Optional[int] = None
    samples: Dict[str, int] = field(default_factory=dict)
    config_hash: Optional[str] = None
    labels: Sequence[str] = ()
    tool_version: str = TOOL_VERSION
    chunk_size: int = CHUNK_SIZE
    extra: Dict[str, Any] = field(default_factory=dict)
    wall_clock_seconds: float = 0.0
    created_at: str = ""
    _started: float = field(default_factory=time.perf_counter, repr=False)

    def finish(self) -> "RunManifest":
        self.wall_clock_seconds = round(time.perf_counter() - self._started, 3)
        self.created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return self

    def to_dict(self) -> Dict:
        data = asdict(self)
        data.pop("_started")
        data["labels"] = list(self.labels)
        return data


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


def dumps_report(payload: Dict, manifest: RunManifest) -> str:
    body = dict(payload)
    body["manifest"] = manifest.to_dict()
    return json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n"


def write_json_report(path: str, payload: Dict, manifest: RunManifest) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_report(payload, manifest.finish()))
    logger.info(f"Wrote report {path}")
    return path


def read_json_report(path: str) -> Dict:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise InputError("report file not found", source=path)
    except json.JSONDecodeError as e:
        raise InputError(f"malformed JSON: {e.msg}", source=path, line=e.lineno, column=e.colno)


def write_csv(path: str, frame: pd.DataFrame) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def grid_frame(values: np.ndarray) -> pd.DataFrame:
    """Long-form (row, col, value) frame of a 2-D grid."""
    rows, cols = np.indices(values.shape)
    return pd.DataFrame({"row": rows.ravel(), "col": cols.ravel(), "value": np.asarray(values, dtype=float).ravel()})


def write_grid_csv(path: str, values: np.ndarray) -> str:
    return write_csv(path, grid_frame(values))


def to_pgm_bytes(values: np.ndarray) -> bytes:
    """Binary 8-bit PGM (P5) of a grid with values in [0, 1]."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise InputError(f"PGM images must be 2-D, got shape {values.shape}")
    pixels = np.rint(np.clip(values, 0.0, 1.0) * 255).astype(np.uint8)
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def write_pgm(path: str, values: np.ndarray) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(to_pgm_bytes(values))
    return path
