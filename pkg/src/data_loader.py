import os
import re
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import yaml

from config.config import COSTS_FILENAME, PACKAGED_COSTS_FILE
from src.cost_model import CostConfig, FailureCostMixture
from src.reliability import ConfusionMatrix
from utils.custom_exception import InputError
from utils.logger import get_logger

logger = get_logger(__name__)

HEADER_LABEL = "true_class"


class ConfusionMatrixLoader:
    def __init__(self, csv_path: str):
        self.csv_path = csv_path

    def clean_matrix_frame(self, df: pd.DataFrame) -> pd.DataFrame:
        """Strip whitespace from labels and cells"""
        df = df.copy()
        df.columns = [str(c).strip() for c in df.columns]
        for col in df.columns:
            df[col] = df[col].astype(str).str.strip()
        return df

    def _read_frame(self) -> pd.DataFrame:
        try:
            return pd.read_csv(self.csv_path, dtype=str, keep_default_na=False, skip_blank_lines=True)
        except FileNotFoundError:
            raise InputError("confusion matrix file not found", source=self.csv_path)
        except pd.errors.EmptyDataError:
            raise InputError("confusion matrix file is empty", source=self.csv_path, line=1)
        except pd.errors.ParserError as e:
            match = re.search(r"line (\d+)", str(e))
            line = int(match.group(1)) if match else None
            raise InputError(f"malformed CSV: {e}", source=self.csv_path, line=line)

    def load(self) -> ConfusionMatrix:
        """Load a confusion matrix whose header is ``true_class,<label1>,...,<labelK>``"""
        df = self.clean_matrix_frame(self._read_frame())

        if df.columns[0] != HEADER_LABEL:
            raise InputError(
                f"first header cell must be {HEADER_LABEL!r}, got {df.columns[0]!r}",
                source=self.csv_path, line=1, column=1,
            )
        classes = list(df.columns[1:])
        if not classes:
            raise InputError("header lists no class labels", source=self.csv_path, line=1)
        if len(set(classes)) != len(classes):
            raise InputError(f"duplicate class labels in header: {classes}", source=self.csv_path, line=1)

        rows: Dict[str, List[int]] = {}
        for position, record in enumerate(df.itertuples(index=False)):
            line = position + 2
            label = record[0]
            if label not in classes:
                raise InputError(f"row label {label!r} is not a header class", source=self.csv_path,
                                 line=line, column=1)
            if label in rows:
                raise InputError(f"duplicate row for class {label!r}", source=self.csv_path, line=line, column=1)
            counts = []
            for offset, cell in enumerate(record[1:]):
                if not re.fullmatch(r"\d+", cell):
                    raise InputError(f"count must be a non-negative integer, got {cell!r}",
                                     source=self.csv_path, line=line, column=offset + 2)
                counts.append(int(cell))
            rows[label] = counts

        missing = [c for c in classes if c not in rows]
        if missing:
            raise InputError(f"row and column label sets differ; missing rows for {missing}",
                             source=self.csv_path)

        matrix = np.array([rows[c] for c in classes], dtype=np.int64)
        try:
            cm = ConfusionMatrix(tuple(classes), matrix)
        except InputError as e:
            raise InputError(str(e), source=self.csv_path)

        logger.info(f"Loaded {cm.k}x{cm.k} confusion matrix from {self.csv_path} ({int(matrix.sum())} cases)")
        return cm


def resolve_costs_path(explicit: Optional[str] = None) -> str:
    """Explicit path > ``costs.yaml`` in the working directory > packaged defaults."""
    if explicit:
        return explicit
    local = os.path.join(os.getcwd(), COSTS_FILENAME)
    if os.path.isfile(local):
        return local
    return PACKAGED_COSTS_FILE


class CostConfigLoader:
    SECTIONS = {"labels", "manual_evaluation_cost", "repair_cost", "failure_multiplier",
                "failure_cost_mixture", "hybrid"}

    def __init__(self, path: str):
        self.path = path
        self._root = None

    def _mark(self, keys: Sequence[str]):
        """Line/column (1-based) of a nested key, if it can be located"""
        node = located = self._root
        for key in keys:
            if not isinstance(node, yaml.MappingNode):
                break
            match = next((value for k, value in node.value if k.value == key), None)
            if match is None:
                break
            node = located = match
        if located is None:
            return None, None
        return located.start_mark.line + 1, located.start_mark.column + 1

    def _error(self, message: str, *keys: str) -> InputError:
        line, column = self._mark(keys)
        return InputError(message, source=self.path, line=line, column=column)

    def _section(self, data: Dict[str, Any], key: str, kind: type, default: Any = None) -> Any:
        if key not in data:
            if default is None:
                raise self._error(f"missing required section {key!r}")
            return default
        value = data[key]
        if not isinstance(value, kind):
            raise self._error(f"section {key!r} must be a {kind.__name__}", key)
        return value

    def _number(self, value: Any, *keys: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self._error(f"{'.'.join(keys)} must be a number, got {value!r}", *keys)
        return float(value)

    def _mapping(self, value: Any, *keys: str) -> Dict[str, Any]:
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise self._error(f"{'.'.join(keys)} must be a mapping, got {value!r}", *keys)
        return value

    def load(self) -> CostConfig:
        try:
            with open(self.path, encoding="utf-8") as f:
                text = f.read()
        except FileNotFoundError:
            raise InputError("cost configuration file not found", source=self.path)

        try:
            self._root = yaml.compose(text)
            data = yaml.safe_load(text)
        except yaml.MarkedYAMLError as e:
            mark = e.problem_mark
            raise InputError(f"malformed YAML: {e.problem}", source=self.path,
                             line=mark.line + 1 if mark else None, column=mark.column + 1 if mark else None)

        if not isinstance(data, dict):
            raise InputError("cost configuration must be a mapping", source=self.path, line=1, column=1)
        unknown = sorted(set(data) - self.SECTIONS)
        if unknown:
            raise self._error(f"unknown configuration section(s): {unknown}", unknown[0])

        labels = self._section(data, "labels", dict, {"no_anomaly": CostConfig().no_anomaly})
        repair = self._section(data, "repair_cost", dict)
        multiplier = self._section(data, "failure_multiplier", dict)
        mixture_data = self._section(data, "failure_cost_mixture", dict)
        hybrid = self._section(data, "hybrid", dict, {"escalation_set": list(CostConfig().escalation_set)})
        if "manual_evaluation_cost" not in data:
            raise self._error("missing required section 'manual_evaluation_cost'")

        try:
            weights = mixture_data.get("dirichlet_weights")
            if not isinstance(weights, list):
                raise self._error("dirichlet_weights must be a list of two numbers",
                                  "failure_cost_mixture", "dirichlet_weights")
            minor = self._mapping(mixture_data.get("minor"), "failure_cost_mixture", "minor")
            major = self._mapping(mixture_data.get("major"), "failure_cost_mixture", "major")
            mixture = FailureCostMixture(
                dirichlet_weights=tuple(self._number(w, "failure_cost_mixture", "dirichlet_weights") for w in weights),
                minor_location=self._number(minor.get("location"), "failure_cost_mixture", "minor", "location"),
                minor_scale=self._number(minor.get("scale"), "failure_cost_mixture", "minor", "scale"),
                major_shape=self._number(major.get("shape"), "failure_cost_mixture", "major", "shape"),
                major_scale=self._number(major.get("scale"), "failure_cost_mixture", "major", "scale"),
            )
            cfg = CostConfig(
                manual_evaluation_cost=self._number(data["manual_evaluation_cost"], "manual_evaluation_cost"),
                repair_cost={str(k): self._number(v, "repair_cost", str(k)) for k, v in repair.items()},
                failure_multiplier={str(k): self._number(v, "failure_multiplier", str(k))
                                    for k, v in multiplier.items()},
                mixture=mixture,
                no_anomaly=str(labels.get("no_anomaly", CostConfig().no_anomaly)),
                escalation_set=tuple(hybrid.get("escalation_set") or ()),
            )
        except InputError as e:
            if e.source is not None:
                raise
            raise InputError(str(e), source=self.path)

        logger.info(f"Loaded cost configuration from {self.path} (hash {cfg.config_hash()[:12]})")
        return cfg
