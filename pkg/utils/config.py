"""
Experiment configuration.
Defaults live in defaults.yaml next to this file; a key = value file and command-line flags override them in that order.
"""

import logging
import os
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .data import check_digits
from .errors import ConfigurationError
from .network import QuantumLayerKind
from .quantum.circuits import Topology
from .quantum.statevector import ObservableKind

load_dotenv()

LOG_LEVEL_ENV_VAR = "ENSEMBLE_VQC_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Load defaults
defaults_path = Path(__file__).parent / "defaults.yaml"
with open(defaults_path, "r") as f:
    DEFAULTS_CONFIG = yaml.safe_load(f)

DEFAULTS: Dict[str, Any] = {}
for section in ("experiment", "diagnostics", "gradcheck"):
    DEFAULTS.update(DEFAULTS_CONFIG.get(section, {}))

MIN_QUBITS, MAX_QUBITS = 2, 8


def parse_range(value: Union[str, int, List[int], Tuple[int, ...]]) -> List[int]:
    """
    "a:b" (inclusive), "a,b,c" or a single integer.
    """
    if isinstance(value, int):
        return [value]
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    text = str(value).strip()
    try:
        if ":" in text:
            start, stop = (int(part) for part in text.split(":"))
            values = list(range(start, stop + 1))
        else:
            values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigurationError(f"cannot parse range {text!r}") from e
    if not values:
        raise ConfigurationError(f"empty range {text!r}")
    return values


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: QuantumLayerKind = QuantumLayerKind.ENSEMBLE
    topology: Topology = Topology.NEAREST_NEIGHBOR
    observable: ObservableKind = ObservableKind.LOCAL
    nq: int = Field(4, ge=MIN_QUBITS, le=MAX_QUBITS)
    layers: int = Field(4, ge=1)
    digits: Tuple[int, ...] = (0, 1)
    epochs: int = Field(10, ge=0)
    batch_size: int = Field(32, ge=1)
    lr: float = Field(0.001, gt=0.0)
    seed: int = 0
    repeats: int = Field(1, ge=1)
    train_size: int = Field(1024, ge=0)
    test_size: int = Field(512, ge=0)
    pre_layers: int = Field(1, ge=1)
    post_layers: int = Field(1, ge=1)
    out_path: str = "-"
    samples: int = Field(2000, ge=2)
    nq_range: Optional[List[int]] = None
    layers_range: Optional[List[int]] = None
    frozen: bool = False
    tolerance: float = Field(1e-5, gt=0.0)
    fd_step: float = Field(1e-5, gt=0.0)
    check_batch: int = Field(4, ge=1)
    check_entries: int = Field(12, ge=1)

    @field_validator("digits", mode="before")
    @classmethod
    def _parse_digits(cls, value):
        if isinstance(value, int):
            value = [value]
        elif isinstance(value, str):
            value = [part for part in value.split(",") if part.strip()]
        return check_digits(int(d) for d in value)

    @field_validator("nq_range", "layers_range", mode="before")
    @classmethod
    def _parse_range(cls, value):
        if value is None or (isinstance(value, str) and not value.strip()):
            return None
        return parse_range(value)

    @field_validator("nq_range")
    @classmethod
    def _check_qubit_range(cls, value):
        if value is not None and (not value or any(not MIN_QUBITS <= n <= MAX_QUBITS for n in value)):
            raise ValueError(f"qubit counts must lie in [{MIN_QUBITS}, {MAX_QUBITS}]")
        return value

    @field_validator("layers_range")
    @classmethod
    def _check_layer_range(cls, value):
        if value is not None and (not value or min(value) < 1):
            raise ValueError("layer counts must be >= 1")
        return value

    def qubit_grid(self) -> List[int]:
        return self.nq_range or [self.nq]

    def layer_grid(self) -> List[int]:
        return self.layers_range or [self.layers]

    def repeat_seeds(self) -> List[int]:
        return [self.seed + i for i in range(self.repeats)]


CONFIG_KEYS = tuple(ExperimentConfig.model_fields)


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """One `key = value` per line; `#` starts a comment."""
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigurationError(f"{source}:{number}: unknown setting {key!r}")
        values[key] = value
    return values


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {path}: {e.strerror}") from e
    return parse_config_text(text, str(path))


def build_config(file_values: Optional[Mapping[str, Any]] = None,
                 overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """YAML defaults < file values < overrides (None overrides are ignored)."""
    merged = dict(DEFAULTS)
    merged.update(file_values or {})
    merged.update({key: value for key, value in (overrides or {}).items() if value is not None})
    unknown = sorted(set(merged) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigurationError(f"unknown settings: {', '.join(unknown)}")
    try:
        return ExperimentConfig(**merged)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in error['loc'])}: {error['msg']}" for error in e.errors()
        )
        raise ConfigurationError(f"invalid configuration: {problems}") from e


def _format_value(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def dump_config(config: ExperimentConfig) -> str:
    """The resolved configuration in key = value form; unset optional settings are left out."""
    lines = ["# ensemble-vqc configuration"]
    for key, value in config.model_dump().items():
        if value is None:
            continue
        lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def setup_logging(level: Optional[str] = None) -> None:
    """Root logger on stderr so CSV written to stdout stays clean."""
    name = (level or os.getenv(LOG_LEVEL_ENV_VAR) or "INFO").upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        raise ConfigurationError(f"unknown log level {name!r}")
    logging.basicConfig(level=numeric, format=LOG_FORMAT, stream=sys.stderr, force=True)
