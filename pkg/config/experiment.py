"""Declarative experiment configuration.

A run is fully described by one YAML file validated into
:class:`ExperimentConfig`. ``--set dotted.key=value`` overrides are applied
to the raw mapping before validation so they go through the same checks.
"""

from __future__ import annotations

import hashlib
import json
import logging
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self) -> str:
            return str(self.value)

        def __format__(self, spec: str) -> str:
            return str(self.value).__format__(spec)
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.errors import ConfigError
from core.models import MlpShape

log = logging.getLogger(__name__)

PRESETS_DIR = Path(__file__).resolve().parent / "presets"


class Method(StrEnum):
    FEDAVG = "fedavg"
    FEDPROX = "fedprox"
    FEDDF = "feddf"
    FEDPROJ = "fedproj"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LocalConfig(_Section):
    """Client-side training knobs."""

    method: Method = Method.FEDPROJ
    epochs: int = Field(5, ge=0)
    batch_size: int = Field(8, ge=1)
    lr: float = Field(1e-3, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    epsilon: float = Field(1e-8, ge=0)
    projection_rate: float = Field(1.0, ge=0, le=1)
    prox_mu: float = Field(0.01, ge=0)
    memory_temperature: float = Field(1.0, gt=0)
    # g_glob from labelled cross-entropy on the memory rows instead of KL
    labeled_public_gradient: bool = False
    # rows drawn from the memory per step; None uses the whole buffer
    memory_batch_size: int | None = Field(None, ge=1)


class DistillConfig(_Section):
    enabled: bool = True
    epochs: int = Field(1, ge=0)
    lr: float = Field(1e-3, gt=0)
    temperature: float = Field(3.0, gt=0)
    alpha: float = Field(0.0, ge=0)
    batch_size: int = Field(32, ge=1)


class BlobsConfig(_Section):
    class_count: int = Field(3, ge=1)
    per_class_n: int = Field(100, ge=1)
    centers: list[list[float]] = Field(
        default_factory=lambda: [[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]]
    )
    std: float = Field(1.0, ge=0)

    @model_validator(mode="after")
    def _centers_match(self) -> BlobsConfig:
        if len(self.centers) != self.class_count:
            raise ValueError(
                f"centers has {len(self.centers)} entries but class_count is {self.class_count}"
            )
        return self


class DataConfig(_Section):
    source: Literal["csv", "blobs"] = "csv"
    csv_path: Path | None = None  # None: bundled iris.csv
    has_header: bool = True
    blobs: BlobsConfig = Field(default_factory=BlobsConfig)
    pca: bool = True
    test_fraction: float = Field(0.2, gt=0, lt=1)
    public_fraction: float = Field(0.2, gt=0, lt=1)
    public_csv: Path | None = None
    memory_size: int = Field(20, ge=1)


class PartitionConfig(_Section):
    kind: Literal["dirichlet", "pilot"] = "dirichlet"
    beta: float = Field(0.5, gt=0)
    dominant_share: float = Field(0.8, gt=0, lt=1)


class ModelConfig(_Section):
    hidden_sizes: list[int] = Field(default_factory=lambda: [16, 16])

    def shape_for(self, input_dim: int, class_count: int) -> MlpShape:
        return MlpShape((input_dim, *self.hidden_sizes, class_count))


class ExperimentConfig(_Section):
    method: Method = Method.FEDPROJ
    rounds: int = Field(20, ge=0)
    n_clients: int = Field(3, ge=1)
    sample_rate: float = Field(1.0, gt=0, le=1)
    master_seed: int = Field(0, ge=0)
    eval_every: int = Field(1, ge=1)
    data: DataConfig = Field(default_factory=DataConfig)
    partition: PartitionConfig = Field(default_factory=PartitionConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    local: LocalConfig = Field(default_factory=LocalConfig)
    distill: DistillConfig = Field(default_factory=DistillConfig)
    boundary_resolution: int = Field(50, ge=2)

    @model_validator(mode="after")
    def _method_consistency(self) -> ExperimentConfig:
        forced: dict[str, Any] = {}
        if self.method in (Method.FEDAVG, Method.FEDPROX):
            if self.distill.enabled:
                forced["distill.enabled"] = False
            self.distill = self.distill.model_copy(update={"enabled": False})
        elif self.method is Method.FEDDF:
            if self.local.projection_rate != 0.0:
                forced["local.projection_rate"] = 0.0
            if self.distill.alpha != 0.0:
                forced["distill.alpha"] = 0.0
            if not self.distill.enabled:
                forced["distill.enabled"] = True
            self.local = self.local.model_copy(update={"projection_rate": 0.0})
            self.distill = self.distill.model_copy(update={"alpha": 0.0, "enabled": True})
        self.local = self.local.model_copy(update={"method": self.method})
        for key, value in forced.items():
            log.warning("method %s forces %s=%s", self.method.value, key, value)
        if self.partition.kind == "pilot" and self.sample_rate != 1.0:
            log.warning("pilot partition with sample_rate %.2f skips some clients", self.sample_rate)
        return self

    def fingerprint(self) -> str:
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ── loading ──────────────────────────────────────────────────────────


def _check_dotted(dotted: str) -> None:
    """Reject override paths that do not name a field of the schema."""
    model: type[BaseModel] = ExperimentConfig
    keys = dotted.split(".")
    for depth, key in enumerate(keys):
        field = model.model_fields.get(key)
        if field is None:
            where = ".".join(keys[:depth]) or "the top level"
            raise ConfigError(f"{dotted}: unknown field '{key}' in {where}")
        if depth == len(keys) - 1:
            return
        annotation = field.annotation
        if not (isinstance(annotation, type) and issubclass(annotation, BaseModel)):
            raise ConfigError(f"{dotted}: '{key}' is not a section")
        model = annotation


def _set_dotted(target: dict[str, Any], dotted: str, value: Any) -> None:
    _check_dotted(dotted)
    keys = dotted.split(".")
    node = target
    for key in keys[:-1]:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{dotted}: '{key}' is not a section")
        node = child
    node[keys[-1]] = value


def parse_override(item: str) -> tuple[str, Any]:
    """Split ``dotted.key=value``; the value is parsed as a YAML scalar."""
    key, sep, raw = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override '{item}' is not of the form key=value")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"override '{item}': {exc}") from exc
    return key.strip(), value


def _format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{where}: {err['msg']}")
    return "; ".join(lines)


def build_config(
    raw: dict[str, Any] | None = None, overrides: list[str] | None = None
) -> ExperimentConfig:
    data: dict[str, Any] = json.loads(json.dumps(raw or {}, default=str))
    for item in overrides or []:
        key, value = parse_override(item)
        _set_dotted(data, key, value)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation_error(exc)) from exc


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> ExperimentConfig:
    raw: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a mapping at the top level")
        raw = loaded or {}
    return build_config(raw, overrides)


def load_preset(name: str, overrides: list[str] | None = None) -> ExperimentConfig:
    path = PRESETS_DIR / f"{name}.yaml"
    if not path.exists():
        raise ConfigError(f"no bundled preset named '{name}'")
    return load_config(path, overrides)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)
