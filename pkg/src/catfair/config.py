"""Experiment configuration, read from one YAML (or JSON) file.

Recognised keys::

    data.path, data.schema        CSV input and its column list
    data.population               synthetic population instead of a CSV
    protected.attribute           audited attribute
    protected.reference           reference group
    concat                        attributes joined into an intersectional one
    encoders                      list of methods or {method, smoothing_m, ...}
    model.family, model.params    "logistic" or "boosted" and its settings
    sweep.lambda, sweep.m         regularization grids for target encoding;
                                  absent keys use the default grids, an
                                  empty list disables the grid
    split.fraction, split.seed    stratified split (split.stratify optional)
    output.path, output.format    result file and "tabular" | "structured"
    theory.seeds, theory.scorer   settings of the synth subcommand
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .dataset import SEPARATOR, ColumnSchema, validate_schema
from .encoders import LAMBDA_RANGE, M_RANGE, EncoderConfig
from .theory import PopulationSpec

DEFAULT_LAMBDAS = (0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0, 5.0)
DEFAULT_MS = (0.0, 1.0, 10.0, 1e2, 1e3, 1e4, 1e5, 1e6)
REQUIRED_METHODS = {"drop", "one-hot", "target"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    protected: str
    reference: str | None = None
    data_path: str | None = None
    schema: tuple[ColumnSchema, ...] = ()
    population: PopulationSpec | None = None
    concat: tuple[str, ...] = ()
    encoders: tuple[EncoderConfig, ...] = (
        EncoderConfig("drop"), EncoderConfig("one-hot"), EncoderConfig("target"),
    )
    model_family: str = "logistic"
    model_params: dict = field(default_factory=dict)
    lambdas: tuple[float, ...] = ()
    ms: tuple[float, ...] = ()
    split_fraction: float = 0.5
    split_seed: int = 0
    stratify: str | None = None
    output_path: str | None = None
    output_format: str = "tabular"
    theory_seeds: int = 20
    theory_scorer: str = "plugin"
    source: dict = field(default_factory=dict, repr=False)

    @property
    def attribute(self) -> str:
        """Column audited by the pipeline (the concatenation if configured)."""
        return SEPARATOR.join(self.concat) if self.concat else self.protected

    @property
    def stratify_by(self) -> str:
        return self.stratify or self.attribute

    def validate(self) -> None:
        if (self.data_path is None) == (self.population is None):
            raise ConfigError("give exactly one of data.path and data.population")
        if self.data_path is not None:
            validate_schema(self.schema)
            names = {c.name for c in self.schema}
        else:
            names = set(self.population.attributes)
        for col in (self.protected, *self.concat):
            if col not in names and col != self.attribute:
                raise ConfigError(f"unknown column {col!r}")
        if self.concat and len(self.concat) < 2:
            raise ConfigError("concat needs at least two attributes")
        methods = {e.method for e in self.encoders}
        if not REQUIRED_METHODS <= methods:
            raise ConfigError(f"encoders must include {sorted(REQUIRED_METHODS)}")
        if self.model_family not in ("logistic", "boosted"):
            raise ConfigError(f"unknown model family {self.model_family!r}")
        for lam in self.lambdas:
            if not LAMBDA_RANGE[0] <= lam <= LAMBDA_RANGE[1]:
                raise ConfigError(f"lambda {lam} outside {LAMBDA_RANGE}")
        for m in self.ms:
            if not M_RANGE[0] <= m <= M_RANGE[1]:
                raise ConfigError(f"m {m} outside {M_RANGE}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError("split.fraction must lie in (0, 1)")
        if self.output_format not in ("tabular", "structured"):
            raise ConfigError("output.format must be tabular or structured")

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], base_dir: str | Path | None = None) -> "ExperimentConfig":
        raw = copy.deepcopy(dict(raw))
        data = raw.get("data") or {}
        protected = raw.get("protected") or {}
        model = raw.get("model") or {}
        sweep = raw.get("sweep") or {}
        split = raw.get("split") or {}
        output = raw.get("output") or {}
        theory = raw.get("theory") or {}
        path = data.get("path")
        if path is not None and base_dir is not None and not Path(path).is_absolute():
            path = str(Path(base_dir) / path)
        population = data.get("population")
        if "attribute" not in protected:
            raise ConfigError("protected.attribute is required")
        encoders = raw.get("encoders")
        cfg = cls(
            protected=str(protected["attribute"]),
            reference=None if protected.get("reference") is None else str(protected["reference"]),
            data_path=path,
            schema=tuple(ColumnSchema.from_dict(c) for c in data.get("schema", ())),
            population=None if population is None else PopulationSpec.from_dict(population),
            concat=tuple(raw.get("concat") or ()),
            encoders=tuple(EncoderConfig.from_dict(e) for e in encoders) if encoders else cls.encoders,
            model_family=str(model.get("family", "logistic")),
            model_params=dict(model.get("params") or {}),
            lambdas=tuple(float(v) for v in sweep.get("lambda", DEFAULT_LAMBDAS) or ()),
            ms=tuple(float(v) for v in sweep.get("m", DEFAULT_MS) or ()),
            split_fraction=float(split.get("fraction", 0.5)),
            split_seed=int(split.get("seed", 0)),
            stratify=split.get("stratify"),
            output_path=output.get("path"),
            output_format=str(output.get("format", "tabular")),
            theory_seeds=int(theory.get("seeds", 20)),
            theory_scorer=str(theory.get("scorer", "plugin")),
            source=raw,
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        data: dict[str, Any] = {}
        if self.data_path is not None:
            data = {"path": self.data_path, "schema": [c.to_dict() for c in self.schema]}
        if self.population is not None:
            data["population"] = self.population.to_dict()
        return {
            "data": data,
            "protected": {"attribute": self.protected, "reference": self.reference},
            "concat": list(self.concat),
            "encoders": [e.to_dict() for e in self.encoders],
            "model": {"family": self.model_family, "params": dict(self.model_params)},
            "sweep": {"lambda": list(self.lambdas), "m": list(self.ms)},
            "split": {"fraction": self.split_fraction, "seed": self.split_seed, "stratify": self.stratify},
            "output": {"path": self.output_path, "format": self.output_format},
            "theory": {"seeds": self.theory_seeds, "scorer": self.theory_scorer},
        }


def set_key(raw: dict, dotted: str, value: Any) -> None:
    """Set ``a.b.c`` in a nested dict, creating levels as needed."""
    node = raw
    *parents, leaf = dotted.split(".")
    for key in parents:
        node = node.setdefault(key, {})
    node[leaf] = value


def load_config(path: str | Path, overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"missing config file: {path}")
    raw = yaml.safe_load(path.read_text()) or {}
    for key, value in (overrides or {}).items():
        set_key(raw, key, value)
    return ExperimentConfig.from_dict(raw, base_dir=path.parent)
