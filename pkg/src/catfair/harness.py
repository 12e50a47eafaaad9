"""Experiment runner: split, encode, train, audit, and sweep the target
encoder's regularization strength.

Every metric is measured on the test split. The encoder only ever sees
training labels.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Any, Sequence

import numpy as np

from . import encoders, metrics, models, theory
from .config import ExperimentConfig
from .dataset import SEPARATOR, Dataset, concat_attributes, first_appearance, load_csv, stratified_split
from .encoders import EncoderConfig

log = logging.getLogger(__name__)

HYPER_NAMES = {"lambda": "gaussian_lambda", "m": "smoothing_m"}


@dataclass
class SweepRecord:
    """Outcome of one (encoder, grid value) point; one dot in a trade-off plot."""

    encoder: str
    attribute: str
    hyperparameter: str | None
    value: float | None
    seed: int
    status: str = "ok"
    auc: float | None = None
    group_auc: dict = field(default_factory=dict)
    l_eof: float | None = None
    l_dp: float | None = None
    l_aao: float | None = None
    eof: dict = field(default_factory=dict)
    dp: dict = field(default_factory=dict)
    aao: dict = field(default_factory=dict)
    max_eof: float | None = None
    max_dp: float | None = None
    max_aao: float | None = None
    skipped: dict = field(default_factory=dict)
    error: str | None = None
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepRecord":
        return cls(**{f.name: d[f.name] for f in fields(cls) if f.name in d})

    def max_violation(self, metric: str = "EOF") -> float | None:
        return getattr(self, f"max_{metric.lower()}")

    def total(self, metric: str = "EOF") -> float | None:
        return getattr(self, f"l_{metric.lower()}")


@dataclass(frozen=True)
class SweepPoint:
    encoder: EncoderConfig
    hyperparameter: str | None = None
    value: float | None = None

    @property
    def label(self) -> str:
        return self.encoder.method


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def load_data(config: ExperimentConfig) -> Dataset:
    """Raw data of the experiment (the population is redrawn per split seed)."""
    if config.population is not None:
        return theory.sample_population(
            config.population, _derive_seed(config.population.seed, config.split_seed)
        )
    return load_csv(config.data_path, config.schema)


def arrange(data: Dataset, config: ExperimentConfig, attribute: str | None = None) -> Dataset:
    """Mark the audited attribute as protected.

    With ``concat`` configured the concatenated column is always built, so
    every arrangement can share one split stratified by it. Auditing one of
    the source columns leaves the concatenation and the other sources
    ignored.
    """
    if config.concat:
        data = concat_attributes(data, config.concat, config.attribute)
        if attribute is None or attribute == config.attribute:
            return data
    attribute = attribute or config.attribute
    roles = {a: "ignored" for a in (*config.concat, config.attribute) if a != attribute and config.concat}
    roles[attribute] = "protected"
    return data.with_roles(roles)


def reference_group(config: ExperimentConfig, data: Dataset, attribute: str | None = None) -> str:
    """Configured reference, its component for a single concatenated
    attribute, or else the most frequent category."""
    attribute = attribute or config.attribute
    ref = config.reference
    if ref is not None and attribute != config.attribute and attribute in config.concat:
        parts = ref.split(SEPARATOR)
        ref = parts[config.concat.index(attribute)] if len(parts) == len(config.concat) else None
    if ref is not None:
        return ref
    cats, codes = first_appearance(data.column(attribute))
    return str(cats[np.argmax(np.bincount(codes))])


def sweep_points(config: ExperimentConfig) -> list[SweepPoint]:
    """Grid in output order: configured encoder order, then ascending grid
    value (the lambda grid before the m grid)."""
    points = []
    for enc in config.encoders:
        plain = enc.method == "target" and not (enc.smoothing_m or enc.gaussian_lambda)
        if not plain or not (config.lambdas or config.ms):
            if enc.gaussian_lambda:
                points.append(SweepPoint(enc, "lambda", enc.gaussian_lambda))
            elif enc.smoothing_m:
                points.append(SweepPoint(enc, "m", enc.smoothing_m))
            else:
                points.append(SweepPoint(enc))
            continue
        for name, grid in (("lambda", config.lambdas), ("m", config.ms)):
            for value in sorted(set(grid)):
                points.append(SweepPoint(replace(enc, **{HYPER_NAMES[name]: value}), name, value))
    return points


def _auxiliary_encoders(train: Dataset, attribute: str) -> list[encoders.Encoder]:
    return [
        encoders.fit(EncoderConfig("one-hot"), train, c.name)
        for c in train.schema
        if c.role == "feature" and c.kind == "categorical" and c.name != attribute
    ]


def encode_split(
    enc_cfg: EncoderConfig, train: Dataset, test: Dataset, attribute: str
) -> tuple[np.ndarray, np.ndarray]:
    """Fit on the training part only; the test part is encoded in eval phase."""
    enc = encoders.fit(enc_cfg, train, attribute)
    aux = _auxiliary_encoders(train, attribute)
    return (
        encoders.transform(enc, train, attribute, "train", aux),
        encoders.transform(enc, test, attribute, "eval", aux),
    )


def run_pipeline(
    config: ExperimentConfig,
    point: SweepPoint | EncoderConfig,
    point_index: int = 0,
    data: Dataset | None = None,
    attribute: str | None = None,
) -> SweepRecord:
    """Split, fit the encoder on the training part, train, score the test part.

    ``data`` is the arranged dataset; by default it is loaded and arranged
    from ``config``.
    """
    if isinstance(point, EncoderConfig):
        point = SweepPoint(point)
    start = time.perf_counter()
    if data is None:
        data = arrange(load_data(config), config, attribute)
    attribute = attribute or config.attribute
    ref = reference_group(config, data, attribute)
    stratify = config.stratify_by if config.stratify_by in data.columns else attribute
    train, test = stratified_split(data, config.split_fraction, stratify, config.split_seed)
    enc_cfg = replace(point.encoder, noise_seed=_derive_seed(config.split_seed, point_index))
    X_train, X_test = encode_split(enc_cfg, train, test, attribute)
    model = models.train(config.model_family, X_train, train.target, **config.model_params)
    pred = models.predict(model, X_test)
    y = test.target
    groups = test.column(attribute)
    report = metrics.fairness_report(pred, y, groups, ref)
    try:
        global_auc = metrics.auc(pred.scores, y)
    except metrics.MetricError:
        global_auc = None
    skipped = {m: dict(s) for m, s in report.skipped.items()}
    no_auc = {g: "single class in test split" for g, o in report.outcomes.items() if o.auc is None}
    if no_auc:
        skipped["AUC"] = no_auc
    return SweepRecord(
        encoder=point.label,
        attribute=attribute,
        hyperparameter=point.hyperparameter,
        value=point.value,
        seed=config.split_seed,
        auc=global_auc,
        group_auc={g: o.auc for g, o in report.outcomes.items()},
        l_eof=report.l_eof,
        l_dp=report.l_dp,
        l_aao=report.l_aao,
        eof=dict(report.eof),
        dp=dict(report.dp),
        aao=dict(report.aao),
        max_eof=report.max_violation("EOF"),
        max_dp=report.max_violation("DP"),
        max_aao=report.max_violation("AAO"),
        skipped=skipped,
        wall_time=time.perf_counter() - start,
    )


def _run_point(config, point, index, data, attribute) -> SweepRecord:
    try:
        return run_pipeline(config, point, index, data, attribute)
    except Exception as exc:  # recorded, the sweep goes on
        log.warning("grid point %d (%s %s=%s) failed: %s", index, point.label,
                    point.hyperparameter, point.value, exc)
        return SweepRecord(
            encoder=point.label,
            attribute=attribute or config.attribute,
            hyperparameter=point.hyperparameter,
            value=point.value,
            seed=config.split_seed,
            status="failed",
            error=f"{type(exc).__name__}: {exc}",
        )


def run_points(
    config: ExperimentConfig,
    points: Sequence[SweepPoint],
    data: Dataset | None = None,
    attribute: str | None = None,
    workers: int = 1,
) -> list[SweepRecord]:
    if data is None:
        data = arrange(load_data(config), config, attribute)
    jobs = [(config, p, i, data, attribute) for i, p in enumerate(points)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda job: _run_point(*job), jobs))
    return [_run_point(*job) for job in jobs]


def run_sweep(config: ExperimentConfig, workers: int = 1, data: Dataset | None = None) -> list[SweepRecord]:
    """One record per encoder and grid value; baselines appear once each."""
    return run_points(config, sweep_points(config), data, workers=workers)


def run_audit(config: ExperimentConfig, data: Dataset | None = None) -> list[SweepRecord]:
    """Each configured encoder once, with its own settings and no grids."""
    return run_points(config, sweep_points(replace(config, lambdas=(), ms=())), data)


@dataclass
class IntersectionalReport:
    metric: str
    arrangements: tuple[str, ...]
    records: list[SweepRecord]
    comparison: list[dict[str, Any]]


def run_intersectional(
    config: ExperimentConfig,
    points: Sequence[SweepPoint] | None = None,
    metric: str = "EOF",
    raw: Dataset | None = None,
    workers: int = 1,
) -> IntersectionalReport:
    """Audit each concatenated attribute alone and then the concatenation,
    with the same model and encoders, and compare the largest per-group
    violation of ``metric``."""
    if len(config.concat) < 2:
        raise ValueError("intersectional audit needs at least two concat attributes")
    points = list(points) if points is not None else sweep_points(config)
    raw = raw if raw is not None else load_data(config)
    arrangements = (*config.concat, config.attribute)
    records: list[SweepRecord] = []
    by_arrangement = {}
    for attr in arrangements:
        single = attr if attr != config.attribute else None
        data = arrange(raw, config, single)
        recs = run_points(config, points, data, attribute=attr, workers=workers)
        by_arrangement[attr] = recs
        records += recs
    comparison = []
    for k, point in enumerate(points):
        viol = {a: by_arrangement[a][k].max_violation(metric) for a in arrangements}
        singles = [viol[a] for a in config.concat]
        joint = viol[config.attribute]
        exceeds = joint is not None and all(v is not None and joint > v for v in singles)
        comparison.append({
            "encoder": point.label,
            "hyperparameter": point.hyperparameter,
            "value": point.value,
            "max_violation": viol,
            "concat_exceeds": exceeds,
        })
    return IntersectionalReport(metric, arrangements, records, comparison)


@dataclass
class SynthRecord:
    encoder: str
    hyperparameter: str | None
    value: float | None
    seed: int
    metric: str
    irreducible: float
    total: float
    reducible: float
    smoothing_score: float | None
    auc: float | None

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "SynthRecord":
        return cls(**{f.name: d[f.name] for f in fields(cls)})


def run_synth(config: ExperimentConfig) -> list[SynthRecord]:
    """Decompose the audited unfairness of each target-encoding point into
    irreducible and reducible parts over ``theory.seeds`` resamples."""
    spec = config.population
    if spec is None:
        raise ValueError("synth needs data.population")
    if len(spec.attributes) > 1:
        spec = replace(spec, attributes=(spec.attribute,))
    ref = config.reference
    if ref is None:
        raise ValueError("synth needs protected.reference")
    out = []
    points = [p for p in sweep_points(config)
              if config.theory_scorer != "plugin" or p.encoder.method == "target"]
    for k, point in enumerate(points):
        for s in range(config.theory_seeds):
            enc = replace(point.encoder, noise_seed=_derive_seed(config.split_seed, k, s))
            lab = theory.audit_population(
                spec, ref, enc, seed=_derive_seed(config.split_seed, s),
                scorer=config.theory_scorer, model_params=config.model_params,
            )
            for metric in metrics.METRICS:
                d = lab.decompose(spec, metric)
                out.append(SynthRecord(point.label, point.hyperparameter, point.value, s, metric,
                                       d.irreducible, d.total, d.reducible, d.smoothing_score, lab.auc))
    return out
