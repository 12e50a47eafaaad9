"""Synthetic populations with known per-group posteriors.

Under perfect encoding (every category mapped to its true positive rate) and
the Bayes classifier 1(p > 1/2), any unfairness left over is irreducible: it
comes from groups whose posteriors fall on opposite sides of the threshold.
Whatever an audited pipeline adds on top is reducible, since it stems from
estimating rates on finite, often small, groups.

A one-hot variant mapping category i to the number 2**i would behave like
unregularized target encoding in this single-feature setting; it is not
implemented as an encoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import encoders, metrics, models
from .dataset import SEPARATOR, ColumnSchema, Dataset
from .encoders import Encoder, EncoderConfig

PROXY_KINDS = ("label", "posterior")


@dataclass(frozen=True)
class PopulationGroup:
    category: str
    prior: float
    posterior: float


@dataclass(frozen=True)
class PopulationSpec:
    """A categorical attribute with known group priors and posteriors.

    With several ``attributes`` each category is a ``|``-joined tuple and is
    emitted as one column per part. ``proxies`` adds numeric features
    ``X1, X2, ...``: a ``("label", s)`` proxy is y + N(0, s^2), a
    ``("posterior", s)`` proxy is p_group + N(0, s^2). With ``exact_counts``
    group sizes are fixed at round(prior * n) instead of drawn.
    """

    groups: tuple[PopulationGroup, ...]
    n: int
    seed: int = 0
    attributes: tuple[str, ...] = ("Z",)
    target: str = "Y"
    proxies: tuple[tuple[str, float], ...] = ()
    exact_counts: bool = False

    def __post_init__(self):
        groups = tuple(g if isinstance(g, PopulationGroup) else PopulationGroup(*g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "proxies", tuple(tuple(p) for p in self.proxies))
        if not groups:
            raise ValueError("population needs at least one group")
        cats = [g.category for g in groups]
        if len(set(cats)) != len(cats):
            raise ValueError("duplicate group category")
        if any(g.prior <= 0 for g in groups) or not math.isclose(sum(g.prior for g in groups), 1.0, abs_tol=1e-9):
            raise ValueError("group priors must be positive and sum to 1")
        if any(not 0.0 <= g.posterior <= 1.0 for g in groups):
            raise ValueError("group posteriors must lie in [0, 1]")
        if self.n < 1:
            raise ValueError("sample size must be at least 1")
        if any(len(c.split(SEPARATOR)) != len(self.attributes) for c in cats):
            raise ValueError("each category needs one part per attribute")
        if any(kind not in PROXY_KINDS or s < 0 for kind, s in self.proxies):
            raise ValueError(f"proxy kinds are {PROXY_KINDS} with non-negative noise")

    @property
    def attribute(self) -> str:
        return SEPARATOR.join(self.attributes)

    @property
    def posteriors(self) -> dict[str, float]:
        return {g.category: g.posterior for g in self.groups}

    @property
    def priors(self) -> dict[str, float]:
        return {g.category: g.prior for g in self.groups}

    @property
    def base_rate(self) -> float:
        return sum(g.prior * g.posterior for g in self.groups)

    @classmethod
    def from_dict(cls, d: Mapping) -> "PopulationSpec":
        return cls(
            groups=tuple(
                PopulationGroup(str(g["category"]), float(g["prior"]), float(g["posterior"]))
                for g in d["groups"]
            ),
            n=int(d["n"]),
            seed=int(d.get("seed", 0)),
            attributes=tuple(d.get("attributes", ("Z",))),
            target=str(d.get("target", "Y")),
            proxies=tuple((str(k), float(s)) for k, s in d.get("proxies", ())),
            exact_counts=bool(d.get("exact_counts", False)),
        )

    def to_dict(self) -> dict:
        return {
            "groups": [g.__dict__ for g in self.groups],
            "n": self.n,
            "seed": self.seed,
            "attributes": list(self.attributes),
            "target": self.target,
            "proxies": [list(p) for p in self.proxies],
            "exact_counts": self.exact_counts,
        }


def _group_sizes(priors: np.ndarray, n: int) -> np.ndarray:
    raw = priors * n
    sizes = np.floor(raw).astype(np.int64)
    short = n - sizes.sum()
    sizes[np.argsort(-(raw - sizes), kind="stable")[:short]] += 1
    return sizes


def sample_population(spec: PopulationSpec, seed: int | None = None) -> Dataset:
    """Draw ``spec.n`` i.i.d. rows (group, then Bernoulli label)."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    priors = np.array([g.prior for g in spec.groups])
    post = np.array([g.posterior for g in spec.groups])
    if spec.exact_counts:
        codes = rng.permutation(np.repeat(np.arange(len(priors)), _group_sizes(priors, spec.n)))
    else:
        codes = rng.choice(len(priors), size=spec.n, p=priors / priors.sum())
    y = (rng.random(spec.n) < post[codes]).astype(np.int8)
    parts = [g.category.split(SEPARATOR) for g in spec.groups]
    schema = [ColumnSchema(a, "categorical", "protected") for a in spec.attributes]
    columns = {a: np.array([p[k] for p in parts])[codes] for k, a in enumerate(spec.attributes)}
    for j, (kind, scale) in enumerate(spec.proxies, start=1):
        center = y.astype(np.float64) if kind == "label" else post[codes]
        columns[f"X{j}"] = center + rng.normal(0.0, scale, spec.n)
        schema.append(ColumnSchema(f"X{j}", "numeric", "feature"))
    schema.append(ColumnSchema(spec.target, "binary-target", "target"))
    columns[spec.target] = y
    return Dataset(tuple(schema), columns)


def perfect_encoding(spec: PopulationSpec) -> Encoder:
    """Target encoder mapping every category to its true posterior."""
    mapping = {g.category: g.posterior for g in sorted(spec.groups, key=lambda g: g.category)}
    return Encoder.from_values(spec.attribute, mapping, spec.base_rate)


def _exact(x: float) -> Fraction:
    # the decimal a value was written as, so 1 - 0.7 is exactly 0.3
    return Fraction(repr(float(x)))


def bayes_error(spec: PopulationSpec) -> float:
    """Error of the Bayes classifier under perfect encoding, evaluated in
    exact rational arithmetic and rounded once."""
    total = Fraction(0)
    for g in spec.groups:
        p = _exact(g.posterior)
        total += _exact(g.prior) * min(p, 1 - p)
    return float(total)


def constant_error(spec: PopulationSpec, label: int = 1) -> float:
    """Error of predicting ``label`` for everyone."""
    total = Fraction(0)
    for g in spec.groups:
        p = _exact(g.posterior)
        total += _exact(g.prior) * (1 - p if label == 1 else p)
    return float(total)


def same_side(a: float, b: float) -> bool:
    """True when a and b fall on the same side of the 1/2 threshold."""
    return (a > 0.5) == (b > 0.5)


def _bayes_label(p: float) -> int:
    return int(p > 0.5)


def _check_ref(spec: PopulationSpec, ref: str) -> float:
    post = spec.posteriors
    if ref not in post:
        raise ValueError(f"reference group {ref!r} is not part of the population")
    return post[ref]


def perfect_eof(spec: PopulationSpec, ref: str) -> dict[str, int]:
    """Equal-opportunity gap of the Bayes classifier: 0 on the same side of
    1/2, otherwise +1 or -1. Groups without positives (p = 0) are left out."""
    p_r = _check_ref(spec, ref)
    if p_r == 0:
        raise ValueError("reference group has no positives")
    return {
        g.category: _bayes_label(g.posterior) - _bayes_label(p_r)
        for g in spec.groups
        if g.category != ref and g.posterior > 0
    }


def perfect_dp(spec: PopulationSpec, ref: str) -> dict[str, float]:
    """W1 distance between point-mass scores p_i and p_ref."""
    p_r = _check_ref(spec, ref)
    return {g.category: abs(g.posterior - p_r) for g in spec.groups if g.category != ref}


def perfect_aao(spec: PopulationSpec, ref: str) -> dict[str, float]:
    """Average absolute odds of the Bayes classifier; every member of a group
    gets the same label, so TPR = FPR = 1(p > 1/2) within a group."""
    p_r = _check_ref(spec, ref)
    if p_r in (0.0, 1.0):
        raise ValueError("reference group lacks positives or negatives")
    return {
        g.category: float(abs(_bayes_label(g.posterior) - _bayes_label(p_r)))
        for g in spec.groups
        if g.category != ref and 0.0 < g.posterior < 1.0
    }


def hoeffding_bound(n_i: int, epsilon: float) -> float:
    """Upper bound 2 exp(-2 n eps^2) on P(|rate estimate - rate| >= eps)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if n_i < 1:
        raise ValueError("n_i must be at least 1")
    return 2.0 * math.exp(-2.0 * n_i * epsilon**2)


def estimator_variance(p: float, n_i: int) -> float:
    return p * (1.0 - p) / n_i


def simulate_estimates(
    p: float, n_i: int, trials: int, seed: int = 0, smoothing_m: float = 0.0, prior_share: float = 0.0
) -> np.ndarray:
    """Encoded value of a category across ``trials`` independent samples of
    size ``n_i``, all fitted in one pass (one category per trial)."""
    rng = np.random.default_rng(seed)
    cats = np.repeat(np.char.add("t", np.arange(trials).astype(str)), n_i)
    y = (rng.random(trials * n_i) < p).astype(np.int8)
    data = Dataset(
        (ColumnSchema("Z", "categorical", "protected"), ColumnSchema("Y", "binary-target", "target")),
        {"Z": cats, "Y": y},
    )
    enc = encoders.fit(EncoderConfig("target", smoothing_m=smoothing_m), data, "Z")
    order = np.argsort(np.array([int(c[1:]) for c in enc.categories]))
    return enc.encoded_values()[order]


@dataclass(frozen=True)
class BiasDecomposition:
    metric: str
    irreducible: float
    total: float
    reducible: float
    smoothing_score: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


_PERFECT = {"EOF": perfect_eof, "DP": perfect_dp, "AAO": perfect_aao}


def irreducible(spec: PopulationSpec, ref: str, metric: str, groups: Sequence[str] | None = None) -> float:
    """Aggregate metric of perfect encoding with the Bayes classifier."""
    if metric not in _PERFECT:
        raise ValueError(f"metric must be one of {tuple(_PERFECT)}")
    values = _PERFECT[metric](spec, ref)
    if groups is not None:
        values = {g: v for g, v in values.items() if g in groups}
    return float(sum(abs(v) for v in values.values()))


def decompose_bias(
    spec: PopulationSpec,
    ref: str,
    outcome: metrics.FairnessReport,
    metric: str,
    smoothing_score: float | None = None,
) -> BiasDecomposition:
    """Split an audited aggregate metric into irreducible and reducible parts.

    The reducible part may be negative: estimation noise can also move a
    group back to the reference's side of the threshold.
    """
    if metric not in _PERFECT:
        raise ValueError(f"metric must be one of {tuple(_PERFECT)}")
    if outcome.reference != ref:
        raise ValueError("report was produced for a different reference group")
    scored = outcome.per_group(metric)
    total = float(sum(abs(v) for v in scored.values()))
    base = irreducible(spec, ref, metric, groups=list(scored))
    return BiasDecomposition(metric, base, total, total - base, smoothing_score)


@dataclass(frozen=True)
class LabRun:
    report: metrics.FairnessReport
    encoder: Encoder
    smoothing_score: float | None
    auc: float | None = field(default=None)

    def decompose(self, spec: PopulationSpec, metric: str = "EOF") -> BiasDecomposition:
        return decompose_bias(spec, self.report.reference, self.report, metric, self.smoothing_score)


def audit_population(
    spec: PopulationSpec,
    ref: str,
    config: EncoderConfig,
    seed: int = 0,
    scorer: str = "plugin",
    test_n: int | None = None,
    model_params: Mapping | None = None,
) -> LabRun:
    """Fit an encoder on one sample of ``spec`` and audit it on a fresh one.

    ``scorer="plugin"`` scores every row by its encoded value, the idealised
    learner that reproduces the encoding exactly. ``"logistic"`` and
    ``"boosted"`` train the corresponding model on the encoded attribute.
    """
    seeds = np.random.SeedSequence([spec.seed, seed]).generate_state(2)
    attr = spec.attribute
    spec1 = replace(spec, attributes=(attr,), proxies=())
    train = sample_population(spec1, int(seeds[0]))
    test = sample_population(replace(spec1, n=test_n or spec.n), int(seeds[1]))
    enc = encoders.fit(config, train, attr)
    q = None
    if scorer == "plugin":
        if config.method != "target":
            raise ValueError("the plug-in scorer needs a target encoder")
        scores = encoders.encode_column(enc, test, "eval")[:, 0]
        q = enc.prior
    else:
        X = encoders.encode_column(enc, train, "train")
        model = models.train(scorer, X, train.target, **(model_params or {}))
        scores = models.predict(model, encoders.encode_column(enc, test, "eval")).scores
        if config.method == "target":
            q = float(models.predict(model, np.array([[enc.prior]])).scores[0])
    pred = models.Prediction(scores)
    report = metrics.fairness_report(pred, test.target, test.column(attr), ref)
    try:
        auc = metrics.auc(scores, test.target)
    except metrics.MetricError:
        auc = None
    return LabRun(report, enc, q, auc)
