"""Categorical encoders: one-hot, ordinal, target encoding (optionally
smoothed towards the global prior or perturbed with Gaussian noise) and the
drop baseline that removes the attribute altogether.

Typical noise widths for the Gaussian variant lie between 0.05 and 0.6.
Noise is never clipped, so train-phase target-encoded values can leave
[0, 1].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dataset import CategoryStatistics, DataError, Dataset, category_stats

METHODS = ("one-hot", "ordinal", "target", "drop")
PHASES = ("train", "eval")
LAMBDA_RANGE = (0.0, 5.0)
M_RANGE = (0.0, 1e6)


@dataclass(frozen=True)
class EncoderConfig:
    method: str = "target"
    smoothing_m: float = 0.0
    gaussian_lambda: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown encoding method {self.method!r}")
        if self.smoothing_m < 0 or self.gaussian_lambda < 0:
            raise ValueError("regularization strengths must be non-negative")
        if self.method != "target" and (self.smoothing_m or self.gaussian_lambda):
            raise ValueError("regularization only applies to target encoding")
        if self.smoothing_m > 0 and self.gaussian_lambda > 0:
            raise ValueError("smoothing and Gaussian noise cannot be combined")
        if self.out_of_range:
            warnings.warn(
                f"regularization outside the sweep range: m={self.smoothing_m}, "
                f"lambda={self.gaussian_lambda}",
                stacklevel=3,
            )

    @property
    def out_of_range(self) -> bool:
        return not (
            M_RANGE[0] <= self.smoothing_m <= M_RANGE[1]
            and LAMBDA_RANGE[0] <= self.gaussian_lambda <= LAMBDA_RANGE[1]
        )

    @property
    def label(self) -> str:
        if self.method != "target":
            return self.method
        if self.smoothing_m:
            return "target-smoothing"
        if self.gaussian_lambda:
            return "target-gaussian"
        return "target"

    @classmethod
    def from_dict(cls, d: Mapping | str) -> "EncoderConfig":
        if isinstance(d, str):
            return cls(method=d)
        return cls(
            method=str(d.get("method", "target")),
            smoothing_m=float(d.get("smoothing_m", 0.0)),
            gaussian_lambda=float(d.get("gaussian_lambda", 0.0)),
            noise_seed=int(d.get("noise_seed", 0)),
        )

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "smoothing_m": self.smoothing_m,
            "gaussian_lambda": self.gaussian_lambda,
            "noise_seed": self.noise_seed,
        }


@dataclass(frozen=True)
class Encoder:
    """A fitted encoding of one categorical attribute.

    ``values`` holds, per category, the unsmoothed positive rate for target
    encoding and the column/integer index for one-hot and ordinal encoding.
    """

    config: EncoderConfig
    attribute: str
    categories: tuple[str, ...]
    values: np.ndarray
    prior: float
    stats: CategoryStatistics | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_lookup", {z: i for i, z in enumerate(self.categories)})

    @classmethod
    def from_values(cls, attribute: str, mapping: Mapping[str, float], prior: float) -> "Encoder":
        """Target encoder with prescribed per-category values (no fitting)."""
        cats = tuple(mapping)
        return cls(EncoderConfig("target"), attribute, cats, [mapping[z] for z in cats], prior)

    @property
    def width(self) -> int:
        return {"one-hot": len(self.categories), "drop": 0}.get(self.config.method, 1)

    def column_names(self) -> list[str]:
        if self.config.method == "one-hot":
            return [f"{self.attribute}={z}" for z in self.categories]
        if self.config.method == "drop":
            return []
        return [self.attribute]

    def encoded_values(self) -> np.ndarray:
        """Per-category values used at evaluation time."""
        if self.config.method != "target" or not self.config.smoothing_m:
            return self.values
        if self.stats is None:
            raise ValueError("smoothing needs category statistics")
        return _smooth(self.stats, self.config.smoothing_m)

    def codes(self, values: np.ndarray) -> np.ndarray:
        """Category positions for ``values``; -1 marks unseen categories."""
        lookup = self._lookup  # type: ignore[attr-defined]
        uniq, inverse = np.unique(values, return_inverse=True)
        pos = np.array([lookup.get(str(z), -1) for z in uniq], dtype=np.int64)
        return pos[inverse.ravel()]


def _smooth(stats: CategoryStatistics, m: float) -> np.ndarray:
    weight = stats.counts / (stats.counts + m)
    return weight * stats.rates + (1.0 - weight) * stats.prior


def fit(config: EncoderConfig, train: Dataset, attribute: str) -> Encoder:
    if train.n == 0:
        raise DataError("empty training data")
    stats = category_stats(train, attribute)
    if config.method == "target":
        values = stats.rates
    elif config.method == "drop":
        values = np.zeros(stats.c)
    else:
        values = np.arange(stats.c, dtype=np.float64)
    return Encoder(config, attribute, stats.categories, values, stats.prior, stats)


def encode_smoothed(encoder: Encoder, category: str, m: float) -> float:
    """Smoothed target value n_i/(n_i+m) * rate_i + m/(n_i+m) * prior."""
    if m < 0:
        raise ValueError("m must be non-negative")
    if encoder.stats is None:
        raise ValueError("encoder carries no category statistics")
    stats = encoder.stats
    i = stats.position(category)
    if m == 0:
        return float(stats.positives[i] / stats.counts[i])
    weight = stats.counts[i] / (stats.counts[i] + m)
    return float(weight * stats.rates[i] + (1.0 - weight) * stats.prior)


def encode_unseen(encoder: Encoder) -> np.ndarray:
    """Encoding for a category absent at fit time."""
    method = encoder.config.method
    if method == "one-hot":
        return np.zeros(len(encoder.categories))
    if method == "drop":
        return np.zeros(0)
    return np.array([encoder.prior])


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    # arrays only: uint64 array arithmetic wraps silently, scalars would warn
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _as_u64(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=np.int64)).astype(np.uint64)


def _unit(h: np.ndarray) -> np.ndarray:
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def gaussian_noise(seed, rows, scale: float = 1.0) -> np.ndarray:
    """N(0, scale^2) draws keyed by ``(seed, row)``; broadcasts over both.

    Each draw depends only on its own key, so results do not change with
    row order, subsetting or parallel evaluation.
    """
    key = _splitmix64(_as_u64(seed))
    counter = _as_u64(rows) * np.uint64(2)
    u1 = _unit(_splitmix64(key ^ counter))
    u2 = _unit(_splitmix64(key ^ (counter + np.uint64(1))))
    return scale * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def encode_column(encoder: Encoder, data: Dataset, phase: str = "eval") -> np.ndarray:
    """Encoded block (n x width) for the encoder's own attribute."""
    if phase not in PHASES:
        raise ValueError(f"phase must be one of {PHASES}")
    method = encoder.config.method
    if method == "drop":
        return np.zeros((data.n, 0))
    codes = encoder.codes(data.column(encoder.attribute))
    unseen = codes < 0
    if method == "one-hot":
        out = np.zeros((data.n, len(encoder.categories)))
        seen = np.flatnonzero(~unseen)
        out[seen, codes[seen]] = 1.0
        return out
    table = encoder.encoded_values() if method == "target" else encoder.values
    col = np.where(unseen, encoder.prior, table[np.where(unseen, 0, codes)])
    if method == "target" and phase == "train":
        col = _with_noise(encoder, col, encoder.config.noise_seed, data.index)
    return col[:, None]


def _with_noise(encoder: Encoder, col: np.ndarray, seeds, rows) -> np.ndarray:
    lam = encoder.config.gaussian_lambda
    if lam == 0:
        return np.broadcast_to(col, np.broadcast_shapes(np.shape(seeds), col.shape)).copy()
    return col + gaussian_noise(seeds, rows, lam)


def encode_across_seeds(encoder: Encoder, data: Dataset, seeds) -> np.ndarray:
    """Train-phase target encodings of ``data`` under every noise seed in
    ``seeds``, shape (len(seeds), n). Row k equals the train-phase column of
    the same encoder with ``noise_seed=seeds[k]``."""
    if encoder.config.method != "target":
        raise ValueError("noise only applies to target encoding")
    seeds = np.asarray(seeds, dtype=np.int64)[:, None]
    col = encode_column(encoder, data, "eval")[:, 0]
    return _with_noise(encoder, col[None, :], seeds, data.index[None, :])


def passthrough_columns(data: Dataset, skip: Sequence[str] = ()) -> list[str]:
    """Numeric feature columns copied verbatim into the feature matrix."""
    return [
        c.name for c in data.schema
        if c.role == "feature" and c.kind == "numeric" and c.name not in skip
    ]


def transform(
    encoder: Encoder,
    data: Dataset,
    attribute: str,
    phase: str = "eval",
    others: Sequence[Encoder] = (),
) -> np.ndarray:
    """Feature matrix: the encoded attribute, then the blocks of ``others``
    (always in eval phase), then the numeric feature columns unchanged.

    Categorical feature columns other than ``attribute`` must be covered by
    an encoder in ``others``.
    """
    if attribute != encoder.attribute:
        raise ValueError(
            f"encoder was fitted on {encoder.attribute!r}, not {attribute!r}"
        )
    covered = {attribute} | {e.attribute for e in others}
    loose = [
        c.name for c in data.schema
        if c.role == "feature" and c.kind == "categorical" and c.name not in covered
    ]
    if loose:
        raise ValueError(f"categorical feature columns without an encoder: {loose}")
    blocks = [encode_column(encoder, data, phase)]
    blocks += [encode_column(e, data, "eval") for e in others]
    blocks += [data.columns[name][:, None] for name in passthrough_columns(data, covered)]
    return np.hstack(blocks) if blocks else np.zeros((data.n, 0))


def feature_names(encoder: Encoder, data: Dataset, others: Sequence[Encoder] = ()) -> list[str]:
    covered = {encoder.attribute} | {e.attribute for e in others}
    names = encoder.column_names()
    for e in others:
        names += e.column_names()
    return names + passthrough_columns(data, covered)
