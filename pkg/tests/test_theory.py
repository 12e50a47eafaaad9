import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catfair.dataset import category_stats
from catfair.encoders import EncoderConfig, encode_column, fit
from catfair.metrics import fairness_report
from catfair.models import Prediction
from catfair.theory import (
    PopulationSpec,
    audit_population,
    bayes_error,
    constant_error,
    decompose_bias,
    estimator_variance,
    hoeffding_bound,
    irreducible,
    perfect_aao,
    perfect_dp,
    perfect_encoding,
    perfect_eof,
    same_side,
    sample_population,
    simulate_estimates,
)

from .conftest import make_dataset

TARGET = EncoderConfig("target")


def spec_of(posteriors, priors=None, n=1000, **kw):
    priors = priors or [1 / len(posteriors)] * len(posteriors)
    cats = [f"g{i}" for i in range(len(posteriors))]
    return PopulationSpec(tuple(zip(cats, priors, posteriors)), n, **kw)


def test_spec_validation():
    with pytest.raises(ValueError):
        spec_of([0.5, 0.5], priors=[0.6, 0.6])
    with pytest.raises(ValueError):
        spec_of([1.2])
    with pytest.raises(ValueError):
        spec_of([0.5], n=0)
    with pytest.raises(ValueError):
        PopulationSpec((("a", 0.5, 0.1), ("a", 0.5, 0.2)), 10)
    spec = spec_of([0.7, 0.3], proxies=[("label", 0.5)])
    assert PopulationSpec.from_dict(spec.to_dict()) == spec


def test_sampling_degenerate_and_deterministic():
    data = sample_population(spec_of([1.0], n=50))
    assert data.target.sum() == 50
    spec = spec_of([0.7, 0.3], n=500, seed=4)
    a, b = sample_population(spec), sample_population(spec)
    assert np.array_equal(a.column("Z"), b.column("Z")) and np.array_equal(a.target, b.target)


def test_sampling_concentrates():
    data = sample_population(spec_of([0.7, 0.3], n=100_000, seed=1))
    stats = category_stats(data, "Z")
    for z, p in (("g0", 0.7), ("g1", 0.3)):
        assert abs(stats.rates[stats.position(z)] - p) < 0.01
    assert abs(stats.counts[stats.position("g0")] / 100_000 - 0.5) < 0.01


def test_exact_counts_and_proxies():
    spec = spec_of([0.6, 0.2], priors=[0.3, 0.7], n=1000, exact_counts=True,
                   proxies=[("label", 0.0), ("posterior", 0.0)])
    data = sample_population(spec)
    assert category_stats(data, "Z").as_dict()["g0"][0] == 300
    assert np.array_equal(data.column("X1"), data.target.astype(float))
    assert set(data.column("X2")) == {0.6, 0.2}


def test_multi_attribute_population():
    spec = PopulationSpec((("a|x", 0.5, 0.9), ("b|y", 0.5, 0.1)), 100, attributes=("A", "B"))
    data = sample_population(spec)
    assert set(data.column("A")) == {"a", "b"} and set(data.column("B")) == {"x", "y"}
    assert spec.attribute == "A|B"


def test_perfect_encoding():
    spec = spec_of([0.7, 0.3, 0.5])
    enc = perfect_encoding(spec)
    assert dict(zip(enc.categories, enc.values)) == {"g0": 0.7, "g1": 0.3, "g2": 0.5}
    data = sample_population(spec)
    scores = encode_column(enc, data)[:, 0]
    assert set(Prediction(scores).labels[data.column("Z") == "g2"]) == {0}
    flipped = PopulationSpec(tuple(reversed(spec.groups)), spec.n)
    rev = perfect_encoding(flipped)
    assert dict(zip(rev.categories, rev.values)) == dict(zip(enc.categories, enc.values))


def test_bayes_error_closed_form():
    assert bayes_error(spec_of([0.0])) == 0
    spec = spec_of([0.7, 0.3])
    assert bayes_error(spec) == 0.3
    assert constant_error(spec) == pytest.approx(0.5)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.data())
def test_bayes_error_is_minimal(posteriors, data):
    weights = data.draw(st.lists(st.floats(0.05, 1), min_size=len(posteriors), max_size=len(posteriors)))
    priors = [w / sum(weights) for w in weights]
    spec = spec_of(posteriors, priors)
    err = bayes_error(spec)
    assert 0 <= err <= 0.5 + 1e-12
    assert err <= constant_error(spec, 1) + 1e-12 and err <= constant_error(spec, 0) + 1e-12
    # brute force over every deterministic group-wise labelling
    best = min(
        sum(q * (1 - p if bit else p) for q, p, bit in zip(priors, posteriors, bits))
        for bits in np.ndindex(*(2,) * len(posteriors))
    )
    assert err == pytest.approx(best, abs=1e-12)


def test_perfect_eof_cases():
    spec = PopulationSpec((("i", 0.5, 0.8), ("r", 0.25, 0.6), ("s", 0.25, 0.2)), 10)
    assert perfect_eof(spec, "r") == {"i": 0, "s": -1}
    assert perfect_eof(spec, "s") == {"i": 1, "r": 1}
    same = PopulationSpec((("i", 0.5, 0.3), ("r", 0.5, 0.3)), 10)
    assert perfect_eof(same, "r") == {"i": 0}
    assert same_side(0.8, 0.6) and not same_side(0.5, 0.51)


def test_perfect_dp_and_aao():
    spec = PopulationSpec((("i", 0.5, 0.8), ("r", 0.5, 0.3)), 10)
    assert perfect_dp(spec, "r") == {"i": pytest.approx(0.5)}
    assert perfect_aao(spec, "r") == {"i": 1.0}


def test_perfect_metrics_match_pipeline_on_population():
    # the closed forms agree with metrics computed on sampled data scored by
    # the perfect encoding
    spec = PopulationSpec((("a", 0.3, 0.8), ("b", 0.3, 0.45), ("r", 0.4, 0.55)), 20_000, seed=2)
    data = sample_population(spec)
    scores = encode_column(perfect_encoding(spec), data)[:, 0]
    report = fairness_report(Prediction(scores), data.target, data.column("Z"), "r")
    assert report.eof == perfect_eof(spec, "r")
    assert report.aao == perfect_aao(spec, "r")
    assert report.dp == pytest.approx(perfect_dp(spec, "r"), abs=1e-12)


def test_hoeffding_closed_form():
    assert hoeffding_bound(100, 0.1) == pytest.approx(2 * math.exp(-2))
    assert hoeffding_bound(100, 1e3) == 0.0
    with pytest.raises(ValueError):
        hoeffding_bound(100, 0)


def test_hoeffding_monte_carlo():
    p, n, eps, trials = 0.5, 50, 0.15, 100_000
    est = np.random.default_rng(0).binomial(n, p, trials) / n
    freq = np.mean(np.abs(est - p) >= eps)
    assert freq <= hoeffding_bound(n, eps)


def test_estimator_variance():
    assert estimator_variance(0.5, 4) == 0.0625
    assert estimator_variance(0.0, 9) == 0 and estimator_variance(1.0, 9) == 0
    est = simulate_estimates(0.3, 50, 100_000, seed=3)
    assert np.var(est, ddof=1) == pytest.approx(estimator_variance(0.3, 50), rel=0.05)


def test_simulated_estimates_match_binomial_oracle():
    # the encoder-based simulation reproduces direct binomial draws in law
    est = simulate_estimates(0.2, 30, 50_000, seed=5)
    direct = np.random.default_rng(6).binomial(30, 0.2, 50_000) / 30
    assert abs(est.mean() - direct.mean()) < 4 * math.sqrt(2 * 0.2 * 0.8 / 30 / 50_000)
    assert set(np.unique(est)) <= set(np.arange(31) / 30)


def test_smoothing_pull_variance_vanishes():
    spreads = [np.var(simulate_estimates(0.3, 10, 5_000, seed=1, smoothing_m=m)) for m in (0, 10, 1e3, 1e6)]
    assert all(b < a for a, b in zip(spreads, spreads[1:]))
    assert spreads[-1] < 1e-6


def test_decomposition_irreducible_cases():
    spec = PopulationSpec((("i", 0.5, 0.7), ("r", 0.5, 0.2)), 200_000, seed=0)
    assert irreducible(spec, "r", "EOF") == 1
    lab = audit_population(spec, "r", TARGET, seed=0)
    d = lab.decompose(spec, "EOF")
    assert (d.irreducible, d.total, d.reducible) == (1.0, 1.0, 0.0)
    same = PopulationSpec((("i", 0.5, 0.7), ("r", 0.5, 0.6)), 1000)
    run = audit_population(same, "r", TARGET, seed=1)
    assert run.decompose(same, "EOF").irreducible == 0
    with pytest.raises(ValueError):
        decompose_bias(same, "r", run.report, "TPR")
    with pytest.raises(ValueError):
        decompose_bias(same, "i", run.report, "EOF")


def _small_group_spec(n_small, n_ref=10_000, p=0.52):
    n = n_ref + n_small
    return PopulationSpec(
        (("r", n_ref / n, p), ("s", n_small / n, p)), n, exact_counts=True,
    )


def _median_reducible(n_small, seeds, m=0.0):
    spec = _small_group_spec(n_small)
    cfg = EncoderConfig("target", smoothing_m=m)
    out = []
    for s in range(seeds):
        d = audit_population(spec, "r", cfg, seed=s).decompose(spec, "EOF")
        assert d.irreducible == 0
        out.append(abs(d.reducible))
    return float(np.median(out))


def test_reducible_shrinks_with_group_size():
    medians = [_median_reducible(n, 200) for n in (10, 100, 1000, 10_000)]
    assert medians[0] > 0
    assert all(b <= a for a, b in zip(medians, medians[1:]))


def test_large_sample_convergence():
    spec = PopulationSpec((("a", 0.4, 0.8), ("b", 0.3, 0.3), ("r", 0.3, 0.6)), 60_000, seed=3)
    run = audit_population(spec, "r", TARGET, seed=0)
    for g, v in perfect_eof(spec, "r").items():
        assert abs(run.report.eof[g] - v) <= 0.05


def test_gaussian_variance_adds_lambda_squared():
    # one category per trial: the first training row of each carries the
    # category's estimate plus its own noise draw
    p, n_i, trials, lam = 0.3, 20, 40_000, 0.2
    rng = np.random.default_rng(8)
    cats = np.repeat(np.arange(trials).astype(str), n_i)
    y = (rng.random(trials * n_i) < p).astype(int)
    data = make_dataset(cats, y)
    first = np.arange(0, trials * n_i, n_i)
    plain = encode_column(fit(TARGET, data, "Z"), data, "train")[first, 0]
    noisy_enc = fit(EncoderConfig("target", gaussian_lambda=lam, noise_seed=1), data, "Z")
    noisy = encode_column(noisy_enc, data, "train")[first, 0]
    assert np.var(plain) == pytest.approx(estimator_variance(p, n_i), rel=0.05)
    assert np.var(noisy) - np.var(plain) == pytest.approx(lam**2, rel=0.1)


def test_audit_population_scorers():
    spec = PopulationSpec((("a", 0.5, 0.7), ("r", 0.5, 0.3)), 2000, seed=1)
    plug = audit_population(spec, "r", TARGET, seed=0)
    logit = audit_population(spec, "r", TARGET, seed=0, scorer="logistic")
    assert plug.report.eof == logit.report.eof == {"a": 1.0}
    assert plug.smoothing_score == pytest.approx(plug.encoder.prior)
    with pytest.raises(ValueError, match="plug-in"):
        audit_population(spec, "r", EncoderConfig("one-hot"), seed=0)
    hot = audit_population(spec, "r", EncoderConfig("one-hot"), seed=0, scorer="logistic")
    assert hot.smoothing_score is None and hot.report.eof == {"a": 1.0}
