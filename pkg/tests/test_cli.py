import csv
import json

import pytest
import yaml

from catfair.cli import main
from catfair.results import read_results

from .conftest import ETHNIC_ROWS

POPULATION = {
    "groups": [
        {"category": "a", "prior": 0.5, "posterior": 0.3},
        {"category": "b", "prior": 0.3, "posterior": 0.6},
        {"category": "c", "prior": 0.2, "posterior": 0.8},
    ],
    "n": 400,
    "proxies": [["label", 1.0]],
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump({
        "data": {"population": POPULATION},
        "protected": {"attribute": "Z", "reference": "a"},
        "sweep": {"lambda": [0, 0.3], "m": [10]},
        "theory": {"seeds": 2},
    }))
    return path


@pytest.fixture
def csv_config(tmp_path):
    rows = ETHNIC_ROWS * 20
    data = tmp_path / "data.csv"
    data.write_text("Ethnic,Marital,Label\n" + "".join(
        f"{z},{'Married' if i % 3 else 'Single'},{y}\n" for i, (z, y) in enumerate(rows)))
    path = tmp_path / "csv.yaml"
    path.write_text(yaml.safe_dump({
        "data": {"path": "data.csv", "schema": [
            {"name": "Ethnic", "kind": "categorical", "role": "protected"},
            {"name": "Marital", "kind": "categorical", "role": "protected"},
            {"name": "Label", "kind": "binary-target", "role": "target"},
        ]},
        "protected": {"attribute": "Ethnic", "reference": "Caucasian|Married"},
        "concat": ["Ethnic", "Marital"],
        "sweep": {"lambda": [], "m": [0, 100]},
    }))
    return path


def test_sweep_writes_every_point(tmp_path, config_file, capsys):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", str(config_file), "--out", str(out), "--workers", "2"]) == 0
    records = read_results(out)
    assert [(r.encoder, r.value) for r in records] == [
        ("drop", None), ("one-hot", None), ("target", 0.0), ("target", 0.3), ("target", 10.0)]
    assert "results written" in capsys.readouterr().out


def test_seed_and_format_flags(tmp_path, config_file):
    out = tmp_path / "audit.json"
    assert main(["audit", "--config", str(config_file), "--out", str(out),
                 "--seed", "4", "--format", "structured"]) == 0
    doc = json.loads(out.read_text())
    assert doc["config"]["split"]["seed"] == 4
    assert {r["seed"] for r in doc["records"]} == {4}
    assert len(doc["records"]) == 3


def test_set_override(tmp_path, config_file):
    out = tmp_path / "audit.csv"
    assert main(["audit", "--config", str(config_file), "--out", str(out),
                 "--set", "model.family=boosted", "--set", "model.params={tree_count: 5}"]) == 0
    assert all(r.status == "ok" for r in read_results(out))


def test_intersect_on_csv(tmp_path, csv_config, capsys):
    out = tmp_path / "inter.json"
    assert main(["intersect", "--config", str(csv_config), "--out", str(out), "--format", "structured"]) == 0
    doc = json.loads(out.read_text())
    assert {r["attribute"] for r in doc["records"]} == {"Ethnic", "Marital", "Ethnic|Marital"}
    assert len(doc["comparison"]) == 4
    assert "per arrangement" in capsys.readouterr().out


def test_synth(tmp_path, config_file):
    out = tmp_path / "synth.csv"
    assert main(["synth", "--config", str(config_file), "--out", str(out)]) == 0
    records = read_results(out)
    # two target grid points and the plain target encoder, 2 seeds, 3 metrics
    assert len(records) == 3 * 2 * 3
    assert {r.metric for r in records} == {"EOF", "DP", "AAO"}


def test_stats(tmp_path, csv_config):
    out = tmp_path / "stats.csv"
    assert main(["stats", "--config", str(csv_config), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    cauc = [r for r in rows if r["attribute"] == "Ethnic" and r["category"] == "Caucasian"][0]
    assert (cauc["n"], cauc["positives"]) == ("60", "20")


def test_error_exit_codes(tmp_path, config_file, capsys):
    assert main(["sweep", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["sweep", "--config", str(config_file), "--set", "sweep.lambda=[9]"]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({
        "data": {"path": "nowhere.csv", "schema": [
            {"name": "Z", "kind": "categorical", "role": "protected"},
            {"name": "Y", "kind": "binary-target", "role": "target"}]},
        "protected": {"attribute": "Z"},
    }))
    assert main(["audit", "--config", str(bad), "--out", str(tmp_path / "x.csv")]) == 1
    assert "error" in capsys.readouterr().err


def test_default_output_path(tmp_path, config_file, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["audit", "--config", str(config_file)]) == 0
    assert (tmp_path / "catfair_audit.csv").is_file()
