import json
import logging

import pytest

from causal_panel import toy_dataset_paths
from causal_panel.cli import main


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch):
    monkeypatch.delenv("CAUSAL_PANEL_SEED", raising=False)


def run(*args):
    return main([str(a) for a in args])


def test_synth_writes_panels_and_truth(tmp_path):
    assert run("synth", "--countries", 10, "--seed", 7, "--out", tmp_path / "s") == 0
    assert len(list((tmp_path / "s" / "panels").glob("*.csv"))) == 10
    truth = json.loads((tmp_path / "s" / "ground_truth.json").read_text())
    assert len(truth) == 10
    assert json.loads((tmp_path / "s" / "artifact.json").read_text())["stage"] == "ingested"


def test_staged_chain_matches_kinds(tmp_path):
    values, labels = toy_dataset_paths()
    assert run("ingest", values, "--labels", labels, "--out", tmp_path / "in") == 0
    assert run("impute", tmp_path / "in", "--out", tmp_path / "imp", "--seed", 2) == 0
    assert run("transform", tmp_path / "imp", "--out", tmp_path / "tr") == 0
    assert run("stationarize", tmp_path / "tr", "--out", tmp_path / "st") == 0
    assert run("granger", tmp_path / "st", "--out", tmp_path / "gr") == 0
    assert run("icstar", tmp_path / "st", "--out", tmp_path / "ic") == 0
    assert run("aggregate", tmp_path / "gr", tmp_path / "ic", "--out", tmp_path / "agg") == 0
    ranking = (tmp_path / "agg" / "ranking_granger.csv").read_text().splitlines()
    assert ranking[0] == "indicator,frequency"
    meta = json.loads((tmp_path / "st" / "series_meta.json").read_text())
    assert set(meta) == {"Arland", "Borovia", "Caldera"}
    assert (tmp_path / "gr" / "countries" / "Arland" / "granger_matrix.csv").is_file()
    assert (tmp_path / "ic" / "countries" / "Arland" / "ic_genuine.dot").is_file()


def test_stage_mismatch_is_descriptive(tmp_path, capsys):
    values, labels = toy_dataset_paths()
    run("ingest", values, "--labels", labels, "--out", tmp_path / "in")
    run("impute", tmp_path / "in", "--out", tmp_path / "imp")
    run("granger", tmp_path / "imp", "--out", tmp_path / "gr")
    assert run("transform", tmp_path / "gr", "--out", tmp_path / "x") == 1
    assert "expected a 'panel' artifact" in capsys.readouterr().err
    assert run("impute", tmp_path / "imp", "--out", tmp_path / "y") == 1
    assert "ingested" in capsys.readouterr().err


def test_granger_on_unstationarized_warns(tmp_path, caplog):
    values, labels = toy_dataset_paths()
    run("ingest", values, "--labels", labels, "--out", tmp_path / "in")
    run("impute", tmp_path / "in", "--out", tmp_path / "imp")
    with caplog.at_level(logging.WARNING, logger="causal_panel"):
        assert run("granger", tmp_path / "imp", "--out", tmp_path / "gr") == 0
    assert "not 'stationarized'" in caplog.text
    assert len(list((tmp_path / "gr").rglob("findings.json"))) == 3


def test_aggregate_empty_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    assert run("aggregate", tmp_path / "empty", "--out", tmp_path / "agg") == 0
    assert (tmp_path / "agg" / "ranking_granger.csv").read_text() == "indicator,frequency\n"
    assert (tmp_path / "agg" / "intersection.csv").read_text() == "country,indicator\n"


def test_aggregate_missing_dir_is_fatal(tmp_path):
    assert run("aggregate", tmp_path / "nowhere", "--out", tmp_path / "agg") == 1


def test_run_command_and_config_file(tmp_path):
    values, labels = toy_dataset_paths()
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed = 21\nstrict_genuine = true\n")
    assert run("run", values, "--labels", labels, "--out", tmp_path / "o", "--seed", 3, "--config", cfg) == 0
    text = (tmp_path / "o" / "config.txt").read_text()
    assert "seed = 21\n" in text and "strict_genuine = true\n" in text


def test_run_accepts_panel_artifact(tmp_path):
    run("synth", "--countries", 2, "--seed", 1, "--out", tmp_path / "s")
    assert run("run", tmp_path / "s", "--out", tmp_path / "o", "-q") == 0
    assert (tmp_path / "o" / "report.json").is_file()


def test_run_unreadable_input(tmp_path):
    assert run("run", tmp_path / "nope.csv", "--labels", tmp_path / "l.csv", "--out", tmp_path / "o") == 1


def test_env_seed_lowest_priority(tmp_path, monkeypatch):
    values, labels = toy_dataset_paths()
    monkeypatch.setenv("CAUSAL_PANEL_SEED", "99")
    run("run", values, "--labels", labels, "--out", tmp_path / "a")
    assert "seed = 99\n" in (tmp_path / "a" / "config.txt").read_text()
    run("run", values, "--labels", labels, "--out", tmp_path / "b", "--seed", 4)
    assert "seed = 4\n" in (tmp_path / "b" / "config.txt").read_text()
