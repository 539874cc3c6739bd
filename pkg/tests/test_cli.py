"""Command-line pipeline: full chain, outputs, determinism and exit codes."""

import csv
import json

import pytest
import yaml
from conftest import SMALL

from pumpsnn.cli import EXIT_CONFIG, EXIT_MISSING, EXIT_STAGE, main
from pumpsnn.market import load_listings

CHAIN = [
    ["synth"],
    ["detect", "train"],
    ["detect", "score"],
    ["sessionize"],
    ["extract-events"],
    ["featurize"],
    ["embed", "train"],
    ["train"],
    ["evaluate"],
    ["predict"],
    ["report", "--l1"],
]

CONFIG = {
    "seed": 1,
    "synth": SMALL,
    "detector": {"epochs": 200},
    "embed": {"epochs": 1},
    "features": {"N": 8},
    "snn": {"N": 8, "hidden": [16, 8], "epochs": 3},
    "eval": {"modes": ["dnn", "snn"], "ks": [1, 3, 10]},
}


def _run(tmp, *argv):
    return main(["--config", str(tmp / "cfg.yaml"), "--workdir", str(tmp / "run"), *argv])


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    (tmp / "cfg.yaml").write_text(yaml.safe_dump(CONFIG))
    codes = [_run(tmp, *cmd) for cmd in CHAIN]
    return tmp, codes


class TestChain:
    def test_all_stages_succeed(self, chain):
        _, codes = chain
        assert codes == [0] * len(CHAIN)

    def test_extraction_matches_ground_truth(self, chain):
        tmp, _ = chain
        run = tmp / "run"
        planted = (run / "world" / "ground_truth.jsonl").read_text().splitlines()
        got = (run / "events.jsonl").read_text().splitlines()
        assert sorted(map(json.loads, planted), key=json.dumps) == sorted(map(json.loads, got), key=json.dumps)

    def test_results_table(self, chain):
        tmp, _ = chain
        text = (tmp / "run" / "results.txt").read_text()
        assert text.startswith("Metric") and "DNN" in text and "SNN(N=8)" in text
        rows = list(csv.DictReader(open(tmp / "run" / "results.csv")))
        assert [r["mode"] for r in rows] == ["dnn", "snn"]

    def test_predictions_ranked(self, chain):
        tmp, _ = chain
        run = tmp / "run"
        pending = [json.loads(x) for x in (run / "world" / "pending.jsonl").read_text().splitlines()]
        listings = load_listings(run / "world" / "listings.csv")
        rows = list(csv.DictReader(open(run / "predictions.csv")))
        by_event = {}
        for r in rows:
            by_event.setdefault(r["event_ref"], []).append(r)
        assert len(by_event) == len(pending)
        for req, ranked in zip(pending, by_event.values()):
            eligible = [c for c in listings.listed("binance", "BTC", req["timestamp"]) if c not in ("USDC", "BUSD")]
            assert len(ranked) == len(eligible)
            probs = [float(r["probability"]) for r in ranked]
            assert probs == sorted(probs, reverse=True)
            assert [int(r["rank"]) for r in ranked] == list(range(1, len(ranked) + 1))

    def test_attention_and_l1(self, chain):
        tmp, _ = chain
        run = tmp / "run"
        assert (run / "attention.csv").read_text().startswith("position,coin_id,")
        rep = json.loads((run / "l1_report.json").read_text())
        assert set(rep) == {"train_positive", "train_negative", "untrained", "test_positive_unseen"}

    @pytest.mark.parametrize("stage, outputs", [
        (["featurize"], ["samples.npz", "split.json"]),
        (["train"], ["model.npz", "train_log.json", "attention.csv"]),
        (["predict"], ["predictions.csv"]),
    ])
    def test_rerun_byte_identical(self, chain, stage, outputs):
        tmp, _ = chain
        run = tmp / "run"
        before = {o: (run / o).read_bytes() for o in outputs}
        assert _run(tmp, *stage) == 0
        assert {o: (run / o).read_bytes() for o in outputs} == before

    def test_inputs_untouched(self, chain):
        tmp, _ = chain
        world = tmp / "run" / "world"
        before = {p.name: p.read_bytes() for p in world.iterdir()}
        assert _run(tmp, "featurize") == 0
        assert {p.name: p.read_bytes() for p in world.iterdir()} == before


class TestExitCodes:
    def test_missing_input(self, tmp_path):
        assert main(["--workdir", str(tmp_path), "train"]) == EXIT_MISSING

    def test_missing_config_file(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.yaml"), "synth"]) == EXIT_MISSING

    @pytest.mark.parametrize("text", ["bogus: 1\n", "synth: {n_coinz: 3}\n", "synth: {n_channels: 0}\n", "[1, 2]\n"])
    def test_config_errors(self, tmp_path, text):
        (tmp_path / "cfg.yaml").write_text(text)
        assert main(["--config", str(tmp_path / "cfg.yaml"), "--workdir", str(tmp_path), "synth"]) == EXIT_CONFIG

    def test_stage_error(self, tmp_path):
        (tmp_path / "cfg.yaml").write_text(yaml.safe_dump({"synth": {"n_coins": 20, "n_channels": 3}}))
        code = main(["--config", str(tmp_path / "cfg.yaml"), "--workdir", str(tmp_path), "synth"])
        assert code == EXIT_STAGE

    def test_env_workdir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PUMPSNN_WORKDIR", str(tmp_path / "envrun"))
        assert main(["report"]) == EXIT_MISSING
        monkeypatch.setenv("PUMPSNN_PATH_LABELED", str(tmp_path / "elsewhere.jsonl"))
        assert main(["detect", "train"]) == EXIT_MISSING
