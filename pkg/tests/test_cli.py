import json

import pytest

from cli_pipeline import SMALL, report_bytes, run_pipeline
from retrocode.benchmark import tree_digest
from retrocode.cli import EXIT_CONFIG, EXIT_MISSING, PipelineConfig, resolve_config, run_command


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("pipe"))


def gen(out, *extra):
    return run_command(["gen-benchmark", "--out", str(out), "--seed", "7", "--num-problems", "4", "--variants", "2", "--train-programs", "3", "--dev-problems", "2", *extra], env={})


def test_gen_benchmark_is_deterministic(tmp_path):
    assert gen(tmp_path / "a") == 0 and gen(tmp_path / "b") == 0
    assert tree_digest(tmp_path / "a" / "benchmark") == tree_digest(tmp_path / "b" / "benchmark")


def test_retrieve_without_index_exits_3(tmp_path, capsys):
    assert gen(tmp_path) == 0
    assert run_command(["ingest", str(tmp_path / "benchmark" / "pool.jsonl"), "--out", str(tmp_path)], env={}) == 0
    code = run_command(["retrieve", "--query", "x = 1", "--mode", "sparse", "--out", str(tmp_path)], env={})
    assert code == EXIT_MISSING
    assert "corpus.bm25.json" in capsys.readouterr().err


def test_missing_corpus_exits_3(tmp_path):
    assert run_command(["augment", "--out", str(tmp_path)], env={}) == EXIT_MISSING


def test_unknown_key_exits_2_naming_it(tmp_path, capsys):
    code = run_command(["gen-benchmark", "--out", str(tmp_path), "--set", "train.bogus=1"], env={})
    assert code == EXIT_CONFIG
    assert "train.bogus" in capsys.readouterr().err


def test_out_of_range_value_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"corpus": {"fragment_length": 2}}))
    assert run_command(["gen-benchmark", "--config", str(cfg), "--out", str(tmp_path)], env={}) == EXIT_CONFIG
    assert "corpus.fragment_length" in capsys.readouterr().err


def test_override_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"output_dir": "from-file", "train": {"epochs": 4}}))
    resolved = resolve_config(str(cfg), ["train.epochs=6"], {"train.epochs": None}, {"RETROCODE_OUT": "from-env"})
    assert resolved.output_dir == "from-env" and resolved.train.epochs == 6
    resolved = resolve_config(str(cfg), ["train.epochs=6"], {"train.epochs": 9, "output_dir": "flag"}, {})
    assert resolved.output_dir == "flag" and resolved.train.epochs == 9


def test_fingerprint_ignores_output_dir():
    a = PipelineConfig.model_validate({"output_dir": "x"})
    b = PipelineConfig.model_validate({"output_dir": "y"})
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != PipelineConfig.model_validate({"seed": 1}).fingerprint()


def test_full_pipeline_writes_stamped_reports(pipeline):
    reports = report_bytes(pipeline)
    for name in ("alpha-sweep.json", "eval-clone-sparse.json", "eval-clone-dense.json", "eval-clone-hybrid.json", "eval-completion-hybrid.json"):
        assert name in reports
        rec = json.loads(reports[name])
        assert rec["config"]["stamp"]["seed"] == SMALL["seed"]
    sweep = json.loads(reports["alpha-sweep.json"])
    hybrid = json.loads(reports["eval-clone-hybrid.json"])
    assert hybrid["config"]["alpha"] == sweep["metrics"]["alpha.best"]


def test_rerun_is_idempotent(pipeline):
    before = report_bytes(pipeline)
    cfg = pipeline.parent / "config.json"
    assert run_command(["eval-clone", "--mode", "sparse", "--config", str(cfg), "--out", str(pipeline)], env={}) == 0
    assert report_bytes(pipeline) == before


def test_retrieve_and_complete(pipeline, tmp_path):
    cfg = str(pipeline.parent / "config.json")
    hits = tmp_path / "hits.jsonl"
    code = run_command(["retrieve", "--corpus", "pool", "--query", "def f(a):\n    return a", "--k", "3", "--output", str(hits), "--config", cfg, "--out", str(pipeline)], env={})
    assert code == 0
    records = [json.loads(line) for line in hits.read_text().splitlines()]
    assert records
    inp = tmp_path / "in.jsonl"
    inp.write_text(json.dumps({"context": "x = 1\ny = x + 1\n"}) + "\n")
    res = tmp_path / "res.jsonl"
    code = run_command(["complete", "--corpus", "db", "--input", str(inp), "--retrieval", "sparse", "--output", str(res), "--config", cfg, "--out", str(pipeline)], env={})
    assert code == 0
    row = json.loads(res.read_text().splitlines()[-1])
    assert {"context", "generated", "provenance"} <= set(row)


def test_env_var_sets_output_dir(tmp_path):
    target = tmp_path / "env-out"
    code = run_command(["gen-benchmark", "--num-problems", "2", "--variants", "2", "--train-programs", "2", "--dev-problems", "0"], env={"RETROCODE_OUT": str(target)})
    assert code == 0 and (target / "benchmark" / "benchmark.json").exists()
