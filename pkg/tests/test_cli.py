import csv
import hashlib
import json
import os
import subprocess
import sys

import pytest

from tracesynth.cli import main
from tracesynth.oracle import OracleConfig, RemoteOracle, evaluate
from tracesynth.trace import pack_corpus, write_corpus
from tracesynth.universe import generate_planted_universe, load_universe, save_universe

SMALL_TRAIN = ["--hidden", "16", "16", "--batch-size", "4", "--replay-capacity", "64",
               "--target-sync", "10", "--eps-decay-steps", "50", "--max-steps", "30"]


@pytest.fixture
def planted(tmp_path):
    p = tmp_path / "planted.json"
    save_universe(generate_planted_universe(6, 3, 1), p)
    return p


def test_gen_universe_snapshot(tmp_path):
    out = tmp_path / "u16.json"
    assert main(["gen-universe", "--n", "16", "--seed", "1", "--out", str(out)]) == 0
    digest = hashlib.sha256(out.read_bytes()).hexdigest()
    assert digest == "349e49bb096564b0a0c99f25c3c48a3dee5b17038697c84ca4d81c054007fd2d"
    manifest = json.loads((tmp_path / "u16.json.manifest.json").read_text())
    assert manifest["subcommand"] == "gen-universe" and manifest["seeds"] == {"seed": 1}


def test_gen_universe_rejects_n1(tmp_path, capsys):
    assert main(["gen-universe", "--n", "1", "--out", str(tmp_path / "u.json")]) != 0
    assert "n >= 2" in capsys.readouterr().err


def test_gen_universe_zero_density(tmp_path):
    out = tmp_path / "u.json"
    main(["gen-universe", "--n", "5", "--explicit-density", "0", "--implicit-density", "0", "--out", str(out)])
    u = load_universe(out)
    assert not u.deps.explicit and not u.deps.implicit


def test_train_zero_episodes(tmp_path, planted):
    out = tmp_path / "run"
    assert main(["train", "--universe", str(planted), "--episodes", "0", "--trace-len", "3", "--out", str(out)]) == 0
    lines = (out / "archive.corpus").read_text().splitlines()
    assert len(lines) == 3 and all(l.startswith("#") for l in lines)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["episodes"] == 0 and summary["archived"] == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["t1"] == 10.0 and manifest["config"]["gamma"] == 0.9


def test_train_missing_universe(tmp_path, capsys):
    assert main(["train", "--universe", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) != 0
    assert "nope.json" in capsys.readouterr().err


def test_train_outputs_and_export(tmp_path, planted):
    out = tmp_path / "run"
    args = ["train", "--universe", str(planted), "--episodes", "15", "--trace-len", "3", "--t1", "0.2",
            "--seed", "4", "--out", str(out), *SMALL_TRAIN]
    assert main(args) == 0
    with open(out / "episodes.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 15 and set(rows[0]) == {"episode", "steps", "cum_reward", "outcome"}
    with open(out / "loss.csv") as fh:
        assert next(csv.reader(fh)) == ["step", "loss"]
    archived = sum(r["outcome"] == "archived" for r in rows)
    assert archived > 0
    corpus_out = tmp_path / "seed.corpus"
    assert main(["export", "--universe", str(planted), "--archive", str(out / "archive.corpus"),
                 "--count", "3", "--out", str(corpus_out)]) == 0
    lines = [l for l in corpus_out.read_text().splitlines() if not l.startswith("#")]
    assert len(lines) == min(3, archived)


def test_bench_length_small(tmp_path, planted):
    out = tmp_path / "bench"
    assert main(["bench-length", "--universe", str(planted), "--lengths", "2", "--budget", "10",
                 "--out", str(out)]) == 0
    with open(out / "bench_length.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1 and rows[0]["traces"] == "5" and rows[0]["calls"] == "10"


def test_bench_length_floor_rule(tmp_path, planted):
    out = tmp_path / "bench"
    main(["bench-length", "--universe", str(planted), "--lengths", "5", "--budget", "7679", "--out", str(out)])
    with open(out / "bench_length.csv") as fh:
        (row,) = list(csv.DictReader(fh))
    assert int(row["traces"]) == 7679 // 5 == 1535


def test_bench_length_deterministic(tmp_path, planted):
    for d in ("a", "b"):
        main(["bench-length", "--universe", str(planted), "--lengths", "2-4", "--budget", "60",
              "--seed", "3", "--out", str(tmp_path / d)])
    assert (tmp_path / "a" / "bench_length.csv").read_bytes() == (tmp_path / "b" / "bench_length.csv").read_bytes()


@pytest.mark.parametrize("lengths", ["9-2", "0-3", "x", "2,,3"])
def test_bench_length_invalid_range(tmp_path, planted, lengths):
    assert main(["bench-length", "--universe", str(planted), "--lengths", lengths, "--out", str(tmp_path)]) != 0


def test_analyze_one_and_two(tmp_path, planted):
    u = load_universe(planted)
    a, b = tmp_path / "a.corpus", tmp_path / "b.corpus"
    write_corpus(pack_corpus([(0, 1, 2), (3, 4, 5)], u, trace_len=3), a, u)
    write_corpus(pack_corpus([(0, 1, 1)], u, trace_len=3), b, u)
    out = tmp_path / "one"
    assert main(["analyze", "--universe", str(planted), str(a), "--out", str(out)]) == 0
    assert (out / "seed_report.csv").exists() and (out / "usage_histogram.csv").exists()
    assert not (out / "agreement.csv").exists()
    out = tmp_path / "two"
    assert main(["analyze", "--universe", str(planted), str(a), str(b), "--labels", "rl", "moon",
                 "--out", str(out)]) == 0
    with open(out / "agreement.csv") as fh:
        (row,) = list(csv.DictReader(fh))
    assert row["equivalent_pairs"] == "1" and row["matched_a"] == "1" and row["matched_b"] == "1"


def test_analyze_mismatch(tmp_path, planted):
    other = tmp_path / "other.json"
    save_universe(generate_planted_universe(6, 3, 2), other)
    u = load_universe(planted)
    c = tmp_path / "a.corpus"
    write_corpus(pack_corpus([(0, 1, 2)], u, trace_len=3), c, u)
    assert main(["analyze", "--universe", str(other), str(c), "--out", str(tmp_path / "x")]) != 0


def test_mock_server_subprocess(planted):
    env = {**os.environ, "TRACESYNTH_LOG": "WARNING"}
    proc = subprocess.Popen(
        [sys.executable, "-m", "tracesynth", "mock-server", "--universe", str(planted), "--bind", "127.0.0.1:0"],
        stdout=subprocess.PIPE, text=True, env=env,
    )
    try:
        line = proc.stdout.readline()
        endpoint = line.rsplit(" ", 1)[1].strip()
        u = load_universe(planted)
        with RemoteOracle(endpoint, u, timeout=10) as client:
            assert client.evaluate((0, 1, 2)) == evaluate((0, 1, 2), u, OracleConfig())
    finally:
        proc.terminate()
        proc.wait(10)
