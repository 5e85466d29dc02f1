import json
import shutil

import pytest

from oracles import ndcg, recall
from repair.cli import main
from repair.config import load_config
from repair.corpus import Document, write_jsonl
from repair.evaluation import read_qrels, read_run

FIXTURE_FILES = ("corpus.jsonl", "queries.jsonl", "qrels.txt", "script.jsonl", "config.yaml")


@pytest.fixture
def work(tmp_path, fixtures_dir):
    for name in FIXTURE_FILES:
        shutil.copy(fixtures_dir / name, tmp_path / name)
    return tmp_path


def cfg(work):
    return str(work / "config.yaml")


def build(work, *extra):
    assert main(["index", "-c", cfg(work), *extra]) == 0
    assert main(["graph", "-c", cfg(work), *extra]) == 0


@pytest.mark.parametrize("command", [[], ["index"], ["graph"], ["run"], ["eval"]])
def test_help_exits_zero_without_side_effects(command, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as exc:
        main([*command, "--help"])
    assert exc.value.code == 0
    assert "usage" in capsys.readouterr().out
    assert list(tmp_path.iterdir()) == []


class TestIndex:
    def test_writes_index_and_embeddings(self, work, capsys):
        assert main(["index", "-c", cfg(work)]) == 0
        assert (work / "out" / "index.json").exists()
        assert len(list((work / "cache" / "embeddings").glob("*"))) == 70
        assert "bytes" in capsys.readouterr().out

    def test_missing_corpus_names_path(self, work, capsys):
        (work / "corpus.jsonl").unlink()
        assert main(["index", "-c", cfg(work)]) == 1
        assert str(work / "corpus.jsonl") in capsys.readouterr().err

    def test_rerun_is_noop(self, work, capsys):
        assert main(["index", "-c", cfg(work)]) == 0
        before = (work / "out" / "index.json").stat().st_mtime_ns
        capsys.readouterr()
        assert main(["index", "-c", cfg(work)]) == 0
        assert "nothing to do" in capsys.readouterr().out
        assert (work / "out" / "index.json").stat().st_mtime_ns == before

    def test_corpus_change_rebuilds(self, work, capsys):
        assert main(["index", "-c", cfg(work)]) == 0
        with open(work / "corpus.jsonl", "a") as fh:
            fh.write('{"id": "zz", "text": "extra document"}\n')
        capsys.readouterr()
        assert main(["index", "-c", cfg(work)]) == 0
        assert "indexed 71 documents" in capsys.readouterr().out

    def test_missing_config(self, tmp_path, capsys):
        assert main(["index", "-c", str(tmp_path / "nope.yaml")]) == 1
        assert "nope.yaml" in capsys.readouterr().err

    def test_unknown_config_key(self, work, capsys):
        assert main(["index", "-c", cfg(work), "--set", "pipeline.windows=3"]) == 1
        assert "windows" in capsys.readouterr().err


class TestGraph:
    def test_requires_embeddings(self, work, capsys):
        assert main(["graph", "-c", cfg(work)]) == 1
        assert "repair index" in capsys.readouterr().err

    def test_degree_on_fifty_docs(self, work):
        docs = [Document(f"d{i:02d}", f"topic{i % 7} word{i} shared") for i in range(50)]
        write_jsonl(work / "corpus.jsonl", [{"id": d.doc_id, "text": d.text} for d in docs])
        build(work)
        lines = (work / "out" / "graph.jsonl").read_text().splitlines()
        assert len(lines) == 50
        assert all(len(json.loads(line)["nbrs"]) == 16 for line in lines)
        assert main(["graph", "-c", cfg(work), "--degree", "60"]) == 0
        lines = (work / "out" / "graph.jsonl").read_text().splitlines()
        assert all(len(json.loads(line)["nbrs"]) == 49 for line in lines)

    def test_rerun_byte_identical(self, work):
        build(work)
        first = (work / "out" / "graph.jsonl").read_bytes()
        assert main(["graph", "-c", cfg(work)]) == 0
        assert (work / "out" / "graph.jsonl").read_bytes() == first


class TestRun:
    def test_psr_only_matches_golden(self, work, fixtures_dir):
        assert main(["index", "-c", cfg(work)]) == 0
        assert main(["run", "-c", cfg(work), "--mode", "psr_only"]) == 0
        golden = (fixtures_dir / "golden_run_psr_only.txt").read_bytes()
        assert (work / "out" / "run.txt").read_bytes() == golden

    def test_both_ablations_equal_psr_only(self, work):
        build(work)
        assert main(["run", "-c", cfg(work), "--mode", "psr_only", "--output", str(work / "psr.txt")]) == 0
        assert main(["run", "-c", cfg(work), "--set", "pipeline.ablate_base=true",
                     "--set", "pipeline.ablate_con=true", "--output", str(work / "abl.txt")]) == 0
        assert (work / "psr.txt").read_bytes() == (work / "abl.txt").read_bytes()

    def test_outputs(self, work, capsys):
        build(work)
        capsys.readouterr()
        assert main(["run", "-c", cfg(work)]) == 0
        out = capsys.readouterr().out
        qids = [json.loads(line)["id"] for line in (work / "queries.jsonl").read_text().splitlines()]
        for qid in qids:
            assert f"[{qid}] 9 windows" in out
            trace = (work / "out" / "traces" / f"{qid}.jsonl").read_text().splitlines()
            assert [json.loads(t)["window"] for t in trace] == list(range(1, 10))
            assert (work / "out" / "traces" / f"{qid}.rewards.jsonl").exists()
        meta = json.loads((work / "out" / "run_meta.json").read_text())
        assert meta["seed"] == 0 and meta["failed"] == []
        assert meta["config"]["pipeline"]["mode"] == "repair"

    def test_invalid_mode_is_usage_error(self, work, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["run", "-c", cfg(work), "--mode", "fancy"])
        assert exc.value.code == 1
        assert "invalid choice" in capsys.readouterr().err

    def test_invalid_mode_in_config(self, work, capsys):
        assert main(["run", "-c", cfg(work), "--set", "pipeline.mode=fancy"]) == 1
        assert "fancy" in capsys.readouterr().err

    def test_needs_graph_for_repair(self, work, capsys):
        assert main(["index", "-c", cfg(work)]) == 0
        assert main(["run", "-c", cfg(work)]) == 1
        assert "repair graph" in capsys.readouterr().err

    def test_needs_index(self, work, capsys):
        assert main(["run", "-c", cfg(work), "--mode", "psr_only"]) == 1
        assert "repair index" in capsys.readouterr().err


class TestEval:
    def test_matches_golden_report(self, work, fixtures_dir, tmp_path):
        out = tmp_path / "report.json"
        assert main(["eval", str(fixtures_dir / "golden_run_psr_only.txt"), str(fixtures_dir / "qrels.txt"),
                     "--json", str(out)]) == 0
        assert json.loads(out.read_text()) == json.loads((fixtures_dir / "golden_report.json").read_text())

    def test_golden_report_agrees_with_oracle(self, fixtures_dir):
        report = json.loads((fixtures_dir / "golden_report.json").read_text())
        run = read_run(fixtures_dir / "golden_run_psr_only.txt")
        qrels = read_qrels(fixtures_dir / "qrels.txt")
        assert set(report["per_query"]) == set(qrels)
        for qid, judged in qrels.items():
            assert report["per_query"][qid]["ndcg@10"] == pytest.approx(ndcg(run[qid], judged, 10), abs=1e-9)
            assert report["per_query"][qid]["recall@100"] == pytest.approx(recall(run[qid], judged, 100), abs=1e-9)

    def test_single_metric(self, fixtures_dir, tmp_path):
        out = tmp_path / "r.json"
        assert main(["eval", str(fixtures_dir / "golden_run_psr_only.txt"), str(fixtures_dir / "qrels.txt"),
                     "--metric", "ndcg@10", "--json", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["metrics"] == ["ndcg@10"]
        assert all(set(m) == {"ndcg@10"} for m in report["per_query"].values())
        assert set(report["mean"]) == {"ndcg@10"}

    def test_malformed_line(self, tmp_path, fixtures_dir, capsys):
        run = tmp_path / "run.txt"
        run.write_text("q1 Q0 a 1 1.0 t\nq1 Q0 b\n")
        assert main(["eval", str(run), str(fixtures_dir / "qrels.txt")]) == 1
        assert ":2:" in capsys.readouterr().err

    def test_bad_metric(self, fixtures_dir, capsys):
        assert main(["eval", str(fixtures_dir / "golden_run_psr_only.txt"), str(fixtures_dir / "qrels.txt"),
                     "--metric", "map"]) == 1

    def test_paths_from_config(self, work, capsys):
        assert main(["index", "-c", cfg(work)]) == 0
        assert main(["run", "-c", cfg(work), "--mode", "psr_only"]) == 0
        capsys.readouterr()
        assert main(["eval", "-c", cfg(work), "--text", str(work / "r.txt")]) == 0
        assert capsys.readouterr().out == (work / "r.txt").read_text()


class TestConfig:
    def test_paths_relative_to_config(self, work):
        c = load_config(work / "config.yaml")
        assert c.path("corpus") == work / "corpus.jsonl"
        assert c.output_dir == work / "out"

    def test_override_types(self, work):
        c = load_config(work / "config.yaml", ["pipeline.carry=12", "pipeline.reuse_plan=true", "workers=3"])
        assert c.pipeline.carry == 12 and c.pipeline.reuse_plan is True and c.workers == 3

    def test_override_invalid_value(self, work):
        with pytest.raises(ValueError):
            load_config(work / "config.yaml", ["pipeline.carry=25"])

    def test_override_syntax(self, work):
        with pytest.raises(ValueError):
            load_config(work / "config.yaml", ["pipeline.carry"])
