"""Regenerate tests/fixtures: a small synthetic corpus plus golden run/report files.

    python scripts/make_fixture.py [--out tests/fixtures]
"""

import argparse
import shutil
import tempfile
from pathlib import Path

from repair.cli import main as cli
from repair.synthetic import SyntheticSpec, generate

CONFIG = """\
paths:
  corpus: corpus.jsonl
  queries: queries.jsonl
  qrels: qrels.txt
  script: script.jsonl
  output_dir: out
  cache_dir: cache
pipeline:
  window_size: 20
  carry: 10
  total_windows: 9
  graph_degree: 16
  mode: repair
embedder:
  kind: mock
  dim: 256
reranker:
  kind: scripted
seed: 0
workers: 1
run_tag: fixture
"""


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "fixtures"))
    args = parser.parse_args()
    out = Path(args.out)
    corpus = generate(SyntheticSpec(n_queries=6, distractors=40, seed=7))
    corpus.write(out)
    (out / "config.yaml").write_text(CONFIG, encoding="utf-8")

    with tempfile.TemporaryDirectory() as tmp:
        work = Path(tmp)
        for name in ("corpus.jsonl", "queries.jsonl", "qrels.txt", "script.jsonl", "config.yaml"):
            shutil.copy(out / name, work / name)
        cfg = str(work / "config.yaml")
        assert cli(["index", "-c", cfg]) == 0
        assert cli(["graph", "-c", cfg]) == 0
        assert cli(["run", "-c", cfg, "--mode", "psr_only"]) == 0
        shutil.copy(work / "out" / "run.txt", out / "golden_run_psr_only.txt")
        assert cli(["eval", str(out / "golden_run_psr_only.txt"), str(out / "qrels.txt"),
                    "--json", str(work / "report.json")]) == 0
        shutil.copy(work / "report.json", out / "golden_report.json")
    print(f"fixture written to {out}")


if __name__ == "__main__":
    main()
