"""Print the per-window trace of one synthetic query: sources, selected step, rewards.

    python scripts/window_trace.py [--query q000] [--mode repair]
"""

import argparse

from repair.corpus import CachedEmbedder, DocStore, MockEmbedder, bm25_build
from repair.graph import build_graph
from repair.pipeline import MODES, PipelineConfig, PipelineDeps, run_query
from repair.planner import ScriptedReranker
from repair.synthetic import generate


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--query", default=None, help="query id (default: first query)")
    parser.add_argument("--mode", choices=MODES, default="repair")
    args = parser.parse_args()

    corpus = generate()
    embedder = CachedEmbedder(MockEmbedder())
    vectors = dict(zip([d.doc_id for d in corpus.docs], embedder.embed_many([d.full_text for d in corpus.docs])))
    deps = PipelineDeps(bm25_build(corpus.docs), DocStore(corpus.docs), embedder,
                        ScriptedReranker(embedder, corpus.script), build_graph(corpus.docs, vectors))
    queries = {q.query_id: q for q in corpus.queries}
    query = queries[args.query] if args.query else corpus.queries[0]
    bridges = set(corpus.bridge_qrels[query.query_id])
    relevant = set(corpus.qrels[query.query_id])

    res = run_query(query, PipelineConfig(mode=args.mode), deps)
    print(f"{query.query_id}: {query.text!r}")
    seen = set()
    for w in res.trace:
        seen.update(w.docs)
        rewards = " ".join(f"{r.r_total:+.4f}" for r in w.rewards)
        found = len(seen & bridges)
        print(f"window {w.window}: refill={w.refill_source or '-':<11} step={w.selected_step} "
              f"rewards=[{rewards}] top10_relevant={len(set(w.ranking[:10]) & relevant)} "
              f"bridges_seen={found}/{len(bridges)}")
    top = res.doc_ids[:10]
    print("final top 10:", " ".join(d + ("*" if d in relevant else "") for d in top))


if __name__ == "__main__":
    main()
