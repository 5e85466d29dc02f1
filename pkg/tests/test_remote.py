"""Wire contracts of the embedding and chat services, against an in-process transport."""

import json

import httpx
import numpy as np
import pytest

from repair.corpus import RemoteEmbedder
from repair.planner import ChatClient, RemoteReranker
from repair.corpus import Document, Query
from repair.remote import RemoteError


def transport(handler, log):
    def wrapped(request):
        log.append(json.loads(request.content))
        return handler(request)
    return httpx.MockTransport(wrapped)


class TestRemoteEmbedder:
    def test_request_shape_and_normalization(self):
        log = []
        t = transport(lambda r: httpx.Response(200, json={"vectors": [[3.0, 4.0], [0.0, 2.0]]}), log)
        emb = RemoteEmbedder("http://emb/embed", "m1", transport=t)
        vecs = emb.embed_many(["a", "b"])
        assert log == [{"model": "m1", "inputs": ["a", "b"]}]
        np.testing.assert_allclose(vecs[0], [0.6, 0.8])
        np.testing.assert_allclose(vecs[1], [0.0, 1.0])

    def test_batches_preserve_order(self):
        log = []

        def handler(request):
            inputs = json.loads(request.content)["inputs"]
            return httpx.Response(200, json={"vectors": [[float(len(x)), 1.0] for x in inputs]})

        emb = RemoteEmbedder("http://emb", "m", batch_size=2, transport=transport(handler, log))
        vecs = emb.embed_many(["a", "bb", "ccc", "dddd", "e"])
        assert [len(b["inputs"]) for b in log] == [2, 2, 1]
        ratios = [v[0] / v[1] for v in vecs]
        np.testing.assert_allclose(ratios, [1, 2, 3, 4, 1])

    def test_format_error_names_endpoint(self):
        t = transport(lambda r: httpx.Response(200, json={"oops": []}), [])
        with pytest.raises(RemoteError, match="http://emb"):
            RemoteEmbedder("http://emb", "m", transport=t).embed("x")

    def test_zero_vector_is_format_error(self):
        t = transport(lambda r: httpx.Response(200, json={"vectors": [[0.0, 0.0]]}), [])
        with pytest.raises(RemoteError):
            RemoteEmbedder("http://emb", "m", transport=t).embed("x")

    def test_retries_then_fails(self):
        log = []
        t = transport(lambda r: httpx.Response(503), log)
        with pytest.raises(RemoteError, match="3 attempts"):
            RemoteEmbedder("http://emb", "m", retries=2, backoff=0, transport=t).embed("x")
        assert len(log) == 3

    def test_retry_recovers(self):
        log = []
        replies = iter([httpx.Response(500), httpx.Response(200, json={"vectors": [[1.0]]})])
        t = transport(lambda r: next(replies), log)
        assert RemoteEmbedder("http://emb", "m", backoff=0, transport=t).embed("x")[0] == 1.0

    def test_client_error_not_retried(self):
        log = []
        t = transport(lambda r: httpx.Response(400, text="bad"), log)
        with pytest.raises(RemoteError, match="400"):
            RemoteEmbedder("http://emb", "m", backoff=0, transport=t).embed("x")
        assert len(log) == 1


class TestChat:
    def test_request_shape_and_cache(self, tmp_path):
        log = []
        t = transport(lambda r: httpx.Response(200, json={"text": "Step 1: a\n[Document Ranking]\n[1]"}), log)
        chat = ChatClient("http://llm/chat", "rr-7b", cache_dir=tmp_path, max_tokens=512, transport=t)
        msgs = [{"role": "user", "content": "hi"}]
        assert chat.complete(msgs).startswith("Step 1")
        assert log == [{"model": "rr-7b", "messages": msgs, "temperature": 0, "max_tokens": 512}]
        again = ChatClient("http://llm/chat", "rr-7b", cache_dir=tmp_path, max_tokens=512, transport=t)
        assert again.complete(msgs).startswith("Step 1")
        assert len(log) == 1
        assert len(list(tmp_path.glob("*.txt"))) == 1

    def test_missing_text_field(self):
        t = transport(lambda r: httpx.Response(200, json={"choices": []}), [])
        with pytest.raises(RemoteError, match="text"):
            ChatClient("http://llm", "m", transport=t).complete([])

    def test_remote_reranker_round_trip(self, tmp_path):
        log = []
        reply = "[Reasoning Trace]\nStep 1: find tanks\n\n[Document Ranking]\n[2] > [1]"
        t = transport(lambda r: httpx.Response(200, json={"text": reply}), log)
        rr = RemoteReranker(ChatClient("http://llm", "m", cache_dir=tmp_path, transport=t))
        window = [Document("a", "alpha"), Document("b", "beta")]
        first = rr.rerank(Query("q", "tanks?"), window)
        second = rr.rerank(Query("q", "tanks?"), window)
        assert first.ranking == ["b", "a"] and first.plan.texts == ["find tanks"]
        assert second == first
        assert len(log) == 1
        roles = [m["role"] for m in log[0]["messages"]]
        assert roles == ["system", "user"]
        assert "[1]: alpha" in log[0]["messages"][1]["content"]
