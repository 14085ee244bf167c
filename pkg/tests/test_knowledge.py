import math
import random

import pytest

from opstriage.errors import EmptyBody, EmptyIndex
from opstriage.knowledge import (
    BM25_B,
    BM25_K1,
    DocKind,
    KnowledgeDoc,
    KnowledgeStore,
    load_kb_dir,
    parse_doc_file,
    tokenize,
)


def doc(doc_id, body, kind=DocKind.RUNBOOK, title=None, service=None, meta=None):
    return KnowledgeDoc(doc_id=doc_id, kind=kind, title=title or doc_id, body=body,
                        service=service, meta=meta or {})


def deployment(doc_id, service, commit, deployed_at, body=None):
    return doc(doc_id, body or f"commit {commit} deployed", kind=DocKind.DEPLOYMENT,
               service=service, meta={"commit_id": commit, "deployed_at": str(deployed_at)})


def test_tokenize_lowercase_nonalnum_split():
    assert tokenize("Re-Index the DOC_42!") == ["re", "index", "the", "doc", "42"]


def test_index_and_search_sole_match():
    kb = KnowledgeStore()
    kb.index_doc(doc("a", "zebra quagga"))
    kb.index_doc(doc("b", "common words here"))
    hits = kb.search("zebra", k=5)
    assert [h.doc_id for h in hits] == ["a"]
    assert hits[0].matched_terms == ["zebra"]
    assert hits[0].score > 0


def test_reindex_replaces_terms():
    kb = KnowledgeStore()
    kb.index_doc(doc("a", "oldterm content"))
    assert kb.search("oldterm", k=3)
    kb.index_doc(doc("a", "newterm content"))
    assert kb.search("oldterm", k=3) == []
    assert [h.doc_id for h in kb.search("newterm", k=3)] == ["a"]


def test_empty_body_rejected():
    kb = KnowledgeStore()
    with pytest.raises(EmptyBody):
        kb.index_doc(doc("a", "   "))


def test_empty_index_rejected():
    with pytest.raises(EmptyIndex):
        KnowledgeStore().search("x", k=1)


def test_corpus_stats_recount_oracle():
    kb = KnowledgeStore()
    rng = random.Random(5)
    lengths = []
    for i in range(500):
        n_terms = rng.randint(1, 30)
        body = " ".join(f"w{rng.randint(0, 80)}" for _ in range(n_terms))
        kb.index_doc(doc(f"d{i:03d}", body))
        lengths.append(len(tokenize(f"d{i:03d} {body}")))  # title + body are indexed
    stats = kb.corpus_stats()
    assert stats["doc_count"] == 500
    assert stats["avg_length"] == pytest.approx(sum(lengths) / 500)
    # every doc retrievable through one of its own terms
    sample = kb.get("d013")
    term = tokenize(sample.body)[0]
    assert any(h.doc_id == "d013" for h in kb.search(term, k=500))


def test_bm25_hand_computed_scores():
    # three docs, single-term query; expected values computed from the
    # formula by hand: idf = ln(1 + (N - df + 0.5)/(df + 0.5)),
    # score = idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
    kb = KnowledgeStore()
    kb.index_doc(doc("a", "cache cache error", title="cache guide"))
    kb.index_doc(doc("b", "cache error restart", title="restart notes"))
    kb.index_doc(doc("c", "unrelated words entirely", title="other"))
    n, avgdl = 3, (5 + 5 + 4) / 3
    idf = math.log(1 + (3 - 2 + 0.5) / (2 + 0.5))

    def score(tf, dl):
        return idf * tf * (BM25_K1 + 1) / (tf + BM25_K1 * (1 - BM25_B + BM25_B * dl / avgdl))

    hits = kb.search("cache", k=3)
    assert [h.doc_id for h in hits] == ["a", "b"]
    assert hits[0].score == pytest.approx(score(3, 5), rel=1e-12)
    assert hits[1].score == pytest.approx(score(1, 5), rel=1e-12)
    assert hits[0].score > hits[1].score  # higher tf wins at fixed (k1, b)


def test_scores_non_negative_even_for_common_terms():
    kb = KnowledgeStore()
    for i in range(4):
        kb.index_doc(doc(f"d{i}", "shared term body"))
    for h in kb.search("shared", k=4):
        assert h.score >= 0


def test_kind_filter_and_tie_break():
    kb = KnowledgeStore()
    kb.index_doc(doc("r1", "restart the worker", kind=DocKind.RUNBOOK))
    kb.index_doc(deployment("d1", "svc", "abc", 100, body="restart the worker"))
    hits = kb.search("restart worker", k=5, kind_filter=DocKind.DEPLOYMENT)
    assert [h.doc_id for h in hits] == ["d1"]
    # identical docs tie; doc_id ascending breaks it
    kb2 = KnowledgeStore()
    kb2.index_doc(doc("b", "same body text"))
    kb2.index_doc(doc("a", "same body text"))
    assert [h.doc_id for h in kb2.search("same", k=2)] == ["a", "b"]


def test_search_deterministic():
    kb = KnowledgeStore()
    for i in range(20):
        kb.index_doc(doc(f"d{i}", f"term{i % 5} filler text number {i}"))
    first = [(h.doc_id, h.score) for h in kb.search("term1 filler", k=10)]
    second = [(h.doc_id, h.score) for h in kb.search("term1 filler", k=10)]
    assert first == second


def test_irrelevant_doc_does_not_reorder_existing_hits():
    kb = KnowledgeStore()
    kb.index_doc(doc("a", "cache cache miss"))
    kb.index_doc(doc("b", "cache hit ratio"))
    before = [h.doc_id for h in kb.search("cache", k=5)]
    kb.index_doc(doc("z", "xylophone zither qqq"))  # shares no query terms
    after = [h.doc_id for h in kb.search("cache", k=5)]
    assert before == after


def test_recent_deployments_filter_and_order():
    kb = KnowledgeStore()
    kb.index_doc(deployment("d1", "svc", "c1", 100))
    kb.index_doc(deployment("d2", "svc", "c2", 300))
    kb.index_doc(deployment("d3", "svc", "c3", 200))
    kb.index_doc(deployment("d4", "other", "c4", 400))
    got = kb.recent_deployments("svc", since_ms=150)
    assert [d.doc_id for d in got] == ["d2", "d3"]
    assert kb.recent_deployments("nobody", 0) == []


def test_recent_deployments_matches_linear_scan():
    kb = KnowledgeStore()
    rng = random.Random(11)
    docs = []
    for i in range(80):
        d = deployment(f"d{i:02d}", rng.choice(["a", "b"]), f"c{i}", rng.randint(0, 1000))
        docs.append(d)
        kb.index_doc(d)
    since = 500
    expected = sorted(
        (d for d in docs if d.service == "a" and d.deployed_at_ms >= since),
        key=lambda d: (-d.deployed_at_ms, d.doc_id),
    )
    assert [d.doc_id for d in kb.recent_deployments("a", since)] == [d.doc_id for d in expected]


def test_recent_deployments_since_minus_inf_returns_all():
    kb = KnowledgeStore()
    kb.index_doc(deployment("d1", "svc", "c1", 5))
    kb.index_doc(deployment("d2", "svc", "c2", 10))
    assert len(kb.recent_deployments("svc", -(10**15))) == 2


def test_deployment_doc_requires_meta():
    with pytest.raises(EmptyBody):
        KnowledgeStore().index_doc(
            KnowledgeDoc(doc_id="d", kind=DocKind.DEPLOYMENT, title="t", body="b")
        )


def test_doc_file_parsing_and_dir_loader(tmp_path):
    text = (
        "kind: DEPLOYMENT\n"
        "service: checkout\n"
        "commit_id: abc123\n"
        "deployed_at: 2025-01-05T12:00:00Z\n"
        "title: deploy abc123\n"
        "\n"
        "commit abc123 deployed to checkout: pricing fixes\n"
    )
    parsed = parse_doc_file(text, doc_id="deploy-1")
    assert parsed.kind == DocKind.DEPLOYMENT
    assert parsed.service == "checkout"
    assert parsed.meta["commit_id"] == "abc123"
    assert int(parsed.meta["deployed_at"]) == 1736078400000
    assert parsed.body.startswith("commit abc123")

    (tmp_path / "doc1.txt").write_text(text, encoding="utf-8")
    (tmp_path / "doc2.md").write_text("kind: RUNBOOK\ntitle: Reboot Guide\n\nsteps here\n", encoding="utf-8")
    (tmp_path / "ignored.bin").write_text("nope", encoding="utf-8")
    kb = KnowledgeStore()
    assert load_kb_dir(kb, str(tmp_path)) == 2
    assert kb.get("doc2").title == "Reboot Guide"
