"""Runbook / wiki / deployment-metadata index with BM25 retrieval.

Ranking is deterministic BM25 (k1=1.2, b=0.75) over whole documents with
Lucene-style non-negative idf: idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)).
Corpus statistics (N, avgdl, df) are computed over the full index; kind and
service filters restrict the candidate set before scoring. Ties break by
doc_id ascending. Tokenization: lowercase, split on non-alphanumerics, no
stemming.
"""

from __future__ import annotations

import math
import os
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

from .errors import EmptyBody, EmptyIndex, InvalidQuery

_TOKEN_RE = re.compile(r"[a-z0-9]+")

BM25_K1 = 1.2
BM25_B = 0.75


def tokenize(text: str) -> List[str]:
    return _TOKEN_RE.findall(text.lower())


class DocKind(str, Enum):
    RUNBOOK = "RUNBOOK"
    WIKI = "WIKI"
    DEPLOYMENT = "DEPLOYMENT"


@dataclass
class KnowledgeDoc:
    doc_id: str
    kind: DocKind
    title: str
    body: str
    service: Optional[str] = None
    meta: Dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.body.strip():
            raise EmptyBody(f"doc {self.doc_id} has an empty body")
        if self.kind == DocKind.DEPLOYMENT:
            if "commit_id" not in self.meta or "deployed_at" not in self.meta:
                raise EmptyBody(f"deployment doc {self.doc_id} missing commit_id/deployed_at")

    @property
    def deployed_at_ms(self) -> int:
        return int(self.meta.get("deployed_at", "0"))

    def body_text(self) -> str:
        return f"{self.title} {self.body}"

    def to_json(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "kind": self.kind.value,
            "title": self.title,
            "body": self.body,
            "service": self.service,
            "meta": dict(sorted(self.meta.items())),
        }


@dataclass
class RetrievalHit:
    doc_id: str
    score: float
    matched_terms: List[str]


class KnowledgeStore:
    """Concurrent searches, serialized index mutation."""

    def __init__(self) -> None:
        self._docs: Dict[str, KnowledgeDoc] = {}
        self._tf: Dict[str, Counter] = {}  # doc_id -> term counts
        self._lock = threading.RLock()

    def index_doc(self, doc: KnowledgeDoc) -> None:
        doc.validate()
        with self._lock:
            self._docs[doc.doc_id] = doc
            self._tf[doc.doc_id] = Counter(tokenize(doc.body_text()))

    def __len__(self) -> int:
        with self._lock:
            return len(self._docs)

    def get(self, doc_id: str) -> Optional[KnowledgeDoc]:
        with self._lock:
            return self._docs.get(doc_id)

    def docs_of_kind(self, *kinds: DocKind) -> List[KnowledgeDoc]:
        with self._lock:
            return [d for d in self._docs.values() if d.kind in kinds]

    def corpus_stats(self) -> dict:
        with self._lock:
            n = len(self._docs)
            total = sum(sum(tf.values()) for tf in self._tf.values())
        return {"doc_count": n, "avg_length": (total / n) if n else 0.0}

    def search(
        self,
        query_text: str,
        k: int,
        kind_filter: Optional[DocKind] = None,
        service_filter: Optional[str] = None,
    ) -> List[RetrievalHit]:
        if k < 1:
            raise InvalidQuery(f"k must be >= 1, got {k}")
        terms = tokenize(query_text)
        with self._lock:
            if not self._docs:
                raise EmptyIndex("no documents indexed")
            n = len(self._docs)
            avgdl = sum(sum(tf.values()) for tf in self._tf.values()) / n
            df: Counter = Counter()
            for tf in self._tf.values():
                for t in set(terms):
                    if tf.get(t, 0) > 0:
                        df[t] += 1
            hits: List[RetrievalHit] = []
            for doc_id in self._docs:
                doc = self._docs[doc_id]
                if kind_filter is not None and doc.kind != kind_filter:
                    continue
                if service_filter is not None and doc.service != service_filter:
                    continue
                tf = self._tf[doc_id]
                dl = sum(tf.values())
                score = 0.0
                matched: List[str] = []
                for t in terms:
                    f = tf.get(t, 0)
                    if f == 0:
                        continue
                    idf = math.log(1.0 + (n - df[t] + 0.5) / (df[t] + 0.5))
                    denom = f + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / avgdl)
                    score += idf * f * (BM25_K1 + 1.0) / denom
                    if t not in matched:
                        matched.append(t)
                if score > 0.0:
                    hits.append(RetrievalHit(doc_id=doc_id, score=score, matched_terms=matched))
        hits.sort(key=lambda h: (-h.score, h.doc_id))
        return hits[:k]

    def recent_deployments(self, service: str, since_ms: int) -> List[KnowledgeDoc]:
        with self._lock:
            docs = [
                d
                for d in self._docs.values()
                if d.kind == DocKind.DEPLOYMENT and d.service == service and d.deployed_at_ms >= since_ms
            ]
        docs.sort(key=lambda d: (-d.deployed_at_ms, d.doc_id))
        return docs


# --------------------------------------------------------------------------
# Directory loader: front-matter header lines, blank line, body
# --------------------------------------------------------------------------

_HEADER_KEYS = {"kind", "service", "commit_id", "deployed_at", "title"}


def parse_doc_file(text: str, doc_id: str) -> KnowledgeDoc:
    lines = text.splitlines()
    headers: Dict[str, str] = {}
    body_start = 0
    for i, line in enumerate(lines):
        if not line.strip():
            body_start = i + 1
            break
        if ":" not in line:
            body_start = i
            break
        key, _, value = line.partition(":")
        key = key.strip().lower()
        if key not in _HEADER_KEYS:
            body_start = i
            break
        headers[key] = value.strip()
        body_start = i + 1
    body = "\n".join(lines[body_start:]).strip()
    kind = DocKind(headers.get("kind", "WIKI").upper())
    meta: Dict[str, str] = {}
    if "commit_id" in headers:
        meta["commit_id"] = headers["commit_id"]
    if "deployed_at" in headers:
        meta["deployed_at"] = str(_parse_ts(headers["deployed_at"]))
    return KnowledgeDoc(
        doc_id=doc_id,
        kind=kind,
        title=headers.get("title", doc_id),
        body=body,
        service=headers.get("service"),
        meta=meta,
    )


def _parse_ts(raw: str) -> int:
    from datetime import datetime

    try:
        return int(raw)
    except ValueError:
        pass
    dt = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    return int(dt.timestamp() * 1000)


def load_kb_dir(store: KnowledgeStore, path: str) -> int:
    count = 0
    for name in sorted(os.listdir(path)):
        full = os.path.join(path, name)
        if not os.path.isfile(full) or not name.lower().endswith((".txt", ".md")):
            continue
        with open(full, "r", encoding="utf-8") as fh:
            doc = parse_doc_file(fh.read(), doc_id=os.path.splitext(name)[0])
        store.index_doc(doc)
        count += 1
    return count
