"""Ranked retrieval by query likelihood and feedback-set construction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .corpus import Document, InvertedIndex
from .models import (
    BackgroundModel,
    ModelConfig,
    mixing_weights,
    scorable_terms,
    term_probabilities,
)


@dataclass(frozen=True)
class Ranking:
    """Documents in descending score order, ties broken by ascending doc id."""

    topic_id: int | None
    doc_ids: tuple[str, ...]
    scores: tuple[float, ...]
    internal: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.doc_ids)

    def __iter__(self):
        return iter(zip(self.doc_ids, self.scores))

    def head(self, k: int) -> "Ranking":
        return Ranking(self.topic_id, self.doc_ids[:k], self.scores[:k], self.internal[:k])


def score_documents(
    index: InvertedIndex, query: Mapping[str, float], config: ModelConfig, background: BackgroundModel
) -> np.ndarray:
    """Sum_t w_t * log p(t|d) for every document; -inf where a doc is unscorable.

    Integer counts give the query log-likelihood; a weighted (expanded) query
    gives the cross-entropy ranking score.
    """
    terms = scorable_terms(query, background, config)
    lam = mixing_weights(index, config, background)
    scores = np.zeros(len(index))
    with np.errstate(divide="ignore"):
        for term in sorted(terms):
            scores += terms[term] * np.log(term_probabilities(index, config, background, term, lam))
    scores[~index.retrievable] = -np.inf
    return scores


def rank_scores(index: InvertedIndex, scores: np.ndarray, k: int, topic_id: int | None = None) -> Ranking:
    if k < 1:
        raise ValueError("k must be >= 1")
    finite = np.flatnonzero(np.isfinite(scores))
    if len(finite) > k:
        threshold = np.partition(scores[finite], len(finite) - k)[len(finite) - k]
        finite = finite[scores[finite] >= threshold]
    order = finite[np.lexsort((index.id_rank[finite], -scores[finite]))][:k]
    return Ranking(
        topic_id,
        tuple(index.doc_ids[order].tolist()),
        tuple(scores[order].tolist()),
        tuple(order.tolist()),
    )


def search(
    index: InvertedIndex,
    query,
    config: ModelConfig,
    background: BackgroundModel,
    k: int = 1000,
    topic_id: int | None = None,
) -> Ranking:
    if topic_id is None:
        topic_id = getattr(query, "topic_id", None)
    terms = query.terms if hasattr(query, "terms") else query
    return rank_scores(index, score_documents(index, terms, config, background), k, topic_id)


def posterior_weights(log_scores: Sequence[float]) -> np.ndarray:
    """Normalised document posteriors from log query-likelihoods (max-shifted)."""
    ls = np.asarray(log_scores, dtype=float)
    if ls.size == 0:
        raise ValueError("feedback set must hold at least one document")
    if not np.all(np.isfinite(ls)):
        raise ValueError("feedback log scores must be finite")
    w = np.exp(ls - ls.max())
    return w / w.sum()


@dataclass(frozen=True)
class FeedbackSet:
    documents: tuple[Document, ...]
    log_scores: tuple[float, ...]
    weights: tuple[float, ...]

    @classmethod
    def from_documents(cls, documents: Iterable[Document], log_scores: Sequence[float]) -> "FeedbackSet":
        documents = tuple(documents)
        if len(documents) != len(log_scores):
            raise ValueError("one log score per feedback document is required")
        weights = posterior_weights(log_scores)
        return cls(documents, tuple(float(s) for s in log_scores), tuple(weights.tolist()))

    def __len__(self) -> int:
        return len(self.documents)

    def vocabulary(self) -> list[str]:
        terms: set[str] = set()
        for doc in self.documents:
            terms.update(doc.term_counts)
        return sorted(terms)


def feedback_set(index: InvertedIndex, ranking: Ranking, size: int) -> FeedbackSet:
    top = ranking.head(size)
    return FeedbackSet.from_documents((index.documents[i] for i in top.internal), top.scores)


def write_run(rankings: Iterable[Ranking], out: TextIO, tag: str = "qtmprf") -> None:
    for ranking in rankings:
        for rank, (doc_id, score) in enumerate(ranking, 1):
            out.write(f"{ranking.topic_id} Q0 {doc_id} {rank} {score:.6f} {tag}\n")


def read_run(stream: TextIO) -> dict[int, list[str]]:
    """Read a 6-column TREC run; documents are ordered by score, then rank."""
    rows: dict[int, list[tuple[float, int, str]]] = {}
    for lineno, line in enumerate(stream, 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 6:
            raise ValueError(f"run line {lineno}: expected 6 columns, got {len(fields)}")
        rows.setdefault(int(fields[0]), []).append((float(fields[4]), int(fields[3]), fields[2]))
    return {t: [d for _, _, d in sorted(r, key=lambda x: (-x[0], x[1]))] for t, r in rows.items()}
