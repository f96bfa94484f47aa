"""TREC ingestion, tokenization and the in-memory inverted index."""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import BinaryIO, Iterable, Iterator, Mapping

import numpy as np
from nltk.stem.porter import PorterStemmer

log = logging.getLogger(__name__)

_WORD = re.compile(r"[a-z0-9]+")


class TrecParseError(ValueError):
    """Malformed TREC markup; ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class CorpusError(ValueError):
    pass


def load_stoplist(path=None) -> frozenset[str]:
    """Read a newline-separated stoplist; ``#`` starts a comment line.

    Without a path the bundled 25-word list is used.
    """
    if path is None:
        text = resources.files("qtmprf").joinpath("data/stoplist.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    words = set()
    for line in text.splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


class Tokenizer:
    """Lowercase, split on non-alphanumerics, drop stopwords, Porter-stem."""

    def __init__(self, stoplist: Iterable[str] | None = None):
        self.stoplist = frozenset(stoplist) if stoplist is not None else load_stoplist()
        # the original algorithm, not NLTK's extended variant: "delays" -> "delai"
        stemmer = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)
        self._stem = lru_cache(maxsize=200_000)(stemmer.stem)

    def __call__(self, text: str) -> list[str]:
        stop = self.stoplist
        return [self._stem(w) for w in _WORD.findall(text.lower()) if w not in stop]


_default_tokenizer: Tokenizer | None = None


def default_tokenizer() -> Tokenizer:
    global _default_tokenizer
    if _default_tokenizer is None:
        _default_tokenizer = Tokenizer()
    return _default_tokenizer


def tokenize(text: str) -> list[str]:
    return default_tokenizer()(text)


@dataclass(frozen=True)
class Document:
    doc_id: str
    term_counts: Mapping[str, int]
    length: int
    distinct: int

    @classmethod
    def from_terms(cls, doc_id: str, terms: Iterable[str]) -> "Document":
        counts = dict(Counter(terms))
        return cls(doc_id, counts, sum(counts.values()), len(counts))

    @classmethod
    def from_counts(cls, doc_id: str, counts: Mapping[str, int]) -> "Document":
        counts = {t: int(c) for t, c in counts.items() if c > 0}
        return cls(doc_id, counts, sum(counts.values()), len(counts))

    @property
    def is_empty(self) -> bool:
        return self.length == 0


@dataclass(frozen=True)
class TopicQuery:
    topic_id: int
    terms: Mapping[str, int]

    @property
    def length(self) -> int:
        return sum(self.terms.values())


class Judgments:
    """Relevance grades keyed by (topic id, doc id)."""

    def __init__(self, grades: Mapping[tuple[int, str], int] | None = None):
        self._by_topic: dict[int, dict[str, int]] = {}
        for (topic, doc), grade in (grades or {}).items():
            self.set(topic, doc, grade)

    def set(self, topic: int, doc_id: str, grade: int) -> None:
        self._by_topic.setdefault(int(topic), {})[doc_id] = int(grade)

    def grade(self, topic: int, doc_id: str) -> int:
        return self._by_topic.get(topic, {}).get(doc_id, 0)

    def grades(self, topic: int) -> dict[str, int]:
        return self._by_topic.get(topic, {})

    def relevant(self, topic: int) -> set[str]:
        return {d for d, g in self.grades(topic).items() if g > 0}

    @property
    def topics(self) -> list[int]:
        return sorted(self._by_topic)

    def items(self):
        for topic in sorted(self._by_topic):
            for doc, grade in self._by_topic[topic].items():
                yield (topic, doc), grade

    def __len__(self) -> int:
        return sum(len(g) for g in self._by_topic.values())

    def __eq__(self, other) -> bool:
        return isinstance(other, Judgments) and self._by_topic == other._by_topic


# ----------------------------------------------------------------------
# parsers
# ----------------------------------------------------------------------

_TAG = re.compile(r"<(/?)([A-Za-z][A-Za-z0-9]*)\b[^>]*>")
# element contents never tokenized
_META = {"DOCNO", "DOCID", "DOCHDR"}


def _read(stream: BinaryIO | bytes | str) -> str:
    data = stream if isinstance(stream, (bytes, str)) else stream.read()
    if isinstance(data, bytes):
        # latin-1 maps bytes 1:1 to code points, keeping offsets exact
        return data.decode("latin-1")
    return data


def parse_trec_documents(stream, tokenizer: Tokenizer | None = None) -> Iterator[Document]:
    """Yield one :class:`Document` per ``<DOC>`` block of a TREC SGML stream."""
    tokenizer = tokenizer or default_tokenizer()
    text = _read(stream)
    doc_start = None
    docno = None
    docno_start = None
    skip = None
    pieces: list[str] = []
    pos = 0
    for m in _TAG.finditer(text):
        closing, name = m.group(1) == "/", m.group(2).upper()
        if doc_start is not None and skip is None:
            pieces.append(text[pos:m.start()])
        elif skip == "DOCNO":
            docno = (docno or "") + text[pos:m.start()]
        pos = m.end()

        if name == "DOC":
            if not closing:
                if doc_start is not None:
                    raise TrecParseError("nested <DOC>", m.start())
                doc_start, docno, skip, pieces = m.start(), None, None, []
                continue
            if doc_start is None:
                raise TrecParseError("</DOC> without matching <DOC>", m.start())
            if skip is not None:
                raise TrecParseError(f"unclosed <{skip}> inside <DOC>", docno_start)
            doc_id = (docno or "").strip()
            if not doc_id:
                log.warning("skipping <DOC> at byte offset %d: no DOCNO", doc_start)
            else:
                doc = Document.from_terms(doc_id, tokenizer(" ".join(pieces)))
                if doc.is_empty:
                    log.warning("document %s has no indexable text", doc_id)
                yield doc
            doc_start = None
        elif doc_start is None:
            continue
        elif name in _META:
            if not closing:
                if skip is not None:
                    raise TrecParseError(f"<{name}> nested in <{skip}>", m.start())
                skip, docno_start = name, m.start()
            elif skip == name:
                skip = None
            else:
                raise TrecParseError(f"unexpected </{name}>", m.start())
    if doc_start is not None:
        raise TrecParseError("unterminated <DOC>", doc_start)


_TOP = re.compile(r"<top>(.*?)</top>", re.I | re.S)
_NUM = re.compile(r"<num>\s*(?:number\s*:)?\s*(\d+)", re.I)
_TITLE = re.compile(r"<title>(.*?)(?=<[a-z/]|\Z)", re.I | re.S)


def parse_trec_topics(stream, tokenizer: Tokenizer | None = None) -> list[TopicQuery]:
    """Parse ``<top>`` blocks; only the title field becomes the query."""
    tokenizer = tokenizer or default_tokenizer()
    topics = []
    for block in _TOP.finditer(_read(stream)):
        body = block.group(1)
        num = _NUM.search(body)
        if num is None:
            raise TrecParseError("<top> without <num>", block.start())
        topic_id = int(num.group(1))
        title = _TITLE.search(body)
        if title is None or not title.group(1).strip():
            log.warning("topic %d has no title; skipped", topic_id)
            continue
        raw = re.sub(r"^\s*topic\s*:", "", title.group(1), flags=re.I)
        terms = Counter(tokenizer(raw))
        if not terms:
            raise CorpusError(f"topic {topic_id}: title {raw.strip()!r} is empty after stopping")
        topics.append(TopicQuery(topic_id, dict(terms)))
    return topics


def parse_qrels(stream) -> Judgments:
    """Read ``topic iteration docno grade`` lines; later duplicates win."""
    judgments = Judgments()
    for lineno, line in enumerate(_read(stream).splitlines(), 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 4:
            raise ValueError(f"qrels line {lineno}: expected 4 columns, got {len(fields)}")
        try:
            topic, grade = int(fields[0]), int(fields[3])
        except ValueError:
            raise ValueError(f"qrels line {lineno}: non-integer topic or grade {line.strip()!r}") from None
        if grade < 0:
            # some collections mark spam/junk with negative grades
            grade = 0
        judgments.set(topic, fields[2], grade)
    return judgments


# ----------------------------------------------------------------------
# index
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class CollectionStats:
    doc_count: int
    df: Mapping[str, int]
    df_total: int
    ctf: Mapping[str, int]
    token_total: int

    @classmethod
    def from_documents(cls, documents: Iterable[Document]) -> "CollectionStats":
        df: Counter = Counter()
        ctf: Counter = Counter()
        n = 0
        for doc in documents:
            if doc.is_empty:
                continue
            n += 1
            df.update(doc.term_counts.keys())
            ctf.update(doc.term_counts)
        return cls(n, dict(df), sum(df.values()), dict(ctf), sum(ctf.values()))


@dataclass(frozen=True)
class Postings:
    docs: np.ndarray  # internal ids, ascending
    counts: np.ndarray

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self):
        return zip(self.docs.tolist(), self.counts.tolist())


_NO_POSTINGS = Postings(np.zeros(0, np.int64), np.zeros(0, np.int64))


@dataclass(eq=False)
class InvertedIndex:
    """Immutable index: per-term postings, the document table and collection stats."""

    documents: list[Document]
    postings: dict[str, Postings]
    stats: CollectionStats
    lengths: np.ndarray = field(init=False, repr=False)
    distinct: np.ndarray = field(init=False, repr=False)
    doc_ids: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.lengths = np.array([d.length for d in self.documents], dtype=np.int64)
        self.distinct = np.array([d.distinct for d in self.documents], dtype=np.int64)
        self.doc_ids = np.array([d.doc_id for d in self.documents], dtype=object)
        self._internal = {d.doc_id: i for i, d in enumerate(self.documents)}
        self.retrievable = self.lengths > 0
        # rank of every internal id in doc_id order, for tie-breaking
        order = sorted(range(len(self.documents)), key=lambda i: self.documents[i].doc_id)
        self.id_rank = np.empty(len(self.documents), dtype=np.int64)
        self.id_rank[order] = np.arange(len(self.documents))

    def __len__(self) -> int:
        return len(self.documents)

    @property
    def vocabulary(self) -> list[str]:
        return sorted(self.postings)

    def term_postings(self, term: str) -> Postings:
        return self.postings.get(term, _NO_POSTINGS)

    def internal_id(self, doc_id: str) -> int:
        return self._internal[doc_id]

    def document(self, doc_id: str) -> Document:
        return self.documents[self._internal[doc_id]]


def build_index(documents: Iterable[Document]) -> InvertedIndex:
    docs: list[Document] = []
    seen: set[str] = set()
    lists: dict[str, tuple[list[int], list[int]]] = {}
    for doc in documents:
        if doc.doc_id in seen:
            raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        internal = len(docs)
        docs.append(doc)
        for term, count in doc.term_counts.items():
            ids, counts = lists.setdefault(term, ([], []))
            ids.append(internal)
            counts.append(count)
    if not docs:
        raise CorpusError("empty corpus")
    postings = {
        term: Postings(np.asarray(ids, dtype=np.int64), np.asarray(counts, dtype=np.int64))
        for term, (ids, counts) in lists.items()
    }
    return InvertedIndex(docs, postings, CollectionStats.from_documents(docs))
