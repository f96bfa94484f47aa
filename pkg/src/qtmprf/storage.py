"""Single-file binary index format.

Layout::

    magic (8 bytes) | format version (u32) | section count (u32)
    section*: tag (4 bytes) | payload length (u64) | crc32 (u32) | payload
    trailer: b"QEND"

All integers are little-endian.  Arrays are raw int64.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib

import numpy as np

from .corpus import CollectionStats, Document, InvertedIndex, Postings

MAGIC = b"QTMPRFIX"
FORMAT_VERSION = 1
TRAILER = b"QEND"
_HEAD = struct.Struct("<8sII")
_SECTION = struct.Struct("<4sQI")


class IndexIntegrityError(ValueError):
    pass


class IndexVersionError(ValueError):
    pass


def _ints(values) -> bytes:
    return np.asarray(values, dtype="<i8").tobytes()


def persist_index(index: InvertedIndex, path) -> None:
    terms = index.vocabulary
    offsets = [0]
    for term in terms:
        offsets.append(offsets[-1] + len(index.postings[term]))
    pdocs = [index.postings[t].docs for t in terms]
    pcounts = [index.postings[t].counts for t in terms]
    stats = index.stats
    sections = [
        (b"STAT", json.dumps({
            "doc_count": stats.doc_count,
            "df_total": stats.df_total,
            "token_total": stats.token_total,
        }, sort_keys=True).encode()),
        (b"LEXI", "\n".join(terms).encode("utf-8")),
        (b"TFRQ", _ints([stats.df[t] for t in terms] + [stats.ctf[t] for t in terms])),
        (b"POFF", _ints(offsets)),
        (b"PDOC", _ints(np.concatenate(pdocs) if pdocs else [])),
        (b"PCNT", _ints(np.concatenate(pcounts) if pcounts else [])),
        (b"DOCS", "\n".join(d.doc_id for d in index.documents).encode("utf-8")),
        (b"DLEN", _ints(np.concatenate([index.lengths, index.distinct]))),
    ]
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".index-")
    try:
        with os.fdopen(fd, "wb") as out:
            out.write(_HEAD.pack(MAGIC, FORMAT_VERSION, len(sections)))
            for tag, payload in sections:
                out.write(_SECTION.pack(tag, len(payload), zlib.crc32(payload)))
                out.write(payload)
            out.write(TRAILER)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_sections(blob: bytes) -> dict[bytes, bytes]:
    if len(blob) < _HEAD.size or blob[:8] != MAGIC:
        raise IndexIntegrityError("not an index file (bad magic bytes)")
    _, version, count = _HEAD.unpack_from(blob)
    if version != FORMAT_VERSION:
        raise IndexVersionError(
            f"index format version {version} is not supported (this build reads version {FORMAT_VERSION})"
        )
    pos = _HEAD.size
    sections = {}
    for _ in range(count):
        if pos + _SECTION.size > len(blob):
            raise IndexIntegrityError("truncated index file (section header)")
        tag, length, crc = _SECTION.unpack_from(blob, pos)
        pos += _SECTION.size
        payload = blob[pos:pos + length]
        if len(payload) != length:
            raise IndexIntegrityError(f"truncated index file (section {tag.decode(errors='replace')})")
        if zlib.crc32(payload) != crc:
            raise IndexIntegrityError(f"checksum mismatch in section {tag.decode(errors='replace')}")
        sections[tag] = payload
        pos += length
    if blob[pos:] != TRAILER:
        raise IndexIntegrityError("truncated or trailing data after last section")
    return sections


def load_index(path) -> InvertedIndex:
    with open(path, "rb") as fh:
        blob = fh.read()
    s = _read_sections(blob)
    try:
        meta = json.loads(s[b"STAT"])
        terms = s[b"LEXI"].decode("utf-8").split("\n") if s[b"LEXI"] else []
        freqs = np.frombuffer(s[b"TFRQ"], dtype="<i8")
        offsets = np.frombuffer(s[b"POFF"], dtype="<i8")
        pdocs = np.frombuffer(s[b"PDOC"], dtype="<i8").astype(np.int64)
        pcounts = np.frombuffer(s[b"PCNT"], dtype="<i8").astype(np.int64)
        doc_ids = s[b"DOCS"].decode("utf-8").split("\n")
        dlen = np.frombuffer(s[b"DLEN"], dtype="<i8")
    except KeyError as exc:
        raise IndexIntegrityError(f"missing section {exc.args[0]!r}") from None
    n_terms, n_docs = len(terms), len(doc_ids)
    if len(freqs) != 2 * n_terms or len(offsets) != n_terms + 1 or len(dlen) != 2 * n_docs:
        raise IndexIntegrityError("inconsistent section sizes")

    postings = {}
    forward: list[dict[str, int]] = [{} for _ in range(n_docs)]
    for i, term in enumerate(terms):
        docs = pdocs[offsets[i]:offsets[i + 1]]
        counts = pcounts[offsets[i]:offsets[i + 1]]
        postings[term] = Postings(docs, counts)
        for d, c in zip(docs.tolist(), counts.tolist()):
            forward[d][term] = c
    documents = [
        Document(doc_id, forward[i], int(dlen[i]), int(dlen[n_docs + i]))
        for i, doc_id in enumerate(doc_ids)
    ]
    stats = CollectionStats(
        doc_count=meta["doc_count"],
        df=dict(zip(terms, freqs[:n_terms].tolist())),
        df_total=meta["df_total"],
        ctf=dict(zip(terms, freqs[n_terms:].tolist())),
        token_total=meta["token_total"],
    )
    return InvertedIndex(documents, postings, stats)
