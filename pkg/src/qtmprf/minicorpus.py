"""Deterministic generator for the bundled 200-document mini-corpus.

The text is synthetic: every document mixes a pool of common words with the
vocabulary of one topic.  Per topic there are relevant documents that use
the title words, relevant documents that avoid them (only feedback can find
those), and distractors that mention a title word while being about another
topic.  Relevance grades follow from how each document was generated.
"""

from __future__ import annotations

import os
from importlib import resources

import numpy as np

SEED = 20150809
N_TOPICS = 10
FIRST_TOPIC = 301

COMMON = """
said year time people new also like would first two make many state report
government public work group part system number way use high world large
day week month since percent made show area three official back good well
told program make take place national small local right long including member
""".split()
COMMON = list(dict.fromkeys(COMMON))

TOPICS = [
    ("air traffic control", """aircraft pilot runway radar controller airport flight tower
        landing airspace collision faa cockpit airline altitude delay navigation jet"""),
    ("coral reef bleaching", """coral reef ocean temperature algae marine bleaching species
        fish sea warming ecosystem diver tropical polyp shelf acid"""),
    ("wind turbine energy", """wind turbine blade energy electricity generator farm megawatt
        grid renewable rotor offshore tower power installed capacity"""),
    ("vaccine trial results", """vaccine trial dose placebo volunteer immune antibody efficacy
        phase patient clinical infection virus protection regulator injection"""),
    ("library book lending", """library book lending reader borrower shelf catalogue librarian
        loan fiction volume archive reading branch membership title"""),
    ("river flood defence", """river flood levee barrier rainfall water bank surge evacuation
        dam embankment storm drainage basin overflow sandbag"""),
    ("chess world championship", """chess championship grandmaster opening endgame match
        move rook bishop pawn tournament rating draw challenger board knight"""),
    ("bee colony collapse", """bee colony hive honey pollinator queen apiary beekeeper
        pesticide nectar swarm worker mite pollen crop decline"""),
    ("railway signal failure", """railway signal train track commuter station delay line
        carriage locomotive timetable passenger rail operator junction points"""),
    ("volcanic ash eruption", """volcano eruption ash lava magma crater plume seismic
        tremor summit geologist flight evacuation cloud vent dormant"""),
]


def _vocab(text: str) -> list[str]:
    return text.split()


def _text(rng, words, probs, n) -> list[str]:
    return list(rng.choice(words, size=n, p=probs))


def _zipf(n: int, s: float = 1.0) -> np.ndarray:
    p = 1.0 / np.arange(1, n + 1) ** s
    return p / p.sum()


def generate(seed: int = SEED):
    """Return (documents, topics, qrels) as lists of simple records.

    documents: (docno, text); topics: (topic id, title); qrels: (topic, docno, grade).
    """
    rng = np.random.default_rng(seed)
    common_p = _zipf(len(COMMON), 0.8)
    vocabs = [_vocab(v) for _, v in TOPICS]
    docs, qrels = [], []
    per_topic = 200 // N_TOPICS
    counter = 0
    for k, (title, _) in enumerate(TOPICS):
        topic_id = FIRST_TOPIC + k
        title_words = title.split()
        words = vocabs[k]
        other = [w for w in words if w not in title_words]
        for i in range(per_topic):
            counter += 1
            docno = f"MINI-{counter:04d}"
            length = int(rng.integers(80, 160))
            kind = "title" if i < 7 else "hidden" if i < 14 else "distractor"
            n_common = int(length * rng.uniform(0.45, 0.6))
            body = _text(rng, COMMON, common_p, n_common)
            n_topic = length - n_common
            if kind == "distractor":
                j = (k + 1 + int(rng.integers(0, N_TOPICS - 1))) % N_TOPICS
                body += _text(rng, vocabs[j], _zipf(len(vocabs[j])), n_topic - 2)
                body += list(rng.choice(title_words, size=2))
            else:
                pool = words if kind == "title" else other
                # bursty topical vocabulary: each document favours its own subset
                theta = rng.dirichlet(np.full(len(pool), 0.6))
                body += _text(rng, pool, theta, n_topic)
            rng.shuffle(body)
            docs.append((docno, " ".join(body)))
            if kind != "distractor":
                qrels.append((topic_id, docno, 2 if kind == "title" else 1))
            else:
                qrels.append((topic_id, docno, 0))
    topics = [(FIRST_TOPIC + k, title) for k, (title, _) in enumerate(TOPICS)]
    return docs, topics, qrels


def write(out_dir, seed: int = SEED) -> dict[str, str]:
    """Write docs.trec, topics.trec and qrels.txt under ``out_dir``."""
    docs, topics, qrels = generate(seed)
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name) for name in ("docs.trec", "topics.trec", "qrels.txt")}
    with open(paths["docs.trec"], "w", encoding="utf-8", newline="\n") as fh:
        for docno, text in docs:
            fh.write(f"<DOC>\n<DOCNO> {docno} </DOCNO>\n<TEXT>\n{text}\n</TEXT>\n</DOC>\n")
    with open(paths["topics.trec"], "w", encoding="utf-8", newline="\n") as fh:
        for topic_id, title in topics:
            fh.write(f"<top>\n<num> Number: {topic_id}\n<title> {title}\n</top>\n\n")
    with open(paths["qrels.txt"], "w", encoding="utf-8", newline="\n") as fh:
        for topic_id, docno, grade in qrels:
            fh.write(f"{topic_id} 0 {docno} {grade}\n")
    return paths


def bundled() -> dict[str, str]:
    """Paths of the mini-corpus files shipped with the package."""
    base = resources.files("qtmprf") / "data" / "minicorpus"
    return {name: str(base / name) for name in ("docs.trec", "topics.trec", "qrels.txt")}


if __name__ == "__main__":
    import sys

    for name, path in write(sys.argv[1] if len(sys.argv) > 1 else "minicorpus").items():
        print(name, path)
