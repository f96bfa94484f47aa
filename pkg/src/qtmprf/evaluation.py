"""TREC-style effectiveness measures, significance testing and cross-validation."""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, TextIO

import numpy as np
from scipy import stats

from .corpus import Judgments

log = logging.getLogger(__name__)

EVAL_DEPTH = 1000


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class EvalRecord:
    topic_id: int
    ap: float
    ndcg10: float


def _relevant(judgments: Judgments, topic: int) -> int:
    return len(judgments.relevant(topic))


def average_precision(ranking: Sequence[str], judgments: Judgments, topic: int, depth: int = EVAL_DEPTH) -> float:
    """Non-interpolated AP; unjudged documents count as non-relevant.

    Raises :class:`EvaluationError` when the topic has no relevant document.
    """
    grades = judgments.grades(topic)
    n_rel = sum(1 for g in grades.values() if g > 0)
    if n_rel == 0:
        raise EvaluationError(f"topic {topic} has no relevant documents")
    found = 0
    total = 0.0
    for rank, doc_id in enumerate(ranking[:depth], 1):
        if grades.get(doc_id, 0) > 0:
            found += 1
            total += found / rank
    return total / n_rel


def _dcg(gains: Iterable[float]) -> float:
    return sum(g / math.log2(rank + 1) for rank, g in enumerate(gains, 1))


def ndcg_at_k(ranking: Sequence[str], judgments: Judgments, topic: int, k: int = 10) -> float:
    """NDCG@k with the relevance grade as gain and a 1/log2(rank+1) discount."""
    grades = judgments.grades(topic)
    ideal = sorted((g for g in grades.values() if g > 0), reverse=True)[:k]
    if not ideal:
        raise EvaluationError(f"topic {topic} has no relevant documents")
    return _dcg(grades.get(d, 0) for d in ranking[:k]) / _dcg(ideal)


@dataclass(frozen=True)
class TTest:
    p_value: float
    t: float
    degenerate: bool = False


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTest:
    """Two-sided paired t-test on per-topic scores.

    All-zero differences give p = 1.  Constant non-zero differences have zero
    variance; they are reported with the smallest positive float and the
    ``degenerate`` flag set.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise EvaluationError("paired samples must have equal length")
    if a.size < 2:
        raise EvaluationError("paired t-test needs at least two pairs")
    diff = a - b
    if np.all(diff == 0):
        return TTest(1.0, 0.0)
    sd = diff.std(ddof=1)
    # differences equal up to rounding (e.g. 0.2-0.1 vs 0.3-0.2) have zero variance
    if sd <= 1e-12 * abs(diff.mean()):
        return TTest(sys.float_info.min, math.copysign(math.inf, diff.mean()), degenerate=True)
    t = diff.mean() / (sd / math.sqrt(diff.size))
    p = 2.0 * stats.t.sf(abs(t), df=diff.size - 1)
    return TTest(float(p), float(t))


def evaluate_run(run: Mapping[int, Sequence[str]], judgments: Judgments, topics: Iterable[int] | None = None
                 ) -> dict[int, EvalRecord]:
    """Per-topic AP and NDCG@10.  Topics without relevant documents are skipped.

    A judged topic absent from the run scores zero.
    """
    topics = sorted(judgments.topics if topics is None else topics)
    records = {}
    for topic in topics:
        if _relevant(judgments, topic) == 0:
            log.warning("topic %s has no relevant documents; excluded", topic)
            continue
        ranking = run.get(topic, [])
        records[topic] = EvalRecord(topic, average_precision(ranking, judgments, topic),
                                    ndcg_at_k(ranking, judgments, topic))
    return records


def mean_scores(records: Mapping[int, EvalRecord]) -> tuple[float, float]:
    """(MAP, mean NDCG@10) over the given records."""
    if not records:
        raise EvaluationError("no evaluable topics")
    values = list(records.values())
    return (math.fsum(r.ap for r in values) / len(values),
            math.fsum(r.ndcg10 for r in values) / len(values))


# ----------------------------------------------------------------------
# two-fold cross-validation
# ----------------------------------------------------------------------


@dataclass
class CrossValidation:
    """Result of even/odd two-fold cross-validation.

    ``chosen[parity]`` is the grid point applied to that fold (selected on
    the other fold); ``records`` are the held-out per-topic scores of all
    topics, so ``map``/``ndcg10`` are means over topics.
    """

    chosen: dict[str, object]
    records: dict[int, EvalRecord]
    fold_scores: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def map(self) -> float:
        return mean_scores(self.records)[0]

    @property
    def ndcg10(self) -> float:
        return mean_scores(self.records)[1]


def folds(topics: Iterable[int]) -> dict[str, list[int]]:
    topics = sorted(set(topics))
    split = {"even": [t for t in topics if t % 2 == 0], "odd": [t for t in topics if t % 2 == 1]}
    for name, members in split.items():
        if not members:
            raise EvaluationError(f"cross-validation needs {name} topic ids; none present")
    return split


def cross_validate(
    grid: Sequence[object],
    evaluate: Callable[[object], Mapping[int, EvalRecord]],
    topics: Iterable[int],
) -> CrossValidation:
    """Select a grid point on one parity class, score it on the other.

    ``evaluate(point)`` returns per-topic records for every topic.  The
    objective is MAP; ties go to the earliest grid point.  Each grid point is
    evaluated once.
    """
    if not grid:
        raise EvaluationError("empty parameter grid")
    split = folds(topics)
    results = [evaluate(point) for point in grid]
    chosen, records, fold_scores = {}, {}, {}
    for held_out, train in (("even", "odd"), ("odd", "even")):
        best, best_map = 0, -math.inf
        for i, res in enumerate(results):
            train_map = mean_scores({t: res[t] for t in split[train] if t in res})[0]
            if train_map > best_map:
                best, best_map = i, train_map
        chosen[held_out] = grid[best]
        held = {t: results[best][t] for t in split[held_out] if t in results[best]}
        fold_scores[held_out] = mean_scores(held)
        records.update(held)
    log.info("cross-validation chose %s (even) / %s (odd)", chosen["even"], chosen["odd"])
    return CrossValidation(chosen, dict(sorted(records.items())), fold_scores)


# ----------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------


def write_per_topic(records: Mapping[int, EvalRecord], out: TextIO) -> None:
    out.write("topic\tAP\tNDCG@10\n")
    for topic in sorted(records):
        r = records[topic]
        out.write(f"{topic}\t{r.ap:.4f}\t{r.ndcg10:.4f}\n")
    m, n = mean_scores(records)
    out.write(f"all\t{m:.4f}\t{n:.4f}\n")


def summary_table(cells: Mapping[tuple[str, str], tuple[float, float]], markers: Mapping | None = None) -> str:
    """Method x collection table of ``MAP (NDCG@10)`` to three decimals.

    ``cells`` maps (method, collection) to (MAP, NDCG@10); ``markers`` may add
    a suffix (e.g. a significance mark) to a cell.
    """
    markers = markers or {}
    methods = list(dict.fromkeys(m for m, _ in cells))
    collections = list(dict.fromkeys(c for _, c in cells))
    rows = [["Method"] + collections]
    for m in methods:
        row = [m]
        for c in collections:
            if (m, c) in cells:
                ap, nd = cells[m, c]
                row.append(f"{ap:.3f} ({nd:.3f}){markers.get((m, c), '')}")
            else:
                row.append("-")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows)
