"""Empirical verifier for the PRF term-selection constraints.

Each constraint is probed by generating random feedback scenarios and then
sweeping the one variable the constraint controls.  A method's score for the
probed term is read through the public ``build_*`` functions, so iterative
estimators (SMM, PDCM) are checked exactly as they run in retrieval.

Probe scenarios follow one convention throughout: a feedback document keeps
its length fixed unless the length itself is the controlled variable, so extra
occurrences of the probed term displace tokens of a term local to that
document.  Length itself is varied by scaling the document's other counts.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .corpus import Document
from .feedback import build_pdcm, build_qtm, build_rm1, build_smm, dirichlet_topical, spud_topical
from .models import BackgroundModel, ConvergenceWarning
from .retrieval import FeedbackSet

METHODS = ("PDCM", "SMM", "RM3", "QTM_dir", "QTM_spud")
CONSTRAINTS = ("DS", "TF", "Concavity", "IDF", "DL", "DF")

# Table of expected adherence, rows in METHODS order, columns in CONSTRAINTS order.
EXPECTED = {
    "PDCM": (False, True, True, False, True, True),
    "SMM": (False, True, True, True, True, False),
    "RM3": (True, True, False, False, True, False),
    "QTM_dir": (True, True, True, True, False, True),
    "QTM_spud": (True, True, True, True, True, True),
}

TARGET = "t"
# collection mass outside the probed documents' vocabulary
REST_DF = 2_000_000
REST_CTF = 3_500_000
# relative change below which a score is treated as unchanged
REL_TOL = 1e-5


class ProbeError(ValueError):
    pass


@dataclass(frozen=True)
class ProbeConfig:
    """One synthetic feedback scenario."""

    documents: tuple[dict, ...]
    log_scores: tuple[float, ...]
    df: dict
    ctf: dict
    omega: float = 0.8
    mass: float = 1000.0
    mu: float = 1500.0
    smm_lambda: float = 0.2

    def __post_init__(self):
        for doc in self.documents:
            if any(c < 0 for c in doc.values()):
                raise ProbeError("negative count in probe document")
        if self.df.get(TARGET, 0) < 1:
            raise ProbeError("probed term needs df >= 1")

    def feedback(self) -> FeedbackSet:
        docs = [Document.from_counts(f"p{i}", counts) for i, counts in enumerate(self.documents)]
        return FeedbackSet.from_documents(docs, self.log_scores)

    def background(self) -> BackgroundModel:
        df_total = REST_DF + sum(self.df.values())
        token_total = REST_CTF + sum(self.ctf.values())
        return BackgroundModel(
            {t: v / df_total for t, v in self.df.items()},
            {t: v / token_total for t, v in self.ctf.items()},
            self.mass,
        )

    def counts(self, i: int) -> dict:
        return dict(self.documents[i])

    def with_doc(self, i: int, counts: dict) -> "ProbeConfig":
        docs = list(self.documents)
        docs[i] = {t: c for t, c in counts.items() if c > 0}
        return replace(self, documents=tuple(docs))


def _estimator_inputs(method: str, probe: ProbeConfig):
    """Hashable summary of everything an iterative estimator reads, else None."""
    if method not in ("PDCM", "SMM"):
        return None
    docs = tuple(tuple(sorted(d.items())) for d in probe.documents)
    if method == "PDCM":
        return method, docs
    return method, docs, probe.smm_lambda, tuple(sorted(probe.ctf.items()))


def method_score(method: str, probe: ProbeConfig, cache: dict | None = None) -> float:
    """Raw selection value of the probed term under ``method``.

    ``cache`` memoises the iterative estimators (PDCM, SMM), which ignore
    most of what a sweep varies.
    """
    key = _estimator_inputs(method, probe) if cache is not None else None
    if key is not None and key in cache:
        return cache[key]
    fs, bg = probe.feedback(), probe.background()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        if method == "PDCM":
            model = build_pdcm(fs, 1, trace=False)
        elif method == "SMM":
            model = build_smm(fs, probe.smm_lambda, bg, 1, trace=False)
        elif method == "RM3":
            model = build_rm1(fs, 1)
        elif method == "QTM_dir":
            model = build_qtm(fs, dirichlet_topical(probe.mu, bg), 1)
        elif method == "QTM_spud":
            model = build_qtm(fs, spud_topical(probe.omega, bg), 1)
        else:
            raise ValueError(f"unknown method {method!r}")
    score = model.scored.get(TARGET, 0.0)
    if key is not None:
        cache[key] = score
    return score


# ----------------------------------------------------------------------
# scenario generation
# ----------------------------------------------------------------------

# shared feedback vocabulary: Zipfian collection frequencies, bursty documents
VOCAB = 200
ZIPF = 1.0 / np.arange(1, VOCAB + 1)
ZIPF /= ZIPF.sum()
SWEEP_STEPS = 10


def _local(j: int) -> str:
    return f"loc{j}"


def _dcm_fit_exists(probe: "ProbeConfig") -> bool:
    """True when the feedback documents are over-dispersed enough for a finite DCM fit."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return bool(build_pdcm(probe.feedback(), 1, trace=False).diagnostics["converged"])


def _scenario(rng: np.random.Generator) -> ProbeConfig:
    """Random feedback set drawn from a Dirichlet-compound multinomial.

    Besides the shared vocabulary, each document j repeats a term of its own,
    ``loc{j}``, that no other feedback document uses; its collection
    frequency ranges from moderately to very common.  Scenarios whose documents
    are under-dispersed (the DCM likelihood has no finite maximiser) are
    redrawn, since PDCM is undefined on them.
    """
    while True:
        n_docs = int(rng.integers(5, 11))
        df = {}
        for r in range(VOCAB):
            df[f"w{r:03d}"] = int(4_000_000 * ZIPF[r] * rng.uniform(0.3, 1.0)) + 1
        df[TARGET] = int(rng.integers(20, 300))
        for j in range(n_docs):
            df[_local(j)] = int(np.exp(rng.uniform(np.log(10_000), np.log(1_000_000))))
        ctf = {t: int(v * rng.uniform(1.1, 3.0)) for t, v in df.items()}
        concentration = rng.uniform(50, 300)
        docs = []
        for j in range(n_docs):
            sample = rng.multinomial(int(rng.integers(60, 200)), rng.dirichlet(concentration * ZIPF))
            counts = {f"w{r:03d}": int(c) for r, c in enumerate(sample) if c}
            counts[_local(j)] = int(rng.integers(12, 30))
            if rng.random() < 0.6:
                counts[TARGET] = int(rng.integers(1, 5))
            docs.append(counts)
        if not any(TARGET in c for c in docs):
            docs[0][TARGET] = 1
        probe = ProbeConfig(
            tuple(docs), tuple(float(s) for s in rng.uniform(-12.0, -8.0, n_docs)), df, ctf,
            omega=float(rng.uniform(0.5, 0.9)),
            mass=float(rng.uniform(300, 3000)),
            mu=float(rng.uniform(500, 2500)),
            smm_lambda=float(rng.uniform(0.1, 0.7)),
        )
        if _dcm_fit_exists(probe):
            return probe


def _move(counts: dict, j: int, amount: int) -> dict:
    """Add ``amount`` probed-term tokens to document j, taken from its local term."""
    counts = dict(counts)
    counts[TARGET] = counts.get(TARGET, 0) + amount
    counts[_local(j)] = counts[_local(j)] - amount
    if counts[_local(j)] < 1:
        raise ProbeError("displaced term exhausted")
    return counts


def _containing(rng, base: ProbeConfig) -> int:
    holders = [i for i, d in enumerate(base.documents) if TARGET in d]
    return int(rng.choice(holders))


def sweep_tf(rng, base: ProbeConfig) -> list[ProbeConfig]:
    """c(t,d) = 1, 2, ... in one document, |d| fixed."""
    j = _containing(rng, base)
    counts = base.counts(j)
    start = _move(counts, j, 1 - counts[TARGET])
    return [base.with_doc(j, _move(start, j, k)) for k in range(SWEEP_STEPS)]


def sweep_ds(rng, base: ProbeConfig) -> list[ProbeConfig]:
    """Raise the score of the only document containing the probed term."""
    j = _containing(rng, base)
    probe = base
    for i, counts in enumerate(base.documents):
        if i != j and TARGET in counts:
            probe = probe.with_doc(i, _move(counts, i, -counts[TARGET]))
    out = []
    for k in range(6):
        scores = list(probe.log_scores)
        scores[j] = base.log_scores[j] + 0.5 * k
        out.append(replace(probe, log_scores=tuple(scores)))
    return out


def sweep_idf(rng, base: ProbeConfig) -> list[ProbeConfig]:
    """Double the probed term's document frequency (ctf/df ratio kept)."""
    ratio = base.ctf[TARGET] / base.df[TARGET]
    out = []
    for k in range(6):
        df, ctf = dict(base.df), dict(base.ctf)
        df[TARGET] = base.df[TARGET] * 2 ** k
        ctf[TARGET] = int(round(df[TARGET] * ratio))
        out.append(replace(base, df=df, ctf=ctf))
    return out


def sweep_dl(rng, base: ProbeConfig) -> list[ProbeConfig]:
    """Lengthen one document k-fold without changing its mix of other terms."""
    j = _containing(rng, base)
    counts = base.counts(j)
    return [
        base.with_doc(j, {t: (c if t == TARGET else c * k) for t, c in counts.items()})
        for k in range(1, 7)
    ]


def sweep_df(rng, base: ProbeConfig) -> list[ProbeConfig]:
    """Spread a fixed number of probed-term tokens over 1, 2, ... documents.

    All feedback documents share one shape (the first document's, minus the
    probed term) and the same score.  The probed-term tokens replace tokens
    of a term every document shares, so pooled counts never change; only
    the spread does.
    """
    n = len(base.documents)
    template = {t: c for t, c in base.documents[0].items() if t not in (TARGET, _local(0))}
    filler = max(template, key=lambda t: (template[t], t))
    local = base.documents[0][_local(0)]
    total = int(rng.integers(n, 2 * n + 1))
    template[filler] += total
    docs = tuple({**template, _local(i): local} for i in range(n))
    df, ctf = dict(base.df), dict(base.ctf)
    for i in range(1, n):
        df[_local(i)], ctf[_local(i)] = df[_local(0)], ctf[_local(0)]
    probe = replace(base, documents=docs, log_scores=(base.log_scores[0],) * n, df=df, ctf=ctf)
    out = []
    for spread in range(1, n + 1):
        share = [total // spread + (1 if i < total % spread else 0) for i in range(spread)]
        p = probe
        for i, amount in enumerate(share):
            counts = dict(docs[i])
            counts[TARGET] = amount
            counts[filler] -= amount
            p = p.with_doc(i, counts)
        out.append(p)
    return out


SWEEPS: dict[str, Callable] = {
    "DS": sweep_ds,
    "TF": sweep_tf,
    "Concavity": sweep_tf,
    "IDF": sweep_idf,
    "DL": sweep_dl,
    "DF": sweep_df,
}

# +1: score must not fall along the sweep; -1: must not rise
DIRECTION = {"DS": 1, "TF": 1, "IDF": -1, "DL": -1, "DF": 1}


# Concavity is judged on the TF sweeps themselves
FAMILY_OF = {"Concavity": "TF"}


def probe_family(constraint: str, seed: int = 0, scenarios: int = 12) -> list[list[ProbeConfig]]:
    """At least ``scenarios`` sweeps and 100 configurations for ``constraint``."""
    constraint = FAMILY_OF.get(constraint, constraint)
    rng = np.random.default_rng([seed, CONSTRAINTS.index(constraint)])
    family = []
    while len(family) < scenarios or sum(len(s) for s in family) < 100:
        try:
            family.append(SWEEPS[constraint](rng, _scenario(rng)))
        except ProbeError:
            continue
    return family


# ----------------------------------------------------------------------
# verdicts
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class Witness:
    """A sweep and the scores observed along it.

    ``kind`` is ``"violation"`` (a step in the wrong direction, at ``step``),
    ``"flat"`` (no strict movement anywhere in the family) or ``"strict"``
    (evidence of adherence).
    """

    kind: str
    sweep: tuple[ProbeConfig, ...]
    scores: tuple[float, ...]
    step: int | None = None


@dataclass(frozen=True)
class Verdict:
    method: str
    constraint: str
    adheres: bool
    witness: Witness
    configurations: int


def _steps(constraint: str, scores: np.ndarray) -> np.ndarray:
    """Signed steps that must be >= 0 to satisfy the constraint."""
    if constraint == "Concavity":
        return -np.diff(scores, 2)
    return DIRECTION[constraint] * np.diff(scores)


def judge(constraint: str, scores) -> tuple[str, int | None]:
    """Classify one sweep as ``violation``, ``strict`` or ``flat``."""
    scores = np.asarray(scores, dtype=float)
    tol = REL_TOL * max(1e-300, float(np.max(np.abs(scores))))
    steps = _steps(constraint, scores)
    bad = np.flatnonzero(steps < -tol)
    if len(bad):
        return "violation", int(bad[0])
    good = np.flatnonzero(steps > tol)
    return ("strict", int(good[0])) if len(good) else ("flat", None)


def probe_constraint(
    method: str, constraint: str, family: list[list[ProbeConfig]], cache: dict | None = None
) -> Verdict:
    if not family or all(len(s) < 2 for s in family):
        raise ProbeError("degenerate probe family: nothing varies")
    strict = None
    flat = None
    for sweep in family:
        scores = tuple(method_score(method, p, cache) for p in sweep)
        kind, step = judge(constraint, scores)
        if kind == "violation":
            w = Witness(kind, tuple(sweep), scores, step)
            return Verdict(method, constraint, False, w, sum(len(s) for s in family))
        if kind == "strict" and strict is None:
            strict = Witness(kind, tuple(sweep), scores, step)
        if kind == "flat" and flat is None:
            flat = Witness(kind, tuple(sweep), scores)
    n = sum(len(s) for s in family)
    if strict is None:
        return Verdict(method, constraint, False, flat, n)
    return Verdict(method, constraint, True, strict, n)


def replay(verdict: Verdict) -> str:
    """Re-evaluate a witness through the method's scoring path."""
    scores = [method_score(verdict.method, p) for p in verdict.witness.sweep]
    return judge(verdict.constraint, scores)[0]


@dataclass
class ConstraintReport:
    verdicts: dict = field(default_factory=dict)
    seed: int = 0
    seconds: float = 0.0

    def adheres(self, method: str, constraint: str) -> bool:
        return self.verdicts[method, constraint].adheres

    def matrix(self) -> dict[str, tuple[bool, ...]]:
        return {m: tuple(self.adheres(m, c) for c in CONSTRAINTS) for m in METHODS}

    def mismatches(self) -> list[tuple[str, str]]:
        return [
            (m, c) for m in METHODS for i, c in enumerate(CONSTRAINTS)
            if self.adheres(m, c) != EXPECTED[m][i]
        ]

    def format(self) -> str:
        width = max(len(m) for m in METHODS) + 2
        lines = ["Method".ljust(width) + "".join(c.ljust(11) for c in CONSTRAINTS)]
        for m in METHODS:
            cells = "".join(("yes" if self.adheres(m, c) else "no").ljust(11) for c in CONSTRAINTS)
            lines.append(m.ljust(width) + cells)
        return "\n".join(line.rstrip() for line in lines)


def _row(args):
    method, families = args
    cache: dict = {}
    return [probe_constraint(method, c, families[c], cache) for c in CONSTRAINTS]


def constraint_matrix(seed: int = 0, scenarios: int = 12, workers: int = 1) -> ConstraintReport:
    start = time.perf_counter()
    shared = {c: probe_family(c, seed, scenarios) for c in CONSTRAINTS if c not in FAMILY_OF}
    families = {c: shared[FAMILY_OF.get(c, c)] for c in CONSTRAINTS}
    jobs = [(m, families) for m in METHODS]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_row, jobs))
    else:
        rows = [_row(job) for job in jobs]
    report = ConstraintReport(seed=seed)
    for row in rows:
        for verdict in row:
            report.verdicts[verdict.method, verdict.constraint] = verdict
    report.seconds = time.perf_counter() - start
    return report
