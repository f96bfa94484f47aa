"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records one ``criterion N: PASS|FAIL|SKIP`` line, printed in the
pytest terminal summary (and immediately with ``-s``).
"""

import math
import os
import time
import warnings

import numpy as np
import pytest

from qtmprf.constraints import EXPECTED, constraint_matrix
from qtmprf.corpus import Document, Judgments
from qtmprf.evaluation import average_precision, mean_scores, ndcg_at_k, paired_t_test
from qtmprf.feedback import (
    build_pdcm,
    build_qtm,
    build_rm1,
    build_smm,
    dirichlet_topical,
    interpolate,
    query_model,
    spud_topical,
    spud_topical_posterior,
    spud_topical_tf_form,
    topical_prob_spud,
    truncate_and_normalize,
)
from qtmprf.models import BackgroundModel, ConvergenceWarning, SpudConfig
from qtmprf.retrieval import FeedbackSet

from conftest import ACCEPTANCE, oracle


class Criterion:
    """Context manager recording PASS/FAIL for one criterion."""

    def __init__(self, number, title):
        self.number, self.title, self.detail = number, title, ""

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        if kind is not None and issubclass(kind, pytest.skip.Exception):
            status = "SKIP"
        else:
            status = "FAIL" if kind is not None else "PASS"
        line = f"criterion {self.number}: {status}  {self.title}" + (f"  [{self.detail}]" if self.detail else "")
        ACCEPTANCE[self.number] = line
        print(line)
        return False


def _fs(counts, scores=None):
    documents = [Document.from_counts(f"d{i}", c) for i, c in enumerate(counts)]
    return FeedbackSet.from_documents(documents, scores if scores is not None else [0.0] * len(documents))


def test_criterion_1_constraint_matrix():
    with Criterion(1, "constraint matrix equals the expected 5x6 table in < 10 s") as c:
        start = time.perf_counter()
        report = constraint_matrix(seed=0)
        elapsed = time.perf_counter() - start
        c.detail = f"{elapsed:.1f}s, {30 - len(report.mismatches())}/30 verdicts match"
        assert report.matrix() == EXPECTED
        assert elapsed < 10.0


def test_criterion_2_algebraic_equivalence():
    with Criterion(2, "the two topical-posterior forms agree within 1e-12 over 10,000 draws") as c:
        rng = np.random.default_rng(2)
        worst = 0.0
        for _ in range(10_000):
            count = int(rng.integers(1, 51))
            length = count + int(rng.integers(0, 2000))
            distinct = int(rng.integers(1, length - count + 2))
            omega = float(rng.uniform(0.0, 1.0))
            mass = float(10 ** rng.uniform(-1, 5))
            proportion = float(10 ** rng.uniform(-8, 0))
            a = spud_topical_posterior(count, length, distinct, omega, mass, proportion)
            b = spud_topical_tf_form(count, length, distinct, omega, mass, proportion)
            worst = max(worst, abs(a - b))
        c.detail = f"max |difference| = {worst:.2e}"
        assert worst <= 1e-12


def test_criterion_3_smm_oracle():
    with Criterion(3, "SMM EM matches the exhaustive-grid optimum within 1e-3 per component") as c:
        worst = 0.0
        cases = oracle("smm")
        for case in cases.values():
            bg = BackgroundModel(case["background"], case["background"])
            model = build_smm(_fs([case["counts"]]), case["lam"], bg, 10)
            worst = max(worst, max(abs(model.scored[t] - case["theta"][t]) for t in case["terms"]))
        c.detail = f"{len(cases)} toy cases, max error {worst:.1e}"
        assert worst <= 1e-3


def test_criterion_4_pdcm_oracle():
    with Criterion(4, "PDCM fixed point matches the 2-D grid optimum within 0.01") as c:
        worst = 0.0
        checked = [name for name, case in oracle("pdcm").items() if not case["at_edge"]]
        for name in checked:
            case = oracle("pdcm")[name]
            model = build_pdcm(_fs(case["documents"]), 2)
            assert model.diagnostics["converged"]
            worst = max(worst, max(abs(model.scored[t] - case["alpha"][t]) for t in "ab"))
        c.detail = f"{len(checked)} two-term corpora, max error {worst:.4f}"
        assert len(checked) >= 2
        assert worst <= 0.01


def test_criterion_5_reductions():
    with Criterion(5, "reductions hold exactly (|F|=1 QTM, pi=0, omega=0 RM1)"):
        bg = BackgroundModel({"a": 0.2, "b": 0.5, "c": 0.3}, {"a": 0.1, "b": 0.6, "c": 0.3}, 25.0)
        single = _fs([{"a": 3, "b": 1, "c": 2}], [-4.2])
        qtm = build_qtm(single, spud_topical(0.8, bg), 10)
        assert all(qtm.scored[t] == topical_prob_spud(t, single.documents[0], 0.8, bg) for t in "abc")
        qtm_dir = build_qtm(single, dirichlet_topical(50.0, bg), 10)
        assert all(qtm_dir.scored[t] == dirichlet_topical(50.0, bg)(t, single.documents[0]) for t in "abc")

        theta_q = query_model({"a": 2, "c": 1})
        assert interpolate(theta_q, qtm.distribution, 0.0).weights == theta_q

        several = _fs([{"a": 2, "b": 1}, {"b": 3, "c": 1}, {"a": 1, "c": 5}], [-1.0, -2.5, -3.0])
        assert build_rm1(several, 10, SpudConfig(0.0), bg).scored == build_rm1(several, 10).scored
        assert build_rm1(several, 10, SpudConfig(0.0), bg).distribution == build_rm1(several, 10).distribution


def test_criterion_6_metrics():
    with Criterion(6, "AP 0.83333, NDCG@10 0.63093 (1e-5); t-test p 0.3046 (1e-3)") as c:
        j = Judgments({(1, "r1"): 1, (1, "r2"): 1, (1, "n"): 0, (2, "r"): 1})
        ap = average_precision(["r1", "n", "r2"], j, 1)
        nd = ndcg_at_k(["n", "r"], j, 2, k=10)
        p = paired_t_test([1, -1, 2, 0, 1], [0, 0, 0, 0, 0]).p_value
        c.detail = f"AP {ap:.5f}, NDCG {nd:.5f}, p {p:.4f}"
        assert abs(ap - 0.83333) <= 1e-5
        assert abs(nd - 0.63093) <= 1e-5
        assert abs(p - 0.3046) <= 1e-3


def _random_case(rng):
    n_vocab = int(rng.integers(2, 40))
    vocab = [f"w{i}" for i in range(n_vocab)]
    prop = rng.dirichlet(np.full(n_vocab, 0.5)) + 1e-9
    coll = rng.dirichlet(np.full(n_vocab, 0.5)) + 1e-9
    bg = BackgroundModel(dict(zip(vocab, prop / prop.sum())), dict(zip(vocab, coll / coll.sum())),
                         float(10 ** rng.uniform(0, 4)))
    counts = []
    for _ in range(int(rng.integers(1, 8))):
        theta = rng.dirichlet(np.full(n_vocab, 0.3))
        c = rng.multinomial(int(rng.integers(1, 80)), theta)
        counts.append({t: int(x) for t, x in zip(vocab, c) if x})
    fs = _fs(counts, list(rng.uniform(-30, -5, len(counts))))
    query = {vocab[i]: int(rng.integers(1, 3)) for i in rng.choice(n_vocab, size=min(3, n_vocab), replace=False)}
    return bg, fs, query, int(rng.integers(1, 60)), float(rng.uniform(0, 1))


def test_criterion_7_distribution_hygiene():
    with Criterion(7, "every expansion distribution and expanded query sums to 1 +- 1e-9 (1,000 cases)") as c:
        rng = np.random.default_rng(7)
        worst, checked = 0.0, 0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            for _ in range(1000):
                bg, fs, query, n_terms, pi = _random_case(rng)
                omega = float(rng.uniform(0, 0.99))
                models = [
                    build_qtm(fs, spud_topical(omega, bg), n_terms),
                    build_qtm(fs, dirichlet_topical(float(rng.uniform(0, 3000)), bg), n_terms),
                    build_rm1(fs, n_terms),
                    build_rm1(fs, n_terms, SpudConfig(omega), bg),
                    build_smm(fs, float(rng.uniform(0, 0.95)), bg, n_terms, trace=False),
                    build_pdcm(fs, n_terms, trace=False),
                ]
                for m in models:
                    assert len(m.distribution) == min(n_terms, len(m.scored))
                    assert all(math.isfinite(s) for s in m.scored.values())
                    q = interpolate(query_model(query), m.distribution, pi)
                    for total in (math.fsum(m.distribution.values()), math.fsum(q.weights.values())):
                        worst = max(worst, abs(total - 1.0))
                    checked += 2
        c.detail = f"{checked} distributions, max |sum - 1| = {worst:.1e}"
        assert worst <= 1e-9


ROBUST = {k: os.environ.get(f"QTMPRF_ROBUST04_{k.upper()}") for k in ("docs", "topics", "qrels")}


def test_criterion_8_robust04_replication():
    with Criterion(8, "robust-04: SPUD+QTM_spud MAP 0.300 +- 0.010, SPUD MAP 0.260 +- 0.010") as c:
        if not all(ROBUST.values()) or not all(os.path.exists(p) for p in ROBUST.values()):
            c.detail = "licensed collection not supplied; set QTMPRF_ROBUST04_DOCS/TOPICS/QRELS"
            pytest.skip("robust-04 not available")
        from qtmprf.corpus import build_index, parse_qrels, parse_trec_documents, parse_trec_topics
        from qtmprf.experiment import Experiment, ExperimentConfig, SweepGrid, sweep

        docs = []
        for path in ROBUST["docs"].split(","):
            with open(path, "rb") as fh:
                docs.extend(parse_trec_documents(fh))
        with open(ROBUST["topics"], "rb") as fh:
            topics = parse_trec_topics(fh)
        with open(ROBUST["qrels"], "rb") as fh:
            judgments = parse_qrels(fh)
        workers = int(os.environ.get("QTMPRF_WORKERS", "1"))
        exp = Experiment(build_index(docs), topics, ExperimentConfig(workers=workers))
        base = sweep(exp, judgments, SweepGrid(), "none")
        qtm = sweep(exp, judgments, SweepGrid(), "qtm_spud", workers=workers)
        c.detail = f"SPUD {base.cv.map:.3f}, SPUD+QTM_spud {qtm.cv.map:.3f}"
        assert abs(base.cv.map - 0.260) <= 0.010
        assert abs(qtm.cv.map - 0.300) <= 0.010


def test_criterion_8_substitute_minicorpus(mini, mini_experiment):
    """The shipped substitute: frozen expected outputs of the bundled mini-corpus."""
    index = mini[0]
    expected = oracle("minicorpus")
    assert (len(index), len(index.stats.df), index.stats.token_total) == (
        expected["stats"]["documents"], expected["stats"]["terms"], expected["stats"]["tokens"])
    from qtmprf.models import estimate_background_mass

    assert estimate_background_mass(index).mass == pytest.approx(expected["mass"], rel=1e-5)


def test_criterion_9_smoothing_consistency(mini, mini_experiment):
    with Criterion(9, "mini-corpus: QTM_spud(omega .8) >= QTM_spud(omega 0); RM3(ML) >= RM3(omega .8)") as c:
        judgments = mini[2]
        base = mini_experiment.base
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            maps = {name: mean_scores(mini_experiment.evaluate(judgments, base.with_point(point)))[0]
                    for name, point in {
                        "qtm_.8": {"method": "qtm_spud", "fb_omega": 0.8},
                        "qtm_0": {"method": "qtm_spud", "fb_omega": 0.0},
                        "rm3_ml": {"method": "rm3", "fb_omega": None},
                        "rm3_.8": {"method": "rm3", "fb_omega": 0.8},
                    }.items()}
        c.detail = ", ".join(f"{k} {v:.4f}" for k, v in maps.items())
        assert maps["qtm_.8"] >= maps["qtm_0"]
        assert maps["rm3_ml"] >= maps["rm3_.8"]
        ref = oracle("minicorpus")["map"]
        assert maps["qtm_.8"] == pytest.approx(ref["qtm_spud_omega_0.8"], abs=1e-9)
        assert maps["rm3_.8"] == pytest.approx(ref["rm3_omega_0.8"], abs=1e-9)
