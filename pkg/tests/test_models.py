import math
import warnings

import numpy as np
import pytest

from qtmprf.corpus import Document, build_index
from qtmprf.models import (
    MAX_MASS,
    BackgroundModel,
    ConvergenceWarning,
    DirichletConfig,
    DocumentModel,
    QueryError,
    SpudConfig,
    background_log_likelihood,
    estimate_background,
    estimate_background_mass,
    query_log_likelihood,
)

from conftest import docs, oracle, toy_background


def test_background_proportions_and_collection_ml():
    index = build_index([Document.from_terms("d1", "a a b".split()), Document.from_terms("d2", "a c".split())])
    bg = estimate_background(index)
    assert bg.proportions == {"a": 0.5, "b": 0.25, "c": 0.25}
    assert bg.collection_ml["a"] == pytest.approx(0.6)
    assert math.fsum(bg.proportions.values()) == pytest.approx(1.0, abs=1e-12)
    assert math.fsum(bg.collection_ml.values()) == pytest.approx(1.0, abs=1e-12)


def test_single_term_vocabulary_proportion():
    assert estimate_background(build_index(docs({"a": 2}))).proportions == {"a": 1.0}


def test_with_mass_rejects_nonpositive():
    bg = toy_background({"a": 1.0})
    with pytest.raises(ValueError):
        bg.with_mass(0.0)


def test_spud_expected_probability_example():
    doc = Document.from_counts("d", {"a": 2, "b": 1})
    bg = toy_background({"a": 1 / 3, "b": 2 / 3}, mass=10.0)
    assert DocumentModel(doc, SpudConfig(0.8), bg).prob("a") == pytest.approx(0.34921, abs=1e-5)


def test_spud_omega_zero_is_ml():
    doc = Document.from_counts("d", {"a": 2, "b": 1})
    bg = toy_background({"a": 0.1, "b": 0.9}, mass=10.0)
    m = DocumentModel(doc, SpudConfig(0.0), bg)
    assert m.prob("a") == 2 / 3 and m.prob("b") == 1 / 3


def test_dirichlet_example():
    doc = Document.from_counts("d", {"a": 2, "b": 1})
    bg = toy_background({"a": 0.3, "b": 0.7}, {"a": 0.3, "b": 0.7})
    assert DocumentModel(doc, DirichletConfig(10.0), bg).prob("a") == pytest.approx(0.38462, abs=1e-5)


def test_dirichlet_large_mu_limit(mini):
    index = mini[0]
    bg = estimate_background(index)
    m = DocumentModel(index.documents[0], DirichletConfig(1e9), bg)
    for term in list(index.documents[0].term_counts)[:20]:
        assert m.prob(term) == pytest.approx(bg.collection_prob(term), abs=1e-6)


@pytest.mark.parametrize("config", [SpudConfig(0.8), SpudConfig(0.3), DirichletConfig(1000.0), DirichletConfig(5.0)])
def test_expected_probabilities_sum_to_one(mini, config):
    index = mini[0]
    bg = estimate_background(index).with_mass(32.756)
    vocab = index.vocabulary
    for doc in index.documents[::17]:
        m = DocumentModel(doc, config, bg)
        assert math.fsum(m.prob(t) for t in vocab) == pytest.approx(1.0, abs=1e-9)


def test_spud_is_convex_combination(mini):
    index = mini[0]
    bg = estimate_background(index).with_mass(32.756)
    for doc in index.documents[::23]:
        m = DocumentModel(doc, SpudConfig(0.8), bg)
        for t in index.vocabulary:
            ml = doc.term_counts.get(t, 0) / doc.length
            lo, hi = sorted((ml, bg.proportion(t)))
            assert lo - 1e-15 <= m.prob(t) <= hi + 1e-15


def test_config_ranges():
    with pytest.raises(ValueError):
        SpudConfig(1.5)
    with pytest.raises(ValueError):
        DirichletConfig(-1.0)


# -- query likelihood --------------------------------------------------------


def test_query_weight_multiplies_log_probability():
    doc = Document.from_counts("d", {"a": 2, "b": 1})
    bg = toy_background({"a": 0.5, "b": 0.5}, mass=4.0)
    m = DocumentModel(doc, SpudConfig(0.8), bg)
    assert query_log_likelihood({"a": 2}, m) == pytest.approx(2 * math.log(m.prob("a")), abs=1e-15)


def test_out_of_vocabulary_terms_dropped(caplog):
    doc = Document.from_counts("d", {"a": 2, "b": 1})
    bg = toy_background({"a": 0.5, "b": 0.5}, mass=4.0)
    m = DocumentModel(doc, SpudConfig(0.8), bg)
    assert query_log_likelihood({"a": 1, "zzz": 1}, m) == query_log_likelihood({"a": 1}, m)
    assert "zzz" in caplog.text
    with pytest.raises(QueryError, match="unscorable"):
        query_log_likelihood({"zzz": 1}, m)


def test_pure_background_ties_every_document(mini):
    index = mini[0]
    bg = estimate_background(index).with_mass(32.756)
    q = {"coral": 1, "reef": 1}
    scores = {query_log_likelihood(q, DocumentModel(d, SpudConfig(1.0), bg)) for d in index.documents}
    assert len(scores) == 1


def test_matching_document_beats_non_matching():
    a = Document.from_counts("d1", {"q": 2, "x": 2})
    b = Document.from_counts("d2", {"y": 2, "z": 2})
    bg = estimate_background(build_index([a, b])).with_mass(5.0)
    s = [query_log_likelihood({"q": 1}, DocumentModel(d, SpudConfig(0.8), bg)) for d in (a, b)]
    assert s[0] > s[1]


# -- background mass -----------------------------------------------------------


def test_mass_matches_grid_oracle_on_toy():
    ref = oracle("mass")["toy"]
    index = build_index(docs(*ref["documents"]))
    est = estimate_background_mass(index)
    assert est.converged
    assert est.mass == pytest.approx(ref["grid_argmax"], abs=0.05)
    assert est.mass == pytest.approx(ref["bounded_argmax"], rel=1e-4)


def test_mass_matches_oracle_on_minicorpus(mini):
    est = estimate_background_mass(mini[0])
    assert est.mass == pytest.approx(oracle("mass")["minicorpus"]["bounded_argmax"], rel=1e-5)
    assert background_log_likelihood(mini[0], est.mass) == pytest.approx(
        oracle("mass")["minicorpus"]["loglik_at_argmax"], abs=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_mass_beats_half_and_double(seed):
    rng = np.random.default_rng(seed)
    corpus = []
    for i in range(30):
        theta = rng.dirichlet(np.full(15, 0.3))
        counts = rng.multinomial(int(rng.integers(10, 60)), theta)
        corpus.append({f"t{j}": int(c) for j, c in enumerate(counts) if c})
    index = build_index(docs(*corpus))
    m = estimate_background_mass(index).mass
    ll = background_log_likelihood(index, m)
    assert ll >= background_log_likelihood(index, m / 2)
    assert ll >= background_log_likelihood(index, 2 * m)
    # stationary point: relative finite-difference derivative in log m vanishes
    h = 1e-4
    deriv = (background_log_likelihood(index, m * (1 + h)) - background_log_likelihood(index, m * (1 - h))) / (2 * h)
    assert abs(deriv) < 1e-3


def test_identical_single_term_documents_diverge():
    index = build_index(docs({"a": 3}, {"a": 3}, {"a": 3}))
    with pytest.warns(ConvergenceWarning):
        est = estimate_background_mass(index)
    assert not est.converged and est.mass == MAX_MASS
    assert oracle("mass")["degenerate"]["loglik_increasing"]


def test_under_dispersed_corpus_clamped():
    index = build_index(docs({"a": 2, "b": 2}, {"a": 2, "b": 2}, {"a": 2, "b": 2}))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = estimate_background_mass(index)
    assert not est.converged
    assert any(issubclass(w.category, ConvergenceWarning) for w in caught)


def test_spud_requires_mass():
    doc = Document.from_counts("d", {"a": 1})
    with pytest.raises(ValueError, match="mass"):
        DocumentModel(doc, SpudConfig(0.8), BackgroundModel({"a": 1.0}, {"a": 1.0})).prob("a")
