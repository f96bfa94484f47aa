"""Feedback term selection: QTM (SPUD and Dirichlet), RM1/RM3, SMM and PDCM.

Every builder returns an :class:`ExpansionModel` whose ``scored`` map holds the
raw selection value of each candidate term and whose ``distribution`` is the
top ``n_terms`` of those, renormalised.  Candidates are the terms of the
feedback documents.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy.special import gammaln, psi

from .corpus import Document, TopicQuery
from .models import BackgroundModel, ConvergenceWarning, DocumentModel, ModelConfig
from .retrieval import FeedbackSet

TopicalFn = Callable[[str, Document], float]


class FeedbackError(ValueError):
    pass


@dataclass(frozen=True)
class ExpansionModel:
    method: str
    scored: Mapping[str, float]
    distribution: Mapping[str, float]
    diagnostics: Mapping[str, object] = field(default_factory=dict)

    def ranked(self) -> list[tuple[str, float, float]]:
        """(term, raw score, probability) in selection order."""
        return [(t, self.scored[t], p) for t, p in self.distribution.items()]


@dataclass(frozen=True)
class ExpandedQuery:
    weights: Mapping[str, float]
    topic_id: int | None
    pi: float


# ----------------------------------------------------------------------
# topical posteriors
# ----------------------------------------------------------------------


def spud_topical_posterior(count, length, distinct, omega, mass, proportion):
    """P(topical | t, d) by Bayes' rule over the two Polya components."""
    if count <= 0:
        return 0.0
    topic = (1.0 - omega) * (distinct * count / length)
    den = topic + omega * (mass * proportion)
    return topic / den if den > 0 else 0.0


def spud_topical_tf_form(count, length, distinct, omega, mass, proportion):
    """The same posterior written as a saturating tf factor c / (c + k * |d|/m_d)."""
    if count <= 0 or omega >= 1.0:
        return 0.0
    k = (omega * mass * proportion) / (1.0 - omega)
    return count / (count + k * (length / distinct))


def topical_prob_spud(term: str, doc: Document, omega: float, background: BackgroundModel) -> float:
    return spud_topical_posterior(
        doc.term_counts.get(term, 0), doc.length, doc.distinct, omega,
        background.mass, background.proportion(term),
    )


def topical_prob_dir(term: str, doc: Document, mu: float, background: BackgroundModel) -> float:
    c = doc.term_counts.get(term, 0)
    if c <= 0:
        return 0.0
    return c / (c + mu * background.collection_prob(term))


def spud_topical(omega: float, background: BackgroundModel) -> TopicalFn:
    if background.mass is None:
        raise ValueError("SPUD topical posterior needs a background mass")
    return lambda term, doc: topical_prob_spud(term, doc, omega, background)


def dirichlet_topical(mu: float, background: BackgroundModel) -> TopicalFn:
    return lambda term, doc: topical_prob_dir(term, doc, mu, background)


# ----------------------------------------------------------------------
# selection and interpolation
# ----------------------------------------------------------------------


def truncate_and_normalize(scored: Mapping[str, float], n_terms: int) -> dict[str, float]:
    """Keep the ``n_terms`` best (score desc, term asc) and divide by their sum."""
    if n_terms < 1:
        raise FeedbackError("number of feedback terms must be >= 1")
    if not scored:
        raise FeedbackError("empty candidate pool")
    top = sorted(scored.items(), key=lambda kv: (-kv[1], kv[0]))[:n_terms]
    total = math.fsum(s for _, s in top)
    if not total > 0:
        raise FeedbackError("no informative terms")
    return {t: s / total for t, s in top}


def _finish(method, scored, n_terms, threshold=None, exclude=(), **diagnostics) -> ExpansionModel:
    if exclude:
        scored = {t: s for t, s in scored.items() if t not in exclude}
    if threshold is not None:
        scored = {t: s for t, s in scored.items() if s > threshold}
    return ExpansionModel(method, scored, truncate_and_normalize(scored, n_terms), diagnostics)


def query_model(query: TopicQuery | Mapping[str, int]) -> dict[str, float]:
    """Original query terms, each topical with probability one, normalised."""
    terms = query.terms if isinstance(query, TopicQuery) else query
    total = sum(terms.values())
    return {t: c / total for t, c in terms.items()}


def interpolate(
    query: Mapping[str, float], expansion: Mapping[str, float], pi: float, topic_id: int | None = None
) -> ExpandedQuery:
    if not 0.0 <= pi <= 1.0:
        raise FeedbackError(f"pi must lie in [0, 1], got {pi}")
    if pi == 0.0:
        weights = dict(query)
    elif pi == 1.0:
        weights = dict(expansion)
    else:
        weights = {
            t: (1.0 - pi) * query.get(t, 0.0) + pi * expansion.get(t, 0.0)
            for t in sorted(set(query) | set(expansion))
        }
    return ExpandedQuery(weights, topic_id, pi)


def _check(feedback: FeedbackSet):
    if len(feedback) < 1:
        raise FeedbackError("feedback set is empty")


# ----------------------------------------------------------------------
# term-selection methods
# ----------------------------------------------------------------------


def build_qtm(
    feedback: FeedbackSet,
    topical_fn: TopicalFn,
    n_terms: int,
    method: str = "qtm",
    threshold: float | None = None,
    exclude: Iterable[str] = (),
) -> ExpansionModel:
    """Score-weighted average of per-document topical posteriors."""
    _check(feedback)
    raw: dict[str, float] = {}
    for doc, w in zip(feedback.documents, feedback.weights):
        for term in doc.term_counts:
            raw[term] = raw.get(term, 0.0) + topical_fn(term, doc) * w
    return _finish(method, raw, n_terms, threshold, frozenset(exclude))


def build_rm1(
    feedback: FeedbackSet,
    n_terms: int,
    config: ModelConfig | None = None,
    background: BackgroundModel | None = None,
    exclude: Iterable[str] = (),
) -> ExpansionModel:
    """Relevance model over the feedback documents.

    Without ``config`` documents are represented by c(t,d)/|d|; otherwise by
    the expected term probabilities of the given (smoothed) document model.
    """
    _check(feedback)
    raw: dict[str, float] = {}
    background_share = 0.0
    for doc, w in zip(feedback.documents, feedback.weights):
        lam = 1.0
        if config is not None:
            lam = DocumentModel(doc, config, background).mixing_weight()
            background_share += w * (1.0 - lam)
        for term, c in doc.term_counts.items():
            ml = c / doc.length
            raw[term] = raw.get(term, 0.0) + w * (ml if config is None else lam * ml)
    if config is not None:
        # absent documents still emit t through their background component
        for term in raw:
            raw[term] += background_share * background.prior(term, config)
    return _finish("rm3", raw, n_terms, exclude=frozenset(exclude),
                   representation="ml" if config is None else repr(config))


def _pooled(feedback: FeedbackSet):
    vocab = feedback.vocabulary()
    pos = {t: i for i, t in enumerate(vocab)}
    counts = np.zeros(len(vocab))
    for doc in feedback.documents:
        for t, c in doc.term_counts.items():
            counts[pos[t]] += c
    return vocab, counts


def smm_log_likelihood(counts, theta, background_probs, lam) -> float:
    mix = (1.0 - lam) * theta + lam * background_probs
    nz = counts > 0
    return float(np.sum(counts[nz] * np.log(mix[nz])))


def build_smm(
    feedback: FeedbackSet,
    lam: float,
    background: BackgroundModel,
    n_terms: int,
    tol: float = 1e-8,
    max_iter: int = 500,
    exclude: Iterable[str] = (),
    trace: bool = True,
) -> ExpansionModel:
    """Simple mixture model: EM for the topic multinomial against a fixed background.

    All feedback documents are pooled with equal weight.  With ``trace`` the
    log-likelihood after every EM step is kept in the diagnostics.
    """
    _check(feedback)
    if not 0.0 <= lam < 1.0:
        raise FeedbackError(f"SMM background weight must lie in [0, 1), got {lam}")
    vocab, counts = _pooled(feedback)
    bg = np.array([background.collection_prob(t) for t in vocab])
    theta = np.full(len(vocab), 1.0 / len(vocab))
    history = [smm_log_likelihood(counts, theta, bg, lam)] if trace else []
    noise = lam * bg
    converged = False
    for it in range(1, max_iter + 1):
        topic = (1.0 - lam) * theta
        expected = counts * topic / (topic + noise)
        new = expected / expected.sum()
        change = np.abs(new - theta).max()
        theta = new
        if trace:
            history.append(smm_log_likelihood(counts, theta, bg, lam))
        if change < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"SMM EM not converged after {max_iter} iterations", ConvergenceWarning)
    scored = dict(zip(vocab, theta.tolist()))
    return _finish("smm", scored, n_terms, exclude=frozenset(exclude),
                   iterations=it, converged=converged, log_likelihood=history)


def _sparse_counts(feedback: FeedbackSet):
    vocab = feedback.vocabulary()
    pos = {t: i for i, t in enumerate(vocab)}
    rows, cols, vals = [], [], []
    for d, doc in enumerate(feedback.documents):
        for t, c in doc.term_counts.items():
            rows.append(d)
            cols.append(pos[t])
            vals.append(c)
    return vocab, np.array(rows), np.array(cols), np.array(vals, dtype=float)


def dcm_log_likelihood(alpha, lengths, cols, vals) -> float:
    """DCM log-likelihood of the documents, without the multinomial coefficients."""
    total = alpha.sum()
    docs = np.sum(gammaln(total) - gammaln(lengths + total))
    return float(docs + np.sum(gammaln(vals + alpha[cols]) - gammaln(alpha[cols])))


def fit_dcm(lengths, cols, vals, n_terms_vocab, tol=1e-7, max_iter=1000, trace=True):
    """Minka's fixed point for DCM parameters.

    Returns ``(alpha, iterations, converged, history)``; ``history`` holds the
    log-likelihood after each step when ``trace`` is set.  The start point is
    the pooled ML estimate scaled so that the parameters sum to the mean length.
    """
    pooled = np.bincount(cols, weights=vals, minlength=n_terms_vocab)
    alpha = pooled / pooled.sum() * lengths.mean()
    history = [dcm_log_likelihood(alpha, lengths, cols, vals)] if trace else []
    for it in range(1, max_iter + 1):
        total = alpha.sum()
        den = (psi(lengths + total) - psi(total)).sum()
        a = alpha[cols]
        num = np.bincount(cols, weights=psi(vals + a) - psi(a), minlength=n_terms_vocab)
        new = alpha * num / den
        change = (np.abs(new - alpha) / alpha).max()
        alpha = new
        if trace:
            history.append(dcm_log_likelihood(alpha, lengths, cols, vals))
        if change < tol:
            return alpha, it, True, history
    return alpha, max_iter, False, history


def build_pdcm(
    feedback: FeedbackSet,
    n_terms: int,
    tol: float = 1e-7,
    max_iter: int = 1000,
    exclude: Iterable[str] = (),
    trace: bool = True,
) -> ExpansionModel:
    """Fit one DCM to the feedback documents and rank terms by parameter value."""
    _check(feedback)
    vocab, rows, cols, vals = _sparse_counts(feedback)
    lengths = np.array([doc.length for doc in feedback.documents], dtype=float)
    if len(feedback) == 1:
        warnings.warn("PDCM on a single document: scale unidentifiable, returning proportions",
                      ConvergenceWarning)
        pooled = np.bincount(cols, weights=vals, minlength=len(vocab))
        alpha, it, converged, history = pooled / pooled.sum() * lengths.mean(), 0, False, []
    else:
        alpha, it, converged, history = fit_dcm(lengths, cols, vals, len(vocab), tol, max_iter, trace)
        if not converged:
            warnings.warn(f"PDCM fixed point not converged after {max_iter} iterations", ConvergenceWarning)
    scored = dict(zip(vocab, alpha.tolist()))
    return _finish("pdcm", scored, n_terms, exclude=frozenset(exclude),
                   iterations=it, converged=converged, log_likelihood=history)


METHODS = ("rm3", "smm", "pdcm", "qtm_dir", "qtm_spud")
