"""SPUD (smoothed Polya urn) and Dirichlet-smoothed document language models."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import Mapping, Union

import numpy as np
from scipy.special import gammaln, psi

from .corpus import CollectionStats, Document, InvertedIndex, TopicQuery

log = logging.getLogger(__name__)

# upper clamp for the background mass when the likelihood keeps rising
MAX_MASS = 1e12


class ConvergenceWarning(UserWarning):
    pass


class QueryError(ValueError):
    pass


@dataclass(frozen=True)
class SpudConfig:
    omega: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError(f"omega must lie in [0, 1], got {self.omega}")


@dataclass(frozen=True)
class DirichletConfig:
    mu: float = 1000.0

    def __post_init__(self):
        if not self.mu >= 0.0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")


ModelConfig = Union[SpudConfig, DirichletConfig]


@dataclass(frozen=True)
class BackgroundModel:
    """Collection statistics seen by the document models.

    ``proportions`` are document-frequency proportions (the SPUD background
    mean), ``collection_ml`` the maximum-likelihood unigram model.
    """

    proportions: Mapping[str, float]
    collection_ml: Mapping[str, float]
    mass: float | None = None

    @classmethod
    def from_stats(cls, stats: CollectionStats, mass: float | None = None) -> "BackgroundModel":
        if not stats.df:
            raise ValueError("empty vocabulary")
        proportions = {t: df / stats.df_total for t, df in stats.df.items()}
        collection_ml = {t: c / stats.token_total for t, c in stats.ctf.items()}
        return cls(proportions, collection_ml, mass)

    def with_mass(self, mass: float) -> "BackgroundModel":
        if not (mass > 0 and math.isfinite(mass)):
            raise ValueError(f"background mass must be positive and finite, got {mass}")
        return replace(self, mass=float(mass))

    def proportion(self, term: str) -> float:
        return self.proportions.get(term, 0.0)

    def collection_prob(self, term: str) -> float:
        return self.collection_ml.get(term, 0.0)

    def prior(self, term: str, config: ModelConfig) -> float:
        """Background probability the given model kind smooths towards."""
        if isinstance(config, SpudConfig):
            return self.proportion(term)
        return self.collection_prob(term)


def estimate_background(index: InvertedIndex) -> BackgroundModel:
    return BackgroundModel.from_stats(index.stats)


@dataclass(frozen=True)
class MassEstimate:
    mass: float
    iterations: int
    converged: bool


def _mass_sufficient_stats(index: InvertedIndex):
    """Collapse (term, count) pairs and document lengths into weighted histograms."""
    stats = index.stats
    terms = list(index.postings)
    p = np.array([stats.df[t] / stats.df_total for t in terms])
    term_idx = np.concatenate([np.full(len(index.postings[t]), i) for i, t in enumerate(terms)])
    counts = np.concatenate([index.postings[t].counts for t in terms])
    key = term_idx * (int(counts.max()) + 1) + counts
    ukey, mult = np.unique(key, return_counts=True)
    pair_p = p[ukey // (int(counts.max()) + 1)]
    pair_c = ukey % (int(counts.max()) + 1)
    lengths = index.lengths[index.retrievable]
    ulen, len_mult = np.unique(lengths, return_counts=True)
    return pair_p, pair_c.astype(float), mult.astype(float), ulen.astype(float), len_mult.astype(float)


def background_log_likelihood(index: InvertedIndex, mass: float) -> float:
    """Corpus log-likelihood under a Polya with mean fixed to the df proportions.

    Multinomial coefficients are dropped; they do not depend on ``mass``.
    """
    pair_p, pair_c, mult, ulen, len_mult = _mass_sufficient_stats(index)
    return _loglik(mass, pair_p, pair_c, mult, ulen, len_mult)


def _loglik(m, pair_p, pair_c, mult, ulen, len_mult):
    a = m * pair_p
    docs = np.sum(len_mult * (gammaln(m) - gammaln(ulen + m)))
    return float(docs + np.sum(mult * (gammaln(pair_c + a) - gammaln(a))))


def estimate_background_mass(
    index: InvertedIndex, tol: float = 1e-6, max_iter: int = 200, initial: float | None = None
) -> MassEstimate:
    """Maximum-likelihood background mass by Minka's precision fixed point.

    Stops once the relative change falls below ``tol``; otherwise returns the
    last iterate after ``max_iter`` steps with a :class:`ConvergenceWarning`.
    """
    if index.stats.doc_count < 2:
        raise ValueError("background mass needs at least two non-empty documents")
    pair_p, pair_c, mult, ulen, len_mult = _mass_sufficient_stats(index)
    if len(index.postings) == 1:
        warnings.warn("single-term vocabulary: background mass is unidentifiable", ConvergenceWarning)
        return MassEstimate(MAX_MASS, 0, False)

    m = float(initial) if initial else float(np.mean(index.distinct[index.retrievable]))
    for it in range(1, max_iter + 1):
        num = np.sum(mult * pair_p * (psi(pair_c + m * pair_p) - psi(m * pair_p)))
        den = np.sum(len_mult * (psi(ulen + m) - psi(m)))
        new = m * num / den
        if new >= MAX_MASS:
            warnings.warn("background mass diverges; clamped", ConvergenceWarning)
            return MassEstimate(MAX_MASS, it, False)
        change = abs(new - m) / m
        m = float(new)
        if change < tol:
            log.info("background mass %.6g after %d iterations", m, it)
            return MassEstimate(m, it, True)
    warnings.warn(f"background mass not converged after {max_iter} iterations", ConvergenceWarning)
    return MassEstimate(m, max_iter, False)


@dataclass(frozen=True)
class DocumentModel:
    document: Document
    config: ModelConfig
    background: BackgroundModel

    def mixing_weight(self) -> float:
        """Weight on the document's own ML estimate in the expected multinomial."""
        doc = self.document
        if doc.is_empty:
            return 0.0
        if isinstance(self.config, SpudConfig):
            w = self.config.omega
            topic = (1.0 - w) * doc.distinct
            return topic / (topic + w * _mass(self.background))
        return doc.length / (doc.length + self.config.mu)

    def prob(self, term: str) -> float:
        doc = self.document
        c = doc.term_counts.get(term, 0)
        if isinstance(self.config, DirichletConfig):
            if doc.is_empty:
                return self.background.collection_prob(term)
            return (c + self.config.mu * self.background.collection_prob(term)) / (doc.length + self.config.mu)
        lam = self.mixing_weight()
        ml = c / doc.length if c else 0.0
        return lam * ml + (1.0 - lam) * self.background.proportion(term)


def _mass(background: BackgroundModel) -> float:
    if background.mass is None:
        raise ValueError("SPUD model needs a background mass; call with_mass() first")
    return background.mass


def expected_term_prob(model: DocumentModel, term: str) -> float:
    return model.prob(term)


def query_terms(query) -> Mapping[str, float]:
    return query.terms if isinstance(query, TopicQuery) else query


def scorable_terms(query, background: BackgroundModel, config: ModelConfig) -> dict[str, float]:
    """Drop query terms with zero background probability (out of vocabulary)."""
    terms = query_terms(query)
    kept = {t: w for t, w in terms.items() if background.prior(t, config) > 0 and w > 0}
    dropped = sorted(set(terms) - set(kept))
    if dropped:
        log.warning("dropping out-of-vocabulary query terms: %s", " ".join(dropped))
    if not kept:
        raise QueryError("query unscorable: no query term is in the vocabulary")
    return kept


def query_log_likelihood(query, model: DocumentModel) -> float:
    """Sum of count * log p(t|d) over the (in-vocabulary) query terms."""
    terms = scorable_terms(query, model.background, model.config)
    score = 0.0
    for term in sorted(terms):
        score += terms[term] * math.log(model.prob(term))
    return score


def mixing_weights(index: InvertedIndex, config: ModelConfig, background: BackgroundModel) -> np.ndarray:
    """Vectorised :meth:`DocumentModel.mixing_weight` over every indexed document."""
    if isinstance(config, SpudConfig):
        topic = (1.0 - config.omega) * index.distinct
        with np.errstate(invalid="ignore", divide="ignore"):
            lam = topic / (topic + config.omega * _mass(background))
    else:
        lam = index.lengths / (index.lengths + config.mu)
    return np.where(index.retrievable, lam, 0.0)


def term_probabilities(
    index: InvertedIndex, config: ModelConfig, background: BackgroundModel, term: str,
    lam: np.ndarray | None = None,
) -> np.ndarray:
    """p(term | d) for every document, computed exactly as :meth:`DocumentModel.prob`."""
    post = index.term_postings(term)
    if isinstance(config, DirichletConfig):
        pc = background.collection_prob(term)
        counts = np.zeros(len(index), dtype=float)
        counts[post.docs] = post.counts
        denom = np.where(index.retrievable, index.lengths + config.mu, 1.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = (counts + config.mu * pc) / denom
        return np.where(index.retrievable, out, pc)
    if lam is None:
        lam = mixing_weights(index, config, background)
    ml = np.zeros(len(index), dtype=float)
    ml[post.docs] = post.counts / index.lengths[post.docs]
    return lam * ml + (1.0 - lam) * background.proportion(term)
