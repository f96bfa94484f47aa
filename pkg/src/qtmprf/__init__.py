"""Query-likelihood retrieval with SPUD and Dirichlet document models, five
pseudo-relevance-feedback term-selection methods, an empirical constraint
verifier and a TREC-style evaluation harness."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    Document,
    InvertedIndex,
    Judgments,
    TopicQuery,
    build_index,
    parse_qrels,
    parse_trec_documents,
    parse_trec_topics,
    tokenize,
)
from .models import (  # noqa: F401
    BackgroundModel,
    DirichletConfig,
    DocumentModel,
    SpudConfig,
    estimate_background,
    estimate_background_mass,
)
from .retrieval import FeedbackSet, Ranking, feedback_set, posterior_weights, search  # noqa: F401
from .feedback import (  # noqa: F401
    build_pdcm,
    build_qtm,
    build_rm1,
    build_smm,
    interpolate,
    topical_prob_dir,
    topical_prob_spud,
)
