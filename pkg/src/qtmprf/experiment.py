"""Experiment configuration and the two-pass feedback retrieval pipeline."""

from __future__ import annotations

import itertools
import logging
import math
import os
import typing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Mapping, Sequence

from .corpus import InvertedIndex, Judgments, TopicQuery, build_index, parse_trec_documents
from .evaluation import EvalRecord, cross_validate, evaluate_run, CrossValidation
from .feedback import (
    ExpandedQuery,
    FeedbackError,
    build_pdcm,
    build_qtm,
    build_rm1,
    build_smm,
    dirichlet_topical,
    interpolate,
    query_model,
    spud_topical,
    truncate_and_normalize,
)
from .models import (
    BackgroundModel,
    DirichletConfig,
    ModelConfig,
    QueryError,
    SpudConfig,
    estimate_background,
    estimate_background_mass,
)
from .retrieval import Ranking, feedback_set, search
from .storage import load_index

log = logging.getLogger(__name__)

METHODS = ("none", "rm3", "smm", "pdcm", "qtm_dir", "qtm_spud")
MODELS = ("spud", "dirichlet")

DEFAULT_PI = tuple(round(0.1 * i, 1) for i in range(1, 10))
DEFAULT_FB_DOCS = (5, 10, 20, 30, 50)
DEFAULT_FB_TERMS = (10, 20, 30, 50, 75, 100)


class ConfigError(ValueError):
    """Invalid experiment configuration; ``key`` names the offending setting."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of one retrieval/feedback run.

    ``fb_omega``/``fb_mu`` set the document representation used inside the
    feedback step; left unset, RM3 uses maximum-likelihood estimates and QTM
    reuses the retrieval model's parameter.
    """

    docs: str = ""
    index: str = ""
    topics: str = ""
    qrels: str = ""
    run: str = ""
    out_dir: str = ""
    model: str = "spud"
    omega: float = 0.8
    mu: float = 1000.0
    mc: typing.Optional[float] = None
    method: str = "qtm_spud"
    pi: float = 0.5
    fb_docs: int = 10
    fb_terms: int = 30
    smm_lambda: float = 0.2
    fb_omega: typing.Optional[float] = None
    fb_mu: typing.Optional[float] = None
    threshold: typing.Optional[float] = None
    depth: int = 1000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigError("model", f"must be one of {', '.join(MODELS)}, got {self.model!r}")
        if self.method not in METHODS:
            raise ConfigError("method", f"must be one of {', '.join(METHODS)}, got {self.method!r}")
        for key in ("omega", "pi"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                raise ConfigError(key, f"must lie in [0, 1], got {getattr(self, key)}")
        if self.fb_omega is not None and not 0.0 <= self.fb_omega <= 1.0:
            raise ConfigError("fb_omega", f"must lie in [0, 1], got {self.fb_omega}")
        if not 0.0 <= self.smm_lambda < 1.0:
            raise ConfigError("smm_lambda", f"must lie in [0, 1), got {self.smm_lambda}")
        for key in ("mu", "fb_mu"):
            v = getattr(self, key)
            if v is not None and not v >= 0.0:
                raise ConfigError(key, f"must be >= 0, got {v}")
        if self.mc is not None and not (self.mc > 0 and math.isfinite(self.mc)):
            raise ConfigError("mc", f"must be positive and finite, got {self.mc}")
        for key in ("fb_docs", "fb_terms", "depth", "workers"):
            if getattr(self, key) < 1:
                raise ConfigError(key, f"must be >= 1, got {getattr(self, key)}")

    # -- flat key = value serialisation ------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {'' if v is None else repr(v) if isinstance(v, float) else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        values: dict[str, object] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "ExperimentConfig":
        hints = typing.get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in known:
                raise ConfigError(key, "unknown setting")
            kwargs[key] = _coerce(key, hints[key], value)
        return cls(**kwargs)

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), **overrides)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    def provenance(self, prefix: str = "# ") -> str:
        return "".join(prefix + line + "\n" for line in self.to_text().splitlines())

    def with_point(self, point: Mapping[str, object]) -> "ExperimentConfig":
        return replace(self, **point)


def _coerce(key: str, hint, value):
    if not isinstance(value, str):
        return value
    args = typing.get_args(hint)
    optional = type(None) in args
    base = next((a for a in args if a is not type(None)), hint)
    if value == "" or (optional and value.lower() == "none"):
        if optional:
            return None
        if base is str:
            return ""
        raise ConfigError(key, "a value is required")
    try:
        return base(value)
    except ValueError:
        raise ConfigError(key, f"expected {base.__name__}, got {value!r}") from None


# ----------------------------------------------------------------------
# pipeline
# ----------------------------------------------------------------------


def open_index(cfg: ExperimentConfig) -> InvertedIndex:
    if cfg.index and os.path.exists(cfg.index):
        return load_index(cfg.index)
    if not cfg.docs:
        raise ConfigError("index", "no index file and no document collection given")
    docs = []
    for path in cfg.docs.split(","):
        with open(path, "rb") as fh:
            docs.extend(parse_trec_documents(fh))
    return build_index(docs)


class Experiment:
    """Two-pass retrieval over one index, caching the parameter-independent work.

    First-pass rankings depend only on the retrieval model; raw feedback
    scores additionally on the method, |F| and feedback smoothing.  Sweeps over
    π and |T| therefore only repeat truncation, interpolation and the second pass.
    """

    def __init__(self, index: InvertedIndex, topics: Sequence[TopicQuery], cfg: ExperimentConfig,
                 background: BackgroundModel | None = None):
        self.index = index
        self.topics = list(topics)
        self.base = cfg
        if background is None:
            background = estimate_background(index)
        if background.mass is None:
            mass = cfg.mc if cfg.mc is not None else estimate_background_mass(index).mass
            background = background.with_mass(mass)
        self.background = background
        self._first: dict = {}
        self._scored: dict = {}

    def retrieval_model(self, cfg: ExperimentConfig) -> ModelConfig:
        return SpudConfig(cfg.omega) if cfg.model == "spud" else DirichletConfig(cfg.mu)

    def first_pass(self, topic: TopicQuery, cfg: ExperimentConfig) -> Ranking:
        key = (topic.topic_id, cfg.model, cfg.omega, cfg.mu, cfg.depth)
        if key not in self._first:
            self._first[key] = search(self.index, topic, self.retrieval_model(cfg), self.background,
                                      k=cfg.depth, topic_id=topic.topic_id)
        return self._first[key]

    def _feedback_repr(self, cfg: ExperimentConfig) -> ModelConfig | None:
        """Document representation inside RM3 (None means maximum likelihood)."""
        if cfg.model == "spud" and cfg.fb_omega is not None:
            return SpudConfig(cfg.fb_omega)
        if cfg.model == "dirichlet" and cfg.fb_mu is not None:
            return DirichletConfig(cfg.fb_mu)
        return None

    def scored_terms(self, topic: TopicQuery, cfg: ExperimentConfig) -> dict[str, float]:
        """Raw selection scores of every candidate term for ``cfg.method``."""
        fb_omega = cfg.omega if cfg.fb_omega is None else cfg.fb_omega
        fb_mu = cfg.mu if cfg.fb_mu is None else cfg.fb_mu
        key = (topic.topic_id, cfg.model, cfg.omega, cfg.mu, cfg.depth, cfg.method, cfg.fb_docs,
               cfg.smm_lambda, cfg.fb_omega, cfg.fb_mu, cfg.threshold)
        if key in self._scored:
            return self._scored[key]
        fs = feedback_set(self.index, self.first_pass(topic, cfg), cfg.fb_docs)
        bg = self.background
        n = 1  # truncation happens per |T| below; only raw scores are kept
        if cfg.method == "rm3":
            model = build_rm1(fs, n, self._feedback_repr(cfg), bg)
        elif cfg.method == "smm":
            model = build_smm(fs, cfg.smm_lambda, bg, n)
        elif cfg.method == "pdcm":
            model = build_pdcm(fs, n)
        elif cfg.method == "qtm_dir":
            model = build_qtm(fs, dirichlet_topical(fb_mu, bg), n, "qtm_dir", cfg.threshold)
        elif cfg.method == "qtm_spud":
            model = build_qtm(fs, spud_topical(fb_omega, bg), n, "qtm_spud", cfg.threshold)
        else:
            raise ConfigError("method", f"no feedback model for {cfg.method!r}")
        self._scored[key] = dict(model.scored)
        return self._scored[key]

    def expanded_query(self, topic: TopicQuery, cfg: ExperimentConfig) -> ExpandedQuery:
        distribution = truncate_and_normalize(self.scored_terms(topic, cfg), cfg.fb_terms)
        return interpolate(query_model(topic), distribution, cfg.pi, topic.topic_id)

    def run_topic(self, topic: TopicQuery, cfg: ExperimentConfig) -> Ranking:
        first = self.first_pass(topic, cfg)
        if cfg.method == "none" or len(first) == 0:
            return first
        try:
            expanded = self.expanded_query(topic, cfg)
        except FeedbackError as exc:
            log.warning("topic %s: %s; keeping the first-pass ranking", topic.topic_id, exc)
            return first
        return search(self.index, expanded.weights, self.retrieval_model(cfg), self.background,
                      k=cfg.depth, topic_id=topic.topic_id)

    def run(self, cfg: ExperimentConfig | None = None) -> list[Ranking]:
        cfg = cfg or self.base
        out = []
        for topic in self.topics:
            try:
                out.append(self.run_topic(topic, cfg))
            except QueryError as exc:
                log.warning("topic %s skipped: %s", topic.topic_id, exc)
        return out

    def evaluate(self, judgments: Judgments, cfg: ExperimentConfig | None = None) -> dict[int, EvalRecord]:
        run = {r.topic_id: list(r.doc_ids) for r in self.run(cfg)}
        topic_ids = [t.topic_id for t in self.topics if t.topic_id in set(judgments.topics)]
        return evaluate_run(run, judgments, topic_ids)


# ----------------------------------------------------------------------
# sweeps
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class SweepGrid:
    """Axes of a parameter sweep; every combination is one grid point."""

    pi: tuple = DEFAULT_PI
    fb_docs: tuple = DEFAULT_FB_DOCS
    fb_terms: tuple = DEFAULT_FB_TERMS
    fb_omega: tuple = (None,)

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name):
                raise ConfigError(f.name, "sweep axis is empty")

    def points(self, method: str = "qtm_spud") -> list[dict]:
        if method == "none":
            return [{}]
        names = [f.name for f in fields(self)]
        return [dict(zip(names, combo)) for combo in itertools.product(*(getattr(self, n) for n in names))]


@dataclass
class SweepResult:
    method: str
    points: list[dict]
    records: list[dict[int, EvalRecord]]
    cv: CrossValidation

    def map_by_point(self) -> list[float]:
        return [sum(r.ap for r in rec.values()) / len(rec) for rec in self.records]


_WORKER: dict = {}


def _init_worker(experiment, judgments, cfg):
    _WORKER.update(experiment=experiment, judgments=judgments, cfg=cfg)


def _eval_point(point):
    w = _WORKER
    return w["experiment"].evaluate(w["judgments"], w["cfg"].with_point(point))


def sweep(experiment: Experiment, judgments: Judgments, grid: SweepGrid, method: str,
          workers: int = 1) -> SweepResult:
    """Evaluate every grid point for ``method`` and cross-validate over them.

    Grid points are evaluated in grid order; with ``workers > 1`` they are
    farmed out to processes but collected in the same order, so results do
    not depend on the worker count.
    """
    cfg = experiment.base.with_point({"method": method})
    points = grid.points(method)
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(experiment, judgments, cfg)) as pool:
            records = list(pool.map(_eval_point, points))
    else:
        _init_worker(experiment, judgments, cfg)
        records = [_eval_point(p) for p in points]
    by_point = {i: rec for i, rec in enumerate(records)}
    topic_ids = sorted(set().union(*(rec.keys() for rec in records)))
    cv = cross_validate(list(range(len(points))), by_point.__getitem__, topic_ids)
    cv.chosen = {fold: points[i] for fold, i in cv.chosen.items()}
    return SweepResult(method, points, records, cv)
