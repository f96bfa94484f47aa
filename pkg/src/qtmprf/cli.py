"""Command-line interface: ``qtmprf {index,search,expand,eval,sweep,constraints}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from dataclasses import fields

from . import __version__
from .constraints import constraint_matrix
from .corpus import CorpusError, TrecParseError, build_index, parse_qrels, parse_trec_documents, parse_trec_topics, Tokenizer, load_stoplist
from .evaluation import EvaluationError, mean_scores, paired_t_test, summary_table, evaluate_run, write_per_topic
from .experiment import (
    ConfigError,
    Experiment,
    ExperimentConfig,
    METHODS,
    SweepGrid,
    DEFAULT_FB_DOCS,
    DEFAULT_FB_TERMS,
    DEFAULT_PI,
    open_index,
    sweep,
)
from .feedback import FeedbackError, truncate_and_normalize
from .models import ConvergenceWarning, QueryError, estimate_background_mass
from .retrieval import read_run, write_run
from .storage import IndexIntegrityError, IndexVersionError, persist_index

log = logging.getLogger("qtmprf")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors as a single diagnostic line (usage stays available via -h)."""

    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


# ----------------------------------------------------------------------
# argument plumbing
# ----------------------------------------------------------------------


def _experiment_flags(p: argparse.ArgumentParser, with_method: bool = True) -> None:
    """Flags mirroring :class:`ExperimentConfig`; unset flags leave the config file value."""
    S = argparse.SUPPRESS
    g = p.add_argument_group("experiment settings (override --config)")
    g.add_argument("--config", metavar="FILE", help="flat key = value experiment file")
    g.add_argument("--docs", default=S, help="TREC document file(s), comma separated")
    g.add_argument("--index", default=S, help="index file (used instead of --docs when it exists)")
    g.add_argument("--topics", default=S, help="TREC topic file")
    g.add_argument("--model", default=S, choices=("spud", "dirichlet"))
    g.add_argument("--omega", type=float, default=S, help="SPUD background weight (default 0.8)")
    g.add_argument("--mu", type=float, default=S, help="Dirichlet prior mass (default 1000)")
    g.add_argument("--mc", type=float, default=S, help="background mass; skips estimation")
    if with_method:
        g.add_argument("--method", default=S, choices=METHODS)
    g.add_argument("--pi", type=float, default=S, help="interpolation weight of the feedback model")
    g.add_argument("--fb-docs", type=int, default=S, help="feedback documents |F|")
    g.add_argument("--fb-terms", type=int, default=S, help="expansion terms |T|")
    g.add_argument("--smm-lambda", type=float, default=S, help="SMM background weight")
    g.add_argument("--fb-omega", type=float, default=S, help="SPUD weight inside the feedback step")
    g.add_argument("--fb-mu", type=float, default=S, help="Dirichlet mass inside the feedback step")
    g.add_argument("--topical-threshold", "--threshold", dest="threshold", type=float, default=S,
                   help="keep only QTM terms whose raw score exceeds this (off by default)")
    g.add_argument("--depth", type=int, default=S, help="documents retrieved per topic")
    g.add_argument("--workers", type=int, default=S, help="worker processes for sweeps")


def resolve_config(args) -> ExperimentConfig:
    keys = {f.name for f in fields(ExperimentConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in keys}
    try:
        if getattr(args, "config", None):
            return ExperimentConfig.load(args.config, **overrides)
        return ExperimentConfig.from_mapping(overrides)
    except ConfigError as exc:
        flag = "--" + exc.key.replace("_", "-") if exc.key in keys else exc.key
        raise CliError(f"{flag}: {str(exc).split(': ', 1)[-1]}") from None


def _require(cfg, *keys):
    for key in keys:
        if not getattr(cfg, key):
            raise CliError(f"--{key.replace('_', '-')} is required")
        if key in ("topics", "qrels") and not os.path.exists(getattr(cfg, key)):
            raise CliError(f"--{key}: no such file: {getattr(cfg, key)}")


def _load_experiment(cfg: ExperimentConfig) -> Experiment:
    _require(cfg, "topics")
    for path in filter(None, cfg.docs.split(",")):
        if not os.path.exists(path):
            raise CliError(f"--docs: no such file: {path}")
    index = open_index(cfg)
    with open(cfg.topics, "rb") as fh:
        topics = parse_trec_topics(fh)
    return Experiment(index, topics, cfg)


def _grid(text, cast):
    if text is None:
        return None
    try:
        return tuple(None if v.strip().lower() == "none" else cast(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------


def cmd_index(args) -> int:
    tokenizer = Tokenizer(load_stoplist(args.stoplist)) if args.stoplist else None
    docs = []
    for path in args.docs:
        if not os.path.exists(path):
            raise CliError(f"--docs: no such file: {path}")
        with open(path, "rb") as fh:
            docs.extend(parse_trec_documents(fh, tokenizer))
    index = build_index(docs)
    persist_index(index, args.index)
    s = index.stats
    print(f"documents\t{len(index)}\nretrievable\t{s.doc_count}\nterms\t{len(s.df)}\ntokens\t{s.token_total}")
    if args.mass and s.doc_count >= 2:
        print(f"background_mass\t{estimate_background_mass(index).mass:.6g}")
    return 0


def cmd_search(args) -> int:
    cfg = resolve_config(args)
    exp = _load_experiment(cfg)
    rankings = exp.run(cfg)
    tag = args.tag or cfg.method
    if args.run:
        with open(args.run, "w", encoding="utf-8") as fh:
            write_run(rankings, fh, tag)
        cfg.save(args.run + ".config")
    else:
        write_run(rankings, sys.stdout, tag)
    return 0


def cmd_expand(args) -> int:
    cfg = resolve_config(args)
    exp = _load_experiment(cfg)
    topic = next((t for t in exp.topics if t.topic_id == args.topic), None)
    if topic is None:
        raise CliError(f"--topic: topic {args.topic} not in {cfg.topics}")
    columns = []
    for method in args.methods.split(","):
        if method not in METHODS or method == "none":
            raise CliError(f"--methods: unknown feedback method {method!r}")
        scored = exp.scored_terms(topic, cfg.with_point({"method": method}))
        chosen = truncate_and_normalize(scored, cfg.fb_terms)
        ranked = sorted(scored.items(), key=lambda kv: (-kv[1], kv[0]))[: args.rows]
        columns.append((method, [(t, s, chosen.get(t, 0.0)) for t, s in ranked]))
    width = 24
    lines = [cfg.provenance().rstrip("\n"), f"# topic {topic.topic_id}: {' '.join(topic.terms)}"]
    if "qtm_spud" in args.methods.split(","):
        lines.append("# * : qtm_spud score below 0.5 (more likely drawn from the background)")
    lines.append("rank  " + "".join(m.ljust(width) for m, _ in columns).rstrip())
    for i in range(args.rows):
        cells = []
        for method, ranked in columns:
            if i < len(ranked):
                term, score, _ = ranked[i]
                mark = "*" if method == "qtm_spud" and score < 0.5 else " "
                cells.append(f"{term:<12}{score:>10.4f}{mark}".ljust(width))
            else:
                cells.append(" " * width)
        lines.append(f"{i + 1:<6}" + "".join(cells).rstrip())
    print("\n".join(lines))
    if args.tsv:
        with open(args.tsv, "w", encoding="utf-8") as fh:
            fh.write(cfg.provenance())
            fh.write("method\trank\tterm\tscore\tprobability\n")
            for method, ranked in columns:
                for rank, (term, score, prob) in enumerate(ranked, 1):
                    fh.write(f"{method}\t{rank}\t{term}\t{score:.6f}\t{prob:.6f}\n")
    return 0


def cmd_eval(args) -> int:
    for flag, path in (("--run", args.run), ("--qrels", args.qrels)):
        if not os.path.exists(path):
            raise CliError(f"{flag}: no such file: {path}")
    with open(args.run, encoding="utf-8") as fh:
        run = read_run(fh)
    with open(args.qrels, encoding="utf-8") as fh:
        judgments = parse_qrels(fh)
    records = evaluate_run(run, judgments)
    ap, nd = mean_scores(records)
    print(f"topics\t{len(records)}\nMAP\t{ap:.4f}\nNDCG@10\t{nd:.4f}")
    if args.per_topic:
        with open(args.per_topic, "w", encoding="utf-8") as fh:
            write_per_topic(records, fh)
    return 0


def cmd_sweep(args) -> int:
    from .plotting import map_curve

    cfg = resolve_config(args)
    _require(cfg, "qrels")
    grid = SweepGrid(
        pi=_grid(args.pi_grid, float) or DEFAULT_PI,
        fb_docs=_grid(args.fb_docs_grid, int) or DEFAULT_FB_DOCS,
        fb_terms=_grid(args.fb_terms_grid, int) or DEFAULT_FB_TERMS,
        fb_omega=_grid(args.fb_omega_grid, float) or (cfg.fb_omega,),
    )
    methods = args.methods.split(",")
    for m in methods:
        if m not in METHODS:
            raise CliError(f"--methods: unknown method {m!r}")
    exp = _load_experiment(cfg)
    with open(cfg.qrels, encoding="utf-8") as fh:
        judgments = parse_qrels(fh)
    os.makedirs(args.out_dir, exist_ok=True)
    results = [sweep(exp, judgments, grid, m, workers=cfg.workers) for m in methods]

    baseline = args.baseline or methods[0]
    base = next((r for r in results if r.method == baseline), None)
    cells, markers = {}, {}
    lines = [cfg.provenance().rstrip("\n"), f"# grid: {grid}"]
    for res in results:
        cells[res.method, args.collection] = (res.cv.map, res.cv.ndcg10)
        if base is not None and res is not base:
            topics = sorted(set(res.cv.records) & set(base.cv.records))
            if len(topics) >= 2:
                test = paired_t_test([res.cv.records[t].ap for t in topics],
                                     [base.cv.records[t].ap for t in topics])
                if test.p_value < 0.05:
                    markers[res.method, args.collection] = "+" if test.t > 0 else "-"
        lines.append(f"# {res.method}: chosen even={res.cv.chosen['even']} odd={res.cv.chosen['odd']}")
        with open(os.path.join(args.out_dir, f"per_topic_{res.method}.tsv"), "w", encoding="utf-8") as fh:
            fh.write(cfg.provenance())
            write_per_topic(res.cv.records, fh)
    table = summary_table(cells, markers)
    lines.append(f"# +/- : paired t-test p<0.05 against {baseline}")
    text = "\n".join(lines) + "\n" + table + "\n"
    _write_text(os.path.join(args.out_dir, "summary.txt"), text)
    print(table)
    swept = [r for r in results if r.method != "none"]
    if swept:
        map_curve(swept, "pi", os.path.join(args.out_dir, "map_vs_pi.png"), "π")
        map_curve(swept, "fb_terms", os.path.join(args.out_dir, "map_vs_terms.png"), "|T|")
        map_curve(swept, "fb_docs", os.path.join(args.out_dir, "map_vs_docs.png"), "|F|")
        if len(grid.fb_omega) > 1:
            map_curve(swept, "fb_omega", os.path.join(args.out_dir, "map_vs_fb_omega.png"), "feedback ω")
    return 0


def cmd_constraints(args) -> int:
    report = constraint_matrix(seed=args.seed, scenarios=args.scenarios, workers=args.workers)
    print(report.format())
    print(f"# seed {report.seed}, {report.seconds:.1f}s")
    if args.figure:
        from .plotting import constraint_heatmap

        constraint_heatmap(report, args.figure)
    wrong = report.mismatches()
    for method, constraint in wrong:
        v = report.verdicts[method, constraint]
        print(f"# deviation: {method} {constraint} -> {'yes' if v.adheres else 'no'} "
              f"({v.witness.kind} witness)", file=sys.stderr)
    if wrong and args.check:
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qtmprf", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and persist an index")
    p.add_argument("--docs", nargs="+", required=True)
    p.add_argument("--index", required=True, help="output index file")
    p.add_argument("--stoplist", help="stoplist file (default: bundled list)")
    p.add_argument("--mass", action="store_true", help="also estimate the background mass")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="retrieve (with optional feedback) and write a TREC run")
    _experiment_flags(p)
    p.add_argument("--run", help="output run file (default stdout); a .config sidecar is written")
    p.add_argument("--tag", help="run tag (default: method)")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("expand", help="print the top expansion terms of one topic per method")
    _experiment_flags(p, with_method=False)
    p.add_argument("--topic", type=int, required=True)
    p.add_argument("--methods", default="pdcm,smm,rm3,qtm_spud")
    p.add_argument("--rows", type=int, default=20)
    p.add_argument("--tsv", help="also write the table as TSV")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("eval", help="score a run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--per-topic", help="write per-topic TSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="parameter sweep with even/odd cross-validation")
    _experiment_flags(p, with_method=False)
    p.add_argument("--qrels", default=argparse.SUPPRESS)
    p.add_argument("--methods", default="none,rm3,qtm_spud")
    p.add_argument("--baseline", help="method the significance test compares against")
    p.add_argument("--collection", default="collection", help="column label of the summary table")
    p.add_argument("--pi-grid", help="comma separated π values")
    p.add_argument("--fb-docs-grid", help="comma separated |F| values")
    p.add_argument("--fb-terms-grid", help="comma separated |T| values")
    p.add_argument("--fb-omega-grid", help="comma separated feedback ω values ('none' = default)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("constraints", help="empirical constraint-adherence matrix")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenarios", type=int, default=12)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--check", action="store_true", help="exit 1 if the matrix deviates from the expected table")
    p.add_argument("--figure", help="write a heatmap of the matrix")
    p.set_defaults(func=cmd_constraints)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.verbose == 0:
        warnings.simplefilter("ignore", ConvergenceWarning)
    try:
        return args.func(args)
    except (CliError, ConfigError, CorpusError, TrecParseError, EvaluationError, FeedbackError,
            QueryError, IndexIntegrityError, IndexVersionError, argparse.ArgumentTypeError) as exc:
        print(f"qtmprf {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        # reader went away (e.g. `| head`); silence the flush at interpreter exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 1
    except OSError as exc:
        print(f"qtmprf {args.command}: error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "),
              file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"qtmprf {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
