"""Frozen expected outputs for the bundled mini-corpus.

Collection statistics are recounted from the raw TREC text with a regular
expression tokenizer plus the package stemmer (so they do not go through the
index); MAP values are the end-to-end harness outputs at the documented
default parameters, frozen as regression values.
Run:  python tests/oracles/oracle_minicorpus.py
"""

import re
import warnings
from collections import Counter

from _common import load, save

from qtmprf.corpus import parse_qrels, parse_trec_documents, parse_trec_topics
from qtmprf.experiment import Experiment, ExperimentConfig
from qtmprf.evaluation import mean_scores
from qtmprf.minicorpus import bundled
from qtmprf.models import ConvergenceWarning

RUNS = {
    "none": {"method": "none"},
    "qtm_spud_omega_0.8": {"method": "qtm_spud", "fb_omega": 0.8},
    "qtm_spud_omega_0.0": {"method": "qtm_spud", "fb_omega": 0.0},
    "rm3_ml": {"method": "rm3"},
    "rm3_omega_0.8": {"method": "rm3", "fb_omega": 0.8},
    "smm": {"method": "smm"},
    "pdcm": {"method": "pdcm"},
    "qtm_dir": {"method": "qtm_dir", "model": "spud"},
}


def raw_stats(path):
    from qtmprf.corpus import default_tokenizer

    tok = default_tokenizer()
    text = open(path, encoding="utf-8").read()
    bodies = re.findall(r"<TEXT>(.*?)</TEXT>", text, re.S)
    df, ctf = Counter(), Counter()
    for body in bodies:
        counts = Counter(tok(body))
        df.update(counts.keys())
        ctf.update(counts)
    return {"documents": len(bodies), "terms": len(df), "tokens": sum(ctf.values())}


def main():
    paths = bundled()
    out = {"stats": raw_stats(paths["docs.trec"]), "mass": load("mass")["minicorpus"]["bounded_argmax"]}
    with open(paths["docs.trec"], "rb") as fh:
        from qtmprf.corpus import build_index

        index = build_index(parse_trec_documents(fh))
    with open(paths["topics.trec"], "rb") as fh:
        topics = parse_trec_topics(fh)
    with open(paths["qrels.txt"], "rb") as fh:
        judgments = parse_qrels(fh)
    base = ExperimentConfig(mc=out["mass"])
    exp = Experiment(index, topics, base)
    out["map"] = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for name, point in RUNS.items():
            out["map"][name] = mean_scores(exp.evaluate(judgments, base.with_point(point)))[0]
    out["parameters"] = {"omega": base.omega, "fb_docs": base.fb_docs, "fb_terms": base.fb_terms, "pi": base.pi}
    save("minicorpus", out)


if __name__ == "__main__":
    main()
