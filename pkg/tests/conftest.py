import json
import os
import warnings

import pytest

from qtmprf.corpus import Document, build_index, parse_qrels, parse_trec_documents, parse_trec_topics
from qtmprf.minicorpus import bundled
from qtmprf.models import BackgroundModel, ConvergenceWarning

HERE = os.path.dirname(os.path.abspath(__file__))
EXPECTED = os.path.join(HERE, "oracles", "expected")


def oracle(name):
    with open(os.path.join(EXPECTED, name + ".json"), encoding="utf-8") as fh:
        return json.load(fh)


def toy_background(proportions, collection=None, mass=None):
    return BackgroundModel(dict(proportions), dict(collection or proportions), mass)


def docs(*counts):
    return [Document.from_counts(f"d{i + 1}", c) for i, c in enumerate(counts)]


@pytest.fixture(scope="session")
def mini_paths():
    return bundled()


@pytest.fixture(scope="session")
def mini(mini_paths):
    """(index, topics, judgments) of the bundled mini-corpus."""
    with open(mini_paths["docs.trec"], "rb") as fh:
        index = build_index(parse_trec_documents(fh))
    with open(mini_paths["topics.trec"], "rb") as fh:
        topics = parse_trec_topics(fh)
    with open(mini_paths["qrels.txt"], "rb") as fh:
        judgments = parse_qrels(fh)
    return index, topics, judgments


@pytest.fixture(scope="session")
def mini_experiment(mini):
    from qtmprf.experiment import Experiment, ExperimentConfig

    index, topics, _ = mini
    return Experiment(index, topics, ExperimentConfig(mc=oracle("mass")["minicorpus"]["bounded_argmax"]))


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        yield


# one status line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
