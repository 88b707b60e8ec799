"""Shared fixtures: corpus geometries and small constructors."""

from importlib import resources

import numpy as np
import pytest

from projtractor.cli import load_geometry
from projtractor.exprdsl import parse
from projtractor.geometry import ChartGeometry

CORPUS = resources.files("projtractor").joinpath("corpus")


def corpus_path(name):
    return str(CORPUS.joinpath(f"{name}.json"))


def corpus(name):
    return load_geometry(corpus_path(name))


def metric_geometry(name, variables, entries, domain):
    m = tuple(tuple(parse(str(e), variables) for e in row) for row in entries)
    return ChartGeometry(name, tuple(variables), np.asarray(domain, float), metric=m)


def connection_geometry(name, variables, gamma, domain):
    c = tuple(tuple(tuple(parse(str(e), variables) for e in row) for row in mat) for mat in gamma)
    return ChartGeometry(name, tuple(variables), np.asarray(domain, float), connection=c)


@pytest.fixture(scope="session")
def sphere():
    return corpus("sphere")


@pytest.fixture(scope="session")
def hyperbolic():
    return corpus("hyperbolic")


@pytest.fixture(scope="session")
def witness():
    return corpus("noneinstein3d")


@pytest.fixture(scope="session")
def flat2():
    return corpus("flat2")


@pytest.fixture(scope="session")
def flat3():
    return corpus("flat3")


@pytest.fixture(scope="session")
def perturbed():
    return corpus("perturbed")


@pytest.fixture(scope="session")
def hyperbolic3():
    return corpus("hyperbolic3")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
