import itertools

import numpy as np
import pytest
from hypothesis import strategies as st

from scgfm.graph import Graph


@st.composite
def graphs(draw, min_nodes=1, max_nodes=8):
    """Random simple graphs drawn edge by edge."""
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = list(itertools.combinations(range(n), 2))
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Graph(n, [p for p, keep in zip(pairs, mask) if keep])


def path(n):
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def cycle(n):
    return Graph(n, [(i, i + 1) for i in range(n - 1)] + [(0, n - 1)])


def complete(n):
    return Graph(n, list(itertools.combinations(range(n), 2)))


def star(leaves):
    return Graph(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
