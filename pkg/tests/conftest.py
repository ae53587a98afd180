from __future__ import annotations

import pytest

from matfuse.corpus import TABLE_KERNELS, load_graph
from matfuse.runtime import Toolchain

BATAX_SRC = """
BATAX
in:
    x : vector(column), beta : scalar,
    A : matrix(row)
out:
    y : vector(column)
{
    y = beta * A' * (A * x)
}
"""


@pytest.fixture(scope="session")
def toolchain():
    tc = Toolchain()
    if not tc.available:
        pytest.skip("no C compiler configured")
    return tc


@pytest.fixture(scope="session")
def have_cc() -> bool:
    return Toolchain().available


@pytest.fixture(scope="session")
def batax():
    return load_graph("batax")


@pytest.fixture(scope="session")
def corpus_graphs():
    return {name: load_graph(name) for name in TABLE_KERNELS}


@pytest.fixture(scope="session")
def all_graphs(corpus_graphs, batax):
    out = dict(corpus_graphs)
    out["batax"] = batax
    return out
