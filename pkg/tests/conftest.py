import numpy as np
import pytest

from partygraph.graph import from_dense
from partygraph.labels import ClassRegistry, LabeledUserSet, LabelEntry
from partygraph.synth import SbmConfig, generate


def ids(n):
    return tuple(f"u{i}" for i in range(n))


def graph_from(mat, kind="direct", directed=True):
    mat = np.asarray(mat, dtype=float)
    return from_dense(mat, node_ids=ids(mat.shape[0]), kind=kind, directed=directed, signal="retweet")


def seed_set(labels: dict, names=("D", "R"), provenance="weak"):
    """``{node_index: class_index}`` -> LabeledUserSet over u<i> ids."""
    classes = ClassRegistry(names)
    return LabeledUserSet(classes, {f"u{i}": LabelEntry(c, provenance) for i, c in labels.items()})


def random_digraph(rng, n, density=0.2, max_w=5):
    mat = rng.integers(1, max_w + 1, size=(n, n)) * (rng.random((n, n)) < density)
    np.fill_diagonal(mat, 0)
    return mat.astype(float)


@pytest.fixture(scope="session")
def standard():
    """The 2 x 1000 node SBM used throughout the desk-scale checks."""
    return generate(SbmConfig(seed=1))


# acceptance reporting: criterion number -> list of (ok, detail)
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p for p, _ in parts)
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: " + "; ".join(d for _, d in parts))
