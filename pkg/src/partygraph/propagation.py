"""Semi-supervised label propagation over interaction graphs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import SparseGraph, from_coo, project, spmm, symmetrize
from .labels import ABSTAIN, LabelDistribution, LabeledUserSet

GRAPH_MODES = ("direct-symmetrized", "projected")


@dataclass(frozen=True)
class PropagationConfig:
    iterations: int = 2
    alpha: float = 0.5
    clamp_seeds: bool = True
    graph_mode: str = "direct-symmetrized"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be positive, got {self.iterations}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.graph_mode not in GRAPH_MODES:
            raise ValueError(f"graph_mode must be one of {GRAPH_MODES}, got {self.graph_mode!r}")


def _augment_bipartite(g: SparseGraph) -> SparseGraph:
    """Square graph over users followed by targets, with incidence edges both ways."""
    n_t, n_u = g.shape
    rows = g.row_ids() + n_u
    cols = g.indices
    n = n_u + n_t
    return from_coo(
        np.concatenate([rows, cols]),
        np.concatenate([cols, rows]),
        np.concatenate([g.data, g.data]),
        (n, n),
        directed=False,
        signal=g.signal,
        kind="symmetrized",
        node_ids=tuple(g.node_ids or range(n_u)) + tuple(g.target_ids or range(n_t)),
    )


def prepare_graph(g: SparseGraph, mode: str = "direct-symmetrized", threads: int = 1) -> SparseGraph:
    """Turn an input graph into the undirected operator propagation runs on.

    Bipartite user-by-target graphs keep their target nodes in the
    symmetrized mode; user nodes always come first.
    """
    if mode == "projected":
        return g if g.kind == "projected" else project(g, threads=threads)
    if mode != "direct-symmetrized":
        raise ValueError(f"unknown graph mode {mode!r}")
    if g.kind == "bipartite":
        return _augment_bipartite(g)
    if g.directed:
        return symmetrize(g)
    return g


def _seed_arrays(g: SparseGraph, seeds: LabeledUserSet, n_users: int) -> tuple[np.ndarray, np.ndarray]:
    if len(seeds) == 0:
        raise ValueError("propagation needs at least one seed")
    if g.node_ids is None:
        raise ValueError("graph has no node ids to match seeds against")
    index = {uid: i for i, uid in enumerate(g.node_ids[:n_users])}
    missing = [u for u in seeds if u not in index]
    if missing:
        raise KeyError(f"{len(missing)} seed users not in graph, e.g. {missing[0]!r}")
    idx = np.array([index[u] for u in seeds], dtype=np.int64)
    lab = np.array([seeds.label_of(u) for u in seeds], dtype=np.int64)
    order = np.argsort(idx, kind="stable")
    return idx[order], lab[order]


def propagate_arrays(
    w: SparseGraph,
    seed_idx: np.ndarray,
    seed_lab: np.ndarray,
    n_classes: int,
    config: PropagationConfig = PropagationConfig(),
    threads: int = 1,
) -> np.ndarray:
    """Iterate ``Y <- (1 - a) Y + a D^-1 W Y`` from one-hot seeds.

    Rows of ``W`` with zero degree pass ``Y`` through unchanged. Seed rows
    are re-clamped to one-hot after every iteration when configured. The
    neighbor sum is divided by the degree only after accumulation, so
    integer-weighted ties stay exact ties.
    """
    n = w.shape[0]
    y = np.zeros((n, n_classes))
    y[seed_idx, seed_lab] = 1.0
    onehot = y[seed_idx].copy()
    deg = w.degrees()
    has_deg = deg > 0
    a = config.alpha
    for _ in range(config.iterations):
        s = spmm(w, y, threads=threads)
        py = y.copy()
        py[has_deg] = s[has_deg] / deg[has_deg, None]
        y = (1.0 - a) * y + a * py
        if config.clamp_seeds:
            y[seed_idx] = onehot
    return y


def propagate(
    graph: SparseGraph,
    seeds: LabeledUserSet,
    config: PropagationConfig = PropagationConfig(),
    threads: int = 1,
) -> LabelDistribution:
    """Label distribution over the graph's user nodes."""
    n_users = graph.n
    w = prepare_graph(graph, config.graph_mode, threads=threads)
    idx, lab = _seed_arrays(w, seeds, n_users)
    y = propagate_arrays(w, idx, lab, len(seeds.classes), config, threads=threads)[:n_users]
    np.clip(y, 0.0, 1.0, out=y)
    return LabelDistribution(y, seeds.classes, graph.node_ids)


def majority_vote_oracle(
    graph: SparseGraph,
    seeds: LabeledUserSet,
    graph_mode: str = "direct-symmetrized",
) -> np.ndarray:
    """Weighted majority of seeded neighbors, computed with plain loops.

    Seed users keep their own label; users without seeded neighbors
    abstain; ties go to the lowest class index.
    """
    n_users = graph.n
    w = prepare_graph(graph, graph_mode)
    idx, lab = _seed_arrays(w, seeds, n_users)
    seed_of = dict(zip(idx.tolist(), lab.tolist()))
    k = len(seeds.classes)
    indptr, indices, data = w.indptr.tolist(), w.indices.tolist(), w.data.tolist()
    out = np.full(n_users, ABSTAIN, dtype=np.int64)
    for u in range(n_users):
        if u in seed_of:
            out[u] = seed_of[u]
            continue
        tally = [0.0] * k
        seen = False
        for p in range(indptr[u], indptr[u + 1]):
            c = seed_of.get(indices[p])
            if c is not None:
                tally[c] += data[p]
                seen = True
        if seen:
            best = 0
            for c in range(1, k):
                if tally[c] > tally[best]:
                    best = c
            out[u] = best
    return out
