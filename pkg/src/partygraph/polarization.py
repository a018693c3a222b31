"""Network modularity as a polarization measure, and its label-noise sensitivity."""

from __future__ import annotations

import csv
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .graph import SparseGraph, induced_subgraph, symmetrize
from .labels import ABSTAIN


def _undirected(graph: SparseGraph, partition: np.ndarray) -> tuple[SparseGraph, np.ndarray]:
    partition = np.asarray(partition, dtype=np.int64)
    if partition.shape != (graph.n,):
        raise ValueError(f"partition length {partition.shape} does not match {graph.n} nodes")
    g = symmetrize(graph) if graph.directed else graph
    keep = np.flatnonzero(partition != ABSTAIN)
    if len(keep) < graph.n:
        g = induced_subgraph(g, keep)
        partition = partition[keep]
    return g, partition


def modularity(graph: SparseGraph, partition: Sequence[int], exact: bool = False) -> float | Fraction:
    """Newman-Girvan Q over the nodes with a community (``ABSTAIN`` nodes dropped).

    Directed graphs are symmetrized first. Uses the per-community form
    ``Q = sum_c [e_c / 2m - (K_c / 2m)^2]``; with ``exact`` the computation
    runs in rational arithmetic (weights must be integral).
    """
    g, part = _undirected(graph, np.asarray(partition))
    if g.nnz == 0:
        raise ValueError("modularity is undefined on a graph with no edges")
    rows = g.row_ids()
    if exact:
        if not np.all(g.data == np.round(g.data)):
            raise ValueError("exact modularity needs integer weights")
        two_m = int(g.data.sum())
        within: dict[int, int] = {}
        strength: dict[int, int] = {}
        for r, c, w in zip(rows.tolist(), g.indices.tolist(), g.data.astype(np.int64).tolist()):
            strength[part[r]] = strength.get(part[r], 0) + w
            if part[r] == part[c]:
                within[part[r]] = within.get(part[r], 0) + w
        return sum((Fraction(within.get(c, 0), two_m) - Fraction(k, two_m) ** 2 for c, k in strength.items()),
                   Fraction(0))
    labels, comm = np.unique(part, return_inverse=True)
    comm = comm.ravel()
    two_m = g.data.sum()
    same = comm[rows] == comm[g.indices]
    e = np.bincount(comm[rows[same]], weights=g.data[same], minlength=len(labels))
    k = np.bincount(comm[rows], weights=g.data, minlength=len(labels))
    return float((e / two_m).sum() - ((k / two_m) ** 2).sum())


def swap_labels(labels: np.ndarray, fraction: float, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    """Reassign ``round(fraction * n)`` random nodes to a uniformly chosen different class."""
    labels = np.asarray(labels, dtype=np.int64)
    out = labels.copy()
    k = int(round(fraction * len(labels)))
    if k == 0:
        return out
    idx = rng.choice(len(labels), size=k, replace=False)
    shift = rng.integers(1, n_classes, size=k)
    out[idx] = (labels[idx] + shift) % n_classes
    return out


@dataclass(frozen=True)
class SweepPoint:
    swap_fraction: float
    sim_accuracy: float
    q_mean: float
    q_sd: float


def noise_sweep(
    graph: SparseGraph,
    gold: Sequence[int],
    fractions: Sequence[float],
    trials: int = 20,
    n_classes: int | None = None,
    seed: int = 0,
    threads: int = 1,
) -> list[SweepPoint]:
    """Modularity of gold labels after swapping a fraction of them, per fraction."""
    gold = np.asarray(gold, dtype=np.int64)
    g, part = _undirected(graph, gold)
    k = n_classes or int(part.max()) + 1
    for f in fractions:
        if not 0 <= f <= 0.5:
            raise ValueError(f"swap fractions must lie in [0, 0.5], got {f}")

    def point(item):
        fi, f = item
        qs, accs = [], []
        for t in range(trials):
            noisy = swap_labels(part, f, k, np.random.default_rng([seed, fi, t]))
            accs.append(float((noisy == part).mean()))
            qs.append(modularity(g, noisy))
        qs = np.array(qs)
        return SweepPoint(float(f), float(np.mean(accs)), float(qs.mean()),
                          float(qs.std(ddof=1)) if trials > 1 else 0.0)

    items = list(enumerate(fractions))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(point, items))
    return [point(it) for it in items]


def write_curve(points: Sequence[SweepPoint], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["swap_fraction", "sim_accuracy", "q_mean", "q_sd"])
        for p in points:
            w.writerow([f"{p.swap_fraction:.6g}", f"{p.sim_accuracy:.6f}", f"{p.q_mean:.10f}", f"{p.q_sd:.10f}"])
