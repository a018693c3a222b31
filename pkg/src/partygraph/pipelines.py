"""Method pipelines in the ``(train_labels, test_users) -> predictions`` shape."""

from __future__ import annotations

import dataclasses
from collections.abc import Mapping

import numpy as np

from .fusion import ForestConfig, forest_predict, forest_train, fuse
from .gcn import GcnConfig, train
from .graph import SparseGraph, top_active
from .labels import ABSTAIN, LabeledUserSet, predict
from .propagation import PropagationConfig, propagate
from .records import UserRegistry


def lp_pipeline(graph: SparseGraph, config: PropagationConfig = PropagationConfig(), threads: int = 1):
    """Label propagation; seeds outside the graph are ignored, unreached users abstain."""
    nodes = set(graph.node_ids)
    index = {u: i for i, u in enumerate(graph.node_ids)}

    def run(train_labels: LabeledUserSet, test_users: list[str]) -> dict[str, int]:
        seeds = train_labels.subset(u for u in train_labels if u in nodes)
        pred = predict(propagate(graph, seeds, config, threads=threads))
        return {u: int(pred[index[u]]) if u in index else ABSTAIN for u in test_users}

    return run


def gcn_pipeline(
    graphs: Mapping[str, SparseGraph],
    gcn_config: GcnConfig = GcnConfig(),
    forest_config: ForestConfig = ForestConfig(),
    activity: Mapping[str, Mapping[str, int]] | None = None,
    top_fraction: float = 0.5,
    threads: int = 1,
):
    """One GCN per signal, embeddings concatenated, random forest on top.

    With ``activity`` (per-signal raw counts) each GCN only sees training
    labels of the most active ``top_fraction`` of users for that signal.
    """
    all_ids: list[str] = []
    seen = set()
    for g in graphs.values():
        for u in g.node_ids:
            if u not in seen:
                seen.add(u)
                all_ids.append(u)
    registry = UserRegistry(all_ids)

    def run(train_labels: LabeledUserSet, test_users: list[str]) -> dict[str, int]:
        embs = []
        for k, (signal, g) in enumerate(graphs.items()):
            in_graph = set(g.node_ids)
            users = [u for u in train_labels if u in in_graph]
            if activity is not None and signal in activity:
                counts = {u: activity[signal].get(u, 0) for u in users}
                users = top_active(counts, registry, top_fraction)
            cfg = dataclasses.replace(gcn_config, seed=gcn_config.seed + 7919 * k)
            embs.append(train(g, train_labels.subset(users), cfg).embedding)
        users = list(train_labels) + [u for u in test_users if u not in train_labels]
        feats = fuse(embs, users)
        n_train = len(train_labels)
        y = np.array([train_labels.label_of(u) for u in train_labels], dtype=np.int64)
        model = forest_train(feats.matrix[:n_train], y, train_labels.classes, forest_config, threads=threads)
        pos = {u: i for i, u in enumerate(users)}
        rows = np.array([pos[u] for u in test_users], dtype=np.int64)
        pred = predict(forest_predict(model, feats.matrix[rows]))
        return {u: int(p) for u, p in zip(test_users, pred)}

    return run
