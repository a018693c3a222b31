"""Stochastic block model fixtures with gold labels and user types."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .graph import SparseGraph, build_direct
from .labels import ClassRegistry, LabeledUserSet, LabelEntry
from .records import InteractionRecord, RecordStore, SignalKind, UserRegistry

# named RNG streams; each row/class/block gets its own counter-keyed generator
_EDGES, _WEIGHTS, _TYPES, _SEEDS = 1, 2, 3, 4


@dataclass(frozen=True)
class SbmConfig:
    block_sizes: tuple[int, ...] = (1000, 1000)
    p_in: float = 0.02
    p_out: float = 0.002
    weight_mean: float = 2.0
    politician_fraction: float | tuple[float, ...] = 0.0
    politician_density: float = 1.0
    seed_fraction: float = 0.3
    seed: int = 0
    class_names: tuple[str, ...] | None = None
    signal: str = "retweet"

    def __post_init__(self):
        object.__setattr__(self, "block_sizes", tuple(int(b) for b in self.block_sizes))
        if isinstance(self.politician_fraction, Sequence):
            object.__setattr__(self, "politician_fraction", tuple(self.politician_fraction))
        if sum(self.block_sizes) < 2 or len(self.block_sizes) < 2:
            raise ValueError("need at least two blocks and two nodes")
        for name in ("p_in", "p_out", "seed_fraction"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.p_in == 0 and self.p_out == 0:
            raise ValueError("degenerate SBM: p_in = p_out = 0")
        if self.weight_mean < 1:
            raise ValueError("weight_mean must be >= 1")
        for f in self.politician_fractions:
            if not 0 <= f <= 1:
                raise ValueError(f"politician fraction must be in [0, 1], got {f}")
        if self.class_names is not None and len(self.class_names) != len(self.block_sizes):
            raise ValueError("class_names must have one name per block")

    @property
    def n(self) -> int:
        return sum(self.block_sizes)

    @property
    def politician_fractions(self) -> tuple[float, ...]:
        pf = self.politician_fraction
        return tuple(pf) if isinstance(pf, tuple) else (float(pf),) * len(self.block_sizes)

    @property
    def classes(self) -> ClassRegistry:
        if self.class_names is not None:
            return ClassRegistry(self.class_names)
        if len(self.block_sizes) == 2:
            return ClassRegistry(("D", "R"))
        return ClassRegistry(f"c{i}" for i in range(len(self.block_sizes)))

    def user_ids(self) -> tuple[str, ...]:
        width = len(str(self.n - 1))
        return tuple(f"u{i:0{width}d}" for i in range(self.n))


@dataclass
class SyntheticData:
    graph: SparseGraph
    gold: LabeledUserSet
    seeds: LabeledUserSet
    registry: UserRegistry
    records: list[InteractionRecord]
    blocks: np.ndarray
    politician: np.ndarray
    extra: dict[str, SparseGraph] = field(default_factory=dict)

    @property
    def store(self) -> RecordStore:
        return RecordStore.from_records(self.records)


def _rng(seed: int, stream: int, key: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, key])


def _assign_types(cfg: SbmConfig, blocks: np.ndarray) -> np.ndarray:
    politician = np.zeros(cfg.n, dtype=bool)
    for b, frac in enumerate(cfg.politician_fractions):
        members = np.flatnonzero(blocks == b)
        k = int(round(frac * len(members)))
        if k:
            politician[_rng(cfg.seed, _TYPES, b).choice(members, size=k, replace=False)] = True
    return politician


def _sample_edges(
    cfg: SbmConfig,
    blocks: np.ndarray,
    politician: np.ndarray,
    p_in: float,
    p_out: float,
    stream: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Directed edges i -> j, each row drawn from its own keyed generator."""
    n = cfg.n
    src, dst, wts = [], [], []
    p_geo = 1.0 / cfg.weight_mean
    for i in range(n):
        rng = _rng(cfg.seed, _EDGES + 16 * stream, i)
        prob = np.where(blocks == blocks[i], p_in, p_out)
        if cfg.politician_density != 1.0:
            boost = politician | politician[i]
            prob = np.where(boost, np.minimum(1.0, prob * cfg.politician_density), prob)
        hit = rng.random(n) < prob
        hit[i] = False
        js = np.flatnonzero(hit)
        if len(js):
            w = rng.geometric(p_geo, size=len(js)) if p_geo < 1 else np.ones(len(js), dtype=np.int64)
            src.append(np.full(len(js), i))
            dst.append(js)
            wts.append(w)
    if not src:
        z = np.zeros(0, dtype=np.int64)
        return z, z, z
    return np.concatenate(src), np.concatenate(dst), np.concatenate(wts).astype(np.int64)


def _seed_sample(cfg: SbmConfig, blocks: np.ndarray) -> np.ndarray:
    chosen = []
    for b in range(len(cfg.block_sizes)):
        members = np.flatnonzero(blocks == b)
        k = max(1, int(round(cfg.seed_fraction * len(members))))
        chosen.append(_rng(cfg.seed, _SEEDS, b).choice(members, size=k, replace=False))
    return np.sort(np.concatenate(chosen))


def _labeled(classes, ids, blocks, politician, nodes, provenance) -> LabeledUserSet:
    return LabeledUserSet(classes, {
        ids[i]: LabelEntry(int(blocks[i]), provenance, "politician" if politician[i] else "public")
        for i in nodes
    })


def generate(cfg: SbmConfig) -> SyntheticData:
    """Sample a directed SBM interaction graph with gold and seed labels."""
    return multi_signal_generate(cfg, {cfg.signal: (cfg.p_in, cfg.p_out)}, primary=cfg.signal)


def multi_signal_generate(
    cfg: SbmConfig,
    signals: dict[str, tuple[float, float]],
    primary: str | None = None,
) -> SyntheticData:
    """Independent SBM draws per signal over one node set and one gold labeling.

    ``signals`` maps a signal kind to its ``(p_in, p_out)`` pair; the first
    (or ``primary``) becomes ``SyntheticData.graph`` and all are in ``extra``.
    """
    if not signals:
        raise ValueError("need at least one signal")
    ids = cfg.user_ids()
    blocks = np.repeat(np.arange(len(cfg.block_sizes)), cfg.block_sizes)
    politician = _assign_types(cfg, blocks)
    registry = UserRegistry(ids)
    records: list[InteractionRecord] = []
    for stream, (name, (p_in, p_out)) in enumerate(signals.items()):
        if p_in == 0 and p_out == 0:
            raise ValueError(f"degenerate SBM for {name}: p_in = p_out = 0")
        kind = SignalKind.parse(name)
        if not kind.user_target:
            raise ValueError(f"synthetic signals must be user-to-user, got {name}")
        s, d, w = _sample_edges(cfg, blocks, politician, p_in, p_out, stream)
        records.extend(InteractionRecord(ids[a], kind, ids[b], int(c)) for a, b, c in zip(s, d, w))
    store = RecordStore.from_records(records)
    graphs = {name: build_direct(store, registry, name) for name in signals}
    classes = cfg.classes
    gold = _labeled(classes, ids, blocks, politician, range(cfg.n), "manual")
    seeds = _labeled(classes, ids, blocks, politician, _seed_sample(cfg, blocks), "weak")
    main = primary or next(iter(signals))
    return SyntheticData(graphs[main], gold, seeds, registry, records, blocks, politician, graphs)


def expected_edge_count(cfg: SbmConfig) -> tuple[float, float]:
    """Mean and variance of the directed edge count (no politician boost)."""
    sizes = np.array(cfg.block_sizes, dtype=float)
    n = sizes.sum()
    within = float((sizes * (sizes - 1)).sum())
    cross = float(n * n - (sizes * sizes).sum())
    mean = within * cfg.p_in + cross * cfg.p_out
    var = within * cfg.p_in * (1 - cfg.p_in) + cross * cfg.p_out * (1 - cfg.p_out)
    return mean, var
