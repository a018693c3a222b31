"""Semi-supervised GCN encoder (one or two layers) with a link-prediction objective."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .artifacts import EmbeddingMatrix, config_hash
from .graph import SparseGraph, project, symmetrize
from .labels import LabeledUserSet

log = logging.getLogger(__name__)

# named RNG streams
_INIT, _EPOCH, _CENTER = 11, 12, 13
# use a dense operator above this fill ratio; BLAS beats CSR there
DENSE_FILL = 0.05


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class GcnConfig:
    hidden_dim: int = 100
    input_dim: int = 100
    epochs: int = 1000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    neg_samples_per_edge: int = 1
    link_weight: float = 1.0
    cls_weight: float = 1.0
    supervised: bool = True
    layers: int = 1
    graph_mode: str = "projected"
    max_link_edges: int | None = 16384
    decoder_bias: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.layers not in (1, 2):
            raise ValueError("layers must be 1 or 2")
        if self.graph_mode not in ("projected", "direct-symmetrized"):
            raise ValueError(f"unknown graph_mode {self.graph_mode!r}")
        if self.epochs < 0 or self.hidden_dim < 1 or self.input_dim < 1:
            raise ValueError("epochs must be >= 0 and dimensions positive")

    def digest(self) -> str:
        return config_hash(dataclasses.asdict(self))


def normalize_adjacency(g: SparseGraph) -> sp.csr_matrix:
    """``D^-1/2 (W + I) D^-1/2`` for a symmetric graph, as scipy CSR."""
    if not g.square:
        raise ValueError("normalize_adjacency needs a square graph")
    n = g.n
    w = g.to_scipy() + sp.identity(n, format="csr")
    deg = np.asarray(w.sum(axis=1)).ravel()
    inv = 1.0 / np.sqrt(deg)
    d = sp.diags(inv)
    out = (d @ w @ d).tocsr()
    out.sort_indices()
    return out


def _operator(a_hat: sp.csr_matrix):
    n = a_hat.shape[0]
    if n and a_hat.nnz > DENSE_FILL * n * n:
        return a_hat.toarray()
    return a_hat


def prepare(graph: SparseGraph, mode: str) -> SparseGraph:
    if mode == "projected":
        return graph if graph.kind == "projected" else project(graph)
    return symmetrize(graph) if graph.directed else graph


class GcnModel:
    """Parameters plus the forward pass; ``X`` is trainable."""

    def __init__(self, n: int, n_classes: int, config: GcnConfig):
        rng = np.random.default_rng([config.seed, _INIT])
        d_in, h = config.input_dim, config.hidden_dim
        self.config = config
        self.x = ad.param(rng.random((n, d_in)), "X")
        self.w1 = ad.param(_glorot(rng, d_in, h), "W1")
        self.w2 = ad.param(_glorot(rng, h, h), "W2") if config.layers == 2 else None
        bound = 1.0 / math.sqrt(h)
        self.wc = ad.param(rng.uniform(-bound, bound, (h, n_classes)), "Wc")
        self.bc = ad.param(rng.uniform(-bound, bound, n_classes), "bc")
        self.link_bias = ad.param(np.zeros(1), "b_link") if config.decoder_bias else None

    @property
    def params(self) -> list[ad.Tensor]:
        ps = [self.x, self.w1] + ([self.w2] if self.w2 is not None else [])
        ps = ps + [self.wc, self.bc]
        return ps + ([self.link_bias] if self.link_bias is not None else [])

    def forward(self, a_hat) -> tuple[ad.Tensor, ad.Tensor]:
        return forward(a_hat, self.x, self.w1, self.wc, self.bc, self.w2)


def _glorot(rng, fan_in, fan_out):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, (fan_in, fan_out))


def forward(a_hat, x, w1, wc, bc, w2=None) -> tuple[ad.Tensor, ad.Tensor]:
    """``H = ReLU(A X W1)`` (optionally a second layer), ``logits = H Wc + b``."""
    if x.shape[1] != w1.shape[0]:
        raise ValueError(f"feature dim {x.shape[1]} does not match W1 rows {w1.shape[0]}")
    if a_hat.shape[0] != x.shape[0]:
        raise ValueError(f"operator size {a_hat.shape[0]} does not match {x.shape[0]} feature rows")
    if wc.shape[0] != w1.shape[1]:
        raise ValueError(f"classifier input {wc.shape[0]} does not match hidden dim {w1.shape[1]}")
    h = ad.relu(ad.spmm(a_hat, ad.matmul(x, w1)))
    if w2 is not None:
        h = ad.relu(ad.spmm(a_hat, ad.matmul(h, w2)))
    logits = ad.add(ad.matmul(h, wc), bc)
    return h, logits


def upper_edges(g: SparseGraph) -> tuple[np.ndarray, np.ndarray]:
    """Unique undirected pairs ``i < j``."""
    r = g.row_ids()
    keep = r < g.indices
    return r[keep], g.indices[keep]


def sample_negatives(
    n: int, count: int, edge_keys: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """``count`` uniform pairs ``i != j`` that are not edges (keys ``min*n+max``, sorted)."""
    src = np.empty(0, dtype=np.int64)
    dst = np.empty(0, dtype=np.int64)
    if n < 2 or count == 0:
        return src, dst
    if len(edge_keys) >= n * (n - 1) // 2:
        raise ValueError("graph is complete; no negative pairs exist")
    while len(src) < count:
        need = count - len(src)
        i = rng.integers(0, n, size=2 * need + 8)
        j = rng.integers(0, n, size=2 * need + 8)
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        ok = lo != hi
        if len(edge_keys):
            keys = lo * n + hi
            pos = np.searchsorted(edge_keys, keys)
            pos[pos >= len(edge_keys)] = 0
            ok &= edge_keys[pos] != keys
        src = np.concatenate([src, i[ok]])[:count]
        dst = np.concatenate([dst, j[ok]])[:count]
    return src, dst


def loss(
    h: ad.Tensor,
    logits: ad.Tensor,
    pos: tuple[np.ndarray, np.ndarray],
    neg: tuple[np.ndarray, np.ndarray],
    train_idx: np.ndarray,
    train_lab: np.ndarray,
    config: GcnConfig,
    link_bias: ad.Tensor | None = None,
) -> tuple[ad.Tensor, float, float]:
    """Weighted sum of link BCE and node cross-entropy; returns (total, link, cls)."""
    src = np.concatenate([pos[0], neg[0]])
    dst = np.concatenate([pos[1], neg[1]])
    terms = []
    link_v = cls_v = 0.0
    if len(src) and config.link_weight:
        scores = ad.rowdot(ad.gather_rows(h, src), ad.gather_rows(h, dst))
        if link_bias is not None:
            scores = ad.add(scores, link_bias)
        target = np.concatenate([np.ones(len(pos[0])), np.zeros(len(neg[0]))])
        link = ad.bce_with_logits(scores, target)
        link_v = float(link.data)
        terms.append(ad.scale(link, config.link_weight))
    if config.supervised and config.cls_weight:
        if len(train_idx) == 0:
            raise ValueError("supervised GCN needs labeled training nodes")
        cls = ad.softmax_cross_entropy(ad.gather_rows(logits, train_idx), train_lab)
        cls_v = float(cls.data)
        terms.append(ad.scale(cls, config.cls_weight))
    if not terms:
        total = ad.Tensor(0.0)
    else:
        total = terms[0]
        for t in terms[1:]:
            total = ad.add(total, t)
    return total, link_v, cls_v


@dataclass
class GcnResult:
    embedding: EmbeddingMatrix
    model: GcnModel
    log: list[tuple[int, float, float]]

    def write_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,loss_link,loss_cls\n")
            for e, l1, l2 in self.log:
                fh.write(f"{e},{l1:.17g},{l2:.17g}\n")


def _train_arrays(graph: SparseGraph, seeds: LabeledUserSet | None) -> tuple[np.ndarray, np.ndarray]:
    if seeds is None or len(seeds) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    index = {u: i for i, u in enumerate(graph.node_ids)}
    pairs = sorted((index[u], seeds.label_of(u)) for u in seeds if u in index)
    if not pairs:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    idx, lab = zip(*pairs)
    return np.array(idx, dtype=np.int64), np.array(lab, dtype=np.int64)


class Trainer:
    """Holds the prepared operator, edges and RNG streams for one training run."""

    def __init__(self, graph: SparseGraph, seeds: LabeledUserSet | None, config: GcnConfig,
                 n_classes: int | None = None):
        self.config = config
        self.graph = prepare(graph, config.graph_mode)
        self.a_hat = _operator(normalize_adjacency(self.graph))
        if n_classes is None:
            n_classes = len(seeds.classes) if seeds is not None else 2
        self.train_idx, self.train_lab = _train_arrays(self.graph, seeds)
        if config.supervised and config.cls_weight and len(self.train_idx) == 0:
            raise ValueError("supervised GCN needs labeled training nodes")
        self.model = GcnModel(self.graph.n, n_classes, config)
        self.pos_all = upper_edges(self.graph)
        n = self.graph.n
        self.edge_keys = np.sort(self.pos_all[0] * n + self.pos_all[1])
        if self.model.link_bias is not None:
            self._center_link_bias()

    def _center_link_bias(self) -> None:
        """Start the decoder bias at minus the mean initial pair score.

        Non-negative (ReLU) embeddings give uniformly large initial dot
        products; without this offset the link loss drives every unit dead
        within a few dozen epochs.
        """
        (ps, pd), (ns, nd) = self.batch(0, stream=_CENTER)
        src, dst = np.concatenate([ps, ns]), np.concatenate([pd, nd])
        if len(src):
            h, _ = self.model.forward(self.a_hat)
            self.model.link_bias.data[:] = -np.einsum("ij,ij->i", h.data[src], h.data[dst]).mean()

    def batch(self, epoch: int, stream: int = _EPOCH):
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, stream, epoch])
        src, dst = self.pos_all
        if cfg.max_link_edges is not None and len(src) > cfg.max_link_edges:
            pick = np.sort(rng.choice(len(src), size=cfg.max_link_edges, replace=False))
            src, dst = src[pick], dst[pick]
        neg = sample_negatives(self.graph.n, len(src) * cfg.neg_samples_per_edge, self.edge_keys, rng)
        return (src, dst), neg

    def loss_at(self, epoch: int):
        pos, neg = self.batch(epoch)
        h, logits = self.model.forward(self.a_hat)
        return loss(h, logits, pos, neg, self.train_idx, self.train_lab, self.config, self.model.link_bias)

    def run(self) -> GcnResult:
        cfg = self.config
        opt = ad.Adam(self.model.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
        history = []
        for epoch in range(cfg.epochs):
            opt.zero_grad()
            total, lv, cv = self.loss_at(epoch)
            if not np.isfinite(total.data):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            history.append((epoch, lv, cv))
            total.backward()
            opt.step()
        h, _ = self.model.forward(self.a_hat)
        emb = EmbeddingMatrix(h.data, self.graph.node_ids, self.graph.signal, cfg.digest())
        return GcnResult(emb, self.model, history)


def train(graph: SparseGraph, seeds: LabeledUserSet | None, config: GcnConfig = GcnConfig()) -> GcnResult:
    """Full-batch Adam training; deterministic given ``config.seed``."""
    return Trainer(graph, seeds, config).run()


def gcn_gradient_check(graph: SparseGraph, seeds: LabeledUserSet | None, config: GcnConfig,
                       n_checks: int = 50, step: float = 1e-5) -> float:
    """Finite-difference check of the full GCN loss on a small instance."""
    if graph.n > 12:
        raise ValueError("gradient check is meant for instances of at most 12 nodes")
    tr = Trainer(graph, seeds, config)
    pos, neg = tr.batch(0)

    def fn():
        h, logits = tr.model.forward(tr.a_hat)
        return loss(h, logits, pos, neg, tr.train_idx, tr.train_lab, config, tr.model.link_bias)[0]

    return ad.gradient_check(fn, tr.model.params, n_checks=n_checks, step=step, seed=config.seed)
