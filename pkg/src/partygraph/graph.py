"""Compressed sparse row graphs: direct, bipartite, projected and union.

Orientation follows the convention ``A[i, j] > 0`` iff user ``j`` acted on
target ``i``: rows are targets, columns are acting users. The projected
co-activity graph is then ``A.T @ A`` with its diagonal removed.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .records import RecordStore, SignalKind, UserRegistry

# expanded (row, col) products handled per projection block
_BLOCK_PRODUCTS = 1 << 21


@dataclass(frozen=True, eq=False)
class SparseGraph:
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shape: tuple[int, int]
    directed: bool = True
    signal: str = ""
    kind: str = "direct"
    node_ids: tuple[str, ...] | None = None
    target_ids: tuple[str, ...] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        """Number of user nodes (the column axis)."""
        return self.shape[1]

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    @property
    def square(self) -> bool:
        return self.shape[0] == self.shape[1]

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        s, e = self.indptr[i], self.indptr[i + 1]
        return self.indices[s:e], self.data[s:e]

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.shape[0], dtype=np.int64), np.diff(self.indptr))

    def degrees(self) -> np.ndarray:
        """Weighted row sums."""
        return np.bincount(self.row_ids(), weights=self.data, minlength=self.shape[0])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_ids(), self.indices] = self.data
        return out

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def with_data(self, data: np.ndarray, **changes) -> SparseGraph:
        return replace(self, data=np.asarray(data, dtype=np.float64), **changes)

    def equals(self, other: SparseGraph) -> bool:
        """Structural equality, bit-exact on weights."""
        return (
            self.shape == other.shape
            and self.directed == other.directed
            and self.signal == other.signal
            and self.kind == other.kind
            and self.node_ids == other.node_ids
            and self.target_ids == other.target_ids
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and self.data.tobytes() == other.data.tobytes()
        )

    def validate(self) -> None:
        nr, nc = self.shape
        if self.indptr.shape != (nr + 1,) or self.indptr[0] != 0:
            raise ValueError("indptr must have length rows+1 and start at 0")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be monotone")
        if len(self.indices) != self.nnz or len(self.data) != self.nnz:
            raise ValueError("indices/data length must equal indptr[-1]")
        if self.nnz:
            if self.indices.min() < 0 or self.indices.max() >= nc:
                raise ValueError("column index out of range")
            if np.any(self.data <= 0):
                raise ValueError("weights must be positive")
            rows = self.row_ids()
            same_row = rows[1:] == rows[:-1]
            if np.any(same_row & (self.indices[1:] <= self.indices[:-1])):
                raise ValueError("column indices must be sorted and unique within each row")
        if self.node_ids is not None and len(self.node_ids) != nc:
            raise ValueError("node_ids length must equal column count")
        if not self.directed:
            if not self.square:
                raise ValueError("undirected graph must be square")
            t = transpose(self)
            if not (np.array_equal(t.indptr, self.indptr) and np.array_equal(t.indices, self.indices)
                    and np.array_equal(t.data, self.data)):
                raise ValueError("undirected graph must be symmetric")

    def __repr__(self) -> str:
        return (f"SparseGraph(shape={self.shape}, nnz={self.nnz}, kind={self.kind!r}, "
                f"signal={self.signal!r}, directed={self.directed})")


def from_coo(
    rows: np.ndarray,
    cols: np.ndarray,
    weights: np.ndarray,
    shape: tuple[int, int],
    **attrs,
) -> SparseGraph:
    """Assemble CSR from triplets, summing duplicates and dropping zeros."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    nr, nc = shape
    if rows.size:
        keys = rows * nc + cols
        uniq, inv = np.unique(keys, return_inverse=True)
        summed = np.bincount(inv.ravel(), weights=weights, minlength=len(uniq))
        keep = summed != 0
        uniq, summed = uniq[keep], summed[keep]
        r, c = np.divmod(uniq, nc)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        summed = np.zeros(0)
    indptr = np.zeros(nr + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=nr), out=indptr[1:])
    return SparseGraph(indptr, c.astype(np.int64), summed.astype(np.float64), (nr, nc), **attrs)


def empty_graph(n: int, **attrs) -> SparseGraph:
    return from_coo(np.zeros(0), np.zeros(0), np.zeros(0), (n, n), **attrs)


def from_dense(mat: np.ndarray, **attrs) -> SparseGraph:
    r, c = np.nonzero(mat)
    return from_coo(r, c, mat[r, c], mat.shape, **attrs)


def transpose(g: SparseGraph) -> SparseGraph:
    """CSR transpose via a stable counting sort on column index."""
    nr, nc = g.shape
    order = np.argsort(g.indices, kind="stable")
    rows = g.row_ids()[order]
    counts = np.bincount(g.indices, minlength=nc)
    indptr = np.zeros(nc + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    node_ids, target_ids = g.node_ids, g.target_ids
    if not g.square or target_ids is not None:
        node_ids, target_ids = target_ids, node_ids
    return replace(g, indptr=indptr, indices=rows, data=g.data[order].copy(), shape=(nc, nr),
                   node_ids=node_ids, target_ids=target_ids)


def build_direct(
    store: RecordStore,
    registry: UserRegistry,
    kind: SignalKind | str,
    binary: bool = False,
) -> SparseGraph:
    """User-to-user graph for one signal kind; ``A[target, source] = count``.

    Self-interactions are dropped.
    """
    kind = SignalKind.parse(kind)
    if not kind.user_target:
        raise ValueError(
            f"{kind.value} targets are not users; use build_bipartite for a user-by-{kind.value} graph"
        )
    rows, cols, ws = [], [], []
    for (src, k, tgt), (w, _) in store.items():
        if k is not kind:
            continue
        s = registry.index(src)
        t = registry.get(tgt)
        if t is None:
            raise KeyError(f"target user {tgt!r} missing from registry")
        if s == t:
            continue
        rows.append(t)
        cols.append(s)
        ws.append(1 if binary else w)
    n = len(registry)
    return from_coo(np.array(rows), np.array(cols), np.array(ws, dtype=np.float64), (n, n),
                    directed=True, signal=kind.value, kind="direct", node_ids=registry.ids)


def build_bipartite(
    store: RecordStore,
    registry: UserRegistry,
    kind: SignalKind | str,
    binary: bool = False,
) -> SparseGraph:
    """Target-by-user incidence matrix for one kind (targets sorted by id).

    Works for every kind; for user-typed kinds the target axis is a
    separate copy of the targeted users.
    """
    kind = SignalKind.parse(kind)
    entries = [(s, t, w) for (s, k, t), (w, _) in store.items() if k is kind]
    targets = sorted({t for _, t, _ in entries})
    tindex = {t: i for i, t in enumerate(targets)}
    rows = np.array([tindex[t] for _, t, _ in entries], dtype=np.int64)
    cols = np.array([registry.index(s) for s, _, _ in entries], dtype=np.int64)
    ws = np.ones(len(entries)) if binary else np.array([w for _, _, w in entries], dtype=np.float64)
    return from_coo(rows, cols, ws, (len(targets), len(registry)), directed=True, signal=kind.value,
                    kind="bipartite", node_ids=registry.ids, target_ids=tuple(targets))


def binarize(g: SparseGraph) -> SparseGraph:
    return g.with_data(np.ones_like(g.data))


def _project_block(a: SparseGraph, at: SparseGraph, r0: int, r1: int) -> tuple[np.ndarray, ...]:
    s, e = at.indptr[r0], at.indptr[r1]
    ks = at.indices[s:e]
    wk = at.data[s:e]
    out_rows = np.repeat(np.arange(r0, r1, dtype=np.int64), np.diff(at.indptr[r0:r1 + 1]))
    starts = a.indptr[ks]
    lens = a.indptr[ks + 1] - starts
    total = int(lens.sum())
    if total == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z, np.zeros(0)
    # positions of every gathered entry: starts[j] + 0..lens[j]-1
    offs = np.repeat(starts - np.cumsum(lens) + lens, lens) + np.arange(total)
    rows = np.repeat(out_rows, lens)
    cols = a.indices[offs]
    vals = a.data[offs] * np.repeat(wk, lens)
    keep = rows != cols
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    n = a.shape[1]
    uniq, inv = np.unique(rows * n + cols, return_inverse=True)
    summed = np.bincount(inv.ravel(), weights=vals, minlength=len(uniq))
    r, c = np.divmod(uniq, n)
    return r, c, summed


def _row_blocks(at: SparseGraph, a: SparseGraph) -> list[tuple[int, int]]:
    """Split output rows so each block expands to roughly _BLOCK_PRODUCTS entries."""
    lens = np.diff(a.indptr)
    work = np.bincount(at.row_ids(), weights=lens[at.indices], minlength=at.shape[0])
    blocks, r0, acc = [], 0, 0.0
    for i, w in enumerate(work):
        acc += w
        if acc >= _BLOCK_PRODUCTS:
            blocks.append((r0, i + 1))
            r0, acc = i + 1, 0.0
    if r0 < at.shape[0] or not blocks:
        blocks.append((r0, at.shape[0]))
    return blocks


def project(direct: SparseGraph, threads: int = 1) -> SparseGraph:
    """Co-activity graph ``A.T @ A`` with zero diagonal, computed sparsely.

    Output rows are produced in independent blocks (row-wise Gustavson
    accumulation over the transposed operand) and concatenated in index
    order, so the result does not depend on ``threads``.
    """
    a = direct
    at = transpose(a)
    blocks = _row_blocks(at, a)

    def work(block):
        r0, r1 = block
        try:
            return _project_block(a, at, r0, r1)
        except MemoryError:
            raise MemoryError(f"projection ran out of memory on rows {r0}..{r1 - 1}") from None

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    n = a.shape[1]
    rows = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, dtype=np.int64)
    cols = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, dtype=np.int64)
    vals = np.concatenate([p[2] for p in parts]) if parts else np.zeros(0)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return SparseGraph(indptr, cols.astype(np.int64), vals, (n, n), directed=False,
                       signal=a.signal, kind="projected", node_ids=a.node_ids)


def symmetrize(g: SparseGraph) -> SparseGraph:
    """``W + W.T`` as an undirected graph."""
    if not g.square:
        raise ValueError("symmetrize needs a square graph")
    rows = g.row_ids()
    return from_coo(
        np.concatenate([rows, g.indices]),
        np.concatenate([g.indices, rows]),
        np.concatenate([g.data, g.data]),
        g.shape,
        directed=False,
        signal=g.signal,
        kind="symmetrized",
        node_ids=g.node_ids,
    )


def union_graphs(graphs: Sequence[SparseGraph]) -> SparseGraph:
    """Edgewise weight sum over graphs sharing one node registry."""
    if not graphs:
        raise ValueError("union of zero graphs")
    first = graphs[0]
    for g in graphs[1:]:
        if g.shape != first.shape:
            raise ValueError(f"cannot union graphs of shape {first.shape} and {g.shape}")
        if first.node_ids is not None and g.node_ids is not None and g.node_ids != first.node_ids:
            raise ValueError("cannot union graphs over different node registries")
    kinds = {g.kind for g in graphs}
    return from_coo(
        np.concatenate([g.row_ids() for g in graphs]),
        np.concatenate([g.indices for g in graphs]),
        np.concatenate([g.data for g in graphs]),
        first.shape,
        directed=any(g.directed for g in graphs),
        signal="+".join(g.signal for g in graphs),
        kind=kinds.pop() if len(kinds) == 1 else "union",
        node_ids=first.node_ids,
    )


def row_normalize(g: SparseGraph) -> SparseGraph:
    """``D^-1 W``; rows with zero degree are left empty."""
    deg = g.degrees()
    scale = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return g.with_data(g.data * scale[g.row_ids()], directed=True)


def induced_subgraph(g: SparseGraph, nodes: Iterable[int]) -> SparseGraph:
    """Restrict a square graph to ``nodes`` (renumbered in the given order)."""
    nodes = np.asarray(list(nodes), dtype=np.int64)
    remap = np.full(g.n, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    rows = remap[g.row_ids()]
    cols = remap[g.indices]
    keep = (rows >= 0) & (cols >= 0)
    ids = tuple(g.node_ids[i] for i in nodes) if g.node_ids is not None else None
    return from_coo(rows[keep], cols[keep], g.data[keep], (len(nodes), len(nodes)),
                    directed=g.directed, signal=g.signal, kind=g.kind, node_ids=ids)


def spmm(g: SparseGraph, y: np.ndarray, threads: int = 1) -> np.ndarray:
    """``W @ Y`` by independent row blocks; each row is reduced in stored order."""
    mat = g.to_scipy()
    if threads <= 1 or g.shape[0] < 2 * threads:
        return np.asarray(mat @ y)
    bounds = np.linspace(0, g.shape[0], threads + 1).astype(int)
    with ThreadPoolExecutor(threads) as pool:
        parts = list(pool.map(lambda b: np.asarray(mat[b[0]:b[1]] @ y), zip(bounds[:-1], bounds[1:])))
    return np.vstack(parts)


def top_active(
    counts: Mapping[str, int],
    registry: UserRegistry,
    fraction: float = 0.5,
) -> list[str]:
    """Most active users: the top ceil(fraction * M) of the M users with a nonzero count.

    Ties are broken by ascending internal index, so the ranking is total and
    raising ``fraction`` only ever appends users.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    active = [(u, c) for u, c in counts.items() if c > 0]
    active.sort(key=lambda uc: (-uc[1], registry.index(uc[0])))
    keep = math.ceil(fraction * len(active) - 1e-12)
    return [u for u, _ in active[:keep]]


def filter_top_active(
    store: RecordStore,
    registry: UserRegistry,
    kind: SignalKind | str,
    fraction: float = 0.5,
) -> list[str]:
    return top_active(store.activity(kind), registry, fraction)
