"""On-disk formats: versioned little-endian binaries plus TSV interop files."""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .graph import SparseGraph
from .records import FormatError

FORMAT_VERSION = 1
GRAPH_MAGIC = b"PGGR"
EMBED_MAGIC = b"PGEM"
MODEL_MAGIC = b"PGMD"
_LE = b"<"


class VersionMismatch(FormatError):
    def __init__(self, path, found: int, expected: int = FORMAT_VERSION):
        super().__init__(f"{path}: artifact format version {found}, this toolkit reads version {expected}")
        self.found = found
        self.expected = expected


@dataclass(eq=False)
class EmbeddingMatrix:
    """Dense per-user vectors for one signal."""

    vectors: np.ndarray
    node_ids: tuple[str, ...]
    signal: str = ""
    config_hash: str = ""
    present: np.ndarray | None = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.node_ids = tuple(self.node_ids)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.node_ids):
            raise ValueError(f"vectors {self.vectors.shape} do not match {len(self.node_ids)} ids")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding entries must be finite")
        if self.present is None:
            self.present = np.ones(len(self.node_ids), dtype=bool)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def equals(self, other: EmbeddingMatrix) -> bool:
        return (
            self.node_ids == other.node_ids
            and self.signal == other.signal
            and self.config_hash == other.config_hash
            and self.vectors.shape == other.vectors.shape
            and self.vectors.tobytes() == other.vectors.tobytes()
            and np.array_equal(self.present, other.present)
        )


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_container(path, magic: bytes, header: dict, arrays: dict[str, np.ndarray], blob: bytes = b"") -> None:
    """magic(4) | version(u8) | endianness('<') | header_len(u64) | header JSON | arrays | blob."""
    specs = []
    payload = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype.kind in "iu":
            dt = np.dtype("<i8")
        elif arr.dtype.kind == "f":
            dt = np.dtype("<f8")
        elif arr.dtype.kind == "b":
            dt = np.dtype("|u1")
        else:
            raise TypeError(f"cannot store array {name!r} of dtype {arr.dtype}")
        data = arr.astype(dt, copy=False).tobytes()
        specs.append({"name": name, "dtype": dt.str, "shape": list(arr.shape), "nbytes": len(data)})
        payload.append(data)
    head = dict(header, arrays=specs, blob_bytes=len(blob))
    hb = json.dumps(head, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<B", FORMAT_VERSION))
        fh.write(_LE)
        fh.write(struct.pack("<Q", len(hb)))
        fh.write(hb)
        for data in payload:
            fh.write(data)
        fh.write(blob)


def read_container(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray], bytes]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != magic:
        raise FormatError(f"{path}: not a {magic.decode()} artifact (magic {raw[:4]!r})")
    if len(raw) < 14:
        raise FormatError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<B", raw, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatch(path, version)
    if raw[5:6] != _LE:
        raise FormatError(f"{path}: unsupported byte order {raw[5:6]!r}")
    (hlen,) = struct.unpack_from("<Q", raw, 6)
    pos = 14
    header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    arrays = {}
    for spec in header.pop("arrays"):
        n = spec["nbytes"]
        arrays[spec["name"]] = np.frombuffer(raw[pos:pos + n], dtype=np.dtype(spec["dtype"])).reshape(spec["shape"]).copy()
        pos += n
    blob = raw[pos:pos + header.pop("blob_bytes")]
    return header, arrays, blob


def save_graph(g: SparseGraph, path) -> None:
    header = {
        "shape": list(g.shape),
        "directed": g.directed,
        "signal": g.signal,
        "kind": g.kind,
        "node_ids": list(g.node_ids) if g.node_ids is not None else None,
        "target_ids": list(g.target_ids) if g.target_ids is not None else None,
        "meta": g.meta,
    }
    write_container(path, GRAPH_MAGIC, header, {"indptr": g.indptr, "indices": g.indices, "data": g.data})


def load_graph(path) -> SparseGraph:
    h, a, _ = read_container(path, GRAPH_MAGIC)
    return SparseGraph(
        a["indptr"].astype(np.int64),
        a["indices"].astype(np.int64),
        a["data"].astype(np.float64),
        tuple(h["shape"]),
        directed=h["directed"],
        signal=h["signal"],
        kind=h["kind"],
        node_ids=tuple(h["node_ids"]) if h["node_ids"] is not None else None,
        target_ids=tuple(h["target_ids"]) if h["target_ids"] is not None else None,
        meta=h.get("meta") or {},
    )


def save_embedding(e: EmbeddingMatrix, path) -> None:
    header = {"node_ids": list(e.node_ids), "signal": e.signal, "config_hash": e.config_hash}
    write_container(path, EMBED_MAGIC, header, {"vectors": e.vectors, "present": e.present})


def load_embedding(path) -> EmbeddingMatrix:
    h, a, _ = read_container(path, EMBED_MAGIC)
    return EmbeddingMatrix(a["vectors"], h["node_ids"], h["signal"], h["config_hash"], a["present"].astype(bool))


def write_embedding_tsv(e: EmbeddingMatrix, path) -> None:
    """``#dim=d signal=<name>`` header, then ``user<TAB>v0..v(d-1)`` for present users."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#dim={e.dim} signal={e.signal}\n")
        for uid, vec, ok in zip(e.node_ids, e.vectors, e.present):
            if ok:
                fh.write(uid + "\t" + "\t".join(repr(float(v)) for v in vec) + "\n")


def read_embedding_tsv(path, node_ids=None) -> EmbeddingMatrix:
    """Read an embedding TSV.

    With ``node_ids`` the matrix is laid out over that registry and users
    missing from the file are zero rows flagged absent; file users outside
    the registry are an error.
    """
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().strip()
        if not head.startswith("#"):
            raise FormatError(f"{path}: missing '#dim=d signal=<name>' header")
        fields = dict(part.split("=", 1) for part in head[1:].split() if "=" in part)
        try:
            dim = int(fields["dim"])
        except (KeyError, ValueError):
            raise FormatError(f"{path}: header lacks a valid dim") from None
        signal = fields.get("signal", "")
        users, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != dim + 1:
                raise FormatError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            users.append(parts[0])
            try:
                rows.append([float(v) for v in parts[1:]])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric value") from None
    vecs = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    if node_ids is None:
        return EmbeddingMatrix(vecs, users, signal)
    index = {u: i for i, u in enumerate(node_ids)}
    out = np.zeros((len(index), dim))
    present = np.zeros(len(index), dtype=bool)
    for u, v in zip(users, vecs):
        if u not in index:
            raise FormatError(f"{path}: user {u!r} not in registry")
        out[index[u]] = v
        present[index[u]] = True
    return EmbeddingMatrix(out, tuple(node_ids), signal, present=present)


def write_edgelist(g: SparseGraph, path) -> None:
    """``src<TAB>dst<TAB>weight`` with src the acting user and dst the target."""
    cols = g.node_ids or tuple(str(i) for i in range(g.shape[1]))
    rows = g.target_ids or (cols if g.square else tuple(str(i) for i in range(g.shape[0])))
    rid = g.row_ids()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        for r, c, v in zip(rid, g.indices, g.data):
            w.writerow([cols[c], rows[r], repr(float(v))])
