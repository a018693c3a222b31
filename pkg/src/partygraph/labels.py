"""Class registries, labeled user sets and per-node label distributions."""

from __future__ import annotations

import csv
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .records import FormatError, UserRegistry

PROVENANCES = ("manual", "weak", "external")
USER_TYPES = ("public", "politician")

ABSTAIN = -1


class ClassRegistry:
    """Maps class indices 0..K-1 to class names."""

    def __init__(self, names: Iterable[str]):
        self.names: tuple[str, ...] = tuple(names)
        if len(self.names) < 2:
            raise ValueError(f"need at least 2 classes, got {len(self.names)}")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"class names must be unique: {self.names}")
        self._index = {n: i for i, n in enumerate(self.names)}

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown class {name!r} (known: {', '.join(self.names)})") from None

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ClassRegistry) and self.names == other.names

    def __repr__(self) -> str:
        return f"ClassRegistry({list(self.names)})"


@dataclass(frozen=True)
class LabelEntry:
    label: int
    provenance: str = "manual"
    user_type: str = "public"

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}, got {self.provenance!r}")
        if self.user_type not in USER_TYPES:
            raise ValueError(f"user_type must be one of {USER_TYPES}, got {self.user_type!r}")


class LabeledUserSet(Mapping):
    """One label per user, with provenance and user type."""

    def __init__(self, classes: ClassRegistry, entries: Mapping[str, LabelEntry] | None = None):
        self.classes = classes
        self._entries: dict[str, LabelEntry] = {}
        for uid, entry in (entries or {}).items():
            self._check(entry)
            self._entries[uid] = entry

    def _check(self, entry: LabelEntry) -> None:
        if not 0 <= entry.label < len(self.classes):
            raise ValueError(f"label index {entry.label} out of range for K={len(self.classes)}")

    def __getitem__(self, uid: str) -> LabelEntry:
        return self._entries[uid]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, LabeledUserSet)
            and self.classes == other.classes
            and self._entries == other._entries
        )

    def label_of(self, uid: str) -> int:
        return self._entries[uid].label

    def subset(self, users: Iterable[str]) -> LabeledUserSet:
        return LabeledUserSet(self.classes, {u: self._entries[u] for u in users if u in self._entries})

    def where(self, *, user_type: str | None = None, provenance: str | None = None) -> LabeledUserSet:
        return LabeledUserSet(
            self.classes,
            {
                u: e
                for u, e in self._entries.items()
                if (user_type is None or e.user_type == user_type)
                and (provenance is None or e.provenance == provenance)
            },
        )

    def class_counts(self) -> dict[str, int]:
        counts = dict.fromkeys(self.classes.names, 0)
        for e in self._entries.values():
            counts[self.classes.names[e.label]] += 1
        return counts


def load_labels(
    path: str | Path,
    classes: ClassRegistry | Sequence[str] | None = None,
    registry: UserRegistry | None = None,
    register_unknown: bool = False,
) -> LabeledUserSet:
    """Read a label CSV with header ``user,label,provenance,user_type``.

    Without an explicit class list, classes are inferred from the file and
    sorted by name so that independent files agree on indices. When a
    registry is given, users missing from it are rejected unless
    ``register_unknown`` is set, in which case they are appended.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
        fields = set(rows[0].keys()) if rows else set()
    if rows and not {"user", "label"} <= fields:
        raise FormatError(f"{path}: label CSV needs columns user,label[,provenance,user_type]")
    if classes is None:
        classes = ClassRegistry(sorted({r["label"] for r in rows}))
    elif not isinstance(classes, ClassRegistry):
        classes = ClassRegistry(classes)

    entries: dict[str, LabelEntry] = {}
    for lineno, row in enumerate(rows, start=2):
        uid, name = row["user"], row["label"]
        if name not in classes:
            raise FormatError(f"{path}:{lineno}: unknown class {name!r}")
        if registry is not None and uid not in registry:
            if not register_unknown:
                raise FormatError(f"{path}:{lineno}: user {uid!r} not in registry")
            registry.add(uid)
        try:
            entry = LabelEntry(
                classes.index(name),
                row.get("provenance") or "manual",
                row.get("user_type") or "public",
            )
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        prev = entries.get(uid)
        if prev is not None and prev.label != entry.label:
            raise FormatError(
                f"{path}:{lineno}: conflicting labels for {uid!r}: "
                f"{classes.names[prev.label]} vs {name}"
            )
        entries[uid] = entry
    return LabeledUserSet(classes, entries)


def save_labels(labels: LabeledUserSet, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "label", "provenance", "user_type"])
        for uid, e in labels.items():
            w.writerow([uid, labels.classes.names[e.label], e.provenance, e.user_type])


class LabelDistribution:
    """N x K score matrix with entries in [0, 1] and row sums at most 1."""

    TOL = 1e-9

    def __init__(self, scores: np.ndarray, classes: ClassRegistry, node_ids: Sequence[str] | None = None):
        scores = np.asarray(scores, dtype=np.float64)
        if scores.ndim != 2 or scores.shape[1] != len(classes):
            raise ValueError(f"scores must be N x {len(classes)}, got {scores.shape}")
        if scores.size and (scores.min() < -self.TOL or scores.max() > 1 + self.TOL):
            raise ValueError("scores must lie in [0, 1]")
        if scores.size and scores.sum(axis=1).max() > 1 + self.TOL:
            raise ValueError("row sums must not exceed 1")
        if node_ids is not None and len(node_ids) != scores.shape[0]:
            raise ValueError("node_ids length does not match score rows")
        self.scores = scores
        self.classes = classes
        self.node_ids = tuple(node_ids) if node_ids is not None else None

    def __len__(self) -> int:
        return self.scores.shape[0]


def predict(dist: LabelDistribution | np.ndarray, abstain_threshold: float = 0.0) -> np.ndarray:
    """Argmax per row; ties go to the lowest class index.

    Rows whose maximum score is <= ``abstain_threshold`` get ``ABSTAIN``.
    """
    scores = dist.scores if isinstance(dist, LabelDistribution) else np.asarray(dist)
    if scores.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    pred = np.argmax(scores, axis=1).astype(np.int64)
    pred[scores.max(axis=1) <= abstain_threshold] = ABSTAIN
    return pred


def write_predictions(dist: LabelDistribution, path: str | Path, abstain_threshold: float = 0.0) -> None:
    """Write ``user,predicted_label,score,abstained`` rows."""
    if dist.node_ids is None:
        raise ValueError("distribution has no node ids to write")
    pred = predict(dist, abstain_threshold)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "predicted_label", "score", "abstained"])
        for i, uid in enumerate(dist.node_ids):
            if pred[i] == ABSTAIN:
                w.writerow([uid, "", f"{dist.scores[i].max() if dist.scores.shape[1] else 0.0:.17g}", 1])
            else:
                w.writerow([uid, dist.classes.names[pred[i]], f"{dist.scores[i, pred[i]]:.17g}", 0])


def read_predictions(path: str | Path) -> dict[str, str | None]:
    """Map user -> predicted class name, or None for abstentions."""
    out: dict[str, str | None] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["user"]] = None if row["abstained"] in ("1", "true", "True") else row["predicted_label"]
    return out
