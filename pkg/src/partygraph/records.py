"""Interaction records, the user registry, and JSONL ingestion."""

from __future__ import annotations

import enum
import json
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass
from pathlib import Path


class FormatError(ValueError):
    """Raised when an input file does not match its declared format."""


class SignalKind(str, enum.Enum):
    RETWEET = "retweet"
    MENTION = "mention"
    QUOTE = "quote"
    HASHTAG = "hashtag"
    LIKE = "like"
    FRIEND = "friend"
    FOLLOW = "follow"

    @property
    def user_target(self) -> bool:
        """Whether targets of this kind are users (as opposed to tags or tweets)."""
        return self not in (SignalKind.HASHTAG, SignalKind.LIKE)

    @property
    def namespace(self) -> str:
        return {SignalKind.HASHTAG: "tag:", SignalKind.LIKE: "tweet:"}.get(self, "")

    @classmethod
    def parse(cls, value: str | SignalKind) -> SignalKind:
        if isinstance(value, SignalKind):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown signal kind {value!r}") from None


def namespaced(kind: SignalKind, target: str) -> str:
    """Prefix non-user targets so they can never alias a user id."""
    prefix = kind.namespace
    if prefix and not target.startswith(prefix):
        return prefix + target
    return target


@dataclass(frozen=True)
class InteractionRecord:
    source: str
    kind: SignalKind
    target: str
    weight: int = 1
    timestamp: int | None = None

    def __post_init__(self):
        if self.weight < 1:
            raise ValueError(f"weight must be >= 1, got {self.weight}")

    def to_json(self) -> str:
        obj = {"source": self.source, "kind": self.kind.value, "target": self.target, "weight": self.weight}
        if self.timestamp is not None:
            obj["ts"] = self.timestamp
        return json.dumps(obj, sort_keys=True)


class UserRegistry:
    """Bijection between external user ids and dense indices 0..N-1.

    Indices are handed out in first-seen order.
    """

    def __init__(self, ids: Iterable[str] = ()):
        self._ids: list[str] = []
        self._index: dict[str, int] = {}
        for uid in ids:
            self.add(uid)

    def add(self, uid: str) -> int:
        idx = self._index.get(uid)
        if idx is None:
            idx = len(self._ids)
            self._ids.append(uid)
            self._index[uid] = idx
        return idx

    def index(self, uid: str) -> int:
        try:
            return self._index[uid]
        except KeyError:
            raise KeyError(f"unknown user {uid!r}") from None

    def get(self, uid: str, default: int | None = None) -> int | None:
        return self._index.get(uid, default)

    def user(self, idx: int) -> str:
        return self._ids[idx]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self._ids)

    def __contains__(self, uid: object) -> bool:
        return uid in self._index

    def __len__(self) -> int:
        return len(self._ids)

    def __iter__(self) -> Iterator[str]:
        return iter(self._ids)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, UserRegistry) and self._ids == other._ids

    def __repr__(self) -> str:
        return f"UserRegistry(n={len(self)})"


Key = tuple[str, SignalKind, str]


class RecordStore(Mapping):
    """Immutable multiset of interactions keyed by (source, kind, target).

    Duplicate keys have their weights summed; the earliest timestamp wins.
    Both rules are commutative, so shards can be merged in any order.
    """

    def __init__(self, entries: Mapping[Key, tuple[int, int | None]] | None = None):
        self._entries: dict[Key, tuple[int, int | None]] = dict(entries or {})

    @classmethod
    def from_records(cls, records: Iterable[InteractionRecord]) -> RecordStore:
        acc: dict[Key, tuple[int, int | None]] = {}
        for rec in records:
            _accumulate(acc, (rec.source, rec.kind, rec.target), rec.weight, rec.timestamp)
        return cls(acc)

    def merge(self, other: RecordStore) -> RecordStore:
        acc = dict(self._entries)
        for key, (w, ts) in other._entries.items():
            _accumulate(acc, key, w, ts)
        return RecordStore(acc)

    def __getitem__(self, key: Key) -> tuple[int, int | None]:
        return self._entries[key]

    def __iter__(self) -> Iterator[Key]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RecordStore) and self._entries == other._entries

    def records(self, kind: SignalKind | str | None = None) -> list[InteractionRecord]:
        """Records in canonical (sorted) order, optionally restricted to one kind."""
        if kind is not None:
            kind = SignalKind.parse(kind)
        out = [
            InteractionRecord(s, k, t, w, ts)
            for (s, k, t), (w, ts) in self._entries.items()
            if kind is None or k is kind
        ]
        out.sort(key=lambda r: (r.source, r.kind.value, r.target))
        return out

    def kinds(self) -> set[SignalKind]:
        return {k for _, k, _ in self._entries}

    def activity(self, kind: SignalKind | str) -> dict[str, int]:
        """Raw interaction count per source user for one kind."""
        kind = SignalKind.parse(kind)
        counts: dict[str, int] = {}
        for (s, k, _), (w, _) in self._entries.items():
            if k is kind:
                counts[s] = counts.get(s, 0) + w
        return counts


def _accumulate(acc: dict, key: Key, weight: int, ts: int | None) -> None:
    prev = acc.get(key)
    if prev is None:
        acc[key] = (weight, ts)
        return
    pw, pts = prev
    if pts is None:
        new_ts = ts
    elif ts is None:
        new_ts = pts
    else:
        new_ts = min(pts, ts)
    acc[key] = (pw + weight, new_ts)


def parse_record(line: str, lineno: int = 0) -> InteractionRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise FormatError(f"line {lineno}: expected a JSON object")
    try:
        source, kind_s, target = obj["source"], obj["kind"], obj["target"]
    except KeyError as exc:
        raise FormatError(f"line {lineno}: missing field {exc.args[0]!r}") from None
    try:
        kind = SignalKind.parse(kind_s)
    except ValueError as exc:
        raise FormatError(f"line {lineno}: {exc}") from None
    weight = obj.get("weight", 1)
    ts = obj.get("ts")
    if not isinstance(source, str) or not isinstance(target, str):
        raise FormatError(f"line {lineno}: source and target must be strings")
    if isinstance(weight, bool) or not isinstance(weight, int) or weight < 1:
        raise FormatError(f"line {lineno}: weight must be an integer >= 1")
    if ts is not None and (isinstance(ts, bool) or not isinstance(ts, int)):
        raise FormatError(f"line {lineno}: ts must be an integer")
    return InteractionRecord(source, kind, namespaced(kind, target), weight, ts)


def ingest_records(lines: Iterable[str]) -> tuple[RecordStore, UserRegistry]:
    """Parse JSONL interaction lines into a merged store and a user registry.

    Blank lines are skipped. The registry covers every source and every
    user-typed target, indexed in first-seen order.
    """
    registry = UserRegistry()
    acc: dict[Key, tuple[int, int | None]] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        rec = parse_record(line, lineno)
        registry.add(rec.source)
        if rec.kind.user_target:
            registry.add(rec.target)
        _accumulate(acc, (rec.source, rec.kind, rec.target), rec.weight, rec.timestamp)
    return RecordStore(acc), registry


def read_jsonl(path: str | Path) -> tuple[RecordStore, UserRegistry]:
    with open(path, encoding="utf-8") as fh:
        return ingest_records(fh)


def write_jsonl(records: Iterable[InteractionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
