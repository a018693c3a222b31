"""Keyword rules that turn profile descriptions into weak seed labels."""

from __future__ import annotations

import csv
import json
import re
import unicodedata
from collections.abc import Mapping, Sequence
from pathlib import Path

from .labels import ClassRegistry, LabeledUserSet, LabelEntry
from .records import FormatError

US_KEYWORDS = {
    "D": ["liberal", "progressive", "democrat", "biden"],
    "R": ["conservative", "gop", "republican", "trump"],
}

CANADA_KEYWORDS = {
    "GPC": ["annamie paul", "green party", "gpc", "gpc2019", "gpc2021", "green party of canada"],
    "NDP": ["jagmeeet singh", "jagmeet singh", "new democrat", "new democrats", "new democratic party",
            "ndp", "ndp2021", "ndp2019"],
    "LPC": ["justin trudeau", "liberal", "liberal party", "lpc", "lpc2021", "lpc2019",
            "liberal party of canada"],
    "CPC": ["erin o'toole", "andrew scheer", "conservative", "conservative party", "cpc", "cpc2021",
            "cpc2019", "conservative party of canada"],
    "PPC": ["maxime bernier", "people's party", "ppc", "ppc2019", "ppc2021", "people's party of canada"],
}

UNKNOWN = None


def normalize(text: str) -> str:
    text = unicodedata.normalize("NFKC", text).casefold()
    # typographic apostrophes, as in "o’toole"
    return text.replace("’", "'").replace("‘", "'")


class KeywordRule:
    """Per-class keyword lists matched on alphanumeric word boundaries."""

    def __init__(self, keywords: Mapping[str, Sequence[str]]):
        self.keywords: dict[str, tuple[str, ...]] = {}
        owner: dict[str, str] = {}
        for cls, words in keywords.items():
            norm = []
            for w in words:
                w = normalize(w).strip()
                if not w:
                    continue
                if w in owner and owner[w] != cls:
                    raise ValueError(f"keyword {w!r} listed for both {owner[w]} and {cls}")
                owner[w] = cls
                if w not in norm:
                    norm.append(w)
            self.keywords[cls] = tuple(norm)
        self.classes = ClassRegistry(self.keywords)
        self._patterns = {
            cls: re.compile("|".join(
                r"(?<![^\W_])" + re.escape(w) + r"(?![^\W_])" for w in sorted(ws, key=len, reverse=True)
            )) if ws else None
            for cls, ws in self.keywords.items()
        }

    @classmethod
    def from_json(cls, path: str | Path) -> KeywordRule:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict) or not all(isinstance(v, list) for v in data.values()):
            raise FormatError(f"{path}: rule file must be an object of keyword lists")
        return cls(data)

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({c: list(ws) for c, ws in self.keywords.items()}, fh, indent=2)

    def matches(self, description: str) -> dict[str, bool]:
        text = normalize(description)
        return {c: bool(p and p.search(text)) for c, p in self._patterns.items()}

    def classify(self, description: str) -> str | None:
        hits = [c for c, hit in self.matches(description).items() if hit]
        return hits[0] if len(hits) == 1 else UNKNOWN


def us_rule() -> KeywordRule:
    return KeywordRule(US_KEYWORDS)


def canada_rule() -> KeywordRule:
    return KeywordRule(CANADA_KEYWORDS)


def classify_profile(description: str, rule: KeywordRule | None = None) -> str | None:
    """Class name if exactly one class has a keyword match, else None."""
    return (rule or us_rule()).classify(description)


def seed_from_profiles(
    path: str | Path, rule: KeywordRule | None = None
) -> tuple[LabeledUserSet, dict[str, int]]:
    """Weak labels from a ``user,description`` CSV, plus per-class counts (incl. Unknown)."""
    rule = rule or us_rule()
    entries: dict[str, LabelEntry] = {}
    counts = dict.fromkeys(rule.classes.names, 0)
    counts["Unknown"] = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return LabeledUserSet(rule.classes), counts
        if [h.strip() for h in header[:2]] != ["user", "description"]:
            raise FormatError(f"{path}: expected header 'user,description', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            user, desc = row
            cls = rule.classify(desc)
            if cls is None:
                counts["Unknown"] += 1
                continue
            counts[cls] += 1
            entries[user] = LabelEntry(rule.classes.index(cls), "weak", "public")
    return LabeledUserSet(rule.classes, entries), counts
