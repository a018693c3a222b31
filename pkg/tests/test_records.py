import json

import pytest
from hypothesis import given, strategies as st

from partygraph.records import (
    FormatError,
    InteractionRecord,
    RecordStore,
    SignalKind,
    UserRegistry,
    ingest_records,
    namespaced,
    parse_record,
    read_jsonl,
    write_jsonl,
)


def line(src, kind, tgt, weight=1, ts=None):
    obj = {"source": src, "kind": kind, "target": tgt, "weight": weight}
    if ts is not None:
        obj["ts"] = ts
    return json.dumps(obj)


def test_duplicates_sum_weights_and_keep_earliest_timestamp():
    store, reg = ingest_records([line("a", "retweet", "b", 2, ts=50), line("a", "retweet", "b", 3, ts=10)])
    assert store[("a", SignalKind.RETWEET, "b")] == (5, 10)
    assert reg.ids == ("a", "b")


def test_registry_is_first_seen_order():
    reg = UserRegistry()
    for u in ["c", "a", "c", "b"]:
        reg.add(u)
    assert reg.ids == ("c", "a", "b")
    assert reg.index("b") == 2
    with pytest.raises(KeyError):
        reg.index("zz")


def test_hashtag_targets_are_namespaced_and_not_registered():
    store, reg = ingest_records([line("a", "hashtag", "elxn44")])
    (rec,) = store.records()
    assert rec.target == "tag:elxn44"
    assert "tag:elxn44" not in reg
    assert namespaced(SignalKind.LIKE, "123") == "tweet:123"


def test_blank_lines_are_skipped():
    store, _ = ingest_records(["", line("a", "mention", "b"), "   "])
    assert len(store) == 1


@pytest.mark.parametrize(
    "bad, fragment",
    [
        ("{not json", "line 3"),
        (json.dumps({"source": "a", "kind": "poke", "target": "b"}), "poke"),
        (json.dumps({"source": "a", "kind": "retweet"}), "target"),
        (json.dumps({"source": "a", "kind": "retweet", "target": "b", "weight": 0}), "weight"),
    ],
)
def test_malformed_lines_name_the_line(bad, fragment):
    with pytest.raises(FormatError, match=fragment):
        ingest_records([line("a", "retweet", "b"), line("b", "retweet", "a"), bad])


def test_parse_record_kind_is_case_insensitive():
    rec = parse_record(line("a", "ReTweet", "b"))
    assert rec.kind is SignalKind.RETWEET


def test_jsonl_round_trip(tmp_path):
    store, _ = ingest_records([line("b", "retweet", "a", 2), line("a", "like", "9", 1, ts=4)])
    path = tmp_path / "r.jsonl"
    write_jsonl(store.records(), path)
    again, _ = read_jsonl(path)
    assert again == store


def test_activity_counts_weights_per_source():
    store, _ = ingest_records([line("a", "retweet", "b", 2), line("a", "retweet", "c"), line("b", "retweet", "a")])
    assert store.activity("retweet") == {"a": 3, "b": 1}


users = st.sampled_from(["a", "b", "c", "d"])
kinds = st.sampled_from(["retweet", "mention", "follow"])
records = st.lists(st.tuples(users, kinds, users, st.integers(1, 5)), max_size=30)


@given(records, records)
def test_merge_is_order_independent(r1, r2):
    s1 = RecordStore.from_records(InteractionRecord(s, SignalKind(k), t, w) for s, k, t, w in r1)
    s2 = RecordStore.from_records(InteractionRecord(s, SignalKind(k), t, w) for s, k, t, w in r2)
    assert s1.merge(s2) == s2.merge(s1)
    assert sum(w for w, _ in s1.merge(s2).values()) == sum(r[3] for r in r1 + r2)
