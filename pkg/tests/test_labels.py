import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from partygraph.labels import (
    ABSTAIN,
    ClassRegistry,
    LabelDistribution,
    load_labels,
    predict,
    read_predictions,
    save_labels,
    write_predictions,
)
from partygraph.records import FormatError, UserRegistry


def write(tmp_path, text, name="l.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_inferred_classes_are_sorted(tmp_path):
    p = write(tmp_path, "user,label\na,R\nb,D\n")
    labels = load_labels(p)
    assert labels.classes.names == ("D", "R")
    assert labels.label_of("a") == 1


def test_unknown_class_is_rejected(tmp_path):
    p = write(tmp_path, "user,label\na,X\n")
    with pytest.raises(FormatError, match="unknown class 'X'"):
        load_labels(p, classes=["D", "R"])


def test_conflicting_duplicate_is_rejected(tmp_path):
    p = write(tmp_path, "user,label\na,D\na,R\n")
    with pytest.raises(FormatError, match="conflicting"):
        load_labels(p)


def test_registry_membership(tmp_path):
    p = write(tmp_path, "user,label\na,D\nz,R\n")
    reg = UserRegistry(["a"])
    with pytest.raises(FormatError, match="'z' not in registry"):
        load_labels(p, registry=reg)
    load_labels(p, registry=reg, register_unknown=True)
    assert reg.ids == ("a", "z")


def test_round_trip_keeps_provenance_and_type(tmp_path):
    p = write(tmp_path, "user,label,provenance,user_type\na,D,weak,politician\nb,R,manual,public\n")
    labels = load_labels(p)
    out = tmp_path / "o.csv"
    save_labels(labels, out)
    again = load_labels(out)
    assert again == labels
    assert again["a"].user_type == "politician"
    assert set(again.where(provenance="weak")) == {"a"}


def test_class_registry_needs_two_unique_names():
    with pytest.raises(ValueError):
        ClassRegistry(["only"])
    with pytest.raises(ValueError):
        ClassRegistry(["a", "a"])


def test_distribution_validation():
    classes = ClassRegistry(["D", "R"])
    with pytest.raises(ValueError, match="row sums"):
        LabelDistribution(np.array([[0.7, 0.7]]), classes)
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        LabelDistribution(np.array([[-0.5, 0.1]]), classes)


def test_predict_ties_and_abstain():
    scores = np.array([[0.3, 0.3], [0.0, 0.0], [0.1, 0.4], [0.2, 0.1]])
    assert predict(scores).tolist() == [0, ABSTAIN, 1, 0]
    assert predict(scores, abstain_threshold=0.25).tolist() == [0, ABSTAIN, 1, ABSTAIN]


def test_prediction_file_round_trip(tmp_path):
    dist = LabelDistribution(np.array([[0.0, 0.0], [0.2, 0.8]]), ClassRegistry(["D", "R"]), ["a", "b"])
    p = tmp_path / "p.csv"
    write_predictions(dist, p)
    assert read_predictions(p) == {"a": None, "b": "R"}


@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(2, 5)), elements=st.floats(0, 1)))
def test_predict_is_argmax_or_abstain(raw):
    pred = predict(raw)
    for row, p in zip(raw, pred):
        if row.max() <= 0:
            assert p == ABSTAIN
        else:
            assert p == int(np.flatnonzero(row == row.max())[0])
