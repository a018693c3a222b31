import argparse
import csv
import json

import pytest

from partygraph.cli import build_parser, main, stage_seed


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("fx")
    assert main(["synth", "--seed", "1", "--blocks", "200,200", "--p-in", "0.05", "--p-out", "0.005",
                 "--out", str(d / "data")]) == 0
    assert main(["build-graph", "--input", str(d / "data" / "interactions.jsonl"), "--kind", "retweet",
                 "--users", str(d / "data" / "users.csv"), "--out", str(d / "g.pgg")]) == 0
    return d


def subparsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def test_help_documents_every_flag():
    parser = build_parser()
    commands = subparsers(parser)
    assert set(commands) >= {"ingest", "build-graph", "project", "propagate", "train-gcn", "fuse", "classify",
                             "weak-label", "evaluate", "cost-plan", "polarization", "synth"}
    for name, sp in commands.items():
        text = sp.format_help()
        for action in sp._actions:
            for opt in action.option_strings:
                assert opt in text, f"{name}: {opt} missing from help"
            if action.option_strings and action.help != argparse.SUPPRESS:
                assert action.help, f"{name}: {action.option_strings} has no help text"


def test_end_to_end_accuracy_is_printed(fixture_dir, capsys, tmp_path):
    d = fixture_dir
    assert run(capsys, "propagate", "--graph", d / "g.pgg", "--seeds", d / "data" / "seeds.csv",
               "--out", tmp_path / "p.csv")[0] == 0
    code, out, _ = run(capsys, "evaluate", "--gold", d / "data" / "gold.csv", "--predictions", tmp_path / "p.csv",
                       "--exclude", d / "data" / "seeds.csv", "--json")
    assert code == 0
    assert json.loads(out)["accuracy"] >= 0.95


def test_one_iteration_matches_majority_vote(fixture_dir, tmp_path):
    d = fixture_dir
    common = ["--graph", str(d / "g.pgg"), "--seeds", str(d / "data" / "seeds.csv")]
    assert main(["propagate", *common, "--iterations", "1", "--out", str(tmp_path / "lp.csv")]) == 0
    assert main(["majority-vote", *common, "--out", str(tmp_path / "mv.csv")]) == 0

    def rows(p):
        with open(p, newline="") as fh:
            return [(r["user"], r["predicted_label"], r["abstained"]) for r in csv.DictReader(fh)]

    assert rows(tmp_path / "lp.csv") == rows(tmp_path / "mv.csv")


def test_cost_plan_relations(capsys, tmp_path):
    counts = tmp_path / "c.csv"
    counts.write_text("user,count\n" + "".join(f"u{i},{(i * 37) % 5001}\n" for i in range(100)))
    code, out, _ = run(capsys, "cost-plan", "--endpoint", "relations", "--counts", counts)
    assert code == 0 and out.startswith("15.0 ")


def test_gcn_fuse_classify_chain(fixture_dir, tmp_path, capsys):
    d = fixture_dir
    emb = tmp_path / "e.tsv"
    assert main(["train-gcn", "--graph", str(d / "g.pgg"), "--seeds", str(d / "data" / "seeds.csv"), "--seed", "3",
                 "--epochs", "20", "--hidden-dim", "8", "--signal", "retweet", "--log", str(tmp_path / "log.csv"),
                 "--out", str(emb)]) == 0
    assert (tmp_path / "log.csv").read_text().count("\n") == 21
    assert main(["fuse", "--embeddings", str(emb), "--out", str(tmp_path / "f.tsv")]) == 0
    assert main(["classify", "--features", str(tmp_path / "f.tsv"), "--train-labels", str(d / "data" / "seeds.csv"),
                 "--seed", "2", "--trees", "20", "--out", str(tmp_path / "c.csv")]) == 0
    capsys.readouterr()
    code, out, _ = run(capsys, "evaluate", "--gold", d / "data" / "gold.csv", "--predictions", tmp_path / "c.csv",
                       "--exclude", d / "data" / "seeds.csv", "--json")
    assert json.loads(out)["accuracy"] > 0.8


def test_outputs_are_byte_identical(fixture_dir, tmp_path):
    d = fixture_dir
    for k in (1, 2):
        assert main(["propagate", "--graph", str(d / "g.pgg"), "--seeds", str(d / "data" / "seeds.csv"),
                     "--out", str(tmp_path / f"p{k}.csv")]) == 0
        assert main(["synth", "--seed", "5", "--blocks", "30,30", "--out", str(tmp_path / f"s{k}")]) == 0
    assert (tmp_path / "p1.csv").read_bytes() == (tmp_path / "p2.csv").read_bytes()
    for f in ("interactions.jsonl", "gold.csv", "seeds.csv"):
        assert (tmp_path / "s1" / f).read_bytes() == (tmp_path / "s2" / f).read_bytes()


def test_experiment_plan(fixture_dir, tmp_path, capsys):
    d = fixture_dir
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"repetitions": 3, "method": "lp"}))
    code, out, _ = run(capsys, "evaluate", "--gold", d / "data" / "gold.csv", "--plan", plan, "--graph", d / "g.pgg",
                       "--seed", 4, "--results", tmp_path / "r.csv")
    assert code == 0 and "over 3 runs" in out
    header, row = (tmp_path / "r.csv").read_text().splitlines()
    assert header.startswith("method,signal,acc_mean") and row.endswith(",")


def test_weak_label_preset(tmp_path, capsys):
    prof = tmp_path / "p.csv"
    prof.write_text("user,description\na,Vote NDP\nb,CPC2021\nc,hockey\n")
    code, out, _ = run(capsys, "weak-label", "--profiles", prof, "--preset", "canada", "--out", tmp_path / "l.csv",
                       "--json")
    assert code == 0
    assert json.loads(out)["counts"]["Unknown"] == 1


@pytest.mark.parametrize(
    "argv, kind",
    [
        (["propagate", "--graph", "missing.pgg", "--seeds", "s.csv", "--out", "o.csv"], "missing-input"),
        (["synth", "--out", "x"], "usage"),
        (["frobnicate"], "usage"),
    ],
)
def test_errors_are_single_line(argv, kind, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, out, err = run(capsys, *argv)
    assert code != 0
    assert err.count("\n") == 1 and err.startswith(f"error: {kind}: ")


def test_invalid_config_field_is_named(fixture_dir, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"propagation": {"alpah": 0.3}}))
    code, _, err = run(capsys, "propagate", "--config", cfg, "--graph", fixture_dir / "g.pgg",
                       "--seeds", fixture_dir / "data" / "seeds.csv", "--out", tmp_path / "o.csv")
    assert code != 0 and "propagation.alpah" in err


def test_version_mismatch_is_named(fixture_dir, tmp_path, capsys):
    raw = bytearray((fixture_dir / "g.pgg").read_bytes())
    raw[4] = 7
    bad = tmp_path / "g.pgg"
    bad.write_bytes(bytes(raw))
    code, _, err = run(capsys, "project", "--graph", bad, "--out", tmp_path / "p.pgg")
    assert code != 0 and err.startswith("error: version-mismatch:")


def test_config_file_supplies_defaults_and_seed(fixture_dir, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 11, "sbm": {"block_sizes": [20, 20], "p_in": 0.3}}))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["synth", "--seed", "11", "--blocks", "20,20", "--p-in", "0.3", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "interactions.jsonl").read_bytes() == (tmp_path / "b" / "interactions.jsonl").read_bytes()


def test_stage_seeds_differ_by_stage():
    assert stage_seed(1, "gcn") != stage_seed(1, "forest")
    assert stage_seed(1, "gcn") == stage_seed(1, "gcn")


def test_schema_lists_config_sections():
    from pathlib import Path

    from partygraph.cli import CONFIG_SECTIONS
    import dataclasses

    schema = json.loads((Path(__file__).parents[1] / "docs" / "run_config.schema.json").read_text())
    for name, cls in CONFIG_SECTIONS.items():
        props = schema["properties"][name]["properties"]
        assert set(props) == {f.name for f in dataclasses.fields(cls)}, name
