import csv
import json
from pathlib import Path

import pytest

from sparcas.cli import (
    ExperimentSpec, SpecError, aggregate, expand, load_preset, load_spec, main, parse_trace,
    preset_names, read_csv, reconcile, TraceError,
)

SMALL = {
    "name": "small",
    "seeds": 2,
    "timeout": 30,
    "templates": [
        {"width": 16, "height": 16, "n": 6},
        {"width": 16, "height": 16, "n": 6, "mechanism": "prioritized"},
        {"width": 30, "height": 30, "n": 12, "arrival": "uniform"},
    ],
}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    spec = root / "spec.json"
    spec.write_text(json.dumps(SMALL))
    out = root / "out"
    code = main(["run", str(spec), "--out", str(out), "--jobs", "1"])
    return code, out


# spec loading ------------------------------------------------------------------

@pytest.mark.parametrize("bad, message", [
    ([], "top level"),
    ({"templates": [{}]}, "missing field 'name'"),
    ({"name": "x", "templates": []}, "non-empty"),
    ({"name": "x", "templates": [{}], "seeds": 0}, "'seeds'"),
    ({"name": "x", "templates": [{}], "timeout": -1}, "'timeout'"),
    ({"name": "x", "templates": [{}], "outputs": ["plots"]}, "'outputs'"),
    ({"name": "x", "templates": [{}], "color": 1}, "unknown fields"),
    ({"name": "x", "templates": [{"n": 3}, {"mechanism": "magic"}]}, "templates\\[1\\]"),
])
def test_spec_errors(bad, message):
    with pytest.raises(SpecError, match=message):
        ExperimentSpec.from_dict(bad)


def test_spec_file_json_error(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{"name": "x",\n "templates": [}\n')
    with pytest.raises(SpecError, match="line 2"):
        load_spec(str(p))
    with pytest.raises(SpecError, match="cannot read"):
        load_spec(str(tmp_path / "missing.json"))


def test_presets_load():
    names = preset_names()
    assert {"scalability", "comparison", "class-delays", "dynamic", "payments"} <= set(names)
    for name in names:
        assert load_preset(name).templates
    with pytest.raises(SpecError, match="available"):
        load_preset("nope")


def test_expand_seeds_and_desk_scale(monkeypatch):
    spec = load_preset("scalability")
    jobs = expand(spec, seeds=2)
    assert {d["width"] for _, d in jobs} == {100}
    assert len(expand(spec, seeds=2, full=True)) > len(jobs)
    monkeypatch.setenv("SPARCAS_SEED_BASE", "1000")
    assert {d["seed"] for _, d in expand(spec, seeds=2)} == {1000, 1001}


def test_bad_spec_exit_code(tmp_path, capsys):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"name": "x"}))
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "missing field 'templates'" in capsys.readouterr().err


# run outputs -------------------------------------------------------------------

def test_run_writes_tables(small_run):
    code, out = small_run
    assert code == 0
    for name in ("runs", "scalability", "comparison", "class_delays", "dynamic", "payments"):
        assert (out / f"{name}.csv").read_text().startswith(f"# sparcas-csv v1 {name}\n")
    rows = read_csv(out / "runs.csv")
    assert len(rows) == 3 * 2
    assert all(r["collisions"] == "0" for r in rows)
    assert len(list((out / "traces").glob("*.trace"))) == 6


def test_aggregates_recompute_from_runs(small_run):
    _, out = small_run
    rows = read_csv(out / "runs.csv")
    table = read_csv(out / "comparison.csv")
    for agg in table:
        group = [r for r in rows if (r["workspace"], r["n"], r["mechanism"]) ==
                 (agg["workspace"], agg["n"], agg["mechanism"])]
        assert int(agg["runs"]) == len(group)
        for f in ("makespan", "mean_path_exec", "planning_time"):
            mean = sum(float(r[f]) for r in group) / len(group)
            assert float(agg[f]) == pytest.approx(mean, rel=1e-12)


def test_aggregate_counts_timeouts():
    rows = [{"k": 1, "x": 2, "timed_out": 1}, {"k": 1, "x": 4, "timed_out": 0}]
    assert aggregate(rows, ["k"], ["x"]) == [{"k": 1, "x": 3.0, "runs": 2, "timeouts": 1}]


def test_read_csv_requires_schema(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(SpecError):
        read_csv(p)


# replay ------------------------------------------------------------------------

def _a_trace(out):
    return sorted((out / "traces").glob("*sparcas*.trace"))[0]


def test_replay_matches(small_run, capsys):
    _, out = small_run
    for trace in sorted((out / "traces").glob("*.trace")):
        assert main(["replay", str(trace)]) == 0
    assert "replay matches" in capsys.readouterr().out


def test_replay_truncated(small_run, tmp_path, capsys):
    text = _a_trace(small_run[1]).read_text()
    cut = tmp_path / "cut.trace"
    cut.write_text(text[: len(text) // 2])
    assert main(["replay", str(cut)]) == 2
    assert "line" in capsys.readouterr().err


def test_replay_missing_end(small_run, tmp_path, capsys):
    lines = _a_trace(small_run[1]).read_text().splitlines()
    p = tmp_path / "noend.trace"
    p.write_text("\n".join(lines[:-1]) + "\n")
    assert main(["replay", str(p)]) == 2
    assert "truncated" in capsys.readouterr().err


def _tamper(text, column, new):
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if not line.startswith("#"):
            parts = line.split("\t")
            parts[column] = new
            lines[i] = "\t".join(parts)
            break
    return "\n".join(lines) + "\n"


def test_replay_tampered_payment(small_run, tmp_path, capsys):
    p = tmp_path / "pay.trace"
    p.write_text(_tamper(_a_trace(small_run[1]).read_text(), 5, "1/7"))
    assert main(["replay", str(p)]) == 3
    assert "reconciliation" in capsys.readouterr().err


def test_replay_tampered_action(small_run, tmp_path, capsys):
    text = _a_trace(small_run[1]).read_text()
    first = next(line for line in text.splitlines() if not line.startswith("#"))
    flipped = "S" if first.split("\t")[3] == "A" else "A"
    p = tmp_path / "act.trace"
    p.write_text(_tamper(text, 3, flipped))
    assert main(["replay", str(p)]) == 1
    assert "divergence at line 2" in capsys.readouterr().err


def test_parse_trace_errors():
    with pytest.raises(TraceError, match="line 1"):
        parse_trace("hello\n")
    assert reconcile([["0", "1", "2", "A", "1", "1/2", "0"]], 0) is not None
    assert reconcile([["0", "1", "2", "A", "1", "1/2", "0"]], __import__("fractions").Fraction(1, 2)) is None


# verify ------------------------------------------------------------------------

def test_verify_mutation_payment_sign(tmp_path, capsys):
    assert main(["verify", "--mutate", "payment-sign", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr()
    assert "truthfulness" in err.out + err.err
    assert (tmp_path / "verify_failures.json").exists()


def test_verify_mutation_tie_break(tmp_path, capsys):
    assert main(["verify", "--mutate", "tie-break", "--out", str(tmp_path)]) == 1
    text = "".join(capsys.readouterr())
    assert "determinism" in text


def test_cli_help():
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
