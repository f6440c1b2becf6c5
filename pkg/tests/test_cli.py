import json

from contregen.cli import dispatch

from conftest import (
    ROOT_QUERY,
    contregen_fixtures,
    iterretgen_fixtures,
    retgen_fixtures,
    write_fixture_file,
)


def _run_cli(planted, tmp_path, fixtures, method="contregen", extra=()):
    fixture_path = write_fixture_file(tmp_path, fixtures, name=f"{method}.json")
    out_dir = tmp_path / f"out-{method}"
    code = dispatch(["run", "--method", method,
                     "--corpus", str(planted["corpus"]),
                     "--queries", str(planted["queries"]),
                     "--fixtures", str(fixture_path),
                     "--out-dir", str(out_dir), *extra])
    assert code == 0
    return out_dir


def test_no_command_is_usage_error(capsys):
    assert dispatch([]) == 1
    assert "usage" in capsys.readouterr().err


def test_help_exits_zero(capsys):
    assert dispatch(["--help"]) == 0
    assert "command" in capsys.readouterr().out


def test_unknown_command_and_bad_flag_exit_one(capsys):
    assert dispatch(["frobnicate"]) == 1
    assert dispatch(["eval"]) == 1  # missing required --trace
    assert dispatch(["run", "--method", "bogus"]) == 1
    err = capsys.readouterr().err
    assert "error:" in err


def test_ingest(planted, tmp_path, capsys):
    assert dispatch(["ingest", "--corpus", str(planted["corpus"])]) == 0
    assert "ingested 11 passages" in capsys.readouterr().out

    out_path = tmp_path / "normalized.jsonl"
    code = dispatch(["ingest", "--corpus", str(planted["corpus"]),
                     "--out", str(out_path), "--format", "structured"])
    assert code == 0
    assert json.loads(capsys.readouterr().out) == {"passages": 11}
    assert len(out_path.read_text(encoding="utf-8").splitlines()) == 11


def test_ingest_missing_file_exits_two(tmp_path, capsys):
    assert dispatch(["ingest", "--corpus", str(tmp_path / "absent.jsonl")]) == 2
    assert "data error" in capsys.readouterr().err


def test_run_missing_fixture_file_exits_one(planted, tmp_path, capsys):
    code = dispatch(["run", "--corpus", str(planted["corpus"]),
                     "--queries", str(planted["queries"]),
                     "--fixtures", str(tmp_path / "absent.json"),
                     "--out-dir", str(tmp_path / "out")])
    assert code == 1
    assert "fixtures_path" in capsys.readouterr().err


def test_build_wikihow(tmp_path, capsys):
    articles = tmp_path / "articles.jsonl"
    with articles.open("w", encoding="utf-8") as fh:
        for n in range(3):
            fh.write(json.dumps({
                "title": f"how to do task {n}",
                "summary": f"summary of task {n}",
                "methods": [
                    {"title": f"method {m} for task {n}",
                     "steps": [f"task {n} method {m} step {s} text"
                               for s in range(3)]}
                    for m in range(2)
                ],
            }) + "\n")
    out_corpus = tmp_path / "corpus.jsonl"
    out_queries = tmp_path / "queries.jsonl"
    code = dispatch(["build-wikihow", "--articles", str(articles),
                     "--out-corpus", str(out_corpus),
                     "--out-queries", str(out_queries),
                     "--format", "structured"])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary == {"articles": 3, "passages": 18, "queries": 3,
                       "avg_gold_per_query": 6.0}
    assert len(out_corpus.read_text().splitlines()) == 18
    assert len(out_queries.read_text().splitlines()) == 3


def test_run_and_eval(planted, tmp_path, capsys):
    out_dir = _run_cli(planted, tmp_path, contregen_fixtures())
    assert "ran 1 queries (0 failed)" in capsys.readouterr().out
    trace_path = out_dir / "trace.json"
    assert trace_path.exists()

    assert dispatch(["eval", "--trace", str(trace_path)]) == 0
    table = capsys.readouterr().out
    assert "q-planted" in table
    assert table.splitlines()[-1].startswith("mean")

    assert dispatch(["eval", "--trace", str(trace_path),
                     "--queries", str(planted["queries"]),
                     "--format", "structured"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["per_query"]["q-planted"]["recall"] == 1.0
    assert report["aggregates"]["recall"] == 1.0


def test_eval_without_report_needs_queries(tmp_path, capsys):
    trace_path = tmp_path / "trace.json"
    trace_path.write_text(json.dumps({"config": {}, "queries": {}, "report": None}),
                          encoding="utf-8")
    assert dispatch(["eval", "--trace", str(trace_path)]) == 2
    assert "pass --queries" in capsys.readouterr().err


def test_analyze_reach(planted, tmp_path, capsys):
    code = dispatch(["analyze-reach", "--corpus", str(planted["corpus"]),
                     "--queries", str(planted["queries"]),
                     "--format", "structured"])
    assert code == 0
    rows = json.loads(capsys.readouterr().out)["queries"]
    assert rows == [{"query": "q-planted",
                     "rep": ["a1", "a2", "a3"],
                     "nrep": ["b1", "b2", "b3", "c1", "c2", "c3"]}]

    out_dir = _run_cli(planted, tmp_path, contregen_fixtures())
    capsys.readouterr()
    code = dispatch(["analyze-reach", "--corpus", str(planted["corpus"]),
                     "--queries", str(planted["queries"]),
                     "--trace", str(out_dir / "trace.json")])
    assert code == 0
    line = capsys.readouterr().out
    assert "reachable 3" in line
    assert "non-reachable 6" in line
    assert "recall rep=1.0000 nrep=1.0000" in line


def test_analyze_facets(planted, tmp_path, capsys):
    out_dir = _run_cli(planted, tmp_path, contregen_fixtures())
    capsys.readouterr()
    code = dispatch(["analyze-facets", "--trace", str(out_dir / "trace.json"),
                     "--queries", str(planted["queries"])])
    assert code == 0
    assert "facet coverage 1.0000" in capsys.readouterr().out

    partial = tmp_path / "partial.json"
    partial.write_text(json.dumps(
        {"queries": {"q-planted": {"retrieved_ids": ["a1", "b1"]}}}),
        encoding="utf-8")
    code = dispatch(["analyze-facets", "--trace", str(partial),
                     "--queries", str(planted["queries"]),
                     "--format", "structured"])
    assert code == 0
    data = json.loads(capsys.readouterr().out)
    assert abs(data["mean_coverage"] - 2.0 / 3.0) < 1e-12


def test_curve(planted, tmp_path, capsys):
    out_dir = _run_cli(planted, tmp_path, iterretgen_fixtures(),
                       method="iterretgen")
    capsys.readouterr()
    code = dispatch(["curve", "--trace", str(out_dir / "trace.json"),
                     "--queries", str(planted["queries"])])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "method," + ",".join(f"round_{i}" for i in range(1, 6))
    by_name = dict(line.split(",", 1) for line in lines[1:])
    rounds = by_name["q-planted"].split(",")
    assert rounds == ["0.333333"] * 5  # plateau: later rounds add nothing
    assert by_name["mean"].split(",") == rounds


def test_export_tree(planted, tmp_path, capsys):
    out_dir = _run_cli(planted, tmp_path, contregen_fixtures())
    capsys.readouterr()
    trace_path = str(out_dir / "trace.json")

    assert dispatch(["export-tree", "--trace", trace_path,
                     "--query", "q-planted"]) == 0
    tree = json.loads(capsys.readouterr().out)
    assert tree["query"] == ROOT_QUERY
    assert len(tree["children"]) == 2

    assert dispatch(["export-tree", "--trace", trace_path,
                     "--query", "q-planted", "--dot"]) == 0
    dot = capsys.readouterr().out
    assert dot.startswith("digraph")

    assert dispatch(["export-tree", "--trace", trace_path,
                     "--query", "missing"]) == 2

    baseline_dir = _run_cli(planted, tmp_path, retgen_fixtures(), method="retgen")
    capsys.readouterr()
    assert dispatch(["export-tree", "--trace", str(baseline_dir / "trace.json"),
                     "--query", "q-planted"]) == 2


def test_diff(planted, tmp_path, capsys):
    out_dir = _run_cli(planted, tmp_path, contregen_fixtures())
    capsys.readouterr()
    trace_path = out_dir / "trace.json"

    assert dispatch(["diff", "--a", str(trace_path), "--b", str(trace_path)]) == 0
    assert "traces identical" in capsys.readouterr().out

    changed = json.loads(trace_path.read_text(encoding="utf-8"))
    changed["queries"]["q-planted"]["answer"] = "something else"
    changed_path = tmp_path / "changed.json"
    changed_path.write_text(json.dumps(changed), encoding="utf-8")
    code = dispatch(["diff", "--a", str(trace_path), "--b", str(changed_path),
                     "--format", "structured"])
    assert code == 0
    data = json.loads(capsys.readouterr().out)
    assert data["identical"] is False
    assert "query q-planted: answer differs" in data["differences"]


def test_out_flag_writes_file(planted, tmp_path, capsys):
    out_dir = _run_cli(planted, tmp_path, contregen_fixtures())
    capsys.readouterr()
    report_path = tmp_path / "report.txt"
    code = dispatch(["eval", "--trace", str(out_dir / "trace.json"),
                     "--out", str(report_path)])
    assert code == 0
    assert capsys.readouterr().out == ""  # routed to the file instead
    assert "q-planted" in report_path.read_text(encoding="utf-8")
