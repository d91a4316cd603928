"""Command-line behaviour: puzzle file loading, report schema, exit codes."""

import json
import warnings
from importlib import resources

import pytest

import solderlab.expr as ex
import solderlab.fixtures as fx
import solderlab.forms as fm
from solderlab import cli

CORPUS = resources.files("solderlab.fixtures")


def fixture_path(stem):
    return str(CORPUS / f"{stem}.toml")


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr().out
    return code, out


# -- corpus files agree with the in-code constructors -----------------------


def _forms_agree(a, b, pts, tol=1e-12):
    assert a.degree == b.degree
    worst = 0.0
    for idx in set(a.coeffs) | set(b.coeffs):
        ea, eb = a.coefficient(idx), b.coefficient(idx)
        for pt in pts:
            worst = max(worst, abs(ex.evaluate(ea, pt) - ex.evaluate(eb, pt)))
    assert worst <= tol, f"coefficients differ by {worst}"


@pytest.mark.parametrize("stem", sorted(fx.ALL))
def test_corpus_files_match_constructors(stem):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        built = fx.ALL[stem]()
        loaded = cli.load_puzzle(fixture_path(stem))
    assert loaded.chart.names == built.chart.names
    for got, want in zip(loaded.chart.box, built.chart.box):
        assert got == pytest.approx(want)
    assert loaded.rank == built.rank
    assert loaded.degree == built.degree
    pts = fm.sample_points(built.chart, 5, seed=3)
    for i in range(built.rank):
        _forms_agree(loaded.phi.component(i), built.phi.component(i), pts)
        for j in range(built.rank):
            _forms_agree(loaded.omega.entry(i, j), built.omega.entry(i, j), pts)
    assert (loaded.fiber_metric is None) == (built.fiber_metric is None)
    if built.fiber_metric is not None:
        for i in range(built.rank):
            for j in range(built.rank):
                for pt in pts:
                    lhs = ex.evaluate(loaded.fiber_metric.entries[i][j], pt)
                    rhs = ex.evaluate(built.fiber_metric.entries[i][j], pt)
                    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_monopole_chart_metric_section():
    loaded = cli.load_puzzle_file(fixture_path("monopole"))
    assert loaded.chart_metric is not None
    oracle = fx.monopole_chart_metric()
    pts = fm.sample_points(loaded.puzzle.chart, 5, seed=1)
    for i in range(3):
        for j in range(3):
            for pt in pts:
                assert ex.evaluate(loaded.chart_metric[i][j], pt) == pytest.approx(
                    ex.evaluate(oracle[i][j], pt), abs=1e-12
                )


def test_flat_keys_load_like_nested_tables(tmp_path):
    nested = """
[chart]
dim = 2
coords = ["x", "y"]
domain = [[-1.0, 1.0], [-1.0, 1.0]]
[bundle]
rank = 2
[connection]
omega.1.2 = ["0", "x"]
omega.2.1 = ["0", "-x"]
[solder]
degree = 1
[solder.phi.1]
"0" = "1 + y"
[solder.phi.2]
"1" = "2"
"""
    flat = """
[chart]
dim = 2
coords = ["x", "y"]
domain = [[-1.0, 1.0], [-1.0, 1.0]]
[bundle]
rank = 2
[connection]
"omega.1.2" = ["0", "x"]
"omega.2.1" = ["0", "-x"]
[solder]
degree = 1
[solder."phi.1"]
"0" = "1 + y"
[solder."phi.2"]
"1" = "2"
"""
    pa, pb = tmp_path / "nested.toml", tmp_path / "flat.toml"
    pa.write_text(nested)
    pb.write_text(flat)
    a = cli.load_puzzle(str(pa))
    b = cli.load_puzzle(str(pb))
    pts = fm.sample_points(a.chart, 5, seed=0)
    for i in range(2):
        _forms_agree(a.phi.component(i), b.phi.component(i), pts)
        for j in range(2):
            _forms_agree(a.omega.entry(i, j), b.omega.entry(i, j), pts)


# -- exit codes --------------------------------------------------------------


def test_check_passes_on_flat(capsys):
    code, out = run(["check", fixture_path("f1_flat")], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["passed"] is True
    assert doc["checks"][0]["check"] == "integrability"
    assert doc["checks"][0]["max_residual"] == 0.0


@pytest.mark.parametrize("stem", ["contact", "x_dy"])
def test_check_fails_on_nonintegrable(stem, capsys):
    code, out = run(["check", fixture_path(stem)], capsys)
    assert code == 1
    doc = json.loads(out)
    assert doc["passed"] is False
    assert doc["checks"][0]["max_residual"] > 1e-3


def test_malformed_toml_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("not toml [[[")
    assert cli.main(["check", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "TOML parse error" in err


def test_connection_index_out_of_range_exits_2(tmp_path, capsys):
    doc = """
[chart]
dim = 2
coords = ["x", "y"]
domain = [[-1.0, 1.0], [-1.0, 1.0]]
[bundle]
rank = 2
[connection]
omega.1.3 = ["0", "0"]
[solder]
degree = 1
[solder.phi.1]
"0" = "1"
"""
    bad = tmp_path / "bad.toml"
    bad.write_text(doc)
    assert cli.main(["check", str(bad)]) == 2
    assert "omega.1.3" in capsys.readouterr().err


def test_unparseable_expression_names_key(tmp_path, capsys):
    doc = """
[chart]
dim = 2
coords = ["x", "y"]
domain = [[-1.0, 1.0], [-1.0, 1.0]]
[bundle]
rank = 1
[solder]
degree = 1
[solder.phi.1]
"0" = "x +* y"
"""
    bad = tmp_path / "bad.toml"
    bad.write_text(doc)
    assert cli.main(["check", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "phi.1[0]" in err


def test_decreasing_multi_index_rejected(tmp_path, capsys):
    doc = """
[chart]
dim = 3
coords = ["x", "y", "z"]
domain = [[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]]
[bundle]
rank = 1
[solder]
degree = 2
[solder.phi.1]
"1,0" = "1"
"""
    bad = tmp_path / "bad.toml"
    bad.write_text(doc)
    assert cli.main(["check", str(bad)]) == 2
    assert "strictly increasing" in capsys.readouterr().err


def test_unknown_command_exits_2(capsys):
    assert cli.main(["frobnicate", fixture_path("f1_flat")]) == 2


def test_missing_file_exits_2(capsys):
    assert cli.main(["check", "/no/such/file.toml"]) == 2


# -- individual command reports ----------------------------------------------


def test_classify_reports_rank_data(capsys):
    code, out = run(["classify", fixture_path("f3_projection")], capsys)
    assert code == 0
    details = json.loads(out)["details"]
    assert details["classification"] == "surjective"
    assert details["kernel_dim"] == 1
    assert details["domain_dim"] == 3


def test_metric_command_positive_definite(capsys):
    code, out = run(["metric", fixture_path("f2_sphere")], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["details"]["min_eigenvalue"] > 0


def test_observable_separates_functions(capsys):
    code, out = run(
        ["observable", fixture_path("f3_projection"), "--alpha", "z"], capsys
    )
    assert code == 1
    doc = json.loads(out)
    assert doc["details"]["kind"] == "unsolvable"
    assert "witness_point" in doc["details"]
    code, out = run(
        ["observable", fixture_path("f3_projection"), "--alpha", "x*y"], capsys
    )
    assert code == 0
    assert json.loads(out)["details"]["kind"] == "solvable"


def test_quotient_command_on_exponential(capsys):
    code, out = run(["quotient", fixture_path("f6_exponential")], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["details"]["slice_coord"] == "x"
    names = {c["check"] for c in doc["checks"]}
    assert "quotient-integrability" in names


def test_transport_command_on_projection(capsys):
    code, out = run(
        ["transport", fixture_path("f3_projection"), "--steps", "100"], capsys
    )
    assert code == 0
    doc = json.loads(out)
    by_name = {c["check"]: c for c in doc["checks"]}
    assert by_name["transport-identity"]["max_residual"] <= 1e-8
    assert by_name["transport-tables"]["passed"]


def test_palatini_command_on_schwarzschild(capsys):
    code, out = run(["palatini", fixture_path("schwarzschild")], capsys)
    assert code == 0
    doc = json.loads(out)
    by_name = {c["check"]: c for c in doc["checks"]}
    assert by_name["stationarity-forms"]["max_residual"] <= 1e-8
    assert by_name["einstein-tensor"]["max_residual"] <= 1e-8
    assert abs(doc["details"]["action"]) <= 1e-8


def test_yangmills_uses_file_chart_metric(capsys):
    code, out = run(["yangmills", fixture_path("monopole")], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["details"]["chart_metric"] == "file"
    assert doc["checks"][0]["max_residual"] <= 1e-10


# -- aggregation, determinism, report files ----------------------------------


def test_report_all_shipped_corpus(capsys):
    code, out = run(["report-all"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["passed"] is True
    assert len(doc["fixtures"]) == len(fx.ALL)
    by_file = {f["file"]: f for f in doc["fixtures"]}
    contact = by_file["contact.toml"]
    runs = {r["command"]: r for r in contact["commands"]}
    assert runs["check"]["passed"] is False
    assert runs["check"]["expected_pass"] is False
    assert runs["check"]["as_expected"] is True


def test_reports_are_byte_identical(capsys):
    _, first = run(["check", fixture_path("schwarzschild"), "--seed", "7"], capsys)
    _, second = run(["check", fixture_path("schwarzschild"), "--seed", "7"], capsys)
    assert first == second
    for c in json.loads(first)["checks"]:
        assert c["wall_time"] == 0.0


def test_report_flag_writes_stdout_copy(tmp_path, capsys):
    target = tmp_path / "out.json"
    code, out = run(
        ["check", fixture_path("f1_flat"), "--report", str(target)], capsys
    )
    assert code == 0
    assert target.read_text() == out


def test_report_all_rejects_bad_directory(capsys):
    assert cli.main(["report-all", "/no/such/dir"]) == 2
