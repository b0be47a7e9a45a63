import csv
import io
import json
import logging
import pytest

import numpy as np

from dualitykit import ReportFormat, save_matrix
from dualitykit.duality_cli import (
    EXIT_FAIL,
    EXIT_PASS,
    EXIT_USAGE,
    build_parser,
    dispatch,
    render_report,
)

from . import ABSORBED_SRW, ABSORBED_SRW_DIAGONAL, CONE_H, CONE_L, TWO_STATE_L

_LOGGER = logging.getLogger(__name__)


@pytest.fixture
def files(tmp_path):
    """Matrix files shared by the command tests"""
    paths = {}
    for name, matrix in (
        ("srw", ABSORBED_SRW),
        ("srw_diag", ABSORBED_SRW_DIAGONAL),
        ("eye2", np.eye(2)),
        ("eye4", np.eye(4)),
        ("cone_h", CONE_H),
        ("cone_l", CONE_L),
        ("two_l", TWO_STATE_L),
        ("two_h", np.diag([3.0, 1.5])),
        ("swap", np.array([[0.0, 1.0], [1.0, 0.0]])),
        ("averaging", np.full((2, 2), 0.5)),
        ("column", np.array([[1.0], [0.0]])),
        ("killed", np.array([[0.0, 0.5], [0.5, 0.0]])),
        ("ones", np.ones((1, 2))),
    ):
        path = str(tmp_path / f"{name}.csv")
        save_matrix(path, matrix)
        paths[name] = path

    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1,0\n0\n")
    paths["ragged"] = str(ragged)
    paths["missing"] = str(tmp_path / "does_not_exist.csv")
    paths["dir"] = tmp_path
    return paths


def run(argv: list[str], capsys) -> tuple[int, dict|None]:
    code = dispatch(argv)
    out = capsys.readouterr().out
    try:
        return (code, json.loads(out))
    except json.JSONDecodeError:
        return (code, None)


def write_config(files, name: str, data: dict) -> str:
    path = files["dir"] / name
    path.write_text(json.dumps(data))
    return str(path)


@pytest.mark.parametrize(
    "name, argv, exp_code",
    [
        ("self dual",        ["check-duality", "--p", "srw", "--q", "srw", "--h", "srw_diag"], EXIT_PASS),
        ("not dual",         ["check-duality", "--p", "srw", "--q", "srw", "--h", "eye4"],     EXIT_FAIL),
        ("generators",       ["check-duality", "--lx", "two_l", "--ly", "two_l", "--h", "two_h"], EXIT_PASS),
        ("half generators",  ["check-duality", "--lx", "two_l", "--h", "two_h"],               EXIT_USAGE),
        ("no chains",        ["check-duality", "--h", "two_h"],                                EXIT_USAGE),
        ("missing file",     ["check-duality", "--p", "missing", "--q", "srw", "--h", "srw_diag"], EXIT_USAGE),
        ("ragged file",      ["check-duality", "--p", "ragged", "--q", "srw", "--h", "srw_diag"],  EXIT_USAGE),
        ("shape mismatch",   ["check-duality", "--p", "srw", "--q", "eye2", "--h", "srw_diag"],    EXIT_USAGE),
        ("solve stochastic", ["solve-dual", "--p", "averaging", "--h", "eye2"],                EXIT_PASS),
        ("solve none",       ["solve-dual", "--p", "averaging", "--h", "column"],              EXIT_FAIL),
        ("siegmund",         ["siegmund", "--p", "srw"],                                       EXIT_PASS),
        ("siegmund fails",   ["siegmund", "--p", "swap"],                                      EXIT_FAIL),
        ("cone generator",   ["cone-dual", "--p", "cone_l", "--h", "cone_h"],                  EXIT_PASS),
        ("cone kernel",      ["cone-dual", "--p", "averaging", "--h", "cone_h"],               EXIT_PASS),
        ("cone no --p",      ["cone-dual", "--h", "cone_h"],                                   EXIT_USAGE),
        ("spectrum",         ["spectrum", "--p", "srw", "--q", "srw"],                         EXIT_PASS),
        ("spectrum differs", ["spectrum", "--p", "eye2", "--q", "swap"],                       EXIT_FAIL),
        ("measure",          ["measure-duality", "--p", "killed", "--q", "killed", "--mu", "ones"], EXIT_PASS),
        ("sep",              ["sep-check", "--sites", "4"],                                    EXIT_PASS),
        ("sep too large",    ["sep-check", "--sites", "11"],                                   EXIT_USAGE),
        ("unknown command",  ["frobnicate"],                                                   EXIT_USAGE),
    ]
)
def test_exit_codes(name, argv, exp_code, files, capsys):
    argv = [files.get(a, a) if isinstance(files.get(a), str) else a for a in argv]
    code, report = run(argv, capsys)

    assert code == exp_code
    if exp_code != EXIT_USAGE:
        assert report["command"] == argv[0]
        assert report["passed"] == (exp_code == EXIT_PASS)
        assert set(report) == {"tool", "version", "command", "config", "seed", "tolerances", "passed", "result"}


def test_precondition_report(files, capsys):
    code, report = run(["siegmund", "--p", files["swap"]], capsys)

    assert code == EXIT_FAIL
    assert report["result"]["error_type"] == "DualityPreconditionError"
    assert report["result"]["witness"] == [0, 1, 1]


def test_tolerance_override(files, capsys):
    code, report = run(["check-duality", "--p", files["srw"], "--q", files["srw"], "--h", files["srw_diag"], "--tol-duality", "1e-6"], capsys)

    assert code == EXIT_PASS
    assert report["tolerances"]["duality"] == 1e-6
    assert report["config"]["tolerances"] == {"duality": 1e-6}
    assert report["result"] == {"residual": 0.0}


def test_mechanisms_list(capsys):
    code = dispatch(["mechanisms", "--list"])
    lines = capsys.readouterr().out.splitlines()

    assert code == EXIT_PASS
    assert lines[0] == "R  00->00 01->00 10->11 11->11"
    assert "BA 00->00 01->01 10->11 11->10" in lines
    assert len(lines) == 6


@pytest.mark.parametrize(
    "name, argv, exp_code, exp_dual",
    [
        ("voter",    ["mechanisms", "--check", "R", "C", "--q", "0"],  EXIT_PASS,  True),
        ("voter -1", ["mechanisms", "--check", "R", "A", "--q", "-1"], EXIT_PASS,  True),
        ("mismatch", ["mechanisms", "--check", "R", "D", "--q", "0"],  EXIT_FAIL,  False),
        ("unknown",  ["mechanisms", "--check", "R", "X"],              EXIT_USAGE, None),
        ("bad q",    ["mechanisms", "--check", "R", "C", "--q", "2"],  EXIT_USAGE, None),
        ("no mode",  ["mechanisms"],                                   EXIT_USAGE, None),
    ]
)
def test_mechanisms_check(name, argv, exp_code, exp_dual, capsys):
    code, report = run(argv, capsys)

    assert code == exp_code
    if exp_dual is not None:
        assert report["result"]["dual"] == exp_dual
    if exp_dual is False:
        assert report["result"]["witness"] == [[1, 0], [1, 0]]


@pytest.mark.parametrize(
    "name, config, seed, exp_code",
    [
        ("voter",       {"N": 3, "q": "0", "t": 1.0},                                           "1",  EXIT_PASS),
        ("annihilating", {"N": 3, "q": "-1", "backward": {"V": "A"}},                           "2",  EXIT_PASS),
        ("some pairs",  {"N": 4, "x0": ["1010", "1111"], "y0": ["0110"]},                        "3",  EXIT_PASS),
        ("not dual",    {"N": 3, "q": "0", "backward": {"V": "D"}},                              "1",  EXIT_FAIL),
        ("no seed",     {"N": 3},                                                                None, EXIT_USAGE),
        ("extra field", {"N": 3, "colour": "red"},                                               "1",  EXIT_USAGE),
    ]
)
def test_verify_pathwise(name, config, seed, exp_code, files, capsys):
    argv = ["verify-pathwise", "--config", write_config(files, "ips.json", config)]
    if seed is not None:
        argv += ["--seed", seed]
    code, report = run(argv, capsys)

    assert code == exp_code
    if name == "voter":
        assert report["result"]["pairs_checked"] == 64
        assert report["seed"] == 1
    if name == "some pairs":
        assert report["result"]["pairs_checked"] == 2


def test_invalid_config_json(files, capsys):
    path = files["dir"] / "broken.json"
    path.write_text("{\"N\": ")

    code, _ = run(["verify-pathwise", "--config", str(path), "--seed", "1"], capsys)
    assert code == EXIT_USAGE


def test_moment_duality_reproducible(files, capsys):
    config = write_config(files, "moment.json", {"x0": 0.5, "n0": 3, "t": 0.5, "dt": 1e-3})
    reports, codes = [], []
    for threads in ("1", "3", "3"):
        out = str(files["dir"] / f"moment_{threads}.json")
        code = dispatch(["moment-duality", "--config", config, "--seed", "5", "--replicas", "3000", "--threads", threads, "--out", out])
        codes.append(code)
        with open(out, "rb") as fh:
            reports.append(fh.read())

    assert codes[0] == codes[1] == codes[2]
    assert codes[0] in (EXIT_PASS, EXIT_FAIL)

    # same arguments, same bytes
    assert reports[1] == reports[2]

    # thread count changes the echoed config, never the result
    first, second = json.loads(reports[0]), json.loads(reports[1])
    assert first["result"] == second["result"]
    assert "elapsed" not in first["result"]
    assert first["result"]["labels"] == ["E[X_t^n0]", "E[x0^N_t]"]


def test_rescale_csv(files, capsys):
    config = write_config(files, "rescale.json", {"N_list": [10, 20], "x0": 0.5, "n0": 2, "t": 0.0})
    out = str(files["dir"] / "table.csv")

    code = dispatch(["rescale-experiment", "--config", config, "--seed", "1", "--replicas", "100", "--format", "csv", "--out", out])
    assert code == EXIT_PASS

    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "N"
    assert "limit_gap" in rows[0]
    assert [r[0] for r in rows[1:]] == ["10", "20"]


def test_rescale_hypothesis(files, capsys):
    config = write_config(files, "rescale.json", {"N_list": [10, 20], "q": "0"})

    code, report = run(["rescale-experiment", "--config", config, "--seed", "1", "--replicas", "10"], capsys)
    assert code == EXIT_FAIL
    assert report["result"]["witness"] == "q = -1"


@pytest.mark.parametrize(
    "name, schedules, exp_code, exp_witness",
    [
        ("explicit",        {"r_N": [5.0, 10.0], "b_N": [0.6, 0.55], "t_N": [0.0, 0.0]},  EXIT_PASS,  None),
        ("rates only",      {"r_N": [5.0, 10.0]},                                        EXIT_PASS,  None),
        ("short list",      {"r_N": [5.0]},                                              EXIT_USAGE, None),
        ("b moves away",    {"b_N": [0.55, 0.6]},                                        EXIT_FAIL,  "b_N -> beta"),
        ("r moves away",    {"r_N": [5.0, 12.0]},                                        EXIT_FAIL,  "r_N/N -> alpha"),
        ("negative time",   {"t_N": [0.0, -1.0]},                                        EXIT_FAIL,  "t_N >= 0"),
    ]
)
def test_rescale_schedules(name, schedules, exp_code, exp_witness, files, capsys):
    config = write_config(files, "rescale.json", {"N_list": [10, 20], "x0": 0.5, "n0": 2, "t": 0.0, **schedules})

    code, report = run(["rescale-experiment", "--config", config, "--seed", "1", "--replicas", "100"], capsys)
    assert code == exp_code
    if exp_code == EXIT_PASS:
        assert [row["N"] for row in report["result"]["rows"]] == [10, 20]
    if exp_witness is not None:
        assert report["result"]["witness"] == exp_witness


def test_json_floats(capsys):
    report = {"tool": "dualitykit", "result": {"a": 0.1, "b": 1.0, "c": [1e-300, -2.5e20, 3], "d": {}, "e": True, "f": None}}
    text = render_report(report, ReportFormat.JSON)

    assert "\"a\": 0.10000000000000001" in text
    assert "\"b\": 1.0" in text
    assert json.loads(text) == report

    rows = list(csv.reader(io.StringIO(render_report(report, ReportFormat.CSV))))
    assert ["result.a", "0.10000000000000001"] in rows
    assert ["result.b", "1.0"] in rows


def test_csv_key_value(files, capsys):
    code = dispatch(["check-duality", "--p", files["srw"], "--q", files["srw"], "--h", files["srw_diag"], "--format", "csv"])
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))

    assert code == EXIT_PASS
    assert rows[0] == ["key", "value"]
    assert ["passed", "true"] in rows
    assert ["result.residual", "0.0"] in rows


def test_parser_version(capsys):
    assert dispatch(["--version"]) == EXIT_PASS
    assert build_parser().prog == "dualitykit"
