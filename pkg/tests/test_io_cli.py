import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cvchip import acquire as aq
from cvchip import analysis as an
from cvchip import cli
from cvchip import io as cio

finite = st.floats(-1e12, 1e12, allow_nan=False, allow_subnormal=False)


# --- CSV round trips ----------------------------------------------------------

@given(hnp.arrays(float, st.integers(1, 30), elements=finite))
@settings(max_examples=30, deadline=None)
def test_variance_csv_round_trip(tmp_path_factory, x):
    p = tmp_path_factory.mktemp("csv") / "v.csv"
    vt = aq.VarianceTrace(x, np.abs(x), np.abs(x) / 3)
    back = cio.read_variance_csv(cio.write_variance_csv(p, vt))
    for a, b in ((vt.t, back.t), (vt.variance, back.variance), (vt.se, back.se)):
        assert np.allclose(a, b, rtol=1e-12, atol=0)


def test_trace_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    tr = aq.TimeTrace(np.arange(50) / 50e6, rng.normal(size=(3, 50)), 50e6)
    back = cio.read_trace_csv(cio.write_trace_csv(tmp_path / "t.csv", tr), 50e6)
    assert np.array_equal(back.t, tr.t) and np.array_equal(back.samples, tr.samples)
    two = cio.read_trace_csv(cio.write_trace_csv(tmp_path / "t2.csv", tr, 2), 50e6)
    assert two.n_traces == 2


def test_power_csv_round_trip(tmp_path):
    pts = np.array([[20.0, 0.9, 1.1], [154.0, 0.72, 1.57]])
    p, s = cio.read_power_csv(cio.write_power_csv(tmp_path / "a.csv", pts))
    assert np.array_equal(p, pts) and s is None
    p, s = cio.read_power_csv(cio.write_power_csv(tmp_path / "b.csv", pts, 0.04))
    assert np.array_equal(s, np.full((2, 2), 0.04))


@pytest.mark.parametrize("body, row, column", [
    ("t_center,variance\n1,2\n", 1, "se"),
    ("t_center,variance,se\n1,2,3\n1,x,3\n", 3, "variance"),
    ("t_center,variance,se\n1,2,3\n1,2\n", 3, None),
    ("t_center,variance,se\n1,-2,3\n", 2, "variance"),
    ("t_center,variance,se\n1,nan,3\n", 2, "variance"),
    ("t_center,variance,se\n", 2, None),
    ("", 1, None),
])
def test_schema_errors_report_location(tmp_path, body, row, column):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(cio.CSVSchemaError) as info:
        cio.read_variance_csv(p)
    assert (info.value.row, info.value.column) == (row, column)
    assert info.value.as_dict()["error"] == "csv_schema"


def test_jsonable():
    out = cio.jsonable({1: np.float64(np.inf), "a": (np.int64(2), np.bool_(True)),
                        "b": np.arange(2.0)})
    assert out == {"1": None, "a": [2, True], "b": [0.0, 1.0]}
    json.dumps(out)


# --- CLI -----------------------------------------------------------------------

def _run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_squeeze_sweep_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        code, _, _ = _run(capsys, "squeeze-sweep", "--powers", "60", "154",
                          "--seed", "5", "--out", str(d), "--raw-traces", "1")
        assert code == 0
    fa, fb = _files(a), _files(b)
    assert fa.keys() == fb.keys()
    assert {"power_sweep.csv", "power_fit.json", "manifest.json",
            "scan_154mW_variance.csv", "scan_60mW_fit.json"} <= fa.keys()
    for name in fa:
        if name != "manifest.json":
            assert fa[name] == fb[name], name
    ma, mb = json.loads(fa["manifest.json"]), json.loads(fb["manifest.json"])
    ma.pop("output_dir"), mb.pop("output_dir")
    assert ma == mb
    assert ma["files"]["power_sweep.csv"] == cio.sha256_file(a / "power_sweep.csv")
    assert ma["seed"] == 5 and ma["config"] == "default"


def test_fit_subcommand_matches_inline(tmp_path, capsys):
    d = tmp_path / "run"
    assert _run(capsys, "squeeze-sweep", "--powers", "154", "--out", str(d))[0] == 0
    code, out, _ = _run(capsys, "fit", "scan", str(d / "scan_154mW_variance.csv"))
    assert code == 0
    refit = json.loads(out)
    inline = json.loads((d / "scan_154mW_fit.json").read_text())
    for name in ("v_plus", "v_minus", "a", "phi"):
        assert refit["parameters"][name]["estimate"] == pytest.approx(
            inline["parameters"][name]["estimate"], rel=1e-9, abs=1e-12)


def test_fit_power_and_shg_files(tmp_path, capsys):
    P = np.array([20.0, 60.0, 100.0, 154.0])
    sq = np.sqrt(P)
    pts = np.column_stack([P, 0.52 * np.exp(-0.06 * sq) + 0.48, 0.52 * np.exp(0.06 * sq) + 0.48])
    cio.write_power_csv(tmp_path / "p.csv", pts, 0.04)
    code, out, _ = _run(capsys, "fit", "power", str(tmp_path / "p.csv"), "--out", str(tmp_path / "o"))
    assert code == 0
    assert json.loads(out)["parameters"]["mu"]["estimate"] == pytest.approx(0.03, rel=1e-8)
    assert (tmp_path / "o" / "fit_power.json").exists()

    code, out, _ = _run(capsys, "shg-sweep", "--out", str(tmp_path / "s"))
    assert code == 0
    code, out, _ = _run(capsys, "fit", "shg", str(tmp_path / "s" / "shg_wg1.csv"))
    assert json.loads(out)["parameters"]["interaction_length"]["estimate"] == pytest.approx(2.0, rel=1e-6)


def test_zero_power_declines_fit(tmp_path, capsys):
    code, out, _ = _run(capsys, "squeeze-sweep", "--powers", "0", "--out", str(tmp_path))
    assert code == 0 and "declined" in out
    pf = json.loads((tmp_path / "power_fit.json").read_text())
    assert pf["declined"] is True and "unidentifiable" in pf["error"]


@pytest.mark.parametrize("argv, code, kind", [
    (["squeeze-sweep", "--powers", "--out", "X"], 3, "invalid_input"),
    (["shg-sweep", "--lambda-min", "1554", "--lambda-max", "1554", "--out", "X"], 3, "invalid_input"),
    (["entangle-run", "--pump-power", "0", "--out", "X"], 3, "invalid_input"),
    (["fit", "power", "/nonexistent/p.csv"], 3, "csv_schema"),
    (["squeeze-sweep", "--config", "/nonexistent.yaml", "--out", "X"], 3, "config"),
    (["frobnicate"], 2, "usage"),
    (["squeeze-sweep"], 2, "usage"),
])
def test_cli_errors(tmp_path, capsys, argv, code, kind):
    argv = [a.replace("X", str(tmp_path / "o")) for a in argv]
    got, _, err = _run(capsys, *argv)
    assert got == code
    assert json.loads(err.strip().splitlines()[-1])["error"] == kind


def test_fit_error_exit_code(tmp_path, capsys):
    cio.write_power_csv(tmp_path / "z.csv", [[0.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
    code, _, err = _run(capsys, "fit", "power", str(tmp_path / "z.csv"))
    assert code == 4 and json.loads(err)["error"] == "fit"


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = _run(capsys, "shg-sweep", "--out", str(blocker / "sub"))
    assert code == 5 and json.loads(err)["error"] == "io"


def test_pumps_off_run_is_separable(tmp_path, capsys):
    code, out, _ = _run(capsys, "entangle-run", "--pumps-off", "--out", str(tmp_path))
    assert code == 0
    rep = json.loads((tmp_path / "report.json").read_text())["report"]
    assert abs(rep["I"]["estimate"] - 1.0) < 5 * rep["I"]["se"]


def test_budget_command(capsys):
    code, out, _ = _run(capsys, "budget")
    assert code == 0 and "arm 1" in out and "arm 2" in out


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["--version"])
    assert info.value.code == 0
