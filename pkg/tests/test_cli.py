import csv
import io
import json
import math

import pytest

from psq.cli import UsageError, execute, main, parse, render


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_happy_path():
    spec = parse("moments --lambda 0.5 --dist exp:1 --K 0 --u 2 --order 2".split())
    assert spec.command == "moments"
    assert spec.params.lam == 0.5 and spec.params.K == 0
    assert spec.u == [2.0] and spec.order == 2
    assert spec.step == pytest.approx(1e-3)
    assert spec.horizon == 2.0


def test_parse_unstable():
    with pytest.raises(UsageError, match="unstable: rho=2"):
        parse("moments --lambda 2 --dist exp:1 --u 1".split())


def test_parse_atom_off_grid(capsys):
    with pytest.raises(UsageError, match="AtomOffGrid"):
        parse("simulate --lambda 0.2 --dist det:0.3 --grid-step 0.2".split())
    code, _, err = run_cli(capsys, "simulate", "--lambda", "0.2", "--dist", "det:0.3",
                           "--grid-step", "0.2")
    assert code == 2 and "step that divides" in err


def test_default_step_aligns_with_probe():
    spec = parse("validate --lambda 0.3 --dist mix:exp:0.8:0.37:0.2".split())
    m = round(0.37 / spec.step)
    assert abs(m * spec.step - 0.37) < 1e-12


@pytest.mark.parametrize("argv", [
    "moments --lambda 0.5 --dist exp:1",               # missing --u
    "lst --lambda 0.5 --dist exp:1 --u 1",             # missing --r
    "moments --lambda 0.5 --dist bogus:1 --u 1",
    "moments --lambda 0.5 --dist exp:1 --u 1 --order 0",
    "validate --lambda 0.5 --dist exp:1",              # no probe atom
    "nosuch --lambda 1",
])
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = run_cli(capsys, *argv.split())
    assert code == 2 and err


def test_qlen_csv(capsys):
    code, out, _ = run_cli(capsys, *"qlen --lambda 0.5 --dist exp:1 --K 1 --max-n 2 --format csv".split())
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [(int(r["n"]), float(r["value"])) for r in rows] == [(0, 0.25), (1, 0.25), (2, 0.1875)]


def test_busy(capsys):
    code, out, _ = run_cli(capsys, *"busy --lambda 0.5 --dist exp:1 --r 0.5".split())
    report = json.loads(out)
    assert code == 0
    assert report["results"][0]["value"] == pytest.approx(2 - math.sqrt(2), abs=1e-12)
    assert report["results"][1] == {"name": "busy_mean", "value": 2.0}
    assert report["diagnostics"]["iterations"][0] > 0


def test_moments_variance_lst_wdist(capsys):
    _, out, _ = run_cli(capsys, *"moments --lambda 0.5 --dist exp:1 --K 1 --u 2".split())
    vals = {r["n"]: r["value"] for r in json.loads(out)["results"]}
    assert vals[1] == pytest.approx(8.0) and vals[2] - 64 == pytest.approx(11.772142, abs=1e-4)
    _, out, _ = run_cli(capsys, *"variance --lambda 0.5 --dist exp:1 --u 2".split())
    assert json.loads(out)["results"][0]["value"] == pytest.approx(5.886071, abs=1e-5)
    _, out, _ = run_cli(capsys, *"lst --lambda 0 --dist exp:1 --K 1 --u 1.5 --r 1".split())
    assert json.loads(out)["results"][0]["value"] == pytest.approx(math.exp(-3), abs=1e-12)
    _, out, _ = run_cli(capsys, *"wdist --lambda 0.5 --dist exp:1 --x 0 2".split())
    res = json.loads(out)["results"]
    assert res[0]["value"] == 0.5 and res[1]["value"] == pytest.approx(0.816060, abs=1e-6)


def test_lst_off_grid_interpolates(capsys):
    _, out, _ = run_cli(capsys, *"lst --lambda 0 --dist exp:1 --u 1 --r 1 --grid-step 0.3 --horizon 1.2".split())
    assert json.loads(out)["results"][0]["value"] == pytest.approx(math.exp(-1), abs=1e-2)


def test_json_csv_agree_and_roundtrip(tmp_path):
    argv = "moments --lambda 0.3 --dist erlang:2:2 --K 2 --u 0.5 1.5 --order 3".split()
    jpath, cpath = tmp_path / "r.json", tmp_path / "r.csv"
    assert main(argv + ["--output", str(jpath)]) == 0
    assert main(argv + ["--format", "csv", "--output", str(cpath)]) == 0
    report = json.loads(jpath.read_text())
    rows = list(csv.DictReader(cpath.open()))
    assert len(rows) == len(report["results"]) == 6
    for row, rec in zip(rows, report["results"]):
        assert float(row["value"]) == rec["value"]
    # emitted floats survive a parse -> dump -> parse cycle bit-exactly
    again = json.loads(json.dumps(report))
    assert again == report
    spec = parse(argv)
    _, fresh = execute(spec)
    assert [r["value"] for r in fresh["results"]] == [r["value"] for r in report["results"]]


def test_report_schema(capsys):
    _, out, _ = run_cli(capsys, *"variance --lambda 0.5 --dist exp:1 --u 1".split())
    report = json.loads(out)
    assert set(report) >= {"command", "model", "controls", "results", "diagnostics"}
    assert report["model"] == {"lambda": 0.5, "dist": "exp:1", "K": 0, "rho": 0.5}
    assert set(report["diagnostics"]) >= {"truncation_terms", "grid_step", "iterations"}


def test_engine_error_json(capsys):
    code, out, _ = run_cli(capsys, *"lst --lambda 0.5 --dist exp:1 --u 1 --r 1e6".split())
    assert code == 1
    err = json.loads(out)["error"]
    assert err["type"] == "not_converged" and err["message"]


def test_validate_small(capsys):
    code, out, _ = run_cli(capsys, *("validate --lambda 0.5 --dist mix:exp:1:1.0:0.1 --u 1 "
                                     "--departures 100000 --seed 4 --r 0.5").split())
    report = json.loads(out)
    assert report["status"] == "PASS" and code == 0
    names = {r["name"] for r in report["results"]}
    assert names == {"v", "variance", "lst", "pmf", "mean_number"}
    assert all(r["z"] <= 3 for r in report["results"] if "z" in r)


def test_validate_fail_exit_code(capsys):
    # feed the comparison a simulation of the wrong model (K = 1 instead of 0)
    spec = parse(("validate --lambda 0.5 --dist mix:exp:1:1.0:0.1 --departures 60000 "
                  "--seed 2").split())
    from psq import sim
    real_run = sim.run

    def biased(cfg):
        return real_run(cfg.__class__(**{**cfg.__dict__, "params": cfg.params.with_K(1)}))

    import psq.cli as cli
    cli.run, saved = biased, cli.run
    try:
        code, report = execute(spec)
    finally:
        cli.run = saved
    assert code == 1 and report["status"] == "FAIL"


def test_simulate_has_no_z(capsys):
    code, out, _ = run_cli(capsys, *("simulate --lambda 0.5 --dist exp:1 --departures 20000 "
                                     "--max-n 3").split())
    report = json.loads(out)
    assert code == 0 and "status" not in report
    assert all("z" not in r for r in report["results"])
    assert [r["n"] for r in report["results"] if r["name"] == "pmf"] == [0, 1, 2, 3]


def test_render_csv_header():
    text = render({"results": [{"name": "pmf", "n": 0, "value": 0.5}]}, "csv")
    assert text.splitlines() == ["name,u,n,r,value,ci_halfwidth,analytic,z", "pmf,,0,,0.5,,,"]
