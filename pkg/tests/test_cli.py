import json
import os

import numpy as np
import pytest

from hkflow import cli, flow


def run(args):
    return cli.main(list(args))


def test_no_command_prints_help():
    assert run([]) == 2


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as ex:
        run(["check-ambient", "--model", "eh", "--c", "-1"])
    assert ex.value.code == 2
    with pytest.raises(SystemExit) as ex:
        run(["flow", "--grid", "banana"])
    assert ex.value.code == 2
    with pytest.raises(SystemExit) as ex:
        run(["flow", "--preset", "no-such-preset"])
    assert ex.value.code == 2


def test_list_presets():
    assert run(["list-presets"]) == 0


def test_check_ambient_flat(tmp_path):
    out = str(tmp_path)
    assert run(["check-ambient", "--model", "flat", "--out", out]) == 0
    rep = json.load(open(os.path.join(out, "ambient_report.json")))
    assert rep["passed"] is True
    assert rep["config"]["model"] == "flat"
    assert rep["report"]["quaternion"] <= 1e-12


def test_flow_run_writes_series_and_snapshots(tmp_path):
    out = str(tmp_path)
    code = run(["flow", "--model", "flat", "--grid", "16x16",
                "--t-end", "0.01", "--threads", "1", "--out", out])
    assert code == 0
    with open(os.path.join(out, "series.csv")) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    assert tuple(header) == flow.MONITOR_FIELDS
    energies = [float(r[header.index("energy")]) for r in rows]
    assert all(b < a for a, b in zip(energies, energies[1:]))
    # flat model: tube columns are empty
    assert all(r[header.index("psi_max")] == "" for r in rows)
    summary = json.load(open(os.path.join(out, "summary.json")))
    assert summary["status"] == "reached_t_end"
    assert summary["config"]["flow"]["t_end"] == 0.01
    snaps = sorted(p for p in os.listdir(out) if p.startswith("snap_"))
    assert "snap_0.csv" in snaps and len(snaps) == 2
    with open(os.path.join(out, snaps[1])) as fh:
        head = fh.readline().strip().split(",")
        first = fh.readline().strip().split(",")
    assert head[:4] == ["i", "j", "chart", "x0"]
    assert len(first) == len(head)


def test_flow_runs_are_byte_reproducible(tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = str(tmp_path / tag)
        assert run(["flow", "--model", "flat", "--grid", "16x16",
                    "--t-end", "0.005", "--threads", "1", "--out", out]) == 0
        outs.append(out)
    for name in ("series.csv",):
        with open(os.path.join(outs[0], name), "rb") as fh:
            a = fh.read()
        with open(os.path.join(outs[1], name), "rb") as fh:
            b = fh.read()
        assert a == b


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_flow_blowup_exit_code(tmp_path):
    code = run(["flow", "--model", "flat", "--grid", "16x16", "--dt", "50",
                "--t-end", "100", "--steps", "5",
                "--out", str(tmp_path)])
    assert code == 3


def test_variation_report(tmp_path):
    out = str(tmp_path)
    code = run(["variation", "--scenario", "flat-graph", "--check", "first",
                "--grid", "64x64", "--out", out])
    assert code == 0
    rep = json.load(open(os.path.join(out, "variation_report.json")))
    assert len(rep["checks"]) == 3
    for ch in rep["checks"]:
        assert ch["rel_err"] <= 1e-4


def test_stability_report_eh(tmp_path):
    out = str(tmp_path)
    assert run(["stability", "--preset", "eh-stability-report",
                "--out", out]) == 0
    with open(os.path.join(out, "stability_report.csv")) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    coeffs = {float(r[header.index("r")]): float(r[header.index("R01_coeff")])
              for r in rows if r[0] == "radial"}
    r2 = [v for k, v in coeffs.items() if abs(k - np.sqrt(2)) < 1e-12]
    assert r2 and r2[0] == pytest.approx(-0.25, abs=1e-12)
    bolt = [r for r in rows if r[0] == "bolt"][0]
    assert bolt[header.index("verdict")] == "strongly stable"
    assert float(bolt[header.index("min_eigenvalue")]) == pytest.approx(
        4.0, abs=1e-6)


def test_stability_report_flat_plane(tmp_path):
    out = str(tmp_path)
    assert run(["stability", "--model", "flat", "--scenario", "plane",
                "--out", out]) == 0
    with open(os.path.join(out, "stability_report.csv")) as fh:
        fh.readline()
        row = fh.readline().strip().split(",")
    assert row[-1] == "not strongly stable"
    assert float(row[4]) == pytest.approx(0.0, abs=1e-12)
