import csv
import io
import json

import numpy as np
import pytest

from ttplan import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_plan_lists_every_plan(capsys):
    code, out, _ = run(capsys, "plan", "64,48", "2,1", "--elem", "4")
    assert code == 0
    lines = [l for l in out.splitlines() if l.lstrip("* ").startswith("[")]
    assert len(lines) == 4 and sum(l.startswith("*") for l in lines) == 1


def test_plan_json(capsys):
    code, out, _ = run(capsys, "plan", "10,20,30", "3,1,2", "--out", "json")
    doc = json.loads(out)
    assert code == 0 and sum(d["selected"] for d in doc) == 1
    assert all(d["estimate"]["total_cycles"] > 0 for d in doc)


def test_simulate_all(capsys):
    code, out, _ = run(capsys, "simulate", "40,30", "2,1", "--all")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) > 1 and all(int(r["ld_req"]) > 0 for r in rows)


def test_simulate_trace(capsys, tmp_path):
    trace = tmp_path / "t.txt"
    code, _, _ = run(capsys, "simulate", "40,3", "2,1", "--mode", "simulated",
                     "--trace", str(trace))
    assert code == 0 and "global load" in trace.read_text()


def test_exec_round_trip(capsys, tmp_path):
    data = np.arange(9 * 7 * 5, dtype=np.uint32)
    src, dst = tmp_path / "in.bin", tmp_path / "out.bin"
    data.tofile(src)
    code, out, _ = run(capsys, "exec", "9,7,5", "2,3,1", "--elem", "4", "--input", str(src),
                       "--output", str(dst), "--workers", "4")
    assert code == 0 and "verified  True" in out
    got = np.fromfile(dst, dtype=np.uint32)
    expect = data.reshape((9, 7, 5), order="F").transpose(1, 2, 0).reshape(-1, order="F")
    assert np.array_equal(got, expect)
    # accumulating onto the previous output doubles it
    code, out, _ = run(capsys, "exec", "9,7,5", "2,3,1", "--elem", "4", "--input", str(src),
                       "--output", str(dst), "--accumulate")
    assert code == 0 and np.array_equal(np.fromfile(dst, dtype=np.uint32), 2 * expect)


def test_exec_bandwidth(capsys):
    code, out, _ = run(capsys, "exec", "64,64", "2,1", "--reps", "2", "--dtype", "f8")
    assert code == 0 and "GB/s" in out


def test_exec_verification_failure_exit_code(capsys, monkeypatch):
    real = cli.transpose_execute

    def broken(*a, **kw):
        out = real(*a, **kw)
        out.elements[0] ^= 1
        return out

    monkeypatch.setattr(cli, "transpose_execute", broken)
    code, out, _ = run(capsys, "exec", "33,5", "2,1")
    assert code == cli.EXIT_ORACLE and "verified  False" in out


def test_input_errors(capsys):
    assert run(capsys, "plan", "4,5", "1,2,3")[0] == 1
    assert run(capsys, "plan", "4,0", "2,1")[0] == 1
    assert run(capsys, "plan", "4,5", "2,1", "--device", "nosuch")[0] == 1
    code, _, err = run(capsys, "exec", "4,5", "2,1", "--elem", "4", "--dtype", "f8")
    assert code == 1 and "dtype" in err
    with pytest.raises(SystemExit):
        cli.main(["plan", "4,x", "1"])


def test_bench_set1_csv(capsys):
    code, out, err = run(capsys, "bench", "set1", "--mean-volume", "4096", "--perms", "1",
                         "--mode", "both")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 18
    assert "agreement" in err


def test_bench_custom(capsys, tmp_path):
    cases = tmp_path / "c.txt"
    cases.write_text("# two cases\n8,9 | 2,1\n4,4,4 | 3,2,1\n")
    out_path = tmp_path / "r.json"
    code, out, _ = run(capsys, "bench", "custom", "--cases", str(cases), "--out", "json",
                       "--output", str(out_path))
    assert code == 0 and "cases 2" in out
    assert len(json.loads(out_path.read_text())["records"]) == 2
    cases.write_text("8,9 | 2,1\n8 | 1,2\n")
    code, _, err = run(capsys, "bench", "custom", "--cases", str(cases))
    assert code == 1 and "line 2" in err
    assert run(capsys, "bench", "custom")[0] == 1


def test_bench_set2_scaled(capsys):
    code, out, _ = run(capsys, "bench", "set2", "--scale", "16", "--perms", "1", "--no-exec")
    assert code == 0 and len(out.splitlines()) == 1 + 2 * 3


def test_profiles(capsys):
    code, out, _ = run(capsys, "profile", "list")
    assert code == 0 and "kepler-k20x" in out and "pascal-p100" in out
    code, out, _ = run(capsys, "profile", "show", "--device", "maxwell-m40")
    assert code == 0 and json.loads(out)["n_sm"] == 24
