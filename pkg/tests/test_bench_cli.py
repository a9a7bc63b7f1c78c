import csv
import io
import json
import subprocess
import sys

import pytest

from tpaware import bench, costmodel
from tpaware.cli import main
from tpaware.errors import InvalidArgument

SMALL = ["--preset", "custom", "--shape", "32,16,8", "--group-size", "8", "--repeat", "1"]


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_project_mode_llama_full_shape(capsys):
    assert main(["--mode", "project", "--m", "1,16", "--tp", "1,2,8"]) == 0
    rows = read_csv(capsys.readouterr().out)
    assert len(rows) == 2 * 3 * 2
    assert {(r["k1"], r["n1"], r["n2"]) for r in rows} == {("8192", "28672", "8192")}
    for r in rows:
        m, tp = int(r["m"]), int(r["tp"])
        want = m * 28672 * 4 * (tp - 1) if r["pipeline"] == "naive" else 0
        assert int(r["allgather_bytes"]) == want
        assert r["max_abs_diff"] == "" and r["wall_ms_median"] == ""
    sp = {int(r["tp"]): float(r["speedup_projected"]) for r in rows
          if r["pipeline"] == "tp_aware" and r["m"] == "16" and r["tp"] != "1"}
    assert sp[8] > sp[2] > 1


def test_header_and_column_order(capsys):
    assert main(SMALL + ["--m", "1", "--tp", "1"]) == 0
    header = capsys.readouterr().out.splitlines()[0]
    assert header == ",".join(bench.COLUMNS)


def test_empty_rows_encode_header_only():
    assert bench.emit_report([], "csv") == ",".join(bench.COLUMNS) + "\n"
    assert json.loads(bench.emit_report([], "json")) == []


def test_simulate_rows_and_json_agree(capsys, tmp_path):
    out = tmp_path / "r.json"
    assert main(SMALL + ["--m", "2", "--tp", "1,2,4", "--format", "json", "--out", str(out)]) == 0
    assert capsys.readouterr().out == ""
    rows = json.loads(out.read_text())
    assert [r["pipeline"] for r in rows] == ["naive", "tp_aware"] * 3
    for r in rows:
        assert list(r) == list(bench.COLUMNS)
        assert 0 <= r["max_abs_diff"] < 1e-3
        ag = 2 * 16 * 4 * (r["tp"] - 1) if r["pipeline"] == "naive" else 0
        assert r["allgather_bytes"] == ag
        assert r["allreduce_bytes"] == 2 * 8 * 4 * 2 * (r["tp"] - 1)
        assert (r["speedup_projected"] is None) == (r["tp"] == 1 or r["pipeline"] == "naive")
    assert main(SMALL + ["--m", "2", "--tp", "1,2,4"]) == 0
    csv_rows = read_csv(capsys.readouterr().out)
    for a, b in zip(rows, csv_rows):
        for c in bench.COLUMNS:
            if c == "wall_ms_median":
                continue
            want = "" if a[c] is None else (repr(a[c]) if isinstance(a[c], float) else str(a[c]))
            assert b[c] == want, c


def test_emit_events(tmp_path, capsys):
    ev = tmp_path / "ev.jsonl"
    assert main(SMALL + ["--m", "1", "--tp", "2", "--emit-events", str(ev)]) == 0
    events = [json.loads(line) for line in ev.read_text().splitlines()]
    assert [(e["pipeline"], e["op"]) for e in events] == [
        ("naive", "all_gather"), ("naive", "all_reduce_sum"), ("tp_aware", "all_reduce_sum"),
    ]
    assert events[0]["bytes"] == 1 * 16 * 4


def test_cost_params_file_changes_projection(tmp_path, capsys):
    p = tmp_path / "cost.json"
    p.write_text(costmodel.CostParams(alpha=1.0, beta=1e-12, gamma=1e12).to_json())
    assert main(["--mode", "project", "--m", "1", "--tp", "2", "--pipeline", "tp_aware",
                 "--cost-params", str(p)]) == 0
    (row,) = read_csv(capsys.readouterr().out)
    assert float(row["projected_ms"]) > 1000  # one 1-second AllReduce


def test_comm_dtype_halves_bytes(capsys):
    main(SMALL + ["--m", "1", "--tp", "2", "--pipeline", "naive", "--comm-dtype", "float16"])
    (row,) = read_csv(capsys.readouterr().out)
    assert int(row["allgather_bytes"]) == 16 * 2


@pytest.mark.parametrize(
    "argv",
    [
        ["--preset", "custom"],
        SMALL + ["--tp", "3"],
        SMALL + ["--group-size", "64"],
        ["--mode", "project", "--cost-params", "/nonexistent/cost.json"],
        ["--scale", "7"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_argparse_rejects_malformed_lists():
    with pytest.raises(SystemExit):
        main(["--m", "a,b"])
    with pytest.raises(SystemExit):
        main(["--shape", "1,2"])


def test_equivalence_failure_exits_1(capsys):
    # a negative tolerance can never be met
    assert main(SMALL + ["--m", "1", "--tp", "2", "--tolerance", "-1"]) == 1
    assert "equivalence check failed" in capsys.readouterr().err


def test_runspec_validation():
    with pytest.raises(InvalidArgument):
        bench.RunSpec(preset="bogus").validate()
    with pytest.raises(InvalidArgument):
        bench.RunSpec(repeat=0).validate()
    assert bench.RunSpec().resolved_shape() == (512, 1792, 512)
    assert bench.RunSpec(mode="project").resolved_shape() == (8192, 28672, 8192)


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "tpaware", "--mode", "project", "--m", "1", "--tp", "2", "--format", "text"],
        capture_output=True, text=True, check=True,
    )
    assert proc.stdout.split()[0] == "m"
