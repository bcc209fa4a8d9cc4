from __future__ import annotations

import csv
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from perdisp.cli import fmt, main

SQRT17 = math.sqrt(17.0)


def run(tmp_path, command, config, name="out"):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(config))
    out = tmp_path / name
    code = main([command, "--config", str(cfg), "--out", str(out)])
    summary = json.loads((out / "summary.json").read_text()) if (out / "summary.json").exists() else None
    return code, out, summary


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_number_format_round_trips():
    for x in (math.pi, -1e-300, 2.0, 1 / 3):
        s = fmt(x)
        assert float(s) == x and "e" in s and len(s.split("e")[0].replace("-", "").replace(".", "")) == 17


def test_delta_command_on_free_potential(tmp_path):
    code, _, summary = run(tmp_path, "delta", {"potential": [0]})
    assert code == 0
    assert abs(summary["scalars"]["delta"] - 2.0) <= 1e-9
    assert summary["command"] == "delta" and len(summary["inputs_digest"]) == 64
    assert summary["status"] == 0 and isinstance(summary["warnings"], list)


def test_edges_command_period_two(tmp_path):
    code, out, _ = run(tmp_path, "edges", {"potential": [1, 0]})
    assert code == 0
    header, rows = read_csv(out / "edges.csv")
    assert header == ["index", "lambda", "delta_sign"]
    assert len(rows) == 4
    lam = [float(r[1]) for r in rows]
    np.testing.assert_allclose(lam, [(1 - SQRT17) / 2, 0, 1, (1 + SQRT17) / 2], atol=1e-14)
    assert [int(r[2]) for r in rows] == [1, -1, -1, 1]


def test_config_error_exits_two(tmp_path, capsys):
    code, out, summary = run(tmp_path, "delta", {"potential": []})
    assert code == 2 and summary is None
    assert "potential: empty" in capsys.readouterr().err
    code, _, _ = run(tmp_path, "delta", {"potential": [0], "bogus": 1})
    assert code == 2


def test_precondition_failure_exits_two(tmp_path):
    code, _, summary = run(tmp_path, "dnls", {"potential": [1, 0], "dt": 1.0,
                                              "times": {"stop": 1, "count": 2}})
    assert code == 2 and summary["status"] == 2
    assert summary["scalars"]["error"].startswith("precondition")


def test_numerical_failure_exits_three(tmp_path):
    # a ring too small for the light cone
    code, _, summary = run(tmp_path, "decay", {"potential": [0], "ring_cells": 10,
                                               "times": {"stop": 50, "count": 5}})
    assert code == 3 and "ConeViolation" in summary["scalars"]["error"]


SCHEMAS = {
    "bands": ("bands.csv", ["k", "j", "E", "E1", "E2", "E3"]),
    "mo": ("mo.csv", ["band", "x", "theta", "theta1", "theta2", "theta3"]),
    "partition": ("partition.csv", ["band", "set", "k_left", "k_right"]),
    "decay": ("decay.csv", ["t", "sup_norm", "ratio"]),
    "dnls": ("dnls.csv", ["t", "sup_norm", "l2_norm"]),
    "propagate": ("propagate.csv", ["t", "n", "re", "im", "abs"]),
    "vdc-check": ("vdc.csv", ["case", "band", "set", "lambda", "lhs", "rhs", "pass"]),
}


@pytest.mark.parametrize("command", sorted(SCHEMAS))
def test_command_artifacts_and_headers(tmp_path, command):
    config = {"potential": [1, 0], "times": {"start": 0, "stop": 20, "count": 21}, "k_grid": 256,
              "mo_samples": 8}
    code, out, summary = run(tmp_path, command, config)
    assert code == 0, summary
    name, header = SCHEMAS[command]
    got, rows = read_csv(out / name)
    assert got == header and rows
    assert summary["status"] == 0


def test_constant_json_keys_and_summary(tmp_path):
    code, out, summary = run(tmp_path, "constant", {"potential": [0]})
    assert code == 0
    body = json.loads((out / "constant.json").read_text())
    assert set(body) == {"delta", "C_V", "M_V", "counts", "sobolev_max"}
    for key, value in body.items():
        assert summary["scalars"][key] == value
    assert body["counts"] == [{"K2": 3, "K3": 2}]


def test_selftest_passes_and_is_deterministic(tmp_path):
    config = {"potential": [0.3, -1.2, 0.7], "seed": 11}
    code_a, a, _ = run(tmp_path, "selftest", config, "a")
    code_b, b, _ = run(tmp_path, "selftest", config, "b")
    assert code_a == 0 and code_b == 0
    for name in ("selftest.csv", "edges.csv", "bands.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_entry_point_with_thread_env(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"potential": [0]}))
    env = dict(os.environ, TOOL_THREADS="1")
    res = subprocess.run([sys.executable, "-m", "perdisp.cli", "delta", "--config", str(cfg),
                          "--out", str(tmp_path / "o")], env=env, capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    env["TOOL_THREADS"] = "zero"
    res = subprocess.run([sys.executable, "-m", "perdisp.cli", "delta", "--config", str(cfg),
                          "--out", str(tmp_path / "o")], env=env, capture_output=True, text=True)
    assert res.returncode == 2
