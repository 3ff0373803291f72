import json

import numpy as np
import pytest
from click.testing import CliRunner

from mirrorlab import torus_flow as tf
from mirrorlab.cli import cli, dumps17
from mirrorlab.forms_core import KForm


@pytest.fixture
def runner():
    return CliRunner()


def run(runner, *args):
    return runner.invoke(cli, [str(a) for a in args], catch_exceptions=False)


# -- verify -----------------------------------------------------------------


def test_verify_passes_and_reports_every_identity(runner):
    res = run(runner, "verify", "--context", "g2", "--samples", 200, "--seed", 3)
    assert res.exit_code == 0
    data = json.loads(res.output)
    assert data["pass"] is True and data["seed"] == 3
    assert all(r["samples"] == 200 for r in data["reports"])


def test_verify_exit_1_when_tolerance_is_impossible(runner):
    res = run(runner, "verify", "--context", "det", "--samples", 50, "--tol", 0.0, "--value-range", 3.0)
    assert res.exit_code == 1
    assert json.loads(res.output)["pass"] is False


def test_verify_rejects_zero_samples(runner):
    assert run(runner, "verify", "--samples", 0).exit_code == 2


def test_config_file_fills_defaults_but_flags_win(runner, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"context": "sl3", "samples": 30, "seed": 9}))
    res = run(runner, "verify", "--config", cfg, "--seed", 4)
    opts = json.loads(res.output)["config"]["options"]
    assert opts["context"] == "sl3" and opts["samples"] == 30 and opts["seed"] == 4
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(runner, "verify", "--config", cfg).exit_code == 2


# -- structure forms --------------------------------------------------------


def test_structure_dump_round_trips_forms(runner):
    data = json.loads(run(runner, "structure", "dump", "--kind", "g2").output)
    phi = KForm.from_json(json.dumps(data["forms"]["phi"]))
    assert phi.n == 7 and phi.k == 3 and len(phi.terms()) == 7


def test_project_splits_and_reassembles(runner, tmp_path):
    rng = np.random.default_rng(0)
    form = KForm(7, 2, rng.normal(size=21))
    path = tmp_path / "f.json"
    path.write_text(form.to_json())
    res = run(runner, "project", "--kind", "g2", "--form", path)
    assert res.exit_code == 0
    parts = json.loads(res.output)["components"]
    total = sum(np.array(p["form"]["coeffs"]) for p in parts.values())
    np.testing.assert_allclose(total, form.coeffs, atol=1e-12)
    # [TRIVIAL] a 2-form on R^6 does not fit a 7-dimensional structure
    bad = run(runner, "project", "--kind", "g2", "--form", KForm.zeros(6, 2).to_json())
    assert bad.exit_code == 2


# -- flow -------------------------------------------------------------------


def test_flow_writes_trace_snapshots_and_summary(runner, tmp_path):
    out = tmp_path / "run"
    res = run(runner, "flow", "--dim", 4, "--grid", 6, "--steps", 6, "--record-every", 2,
              "--snapshot-every", 3, "--out-dir", out)
    assert res.exit_code == 0
    summary = json.loads(res.output)
    assert summary["rows"] == 4 and summary["diverged"] is False
    assert summary["final_V"] <= summary["initial_V"]
    trace = tf.FlowTrace.read_csv(out / "trace.csv")
    assert len(trace.rows) == 4
    assert (out / "final.cfld").exists() and (out / "snapshot_000003.cfld").exists()
    assert json.loads((out / "summary.json").read_text())["summary"] == summary


def test_flow_divergence_exits_3(runner, tmp_path):
    res = run(runner, "flow", "--dim", 4, "--grid", 8, "--amplitude", 0.5, "--dt", 3 / 64, "--steps", 40,
              "--out-dir", tmp_path)
    assert res.exit_code == 3
    assert json.loads(res.output)["diverged"] is True
    assert not (tmp_path / "final.cfld").exists()


def test_flow_needs_a_field_source(runner, tmp_path):
    assert run(runner, "flow", "--out-dir", tmp_path).exit_code == 2


# -- residuals, Dazord, Newton and pullback --------------------------------


def test_residuals_of_flat_and_random_fields(runner):
    flat = run(runner, "residuals", "--structure", "su3", "--grid", 4, "--amplitude", 0.0, "--expect-solution")
    assert flat.exit_code == 0
    data = json.loads(flat.output)
    assert data["residual"]["is_solution"] is True
    bumpy = run(runner, "residuals", "--structure", "su3", "--grid", 4, "--amplitude", 0.3, "--expect-solution")
    assert bumpy.exit_code == 1


def test_dazord_check_on_generated_field(runner):
    res = run(runner, "dazord-check", "--grid", 4, "--amplitude", 0.1)
    assert res.exit_code == 0
    runs = json.loads(res.output)["runs"]
    assert len(runs) == 1 and runs[0]["grid"] == 4


def test_dazord_refine_needs_generated_field(runner, tmp_path):
    path = tmp_path / "f.cfld"
    tf.save_field(tf.ConnectionField.random(tf.TorusGrid(6, (4,) * 6), 0.1, 0), path)
    assert run(runner, "dazord-check", "--input", path, "--refine").exit_code == 2


def test_newton_constant_solves_g2(runner):
    res = run(runner, "newton-constant", "--kind", "g2", "--seed", 0, "--attempts", 20)
    assert res.exit_code == 0
    data = json.loads(res.output)
    assert max(data["residual_norms"].values()) < 1e-12
    assert data["sqrt_det"] > 0


def test_pullback_writes_field_and_reports(runner, tmp_path):
    src, dst = tmp_path / "base.cfld", tmp_path / "up.cfld"
    tf.save_field(tf.ConnectionField.random(tf.TorusGrid(6, (4,) * 6), 0.05, 1, structure="su3"), src)
    res = run(runner, "pullback", "--input", src, "--output", dst, "--points", 4)
    assert res.exit_code == 0
    up = tf.load_field(dst)
    assert up.grid.shape == (4,) * 7 and up.structure == "g2"
    assert set(json.loads(res.output)) >= {"base", "pullback"}


def test_missing_input_file_is_usage_error(runner, tmp_path):
    res = run(runner, "residuals", "--input", tmp_path / "missing.cfld")
    assert res.exit_code == 2


# -- report -----------------------------------------------------------------


def test_report_is_byte_identical_and_writes_long_csv(runner, tmp_path):
    (tmp_path / "a").mkdir()
    run(runner, "verify", "--context", "det", "--samples", 20, "--out", tmp_path / "a" / "v.json")
    run(runner, "flow", "--dim", 4, "--grid", 4, "--steps", 2, "--out-dir", tmp_path / "a" / "flow")
    out = tmp_path / "summary.json"
    run(runner, "report", tmp_path / "a", "--out", out, "--long-csv", tmp_path / "long.csv")
    first = out.read_bytes()
    run(runner, "report", tmp_path / "a", "--out", out)
    assert out.read_bytes() == first
    sections = json.loads(first)["sections"]
    assert {s["command"] for s in sections} >= {"verify", "flow-trace", "flow"}
    assert (tmp_path / "long.csv").read_text().startswith("source,key,metric,value")


def test_report_on_empty_directory_is_usage_error(runner, tmp_path):
    assert run(runner, "report", tmp_path).exit_code == 2


def test_dumps17_writes_full_precision_and_special_values():
    text = dumps17({"a": 0.1, "b": float("nan"), "c": [1, True, None]})
    data = json.loads(text)
    assert data["a"] == 0.1 and np.isnan(data["b"]) and data["c"] == [1, True, None]
