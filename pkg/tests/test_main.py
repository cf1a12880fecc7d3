import json
import math

import pandas as pd
import pytest

from core.errors import ConfigError
from main import main, resolve_workers

DISK = {"n": 2, "R": 1.0, "beta": 1.0, "alpha": 1.0}
STEADY = {
    "params": DISK,
    "initial_data": {"family": "constant"},
    "grid": {"N": 51},
    "controls": {"t_end": 0.1, "dt_out": 0.05},
}
PLATEAU = {
    "params": dict(DISK, beta=2.0),
    "initial_data": {"family": "plateau", "amplitude": 4000.0, "radius": 0.05, "tail": 0.05},
    "grid": {"N": 200},
    "controls": {"t_end": 0.02, "dt_out": 0.001, "u_cap": 1e5},
}
QUADRATIC = {
    "params": DISK,
    "initial_data": {"family": "quadratic"},
    "grid": {"N": 101},
    "controls": {"t_end": 0.1, "dt_out": 0.02},
}


@pytest.fixture
def write_config(tmp_path):
    def write(document, name="run.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document))
        return str(path)
    return write


def run(command, config, out, *extra):
    return main([command, "--config", config, "--out", str(out), "--quiet", *extra])


class TestSimulate:
    def test_steady_run_writes_artifacts(self, tmp_path, write_config):
        out = tmp_path / "steady"
        assert run("simulate", write_config(STEADY), out) == 0
        meta = json.loads((out / "meta.json").read_text())
        assert meta["termination"] == "horizon_reached"
        assert meta["snapshots"] == 3
        assert meta["grid"]["N"] == 51
        assert meta["existence_time_estimate"] > 0.0
        assert (out / "snap_00000.csv").exists() and (out / "snap_00002.csv").exists()
        assert list(pd.read_csv(out / "diag.csv").columns) == ["t", "dt", "sup_u", "min_second_diff",
                                                               "max_second_diff"]

    def test_negative_beta_is_a_config_error(self, tmp_path, write_config):
        doc = dict(STEADY, params=dict(DISK, beta=-1.0))
        assert run("simulate", write_config(doc), tmp_path / "out") == 2
        assert not (tmp_path / "out").exists()

    def test_missing_blocks(self, tmp_path, write_config):
        doc = {"params": DISK, "initial_data": {"family": "constant"}}
        assert run("simulate", write_config(doc), tmp_path / "out") == 2

    def test_step_budget_maps_to_collapse_code(self, tmp_path, write_config):
        doc = dict(STEADY, controls={"t_end": 0.1, "max_steps": 1})
        assert run("simulate", write_config(doc), tmp_path / "out") == 11

    def test_concentrated_data_ends_early(self, tmp_path, write_config):
        out = tmp_path / "plateau"
        assert run("simulate", write_config(PLATEAU), out) in (10, 11)
        meta = json.loads((out / "meta.json").read_text())
        assert meta["termination"] in ("blowup_declared", "step_collapse")

    def test_output_entry_of_the_config(self, tmp_path, write_config):
        config = write_config(dict(STEADY, output="from_config"))
        assert main(["simulate", "--config", config, "--quiet"]) == 0
        assert (tmp_path / "from_config" / "meta.json").exists()


class TestThreshold:
    def test_reference_case(self, tmp_path, write_config, capsys):
        doc = {"params": dict(DISK, m=math.pi), "threshold": {"m0": math.pi}}
        out = tmp_path / "thr"
        assert run("threshold", write_config(doc), out) == 0
        cert = json.loads((out / "certificate.json").read_text())
        assert cert["r0"] == pytest.approx(2.42e-3, rel=1e-2)
        assert cert["C4"] == 1.0
        assert cert["predicate"] <= 1.0 + 1e-12
        assert cert["params"]["m"] == pytest.approx(math.pi)
        assert "r0" in capsys.readouterr().out

    def test_riccati_midpoint_for_concentrated_data(self, tmp_path, write_config, capsys):
        doc = dict(PLATEAU, threshold={"m0_fraction": 0.25, "gamma": 0.9})
        out = tmp_path / "thr"
        assert run("threshold", write_config(doc), out) == 0
        cert = json.loads((out / "certificate.json").read_text())
        assert cert["concentration_met"]
        assert math.isfinite(cert["riccati_T"])
        assert "y(T/2)" in capsys.readouterr().out

    def test_concentrated_mass_above_total(self, tmp_path, write_config):
        doc = {"params": dict(DISK, m=math.pi), "threshold": {"m0": 4.0}}
        assert run("threshold", write_config(doc), tmp_path / "thr") == 2

    def test_default_c4_from_initial_data(self, tmp_path, write_config):
        doc = dict(STEADY, params=dict(DISK, alpha=2.0), threshold={"m0_fraction": 0.5})
        out = tmp_path / "thr"
        assert run("threshold", write_config(doc), out) == 0
        cert = json.loads((out / "certificate.json").read_text())
        assert cert["C4"] == pytest.approx(4.0)
        assert cert["C4_source"] == "initial"
        assert cert["y0_moment"] > 0.0

    def test_alpha_above_one_without_data_or_c4(self, tmp_path, write_config):
        doc = {"params": dict(DISK, alpha=2.0, m=1.0), "threshold": {"m0": 0.5}}
        assert run("threshold", write_config(doc), tmp_path / "thr") == 2


class TestVerify:
    @pytest.fixture
    def stored_run(self, tmp_path, write_config):
        out = tmp_path / "stored"
        assert run("simulate", write_config(STEADY, "sim.json"), out) == 0
        return out

    def verify_config(self, write_config, trajectory):
        return write_config({"params": DISK, "trajectory": str(trajectory),
                             "checks": {"suites": ["bounds", "mass_conservation", "linear_barrier"]}},
                            "verify.json")

    def test_stored_steady_run_passes(self, tmp_path, write_config, stored_run):
        out = tmp_path / "report"
        assert run("verify", self.verify_config(write_config, stored_run), out) == 0
        report = json.loads((out / "verify_report.json").read_text())
        assert report["passed"]
        assert report["termination"] == "horizon_reached"
        assert set(report["checks"]) == {"bounds", "mass_conservation", "linear_barrier"}

    def test_corrupted_run_fails(self, tmp_path, write_config, stored_run):
        snap = stored_run / "snap_00001.csv"
        frame = pd.read_csv(snap)
        frame["w"] *= 1.01
        frame.to_csv(snap, index=False, float_format="%.17g")
        out = tmp_path / "report"
        assert run("verify", self.verify_config(write_config, stored_run), out) == 1
        report = json.loads((out / "verify_report.json").read_text())
        assert not report["checks"]["bounds"]["passed"]

    def test_stored_decreasing_run_passes(self, tmp_path, write_config):
        stored = tmp_path / "quadratic"
        assert run("simulate", write_config(QUADRATIC, "sim.json"), stored) == 0
        doc = {"params": DISK, "trajectory": str(stored),
               "checks": {"suites": ["bounds", "linear_barrier", "concavity", "slope_bound"]}}
        out = tmp_path / "report"
        assert run("verify", write_config(doc, "verify.json"), out) == 0
        checks = json.loads((out / "verify_report.json").read_text())["checks"]
        for name in ("linear_barrier", "concavity"):
            assert checks[name]["asserted"] and checks[name]["passed"], name

    def test_trajectory_without_meta_is_an_io_error(self, tmp_path, write_config, stored_run):
        (stored_run / "meta.json").unlink()
        config = self.verify_config(write_config, stored_run)
        assert run("verify", config, tmp_path / "report") == 3

    def test_fresh_run(self, tmp_path, write_config):
        doc = dict(STEADY, checks={"suites": ["bounds", "slope_bound"]})
        out = tmp_path / "fresh"
        assert run("verify", write_config(doc), out) == 0
        assert (out / "meta.json").exists()
        assert (out / "verify_report.json").exists()


def test_sweep_writes_a_table(tmp_path, write_config):
    doc = dict(STEADY, sweep={"axes": {"initial_data.value": [1.0, 2.0]}})
    out = tmp_path / "sweep"
    assert run("sweep", write_config(doc), out, "--workers", "1") == 0
    frame = pd.read_csv(out / "sweep.csv")
    assert len(frame) == 2
    assert (frame["outcome"] == "steady-like").all()


def test_missing_config_is_an_io_error(tmp_path):
    assert run("simulate", str(tmp_path / "absent.json"), tmp_path / "out") == 3


def test_bad_worker_environment(tmp_path, write_config, monkeypatch):
    monkeypatch.setenv("KSFLOW_WORKERS", "zero")
    assert run("simulate", write_config(STEADY), tmp_path / "out") == 2


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["--version"])
    assert excinfo.value.code == 0
    assert "ksflow" in capsys.readouterr().out


class TestResolveWorkers:
    def test_precedence(self):
        assert resolve_workers(3, {"KSFLOW_WORKERS": "4"}) == 3
        assert resolve_workers(None, {"KSFLOW_WORKERS": "4"}) == 4
        assert resolve_workers(None, {}) == 1
        assert resolve_workers(None, {"KSFLOW_WORKERS": ""}) == 1

    @pytest.mark.parametrize("flag, environ", [(0, {}), (None, {"KSFLOW_WORKERS": "-2"}),
                                               (None, {"KSFLOW_WORKERS": "two"})])
    def test_invalid_values(self, flag, environ):
        with pytest.raises(ConfigError):
            resolve_workers(flag, environ)
