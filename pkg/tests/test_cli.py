import json
import os

import pytest

from hypdiss.cli import EXIT_FAIL, EXIT_OK, main


def read_dir_bytes(path):
    out = {}
    for name in sorted(os.listdir(path)):
        with open(os.path.join(path, name), "rb") as f:
            out[name] = f.read()
    return out


class TestCheck:
    def test_damped_wave_all_pass(self, tmp_path):
        out = tmp_path / "out"
        code = main(["check", "--builtin", "damped-wave", "--a", "2",
                     "--output-dir", str(out)])
        assert code == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["all_pass"]
        assert set(summary["verdicts"]) == {"HA", "HB", "D1", "D2", "D3", "UNIFORM"}
        rep = json.loads((out / "report_UNIFORM.json").read_text())
        assert rep["c_bar"] == pytest.approx(0.5, abs=1e-3)
        assert "config" in rep

    def test_supercharacteristic_fails(self, tmp_path):
        out = tmp_path / "out"
        code = main(["check", "--builtin", "convected-damped-wave", "--a", "1.5",
                     "--output-dir", str(out)])
        assert code == EXIT_FAIL
        summary = json.loads((out / "summary.json").read_text())
        assert summary["verdicts"]["D1"] == "fail"

    def test_fluid_all_pass(self, tmp_path):
        out = tmp_path / "out"
        code = main(["check", "--builtin", "fluid", "--r", "3", "--mu", "2",
                     "--nu", "1", "--eta", "1", "--zeta", "0",
                     "--output-dir", str(out)])
        assert code == EXIT_OK

    def test_margin_csv_columns(self, tmp_path):
        out = tmp_path / "out"
        main(["check", "--builtin", "damped-wave", "--a", "2", "--output-dir", str(out)])
        lines = (out / "margins_D3.csv").read_text().splitlines()
        assert lines[0] == "xi,omega_index,margin"
        assert len(lines) > 1

    def test_invalid_model_exit_one(self, tmp_path):
        code = main(["check", "--builtin", "fluid", "--mu", "0.5",
                     "--output-dir", str(tmp_path / "out")])
        assert code == 1


class TestDeterminism:
    def test_check_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["check", "--builtin", "convected-damped-wave", "--a", "0.5",
              "--output-dir", str(a), "--seed", "7"])
        main(["check", "--builtin", "convected-damped-wave", "--a", "0.5",
              "--output-dir", str(b), "--seed", "7"])
        assert read_dir_bytes(a) == read_dir_bytes(b)

    def test_decay_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ["decay", "--builtin", "damped-wave", "--a", "2", "--d", "3", "--seed", "3"]
        main(args + ["--output-dir", str(a)])
        main(args + ["--output-dir", str(b)])
        assert read_dir_bytes(a) == read_dir_bytes(b)


class TestDecay:
    def test_self_test_mode(self, tmp_path):
        out = tmp_path / "out"
        code = main(["decay", "--self-test", "--output-dir", str(out)])
        assert code == EXIT_OK
        fit = json.loads((out / "decay_fit.json").read_text())
        assert fit["exponent"] == pytest.approx(-0.75, abs=1e-10)

    def test_damped_wave_d3_in_band(self, tmp_path):
        out = tmp_path / "out"
        code = main(["decay", "--builtin", "damped-wave", "--a", "2", "--d", "3",
                     "--output-dir", str(out)])
        assert code == EXIT_OK
        fit = json.loads((out / "decay_fit.json").read_text())
        assert fit["in_band"] and fit["asserted"]
        csv_lines = (out / "decay_trajectory.csv").read_text().splitlines()
        assert csv_lines[0] == "t,norm_Hs_u,norm_Hs1_ut,combined"

    def test_low_dimension_warns_not_fails(self, tmp_path):
        out = tmp_path / "out"
        with pytest.warns(UserWarning):
            code = main(["decay", "--builtin", "damped-wave", "--a", "2", "--d", "2",
                         "--output-dir", str(out)])
        assert code == EXIT_OK
        fit = json.loads((out / "decay_fit.json").read_text())
        assert not fit["asserted"]


class TestOtherCommands:
    def test_dispersion_csv(self, tmp_path):
        out = tmp_path / "out"
        code = main(["dispersion", "--builtin", "damped-wave", "--a", "2",
                     "--output-dir", str(out)])
        assert code == EXIT_OK
        lines = (out / "dispersion.csv").read_text().splitlines()
        assert lines[0] == "omega_index,xi,re_0,im_0,re_1,im_1"
        # branch check: Re lambda = -1 +- sqrt(1 - xi^2) at small xi
        import numpy as np

        row = lines[1].split(",")
        xi = float(row[1])
        res = sorted([float(row[2]), float(row[4])])
        assert res[0] == pytest.approx(-1.0 - np.sqrt(1 - xi**2), abs=1e-9)
        assert res[1] == pytest.approx(-1.0 + np.sqrt(1 - xi**2), abs=1e-9)

    def test_simulate_flat_trace_for_zero_amplitude(self, tmp_path):
        out = tmp_path / "out"
        code = main(["simulate", "--builtin", "convected-damped-wave", "--a", "0.5",
                     "--epsilon", "0", "--t-final", "1", "--n-grid", "32",
                     "--output-dir", str(out)])
        assert code == EXIT_OK
        info = json.loads((out / "simulate.json").read_text())
        assert info["w_norm_initial"] == 0.0 and info["w_norm_final"] == 0.0

    def test_paradiff_battery(self, tmp_path):
        out = tmp_path / "out"
        code = main(["paradiff-test", "--n-grid", "128", "--output-dir", str(out)])
        assert code == EXIT_OK
        rep = json.loads((out / "paradiff_report.json").read_text())
        assert rep["all_green"]

    def test_report_rerender(self, tmp_path):
        out = tmp_path / "out"
        main(["check", "--builtin", "damped-wave", "--a", "2", "--output-dir", str(out)])
        code = main(["report", "--output-dir", str(out)])
        assert code == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["all_pass"]
