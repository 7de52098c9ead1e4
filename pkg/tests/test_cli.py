import json
import os
from pathlib import Path
import subprocess
import sys

import numpy as np
import pytest
import yaml

from fpkernel import cli, config, io
from fpkernel.errors import ConfigError, NumericalError

BUNDLED = config.BUNDLED_DIR


def run(args, capsys=None):
    code = cli.main(args)
    if capsys is None:
        return code
    out, err = capsys.readouterr()
    return code, out, err


def bundled(name):
    return yaml.safe_load((BUNDLED / f"{name}.yaml").read_text())


def write_config(tmp_path, document, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(document), encoding="utf-8")
    return path


def metrics(out):
    return json.loads((Path(out) / "metrics.json").read_text())


class TestRun:
    def test_minimal_example(self, tmp_path):
        out = tmp_path / "out"
        assert run(["run", "minimal_example", "--out-dir", str(out), "--quiet"]) == 0
        m = metrics(out)
        got = [m[f"coefficient_s{k}_i{i}"] for k in (1, 2) for i in (1, 2)]
        np.testing.assert_allclose(got, [0.505, 1.5984, 0.505, 1.5984], atol=5e-3)
        rows = io.read_coefficients(out / "coefficients.csv")
        assert [r[:2] for r in rows] == [(1, 1), (1, 2), (2, 1), (2, 2)]
        np.testing.assert_allclose([r[4] for r in rows], got, rtol=0)

    def test_fig2_prediction_beats_smoother(self, tmp_path):
        out = tmp_path / "out"
        assert run(["run", "fig2_predict_compare", "--out-dir", str(out), "--quiet"]) == 0
        m = metrics(out)
        assert m["rmse_pde_t4"] < m["rmse_idw_t4"]
        assert {p["name"]: p["pass"] for p in m["properties"]}["pde_beats_baseline_t4"]

    def test_summary_and_quiet(self, tmp_path, capsys):
        code, out, _ = run(["run", "minimal_example", "--out-dir", str(tmp_path / "a")], capsys)
        assert code == 0 and "empirical_risk" in out
        code, out, _ = run(["run", "minimal_example", "--out-dir", str(tmp_path / "b"), "--quiet"], capsys)
        assert code == 0 and out == ""

    def test_deterministic_outputs(self, tmp_path):
        for d in ("a", "b"):
            assert run(["run", "fig3_density", "--out-dir", str(tmp_path / d), "--quiet"]) in (0, 3)
        csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
        assert csvs
        for name in csvs:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_manifest_covers_outputs(self, tmp_path):
        out = tmp_path / "out"
        run(["run", "fig2_predict_compare", "--out-dir", str(out), "--quiet"])
        manifest = json.loads((out / "manifest.json").read_text())
        produced = {p.name for p in out.iterdir()} - {"manifest.json"}
        assert set(manifest["files"]) == produced
        for name, digest in manifest["files"].items():
            assert io.sha256_file(out / name) == digest
        assert manifest["config_sha256"] == config.load("fig2_predict_compare")[0].digest()
        assert manifest["library"] == "fpkernel" and manifest["seed"] == 0

    def test_seed_override(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run(["run", "fig3_density", "--out-dir", str(a), "--quiet"])
        run(["run", "fig3_density", "--out-dir", str(b), "--quiet", "--seed", "7"])
        assert json.loads((b / "manifest.json").read_text())["seed"] == 7
        assert metrics(b)["seed"] == 7
        assert (a / "snapshots.csv").read_bytes() != (b / "snapshots.csv").read_bytes()

    def test_snapshot_csv_input(self, tmp_path):
        (tmp_path / "data.csv").write_text("snapshot,t,x,y\n1,1.0,1.0,1.0\n1,1.0,2.0,1.0\n2,2.0,1.0,1.0\n2,2.0,2.0,2.0\n")
        doc = bundled("minimal_example")
        del doc["snapshots"]
        doc["snapshot_csv"] = "data.csv"
        path = write_config(tmp_path, doc)
        assert run(["run", str(path), "--out-dir", str(tmp_path / "out"), "--quiet"]) == 0
        assert metrics(tmp_path / "out")["coefficient_s2_i2"] == pytest.approx(1.5984, abs=5e-3)

    def test_list(self, capsys):
        code, out, _ = run(["list"], capsys)
        assert code == 0 and "minimal_example" in out.split()

    @pytest.mark.parametrize("name", config.bundled_configs())
    def test_bundled_configs_validate(self, name):
        cfg, path = config.load(name)
        assert path.stem == name and cfg.name == name


class TestConfigErrors:
    def check_rejected(self, tmp_path, capsys, doc):
        path = write_config(tmp_path, doc)
        out = tmp_path / "out"
        code, _, err = run(["run", str(path), "--out-dir", str(out)], capsys)
        assert code == 1
        assert not out.exists()
        assert not list(tmp_path.glob(".fpkernel-*"))
        report = json.loads(err.strip().splitlines()[-1])
        assert report["error"] == "config"
        return report

    def test_negative_bandwidth(self, tmp_path, capsys):
        doc = bundled("fig2_predict_compare")
        doc["baseline"]["bandwidth"] = -0.45
        report = self.check_rejected(tmp_path, capsys, doc)
        assert any("bandwidth" in d for d in report["details"])

    def test_unknown_key(self, tmp_path, capsys):
        doc = bundled("minimal_example")
        doc["kernel"]["temperature"] = 3
        report = self.check_rejected(tmp_path, capsys, doc)
        assert any("kernel.temperature" in d for d in report["details"])

    def test_missing_section(self, tmp_path, capsys):
        doc = bundled("fig3_density")
        del doc["density"]
        self.check_rejected(tmp_path, capsys, doc)

    def test_decreasing_times(self, tmp_path, capsys):
        doc = bundled("minimal_example")
        doc["snapshots"].reverse()
        self.check_rejected(tmp_path, capsys, doc)

    def test_sensor_outside_domain(self, tmp_path, capsys):
        doc = bundled("fig1_dirichlet")
        doc["snapshots"][0]["sensors"] = {"positions": [0.5, 1.5]}
        report = self.check_rejected(tmp_path, capsys, doc)
        assert "domain" in report["message"]

    def test_t_epsilon_below_floor(self, tmp_path, capsys):
        doc = bundled("example5_initial")
        doc["solver"]["t_epsilon"] = 1e-9
        self.check_rejected(tmp_path, capsys, doc)

    def test_malformed_yaml(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("experiment: [regress\n")
        code, _, err = run(["run", str(path), "--out-dir", str(tmp_path / "out")], capsys)
        assert code == 1 and "cannot read" in err

    def test_missing_config(self, capsys):
        code, _, err = run(["run", "no_such_config"], capsys)
        assert code == 1 and "not found" in err

    def test_parse_requires_mapping(self):
        with pytest.raises(ConfigError, match="mapping"):
            config.parse(["regress"])

    def test_digest_ignores_formatting(self, tmp_path):
        doc = bundled("minimal_example")
        a = write_config(tmp_path, doc, "a.yaml")
        b = tmp_path / "b.yaml"
        b.write_text(json.dumps(doc, indent=4))
        assert config.load(a)[0].digest() == config.load(b)[0].digest()


class TestNumericalFailure:
    def test_exit_two_without_outputs(self, tmp_path, capsys, monkeypatch):
        def broken(*args, **kwargs):
            raise NumericalError("SVD did not converge")

        monkeypatch.setattr("fpkernel.regression.pinv", broken)
        out = tmp_path / "out"
        code, _, err = run(["run", "minimal_example", "--out-dir", str(out)], capsys)
        assert code == 2
        assert not out.exists()
        report = json.loads(err.strip().splitlines()[-1])
        assert report["error"] == "numerical" and report["module"] == "regression"

    def test_failure_while_writing(self, tmp_path, capsys, monkeypatch):
        def broken(*args, **kwargs):
            raise FloatingPointError("overflow in grid")

        monkeypatch.setattr("fpkernel.io.write_grid", broken)
        out = tmp_path / "out"
        code, _, _ = run(["run", "minimal_example", "--out-dir", str(out)], capsys)
        assert code == 2 and not out.exists()


class TestKernelCheck:
    def test_neumann_passes(self, tmp_path):
        out = tmp_path / "out"
        assert run(["kernel-check", "kernel_check_neumann", "--out-dir", str(out), "--quiet"]) == 0
        props = metrics(out)["properties"]
        assert {p["name"] for p in props} >= {"symmetry", "psd", "semigroup", "pde_residual_order", "orthonormality"}
        assert all(p["pass"] for p in props)

    def test_gaussian_skips_semigroup(self, tmp_path):
        out = tmp_path / "out"
        assert run(["kernel-check", "minimal_example", "--out-dir", str(out), "--quiet"]) == 0
        semigroup = {p["name"]: p for p in metrics(out)["properties"]}["semigroup"]
        assert "unbounded" in semigroup["skipped"]

    def test_corrupted_kernel_fails(self, tmp_path, capsys, monkeypatch, corrupted_neumann):
        monkeypatch.setattr(config.KernelConfig, "build", lambda self: corrupted_neumann)
        out = tmp_path / "out"
        code, _, err = run(["kernel-check", "kernel_check_neumann", "--out-dir", str(out), "--quiet"], capsys)
        assert code == 3
        assert "psd" in json.loads(err.strip().splitlines()[-1])["failed"]
        assert not {p["name"]: p for p in metrics(out)["properties"]}["psd"]["pass"]


@pytest.mark.parametrize("name, atol", [("minimal_example", 1e-12), ("fig1_dirichlet", 1e-4)])
def test_pure_python_backend_subprocess(tmp_path, name, atol):
    # fig1 is ill-conditioned (coefficients ~1e7): roundoff-level Gram differences
    # move the min-norm solution along near-null directions, visible off the sensors
    env = {**os.environ, "FPKERNEL_PURE_PYTHON": "1"}
    out, ref = tmp_path / "out", tmp_path / "ref"
    cmd = [sys.executable, "-m", "fpkernel.cli", "run", name, "--out-dir", str(out), "--quiet"]
    subprocess.run(cmd, check=True, env=env)
    assert json.loads((out / "manifest.json").read_text())["backend"] == "python"
    assert cli.main(["run", name, "--out-dir", str(ref), "--quiet"]) == 0
    _, a = io.read_grid(out / "grid.csv")
    _, b = io.read_grid(ref / "grid.csv")
    np.testing.assert_allclose(a, b, rtol=0, atol=atol)
