"""End-to-end surface: HTTP endpoints and the CLI client over a tiny run."""

import os
import warnings

import numpy as np
import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

import reflfield.cli as cli
import reflfield.pngio as pngio
from reflfield.service import app

TINY_INI = """\
[scene]
dir = {root}/dataset
n_train = 3
n_test = 2
width = 8
height = 8

[output]
dir = {root}/out

[field]
spatial_depth = 2
spatial_width = 16
directional_depth = 2
directional_width = 16
pe_levels = 3
sh_degrees = 1, 2
bottleneck_width = 8

[train]
iterations = 8
batch_rays = 32
n_samples = 8
warmup_steps = 2
checkpoint_every = 0

[render]
width = 8
height = 8
n_samples = 8
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    config = root / "run.ini"
    config.write_text(TINY_INI.format(root=root))
    return {"root": root, "config": str(config)}


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


@pytest.fixture(scope="module")
def trained(workspace, client):
    """Generate the dataset and train once; later tests reuse the artifacts."""
    r = client.post("/commands/oracle-gen", json={"config_path": workspace["config"]})
    assert r.status_code == 200, r.text
    r = client.post("/commands/train", json={"config_path": workspace["config"]})
    assert r.status_code == 200, r.text
    return workspace


class TestHealth:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok" and "version" in body


class TestEndpoints:
    def test_oracle_gen_output(self, trained):
        ds = trained["root"] / "dataset"
        assert (ds / "transforms_train.json").exists()
        assert (ds / "train" / "r_0.png").exists()
        assert (ds / "test" / "r_1_normal.png").exists()

    def test_train_artifacts(self, trained):
        out = trained["root"] / "out"
        assert (out / "checkpoint_final.rfld").exists()
        assert (out / "checkpoint_final.rfld.meta").exists()
        log = (out / "train_log.txt").read_text().strip().splitlines()
        assert log and log[0].startswith("step ")

    def test_render_writes_views(self, trained, client):
        r = client.post("/commands/render", json={"config_path": trained["config"]})
        assert r.status_code == 200, r.text
        body = r.json()
        assert body["ok"] and body["command"] == "render"
        render_dir = trained["root"] / "out" / "render"
        files = sorted(os.listdir(render_dir))
        assert "r_0.png" in files and "r_0_normal.png" in files and "r_0_opacity.png" in files
        img = pngio.read(render_dir / "r_0.png")
        assert img.shape == (8, 8, 3)

    def test_eval_metrics_and_results_file(self, trained, client):
        r = client.post("/commands/eval", json={"config_path": trained["config"]})
        assert r.status_code == 200, r.text
        metrics = r.json()["metrics"]
        assert 0 < metrics["psnr_mean"] < 99
        assert 0 <= metrics["mae_mean"] <= 180
        results = (trained["root"] / "out" / "results.txt").read_text()
        assert "psnr_mean=" in results and "mae_mean=" in results
        assert "# mae_normals=predicted" in results

    def test_edit_endpoint_overrides(self, trained, client):
        r = client.post(
            "/commands/edit",
            json={
                "config_path": trained["config"],
                "roughness_scale": 4.0,
                "diffuse_rgb": [0.9, 0.1, 0.1],
            },
        )
        assert r.status_code == 200, r.text
        assert "roughness_scale=4.0" in r.json()["messages"][0]
        assert (trained["root"] / "out" / "edit" / "r_0.png").exists()

    def test_edit_rejects_bad_override(self, trained, client):
        r = client.post(
            "/commands/edit",
            json={"config_path": trained["config"], "roughness_scale": -1.0},
        )
        assert r.status_code in (400, 422)

    def test_missing_config_is_400(self, client):
        r = client.post("/commands/train", json={"config_path": "/nonexistent.ini"})
        assert r.status_code == 400
        assert "no configuration file" in r.json()["detail"]

    def test_render_without_checkpoint_is_400(self, workspace, client, tmp_path):
        # fresh output dir: no checkpoint there
        r = client.post(
            "/commands/render",
            json={"config_path": workspace["config"], "out_dir": str(tmp_path)},
        )
        assert r.status_code == 400
        assert "run train first" in r.json()["detail"]


class TestCli:
    def test_eval_via_cli(self, trained, capsys):
        rc = cli.main(["eval", "--config", trained["config"]])
        out = capsys.readouterr().out
        assert rc == 0
        assert "psnr_mean=" in out

    def test_error_path_exit_code(self, capsys, tmp_path):
        rc = cli.main(["train", "--config", str(tmp_path / "none.ini")])
        err = capsys.readouterr().err
        assert rc == 1
        assert err.startswith("error: ")

    def test_init_config(self, tmp_path, capsys):
        target = tmp_path / "fresh.ini"
        rc = cli.main(["init-config", "--out", str(target)])
        assert rc == 0
        assert target.exists()
        assert "[train]" in target.read_text()

    def test_edit_flags_reach_service(self, trained, capsys):
        rc = cli.main(
            [
                "edit", "--config", trained["config"],
                "--roughness-scale", "2.0", "--diffuse-rgb", "0.2,0.3,0.4",
            ]
        )
        out = capsys.readouterr().out
        assert rc == 0
        assert "roughness_scale=2.0" in out

    def test_seed_override_changes_checkpoint(self, trained, capsys, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        for out_dir, seed in ((out_a, "11"), (out_b, "12")):
            rc = cli.main(
                [
                    "train", "--config", trained["config"],
                    "--seed", seed, "--out", str(out_dir), "--deterministic",
                ]
            )
            assert rc == 0
        a = (out_a / "checkpoint_final.rfld").read_bytes()
        b = (out_b / "checkpoint_final.rfld").read_bytes()
        assert a != b
        capsys.readouterr()
