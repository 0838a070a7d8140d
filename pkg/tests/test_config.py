"""Run-configuration parsing: defaults, overrides, and rejection of typos."""

import numpy as np
import pytest

import reflfield.config as cfg


def write(tmp_path, text):
    path = tmp_path / "run.ini"
    path.write_text(text)
    return str(path)


class TestDefaults:
    def test_empty_file_gives_defaults(self, tmp_path):
        run = cfg.load_config(write(tmp_path, ""))
        assert run.scene.n_train == 30
        assert run.train.iterations == 3000
        assert run.train.loss_weights.lambda_p == pytest.approx(3e-4)
        assert run.train.loss_weights.lambda_o == pytest.approx(0.1)
        assert run.train.field.use_reflection is True
        assert run.render.background == (1.0, 1.0, 1.0)
        assert run.edit.is_neutral

    def test_default_text_parses_to_defaults(self, tmp_path):
        path = tmp_path / "default.ini"
        cfg.write_default_config(str(path))
        from_text = cfg.load_config(str(path))
        from_empty = cfg.load_config(write(tmp_path, ""))
        assert from_text == from_empty

    def test_missing_file_reports_path(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="missing.ini"):
            cfg.load_config(str(tmp_path / "missing.ini"))


class TestOverrides:
    def test_scene_and_output(self, tmp_path):
        run = cfg.load_config(
            write(tmp_path, "[scene]\ndir = data2\nnear = 1.5\n[output]\ndir = results\n")
        )
        assert run.scene.dir == "data2"
        assert run.scene.near == 1.5
        assert run.output_dir == "results"

    def test_field_section_feeds_train_config(self, tmp_path):
        text = "[field]\nuse_reflection = false\nsh_degrees = 1, 2\ndir_encoding = pe\n"
        run = cfg.load_config(write(tmp_path, text))
        assert run.train.field.use_reflection is False
        assert run.train.field.sh_degrees == (1, 2)
        assert run.train.field.dir_encoding == "pe"

    def test_loss_weights_fold_into_train(self, tmp_path):
        text = "[train]\nlambda_p = 0.5\nlambda_o = 0\nstop_weight_grad = yes\n"
        run = cfg.load_config(write(tmp_path, text))
        lw = run.train.loss_weights
        assert lw.lambda_p == 0.5
        assert lw.lambda_o == 0.0
        assert lw.stop_weight_grad is True
        assert lw.stop_density_normal_grad is False

    def test_edit_diffuse_rgb_key(self, tmp_path):
        run = cfg.load_config(
            write(tmp_path, "[edit]\ndiffuse_rgb = 0.8, 0.1, 0.1\ntint_scale = 0.5\n")
        )
        assert run.edit.diffuse_override == (0.8, 0.1, 0.1)
        assert run.edit.tint_scale == 0.5
        assert not run.edit.is_neutral

    def test_inline_comments_ignored(self, tmp_path):
        run = cfg.load_config(write(tmp_path, "[train]\niterations = 10  # quick\n"))
        assert run.train.iterations == 10

    def test_boolean_spellings(self, tmp_path):
        for raw, expected in (("on", True), ("0", False), ("TRUE", True)):
            run = cfg.load_config(
                write(tmp_path, f"[field]\nuse_tint = {raw}\n")
            )
            assert run.train.field.use_tint is expected


class TestRejection:
    def test_unknown_section(self, tmp_path):
        with pytest.raises(ValueError, match=r"unknown section \[model\]"):
            cfg.load_config(write(tmp_path, "[model]\nwidth = 3\n"))

    def test_unknown_key_names_section(self, tmp_path):
        with pytest.raises(ValueError, match=r"unknown key 'iterations' in \[scene\]"):
            cfg.load_config(write(tmp_path, "[scene]\niterations = 5\n"))

    def test_bad_boolean(self, tmp_path):
        with pytest.raises(ValueError, match="boolean"):
            cfg.load_config(write(tmp_path, "[field]\nuse_tint = maybe\n"))

    def test_bad_rgb_count(self, tmp_path):
        with pytest.raises(ValueError, match="3 numbers"):
            cfg.load_config(write(tmp_path, "[render]\nbackground = 1, 1\n"))

    def test_semantic_validation_reports_path(self, tmp_path):
        path = write(tmp_path, "[scene]\nnear = 5.0\nfar = 2.0\n")
        with pytest.raises(ValueError, match="run.ini"):
            cfg.load_config(path)

    def test_invalid_edit_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="roughness_scale"):
            cfg.load_config(write(tmp_path, "[edit]\nroughness_scale = 0\n"))


class TestValidateMethods:
    def test_scene_config(self):
        with pytest.raises(ValueError):
            cfg.SceneConfig(n_train=0).validate()
        with pytest.raises(ValueError):
            cfg.SceneConfig(near=3.0, far=2.0).validate()

    def test_render_config(self):
        with pytest.raises(ValueError):
            cfg.RenderConfig(n_samples=1).validate()
        with pytest.raises(ValueError):
            cfg.RenderConfig(background=(2.0, 0.0, 0.0)).validate()

    def test_run_config(self):
        with pytest.raises(ValueError):
            cfg.RunConfig(output_dir="").validate()
