"""Optimization loop: schedule, clipping, Adam, determinism, checkpoints."""

import json

import numpy as np
import pytest

import reflfield.autodiff as ad
import reflfield.field as fd
import reflfield.losses as ls
import reflfield.renderer as rd
import reflfield.trainer as tr

from test_field import tiny_config


def tiny_train_config(**overrides) -> tr.TrainConfig:
    base = dict(
        iterations=20,
        batch_rays=8,
        n_samples=4,
        warmup_steps=4,
        field=tiny_config(),
    )
    base.update(overrides)
    return tr.TrainConfig(**base)


def tiny_dataset(n_rays=16, seed=0):
    rng = np.random.default_rng(seed)
    origins = np.zeros((n_rays, 3))
    dirs = rng.normal(size=(n_rays, 3))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    colors = rng.uniform(size=(n_rays, 3))
    return origins, dirs, colors


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            tr.TrainConfig(iterations=0).validate()
        with pytest.raises(ValueError):
            tr.TrainConfig(lr_final=0.0).validate()
        with pytest.raises(ValueError):
            tr.TrainConfig(lr_init=1e-5, lr_final=1e-3).validate()
        with pytest.raises(ValueError):
            tr.TrainConfig(clip_norm=0.0).validate()

    def test_hash_is_stable_and_sensitive(self):
        a = tiny_train_config()
        b = tiny_train_config()
        c = tiny_train_config(seed=1)
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()
        assert len(a.config_hash()) == 16


class TestLearningRate:
    def test_warmup_starts_at_zero(self):
        cfg = tiny_train_config(iterations=100, warmup_steps=10)
        assert tr.learning_rate(cfg, 0) == 0.0

    def test_log_linear_midpoint(self):
        # odd iteration count so the middle step hits s = 1/2 exactly
        cfg = tr.TrainConfig(
            iterations=3001, warmup_steps=0, lr_init=2e-3, lr_final=2e-5,
            field=tiny_config(),
        )
        assert tr.learning_rate(cfg, 1500) == pytest.approx(2e-4, rel=1e-12)

    def test_final_step_reaches_lr_final(self):
        cfg = tiny_train_config(iterations=50, warmup_steps=4)
        assert tr.learning_rate(cfg, 49) == pytest.approx(cfg.lr_final, rel=1e-12)

    def test_monotone_after_warmup(self):
        cfg = tiny_train_config(iterations=200, warmup_steps=20)
        lrs = [tr.learning_rate(cfg, s) for s in range(20, 200)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))

    def test_continuous_at_warmup_boundary(self):
        cfg = tiny_train_config(iterations=1000, warmup_steps=512)
        below = tr.learning_rate(cfg, 511)
        at = tr.learning_rate(cfg, 512)
        # ramp factor changes by 1/512 across the boundary
        assert abs(at - below) < cfg.lr_init / 256

    def test_out_of_range_rejected(self):
        cfg = tiny_train_config(iterations=10)
        with pytest.raises(ValueError):
            tr.learning_rate(cfg, -1)
        with pytest.raises(ValueError):
            tr.learning_rate(cfg, 10)


class TestClipGradients:
    def _params_with_grads(self, grads):
        out = []
        for g in grads:
            p = ad.parameter(np.zeros_like(g))
            p.grad = g.copy()
            out.append(p)
        return out

    def test_below_threshold_unchanged(self):
        params = self._params_with_grads([np.array([0.3, 0.4])])  # norm 0.5
        norm = tr.clip_gradients(params, 1.0)
        assert norm == pytest.approx(0.5)
        np.testing.assert_allclose(params[0].grad, [0.3, 0.4])

    def test_above_threshold_rescaled(self):
        params = self._params_with_grads([np.array([3.0, 4.0])])  # norm 5
        norm = tr.clip_gradients(params, 1.0)
        assert norm == pytest.approx(5.0)
        assert np.linalg.norm(params[0].grad) == pytest.approx(1.0)
        # direction preserved
        np.testing.assert_allclose(params[0].grad, [0.6, 0.8])

    def test_norm_is_global_across_tensors(self):
        params = self._params_with_grads([np.array([3.0]), np.array([4.0])])
        norm = tr.clip_gradients(params, 1.0)
        assert norm == pytest.approx(5.0)
        total = np.sqrt(params[0].grad[0] ** 2 + params[1].grad[0] ** 2)
        assert total == pytest.approx(1.0)

    def test_missing_gradients_skipped(self):
        p = ad.parameter(np.zeros(2))
        q = ad.parameter(np.zeros(2))
        q.grad = np.array([2.0, 0.0])
        norm = tr.clip_gradients([p, q], 1.0)
        assert norm == pytest.approx(2.0)
        assert p.grad is None


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        p = ad.parameter(np.array([1.0, 2.0]))
        p.grad = np.zeros(2)
        state = tr.AdamState([p])
        state.step(1e-3, 0.9, 0.999, 1e-6)
        np.testing.assert_allclose(p.values, [1.0, 2.0])

    def test_first_step_hand_value(self):
        p = ad.parameter(np.array([0.0]))
        p.grad = np.array([1.0])
        state = tr.AdamState([p])
        state.step(1e-3, 0.9, 0.999, 1e-6)
        # m-hat = v-hat = 1 -> update = 1/(1 + eps)
        assert p.values[0] == pytest.approx(-9.99999e-4, rel=1e-9)

    def test_none_gradient_skipped(self):
        p = ad.parameter(np.array([5.0]))
        state = tr.AdamState([p])
        state.step(1e-3, 0.9, 0.999, 1e-6)
        assert p.values[0] == 5.0

    def test_descends_quadratic(self):
        p = ad.parameter(np.array([3.0]))
        state = tr.AdamState([p])
        for _ in range(500):
            p.grad = 2.0 * p.values  # d/dx x^2
            state.step(2e-2, 0.9, 0.999, 1e-6)
        assert abs(p.values[0]) < 0.2

    def test_float32_parameters_stay_float32(self):
        p = ad.parameter(np.array([1.0], dtype=np.float32))
        p.grad = np.array([1.0], dtype=np.float32)
        state = tr.AdamState([p])
        state.step(1e-3, 0.9, 0.999, 1e-6)
        assert p.values.dtype == np.float32


class TestTrainLoop:
    def test_loss_decreases_on_one_ray(self):
        origins = np.zeros((1, 3))
        dirs = np.array([[0.0, 0.0, -1.0]])
        colors = np.array([[0.3, 0.6, 0.2]])
        cfg = tiny_train_config(iterations=50)
        res = tr.train(origins, dirs, colors, cfg, 1.0, 4.0)
        assert res.log[0].step == 0
        assert res.log[-1].data < res.log[0].data

    def test_bit_determinism(self, tmp_path):
        o, d, c = tiny_dataset()
        cfg = tiny_train_config()
        a = tr.train(o, d, c, cfg, 1.0, 4.0, out_dir=str(tmp_path / "a"))
        b = tr.train(o, d, c, cfg, 1.0, 4.0, out_dir=str(tmp_path / "b"))
        for pa, pb in zip(a.params.parameters(), b.params.parameters()):
            np.testing.assert_array_equal(pa.values, pb.values)
        bytes_a = open(a.checkpoint_path, "rb").read()
        bytes_b = open(b.checkpoint_path, "rb").read()
        assert bytes_a == bytes_b

    def test_seed_changes_result(self):
        o, d, c = tiny_dataset()
        a = tr.train(o, d, c, tiny_train_config(seed=0), 1.0, 4.0)
        b = tr.train(o, d, c, tiny_train_config(seed=1), 1.0, 4.0)
        diffs = [
            not np.array_equal(pa.values, pb.values)
            for pa, pb in zip(a.params.parameters(), b.params.parameters())
        ]
        assert any(diffs)

    def test_checkpoint_files_and_metadata(self, tmp_path):
        o, d, c = tiny_dataset()
        cfg = tiny_train_config(iterations=10, checkpoint_every=4)
        res = tr.train(o, d, c, cfg, 1.0, 4.0, out_dir=str(tmp_path))
        assert (tmp_path / "checkpoint_final.rfld").exists()
        assert (tmp_path / "checkpoint_000004.rfld").exists()
        meta = json.loads((tmp_path / "checkpoint_final.rfld.meta").read_text())
        assert meta["config_hash"] == cfg.config_hash()
        assert meta["step"] == 10

    def test_resumes_from_provided_params(self):
        o, d, c = tiny_dataset()
        cfg = tiny_train_config(iterations=5)
        first = tr.train(o, d, c, cfg, 1.0, 4.0)
        second = tr.train(o, d, c, cfg, 1.0, 4.0, params=first.params)
        assert second.params is first.params

    def test_log_line_format(self):
        entry = tr.TrainLogEntry(12, 0.5, 0.25, 0.125, 0.625, 1.5e-4)
        line = entry.line()
        assert "step     12" in line
        assert "data 0.500000" in line
        assert "lr 1.500e-04" in line

    def test_log_callback_receives_lines(self):
        o, d, c = tiny_dataset()
        seen = []
        tr.train(
            o, d, c, tiny_train_config(iterations=3), 1.0, 4.0,
            log_every=1, log_fn=seen.append,
        )
        assert len(seen) >= 3
        assert all(isinstance(s, str) and "data" in s for s in seen)
