import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from renyi_ada.entropy import posterior_predictive
from renyi_ada.model import (LOGIT_CLAMP, EvidentialModel, backprop, forward, init_model,
                             load_checkpoint, save_checkpoint)


def zero_model(d_in=3, h=4, f=4, c=3):
    return EvidentialModel(np.zeros((d_in, h)), np.zeros(h), np.zeros((h, f)), np.zeros(f),
                           np.zeros((f, c)), np.zeros(c))


class TestInit:
    def test_seeded_bit_identical(self):
        assert init_model(5, 8, 3, seed=4).equals(init_model(5, 8, 3, seed=4))
        assert not init_model(5, 8, 3, seed=4).equals(init_model(5, 8, 3, seed=5))

    def test_shapes(self):
        m = init_model(8, 32, 11, seed=0, hidden=16)
        assert m.wh.shape == (32, 11) and m.bh.shape == (11,)
        assert m.w1.shape == (8, 16) and m.w2.shape == (16, 32)
        assert (m.d_in, m.hidden, m.d_feat, m.num_classes) == (8, 16, 32, 11)

    def test_initial_order_and_biases(self):
        m = init_model(4, 6, 3, seed=1)
        assert m.s == 0.5
        assert not m.b1.any() and not m.b2.any() and not m.bh.any()

    def test_rejects_empty_dims(self):
        with pytest.raises(ValueError):
            init_model(0, 4, 3, seed=0)


class TestForward:
    def test_zero_model_gives_flat_evidence(self):
        out = forward(zero_model(), np.array([0.3, -1.0, 2.0]))
        assert_array_equal(out.alpha, np.ones(3))
        assert out.dirichlet.alpha0 == 3.0

    def test_constructed_head(self):
        m = zero_model()
        m.bh[:] = [np.log(2.0), 0.0, 0.0]
        assert_allclose(forward(m, np.zeros(3)).alpha, [2.0, 1.0, 1.0], rtol=1e-15)

    def test_predictive_sums_to_one(self):
        m = init_model(3, 4, 5, seed=2)
        x = np.random.default_rng(0).normal(size=(10, 3))
        assert_allclose(posterior_predictive(forward(m, x).alpha).sum(axis=1), 1.0, rtol=1e-14)

    def test_logit_clamp(self):
        m = zero_model()
        m.bh[:] = [40.0, -45.0, 0.0]
        out = forward(m, np.zeros(3))
        assert_allclose(out.alpha, [np.exp(LOGIT_CLAMP), np.exp(-LOGIT_CLAMP), 1.0])
        assert m.clamp_events == 2

    def test_rejects_bad_input(self):
        m = zero_model()
        with pytest.raises(ValueError):
            forward(m, np.array([1.0, np.nan, 0.0]))
        with pytest.raises(ValueError):
            forward(m, np.zeros(4))

    def test_deterministic(self):
        m = init_model(3, 4, 3, seed=7)
        x = np.random.default_rng(1).normal(size=(6, 3))
        assert_array_equal(forward(m, x).alpha, forward(m, x).alpha)


class TestBackprop:
    def test_linear_head_gradient(self):
        m = init_model(3, 4, 3, seed=3)
        x = np.random.default_rng(2).normal(size=(5, 3))
        fr = forward(m, x)
        up = np.random.default_rng(3).normal(size=(5, 3))
        g = backprop(m, fr, up)
        assert_allclose(g["wh"], fr.features.T @ up)
        assert_allclose(g["bh"], up.sum(axis=0))

    def test_matches_finite_differences(self):
        m = init_model(3, 4, 2, seed=9)
        x = np.random.default_rng(4).normal(size=(4, 3))
        w = np.random.default_rng(5).normal(size=(4, 2))
        v = np.random.default_rng(6).normal(size=(4, 4))

        def obj(model):
            fr = forward(model, x)
            return float((w * fr.logits).sum() + (v * fr.features).sum())

        fr = forward(m, x)
        g = backprop(m, fr, w, v)
        for name in ("w1", "b1", "w2", "b2", "wh", "bh"):
            arr = getattr(m, name)
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + 1e-6
                up = obj(m)
                arr[idx] = old - 1e-6
                dn = obj(m)
                arr[idx] = old
                assert_allclose(g[name][idx], (up - dn) / 2e-6, rtol=1e-6, atol=1e-8)

    def test_clamped_logits_block_gradient(self):
        m = zero_model()
        m.bh[:] = [40.0, 0.0, 0.0]
        fr = forward(m, np.zeros((1, 3)))
        g = backprop(m, fr, np.ones((1, 3)))
        assert_allclose(g["bh"], [0.0, 1.0, 1.0])


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        m = init_model(3, 5, 4, seed=11, hidden=6)
        m.s = 0.123456789012345
        save_checkpoint(tmp_path / "c.json", m, step=17)
        back, step = load_checkpoint(tmp_path / "c.json")
        assert step == 17 and back.equals(m)

    def test_bytes_are_stable(self, tmp_path):
        m = init_model(3, 5, 4, seed=11)
        save_checkpoint(tmp_path / "a.json", m)
        save_checkpoint(tmp_path / "b.json", m.copy())
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_rejects_foreign_files(self, tmp_path):
        (tmp_path / "x.json").write_text(json.dumps({"format": "other"}))
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "x.json")

    def test_rejects_shape_mismatch(self, tmp_path):
        m = init_model(3, 5, 4, seed=11)
        save_checkpoint(tmp_path / "c.json", m)
        data = json.loads((tmp_path / "c.json").read_text())
        data["params"]["bh"] = [0.0]
        (tmp_path / "c.json").write_text(json.dumps(data))
        with pytest.raises(ValueError, match="bh"):
            load_checkpoint(tmp_path / "c.json")
