import math

import numpy as np
import pytest
import torch

from fieldmatch import tensor as T
from fieldmatch.scale import (
    PREFIX, ScaleConfig, autodis_encode, encode_categorical, encode_scale, fuse_scale, init_scale_params, scale_score,
)

F64 = torch.float64


def store_for(cfg, seed=0):
    store = T.ParamStore(dtype=F64)
    init_scale_params(store, cfg, np.random.default_rng(seed))
    return store


def set_param(store, name, value):
    with torch.no_grad():
        store[PREFIX + name].copy_(torch.as_tensor(np.asarray(value, dtype=np.float64)))


def autodis_oracle(v, w, W, alpha, ME, slope=0.01):
    """Scalar loops, no shared code with the encoder."""
    H = len(w)
    h = [w[i] * v if w[i] * v > 0 else slope * w[i] * v for i in range(H)]
    vt = [sum(W[i][j] * h[j] for j in range(H)) + alpha * h[i] for i in range(H)]
    top = max(vt)
    e = [math.exp(x - top) for x in vt]
    p = [x / sum(e) for x in e]
    return [sum(p[i] * ME[i][k] for i in range(H)) for k in range(len(ME[0]))]


class TestAutoDis:
    def test_two_bucket_fixture(self):
        store = store_for(ScaleConfig((), 1, d_s=2, buckets=2))
        set_param(store, "w0", [1.0, -1.0])
        set_param(store, "W0", np.eye(2))
        set_param(store, "ME0", np.eye(2))
        out = autodis_encode(store, 0, torch.tensor([2.0], dtype=F64))[0].detach().numpy()
        expected = autodis_oracle(2.0, [1, -1], np.eye(2), 1.0, np.eye(2))
        assert np.allclose(out, expected, atol=1e-12)
        # h=[2, -0.02], v~=[4, -0.04], softmax -> 1 / (1 + exp(-4.04))
        assert out == pytest.approx([0.9827068, 0.0172932], abs=1e-7)

    def test_random_against_oracle(self, rng):
        store = store_for(ScaleConfig((), 1, d_s=3, buckets=5), seed=2)
        p = store.numpy()
        for v in rng.normal(0, 2, 20):
            out = autodis_encode(store, 0, torch.tensor([v], dtype=F64))[0].detach().numpy()
            ref = autodis_oracle(v, p[PREFIX + "w0"], p[PREFIX + "W0"], 1.0, p[PREFIX + "ME0"])
            assert np.allclose(out, ref, atol=1e-12)

    def test_uniform_case_is_mean_of_meta_embeddings(self, rng):
        store = store_for(ScaleConfig((), 1, d_s=4, buckets=6))
        set_param(store, "w0", np.full(6, 0.7))
        set_param(store, "W0", np.zeros((6, 6)))
        out = autodis_encode(store, 0, torch.tensor([1.9], dtype=F64))[0]
        assert torch.allclose(out, store[PREFIX + "ME0"].mean(0), atol=1e-12)

    def test_convex_hull_and_weight_sum(self, rng):
        store = store_for(ScaleConfig((), 1, d_s=5, buckets=8), seed=1)
        out, weights = autodis_encode(store, 0, torch.as_tensor(rng.normal(0, 5, 500)), return_weights=True)
        ME = store[PREFIX + "ME0"]
        assert torch.all(out >= ME.min(0).values - 1e-12) and torch.all(out <= ME.max(0).values + 1e-12)
        assert torch.allclose(weights.sum(-1), torch.ones(500, dtype=F64), atol=1e-6)

    def test_continuity(self):
        store = store_for(ScaleConfig((), 1, d_s=4, buckets=8), seed=3)
        delta = 1e-6
        for v in (-1.0, 0.0, 0.3, 2.0):
            a = autodis_encode(store, 0, torch.tensor([v], dtype=F64))
            b = autodis_encode(store, 0, torch.tensor([v + delta], dtype=F64))
            assert float((a - b).detach().abs().max()) < 100 * delta

    def test_needs_two_buckets(self):
        with pytest.raises(ValueError):
            store_for(ScaleConfig((), 1, buckets=1))


class TestCategorical:
    def test_row_selection_and_gradient(self):
        store = store_for(ScaleConfig((3,), 0, d_s=3))
        set_param(store, "E0", np.eye(3))
        row = encode_categorical(store, 0, torch.tensor(1))
        assert row.tolist() == [0.0, 1.0, 0.0]
        row.sum().backward()
        grad = store.params[PREFIX + "E0"].grad.numpy()
        assert grad.tolist() == [[0, 0, 0], [1, 1, 1], [0, 0, 0]]

    def test_out_of_range(self):
        store = store_for(ScaleConfig((3,), 0))
        with pytest.raises(IndexError):
            encode_categorical(store, 0, torch.tensor(3))


class TestFusion:
    cfg = ScaleConfig((3, 2), 2, d_s=4, buckets=3)

    def test_zero_weights_give_half(self, rng):
        store = store_for(self.cfg)
        for name in store.names(PREFIX):
            if store.params[name].trainable:
                set_param(store, name[len(PREFIX):], np.zeros(store[name].shape))
        _, p = encode_scale(store, [[1, 0]], [[3.0, -2.0]])
        assert p.item() == 0.5

    def test_score_in_open_interval(self, rng):
        store = store_for(self.cfg, seed=5)
        cat = np.column_stack([rng.integers(0, 3, 1000), rng.integers(0, 2, 1000)])
        _, p = encode_scale(store, cat, rng.normal(0, 10, (1000, 2)))
        assert torch.all((p > 0) & (p < 1))

    def test_permuting_companies_permutes_scores(self, rng):
        store = store_for(self.cfg, seed=6)
        cat = np.column_stack([rng.integers(0, 3, 7), rng.integers(0, 2, 7)])
        num = rng.normal(size=(7, 2))
        _, p = encode_scale(store, cat, num)
        perm = rng.permutation(7)
        _, q = encode_scale(store, cat[perm], num[perm])
        assert torch.allclose(p[perm], q, atol=1e-14)
        singles = [encode_scale(store, cat[i : i + 1], num[i : i + 1])[1].item() for i in range(7)]
        assert np.allclose(singles, p.detach().numpy(), atol=1e-14)

    def test_missing_embeddings(self):
        store = store_for(self.cfg)
        with pytest.raises(ValueError):
            fuse_scale(store, [torch.zeros(4, dtype=F64)], [])

    def test_mlp_shapes(self):
        store = store_for(self.cfg)
        assert store[PREFIX + "mlp.w1"].shape == (4 * 4, 8)
        assert store[PREFIX + "mlp.w2"].shape == (8, 4)
        assert scale_score(store, torch.zeros(2, 4, dtype=F64)).shape == (2,)

    def test_gradient_check(self, rng):
        store = store_for(self.cfg, seed=7)
        cat = np.column_stack([rng.integers(0, 3, 4), rng.integers(0, 2, 4)])
        num = rng.normal(size=(4, 2))
        y = torch.tensor([1.0, 0.0, 1.0, 0.0], dtype=F64)
        err = T.grad_check(lambda s: T.binary_cross_entropy(encode_scale(s, cat, num)[1], y).mean(), store, max_entries=6)
        assert err < 1e-4
