import math

import pytest
import torch

from tsadiff import substrate

from fd import fd_gradients, max_rel_error


class TestForwardBackward:
    def test_square(self):
        x = torch.tensor(3.0, dtype=torch.float64, requires_grad=True)
        loss, grads = substrate.forward_backward(lambda: x * x, {"x": x})
        assert loss == 9.0
        assert grads["x"].item() == pytest.approx(6.0)

    def test_sum_of_squares(self):
        x = torch.tensor([1.0, 2.0], dtype=torch.float64, requires_grad=True)
        loss, grads = substrate.forward_backward(lambda: (x * x).sum(), {"x": x})
        assert loss == 5.0
        assert torch.allclose(grads["x"], torch.tensor([2.0, 4.0], dtype=torch.float64))

    def test_nonfinite_loss_raises(self):
        x = torch.tensor(0.0, dtype=torch.float64, requires_grad=True)
        with pytest.raises(substrate.NumericError):
            substrate.forward_backward(lambda: 1.0 / x, {"x": x})

    def test_composition_matches_finite_differences(self):
        torch.manual_seed(0)
        w = torch.randn(4, 3, dtype=torch.float64, requires_grad=True)
        b = torch.randn(4, dtype=torch.float64, requires_grad=True)
        x = torch.randn(5, 3, dtype=torch.float64)
        params = {"w": w, "b": b}

        def loss_fn():
            return torch.tanh(x @ w.T + b).pow(2).mean()

        _, grads = substrate.forward_backward(loss_fn, params)
        numeric = fd_gradients(loss_fn, params)
        assert max_rel_error(grads, numeric) < 1e-4


class TestAdam:
    def test_zero_gradient_no_change(self):
        p = torch.tensor([1.0, 2.0])
        opt = substrate.Adam({"p": p}, lr=0.1)
        opt.step({"p": torch.zeros(2)})
        assert torch.equal(p, torch.tensor([1.0, 2.0]))

    def test_first_step_hand_computed(self):
        # m_hat = v_hat = 1 at t=1, so the update is lr / (1 + eps)
        p = torch.tensor(1.0, dtype=torch.float64)
        opt = substrate.Adam({"p": p}, lr=0.1)
        opt.step({"p": torch.tensor(1.0, dtype=torch.float64)})
        assert p.item() == pytest.approx(1.0 - 0.1 / (1.0 + 1e-8), abs=1e-9)

    def test_constant_gradient_monotone(self):
        p = torch.tensor(1.0)
        opt = substrate.Adam({"p": p}, lr=0.1)
        prev = p.item()
        for _ in range(5):
            opt.step({"p": torch.tensor(0.5)})
            assert p.item() < prev
            prev = p.item()

    def test_shape_mismatch(self):
        p = torch.zeros(3)
        opt = substrate.Adam({"p": p}, lr=0.1)
        with pytest.raises(ValueError):
            opt.step({"p": torch.zeros(2)})

    def test_invalid_lr(self):
        with pytest.raises(ValueError):
            substrate.Adam({"p": torch.zeros(1)}, lr=0.0)


class TestStandardizeWeights:
    def test_hand_case(self):
        k = torch.tensor([[1.0, 2.0, 3.0]], dtype=torch.float64)
        out = substrate.standardize_weights(k)
        expected = torch.tensor([[-1.2247, 0.0, 1.2247]], dtype=torch.float64)
        assert torch.allclose(out, expected, atol=1e-3)

    def test_constant_channel_zero(self):
        k = torch.full((1, 3), 5.0)
        assert substrate.standardize_weights(k).abs().max() < 1e-4

    def test_moments(self):
        torch.manual_seed(1)
        k = torch.randn(8, 4, 3, 3, dtype=torch.float64) * 3 + 1
        out = substrate.standardize_weights(k).reshape(8, -1)
        assert out.mean(dim=1).abs().max() < 1e-6
        assert (out.var(dim=1, unbiased=False) - 1).abs().max() < 1e-3

    def test_near_idempotent(self):
        torch.manual_seed(2)
        k = torch.randn(4, 9, dtype=torch.float64)
        once = substrate.standardize_weights(k)
        twice = substrate.standardize_weights(once)
        assert torch.allclose(once, twice, atol=1e-3)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        torch.manual_seed(3)
        params = {"enc.w": torch.randn(3, 4), "enc.b": torch.randn(4), "s": torch.tensor(2.5)}
        meta = {"model": "ae", "T": 100}
        path = tmp_path / "model.ckpt"
        substrate.save_checkpoint(path, params, meta)
        loaded, meta2 = substrate.load_checkpoint(path)
        assert meta2 == meta
        assert set(loaded) == set(params)
        for name in params:
            assert torch.equal(loaded[name], params[name])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError):
            substrate.load_checkpoint(path)


class TestDeterminism:
    def test_seeded_noise_repeats(self):
        a = torch.randn(5, generator=substrate.seed_all(7))
        b = torch.randn(5, generator=substrate.seed_all(7))
        assert torch.equal(a, b)
