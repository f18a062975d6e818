import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import layoutmuse.autodiff as ad
from layoutmuse.autodiff import Tensor, checkpoint as ckpt_io, ops
from layoutmuse.errors import FormatError, NonFiniteValue, NonScalarOutput


def fd_grad(make_loss, leaf, eps=1e-6):
    """Central-difference gradient of a scalar-valued closure w.r.t. a leaf."""
    flat = leaf.data.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = make_loss().item()
        flat[i] = orig - eps
        fm = make_loss().item()
        flat[i] = orig
        out[i] = (fp - fm) / (2 * eps)
    return out.reshape(leaf.shape)


def assert_grad_close(make_loss, leaves, rtol=1e-6, eps=1e-6):
    loss = make_loss()
    ad.zero_grads(leaves)
    ad.backward(loss)
    for leaf in leaves:
        num = fd_grad(make_loss, leaf, eps=eps)
        ana = leaf.grad.data if leaf.grad is not None else np.zeros_like(num)
        denom = np.maximum(np.maximum(np.abs(num), np.abs(ana)), 1e-3)
        assert (np.abs(num - ana) / denom).max() <= rtol


class TestTensorBasics:
    def test_dtype_preserved(self):
        assert Tensor(np.zeros(3, np.float32)).data.dtype == np.float32
        assert Tensor(np.zeros(3, np.float64)).data.dtype == np.float64

    def test_python_operators(self):
        a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        out = ad.tsum((a * 3 - 1) / 2 + a**2)
        ad.backward(out)
        assert np.allclose(a.grad.data, 1.5 + 2 * a.data)

    def test_backward_requires_scalar(self):
        a = Tensor(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(NonScalarOutput):
            ad.backward(ad.mul(a, a))

    def test_no_grad_blocks_graph(self):
        a = Tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            out = ad.mul(a, a)
        assert not out.requires_grad

    def test_enable_grad_inside_no_grad(self):
        a = Tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            with ad.enable_grad():
                out = ad.mul(a, a)
        assert out.requires_grad

    def test_grad_accumulates(self):
        a = Tensor(np.array([2.0]), requires_grad=True)
        ad.backward(ad.tsum(ad.mul(a, a)))
        ad.backward(ad.tsum(ad.mul(a, a)))
        assert a.grad.data == pytest.approx([8.0])

    def test_nonfinite_detection(self):
        ad.set_check_finite(True)
        try:
            with pytest.raises(NonFiniteValue):
                ad.div(Tensor(np.ones(2)), Tensor(np.zeros(2)))
        finally:
            ad.set_check_finite(False)

    def test_detach_cuts_graph(self):
        a = Tensor(np.ones(3), requires_grad=True)
        b = ad.mul(a, a).detach()
        out = ad.tsum(ad.mul(b, b))
        ad.zero_grads([a])
        ad.backward(out)
        assert a.grad is None


class TestElementwiseGrads:
    def test_add_mul_div(self):
        rng = np.random.default_rng(0)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 4)) + 3.0, requires_grad=True)
        assert_grad_close(lambda: ad.tsum(ad.div(ad.mul(a, ad.add(a, b)), b)), [a, b])

    def test_broadcast(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(1, 3)), requires_grad=True)
        c = Tensor(rng.normal(size=()), requires_grad=True)
        assert_grad_close(lambda: ad.tsum(ad.add(ad.mul(a, b), c)), [a, b, c])

    def test_exp_pow_sqrt(self):
        rng = np.random.default_rng(2)
        a = Tensor(np.abs(rng.normal(size=(3, 3))) + 0.5, requires_grad=True)
        assert_grad_close(
            lambda: ad.tsum(ad.add(ad.texp(ad.neg(a)), ad.add(ad.pow_const(a, 3), ad.tsqrt(a)))),
            [a],
        )

    def test_tanh_leaky(self):
        rng = np.random.default_rng(3)
        a = Tensor(rng.normal(size=(4, 4)) * 2 + 0.37, requires_grad=True)
        assert_grad_close(lambda: ad.tsum(ad.tanh(a)), [a])
        assert_grad_close(lambda: ad.tsum(ad.leaky_relu(a, 0.2)), [a])

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_mul_grad_property(self, seed):
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        out = ad.tsum(ad.mul(a, b))
        ad.backward(out)
        assert np.allclose(a.grad.data, b.data) and np.allclose(b.grad.data, a.data)


class TestShapeGrads:
    def test_matmul(self):
        rng = np.random.default_rng(4)
        a = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        b = Tensor(rng.normal(size=(5, 2)), requires_grad=True)
        p = Tensor(rng.normal(size=(3, 2)))
        assert_grad_close(lambda: ad.tsum(ad.mul(ad.matmul(a, b), p)), [a, b])

    def test_reshape_permute_concat_slice(self):
        rng = np.random.default_rng(5)
        a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        p = Tensor(rng.normal(size=(4, 2, 3)))

        def loss():
            t = ad.permute(a, (2, 0, 1))
            t = ad.concat([t, t], axis=0)
            t = ad.slice_axis(t, 0, 2, 6)
            return ad.tsum(ad.mul(t, p))

        assert_grad_close(loss, [a])

    def test_sum_mean_axes(self):
        rng = np.random.default_rng(6)
        a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        assert_grad_close(lambda: ad.tsum(ad.mul(ad.tmean(a, axis=2), ad.tmean(a, axis=2))), [a])
        assert_grad_close(
            lambda: ad.tsum(ad.mul(ad.tsum(a, axis=(0, 2)), ad.tsum(a, axis=(0, 2)))), [a]
        )

    def test_l2_norm_axis(self):
        rng = np.random.default_rng(7)
        a = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        assert_grad_close(lambda: ad.tsum(ad.l2_norm(a, axis=1)), [a])


class TestConvGrads:
    def test_out_size_formulas(self):
        assert ops.conv_out_size(32, 4, 2, 1) == 16
        assert ops.conv_transpose_out_size(8, 4, 2, 1) == 16
        assert ops.conv_out_size(5, 3, 1, 1) == 5
        assert ops.conv_transpose_out_size(16, 3, 1, 1) == 16

    def test_conv2d_matches_direct(self):
        rng = np.random.default_rng(8)
        x = Tensor(rng.normal(size=(1, 1, 4, 4)))
        w = Tensor(rng.normal(size=(1, 1, 3, 3)))
        out = ops.conv2d(x, w, stride=1, pad=0)
        expect = sum(
            x.data[0, 0, i : i + 2, j : j + 2] * w.data[0, 0, i, j]
            for i in range(3)
            for j in range(3)
        )
        assert np.allclose(out.data[0, 0], expect, atol=1e-12)

    def test_conv2d_grads(self):
        rng = np.random.default_rng(9)
        x = Tensor(rng.normal(size=(2, 3, 6, 6)), requires_grad=True)
        w = Tensor(rng.normal(size=(4, 3, 3, 3)) * 0.3, requires_grad=True)
        b = Tensor(rng.normal(size=(4,)) * 0.1, requires_grad=True)
        p = Tensor(rng.normal(size=(2, 4, 3, 3)))
        assert_grad_close(lambda: ad.tsum(ad.mul(ops.conv2d(x, w, b, 2, 1), p)), [x, w, b])

    def test_conv_transpose_inverts_conv_shapes(self):
        rng = np.random.default_rng(10)
        x = Tensor(rng.normal(size=(1, 2, 8, 8)))
        w = Tensor(rng.normal(size=(2, 3, 4, 4)))
        assert ops.conv_transpose2d(x, w, stride=2, pad=1).shape == (1, 3, 16, 16)

    def test_conv_transpose_grads(self):
        rng = np.random.default_rng(11)
        x = Tensor(rng.normal(size=(2, 3, 5, 5)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 2, 4, 4)) * 0.3, requires_grad=True)
        b = Tensor(rng.normal(size=(2,)) * 0.1, requires_grad=True)
        p = Tensor(rng.normal(size=(2, 2, 10, 10)))
        assert_grad_close(
            lambda: ad.tsum(ad.mul(ops.conv_transpose2d(x, w, b, 2, 1), p)), [x, w, b]
        )

    def test_conv_transpose_is_adjoint_of_conv(self):
        # <conv(x), y> must equal <x, conv_transpose(y)> with shared weights.
        rng = np.random.default_rng(12)
        x = np.random.default_rng(1).normal(size=(1, 2, 8, 8))
        y = rng.normal(size=(1, 3, 4, 4))
        w = rng.normal(size=(3, 2, 4, 4))  # Cout,Cin,k,k for conv
        cx = ops.conv2d(Tensor(x), Tensor(w), stride=2, pad=1).data
        ty = ops.conv_transpose2d(Tensor(y), Tensor(np.transpose(w, (0, 1, 2, 3))), stride=2, pad=1)
        # conv_transpose weight layout is (Cin, Cout, k, k) of the transpose op;
        # passing w as (3, 2, 4, 4) maps 3->2 channels.
        assert np.allclose((cx * y).sum(), (x * ty.data).sum(), atol=1e-9)


class TestBatchnorm:
    def test_train_normalizes(self):
        rng = np.random.default_rng(13)
        x = Tensor(rng.normal(2.0, 3.0, size=(4, 3, 5, 5)))
        gamma, beta = Tensor(np.ones(3)), Tensor(np.zeros(3))
        out = ops.batchnorm(x, gamma, beta, np.zeros(3), np.ones(3), training=True)
        assert np.abs(out.data.mean(axis=(0, 2, 3))).max() < 1e-10
        assert np.abs(out.data.std(axis=(0, 2, 3)) - 1).max() < 1e-3

    def test_running_stats_update(self):
        rng = np.random.default_rng(14)
        x = Tensor(rng.normal(1.0, 2.0, size=(8, 2, 4, 4)))
        rm, rv = np.zeros(2), np.ones(2)
        gamma, beta = Tensor(np.ones(2)), Tensor(np.zeros(2))
        ops.batchnorm(x, gamma, beta, rm, rv, training=True)
        mean = x.data.mean(axis=(0, 2, 3))
        assert np.allclose(rm, 0.1 * mean, atol=1e-10)

    def test_eval_uses_running_stats(self):
        x = Tensor(np.full((2, 1, 2, 2), 5.0))
        rm, rv = np.array([3.0]), np.array([4.0])
        out = ops.batchnorm(x, Tensor(np.ones(1)), Tensor(np.zeros(1)), rm, rv, training=False)
        assert np.allclose(out.data, (5.0 - 3.0) / np.sqrt(4.0 + 1e-5), atol=1e-6)

    def test_grads(self):
        rng = np.random.default_rng(15)
        x = Tensor(rng.normal(size=(3, 2, 4, 4)), requires_grad=True)
        gamma = Tensor(rng.normal(size=(2,)), requires_grad=True)
        beta = Tensor(rng.normal(size=(2,)), requires_grad=True)
        p = Tensor(rng.normal(size=(3, 2, 4, 4)))
        rm, rv = np.zeros(2), np.ones(2)
        assert_grad_close(
            lambda: ad.tsum(ad.mul(ops.batchnorm(x, gamma, beta, rm.copy(), rv.copy(), True), p)),
            [x, gamma, beta],
            rtol=1e-5,
        )


class TestGatherAndLinearMap:
    def test_gather_flat_values(self):
        x = Tensor(np.arange(12.0).reshape(3, 4))
        out = ops.gather_flat(x, np.array([0, 5, 11]))
        assert np.allclose(out.data, [0.0, 5.0, 11.0])

    def test_gather_flat_grad_scatter(self):
        x = Tensor(np.zeros((2, 3)), requires_grad=True)
        out = ad.tsum(ops.gather_flat(x, np.array([1, 1, 4])))
        ad.backward(out)
        assert np.allclose(x.grad.data, [[0, 2, 0], [0, 1, 0]])


class TestSecondOrder:
    def test_grad_graph_is_differentiable(self):
        # f(x) = sum(x^3); grad = 3x^2; sum(grad) differentiated again = 6x.
        x = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
        y = ad.tsum(ad.pow_const(x, 3))
        g = ad.grad_graph(y, x)
        ad.zero_grads([x])  # drop first-order accumulation from grad_graph
        ad.backward(ad.tsum(g))
        assert np.allclose(x.grad.data, 6 * x.data)

    def test_double_backward_through_matmul(self):
        rng = np.random.default_rng(16)
        w = Tensor(rng.normal(size=(3, 1)), requires_grad=True)
        x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        score = ad.tsum(ad.matmul(x, w))
        g = ad.grad_graph(score, x)  # = broadcast of w^T
        loss = ad.tsum(ad.mul(g, g))
        ad.zero_grads([w])
        ad.backward(loss)
        # loss = 4 * sum(w^2) so dloss/dw = 8w
        assert np.allclose(w.grad.data, 8 * w.data, atol=1e-10)

    def test_penalty_closed_form(self):
        w = Tensor(np.array([3.0, 4.0]), requires_grad=True)
        x = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
        score = ad.tsum(ad.mul(x, ad.reshape(w, (1, 2))))
        g = ad.grad_graph(score, x)
        pen = ad.pow_const(ad.add(ad.l2_norm(g), -1.0), 2)
        ad.zero_grads([w])  # drop first-order accumulation from grad_graph
        ad.backward(pen)
        assert pen.item() == pytest.approx(16.0, abs=1e-9)
        assert np.allclose(w.grad.data, [4.8, 6.4], atol=1e-9)


class TestCheckpointFormat:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(17)
        state = {
            "a.weight": rng.normal(size=(4, 7)).astype(np.float32),
            "b.bias": rng.normal(size=(13,)).astype(np.float32),
            "scalar": np.array([3.0], dtype=np.float32),
        }
        path = tmp_path / "m.ckpt"
        ckpt_io.save(path, state, config_hash="abc123", extra={"note": 1})
        loaded, sidecar = ckpt_io.load(path)
        assert set(loaded) == set(state)
        for k in state:
            assert loaded[k].shape == state[k].shape
            assert loaded[k].tobytes() == state[k].tobytes()
        assert sidecar["config_hash"] == "abc123"
        assert sidecar["note"] == 1

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.ckpt"
        p.write_bytes(b"XXXX" + b"\x00" * 32)
        with pytest.raises(FormatError):
            ckpt_io.load(p)

    def test_truncated(self, tmp_path):
        path = tmp_path / "m.ckpt"
        ckpt_io.save(path, {"w": np.ones((3, 3), np.float32)})
        (tmp_path / "cut.ckpt").write_bytes(path.read_bytes()[:-5])
        with pytest.raises(FormatError):
            ckpt_io.load(tmp_path / "cut.ckpt")


class TestFloat32Gradients:
    def test_rel_tolerance_1e3(self):
        rng = np.random.default_rng(18)
        a32 = Tensor(rng.normal(size=(4, 4)).astype(np.float32), requires_grad=True)
        b32 = Tensor(rng.normal(size=(4, 4)).astype(np.float32), requires_grad=True)
        p = Tensor(rng.normal(size=(4, 4)).astype(np.float32))

        def loss():
            return ad.tsum(ad.mul(ad.tanh(ad.matmul(a32, b32)), p))

        out = loss()
        ad.zero_grads([a32, b32])
        ad.backward(out)
        for leaf in (a32, b32):
            num = fd_grad(loss, leaf, eps=1e-2)
            ana = leaf.grad.data
            denom = np.maximum(np.maximum(np.abs(num), np.abs(ana)), 1e-2)
            assert (np.abs(num - ana) / denom).max() <= 1e-3
