import math

import numpy as np
import numpy.testing as npt
import pytest

from srpnet import tensor as T
from srpnet.gradcheck import grad_check
from srpnet.optim import NesterovSGD, step_lr
from srpnet.tensor import RunningStats, ShapeError, Tensor

from oracles import conv2d_naive, matmul_loops


def param(a):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class TestConv2d:
    def test_ones(self):
        out = T.conv2d(Tensor(np.ones((1, 1, 3, 3), np.float32)), Tensor(np.ones((1, 1, 3, 3), np.float32)))
        assert out.shape == (1, 1, 1, 1)
        assert out.data.item() == 9

    def test_identity_kernel(self, rng):
        x = rng.standard_normal((2, 3, 5, 5)).astype(np.float32)
        k = np.zeros((3, 3, 1, 1), np.float32)
        k[[0, 1, 2], [0, 1, 2]] = 1
        npt.assert_array_equal(T.conv2d(Tensor(x), Tensor(k)).data, x)

    @pytest.mark.parametrize("stride,pad,ksize", [(1, 0, 3), (1, 1, 3), (2, 1, 3), (2, 0, 1), (1, 2, 5)])
    def test_matches_naive(self, rng, stride, pad, ksize):
        x = rng.standard_normal((2, 3, 8, 8))
        k = rng.standard_normal((4, 3, ksize, ksize))
        got = T.conv2d(Tensor(x), Tensor(k), stride, pad).data
        want = conv2d_naive(x, k, stride, pad)
        assert got.shape == want.shape
        assert np.abs(got - want).max() < 1e-6

    @pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1)])
    def test_matches_naive_f32(self, rng, stride, pad):
        # unit-scale outputs; f32 rounding of N(0,1) data alone is ~3e-6
        x = rng.uniform(-0.5, 0.5, (2, 3, 8, 8)).astype(np.float32)
        k = rng.uniform(-0.5, 0.5, (4, 3, 3, 3)).astype(np.float32)
        got = T.conv2d(Tensor(x), Tensor(k), stride, pad).data
        assert got.dtype == np.float32
        assert np.abs(got - conv2d_naive(x, k, stride, pad)).max() < 1e-6

    def test_output_extent(self):
        out = T.conv2d(Tensor(np.zeros((1, 2, 9, 7))), Tensor(np.zeros((3, 2, 3, 3))), stride=2, pad=1)
        assert out.shape == (1, 3, (9 + 2 - 3) // 2 + 1, (7 + 2 - 3) // 2 + 1)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError, match="channels"):
            T.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))

    def test_kernel_too_large(self):
        with pytest.raises(ShapeError):
            T.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))))

    @pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0)])
    def test_gradient(self, rng, stride, pad):
        x = param(rng.standard_normal((2, 3, 6, 6)))
        k = param(rng.standard_normal((2, 3, 3, 3)))
        assert grad_check(lambda a, b: T.conv2d(a, b, stride, pad), [x, k]).passed


class TestAffine:
    def test_identity(self):
        out = T.affine(Tensor([[1.0, 0.0]]), Tensor(np.eye(2)), Tensor(np.zeros(2)))
        npt.assert_array_equal(out.data, [[1.0, 0.0]])

    def test_bias_only(self):
        b = np.array([0.5, -2.0, 3.0])
        out = T.affine(Tensor(np.ones((2, 4))), Tensor(np.zeros((4, 3))), Tensor(b))
        npt.assert_array_equal(out.data, np.stack([b, b]))

    def test_matches_loops(self, rng):
        x, w, b = rng.standard_normal((4, 3)), rng.standard_normal((3, 2)), rng.standard_normal(2)
        npt.assert_allclose(T.affine(Tensor(x), Tensor(w), Tensor(b)).data, matmul_loops(x, w, b), atol=1e-6)

    def test_dim_error(self):
        with pytest.raises(ShapeError):
            T.affine(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))), Tensor(np.zeros(2)))

    def test_gradient(self, rng):
        args = [param(rng.standard_normal(s)) for s in [(4, 3), (3, 5), (5,)]]
        assert grad_check(T.affine, args).passed


class TestBatchNorm:
    def test_constant_channel_gives_beta(self):
        x = Tensor(np.full((4, 2, 3, 3), 7.0))
        beta = np.array([0.3, -1.2])
        out = T.batchnorm2d(x, Tensor(np.array([2.0, 5.0])), Tensor(beta), RunningStats(2, np.float64), True)
        npt.assert_allclose(out.data, np.broadcast_to(beta[None, :, None, None], x.shape), atol=1e-12)

    def test_standardized_input_passes_through(self, rng):
        x = rng.standard_normal((8, 3, 4, 4))
        x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
        out = T.batchnorm2d(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), RunningStats(3, np.float64), True)
        assert np.abs(out.data - x).max() < 1e-4

    def test_running_stats_update(self, rng):
        x = rng.standard_normal((4, 2, 3, 3)) * 2 + 1
        stats = RunningStats(2, np.float64)
        T.batchnorm2d(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), stats, True)
        npt.assert_allclose(stats.mean, 0.1 * x.mean(axis=(0, 2, 3)))
        npt.assert_allclose(stats.var, 0.9 + 0.1 * x.var(axis=(0, 2, 3), ddof=1))

    def test_eval_before_training_uses_init_stats(self, rng):
        x = rng.standard_normal((2, 2, 3, 3))
        out = T.batchnorm2d(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), RunningStats(2, np.float64), False)
        npt.assert_allclose(out.data, x / math.sqrt(1 + 1e-5))

    @pytest.mark.parametrize("training", [True, False])
    def test_gradient(self, rng, training):
        x = param(rng.standard_normal((2, 3, 4, 4)))
        g = param(rng.uniform(0.5, 1.5, 3))
        b = param(rng.standard_normal(3))
        stats = RunningStats(3, np.float64)
        stats.mean[:] = rng.standard_normal(3)
        stats.var[:] = rng.uniform(0.5, 2, 3)
        assert grad_check(lambda *a: T.batchnorm2d(*a, stats, training), [x, g, b]).passed


class TestElementwise:
    def test_mul_channelwise_ones_and_zeros(self, rng):
        u = rng.standard_normal((2, 3, 4, 4))
        npt.assert_array_equal(T.mul_channelwise(Tensor(u), Tensor(np.ones((2, 3)))).data, u)
        npt.assert_array_equal(T.mul_channelwise(Tensor(u), Tensor(np.zeros((2, 3)))).data, 0)

    def test_mul_channelwise_loop_oracle(self, rng):
        u, a = rng.standard_normal((2, 3, 4, 5)), rng.standard_normal((2, 3))
        got = T.mul_channelwise(Tensor(u), Tensor(a)).data
        want = np.empty_like(u)
        for n in range(2):
            for c in range(3):
                for i in range(4):
                    for j in range(5):
                        want[n, c, i, j] = a[n, c] * u[n, c, i, j]
        npt.assert_array_equal(got, want)

    def test_mul_channelwise_shape_error(self):
        with pytest.raises(ShapeError):
            T.mul_channelwise(Tensor(np.zeros((2, 3, 4, 4))), Tensor(np.zeros((2, 4))))

    def test_add_requires_same_shape(self):
        with pytest.raises(ShapeError):
            T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros(3)))

    def test_sigmoid_extremes_are_finite(self):
        out = T.sigmoid(Tensor(np.array([-1000.0, 0.0, 1000.0]))).data
        npt.assert_array_equal(out, [0.0, 0.5, 1.0])

    @pytest.mark.parametrize("op", [T.relu, T.sigmoid, T.spatial_mean])
    def test_unary_gradients(self, rng, op):
        x = rng.standard_normal((2, 3, 4, 4))
        x[np.abs(x) < 1e-3] = 0.5  # keep clear of the relu kink
        assert grad_check(op, [param(x)]).passed

    def test_binary_gradients(self, rng):
        u, a = param(rng.standard_normal((2, 3, 4, 4))), param(rng.standard_normal((2, 3)))
        assert grad_check(T.mul_channelwise, [u, a]).passed
        p, q = param(rng.standard_normal((3, 4))), param(rng.standard_normal((3, 4)))
        assert grad_check(T.add, [p, q]).passed

    def test_stack_and_reshape_gradients(self, rng):
        p, q = param(rng.standard_normal((3, 4))), param(rng.standard_normal((3, 4)))
        assert grad_check(lambda a, b: T.reshape(T.stack([a, b], axis=1), (3, 1, 2, 4)), [p, q]).passed

    def test_nonfinite_is_an_error(self):
        with np.errstate(over="ignore"), pytest.raises(T.NonFiniteError):
            T.scale(Tensor(np.array([1e308])), 1e10)


class TestSoftmaxXent:
    def test_uniform_logits(self):
        loss = T.softmax_xent(Tensor(np.zeros((5, 10))), np.arange(5))
        assert loss.item() == pytest.approx(math.log(10), abs=1e-6)
        assert loss.item() == pytest.approx(2.302585, abs=1e-6)

    def test_confident_correct(self):
        logits = np.zeros((2, 3))
        logits[[0, 1], [2, 0]] = 1e4
        assert T.softmax_xent(Tensor(logits), [2, 0]).item() == pytest.approx(0.0, abs=1e-12)

    def test_gradient(self, rng):
        assert grad_check(lambda z: T.softmax_xent(z, [0, 2, 1, 2]), [param(rng.standard_normal((4, 3)))]).passed


class TestBackward:
    def test_gradient_additivity(self, rng):
        x = param(rng.standard_normal((3, 4)))
        w = param(rng.standard_normal((4, 2)))
        b = param(np.zeros(2))

        def loss(labels):
            return T.softmax_xent(T.affine(x, w, b), labels)

        T.backward(T.add(loss([0, 1, 0]), loss([1, 1, 0])))
        joint = w.grad.copy()
        w.grad = x.grad = b.grad = None
        T.backward(loss([0, 1, 0]))
        T.backward(loss([1, 1, 0]))
        npt.assert_allclose(w.grad, joint, rtol=1e-12)

    def test_reused_tensor_accumulates(self):
        x = param([2.0, 3.0])
        T.backward(T.add(x, x), np.ones(2))
        npt.assert_array_equal(x.grad, [2.0, 2.0])

    def test_reverse_execution_order(self):
        x = param(np.ones((1, 2)))
        y = T.scale(x, 2.0)
        z = T.scale(y, 3.0)
        assert x._seq == -1 and 0 <= y._seq < z._seq

    def test_needs_scalar(self):
        with pytest.raises(ShapeError):
            T.backward(T.scale(param(np.ones(3)), 2.0))

    def test_deterministic(self, rng):
        x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
        k = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
        runs = []
        for _ in range(2):
            kt = Tensor(k.copy(), requires_grad=True)
            T.backward(T.softmax_xent(T.spatial_mean(T.conv2d(Tensor(x), kt, 1, 1)), [0, 3]))
            runs.append(kt.grad)
        npt.assert_array_equal(runs[0], runs[1])


class TestNesterov:
    def test_plain_step(self):
        p = param([1.0])
        p.grad = np.array([1.0])
        NesterovSGD([p], lr=0.1, momentum=0.0).step()
        assert p.data[0] == pytest.approx(0.9)
        assert p.grad is None

    def test_two_steps_closed_form(self):
        # v1 = 1, p1 = 1 - 0.1(1 + 0.9) = 0.81 ; v2 = 1.9, p2 = 0.81 - 0.1(1 + 0.9*1.9) = 0.539
        p = param([1.0])
        opt = NesterovSGD([p], lr=0.1, momentum=0.9)
        p.grad = np.array([1.0])
        opt.step()
        assert p.data[0] == pytest.approx(0.81, abs=1e-12)
        p.grad = np.array([1.0])
        opt.step()
        assert p.data[0] == pytest.approx(0.539, abs=1e-12)

    def test_weight_decay_shrinks(self):
        p = param([2.0, -3.0])
        opt = NesterovSGD([p], lr=0.1, momentum=0.9, weight_decay=0.05)
        prev = np.abs(p.data).copy()
        for _ in range(20):
            p.grad = np.zeros(2)
            opt.step()
            assert (np.abs(p.data) < prev).all()
            prev = np.abs(p.data).copy()

    def test_step_lr(self):
        assert step_lr(0.1, 0, (10, 20), 0.1) == 0.1
        assert step_lr(0.1, 10, (10, 20), 0.1) == pytest.approx(0.01)
        assert step_lr(0.1, 25, (10, 20), 0.1) == pytest.approx(0.001)
