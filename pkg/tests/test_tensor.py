"""Tensor engine: example values, shape errors, gradients, determinism."""

from __future__ import annotations

import math
import random

import pytest

from conftest import MatrixProbe, rand_matrix, rand_vector
from prunas import tensor as T
from prunas.errors import (
    ConfigurationError,
    DataError,
    DimensionError,
    DomainError,
    EngineError,
)
from prunas.tensor import Tensor


class TestLinear:
    def test_identity_weight(self):
        y = T.linear(Tensor.matrix([[1, 2]]), Tensor.matrix([[1, 0], [0, 1]]),
                     Tensor.vector([0, 0]))
        assert y.tolist() == [[1.0, 2.0]]

    def test_zero_weight_takes_bias(self):
        y = T.linear(Tensor.matrix([[1, 2]]), Tensor.matrix([[0, 0], [0, 0]]),
                     Tensor.vector([3, 4]))
        assert y.tolist() == [[3.0, 4.0]]

    def test_hand_product(self):
        y = T.linear(Tensor.matrix([[1, 1]]), Tensor.matrix([[2, 3], [4, 5]]),
                     Tensor.vector([1, 1]))
        assert y.tolist() == [[7.0, 9.0]]

    def test_shape_mismatch_reports_both_shapes(self):
        with pytest.raises(DimensionError) as err:
            T.linear(Tensor.matrix([[1, 2, 3]]), Tensor.matrix([[1], [2]]),
                     Tensor.vector([0]))
        assert "(1, 3)" in str(err.value) and "(2, 1)" in str(err.value)


class TestActivations:
    def test_relu_negative(self):
        assert T.activation(Tensor.matrix([[-1.0]]), "relu").tolist() == [[0.0]]

    def test_swish_zero(self):
        assert T.activation(Tensor.matrix([[0.0]]), "swish").tolist() == [[0.0]]

    def test_swish_one(self):
        y = T.activation(Tensor.matrix([[1.0]]), "swish")
        expected = 1.0 / (1.0 + math.exp(-1.0))
        assert abs(y.data[0] - expected) < 1e-12
        assert f"{y.data[0]:.6f}" == "0.731059"

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            T.activation(Tensor.matrix([[1.0]]), "tanh")


class TestChannelMask:
    def test_full_mask_is_identity(self):
        x = Tensor.matrix([[1, 2, 3, 4]])
        assert T.channel_mask(x, 4).tolist() == [[1.0, 2.0, 3.0, 4.0]]

    def test_partial_mask_zeroes_tail(self):
        x = Tensor.matrix([[1, 2, 3, 4]])
        assert T.channel_mask(x, 2).tolist() == [[1.0, 2.0, 0.0, 0.0]]

    def test_gradient_blocked_on_masked_lanes(self):
        x = Tensor.matrix([[1, 2, 3, 4]], requires_grad=True)
        y = T.channel_mask(x, 2)
        # upstream gradient of ones via a unit linear reduction
        ones = Tensor((4, 1), [1.0] * 4)
        zero = Tensor((1,), [0.0])
        T.linear(y, ones, zero).backward()
        assert list(x.grad) == [1.0, 1.0, 0.0, 0.0]

    def test_out_of_range(self):
        x = Tensor.matrix([[1, 2]])
        with pytest.raises(DimensionError):
            T.channel_mask(x, 0)
        with pytest.raises(DimensionError):
            T.channel_mask(x, 3)

    def test_full_width_identity_on_values_and_gradients(self):
        rng = random.Random(2)
        probe = MatrixProbe(rng, 2, 5)
        x1 = rand_matrix(rng, 2, 5)
        x2 = Tensor(x1.shape, x1.data, requires_grad=True)
        masked = T.channel_mask(x1, 5)
        assert masked.tolist() == x1.tolist()
        probe(masked).backward()
        probe(T.weighted_sum([x2], [1.0])).backward()
        assert list(x1.grad) == list(x2.grad)


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        ce = T.softmax_cross_entropy(Tensor.matrix([[0.0, 0.0]]), [0])
        assert abs(ce.item() - math.log(2.0)) < 1e-12

    def test_stabilized_against_overflow(self):
        ce = T.softmax_cross_entropy(Tensor.matrix([[1000.0, 0.0]]), [0])
        assert 0.0 <= ce.item() < 1e-9

    def test_hand_value(self):
        ce = T.softmax_cross_entropy(Tensor.matrix([[1.0, 2.0, 3.0]]), [2])
        expected = -math.log(math.exp(3) / (math.exp(1) + math.exp(2) + math.exp(3)))
        assert abs(ce.item() - expected) < 1e-12
        assert f"{ce.item():.6f}" == "0.407606"

    def test_label_out_of_range(self):
        with pytest.raises(DataError):
            T.softmax_cross_entropy(Tensor.matrix([[0.0, 0.0]]), [2])

    def test_mean_over_batch(self):
        one = T.softmax_cross_entropy(Tensor.matrix([[0.0, 1.0]]), [1])
        two = T.softmax_cross_entropy(Tensor.matrix([[0.0, 1.0], [0.0, 1.0]]), [1, 1])
        assert abs(one.item() - two.item()) < 1e-12


class TestScalarOps:
    def test_log(self):
        assert Tensor.scalar(1.0).log().item() == 0.0

    def test_pow(self):
        assert Tensor.scalar(2.0).pow(3).item() == 8.0

    def test_log_domain(self):
        with pytest.raises(DomainError):
            Tensor.scalar(0.0).log()
        with pytest.raises(DomainError):
            Tensor.scalar(-1.0).log()

    def test_log_pow_gradient_matches_fd(self):
        # d/dx (ln x)^0.6 at x=1000, central difference at relative h=1e-3
        x = Tensor.scalar(1000.0, requires_grad=True)
        x.log().pow(0.6).backward()
        h = 1e-3 * 1000.0
        fd = (math.log(1000.0 + h) ** 0.6 - math.log(1000.0 - h) ** 0.6) / (2 * h)
        assert abs(x.grad[0] - fd) / abs(fd) < 1e-4
        analytic = 0.6 * math.log(1000.0) ** (-0.4) / 1000.0
        assert abs(x.grad[0] - analytic) / analytic < 1e-9

    def test_add_mul_gradients(self):
        a = Tensor.scalar(2.0, requires_grad=True)
        b = Tensor.scalar(3.0, requires_grad=True)
        out = a * b + a
        out.backward()
        assert out.item() == 8.0
        assert a.grad[0] == 4.0 and b.grad[0] == 2.0


class TestEngineInvariants:
    def test_nan_rejected_at_creation(self):
        with pytest.raises(EngineError):
            Tensor.matrix([[float("nan")]])

    def test_overflow_detected_in_op(self):
        big = Tensor.matrix([[1e308, 1e308]])
        w = Tensor.matrix([[1.0], [1.0]])
        with pytest.raises(EngineError):
            T.linear(big, w, Tensor.vector([0.0]))

    def test_backward_of_sum_equals_sum_of_backwards(self):
        rng = random.Random(3)
        for _ in range(5):
            xv = [rng.gauss(0, 1) for _ in range(6)]
            wv = [rng.gauss(0, 1) for _ in range(6)]
            labels = [rng.randrange(2) for _ in range(2)]

            def grads(which):
                x = Tensor((2, 3), xv, requires_grad=True)
                w = Tensor((3, 2), wv, requires_grad=True)
                b = Tensor((2,), [0.0, 0.0], requires_grad=True)
                y = T.linear(x, w, b)
                l1 = T.softmax_cross_entropy(y, labels)
                l2 = T.softmax_cross_entropy(T.activation(y, "swish"), labels)
                {"sum": l1 + l2, "l1": l1, "l2": l2}[which].backward()
                return list(w.grad)

            g_sum, g1, g2 = grads("sum"), grads("l1"), grads("l2")
            for s, a, c in zip(g_sum, g1, g2):
                assert abs(s - (a + c)) < 1e-12

    def test_forward_backward_bit_identical(self):
        def run():
            rng = random.Random(99)
            x = rand_matrix(rng, 4, 6)
            w = rand_matrix(rng, 6, 3)
            b = rand_vector(rng, 3)
            ce = T.softmax_cross_entropy(
                T.activation(T.linear(x, w, b), "swish"), [0, 1, 2, 0])
            ce.backward()
            return ce.item(), w.grad.tobytes(), x.grad.tobytes()

        assert run() == run()

    def test_weighted_sum_shape_guard(self):
        a = Tensor.matrix([[1.0, 2.0]])
        c = Tensor.matrix([[1.0], [2.0]])
        with pytest.raises(DimensionError):
            T.weighted_sum([a, c], [0.5, 0.5])
