import numpy as np
from django.test import SimpleTestCase

from instruct_app.analytic import misaligned_ikl
from instruct_app.diffusion import WeightingFn
from instruct_app.exceptions import DivergenceError, ShapeMismatchError
from instruct_app.tensorgrad import (TANH, AdamState, MlpNet, adam_step, backward, finite_diff_grad, forward,
                                     param_count)
from instruct_app.utils.rng import make_rng


def relative_error(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


class MlpNetTests(SimpleTestCase):

    def test_param_count_matches_layout(self):
        self.assertEqual(param_count([2, 3, 1]), 2 * 3 + 3 + 3 * 1 + 1)
        net = MlpNet.zeros([2, 3, 1])
        self.assertEqual(net.n_params, 13)

    def test_wrong_param_count_names_both_counts(self):
        with self.assertRaisesMessage(ShapeMismatchError, 'need 13 parameters, got 12'):
            MlpNet((2, 3, 1), np.zeros(12))

    def test_non_finite_params_rejected(self):
        params = np.zeros(param_count([1, 1]))
        params[0] = np.nan
        with self.assertRaises(ValueError):
            MlpNet((1, 1), params)

    def test_params_are_read_only(self):
        net = MlpNet.zeros([1, 2, 1])
        with self.assertRaises(ValueError):
            net.params[0] = 1.0

    def test_dict_round_trip_is_exact(self):
        net = MlpNet.initialize([2, 5, 2], make_rng(3))
        restored = MlpNet.from_dict(net.to_dict())
        np.testing.assert_array_equal(restored.params, net.params)
        self.assertEqual(restored.layer_sizes, net.layer_sizes)


class ForwardTests(SimpleTestCase):

    def test_zero_weights_give_zero_output(self):
        net = MlpNet.zeros([3, 4, 2])
        np.testing.assert_array_equal(forward(net, np.array([1.0, -2.0, 5.0])), np.zeros(2))

    def test_single_affine_layer(self):
        net = MlpNet((1, 1), [2.0, 1.0])
        np.testing.assert_allclose(forward(net, np.array([3.0])), [7.0])

    def test_matches_explicit_loops(self):
        net = MlpNet.initialize([2, 3, 2], make_rng(11))
        x = np.array([0.3, -1.2])
        params = net.params
        w1 = params[:6].reshape(2, 3)
        b1 = params[6:9]
        w2 = params[9:15].reshape(3, 2)
        b2 = params[15:17]
        hidden = []
        for j in range(3):
            z = b1[j] + sum(x[i] * w1[i, j] for i in range(2))
            hidden.append(np.log1p(np.exp(z)))
        expected = [b2[k] + sum(hidden[j] * w2[j, k] for j in range(3)) for k in range(2)]
        np.testing.assert_allclose(forward(net, x), expected, rtol=1e-12)

    def test_batch_rows_match_single_inputs(self):
        net = MlpNet.initialize([2, 4, 1], make_rng(5))
        batch = np.array([[0.1, 0.2], [-1.0, 3.0]])
        out = forward(net, batch)
        np.testing.assert_allclose(out[1], forward(net, batch[1]), rtol=1e-14)

    def test_repeated_calls_are_identical(self):
        net = MlpNet.initialize([2, 8, 2], make_rng(1))
        x = np.array([0.5, -0.25])
        np.testing.assert_array_equal(forward(net, x), forward(net, x))

    def test_dimension_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            forward(MlpNet.zeros([2, 1]), np.zeros(3))


class BackwardTests(SimpleTestCase):

    def test_single_affine_layer(self):
        net = MlpNet((1, 1), [2.0, 1.0])
        param_grad, input_grad = backward(net, np.array([3.0]), np.array([1.0]))
        np.testing.assert_allclose(param_grad, [3.0, 1.0])
        np.testing.assert_allclose(input_grad, [2.0])

    def test_zero_output_grad_gives_zero_gradients(self):
        net = MlpNet.initialize([3, 5, 2], make_rng(2))
        param_grad, input_grad = backward(net, np.ones(3), np.zeros(2))
        self.assertFalse(np.any(param_grad))
        self.assertFalse(np.any(input_grad))

    def test_matches_finite_differences(self):
        x = np.array([[0.4, -0.7], [1.1, 0.3], [-0.5, 0.9]])
        for sizes, activation in (([2, 3, 1], 'softplus'), ([2, 4, 3, 2], 'softplus'), ([2, 5, 2], TANH)):
            with self.subTest(sizes=sizes, activation=activation):
                net = MlpNet.initialize(sizes, make_rng(7), activation)
                cotangent = make_rng(8).standard_normal((x.shape[0], sizes[-1]))

                def objective(params):
                    return float(np.sum(forward(net.with_params(params), x) * cotangent))

                param_grad, _ = backward(net, x, cotangent)
                numeric = finite_diff_grad(objective, net.params, 1e-5)
                self.assertLessEqual(relative_error(param_grad, numeric), 1e-4)

    def test_input_grad_matches_finite_differences(self):
        net = MlpNet.initialize([3, 6, 2], make_rng(9))
        x = np.array([0.2, -0.4, 0.8])
        cotangent = np.array([1.0, -2.0])
        _, input_grad = backward(net, x, cotangent)
        numeric = finite_diff_grad(lambda v: float(forward(net, v) @ cotangent), x, 1e-5)
        self.assertLessEqual(relative_error(input_grad, numeric), 1e-4)

    def test_linear_in_output_grad(self):
        net = MlpNet.initialize([2, 4, 3], make_rng(4))
        rng = make_rng(5)
        x = rng.standard_normal((6, 2))
        g1, g2 = rng.standard_normal((6, 3)), rng.standard_normal((6, 3))
        combined, _ = backward(net, x, 2.0 * g1 - 0.5 * g2)
        first, _ = backward(net, x, g1)
        second, _ = backward(net, x, g2)
        np.testing.assert_allclose(combined, 2.0 * first - 0.5 * second, atol=1e-12)

    def test_output_grad_shape_checked(self):
        with self.assertRaises(ShapeMismatchError):
            backward(MlpNet.zeros([2, 2]), np.zeros((4, 2)), np.zeros((3, 2)))


class FiniteDiffTests(SimpleTestCase):

    def test_quadratic(self):
        grad = finite_diff_grad(lambda p: float(np.sum(p * p)), np.array([1.0, 2.0]), 1e-5)
        np.testing.assert_allclose(grad, [2.0, 4.0], rtol=1e-8)

    def test_constant(self):
        np.testing.assert_array_equal(finite_diff_grad(lambda p: 3.0, np.array([1.0, 2.0, 3.0])), np.zeros(3))

    def test_misaligned_closed_form(self):
        ramp = WeightingFn(WeightingFn.RAMP)
        grad = finite_diff_grad(lambda p: misaligned_ikl(float(p[0]), ramp), np.array([2.0]), 1e-5)
        # 2 * theta * int w/(2t) dt with the integral equal to 1
        self.assertAlmostEqual(float(grad[0]), 4.0, places=6)

    def test_step_must_be_positive(self):
        with self.assertRaises(ValueError):
            finite_diff_grad(lambda p: 0.0, np.zeros(1), 0.0)


class AdamTests(SimpleTestCase):

    def test_zero_gradient_from_fresh_state_keeps_params(self):
        state = AdamState.for_params(2, lr=0.1, beta0=0.9)
        params, new_state = adam_step(state, np.array([1.0, -1.0]), np.zeros(2))
        np.testing.assert_array_equal(params, [1.0, -1.0])
        self.assertEqual(new_state.step_count, 1)

    def test_first_step_moves_by_learning_rate(self):
        state = AdamState.for_params(2, lr=0.01, beta0=0.0, beta1=0.0)
        params, state = adam_step(state, np.array([1.0, 1.0]), np.array([3.0, -0.5]))
        np.testing.assert_allclose(params, [1.0 - 0.01, 1.0 + 0.01], rtol=1e-6)
        self.assertEqual(state.step_count, 1)

    def test_three_step_trace_on_quadratic(self):
        lr, beta0, beta1, eps = 0.1, 0.9, 0.99, 1e-8
        state = AdamState.for_params(1, lr, beta0, beta1, eps)
        p = np.array([2.0])

        x, m, v = 2.0, 0.0, 0.0
        for step in range(1, 4):
            g = 2.0 * x
            m = beta0 * m + (1 - beta0) * g
            v = beta1 * v + (1 - beta1) * g * g
            x = x - lr * (m / (1 - beta0 ** step)) / (np.sqrt(v / (1 - beta1 ** step)) + eps)

            p, state = adam_step(state, p, 2.0 * p)
        self.assertAlmostEqual(float(p[0]), x, delta=1e-12)

    def test_non_finite_gradient_raises_divergence(self):
        state = AdamState.for_params(2, lr=0.1)
        with self.assertRaises(DivergenceError):
            adam_step(state, np.zeros(2), np.array([np.inf, 0.0]))

    def test_invalid_hyperparameters(self):
        with self.assertRaises(ValueError):
            AdamState.for_params(1, lr=0.0)
        with self.assertRaises(ValueError):
            AdamState.for_params(1, lr=0.1, beta1=1.0)
