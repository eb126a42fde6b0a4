import numpy as np
import pytest

from nerd import autodiff as ad
from nerd.autodiff import Tape, Tensor, grad_check
from nerd.errors import AutodiffError, DimensionError


def t64(data, requires_grad=True):
    return Tensor(data, requires_grad=requires_grad, dtype=np.float64)


def scalar_target(x):
    return ad.mse_loss(x, Tensor._wrap(np.zeros(x.shape), False))


class TestTensor:
    def test_rejects_nonfinite(self):
        with pytest.raises(DimensionError):
            Tensor([1.0, np.nan])
        with pytest.raises(DimensionError):
            Tensor([np.inf])

    def test_default_dtype_float32(self):
        assert Tensor([1, 2, 3]).dtype == np.float32

    def test_shape_matches_buffer(self, rng):
        t = Tensor(rng.random((3, 4)))
        assert t.shape == (3, 4) and t.size == 12


class TestLinear:
    def test_identity_weight(self):
        out = ad.linear(t64([[1.0, 2.0]]), t64([[1.0, 0.0], [0.0, 1.0]]), t64([0.0, 0.0]))
        np.testing.assert_array_equal(out.data, [[1.0, 2.0]])

    def test_analytic(self):
        out = ad.linear(t64([[1.0, 1.0]]), t64([[2.0], [3.0]]), t64([1.0]))
        np.testing.assert_allclose(out.data, [[6.0]])

    def test_weight_grad_is_column_replicated_input_sums(self, rng):
        x = t64(rng.standard_normal((4, 3)))
        w = t64(rng.standard_normal((3, 2)))
        b = t64(rng.standard_normal(2))
        with Tape() as tape:
            loss = ad.sum_all(ad.linear(x, w, b))
        tape.backward(loss)
        # d(sum)/dW[i,j] = sum_n x[n,i], identical for every column j
        expected = np.repeat(x.data.sum(axis=0)[:, None], 2, axis=1)
        np.testing.assert_allclose(w.grad, expected, rtol=1e-12)
        report = grad_check(lambda *_: ad.sum_all(ad.linear(x, w, b)), [x, w, b], label="linear")
        assert report.passed and report.max_rel_err < 1e-4

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ad.linear(t64([[1.0, 2.0]]), t64([[1.0]]), t64([0.0]))


class TestConv2d:
    def test_sum_of_ones(self):
        out = ad.conv2d(t64(np.ones((1, 1, 3, 3))), t64(np.ones((1, 1, 3, 3))), t64([0.0]))
        np.testing.assert_allclose(out.data, [[[[9.0]]]])

    def test_identity_1x1_kernel(self, rng):
        x = t64(rng.standard_normal((1, 1, 4, 5)))
        out = ad.conv2d(x, t64(np.ones((1, 1, 1, 1))), t64([0.0]))
        np.testing.assert_allclose(out.data, x.data)

    def test_gradients_match_finite_differences(self, rng):
        x = t64(0.5 * rng.standard_normal((2, 3, 8, 8)))
        k = t64(0.5 * rng.standard_normal((4, 3, 3, 3)))
        b = t64(rng.standard_normal(4))
        report = grad_check(
            lambda *_: scalar_target(ad.conv2d(x, k, b, stride=1, padding=1)),
            [x, k, b], label="conv2d")
        assert report.passed, report

    def test_stride2_gradients(self, rng):
        x = t64(rng.standard_normal((1, 2, 9, 9)))
        k = t64(rng.standard_normal((2, 2, 3, 3)))
        b = t64(rng.standard_normal(2))
        report = grad_check(
            lambda *_: scalar_target(ad.conv2d(x, k, b, stride=2, padding=1)),
            [x, k, b], label="conv2d_s2")
        assert report.passed, report

    def test_too_small_input(self):
        with pytest.raises(DimensionError):
            ad.conv2d(t64(np.ones((1, 1, 2, 2))), t64(np.ones((1, 1, 5, 5))), t64([0.0]))

    def test_even_kernel_rejected(self):
        with pytest.raises(DimensionError):
            ad.conv2d(t64(np.ones((1, 1, 4, 4))), t64(np.ones((1, 1, 2, 2))), t64([0.0]))


class TestUpsample:
    def test_single_pixel(self):
        out = ad.upsample_nearest2x(t64([[[[1.0]]]]))
        np.testing.assert_array_equal(out.data, np.ones((1, 1, 2, 2)))

    def test_2x2_blocks(self):
        out = ad.upsample_nearest2x(t64([[[[1.0, 2.0], [3.0, 4.0]]]]))
        expected = np.array([[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]], dtype=float)
        np.testing.assert_array_equal(out.data[0, 0], expected)

    def test_backward_sums_blocks(self):
        # all-ones upstream gradient: each source pixel collects its 4 copies
        x = t64(np.zeros((1, 1, 2, 3)))
        with Tape() as tape:
            loss = ad.sum_all(ad.upsample_nearest2x(x))
        tape.backward(loss)
        np.testing.assert_array_equal(x.grad, np.full((1, 1, 2, 3), 4.0))


class TestActivations:
    def test_sine_zero(self):
        assert ad.sine(t64([0.0]), 30.0).data[0] == 0.0

    def test_sine_quarter_period(self):
        omega = 7.0
        out = ad.sine(t64([np.pi / (2 * omega)]), omega)
        np.testing.assert_allclose(out.data, [1.0], atol=1e-12)

    def test_sine_gradient(self, rng):
        x = t64(rng.standard_normal((5, 3)))
        report = grad_check(lambda *_: scalar_target(ad.sine(x, 30.0)), [x],
                            tolerance=1e-5, label="sine")
        assert report.passed, report

    def test_relu_values(self):
        np.testing.assert_array_equal(ad.relu(t64([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_relu_identity_on_positive(self, rng):
        x = t64(rng.random((4, 4)) + 0.1)
        np.testing.assert_array_equal(ad.relu(x).data, x.data)

    def test_relu_gradient_mask(self, rng):
        x = t64(np.where(np.abs(rng.standard_normal((4, 4))) < 0.05, 0.5, 1.0)
                * rng.choice([-1.0, 1.0], (4, 4)))
        report = grad_check(lambda *_: scalar_target(ad.relu(x)), [x], label="relu")
        assert report.passed, report


class TestConcat:
    def test_basic(self):
        out = ad.concat([t64([1.0, 2.0]), t64([3.0])], axis=0)
        np.testing.assert_array_equal(out.data, [1.0, 2.0, 3.0])

    def test_single_input_identity(self, rng):
        x = t64(rng.random((2, 3)))
        np.testing.assert_array_equal(ad.concat([x], axis=1).data, x.data)

    def test_gradient_routing(self, rng):
        a, b = t64(rng.standard_normal((3, 2))), t64(rng.standard_normal((3, 4)))
        report = grad_check(lambda *_: scalar_target(ad.concat([a, b], axis=1)), [a, b],
                            label="concat")
        assert report.passed, report

    def test_shape_disagreement(self):
        with pytest.raises(DimensionError):
            ad.concat([t64(np.ones((2, 2))), t64(np.ones((3, 2)))], axis=1)


class TestMseLoss:
    def test_zero_for_identical(self, rng):
        x = rng.random((3, 3))
        assert ad.mse_loss(t64(x), t64(x, requires_grad=False)).item() == 0.0

    def test_analytic(self):
        loss = ad.mse_loss(t64([1.0, 0.0]), t64([0.0, 0.0], requires_grad=False))
        assert loss.item() == pytest.approx(0.5)

    def test_gradient(self, rng):
        p, q = t64(rng.standard_normal(6)), t64(rng.standard_normal(6))
        report = grad_check(lambda *_: ad.mse_loss(p, q), [p, q],
                            tolerance=1e-6, label="mse")
        assert report.passed, report

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ad.mse_loss(t64([1.0]), t64([1.0, 2.0]))


class TestReflectPadAndWindows:
    def test_pad_matches_numpy(self, rng):
        x = t64(rng.random((1, 2, 5, 6)))
        out = ad.reflect_pad2d(x, 2)
        expected = np.pad(x.data, ((0, 0), (0, 0), (2, 2), (2, 2)), mode="reflect")
        np.testing.assert_array_equal(out.data, expected)

    def test_pad_gradient(self, rng):
        x = t64(rng.standard_normal((1, 1, 4, 5)))
        report = grad_check(lambda *_: scalar_target(ad.reflect_pad2d(x, 2)), [x],
                            label="reflect_pad")
        assert report.passed, report

    def test_gather_windows_values(self, rng):
        x = t64(rng.random((2, 3, 7, 7)))
        centers = np.array([[0, 2, 3], [1, 4, 2]])
        out = ad.gather_windows(x, centers, 3)
        manual = x.data[0, :, 1:4, 2:5].transpose(1, 2, 0).reshape(-1)
        np.testing.assert_array_equal(out.data[0], manual)

    def test_gather_bounds(self):
        x = t64(np.ones((1, 1, 5, 5)))
        with pytest.raises(DimensionError):
            ad.gather_windows(x, np.array([[0, 0, 0]]), 3)

    def test_gather_gradient_with_overlap(self, rng):
        x = t64(rng.standard_normal((1, 2, 6, 6)))
        centers = np.array([[0, 2, 2], [0, 2, 3], [0, 3, 2]])  # overlapping windows
        report = grad_check(lambda *_: scalar_target(ad.gather_windows(x, centers, 3)),
                            [x], label="gather")
        assert report.passed, report

    def test_crop2d_gradient(self, rng):
        x = t64(rng.standard_normal((1, 2, 5, 6)))
        report = grad_check(lambda *_: scalar_target(ad.crop2d(x, 1, 2, 3, 3)), [x],
                            label="crop")
        assert report.passed, report

    def test_take_per_row(self, rng):
        x = t64(rng.standard_normal((4, 3)))
        idx = np.array([0, 2, 1, 0])
        out = ad.take_per_row(x, idx)
        np.testing.assert_array_equal(out.data, x.data[np.arange(4), idx])
        report = grad_check(lambda *_: scalar_target(ad.take_per_row(x, idx)), [x],
                            label="take")
        assert report.passed, report


class TestTape:
    def test_backward_twice_rejected(self):
        x = t64([1.0, 2.0])
        with Tape() as tape:
            loss = ad.sum_all(x)
        tape.backward(loss)
        with pytest.raises(AutodiffError):
            tape.backward(loss)

    def test_backward_requires_scalar(self):
        x = t64([1.0, 2.0])
        with Tape() as tape:
            y = ad.relu(x)
        with pytest.raises(DimensionError):
            tape.backward(y)

    def test_backward_never_mutates_saved_values(self, rng):
        x = t64(rng.standard_normal((3, 4)))
        w = t64(rng.standard_normal((4, 2)))
        b = t64(rng.standard_normal(2))
        with Tape() as tape:
            h = ad.sine(ad.linear(x, w, b), 30.0)
            loss = scalar_target(h)
        snapshots = [(n.output, n.output.data.copy()) for n in tape.nodes]
        tape.backward(loss)
        for tensor, before in snapshots:
            np.testing.assert_array_equal(tensor.data, before)

    def test_reverse_visit_order_once_each(self, rng):
        x = t64(rng.standard_normal((2, 2)))
        with Tape() as tape:
            y = ad.relu(x)
            z = ad.sine(y, 1.0)
            loss = ad.sum_all(z)
        calls = []
        for i, node in enumerate(tape.nodes):
            orig = node.backward
            node.backward = (lambda f, j: lambda g: calls.append(j) or f(g))(orig, i)
        tape.backward(loss)
        assert calls == list(reversed(range(len(tape.nodes))))

    def test_no_tape_means_no_recording(self):
        x = t64([1.0])
        out = ad.relu(x)
        assert out.requires_grad  # flag propagates, but nothing to walk
        with Tape() as tape:
            ad.relu(Tensor([1.0], requires_grad=False))
        assert tape.nodes == []  # inputs without grads record nothing

    def test_identity_sum_gradient_exact(self):
        x = t64([3.0, -1.0, 2.0])
        report = grad_check(lambda *_: ad.sum_all(x), [x], label="sum")
        assert report.max_rel_err < 1e-9

    def test_corrupted_backward_detected(self, rng):
        # a wrong backward rule must be loudly visible to the checker
        def bad_square(x):
            out = Tensor._wrap(x.data ** 2, x.requires_grad)
            tape = ad._active_tape()
            if tape is not None and x.requires_grad:
                tape._record(ad.Node("bad_square", (x,), out,
                                     lambda g: (3.0 * x.data * g,)))  # should be 2x
            return out

        x = t64(rng.random(4) + 0.5)
        report = grad_check(lambda *_: ad.sum_all(bad_square(x)), [x], label="mutant")
        assert report.max_rel_err > 1e-2

    def test_grad_check_rejects_float32(self):
        x = Tensor([1.0], requires_grad=True, dtype=np.float32)
        with pytest.raises(AutodiffError):
            grad_check(lambda *_: ad.sum_all(x), [x])


class TestDeterminism:
    def test_ops_bit_identical_across_runs(self, rng):
        x = Tensor(rng.random((2, 3, 8, 8), dtype=np.float32))
        k = Tensor(rng.random((4, 3, 3, 3), dtype=np.float32))
        b = Tensor(rng.random(4, dtype=np.float32))
        first = ad.conv2d(x, k, b, padding=1).data
        second = ad.conv2d(x, k, b, padding=1).data
        assert np.array_equal(first, second)
        assert np.array_equal(ad.sine(x, 30.0).data, ad.sine(x, 30.0).data)
