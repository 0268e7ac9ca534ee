import numpy as np
import pytest

from gradcheck import max_rel_err

from bwma.errors import ShapeError
from bwma.nn import binarize_ste, fake_quant
from bwma.optim import Adam
from bwma.quant import ActQuantState, SteParams
from bwma.tensor import (
    Tensor,
    conv2d,
    downsample_pad_channels,
    linear,
    max_pool2d,
    mean_over,
    no_grad,
    relu,
    scale_shift,
    softmax,
    softmax_cross_entropy,
)


def t64(arr, grad=False):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=grad)


# -- conv2d -----------------------------------------------------------------------


def test_conv_all_ones_sums_to_kernel_size():
    x = t64(np.ones((1, 1, 3, 3)))
    w = t64(np.ones((1, 1, 3, 3)))
    out = conv2d(x, w, stride=1, padding=0)
    assert out.shape == (1, 1, 1, 1)
    assert float(out.data.squeeze()) == 9.0


def test_conv_1x1_kernel_scales():
    x = t64([[[[1.0, 2.0], [3.0, 4.0]]]])
    w = t64(np.full((1, 1, 1, 1), 2.0))
    out = conv2d(x, w, stride=1, padding=0)
    np.testing.assert_array_equal(out.data.squeeze(), [[2.0, 4.0], [6.0, 8.0]])


def _naive_conv(x, w, stride, pad):
    n, c, h, wd = x.shape
    o, i, k, _ = w.shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wd + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, o, oh, ow))
    for b in range(n):
        for oc in range(o):
            for y in range(oh):
                for xx in range(ow):
                    acc = 0.0
                    for ic in range(i):
                        for ky in range(k):
                            for kx in range(k):
                                acc += (
                                    xp[b, ic, y * stride + ky, xx * stride + kx]
                                    * w[oc, ic, ky, kx]
                                )
                    out[b, oc, y, xx] = acc
    return out


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
def test_conv_matches_naive_loop(stride, pad):
    rng = np.random.default_rng(42)
    x = rng.normal(size=(1, 2, 5, 5))
    w = rng.normal(size=(3, 2, 3, 3))
    got = conv2d(t64(x), t64(w), stride=stride, padding=pad).data
    np.testing.assert_allclose(got, _naive_conv(x, w, stride, pad), atol=1e-6)


def test_conv_shape_errors():
    x = t64(np.ones((1, 3, 5, 5)))
    w = t64(np.ones((2, 4, 3, 3)))
    with pytest.raises(ShapeError, match="channel"):
        conv2d(x, w)
    with pytest.raises(ShapeError):
        conv2d(x, t64(np.ones((2, 3, 3, 3))), stride=0)


# -- linear ------------------------------------------------------------------------


def test_linear_identity():
    x = t64([[1.0, 2.0]])
    w = t64(np.eye(2))
    b = t64(np.zeros(2))
    np.testing.assert_array_equal(linear(x, w, b).data, x.data)


def test_linear_bias():
    out = linear(t64([[1.0, 2.0]]), t64(np.eye(2)), t64([10.0, 20.0]))
    np.testing.assert_array_equal(out.data, [[11.0, 22.0]])


def test_linear_matches_naive_loop():
    rng = np.random.default_rng(1)
    x, w, b = rng.normal(size=(4, 8)), rng.normal(size=(8, 3)), rng.normal(size=3)
    expected = np.zeros((4, 3))
    for i in range(4):
        for j in range(3):
            acc = b[j]
            for k in range(8):
                acc += x[i, k] * w[k, j]
            expected[i, j] = acc
    got = linear(t64(x), t64(w), t64(b)).data
    np.testing.assert_allclose(got, expected, atol=1e-6)


def test_linear_shape_error():
    with pytest.raises(ShapeError, match="linear"):
        linear(t64(np.ones((2, 3))), t64(np.ones((4, 5))))


# -- backward ---------------------------------------------------------------------


def test_backward_of_sum_is_ones():
    w = t64(np.arange(12).reshape(3, 4), grad=True)
    w.sum().backward()
    np.testing.assert_array_equal(w.grad, np.ones((3, 4)))


def test_backward_of_half_square_norm_is_identity():
    w = t64(np.linspace(-1, 1, 10), grad=True)
    ((w * w).sum() * 0.5).backward()
    np.testing.assert_allclose(w.grad, w.data, atol=1e-12)


def test_backward_rejects_non_scalar():
    w = t64(np.ones((2, 2)), grad=True)
    with pytest.raises(ShapeError, match="scalar"):
        (w * w).backward()


def test_three_layer_network_gradients_match_finite_differences():
    """Composite check: conv -> scale/shift -> relu -> pool -> linear -> CE."""
    rng = np.random.default_rng(0)
    x = t64(rng.normal(size=(2, 2, 6, 6)))
    w1 = t64(rng.normal(size=(3, 2, 3, 3)) * 0.4, grad=True)
    g1 = t64(rng.normal(size=3) * 0.2 + 1.0, grad=True)
    b1 = t64(rng.normal(size=3) * 0.1, grad=True)
    w2 = t64(rng.normal(size=(27, 4)) * 0.4, grad=True)
    b2 = t64(rng.normal(size=4) * 0.1, grad=True)
    labels = rng.integers(0, 4, size=2)

    def build_loss():
        y = conv2d(x, w1, stride=1, padding=1)
        y = scale_shift(y, g1, b1)
        y = relu(y)
        y = max_pool2d(y, 2)
        y = y.flatten2d()
        y = linear(y, w2, b2)
        return softmax_cross_entropy(y, labels)

    assert max_rel_err(build_loss, [w1, g1, b1, w2, b2], h=1e-3) < 1e-4


def test_quantizer_surrogate_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    wq = t64(rng.uniform(-0.8, 0.8, size=(5, 5)), grad=True)
    aq = t64(rng.uniform(0.1, 2.9, size=(4, 4)), grad=True)
    ste = SteParams(t=4.0, alpha=1.3)
    state = ActQuantState(0.0, 3.0, 3)

    def loss_w():
        y = binarize_ste(wq, ste, surrogate=True)
        return (y * y).sum() * 0.5

    def loss_a():
        y = fake_quant(aq, state, surrogate=True)
        return (y * y).sum() * 0.5

    assert max_rel_err(loss_w, [wq], h=1e-4) < 1e-4
    assert max_rel_err(loss_a, [aq], h=1e-4) < 1e-4


def test_downsample_pad_gradients():
    rng = np.random.default_rng(8)
    x = t64(rng.normal(size=(2, 2, 4, 4)), grad=True)

    def loss():
        y = downsample_pad_channels(x, 5)
        return (y * y).sum() * 0.5

    assert max_rel_err(loss, [x], h=1e-4) < 1e-6


def test_mean_over_gradients():
    rng = np.random.default_rng(12)
    x = t64(rng.normal(size=(2, 3, 4, 4)), grad=True)

    def loss():
        y = mean_over(x, (2, 3))
        return (y * y).sum() * 0.5

    assert max_rel_err(loss, [x], h=1e-4) < 1e-6


# -- adam ---------------------------------------------------------------------------


def test_adam_zero_gradient_leaves_params():
    p = Tensor(np.array([1.0, -2.0], dtype=np.float32), requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.grad = np.zeros_like(p.data)
    before = p.data.copy()
    opt.step()
    np.testing.assert_array_equal(p.data, before)


def test_adam_first_step_magnitude_bounded_by_lr():
    p = Tensor(np.array([0.5, -0.5, 2.0], dtype=np.float32), requires_grad=True)
    opt = Adam([p], lr=0.05)
    before = p.data.copy()
    p.grad = np.array([0.3, -7.0, 1e-4], dtype=np.float32)
    opt.step()
    assert np.all(np.abs(p.data - before) <= 0.05 * (1 + 1e-5))


def test_adam_decreases_quadratic():
    p = Tensor(np.array([3.0, -2.0], dtype=np.float64), requires_grad=True)
    opt = Adam([p], lr=0.1)
    losses = []
    for _ in range(2):
        loss = (p * p).sum() * 0.5
        opt.zero_grad()
        loss.backward()
        losses.append(float(loss.data))
        opt.step()
    final = float(((p * p).sum() * 0.5).data)
    assert losses[1] < losses[0] and final < losses[1]


# -- softmax cross entropy ------------------------------------------------------------


def test_softmax_probabilities_sum_to_one():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(16, 10)) * 20
    p = softmax(logits)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(p >= 0)


def test_cross_entropy_nonnegative_and_stable():
    logits = Tensor(np.array([[1000.0, -1000.0], [5.0, 5.0]], dtype=np.float64))
    loss = softmax_cross_entropy(logits, np.array([0, 1]))
    assert float(loss.data) >= 0.0
    assert np.isfinite(float(loss.data))


def test_cross_entropy_label_validation():
    logits = Tensor(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        softmax_cross_entropy(logits, np.array([0, 3]))
    with pytest.raises(ShapeError):
        softmax_cross_entropy(logits, np.array([0]))


# -- engine behavior ---------------------------------------------------------------


def test_no_grad_builds_no_graph():
    w = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = (w * w).sum()
    assert y._backward is None and not y.requires_grad


def test_finite_outputs_on_finite_inputs():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(2, 1, 8, 8)).astype(np.float32) * 100)
    w = Tensor(rng.normal(size=(4, 1, 3, 3)).astype(np.float32), requires_grad=True)
    out = conv2d(x, w, stride=1, padding=1)
    out = max_pool2d(relu(out), 2)
    assert np.all(np.isfinite(out.data))


def test_float32_storage_with_float64_loss():
    x = Tensor(np.random.default_rng(0).normal(size=(4, 6)).astype(np.float32))
    w = Tensor(np.eye(6, dtype=np.float32), requires_grad=True)
    y = linear(x, w)
    assert y.dtype == np.float32
    loss = softmax_cross_entropy(y, np.zeros(4, dtype=np.int64))
    assert loss.data.dtype == np.float64
