import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bwma.errors import NumericError, ShapeError
from bwma.quant import (
    ActQuantState,
    BinaryLevels,
    SoftQuantParams,
    SteParams,
    binarize_forward,
    binarize_levels,
    dirac_approx,
    sign_approx,
    soft_quantize,
    soft_quantize_grad,
    ste_grad_factor,
    uniform_quantize,
    update_act_range,
)


# -- binarize ------------------------------------------------------------------


def test_binarize_levels_symmetric_pair():
    lv = binarize_levels(np.array([-1.0, 1.0]))
    assert lv.c == 0.0 and lv.r == 1.0


def test_binarize_levels_zero_variance():
    lv = binarize_levels(np.array([0.5, 0.5, 0.5]))
    assert lv.c == 0.5 and lv.r == 0.0


def test_binarize_levels_hand_computed():
    lv = binarize_levels(np.array([0.1, 0.2, 0.3, 0.4]))
    assert lv.c == pytest.approx(0.25, abs=1e-12)
    assert lv.r == pytest.approx(0.1118034, abs=1e-7)
    assert lv.threshold == pytest.approx(0.25, abs=1e-12)


def test_binarize_levels_errors():
    with pytest.raises(ShapeError):
        binarize_levels(np.array([]))
    with pytest.raises(NumericError):
        binarize_levels(np.array([1.0, np.nan]))


def test_binarize_forward_fixed_points():
    lv = binarize_levels(np.array([-1.0, 1.0]))
    np.testing.assert_array_equal(binarize_forward(np.array([-1.0, 1.0]), lv), [-1.0, 1.0])


def test_binarize_forward_hand_computed():
    w = np.array([0.1, 0.2, 0.3, 0.4])
    lv = binarize_levels(w)
    out = binarize_forward(w, lv)
    np.testing.assert_allclose(out, [0.1381966, 0.1381966, 0.3618034, 0.3618034], atol=1e-7)


def test_binarize_forward_constant_collapses():
    w = np.full((3, 3), 0.7)
    lv = binarize_levels(w)
    np.testing.assert_array_equal(binarize_forward(w, lv), np.full((3, 3), 0.7))


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    half=st.integers(1, 400),
    dist=st.sampled_from(["gauss", "uniform", "bimodal"]),
)
def test_moment_matching_even_counts(seed, half, dist):
    rng = np.random.default_rng(seed)
    n = 2 * half
    if dist == "gauss":
        w = rng.normal(0.0, 0.3, n)
    elif dist == "uniform":
        w = rng.uniform(-1, 1, n)
    else:
        w = np.concatenate([rng.normal(-0.5, 0.1, half), rng.normal(0.5, 0.1, n - half)])
    srt = np.sort(w)
    if srt[half - 1] == srt[half]:  # degenerate median split
        return
    lv = binarize_levels(w)
    out = binarize_forward(w, lv).astype(np.float64)
    scale = max(abs(lv.c), 1e-12)
    assert abs(out.mean() - lv.c) <= 1e-6 * max(scale, 1.0)
    if lv.r > 0:
        assert abs(out.var() - lv.r**2) <= 1e-6 * lv.r**2


# -- straight-through factor ------------------------------------------------------


def test_ste_grad_factor_values():
    p = SteParams(t=1.0, alpha=1.0)
    assert ste_grad_factor(0.0, p) == pytest.approx(1.0)
    assert ste_grad_factor(2.0, SteParams(t=3.0, alpha=5.0)) == 0.0
    assert ste_grad_factor(0.5, SteParams(t=2.0, alpha=1.0)) == pytest.approx(0.419974, abs=1e-6)


def test_ste_params_validation():
    with pytest.raises(ValueError):
        SteParams(t=0.0)
    with pytest.raises(ValueError):
        SteParams(alpha=-1.0)


# -- uniform quantizer -------------------------------------------------------------


def test_uniform_quantize_examples():
    s = ActQuantState(0.0, 3.0, 2)
    assert uniform_quantize(0.0, s) == 0.0
    assert uniform_quantize(1.4, s) == 1.0
    assert uniform_quantize(5.0, s) == 3.0


def _brute_nearest(a, s):
    """Independent oracle: scan all grid levels, ties resolve to the higher level."""
    levels = s.levels()
    dist = np.abs(levels[None, :] - np.clip(np.atleast_1d(a), s.a_min, s.a_max)[:, None])
    best = dist.min(axis=1)
    # highest index achieving the minimum
    idx = dist.shape[1] - 1 - np.argmin(dist[:, ::-1], axis=1)
    return levels[idx], best


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), bits=st.integers(1, 8))
def test_uniform_quantize_matches_brute_force(seed, bits):
    rng = np.random.default_rng(seed)
    s = ActQuantState(-0.5, 2.5, bits)
    a = rng.uniform(-1.5, 3.5, 500)
    expected, _ = _brute_nearest(a, s)
    np.testing.assert_array_equal(uniform_quantize(a, s), expected)


def test_uniform_quantize_idempotent_and_error_bound():
    rng = np.random.default_rng(5)
    for bits in range(1, 9):
        s = ActQuantState(0.0, 3.0, bits)
        a = rng.uniform(0.0, 3.0, 2000)
        q = uniform_quantize(a, s)
        np.testing.assert_array_equal(uniform_quantize(q, s), q)
        assert np.all(np.abs(q - a) <= s.delta / 2 + 1e-12 * s.delta)


def test_delta_strictly_decreases_with_bits():
    deltas = [ActQuantState(0.0, 3.0, b).delta for b in range(1, 9)]
    assert all(d1 > d2 for d1, d2 in zip(deltas, deltas[1:]))


def test_act_quant_state_validation():
    with pytest.raises(ValueError):
        ActQuantState(1.0, 1.0, 2)
    with pytest.raises(ValueError):
        ActQuantState(0.0, 1.0, 0)


# -- polynomial sign/dirac approximations ----------------------------------------


def test_dirac_values():
    assert dirac_approx(0.0) == pytest.approx(5.0 / 3.0, abs=1e-12)
    assert dirac_approx(2.0) == 0.0
    assert dirac_approx(1.0) == pytest.approx(-1.0 / 3.0, abs=1e-12)


def test_sign_values():
    assert sign_approx(0.0) == 0.0
    assert sign_approx(-5.0) == -1.0
    assert sign_approx(1.0) == 1.0
    peak = np.sqrt(5.0 / 6.0)
    assert peak == pytest.approx(0.9128709, abs=1e-7)
    assert sign_approx(peak) == pytest.approx(1.0143010, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(-3, 3, allow_nan=False))
def test_sign_odd_symmetry_and_bound(a):
    assert sign_approx(-a) == -sign_approx(a)
    assert abs(sign_approx(a)) <= (10.0 / 9.0) * np.sqrt(5.0 / 6.0) + 1e-12


def test_sign_continuous_at_clip_points():
    eps = 1e-7
    assert sign_approx(1.0 - eps) == pytest.approx(1.0, abs=1e-6)
    assert sign_approx(1.0 + eps) == 1.0
    assert sign_approx(-1.0 - eps) == -1.0
    assert sign_approx(-1.0 + eps) == pytest.approx(-1.0, abs=1e-6)


def test_dirac_integral_is_sign_jump():
    # Gauss-Legendre quadrature of the bump over [-1, 1]
    nodes, weights = np.polynomial.legendre.leggauss(16)
    integral = float(np.sum(weights * dirac_approx(nodes)))
    assert integral == pytest.approx(2.0, abs=1e-9)


# -- soft quantizer -----------------------------------------------------------------


def test_soft_quantize_examples():
    s = ActQuantState(0.0, 3.0, 2)
    assert soft_quantize(-1.0, s) == 0.0
    assert soft_quantize(4.0, s) == 3.0
    assert soft_quantize(1.0, s) == 1.0


def test_soft_quantize_params_layout():
    s = ActQuantState(0.0, 3.0, 2)
    p = SoftQuantParams.from_state(s)
    np.testing.assert_allclose(p.thresholds, [0.5, 1.5, 2.5])
    assert p.s_a == p.h == 0.5
    diffs = np.diff(p.thresholds)
    np.testing.assert_allclose(diffs, s.delta)


def test_soft_equals_hard_on_every_grid_level():
    for bits in range(1, 9):
        for a_min, a_max in ((0.0, 3.0), (-0.37, 1.93), (0.1, 7.3)):
            s = ActQuantState(a_min, a_max, bits)
            levels = s.levels()
            soft = soft_quantize(levels, s)
            hard = uniform_quantize(levels, s)
            np.testing.assert_array_equal(soft, hard)
            np.testing.assert_array_equal(hard, levels)


def test_soft_quantize_grad_examples():
    s = ActQuantState(0.0, 3.0, 2)
    assert soft_quantize_grad(-10.0, s) == 0.0
    assert soft_quantize_grad(13.0, s) == 0.0
    assert soft_quantize_grad(0.5, s) == pytest.approx(5.0 / 3.0, abs=1e-12)
    assert soft_quantize_grad(1.4, s) == pytest.approx(1.5866667, abs=1e-6)


def test_soft_quantize_grad_equals_brute_force_sum():
    rng = np.random.default_rng(2)
    for bits in (1, 3, 5, 8):
        s = ActQuantState(-0.2, 2.2, bits)
        p = SoftQuantParams.from_state(s)
        a = rng.uniform(-0.5, 2.5, 300)
        brute = dirac_approx((a[:, None] - p.thresholds) / p.h).sum(axis=1)
        np.testing.assert_allclose(soft_quantize_grad(a, s), brute, atol=1e-12)


def test_soft_quantize_grad_matches_finite_difference():
    rng = np.random.default_rng(9)
    s = ActQuantState(0.0, 3.0, 4)
    a = rng.uniform(0.0, 3.0, 400)
    # stay away from the clip points of each transition
    u = (a - s.a_min) / s.delta + 0.5
    keep = np.abs(u - np.round(u)) > 1e-3
    keep &= np.abs(u - np.floor(u) - 0.5) > 1e-3
    a = a[keep]
    h = 1e-5
    fd = (soft_quantize(a + h, s) - soft_quantize(a - h, s)) / (2 * h)
    grad = soft_quantize_grad(a, s)
    # rel err 1e-5 wherever the derivative is alive; near its zero crossings the
    # finite difference's own truncation noise (~1e-9) dominates, so allow it
    err = np.abs(fd - grad)
    assert np.all(err < np.maximum(1e-5 * np.maximum(np.abs(fd), np.abs(grad)), 1e-7))


# -- range tracking ------------------------------------------------------------------


def test_update_act_range_snap_and_freeze():
    s0 = ActQuantState(0.0, 1.0, 4, ema_momentum=0.0)
    s1 = update_act_range(s0, np.array([-2.0, 5.0]))
    assert (s1.a_min, s1.a_max) == (-2.0, 5.0)
    s0 = ActQuantState(0.0, 1.0, 4, ema_momentum=1.0)
    s1 = update_act_range(s0, np.array([-2.0, 5.0]))
    assert (s1.a_min, s1.a_max) == (0.0, 1.0)


def test_update_act_range_ema_arithmetic():
    s0 = ActQuantState(0.0, 1.0, 4, ema_momentum=0.9)
    s1 = update_act_range(s0, np.array([0.0, 2.0]))
    assert s1.a_min == pytest.approx(0.0)
    assert s1.a_max == pytest.approx(1.1)


def test_update_act_range_rejects_empty():
    with pytest.raises(ShapeError):
        update_act_range(ActQuantState(0.0, 1.0, 4), np.array([]))


def test_binary_levels_low_high():
    lv = BinaryLevels(c=0.2, r=0.05, threshold=0.21)
    assert lv.low == pytest.approx(0.15)
    assert lv.high == pytest.approx(0.25)
    with pytest.raises(ValueError):
        BinaryLevels(c=0.0, r=-0.1, threshold=0.0)
