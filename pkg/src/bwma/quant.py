"""Quantization math core: weight binarization and multi-bit activation quantizers.

Weights are binarized to two per-layer levels ``c - r`` / ``c + r`` chosen so
the binarized distribution keeps the mean and population variance of the
full-precision weights (c = mean, r = population std, split at the median).

Activations use a hard uniform quantizer in the forward pass.  The backward
pass uses the exact derivative of a smooth surrogate assembled from scaled,
shifted copies of a cubic sign approximation, one transition per quantizer
threshold.  With transition half-width h = delta/2 the transitions abut at
the grid levels, so the surrogate agrees with the hard quantizer exactly on
the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericError, ShapeError

__all__ = [
    "BinaryLevels",
    "SteParams",
    "ActQuantState",
    "SoftQuantParams",
    "binarize_levels",
    "binarize_forward",
    "ste_grad_factor",
    "uniform_quantize",
    "dirac_approx",
    "sign_approx",
    "soft_quantize",
    "soft_quantize_grad",
    "update_act_range",
]

# Comparisons against the +-1 clip points of sign_approx snap within this
# band so that grid levels reconstructed through float arithmetic still hit
# the clipped branches exactly (keeps soft == hard on the grid bitwise).
_CLIP_SNAP = 1e-11


@dataclass(frozen=True)
class BinaryLevels:
    """Two-level weight code: low = c - r, high = c + r, split at threshold."""

    c: float
    r: float
    threshold: float

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"radius must be >= 0, got {self.r}")

    @property
    def low(self) -> float:
        return self.c - self.r

    @property
    def high(self) -> float:
        return self.c + self.r


@dataclass(frozen=True)
class SteParams:
    """Shape of the binarizer's surrogate gradient: temperature t, scale alpha."""

    t: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if not (self.t > 0 and self.alpha > 0):
            raise ValueError(f"t and alpha must be > 0, got t={self.t}, alpha={self.alpha}")


@dataclass(frozen=True)
class ActQuantState:
    """Running activation range [a_min, a_max] plus bitwidth for one quant site."""

    a_min: float
    a_max: float
    bits: int
    ema_momentum: float = 0.9

    def __post_init__(self):
        if not self.a_max > self.a_min:
            raise ValueError(f"need a_max > a_min, got [{self.a_min}, {self.a_max}]")
        if self.bits < 1:
            raise ValueError(f"bits must be >= 1, got {self.bits}")
        if not 0.0 <= self.ema_momentum <= 1.0:
            raise ValueError(f"ema_momentum must be in [0, 1], got {self.ema_momentum}")

    @property
    def delta(self) -> float:
        """Step between adjacent grid levels."""
        return (self.a_max - self.a_min) / (2**self.bits - 1)

    @property
    def num_levels(self) -> int:
        return 2**self.bits

    def levels(self) -> np.ndarray:
        """All grid levels, canonically a_min + k*delta."""
        return self.a_min + np.arange(self.num_levels, dtype=np.float64) * self.delta

    def with_bits(self, bits: int) -> "ActQuantState":
        """Same range re-gridded at a different bitwidth (used by eval sweeps)."""
        return replace(self, bits=bits)


@dataclass(frozen=True)
class SoftQuantParams:
    """Threshold layout of the surrogate quantizer derived from an ActQuantState."""

    thresholds: np.ndarray  # t_k = a_min + (k - 1/2) * delta, k = 1..2^bits - 1
    s_a: float  # vertical scale of each transition
    h: float  # horizontal half-width of each transition

    @classmethod
    def from_state(cls, s: ActQuantState) -> "SoftQuantParams":
        d = s.delta
        ks = np.arange(1, s.num_levels, dtype=np.float64)
        return cls(thresholds=s.a_min + (ks - 0.5) * d, s_a=d / 2.0, h=d / 2.0)


def binarize_levels(w: np.ndarray) -> BinaryLevels:
    """Fit the two binary levels to a weight tensor by moment matching.

    c is the mean, r the population standard deviation, and the split point
    is the median, so a median-balanced tensor keeps its first two moments
    after binarization.
    """
    w = np.asarray(w)
    if w.size == 0:
        raise ShapeError("cannot binarize an empty weight tensor")
    if not np.all(np.isfinite(w)):
        raise NumericError("weight tensor contains non-finite values")
    w64 = w.astype(np.float64, copy=False)
    c = float(np.mean(w64))
    r = float(np.sqrt(np.mean((w64 - c) ** 2)))
    return BinaryLevels(c=c, r=r, threshold=float(np.median(w64)))


def binarize_forward(w: np.ndarray, levels: BinaryLevels) -> np.ndarray:
    """Map each weight below the threshold to c - r, the rest to c + r."""
    w = np.asarray(w)
    return np.where(w < levels.threshold, w.dtype.type(levels.low), w.dtype.type(levels.high))


def ste_grad_factor(w, p: SteParams):
    """Surrogate gradient of the binarizer: alpha*(1 - tanh^2(w*t)) inside [-1, 1], else 0."""
    w = np.asarray(w, dtype=np.float64)
    inside = np.abs(w) <= 1.0
    th = np.tanh(w * p.t)
    out = np.where(inside, p.alpha * (1.0 - th * th), 0.0)
    return out if out.ndim else float(out)


def _round_half_up(x: np.ndarray) -> np.ndarray:
    # round-half-away-from-zero on non-negative arguments
    return np.floor(x + 0.5)


def _work(a) -> np.ndarray:
    """float32 stays float32 (training hot path); everything else runs in float64."""
    a = np.asarray(a)
    return a if a.dtype == np.float32 else a.astype(np.float64, copy=False)


def uniform_quantize(a, s: ActQuantState):
    """Hard multi-bit quantizer: clamp to [a_min, a_max], snap to the nearest grid level.

    Zero-point-free on a [0, a_max] range; for a_min != 0 this is the affine
    extension a_min + round((a - a_min)/delta)*delta.  Ties round away from
    zero (upward, since the argument is non-negative after clamping).
    """
    a = _work(a)
    dt = a.dtype.type
    d = dt(s.delta)
    q = np.clip(a, dt(s.a_min), dt(s.a_max))
    idx = _round_half_up((q - dt(s.a_min)) / d)
    out = dt(s.a_min) + idx * d
    return out if out.ndim else float(out)


def dirac_approx(a):
    """Bell-shaped polynomial stand-in for the Dirac impulse: -2a^2 + 5/3 on [-1, 1]."""
    a = _work(a)
    dt = a.dtype.type
    out = np.where(np.abs(a) <= dt(1), dt(-2) * a * a + dt(5.0 / 3.0), dt(0))
    return out if out.ndim else float(out)


def sign_approx(a):
    """Cubic sign approximation: -(2/3)a^3 + (5/3)a on [-1, 1], clipped to +-1 outside.

    Continuous everywhere, odd, overshoots to (10/9)*sqrt(5/6) at +-sqrt(5/6).
    Arguments within a tiny snap band of the clip points return exactly +-1 so
    grid levels survive float round-trips.
    """
    a = np.asarray(a, dtype=np.float64)
    # cube via plain multiplies: IEEE rounding keeps them exactly odd, unlike pow
    cubic = (5.0 / 3.0) * a - (2.0 / 3.0) * (a * a * a)
    out = np.where(a >= 1.0 - _CLIP_SNAP, 1.0, np.where(a <= -1.0 + _CLIP_SNAP, -1.0, cubic))
    return out if out.ndim else float(out)


def soft_quantize(a, s: ActQuantState):
    """Smooth surrogate of the hard quantizer: sum of scaled, shifted sign transitions.

    Returns a_min + (delta/2) * sum_k [G((a - t_k)/h) + 1].  Equals a_min below
    the range, a_max above it, and the hard quantizer exactly at every grid level.
    """
    a = np.asarray(a, dtype=np.float64)
    p = SoftQuantParams.from_state(s)
    u = (a[..., None] - p.thresholds) / p.h
    total = np.sum(sign_approx(u) + 1.0, axis=-1)
    out = s.a_min + p.s_a * total
    return out if out.ndim else float(out)


def soft_quantize_grad(a, s: ActQuantState):
    """Exact derivative of soft_quantize: sum_k g((a - t_k)/h).

    Each transition's support spans exactly one grid interval, so at most the
    two thresholds bracketing ``a`` contribute; only those are evaluated.
    With h = delta/2 the argument reduces to 2*(u - k) for the fractional
    threshold index u, which avoids rebuilding threshold arrays.
    """
    a = _work(a)
    dt = a.dtype.type
    n = s.num_levels - 1  # thresholds are k = 1..n
    # fractional threshold index: u == k exactly when a == t_k
    u = (a - dt(s.a_min)) / dt(s.delta) + dt(0.5)
    k0 = np.floor(u)
    total = np.zeros_like(a)
    for k in (k0, k0 + dt(1)):
        valid = (k >= dt(1)) & (k <= dt(n))
        total += np.where(valid, dirac_approx(dt(2) * (u - k)), dt(0))
    return total if total.ndim else float(total)


def update_act_range(s: ActQuantState, batch: np.ndarray) -> ActQuantState:
    """EMA update of the running range from one batch: new = m*old + (1-m)*batch extreme."""
    batch = np.asarray(batch)
    if batch.size == 0:
        raise ShapeError("cannot update activation range from an empty batch")
    m = s.ema_momentum
    lo = m * s.a_min + (1.0 - m) * float(np.min(batch))
    hi = m * s.a_max + (1.0 - m) * float(np.max(batch))
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise NumericError("activation range update saw non-finite values")
    if not hi > lo:
        hi = lo + 1e-8  # keep delta > 0 when a batch collapses the range
    return replace(s, a_min=lo, a_max=hi)
