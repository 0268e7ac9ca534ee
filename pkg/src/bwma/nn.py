"""Network building blocks wiring the quantizers into the autodiff graph.

Layers follow the quantization-aware training recipe: full-precision shadow
weights are kept as the trainable parameters, the forward pass sees the hard
binarized/quantized values, and the backward pass flows through the smooth
surrogate gradients.  A ``surrogate=True`` pass swaps the hard forward for
the differentiable surrogate itself, which is what makes the finite
difference gradient checks possible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .quant import (
    ActQuantState,
    SteParams,
    binarize_forward,
    binarize_levels,
    soft_quantize,
    soft_quantize_grad,
    ste_grad_factor,
    uniform_quantize,
    update_act_range,
)

FLOAT_BITS_SENTINEL = 32  # act_bits >= 32 disables quantization entirely


@dataclass
class PassContext:
    """Per-forward switches: training mode and surrogate-forward mode."""

    train: bool = False
    surrogate: bool = False


class SteSchedule:
    """Mutable holder for the binarizer surrogate parameters, shared across layers.

    The trainer anneals the temperature from t_start to t_end over the run so
    the surrogate sharpens as training converges.
    """

    def __init__(self, alpha: float = 1.0, t_start: float = 1.0, t_end: float = 10.0):
        self.alpha = alpha
        self.t_start = t_start
        self.t_end = t_end
        self.params = SteParams(t=t_start, alpha=alpha)

    def advance(self, progress: float):
        progress = min(max(progress, 0.0), 1.0)
        t = self.t_start + (self.t_end - self.t_start) * progress
        self.params = SteParams(t=t, alpha=self.alpha)


# -- quantizer graph nodes -----------------------------------------------------


def binarize_ste(w: T.Tensor, ste: SteParams, surrogate: bool = False) -> T.Tensor:
    """Binarize weights with the straight-through surrogate gradient.

    Hard mode maps to the two moment-matched levels; surrogate mode runs the
    smooth primitive (alpha/t)*tanh(w*t), constant outside [-1, 1], whose true
    derivative is the surrogate gradient used in both modes.
    """
    if surrogate:
        clipped = np.clip(w.data.astype(np.float64), -1.0, 1.0)
        out_data = ((ste.alpha / ste.t) * np.tanh(clipped * ste.t)).astype(w.dtype)
    else:
        levels = binarize_levels(w.data)
        out_data = binarize_forward(w.data, levels)

    def backward(out: T.Tensor):
        if w.requires_grad:
            w.accumulate_grad(out.grad * ste_grad_factor(w.data, ste).astype(w.dtype, copy=False))

    return T._make(out_data, (w,), backward)


def fake_quant(a: T.Tensor, state: ActQuantState, surrogate: bool = False) -> T.Tensor:
    """Quantize activations: hard uniform grid forward, soft-transition gradient backward."""
    if surrogate:
        out_data = soft_quantize(a.data, state).astype(a.dtype, copy=False)
    else:
        out_data = uniform_quantize(a.data, state).astype(a.dtype, copy=False)

    def backward(out: T.Tensor):
        if a.requires_grad:
            a.accumulate_grad(out.grad * soft_quantize_grad(a.data, state).astype(a.dtype, copy=False))

    return T._make(out_data, (a,), backward)


# -- initializers ----------------------------------------------------------------


def kaiming_uniform(shape, fan_in: int, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    bound = float(np.sqrt(6.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


# -- stages -----------------------------------------------------------------------


class Stage:
    """One step of the forward pass; knows its parameters and output shape."""

    name: str

    def forward(self, x: T.Tensor, ctx: PassContext) -> T.Tensor:
        raise NotImplementedError

    def parameters(self) -> Iterator[tuple[str, T.Tensor]]:
        return iter(())

    def out_shape(self, in_shape: tuple) -> tuple:
        return in_shape


class Conv2d(Stage):
    def __init__(
        self,
        name: str,
        in_channels: int,
        out_channels: int,
        kernel: int = 3,
        stride: int = 1,
        padding: int = 1,
        quantize: bool = True,
        ste: Optional[SteSchedule] = None,
        rng: Optional[np.random.Generator] = None,
        dtype=np.float32,
    ):
        self.name = name
        self.stride = stride
        self.padding = padding
        self.quantize = quantize
        self.ste = ste
        fan_in = in_channels * kernel * kernel
        rng = rng or np.random.default_rng(0)
        self.weight = T.Tensor(
            kaiming_uniform((out_channels, in_channels, kernel, kernel), fan_in, rng, dtype),
            requires_grad=True,
        )

    def effective_weight(self, ctx: PassContext) -> T.Tensor:
        if self.quantize:
            return binarize_ste(self.weight, self.ste.params, surrogate=ctx.surrogate)
        return self.weight

    def forward(self, x, ctx):
        return T.conv2d(x, self.effective_weight(ctx), self.stride, self.padding)

    def parameters(self):
        yield f"{self.name}.weight", self.weight

    def out_shape(self, in_shape):
        c, h, w = in_shape
        o, i, k, _ = self.weight.shape
        if c != i:
            raise ShapeError(f"{self.name}: expected {i} input channels, got {c}")
        oh = (h + 2 * self.padding - k) // self.stride + 1
        ow = (w + 2 * self.padding - k) // self.stride + 1
        return (o, oh, ow)


class Linear(Stage):
    def __init__(
        self,
        name: str,
        in_features: int,
        out_features: int,
        quantize: bool = False,
        ste: Optional[SteSchedule] = None,
        rng: Optional[np.random.Generator] = None,
        dtype=np.float32,
    ):
        self.name = name
        self.quantize = quantize
        self.ste = ste
        rng = rng or np.random.default_rng(0)
        self.weight = T.Tensor(
            kaiming_uniform((in_features, out_features), in_features, rng, dtype),
            requires_grad=True,
        )
        self.bias = T.Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def effective_weight(self, ctx: PassContext) -> T.Tensor:
        if self.quantize:
            return binarize_ste(self.weight, self.ste.params, surrogate=ctx.surrogate)
        return self.weight

    def forward(self, x, ctx):
        return T.linear(x, self.effective_weight(ctx), self.bias)

    def parameters(self):
        yield f"{self.name}.weight", self.weight
        yield f"{self.name}.bias", self.bias

    def out_shape(self, in_shape):
        (f,) = in_shape
        fin, fout = self.weight.shape
        if f != fin:
            raise ShapeError(f"{self.name}: expected {fin} input features, got {f}")
        return (fout,)


class ScaleShift(Stage):
    """Per-channel learnable scale and shift (the batch-norm-free scaling layer)."""

    def __init__(self, name: str, channels: int, dtype=np.float32):
        self.name = name
        self.gamma = T.Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = T.Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)

    def forward(self, x, ctx):
        return T.scale_shift(x, self.gamma, self.beta)

    def parameters(self):
        yield f"{self.name}.gamma", self.gamma
        yield f"{self.name}.beta", self.beta


class ReLU(Stage):
    def __init__(self, name: str = "relu"):
        self.name = name

    def forward(self, x, ctx):
        return T.relu(x)


class MaxPool2d(Stage):
    def __init__(self, name: str = "pool", k: int = 2):
        self.name = name
        self.k = k

    def forward(self, x, ctx):
        return T.max_pool2d(x, self.k)

    def out_shape(self, in_shape):
        c, h, w = in_shape
        return (c, h // self.k, w // self.k)


class GlobalAvgPool(Stage):
    def __init__(self, name: str = "gap"):
        self.name = name

    def forward(self, x, ctx):
        return T.mean_over(x, (2, 3))

    def out_shape(self, in_shape):
        return (in_shape[0],)


class Flatten(Stage):
    def __init__(self, name: str = "flatten"):
        self.name = name

    def forward(self, x, ctx):
        return x.flatten2d()

    def out_shape(self, in_shape):
        n = 1
        for d in in_shape:
            n *= d
        return (n,)


class ActQuant(Stage):
    """Activation quantization site with a running [a_min, a_max] range.

    In training mode the range is EMA-updated from each batch before the
    batch is quantized; in eval mode the state is frozen.  A bitwidth at the
    float sentinel turns the stage into a pass-through.
    """

    def __init__(self, name: str, bits: int, ema_momentum: float = 0.9):
        self.name = name
        self.bits = bits
        self.state = ActQuantState(a_min=0.0, a_max=1.0, bits=min(bits, 8), ema_momentum=ema_momentum)

    @property
    def enabled(self) -> bool:
        return self.bits < FLOAT_BITS_SENTINEL

    def forward(self, x, ctx):
        if not self.enabled:
            return x
        if ctx.train:
            self.state = update_act_range(self.state, x.data)
        return fake_quant(x, self.state, surrogate=ctx.surrogate)


class Residual(Stage):
    """Two-conv residual block with an identity or subsample+zero-pad shortcut."""

    def __init__(self, name: str, stages: list[Stage], in_channels: int, out_channels: int, stride: int):
        self.name = name
        self.stages = stages
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride

    def forward(self, x, ctx):
        y = x
        for s in self.stages:
            y = s.forward(y, ctx)
        if self.stride != 1 or self.in_channels != self.out_channels:
            shortcut = T.downsample_pad_channels(x, self.out_channels)
        else:
            shortcut = x
        return T.relu(T.add(y, shortcut))

    def parameters(self):
        for s in self.stages:
            yield from s.parameters()

    def out_shape(self, in_shape):
        shape = in_shape
        for s in self.stages:
            shape = s.out_shape(shape)
        return shape


@dataclass(frozen=True)
class LayerGeometry:
    """Shape facts the crossbar mapper and cost model need about one MVM layer."""

    name: str
    kind: str  # "conv" | "linear"
    weight_shape: tuple  # (O, I, K, K) or (F, G)
    positions: int  # MVM activations per inference: OH*OW for conv, 1 for linear


class Model:
    """Ordered stage list plus the bookkeeping for training, mapping, and I/O."""

    def __init__(self, arch: str, input_shape: tuple, stages: list[Stage], act_bits: int):
        self.arch = arch
        self.input_shape = input_shape  # (C, H, W)
        self.stages = stages
        self.act_bits = act_bits
        self._check_shapes()

    def _check_shapes(self):
        shape = self.input_shape
        for s in self.stages:
            shape = s.out_shape(shape)
        self.output_shape = shape

    def forward(self, x: T.Tensor, ctx: Optional[PassContext] = None) -> T.Tensor:
        ctx = ctx or PassContext()
        for s in self.stages:
            x = s.forward(x, ctx)
        return x

    def parameters(self) -> list[tuple[str, T.Tensor]]:
        out = []
        for s in self.stages:
            out.extend(s.parameters())
        return out

    def _walk(self, stages=None) -> Iterator[Stage]:
        for s in stages if stages is not None else self.stages:
            yield s
            if isinstance(s, Residual):
                yield from self._walk(s.stages)

    def quant_sites(self) -> list[ActQuant]:
        return [s for s in self._walk() if isinstance(s, ActQuant)]

    def mvm_stages(self) -> list[Stage]:
        return [s for s in self._walk() if isinstance(s, (Conv2d, Linear))]

    def binarized_parameters(self) -> list[T.Tensor]:
        return [s.weight for s in self.mvm_stages() if s.quantize]

    def mvm_geometry(self) -> list[LayerGeometry]:
        """Per-MVM-layer shapes and output position counts, in forward order."""
        geoms = []

        def trace(stages, shape):
            for s in stages:
                if isinstance(s, Residual):
                    trace(s.stages, shape)
                    shape = s.out_shape(shape)
                    continue
                if isinstance(s, Conv2d):
                    out = s.out_shape(shape)
                    geoms.append(
                        LayerGeometry(s.name, "conv", tuple(s.weight.shape), out[1] * out[2])
                    )
                elif isinstance(s, Linear):
                    geoms.append(LayerGeometry(s.name, "linear", tuple(s.weight.shape), 1))
                shape = s.out_shape(shape)
            return shape

        trace(self.stages, self.input_shape)
        return geoms
