"""Built-in reference architectures.

Shipping the exact layer shapes removes any ambiguity in the crossbar
utilization and cost numbers, which depend on nothing but these geometries.
By default the first and last layers keep full-precision weights while all
activations are quantized; ``quantize_first_last`` binarizes them too.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import ConfigError
from .nn import (
    ActQuant,
    Conv2d,
    Flatten,
    GlobalAvgPool,
    Linear,
    MaxPool2d,
    Model,
    Residual,
    ReLU,
    ScaleShift,
    SteSchedule,
)

ARCH_NAMES = ("mnist-tiny", "vgg8-cifar", "resnet20-cifar")

INPUT_SHAPES = {
    "mnist-tiny": (1, 28, 28),
    "vgg8-cifar": (3, 32, 32),
    "resnet20-cifar": (3, 32, 32),
}

VGG8_CHANNELS = (48, 48, 96, 96, 96, 96)
VGG8_HIDDEN = 48
RESNET20_CHANNELS = (16, 32, 64)


def build_model(
    arch: str,
    act_bits: int = 4,
    rng: Optional[np.random.Generator] = None,
    quantize_first_last: bool = False,
    ema_momentum: float = 0.9,
    ste: Optional[SteSchedule] = None,
) -> Model:
    rng = rng if rng is not None else np.random.default_rng(0)
    ste = ste or SteSchedule()
    if arch == "mnist-tiny":
        return _mnist_tiny(act_bits, rng, quantize_first_last, ema_momentum, ste)
    if arch == "vgg8-cifar":
        return _vgg8_cifar(act_bits, rng, quantize_first_last, ema_momentum, ste)
    if arch == "resnet20-cifar":
        return _resnet20_cifar(act_bits, rng, quantize_first_last, ema_momentum, ste)
    raise ConfigError(f"unknown architecture {arch!r}; choose from {ARCH_NAMES}")


def _mnist_tiny(bits, rng, qfl, mom, ste) -> Model:
    stages = [
        ActQuant("quant_in", bits, mom),
        Conv2d("conv1", 1, 16, quantize=qfl, ste=ste, rng=rng),
        ScaleShift("ss1", 16),
        ReLU(),
        ActQuant("quant1", bits, mom),
        Conv2d("conv2", 16, 32, quantize=True, ste=ste, rng=rng),
        ScaleShift("ss2", 32),
        ReLU(),
        MaxPool2d(),
        Flatten(),
        ActQuant("quant2", bits, mom),
        Linear("fc", 32 * 14 * 14, 10, quantize=qfl, ste=ste, rng=rng),
    ]
    return Model("mnist-tiny", (1, 28, 28), stages, bits)


def _vgg8_cifar(bits, rng, qfl, mom, ste) -> Model:
    c = VGG8_CHANNELS
    stages: list = [ActQuant("quant_in", bits, mom)]
    in_ch = 3
    for i, out_ch in enumerate(c, start=1):
        quantize = True if i > 1 else qfl
        stages += [
            Conv2d(f"conv{i}", in_ch, out_ch, quantize=quantize, ste=ste, rng=rng),
            ScaleShift(f"ss{i}", out_ch),
            ReLU(),
        ]
        if i % 2 == 0:
            stages.append(MaxPool2d(f"pool{i // 2}"))
        stages.append(ActQuant(f"quant{i}", bits, mom))
        in_ch = out_ch
    feat = c[-1] * 4 * 4  # 32x32 input through three 2x2 pools
    stages += [
        Flatten(),
        # fc1 consumes the pool3 output, which quant6 already quantized
        Linear("fc1", feat, VGG8_HIDDEN, quantize=True, ste=ste, rng=rng),
        ReLU(),
        ActQuant("quant_fc", bits, mom),
        Linear("fc2", VGG8_HIDDEN, 10, quantize=qfl, ste=ste, rng=rng),
    ]
    return Model("vgg8-cifar", (3, 32, 32), stages, bits)


def _resnet20_cifar(bits, rng, qfl, mom, ste) -> Model:
    stages: list = [
        ActQuant("quant_in", bits, mom),
        Conv2d("conv1", 3, RESNET20_CHANNELS[0], quantize=qfl, ste=ste, rng=rng),
        ScaleShift("ss0", RESNET20_CHANNELS[0]),
        ReLU(),
    ]
    in_ch = RESNET20_CHANNELS[0]
    for si, ch in enumerate(RESNET20_CHANNELS, start=1):
        for bi in range(3):
            stride = 2 if (si > 1 and bi == 0) else 1
            name = f"stage{si}.block{bi + 1}"
            inner = [
                ActQuant(f"{name}.quant1", bits, mom),
                Conv2d(f"{name}.conv1", in_ch, ch, stride=stride, quantize=True, ste=ste, rng=rng),
                ScaleShift(f"{name}.ss1", ch),
                ReLU(),
                ActQuant(f"{name}.quant2", bits, mom),
                Conv2d(f"{name}.conv2", ch, ch, quantize=True, ste=ste, rng=rng),
                ScaleShift(f"{name}.ss2", ch),
            ]
            stages.append(Residual(name, inner, in_ch, ch, stride))
            in_ch = ch
    stages += [
        GlobalAvgPool(),
        ActQuant("quant_fc", bits, mom),
        Linear("fc", RESNET20_CHANNELS[-1], 10, quantize=qfl, ste=ste, rng=rng),
    ]
    return Model("resnet20-cifar", (3, 32, 32), stages, bits)
