"""Run configuration: JSON-file schema, defaults, and CLI flag overrides."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

from .cim import DEVICE_TYPES, CrossbarSpec
from .errors import ConfigError
from .models import ARCH_NAMES

FLOAT_SENTINEL = 32

DEFAULT_CIFAR_MEAN = (0.4914, 0.4822, 0.4465)
DEFAULT_CIFAR_STD = (0.247, 0.243, 0.262)


@dataclass(frozen=True)
class RunConfig:
    arch: str = "mnist-tiny"
    weight_bits: int = 1  # binary weights; informational, the engine assumes 1
    act_bits: int = 4
    ste_alpha: float = 1.0
    ste_t_start: float = 1.0
    ste_t_end: float = 10.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    epochs: int = 10
    batch_size: int = 100
    ema_momentum: float = 0.9
    quantize_first_last: bool = False
    dataset: str = "mnist"  # "mnist" (IDX files, synthesized if absent) | "cifar10"
    data_dir: Optional[str] = None  # default: $BWMA_DATA_DIR or ./data
    cifar_mean: tuple = DEFAULT_CIFAR_MEAN
    cifar_std: tuple = DEFAULT_CIFAR_STD
    crossbar_rows: int = 32
    crossbar_cols: int = 32
    g_min: float = 1e-6
    g_max: float = 1e-4
    dac_bits: int = 1
    adc_bits: int = 4
    device: str = "RRAM"
    cost_tables: Optional[str] = None  # path to a JSON table file; None = shipped defaults

    def __post_init__(self):
        if self.arch not in ARCH_NAMES:
            raise ConfigError(f"unknown arch {self.arch!r}; choose from {ARCH_NAMES}")
        if not (1 <= self.act_bits <= 8 or self.act_bits == FLOAT_SENTINEL):
            raise ConfigError(
                f"act_bits must be in [1, 8] or the float sentinel {FLOAT_SENTINEL},"
                f" got {self.act_bits}"
            )
        if self.weight_bits != 1:
            raise ConfigError("weight_bits is fixed at 1 (binary weights)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError(f"bad epochs={self.epochs} / batch_size={self.batch_size}")
        if not 0.0 <= self.ema_momentum <= 1.0:
            raise ConfigError(f"ema_momentum must be in [0, 1], got {self.ema_momentum}")
        if self.device.upper() not in DEVICE_TYPES:
            raise ConfigError(f"device must be one of {DEVICE_TYPES}, got {self.device!r}")
        if self.dataset not in ("mnist", "cifar10"):
            raise ConfigError(f"dataset must be 'mnist' or 'cifar10', got {self.dataset!r}")

    def crossbar_spec(self) -> CrossbarSpec:
        return CrossbarSpec(
            rows=self.crossbar_rows,
            cols=self.crossbar_cols,
            g_min=self.g_min,
            g_max=self.g_max,
            dac_bits=self.dac_bits,
            adc_bits=self.adc_bits,
            device_type=self.device.upper(),
        )

    def resolved_data_dir(self) -> str:
        return self.data_dir or os.environ.get("BWMA_DATA_DIR") or "data"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cifar_mean"] = list(self.cifar_mean)
        d["cifar_std"] = list(self.cifar_std)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("cifar_mean", "cifar_std"):
            if key in d:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path) as f:
                raw = json.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_dict(raw)

    def override(self, **kwargs) -> "RunConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs) if kwargs else self
