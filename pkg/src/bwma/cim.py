"""Crossbar mapping and mixed-signal inference simulation.

Convolution kernels are split by spatial position into K*K sub-matrices of
shape (in_channels, out_channels); linear layers unroll to a single matrix.
Each signed weight occupies a differential pair of cells (two physical
columns); sub-matrices are tiled onto fixed-size arrays without packing, so
unused cells accumulate whenever a dimension misses the array size.

Inference streams activation codes bit-serially through the arrays: encode
to DAC slices, analog multiply-accumulate per tile, ADC conversion, then
shift-and-add recombination and digital accumulation across tiles and
sub-matrices.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, MappingError, ShapeError
from .nn import ActQuant, Conv2d, Linear, Model, PassContext, Residual
from .quant import ActQuantState, uniform_quantize

DEVICE_TYPES = ("SRAM", "RRAM", "FeFET")
COLUMNS_PER_WEIGHT = 2  # differential pair: g_pos and g_neg cells
ADC_BYPASS = 0  # adc_bits sentinel: converters ideal / disabled


@dataclass(frozen=True)
class CrossbarSpec:
    """Array geometry, conductance window, and converter resolutions."""

    rows: int = 32
    cols: int = 32
    g_min: float = 1e-6
    g_max: float = 1e-4
    cell_bits: int = 1
    dac_bits: int = 1
    adc_bits: int = 4
    device_type: str = "RRAM"

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"crossbar dims must be positive, got {self.rows}x{self.cols}")
        if not (self.g_max > self.g_min > 0):
            raise ConfigError(f"need g_max > g_min > 0, got [{self.g_min}, {self.g_max}]")
        if self.cell_bits != 1:
            raise ConfigError("only 1-bit cells are supported")
        if self.dac_bits < 1 or self.adc_bits < 0:
            raise ConfigError(f"bad converter resolution dac={self.dac_bits} adc={self.adc_bits}")
        if self.device_type not in DEVICE_TYPES:
            raise ConfigError(f"device_type must be one of {DEVICE_TYPES}, got {self.device_type!r}")

    @property
    def g_span(self) -> float:
        return self.g_max - self.g_min

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ConductancePair:
    """Differential encoding of one signed weight; at most one side is above g_min."""

    g_pos: float
    g_neg: float


@dataclass(frozen=True)
class SubMatrixMap:
    rows: int  # logical input lines
    cols: int  # physical columns (two per logical output)
    tile_grid: tuple[int, int]
    tiles: int
    used_cells: int
    total_cells: int


@dataclass(frozen=True)
class MappedLayer:
    name: str
    kind: str
    sub_matrices: tuple[SubMatrixMap, ...]
    tiles: int
    used_cells: int
    total_cells: int

    @property
    def utilization(self) -> float:
        return self.used_cells / self.total_cells


# -- partitioning and tiling ---------------------------------------------------


def partition_layer(weight_shape: Sequence[int]) -> list[tuple[int, int]]:
    """Logical sub-matrix shapes for one layer.

    conv (O, I, K, K) -> K*K sub-matrices of (I, O); linear (F, G) -> [(F, G)].
    """
    shape = tuple(weight_shape)
    if len(shape) == 4:
        o, i, kh, kw = shape
        if kh != kw:
            raise MappingError(f"conv kernels must be square, got {shape}")
        return [(i, o)] * (kh * kw)
    if len(shape) == 2:
        return [shape]
    raise MappingError(f"unsupported layer weight shape {shape}; expected conv or linear")


def tile_submatrix(r: int, c: int, spec: CrossbarSpec) -> tuple[int, float]:
    """Tiles needed for an R x C matrix and the resulting cell utilization."""
    if r < 1 or c < 1:
        raise MappingError(f"sub-matrix dims must be positive, got {r}x{c}")
    tiles = math.ceil(r / spec.rows) * math.ceil(c / spec.cols)
    return tiles, (r * c) / (tiles * spec.rows * spec.cols)


def map_layer(name: str, kind: str, weight_shape: Sequence[int], spec: CrossbarSpec) -> MappedLayer:
    subs = []
    for r, c_logical in partition_layer(weight_shape):
        c_phys = c_logical * COLUMNS_PER_WEIGHT
        tiles, _ = tile_submatrix(r, c_phys, spec)
        grid = (math.ceil(r / spec.rows), math.ceil(c_phys / spec.cols))
        subs.append(
            SubMatrixMap(
                rows=r,
                cols=c_phys,
                tile_grid=grid,
                tiles=tiles,
                used_cells=r * c_phys,
                total_cells=tiles * spec.rows * spec.cols,
            )
        )
    return MappedLayer(
        name=name,
        kind=kind,
        sub_matrices=tuple(subs),
        tiles=sum(s.tiles for s in subs),
        used_cells=sum(s.used_cells for s in subs),
        total_cells=sum(s.total_cells for s in subs),
    )


def network_mapping(geometries, spec: CrossbarSpec) -> list[MappedLayer]:
    return [map_layer(g.name, g.kind, g.weight_shape, spec) for g in geometries]


def mapping_report(geometries, spec: CrossbarSpec) -> dict:
    """JSON-ready mapping summary: per-layer tiling plus network totals."""
    layers = network_mapping(geometries, spec)
    used = sum(l.used_cells for l in layers)
    total = sum(l.total_cells for l in layers)
    return {
        "crossbar": spec.to_dict(),
        "layers": [
            {
                "name": l.name,
                "kind": l.kind,
                "sub_matrices": [
                    {
                        "rows": s.rows,
                        "cols": s.cols,
                        "tile_grid": list(s.tile_grid),
                        "tiles": s.tiles,
                        "used_cells": s.used_cells,
                        "total_cells": s.total_cells,
                    }
                    for s in l.sub_matrices
                ],
                "tiles": l.tiles,
                "used_cells": l.used_cells,
                "total_cells": l.total_cells,
                "utilization": l.utilization,
            }
            for l in layers
        ],
        "totals": {
            "tiles": sum(l.tiles for l in layers),
            "used_cells": used,
            "total_cells": total,
            "utilization": used / total if total else 0.0,
            "unused_fraction": 1.0 - used / total if total else 0.0,
        },
    }


# -- weight-to-conductance mapping ----------------------------------------------


def layer_weight_scale(weights: np.ndarray) -> float:
    """S_w: the per-layer full-scale weight magnitude."""
    s_w = float(np.max(np.abs(weights)))
    if s_w == 0.0:
        raise MappingError("all-zero layer: weight-to-conductance mapping is undefined (S_w = 0)")
    return s_w


def map_weights(weights: np.ndarray, spec: CrossbarSpec,
                s_w: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """Map signed weights to differential conductance pairs.

    Positive w programs g_pos = g_min + (w/S_w)*(g_max - g_min) with g_neg at
    g_min; negative w mirrors; zero parks both cells at g_min.
    """
    w = np.asarray(weights, dtype=np.float64)
    s_w = layer_weight_scale(w) if s_w is None else s_w
    if s_w <= 0:
        raise MappingError("all-zero layer: weight-to-conductance mapping is undefined (S_w = 0)")
    wn = w / s_w
    g_pos = spec.g_min + np.where(wn > 0, wn, 0.0) * spec.g_span
    g_neg = spec.g_min + np.where(wn < 0, -wn, 0.0) * spec.g_span
    return g_pos, g_neg


def map_weight(value: float, spec: CrossbarSpec, s_w: float) -> ConductancePair:
    """Scalar convenience: the differential pair programmed for one weight."""
    g_pos, g_neg = map_weights(np.asarray([value]), spec, s_w=s_w)
    return ConductancePair(g_pos=float(g_pos[0]), g_neg=float(g_neg[0]))


def apply_conductance_noise(g: np.ndarray, spec: CrossbarSpec, sigma: float,
                            rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Optional Gaussian programming noise, sigma relative to the conductance span.

    sigma = 0 returns the input untouched so noiseless runs stay bitwise
    reproducible.
    """
    if sigma == 0.0:
        return g
    rng = rng if rng is not None else np.random.default_rng(0)
    noisy = g + rng.normal(0.0, sigma * spec.g_span, size=g.shape)
    return np.clip(noisy, spec.g_min, spec.g_max)


# -- converters -------------------------------------------------------------------


def dac_encode(a_quantized, state: ActQuantState, dac_bits: int) -> np.ndarray:
    """Split grid-level activations into DAC slices, most-significant first.

    Returns an array of shape (n_slices,) + a.shape holding integer slice
    codes in [0, 2^dac_bits).  Rejects inputs that are not grid levels.
    """
    a = np.asarray(a_quantized, dtype=np.float64)
    code_f = (a - state.a_min) / state.delta
    code = np.rint(code_f)
    if np.any(np.abs(code_f - code) > 1e-6) or np.any(code < 0) or np.any(code > 2**state.bits - 1):
        raise MappingError("dac_encode requires values on the quantizer grid")
    code = code.astype(np.int64)
    n_slices = math.ceil(state.bits / dac_bits)
    mask = (1 << dac_bits) - 1
    slices = [
        (code >> (dac_bits * (n_slices - 1 - s))) & mask for s in range(n_slices)
    ]
    return np.stack(slices)


def dac_decode(slices: np.ndarray, dac_bits: int) -> np.ndarray:
    """Reassemble slice codes (MSB first) into the original integer code."""
    slices = np.asarray(slices, dtype=np.int64)
    n_slices = slices.shape[0]
    code = np.zeros(slices.shape[1:], dtype=np.int64)
    for s in range(n_slices):
        code |= slices[s] << (dac_bits * (n_slices - 1 - s))
    return code


def analog_mvm(g_pos: np.ndarray, g_neg: np.ndarray, x) -> np.ndarray:
    """Ideal differential crossbar product: column_j = sum_i x_i (g_pos - g_neg)_ij."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != g_pos.shape[0]:
        raise ShapeError(
            f"input length {x.shape[-1]} != tile rows {g_pos.shape[0]}"
        )
    return x @ (np.asarray(g_pos, dtype=np.float64) - np.asarray(g_neg, dtype=np.float64))


def adc_quantize(value, adc_bits: int, full_scale: float):
    """Symmetric uniform ADC: 2^bits codes across [-full_scale, +full_scale], clamped."""
    if full_scale <= 0:
        raise ConfigError(f"ADC full scale must be positive, got {full_scale}")
    v = np.asarray(value, dtype=np.float64)
    n_codes = 2**adc_bits
    step = 2.0 * full_scale / (n_codes - 1)
    code = np.floor((np.clip(v, -full_scale, full_scale) + full_scale) / step + 0.5)
    code = np.clip(code, 0, n_codes - 1).astype(np.int64)
    return code if code.ndim else int(code)


def adc_decode(code, adc_bits: int, full_scale: float):
    step = 2.0 * full_scale / (2**adc_bits - 1)
    out = -full_scale + np.asarray(code, dtype=np.float64) * step
    return out if out.ndim else float(out)


# -- network simulation --------------------------------------------------------


def _codes_from_values(a: np.ndarray, state: ActQuantState) -> np.ndarray:
    code = np.rint((a.astype(np.float64) - state.a_min) / state.delta)
    return code.astype(np.int64)


def _mvm_through_crossbar(codes_mat: np.ndarray, w_eff: np.ndarray, state: ActQuantState,
                          spec: CrossbarSpec, adc_bits: int, s_w: float,
                          noise_sigma: float, rng) -> np.ndarray:
    """One sub-matrix MVM: codes_mat (P, R) x w_eff (R, C_logical) -> accumulated (P, C).

    Row-tiles the matrix, streams DAC slices MSB-first, converts each tile
    column through the ADC (unless bypassed), then shift-adds and accumulates
    digitally.  Output is in integer-code x conductance units.
    """
    p, r = codes_mat.shape
    n_slices = math.ceil(state.bits / spec.dac_bits)
    mask = (1 << spec.dac_bits) - 1
    max_slice_code = mask
    acc = np.zeros((p, w_eff.shape[1]), dtype=np.float64)
    for r0 in range(0, r, spec.rows):
        r1 = min(r0 + spec.rows, r)
        rows_active = r1 - r0
        g_pos, g_neg = map_weights(w_eff[r0:r1], spec, s_w=s_w)
        if noise_sigma:
            g_pos = apply_conductance_noise(g_pos, spec, noise_sigma, rng)
            g_neg = apply_conductance_noise(g_neg, spec, noise_sigma, rng)
        g_diff = g_pos - g_neg
        chunk = codes_mat[:, r0:r1]
        full_scale = rows_active * spec.g_span * max_slice_code
        for s in range(n_slices):
            shift = spec.dac_bits * (n_slices - 1 - s)
            x_slice = ((chunk >> shift) & mask).astype(np.float64)
            y = x_slice @ g_diff
            if adc_bits != ADC_BYPASS:
                y = adc_decode(adc_quantize(y, adc_bits, full_scale), adc_bits, full_scale)
            acc += y * float(1 << shift)
    return acc


def _im2col_codes(codes: np.ndarray, k: int, stride: int, pad: int):
    """im2col over integer codes; returns (windows, validity mask windows)."""
    n, c, h, w = codes.shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    cp = np.pad(codes, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    vp = np.pad(np.ones((n, c, h, w), dtype=np.int64), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    sn, sc, sh, sw = cp.strides
    shape = (n, oh, ow, c, k, k)
    strides = (sn, sh * stride, sw * stride, sc, sh, sw)
    win = np.lib.stride_tricks.as_strided(cp, shape=shape, strides=strides, writeable=False)
    vwin = np.lib.stride_tricks.as_strided(vp, shape=shape, strides=strides, writeable=False)
    return win, vwin, oh, ow


class SimulationResult:
    def __init__(self, logits: np.ndarray, labels: Optional[np.ndarray]):
        self.logits = logits
        self.labels = labels

    @property
    def accuracy(self) -> float:
        if self.labels is None:
            raise ValueError("no labels were provided to the simulation")
        return float(np.mean(np.argmax(self.logits, axis=1) == self.labels))


def simulate_network(model: Model, spec: CrossbarSpec, images: np.ndarray,
                     labels: Optional[np.ndarray] = None,
                     adc_bits: Optional[int] = None,
                     noise_sigma: float = 0.0,
                     rng: Optional[np.random.Generator] = None) -> SimulationResult:
    """Run the full mixed-signal inference pipeline over a batch of images.

    ``adc_bits`` defaults to the crossbar spec's value; 0 bypasses the
    converters, in which case the result matches the digital quantized
    forward pass up to float rounding.
    """
    if model.act_bits >= 32:
        raise ConfigError(
            "checkpoint was trained with the float sentinel bitwidth; "
            "crossbar simulation needs a quantized model"
        )
    adc_bits = spec.adc_bits if adc_bits is None else adc_bits
    ctx = PassContext(train=False)
    x = np.asarray(images, dtype=np.float64)
    state: Optional[ActQuantState] = None

    def run_stages(stages, x, state):
        for stage in stages:
            if isinstance(stage, ActQuant):
                if not stage.enabled:
                    raise ConfigError(f"quant site {stage.name} is disabled; cannot simulate")
                state = stage.state
                x = uniform_quantize(x, state)
            elif isinstance(stage, Conv2d):
                x = _simulate_conv(stage, x, state)
                state = None
            elif isinstance(stage, Linear):
                x = _simulate_linear(stage, x, state)
                state = None
            elif isinstance(stage, Residual):
                y, _ = run_stages(stage.stages, x, state)
                if stage.stride != 1 or stage.in_channels != stage.out_channels:
                    n, c, h, w = x.shape
                    short = np.zeros((n, stage.out_channels, (h + 1) // 2, (w + 1) // 2))
                    short[:, :c] = x[:, :, ::2, ::2]
                else:
                    short = x
                x = np.maximum(y + short, 0.0)
                state = None
            else:
                x = _digital_stage(stage, x)
        return x, state

    def _simulate_conv(stage: Conv2d, x, state):
        if state is None:
            raise ConfigError(f"{stage.name} has no quantized input; bitwidths do not match")
        w_eff = stage.effective_weight(ctx).data.astype(np.float64)
        o, c, k, _ = w_eff.shape
        s_w = layer_weight_scale(w_eff)
        codes = _codes_from_values(x, state)
        win, vwin, oh, ow = _im2col_codes(codes, k, stage.stride, stage.padding)
        n = x.shape[0]
        p = n * oh * ow
        out = np.zeros((p, o), dtype=np.float64)
        corr = np.zeros((p, o), dtype=np.float64)
        for kh in range(k):
            for kw in range(k):
                sub_codes = np.ascontiguousarray(win[:, :, :, :, kh, kw]).reshape(p, c)
                w_sub = w_eff[:, :, kh, kw].T  # (C, O)
                out += _mvm_through_crossbar(
                    sub_codes, w_sub, state, spec, adc_bits, s_w, noise_sigma, rng
                )
                if state.a_min != 0.0:
                    valid = np.ascontiguousarray(vwin[:, :, :, :, kh, kw]).reshape(p, c)
                    corr += valid.astype(np.float64) @ w_sub
        result = out * (s_w / spec.g_span) * state.delta + state.a_min * corr
        return result.reshape(n, oh, ow, o).transpose(0, 3, 1, 2)

    def _simulate_linear(stage: Linear, x, state):
        if state is None:
            raise ConfigError(f"{stage.name} has no quantized input; bitwidths do not match")
        w_eff = stage.effective_weight(ctx).data.astype(np.float64)
        s_w = layer_weight_scale(w_eff)
        codes = _codes_from_values(x, state)
        out = _mvm_through_crossbar(codes, w_eff, state, spec, adc_bits, s_w, noise_sigma, rng)
        result = out * (s_w / spec.g_span) * state.delta
        result += state.a_min * np.sum(w_eff, axis=0)
        return result + stage.bias.data.astype(np.float64)

    def _digital_stage(stage, x):
        from .nn import Flatten, GlobalAvgPool, MaxPool2d, ReLU, ScaleShift

        if isinstance(stage, ReLU):
            return np.maximum(x, 0.0)
        if isinstance(stage, ScaleShift):
            bshape = (1, x.shape[1]) + (1,) * (x.ndim - 2)
            return x * stage.gamma.data.reshape(bshape) + stage.beta.data.reshape(bshape)
        if isinstance(stage, MaxPool2d):
            n, c, h, w = x.shape
            k = stage.k
            return x.reshape(n, c, h // k, k, w // k, k).max(axis=(3, 5))
        if isinstance(stage, Flatten):
            return x.reshape(x.shape[0], -1)
        if isinstance(stage, GlobalAvgPool):
            return x.mean(axis=(2, 3))
        raise ConfigError(f"simulation does not know how to run stage {stage!r}")

    logits, _ = run_stages(model.stages, x, state)
    return SimulationResult(logits=logits, labels=None if labels is None else np.asarray(labels))
