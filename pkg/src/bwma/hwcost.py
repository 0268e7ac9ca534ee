"""Parameterized latency / energy / area model for crossbar accelerators.

The accounting is per tile pass (one tile processing one output position for
one DAC slice).  Latency serializes passes; energy charges every pass for
array precharge (all cells, used or not), ADC conversions, shift-add
accumulation, and a lumped buffer/routing/control peripheral term; area sums
instantiated components per tile.  ADC unit costs grow as scale * 2^bits
(+ offset), flash-converter style, so converter resolution sweeps are
strictly monotone.

Unit costs live in a JSON table (ns / pJ / um^2); reports are emitted in SI
units.  The shipped defaults are synthetic values calibrated so the headline
breakdown shares and device-type energy ratios land in their target ranges;
they are not measurements of any real process.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

from .cim import COLUMNS_PER_WEIGHT, CrossbarSpec, network_mapping
from .errors import ConfigError

METRICS = ("latency", "energy", "area")
COMPONENTS = ("array", "adc", "accumulation", "peripheral")
_SI = {"latency": 1e-9, "energy": 1e-12, "area": 1e-12}  # ns, pJ, um^2 -> s, J, m^2

DEFAULT_TABLES_RESOURCE = "default_cost_tables.json"


def _positive(x, what: str) -> float:
    x = float(x)
    if x <= 0:
        raise ConfigError(f"cost table entry {what} must be > 0, got {x}")
    return x


@dataclass(frozen=True)
class AdcCost:
    latency_scale: float
    latency_offset: float
    energy_scale: float
    energy_offset: float
    area_scale: float
    columns_per_adc: int

    def latency(self, bits: int) -> float:
        return self.latency_scale * 2**bits + self.latency_offset

    def energy(self, bits: int) -> float:
        return self.energy_scale * 2**bits + self.energy_offset

    def area(self, bits: int) -> float:
        return self.area_scale * 2**bits


@dataclass(frozen=True)
class DeviceCost:
    cell_area: float
    cell_read_energy: float
    working_voltage: float


class CostTables:
    """Validated unit-cost bundle loaded from JSON."""

    def __init__(self, raw: dict):
        self.raw = raw
        adc = raw["adc"]
        self.adc = AdcCost(
            latency_scale=_positive(adc["latency_per_conversion"]["scale"], "adc.latency.scale"),
            latency_offset=_positive(adc["latency_per_conversion"]["offset"], "adc.latency.offset"),
            energy_scale=_positive(adc["energy_per_conversion"]["scale"], "adc.energy.scale"),
            energy_offset=_positive(adc["energy_per_conversion"]["offset"], "adc.energy.offset"),
            area_scale=_positive(adc["area_per_unit"]["scale"], "adc.area.scale"),
            columns_per_adc=int(adc["columns_per_adc"]),
        )
        if self.adc.columns_per_adc < 1:
            raise ConfigError("adc.columns_per_adc must be >= 1")
        self.devices = {
            name: DeviceCost(
                cell_area=_positive(entry["area"], f"cell.{name}.area"),
                cell_read_energy=_positive(entry["read_energy"], f"cell.{name}.read_energy"),
                working_voltage=_positive(entry["working_voltage"], f"cell.{name}.working_voltage"),
            )
            for name, entry in raw["cell"].items()
        }
        self.array_latency_per_pass = _positive(raw["array"]["latency_per_pass"], "array.latency")
        acc = raw["accumulation"]
        self.acc_latency_per_column = _positive(acc["latency_per_column"], "accumulation.latency")
        self.acc_energy_per_add = _positive(acc["energy_per_add"], "accumulation.energy")
        self.acc_area_per_tile = _positive(acc["area_per_tile"], "accumulation.area")
        per = raw["peripheral"]
        self.per_latency_per_pass = _positive(per["latency_per_pass"], "peripheral.latency")
        self.per_energy_per_pass = _positive(per["energy_per_pass"], "peripheral.energy")
        self.per_area_per_tile = _positive(per["area_per_tile"], "peripheral.area")

    @classmethod
    def from_file(cls, path: str) -> "CostTables":
        with open(path) as f:
            return cls(json.load(f))

    @classmethod
    def defaults(cls) -> "CostTables":
        text = resources.files("bwma").joinpath(f"tables/{DEFAULT_TABLES_RESOURCE}").read_text()
        return cls(json.loads(text))

    def device(self, name: str) -> DeviceCost:
        if name not in self.devices:
            raise ConfigError(f"cost tables have no preset for device {name!r}")
        return self.devices[name]


@dataclass(frozen=True)
class CostReport:
    """Totals plus per-component absolute values and fractional shares."""

    totals: dict
    components: dict  # component -> metric -> absolute value
    shares: dict  # metric -> component -> fraction

    def __post_init__(self):
        for metric in METRICS:
            if self.totals[metric] > 0:
                s = sum(self.shares[metric].values())
                if abs(s - 1.0) > 1e-9:
                    raise ConfigError(f"{metric} shares sum to {s}, expected 1")

    def to_dict(self) -> dict:
        return {"totals": self.totals, "components": self.components, "shares": self.shares}

    @staticmethod
    def csv_header() -> str:
        return "component," + ",".join(f"{m}_abs,{m}_share" for m in METRICS)

    def to_csv_rows(self) -> list[str]:
        rows = [self.csv_header()]
        for comp in COMPONENTS:
            cells = [comp]
            for m in METRICS:
                cells.append(f"{self.components[comp][m]:.6e}")
                cells.append(f"{self.shares[m].get(comp, 0.0):.6f}")
            rows.append(",".join(cells))
        rows.append(
            "total," + ",".join(f"{self.totals[m]:.6e},1.0" for m in METRICS)
        )
        return rows


def estimate(geometries: Sequence, spec: CrossbarSpec, tables: CostTables,
             act_bits: int = 4, inferences: int = 1,
             adc_bits: Optional[int] = None) -> CostReport:
    """Cost of running ``inferences`` forward passes of the mapped network.

    Operation counts come from the tiling report and the bit-serial slice
    count; latency and energy scale with the inference count, area does not.
    """
    adc_bits = spec.adc_bits if adc_bits is None else adc_bits
    if adc_bits < 1:
        raise ConfigError("cost estimation needs a real ADC resolution (adc_bits >= 1)")
    dev = tables.device(spec.device_type)
    v2 = dev.working_voltage**2
    logical_cols = spec.cols / COLUMNS_PER_WEIGHT
    n_adc_per_tile = math.ceil(logical_cols / tables.adc.columns_per_adc)
    slices = math.ceil(act_bits / spec.dac_bits)
    cells_per_tile = spec.rows * spec.cols

    lat = dict.fromkeys(COMPONENTS, 0.0)
    eng = dict.fromkeys(COMPONENTS, 0.0)
    area = dict.fromkeys(COMPONENTS, 0.0)

    mapped = network_mapping(geometries, spec)
    for geom, layer in zip(geometries, mapped):
        passes = layer.tiles * geom.positions * slices * inferences
        # latency: serialized tile passes x per-slice component costs
        lat["array"] += passes * tables.array_latency_per_pass
        lat["adc"] += passes * tables.adc.columns_per_adc * tables.adc.latency(adc_bits)
        lat["accumulation"] += passes * logical_cols * tables.acc_latency_per_column
        lat["peripheral"] += passes * tables.per_latency_per_pass
        # energy: every pass precharges the whole tile, used cells or not
        eng["array"] += passes * cells_per_tile * dev.cell_read_energy * v2
        eng["adc"] += passes * logical_cols * tables.adc.energy(adc_bits)
        eng["accumulation"] += passes * logical_cols * tables.acc_energy_per_add * v2
        eng["peripheral"] += passes * tables.per_energy_per_pass * v2
        # area: instantiated components per tile
        area["array"] += layer.tiles * cells_per_tile * dev.cell_area
        area["adc"] += layer.tiles * n_adc_per_tile * tables.adc.area(adc_bits)
        area["accumulation"] += layer.tiles * tables.acc_area_per_tile
        area["peripheral"] += layer.tiles * tables.per_area_per_tile

    per_metric = {"latency": lat, "energy": eng, "area": area}
    totals, shares = {}, {}
    for metric, comp in per_metric.items():
        total = sum(comp.values())
        totals[metric] = total * _SI[metric]
        shares[metric] = {
            name: (value / total if total > 0 else 0.0) for name, value in comp.items()
        }
    components = {
        name: {metric: per_metric[metric][name] * _SI[metric] for metric in METRICS}
        for name in COMPONENTS
    }
    return CostReport(totals=totals, components=components, shares=shares)


def sweep_adc_bits(geometries: Sequence, spec: CrossbarSpec, tables: CostTables,
                   bits: Sequence[int], act_bits: int = 4, inferences: int = 1) -> dict:
    """Latency/area/energy for each converter resolution, normalized to 3-bit."""
    bits = list(bits)
    if not bits:
        raise ConfigError("sweep_adc_bits needs a non-empty bit list")
    if 3 not in bits:
        raise ConfigError("sweep_adc_bits normalizes against 3-bit converters; 3 must be in the list")
    reports = {
        b: estimate(geometries, spec, tables, act_bits=act_bits, inferences=inferences, adc_bits=b)
        for b in bits
    }
    base = reports[3].totals
    rows = []
    for b in bits:
        t = reports[b].totals
        rows.append(
            {
                "adc_bits": b,
                "latency": t["latency"] / base["latency"] if base["latency"] else 0.0,
                "area": t["area"] / base["area"] if base["area"] else 0.0,
                "energy": t["energy"] / base["energy"] if base["energy"] else 0.0,
            }
        )
    return {"normalized_to": 3, "rows": rows}


def device_compare(geometries: Sequence, spec: CrossbarSpec, tables: CostTables,
                   act_bits: int = 4, inferences: int = 1) -> dict:
    """Total energy per device preset under identical geometry."""
    missing = [d for d in ("SRAM", "RRAM", "FeFET") if d not in tables.devices]
    if missing:
        raise ConfigError(f"cost tables are missing device presets: {missing}")
    out = {}
    for device in ("SRAM", "RRAM", "FeFET"):
        dspec = CrossbarSpec(
            rows=spec.rows, cols=spec.cols, g_min=spec.g_min, g_max=spec.g_max,
            cell_bits=spec.cell_bits, dac_bits=spec.dac_bits, adc_bits=spec.adc_bits,
            device_type=device,
        )
        out[device] = estimate(
            geometries, dspec, tables, act_bits=act_bits, inferences=inferences
        ).totals["energy"]
    return out
