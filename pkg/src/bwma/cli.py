"""Command-line entry point: train / eval / map / simulate / cost / sweep.

Every command is reproducible from its config file and seed alone; each
emitted report embeds the fully resolved configuration.  Exit codes: 0 on
success, 2 for configuration problems, 3 for data problems, 4 for numeric
failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

import numpy as np

from .checkpoint import load_checkpoint
from .cim import ADC_BYPASS, mapping_report, simulate_network
from .config import RunConfig
from .errors import (
    BwmaError,
    ConfigError,
    DataFormatError,
    MappingError,
    NumericError,
    ShapeError,
)
from .hwcost import CostTables, device_compare, estimate, sweep_adc_bits
from .models import build_model
from .report import breakdown_bars, scatter
from .train import evaluate, load_datasets, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _parse_crossbar(text: str) -> tuple[int, int]:
    try:
        r, c = text.lower().split("x")
        return int(r), int(c)
    except ValueError as e:
        raise ConfigError(f"--crossbar expects RxC (e.g. 32x32), got {text!r}") from e


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    for flag, key in (
        ("arch", "arch"),
        ("act_bits", "act_bits"),
        ("epochs", "epochs"),
        ("seed", "seed"),
        ("adc_bits", "adc_bits"),
        ("data_dir", "data_dir"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "device", None) is not None:
        overrides["device"] = args.device.upper()
    if getattr(args, "crossbar", None) is not None:
        rows, cols = _parse_crossbar(args.crossbar)
        overrides["crossbar_rows"] = rows
        overrides["crossbar_cols"] = cols
    return cfg.override(**overrides)


def _write_json(out_dir: str, name: str, payload: dict) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    return path


def _load_model(args, config: RunConfig):
    if getattr(args, "checkpoint", None):
        model, ste, header = load_checkpoint(args.checkpoint)
        if header.get("config"):
            config = RunConfig.from_dict(header["config"]).override(data_dir=config.data_dir)
        return model, config
    model = build_model(
        config.arch,
        act_bits=config.act_bits,
        rng=np.random.default_rng(config.seed),
        quantize_first_last=config.quantize_first_last,
    )
    return model, config


def _tables(args, config: RunConfig) -> CostTables:
    path = getattr(args, "tables", None) or config.cost_tables
    return CostTables.from_file(path) if path else CostTables.defaults()


# -- commands -------------------------------------------------------------------


def cmd_train(args) -> int:
    config = _resolve_config(args)
    result = train(config, args.out)
    _write_json(
        args.out,
        "train.json",
        {
            "config": config.to_dict(),
            "data_source": result.data_source,
            "checkpoint": result.checkpoint_path,
            "metrics_csv": result.metrics_path,
            "final_test_accuracy": result.final_test_accuracy,
        },
    )
    print(
        f"trained {config.arch} for {config.epochs} epochs"
        f" (data: {result.data_source}); final test accuracy"
        f" {result.final_test_accuracy:.4f}; checkpoint at {result.checkpoint_path}"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _resolve_config(args)
    model, config = _load_model(args, config)
    _, test_set, source = load_datasets(config)
    acc = evaluate(model, test_set, act_bits=args.act_bits)
    bits = args.act_bits if args.act_bits is not None else model.act_bits
    _write_json(
        args.out,
        "eval.json",
        {"config": config.to_dict(), "data_source": source, "act_bits": bits, "test_accuracy": acc},
    )
    print(f"eval accuracy at {bits}-bit activations: {acc:.4f}")
    return EXIT_OK


def cmd_map(args) -> int:
    config = _resolve_config(args)
    model, config = _load_model(args, config)
    spec = config.crossbar_spec()
    report = mapping_report(model.mvm_geometry(), spec)
    report["config"] = config.to_dict()
    path = _write_json(args.out, "mapping.json", report)
    totals = report["totals"]
    print(
        f"mapped {config.arch} onto {spec.rows}x{spec.cols} {spec.device_type} arrays: "
        f"{totals['tiles']} tiles, utilization {totals['utilization']:.4f} "
        f"(unused {totals['unused_fraction']:.2%}); report at {path}"
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    if not args.checkpoint:
        raise ConfigError("simulate needs --checkpoint")
    config = _resolve_config(args)
    model, config = _load_model(args, config)
    spec = config.crossbar_spec()
    _, test_set, source = load_datasets(config)
    n = min(args.samples, len(test_set))
    images, labels = test_set.images[:n], test_set.labels[:n]
    adc_bits = config.adc_bits if args.adc_bits is None else args.adc_bits
    result = simulate_network(model, spec, images, labels=labels, adc_bits=adc_bits)
    digital = evaluate_logits(model, images)
    max_err = float(np.max(np.abs(result.logits - digital)))
    _write_json(
        args.out,
        "simulate.json",
        {
            "config": config.to_dict(),
            "data_source": source,
            "samples": n,
            "adc_bits": adc_bits,
            "accuracy": result.accuracy,
            "max_logit_error_vs_digital": max_err,
        },
    )
    mode = "bypass" if adc_bits == ADC_BYPASS else f"{adc_bits}-bit"
    print(
        f"simulated {n} samples through {spec.rows}x{spec.cols} {spec.device_type} arrays "
        f"(ADC {mode}): accuracy {result.accuracy:.4f}, max logit error {max_err:.3e}"
    )
    return EXIT_OK


def evaluate_logits(model, images: np.ndarray) -> np.ndarray:
    from .nn import PassContext
    from .tensor import Tensor, no_grad

    with no_grad():
        return model.forward(Tensor(images), PassContext(train=False)).data.astype(np.float64)


def cmd_cost(args) -> int:
    config = _resolve_config(args)
    model, config = _load_model(args, config)
    spec = config.crossbar_spec()
    tables = _tables(args, config)
    geometry = model.mvm_geometry()
    act_bits = min(config.act_bits, 8)
    payload: dict = {"config": config.to_dict()}
    report = estimate(geometry, spec, tables, act_bits=act_bits, inferences=args.inferences)
    payload["report"] = report.to_dict()
    if args.sweep_bits:
        bits = [int(b) for b in args.sweep_bits.split(",")]
        payload["adc_sweep"] = sweep_adc_bits(geometry, spec, tables, bits, act_bits=act_bits)
    if args.devices:
        payload["device_energy"] = device_compare(geometry, spec, tables, act_bits=act_bits)
    path = _write_json(args.out, "cost.json", payload)
    csv_path = os.path.join(args.out, "cost.csv")
    with open(csv_path, "w") as f:
        f.write("# config: " + json.dumps(config.to_dict(), sort_keys=True) + "\n")
        f.write("\n".join(report.to_csv_rows()) + "\n")
    if args.svg:
        svg_path = os.path.join(args.out, "cost_breakdown.svg")
        with open(svg_path, "w") as f:
            f.write(
                breakdown_bars(
                    report.shares,
                    f"{config.arch} on {spec.rows}x{spec.cols} {spec.device_type}",
                )
            )
    t = report.totals
    print(
        f"cost of {config.arch} on {spec.rows}x{spec.cols} {spec.device_type}: "
        f"latency {t['latency']:.3e} s, energy {t['energy']:.3e} J, area {t['area']:.3e} m^2; "
        f"report at {path}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _resolve_config(args)
    bits = [int(b) for b in args.bits.split(",")] if args.bits else [2, 3, 4, 5, 6]
    if not bits:
        raise ConfigError("sweep needs a non-empty activation bit list")
    spec = config.crossbar_spec()
    tables = _tables(args, config)
    os.makedirs(args.out, exist_ok=True)

    rows = []
    if args.reuse:
        model, _, header = load_checkpoint(args.reuse)
        if header.get("config"):
            config = RunConfig.from_dict(header["config"]).override(data_dir=config.data_dir)
        _, test_set, _ = load_datasets(config)
        geometry = model.mvm_geometry()
        for b in bits:
            acc = evaluate(model, test_set, act_bits=b)
            rep = estimate(geometry, spec, tables, act_bits=b)
            rows.append({"b": b, "accuracy": acc, **rep.totals})
    else:
        for b in bits:
            sub = config.override(act_bits=b)
            result = train(sub, os.path.join(args.out, f"bits{b}"))
            model, _, _ = load_checkpoint(result.checkpoint_path)
            rep = estimate(model.mvm_geometry(), spec, tables, act_bits=b)
            rows.append({"b": b, "accuracy": result.final_test_accuracy, **rep.totals})

    base = rows[0]
    for row in rows:
        for metric in ("latency", "area", "energy"):
            row[f"norm_{metric}"] = row[metric] / base[metric] if base[metric] else 0.0

    csv_path = os.path.join(args.out, "sweep.csv")
    with open(csv_path, "w") as f:
        f.write("# config: " + json.dumps(config.to_dict(), sort_keys=True) + "\n")
        f.write("b,accuracy,norm_latency,norm_area,norm_energy\n")
        for row in rows:
            f.write(
                f"{row['b']},{row['accuracy']:.6f},{row['norm_latency']:.6f},"
                f"{row['norm_area']:.6f},{row['norm_energy']:.6f}\n"
            )
    svg_path = os.path.join(args.out, "accuracy_vs_energy.svg")
    with open(svg_path, "w") as f:
        f.write(
            scatter(
                [row["norm_energy"] for row in rows],
                [row["accuracy"] for row in rows],
                [f"b={row['b']}" for row in rows],
                "normalized energy",
                "test accuracy",
                "accuracy vs energy across activation bitwidths",
            )
        )
    _write_json(args.out, "sweep.json", {"config": config.to_dict(), "rows": rows})
    print(f"swept activation bits {bits}; table at {csv_path}, scatter at {svg_path}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bwma",
        description="Binary-weight multi-bit-activation QAT, crossbar mapping and cost estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default="out", help="output directory (created if absent)")
        p.add_argument("--seed", type=int)
        p.add_argument("--act-bits", dest="act_bits", type=int)
        p.add_argument("--adc-bits", dest="adc_bits", type=int)
        p.add_argument("--crossbar", help="array geometry RxC, e.g. 32x32")
        p.add_argument("--device", choices=["sram", "rram", "fefet"])
        p.add_argument("--arch", choices=["mnist-tiny", "vgg8-cifar", "resnet20-cifar"])
        p.add_argument("--epochs", type=int)
        p.add_argument("--data-dir", dest="data_dir", help="dataset root (default $BWMA_DATA_DIR)")
        if checkpoint:
            p.add_argument("--checkpoint", help="checkpoint file to load")

    p = sub.add_parser("train", help="quantization-aware training run")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="digital quantized forward pass on the test split")
    common(p, checkpoint=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("map", help="crossbar tiling and utilization report")
    common(p, checkpoint=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("simulate", help="mixed-signal inference through the crossbar model")
    common(p, checkpoint=True)
    p.add_argument("--samples", type=int, default=100)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cost", help="latency/energy/area estimate")
    common(p, checkpoint=True)
    p.add_argument("--tables", help="cost table JSON (default: shipped tables)")
    p.add_argument("--inferences", type=int, default=1)
    p.add_argument("--sweep-bits", dest="sweep_bits", help="ADC bit list, e.g. 3,4,5,6")
    p.add_argument("--devices", action="store_true", help="compare SRAM/RRAM/FeFET energy")
    p.add_argument("--svg", action="store_true", help="emit a breakdown bar chart")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("sweep", help="accuracy + cost across activation bitwidths")
    common(p)
    p.add_argument("--bits", help="comma-separated activation bit list (default 2,3,4,5,6)")
    p.add_argument("--tables", help="cost table JSON (default: shipped tables)")
    p.add_argument("--reuse", help="evaluate this checkpoint at each bitwidth instead of retraining")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MappingError, ShapeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataFormatError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except BwmaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
