"""Quantization-aware training loop and digital evaluation."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .checkpoint import save_checkpoint
from .config import RunConfig
from .data import Dataset, augment_cifar, epoch_permutation, load_cifar10_bin, resolve_mnist
from .errors import ConfigError, DataFormatError, NumericError
from .models import INPUT_SHAPES, build_model
from .nn import Model, PassContext, SteSchedule
from .optim import Adam
from .tensor import Tensor, softmax_cross_entropy


@dataclass
class TrainResult:
    checkpoint_path: str
    metrics_path: str
    metrics: list[dict]
    final_test_accuracy: float
    data_source: str


def load_datasets(config: RunConfig) -> tuple[Dataset, Dataset, str]:
    data_dir = config.resolved_data_dir()
    if config.dataset == "mnist":
        return resolve_mnist(data_dir)
    train_paths = [os.path.join(data_dir, f"data_batch_{i}.bin") for i in range(1, 6)]
    test_paths = [os.path.join(data_dir, "test_batch.bin")]
    for p in train_paths + test_paths:
        if not os.path.exists(p):
            raise DataFormatError(f"missing CIFAR-10 batch file: {p}")
    norm = (config.cifar_mean, config.cifar_std)
    train = load_cifar10_bin(train_paths, normalize=norm, split="train")
    test = load_cifar10_bin(test_paths, normalize=norm, split="test")
    return train, test, "cifar10"


def evaluate(model: Model, dataset: Dataset, batch_size: int = 250,
             act_bits: Optional[int] = None) -> float:
    """Digital quantized forward pass over a split; optionally re-grids the
    frozen activation ranges at a different bitwidth first."""
    sites = model.quant_sites()
    saved = [(s, s.state) for s in sites]
    if act_bits is not None and act_bits < 32:
        for s in sites:
            s.state = s.state.with_bits(act_bits)
    try:
        from .tensor import no_grad

        ctx = PassContext(train=False)
        correct = 0
        with no_grad():
            for i in range(0, len(dataset), batch_size):
                xb = Tensor(dataset.images[i : i + batch_size])
                logits = model.forward(xb, ctx)
                correct += int(
                    np.sum(np.argmax(logits.data, axis=1) == dataset.labels[i : i + batch_size])
                )
        return correct / len(dataset)
    finally:
        for s, st in saved:
            s.state = st


def train(config: RunConfig, out_dir: str,
          datasets: Optional[tuple[Dataset, Dataset, str]] = None) -> TrainResult:
    """Run QAT per the config; writes metrics.csv and a final checkpoint."""
    os.makedirs(out_dir, exist_ok=True)
    train_set, test_set, source = datasets or load_datasets(config)
    if train_set.images.shape[1:] != INPUT_SHAPES[config.arch]:
        raise ConfigError(
            f"dataset images {train_set.images.shape[1:]} do not fit arch {config.arch}"
        )

    rng = np.random.default_rng(config.seed)
    ste = SteSchedule(alpha=config.ste_alpha, t_start=config.ste_t_start, t_end=config.ste_t_end)
    model = build_model(
        config.arch,
        act_bits=config.act_bits,
        rng=rng,
        quantize_first_last=config.quantize_first_last,
        ema_momentum=config.ema_momentum,
        ste=ste,
    )
    params = [t for _, t in model.parameters()]
    opt = Adam(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps)
    shadow_params = model.binarized_parameters()
    augment = config.dataset == "cifar10"
    aug_rng = np.random.default_rng([config.seed, 0xA06])

    n = len(train_set)
    steps_per_epoch = max(1, (n + config.batch_size - 1) // config.batch_size)
    total_steps = max(1, config.epochs * steps_per_epoch)
    metrics: list[dict] = []
    metrics_path = os.path.join(out_dir, "metrics.csv")
    step = 0
    ctx = PassContext(train=True)
    for epoch in range(config.epochs):
        perm = epoch_permutation(n, config.seed, epoch)
        epoch_loss = 0.0
        epoch_correct = 0
        for i in range(0, n, config.batch_size):
            idx = perm[i : i + config.batch_size]
            xb = train_set.images[idx]
            if augment:
                xb = augment_cifar(xb, aug_rng)
            yb = train_set.labels[idx]
            ste.advance(step / total_steps)
            x = Tensor(xb)
            logits = model.forward(x, ctx)
            loss = softmax_cross_entropy(logits, yb)
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise NumericError(
                    f"training aborted: non-finite loss {loss_val} at epoch {epoch} step {step}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            # keep shadow weights inside the support of the surrogate gradient
            for p in shadow_params:
                np.clip(p.data, -1.0, 1.0, out=p.data)
            epoch_loss += loss_val * len(idx)
            epoch_correct += int(np.sum(np.argmax(logits.data, axis=1) == yb))
            step += 1
        test_acc = evaluate(model, test_set)
        row = {
            "epoch": epoch + 1,
            "train_loss": epoch_loss / n,
            "train_acc": epoch_correct / n,
            "test_acc": test_acc,
        }
        metrics.append(row)
    _write_metrics(metrics_path, metrics, config)
    checkpoint_path = os.path.join(out_dir, "checkpoint.bwma")
    save_checkpoint(model, checkpoint_path, config=config.to_dict(), ste=ste)
    final_acc = metrics[-1]["test_acc"] if metrics else evaluate(model, test_set)
    return TrainResult(
        checkpoint_path=checkpoint_path,
        metrics_path=metrics_path,
        metrics=metrics,
        final_test_accuracy=final_acc,
        data_source=source,
    )


def _write_metrics(path: str, rows: list[dict], config: RunConfig):
    with open(path, "w", newline="") as f:
        f.write("# config: " + json.dumps(config.to_dict(), sort_keys=True) + "\n")
        writer = csv.DictWriter(f, fieldnames=["epoch", "train_loss", "train_acc", "test_acc"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
