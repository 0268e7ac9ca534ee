"""End to end: quantization-aware training, then inference through the arrays.

Trains the tiny CNN with binary weights and 4-bit activations on a small
digit set (a synthetic stand-in is generated if no IDX files are present),
then runs the checkpoint through the mixed-signal crossbar pipeline at
several ADC resolutions.  Kept deliberately small so it finishes in about a
minute; raise the epoch count and dataset size for the real numbers.
"""

import os
import tempfile

import numpy as np

from bwma import ADC_BYPASS, RunConfig, simulate_network, train
from bwma.checkpoint import load_checkpoint
from bwma.cli import evaluate_logits
from bwma.data import ensure_synthetic_mnist, resolve_mnist
from bwma.train import evaluate

workdir = tempfile.mkdtemp(prefix="bwma_demo_")
data_dir = os.path.join(workdir, "data")
ensure_synthetic_mnist(data_dir, n_train=3000, n_test=800)

config = RunConfig(arch="mnist-tiny", act_bits=4, epochs=2, seed=1, data_dir=data_dir)
print(f"training {config.arch}: 1-bit weights, {config.act_bits}-bit activations, "
      f"{config.epochs} epochs")
result = train(config, os.path.join(workdir, "run"))
for row in result.metrics:
    print(f"  epoch {row['epoch']}: train loss {row['train_loss']:.4f}, "
          f"test accuracy {row['test_acc']:.4f}")
print(f"checkpoint: {result.checkpoint_path}")
print()

model, _, _ = load_checkpoint(result.checkpoint_path)
_, test_set, _ = resolve_mnist(data_dir)

print("=== eval at other activation bitwidths (same frozen ranges) ===")
for bits in (2, 3, 4, 6):
    print(f"  {bits}-bit activations: {evaluate(model, test_set, act_bits=bits):.4f}")
print()

print("=== through the crossbar arrays (100 test samples) ===")
spec = config.crossbar_spec()
images, labels = test_set.images[:100], test_set.labels[:100]
digital = evaluate_logits(model, images)
ideal = simulate_network(model, spec, images, labels=labels, adc_bits=ADC_BYPASS)
print(f"  ADC bypass: accuracy {ideal.accuracy:.2f}, "
      f"max logit error vs digital {np.max(np.abs(ideal.logits - digital)):.2e}")
for adc_bits in (8, 6, 4):
    sim = simulate_network(model, spec, images, labels=labels, adc_bits=adc_bits)
    rms = float(np.sqrt(np.mean((sim.logits - digital) ** 2)))
    print(f"  {adc_bits}-bit ADC: accuracy {sim.accuracy:.2f}, logit RMS error {rms:.2f}")
print()
print("the bypass run reproduces the digital forward pass; real converters add")
print("quantization noise that shrinks as their resolution grows")
