"""Mapping networks onto crossbar arrays and counting what goes unused.

Convolutions are split by kernel position into K*K sub-matrices of shape
(in_channels, out_channels); each signed weight takes a differential pair of
cells.  Sub-matrices are tiled onto fixed arrays without packing, so any
dimension that misses the array size strands cells.  Bigger arrays strand
more: the utilization collapse from 32x32 to 64x64 is the reason energy does
not simply improve with array size.
"""

import json

import numpy as np

from bwma import CrossbarSpec, build_model, map_weights, mapping_report, partition_layer

print("=== one conv layer, (out=8, in=3, 3x3) ===")
subs = partition_layer((8, 3, 3, 3))
print(f"partitioned into {len(subs)} sub-matrices of {subs[0]} (rows=in, cols=out)")
print()

print("=== a weight and its differential conductance pair ===")
spec = CrossbarSpec(rows=32, cols=32, g_min=1e-6, g_max=1.01e-4)
w = np.array([1.0, 0.5, 0.0, -0.5])
g_pos, g_neg = map_weights(w, spec)
for wi, gp, gn in zip(w, g_pos, g_neg):
    print(f"  w = {wi:+.2f}: g_pos = {gp:.3e} S, g_neg = {gn:.3e} S")
print("positive weights live on the positive column, negative on the mirror,")
print("and zero parks both cells at g_min so the differential current is zero")
print()

for arch in ("vgg8-cifar", "resnet20-cifar"):
    geometry = build_model(arch).mvm_geometry()
    print(f"=== {arch} ===")
    for size in (32, 64):
        rep = mapping_report(geometry, CrossbarSpec(rows=size, cols=size))
        t = rep["totals"]
        print(f"  {size}x{size}: {t['tiles']:4d} tiles, "
              f"utilization {t['utilization']:.3f}, unused {t['unused_fraction']:.1%}")
    print()

print("per-layer detail for resnet20-cifar at 64x64 (early layers strand the most):")
rep = mapping_report(build_model("resnet20-cifar").mvm_geometry(), CrossbarSpec(rows=64, cols=64))
for layer in rep["layers"][:4] + rep["layers"][-1:]:
    print(f"  {layer['name']:<22} {layer['tiles']:3d} tiles, utilization {layer['utilization']:.3f}")
print()
print("the full report is JSON-serializable:")
print(json.dumps(rep["totals"], indent=2))
