"""The differentiable stand-in for the multi-bit uniform quantizer.

The hard quantizer is a staircase with zero gradient almost everywhere.  Its
smooth surrogate stacks one scaled, shifted copy of a cubic sign
approximation per staircase step; with the transition half-width set to half
the step size the copies abut exactly at the grid levels, so the surrogate
agrees with the staircase on the grid and its derivative is a closed-form sum
of quadratic bumps.
"""

import numpy as np

from bwma import (
    ActQuantState,
    dirac_approx,
    sign_approx,
    soft_quantize,
    soft_quantize_grad,
    uniform_quantize,
)

state = ActQuantState(a_min=0.0, a_max=3.0, bits=2)
print(f"range [0, 3], {state.bits} bits -> step {state.delta}, levels {state.levels()}")
print()

print(" a      hard     soft     d(soft)/da")
for a in np.linspace(-0.5, 3.5, 17):
    print(f"{a:+.2f}   {uniform_quantize(a, state):.4f}   "
          f"{soft_quantize(a, state):.4f}   {soft_quantize_grad(a, state):+.4f}")
print()

print("grid levels map to themselves exactly:")
for lv in state.levels():
    assert soft_quantize(lv, state) == uniform_quantize(lv, state) == lv
print("  verified for", state.levels())
print()

print("the sign approximation overshoots slightly before it clips:")
peak = np.sqrt(5.0 / 6.0)
print(f"  G({peak:.7f}) = {sign_approx(peak):.7f}  (clips to 1 at a = 1)")
print(f"  its slope g(a) integrates to {np.trapezoid(dirac_approx(np.linspace(-1, 1, 100001)), dx=2e-5):.6f}"
      " across the transition, matching the jump of the sign function")
print()

print("an 8x8 activation tile through the 4-bit quantizer:")
rng = np.random.default_rng(1)
acts = rng.uniform(0, 3, (8, 8)).astype(np.float32)
s4 = ActQuantState(0.0, 3.0, 4)
q = uniform_quantize(acts, s4)
print(f"  max |a - q(a)| = {np.max(np.abs(acts - q)):.4f} <= delta/2 = {s4.delta / 2:.4f}")
