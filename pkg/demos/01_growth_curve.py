"""The multisigmoidal logistic curve: shape, saturation level, inflection points.

The growth exponent is a polynomial Q(t) = b1 t + b2 t^2 + b3 t^3.  With a
positive leading coefficient the curve saturates; the lower-order coefficients
control how many growth waves happen on the way.
"""

import math

import numpy as np

from mslogistic import ModelParams, PolyCoeffs, carrying_capacity, curve, inflection_points

params = ModelParams(eta=math.exp(-1), poly=PolyCoeffs((0.1, -0.009, 0.0002)))
l0, t0 = 5.0, 0.0

print("Two-wave growth curve, starting at l0 = 5:")
for t in (0, 10, 20, 30, 40, 50):
    print(f"  l({t:>2}) = {float(curve(params, l0, t0, t)):8.4f}")

cc = carrying_capacity(params, l0, t0)
print(f"\nCarrying capacity l0 (eta + e^-Q(t0)) / eta = {cc:.4f}")
print(f"  (the curve reaches {float(curve(params, l0, t0, 50.0)) / cc:.2%} of it by t = 50)")

res = inflection_points(params, t0, 50.0, l0=l0)
print(f"\nInflection points on (0, 50): {len(res.times)}")
for t, v in zip(res.times, res.values):
    print(f"  t = {t:7.3f}, level = {v:8.4f}")
print("\nThe middle one separates the two growth waves; a plain logistic curve")
print("(degree-1 exponent) would have exactly one.")

single = ModelParams(eta=1.0, poly=PolyCoeffs((0.5,)))
one = inflection_points(single, -10.0, 10.0, l0=1.0)
print(f"Degree-1 check: {len(one.times)} inflection at t = {one.times[0]:.6f} "
      "(where Q(t) + log eta = 0)")
