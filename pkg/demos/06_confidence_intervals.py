"""Asymptotic confidence intervals from the Fisher information.

The expected information has closed form given the observation design; Wald
intervals follow from the equilibrated inverse.  Functions of the parameters
(here: the carrying capacity relative to the start) get delta-method
intervals from their gradient.
"""

import math

import numpy as np

from mslogistic import Degenerate, ModelParams, PolyCoeffs, SimSpec, simulate_panel, transform
from mslogistic.asymptotics import confidence_intervals, fisher_info, initial_param_laws
from mslogistic.fit_nr import fit

truth = ModelParams(eta=math.exp(-1), poly=PolyCoeffs((0.1, -0.009, 0.0002)), sigma2=1e-4)
panel = simulate_panel(SimSpec(params=truth, init=Degenerate(5.0),
                               grid=np.linspace(0.0, 50.0, 501), d=200, seed=31))
res = fit(panel, 3)
vdata = transform(panel)
fi = fisher_info(vdata, res.xi_hat)

# carrying capacity over l0 is (eta + 1)/eta at t0 = 0: gradient in eta only
eta_hat = res.xi_hat.eta
g_val = (eta_hat + 1.0) / eta_hat
grad = np.zeros(5)
grad[0] = -1.0 / eta_hat**2

report = confidence_intervals(fi, res.xi_hat,
                              functions={"saturation_ratio": (g_val, grad)})

print(f"{'parameter':>16} {'estimate':>12} {'std err':>11} {'95% interval':>28}")
for entry in report.parameters:
    lo, hi = entry.intervals[0.95]
    print(f"{entry.name:>16} {entry.estimate:12.6g} {entry.std_error:11.3g} "
          f"({lo:.6g}, {hi:.6g})")

truth_map = {"eta": math.exp(-1), "beta1": 0.1, "beta2": -0.009, "beta3": 0.0002,
             "sigma2": 1e-4, "saturation_ratio": (math.exp(-1) + 1) / math.exp(-1)}
print("\nTruth inside the 95% interval?")
for entry in report.parameters:
    lo, hi = entry.intervals[0.95]
    t = truth_map[entry.name]
    print(f"  {entry.name:>16}: {lo < t < hi}")

laws = initial_param_laws(d=200, sigma1sq=0.04)
print(f"\nExact initial-law descriptors at d=200, sigma1sq=0.04: "
      f"var(mu1_hat) = {laws.mu1_variance:.2e}, "
      f"d*sigma1sq_hat/sigma1sq ~ chi-square({laws.chi2_dof})")
