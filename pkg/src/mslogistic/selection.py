"""Goodness-of-fit measures and selection of the polynomial degree.

Four measures are computed per candidate degree:

* RAE: mean absolute relative error between the sample mean curve and the
  fitted process mean;
* AIC and BIC with ``p + 2`` free parameters and the transition count as
  sample size;
* the resistor-average distance (harmonic mean of the two directional
  Kullback-Leibler divergences) between the cross-sectional lognormal law
  estimated from the panel and the fitted law, evaluated along the grid and
  summarized by its median and mean.

Degree choice is BIC-first with a parsimony tie-break: the smallest degree
within two BIC units of the minimum wins.  RAE typically keeps improving with
degree and is reported but never decisive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fit_nr import FitError, fit
from .likelihood import fit_initial, loglik, transform
from .model import ModelParams, integrated_drift
from .simulate import PathPanel, geometric_mean, sample_mean

__all__ = [
    "DegreeGoodness",
    "GoodnessReport",
    "rae",
    "aic_bic",
    "kl_divergence",
    "resistor_average",
    "select_degree",
]

VARIANCE_FLOOR = 1e-12


def rae(sample_mean_series, fitted_mean_series) -> float:
    """Mean absolute relative error between two positive series."""
    m = np.asarray(sample_mean_series, dtype=float)
    f = np.asarray(fitted_mean_series, dtype=float)
    if m.shape != f.shape:
        raise ValueError(f"series shapes differ: {m.shape} vs {f.shape}")
    return float(np.mean(np.abs(m - f) / m))


def aic_bic(p: int, loglik_value: float, n: int) -> tuple[float, float]:
    """Information criteria for a degree-``p`` model with ``p + 2`` parameters."""
    if n < 1:
        raise ValueError("sample size must be positive")
    k = p + 2
    return 2 * k - 2 * loglik_value, k * math.log(n) - 2 * loglik_value


def kl_divergence(mu_c: float, var_c: float, mu_s: float, var_s: float) -> float:
    """KL divergence between lognormal laws with log-scale moments (mu, var).

    Equals the Gaussian divergence of the logs:
    ``(log(var_s/var_c) + (var_c + (mu_c - mu_s)^2)/var_s - 1) / 2``.
    """
    if var_c <= 0 or var_s <= 0:
        raise ValueError("variances must be positive")
    return 0.5 * (math.log(var_s / var_c) + (var_c + (mu_c - mu_s) ** 2) / var_s - 1.0)


def resistor_average(kl_cs: float, kl_sc: float) -> float:
    """Harmonic mean of the two directional divergences (0 when both vanish)."""
    if kl_cs < 0 or kl_sc < 0:
        raise ValueError("divergences must be nonnegative")
    total = kl_cs + kl_sc
    if total == 0.0:
        return 0.0
    return kl_cs * kl_sc / total


@dataclass(frozen=True)
class DegreeGoodness:
    """All measures for one candidate degree."""

    p: int
    xi_hat: ModelParams
    loglik: float
    rae: float
    aic: float
    bic: float
    dra_median: float
    dra_mean: float
    dra_times: np.ndarray = field(repr=False)
    dra_values: np.ndarray = field(repr=False)
    converged: bool = True


@dataclass(frozen=True)
class GoodnessReport:
    """Degree sweep outcome; ``chosen_p`` minimizes BIC with a parsimony tie-break."""

    per_degree: tuple[DegreeGoodness, ...]
    chosen_p: int
    failures: tuple[tuple[int, str], ...] = ()

    def __getitem__(self, p: int) -> DegreeGoodness:
        for d in self.per_degree:
            if d.p == p:
                return d
        raise KeyError(p)


def dra_curve(panel: PathPanel, xi: ModelParams, mu0: float, var0: float):
    """Resistor-average distance between sample and fitted laws along the grid.

    The sample law at each time uses the lognormal moment proxies
    ``mu = log(geometric mean)`` and ``var = 2 log(mean / geometric mean)``
    (floored); the fitted law propagates the initial log-moments with the
    integrated drift and ``sigma2 (t - t0)``.
    """
    grid = panel.common_grid()
    if grid is None:
        raise ValueError("distance curve needs a common observation grid")
    m = sample_mean(panel)
    g = geometric_mean(panel)
    t0 = grid[0]
    times = grid[1:]
    mu_c = np.log(g[1:])
    var_c = np.maximum(2.0 * np.log(m[1:] / g[1:]), VARIANCE_FLOOR)
    h = np.asarray(integrated_drift(xi, 0.0, times - t0))
    mu_s = mu0 + h
    var_s = np.maximum(var0 + xi.sigma2 * (times - t0), VARIANCE_FLOOR)
    values = np.empty(times.size)
    for k in range(times.size):
        d1 = kl_divergence(mu_c[k], var_c[k], mu_s[k], var_s[k])
        d2 = kl_divergence(mu_s[k], var_s[k], mu_c[k], var_c[k])
        values[k] = resistor_average(d1, d2)
    return times, values


def select_degree(
    panel: PathPanel,
    p_range=range(2, 7),
    fitter: Callable[[PathPanel, int], object] | None = None,
    bic_tie_window: float = 2.0,
) -> GoodnessReport:
    """Fit every degree in ``p_range`` and pick one by BIC with parsimony.

    ``fitter`` defaults to the Newton-Raphson fit; it must return an object
    with ``xi_hat`` (ModelParams) and ``converged``.  Degrees whose fit raises
    are recorded in ``failures`` and skipped; if every degree fails, the last
    error propagates.
    """
    fitter = fitter or (lambda pnl, p: fit(pnl, p))
    p_list = list(p_range)
    if not p_list:
        raise ValueError("empty degree range")

    vdata = transform(panel)
    alpha = fit_initial(vdata)
    grid = panel.common_grid()
    m = sample_mean(panel)
    init_mean = float(np.exp(alpha.mu1_hat + alpha.sigma1sq_hat / 2.0))

    entries = []
    failures = []
    last_error: Exception | None = None
    for p in p_list:
        try:
            res = fitter(panel, p)
        except (FitError, ValueError) as exc:
            failures.append((p, str(exc)))
            last_error = exc
            continue
        xi = res.xi_hat
        l_value = loglik(vdata, alpha, xi)
        if not math.isfinite(l_value):
            failures.append((p, f"non-finite log-likelihood at the degree-{p} fit"))
            continue
        aic, bic = aic_bic(p, l_value, vdata.n)
        ratio = np.exp(
            np.asarray(integrated_drift(ModelParams(xi.eta, xi.poly, 0.0), 0.0, grid - grid[0]))
        )
        fitted = init_mean * ratio
        times, dra = dra_curve(panel, xi, alpha.mu1_hat, alpha.sigma1sq_hat)
        entries.append(
            DegreeGoodness(
                p=p,
                xi_hat=xi,
                loglik=l_value,
                rae=rae(m, fitted),
                aic=aic,
                bic=bic,
                dra_median=float(np.median(dra)),
                dra_mean=float(np.mean(dra)),
                dra_times=times,
                dra_values=dra,
                converged=bool(getattr(res, "converged", True)),
            )
        )
    if not entries:
        raise FitError(f"every degree in {p_list} failed to fit") from last_error

    best_bic = min(e.bic for e in entries)
    chosen = min(e.p for e in entries if e.bic <= best_bic + bic_tie_window)
    return GoodnessReport(per_degree=tuple(entries), chosen_p=chosen,
                          failures=tuple(failures))
