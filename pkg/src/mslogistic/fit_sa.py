"""Simulated annealing on a bounded parameter box.

The objective is the negative core log-likelihood, minimized over the full
vector ``(eta, beta_1..beta_p, sigma2)`` inside a box built from the data:

* ``eta``: the interval spanned by the per-path estimates
  ``(x_last / x_first - 1)^-1`` (last-over-first growth ratios);
* ``beta``: high-confidence OLS intervals from the no-intercept regression of
  ``-log[(m_N/m_j - 1) * eta_hat]`` on ``(t, ..., t^p)``;
* ``sigma2``: the fixed interval (0, 0.01), i.e. sigma < 0.1.

Schedule: the starting temperature is calibrated from a pilot sample of
objective increases so that uphill moves are initially accepted with
probability ``p0``; cooling is geometric with ratio ``gamma``; each
temperature stage proposes a chain of ``chain_length`` moves uniform in a
box-clipped neighborhood whose radius shrinks with the temperature.  A run
stops when the chain's retained objective has been flat for a full chain,
when the stage budget is exhausted, or when the temperature floor is reached.

Because annealing is stochastic, the estimate is averaged over independent
seeded replications; per-replication solutions are kept alongside the average.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats as _stats

from .fit_nr import FitError, usable_saturation_pairs
from .likelihood import compute_stats, transform
from .likelihood import core_loglik
from .model import ModelParams, PolyCoeffs
from .simulate import PathPanel, sample_mean

__all__ = ["ParamBox", "SaSchedule", "SaResult", "build_box", "anneal"]


@dataclass(frozen=True)
class ParamBox:
    """Closed search region per coordinate, ordered (eta, beta_1..p, sigma2)."""

    eta_interval: tuple[float, float]
    beta_intervals: tuple[tuple[float, float], ...]
    sigma2_interval: tuple[float, float] = (0.0, 0.01)

    def __post_init__(self):
        for lo, hi in (self.eta_interval, *self.beta_intervals, self.sigma2_interval):
            if not lo < hi:
                raise ValueError(f"empty interval ({lo}, {hi})")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.eta_interval[0], *(iv[0] for iv in self.beta_intervals),
                         self.sigma2_interval[0]])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.eta_interval[1], *(iv[1] for iv in self.beta_intervals),
                         self.sigma2_interval[1]])

    def contains(self, vec: np.ndarray, rtol: float = 1e-12) -> bool:
        pad = rtol * (self.upper - self.lower)
        return bool(np.all(vec >= self.lower - pad) and np.all(vec <= self.upper + pad))


@dataclass(frozen=True)
class SaSchedule:
    """Annealing control constants (all overridable)."""

    p0: float = 0.9                # initial uphill acceptance probability
    gamma: float = 0.95            # geometric cooling ratio
    chain_length: int = 50         # proposals per temperature stage
    max_iter: int = 1000           # temperature stages
    t_final: float = 1e-7          # temperature floor
    seed: int = 0
    replications: int = 10
    pilot_pairs: int = 100         # proposal pairs used to calibrate T0
    flat_tol: float = 1e-12        # equality tolerance for the flat-chain stop

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1)")


@dataclass(frozen=True)
class SaResult:
    """Averaged annealing estimate plus the per-replication solutions."""

    xi_hat: ModelParams
    per_replication: tuple[tuple[ModelParams, float], ...]
    stop_reasons: tuple[str, ...]
    t0_temperature: float


def build_box(panel: PathPanel, p: int, confidence: float = 0.999) -> ParamBox:
    """Data-driven parameter box for degree ``p``.

    Paths whose last value does not exceed their first carry no growth-ratio
    information for eta and are skipped (all skipped is an error).  A
    degenerate eta interval (all ratios equal) is widened by +-10%.
    """
    ratios = []
    skipped = []
    for i, path in enumerate(panel.paths):
        if path.values[-1] > path.values[0]:
            ratios.append(1.0 / (path.values[-1] / path.values[0] - 1.0))
        else:
            skipped.append(i)
    if skipped:
        warnings.warn(
            f"paths {skipped} do not end above their first value; "
            "excluded from the eta interval",
            stacklevel=2,
        )
    if not ratios:
        raise FitError("no path ends above its first value; eta interval undefined")
    a, b = min(ratios), max(ratios)
    if a == b:
        a, b = a * 0.9, b * 1.1

    m = sample_mean(panel)
    eta_hat = 1.0 / (m[-1] / m[0] - 1.0)
    t_all, ratio, keep = usable_saturation_pairs(panel)
    t_keep = t_all[keep]
    y = -np.log(ratio[keep] * eta_hat)
    if t_keep.size < p + 1:
        raise FitError(f"only {t_keep.size} usable points for a degree-{p} box")

    design = np.column_stack([t_keep**i for i in range(1, p + 1)])
    norms = np.linalg.norm(design, axis=0)
    scaled = design / norms
    coef_s, *_ = np.linalg.lstsq(scaled, y, rcond=None)
    coef = coef_s / norms
    resid = y - design @ coef
    dof = max(t_keep.size - p, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(scaled.T @ scaled)
    se = np.sqrt(np.diag(cov)) / norms
    t_quant = _stats.t.ppf(0.5 + confidence / 2.0, dof)
    intervals = tuple((float(c - t_quant * s), float(c + t_quant * s)) for c, s in zip(coef, se))

    return ParamBox(eta_interval=(float(a), float(b)), beta_intervals=intervals)


def _objective(vdata, vec: np.ndarray) -> float:
    params = ModelParams(eta=float(vec[0]), poly=PolyCoeffs(tuple(vec[1:-1])),
                         sigma2=float(vec[-1]))
    return -core_loglik(compute_stats(vdata, params), params.sigma2)


def _propose(rng, current: np.ndarray, lower, upper, radius: np.ndarray) -> np.ndarray:
    lo = np.maximum(lower, current - radius)
    hi = np.minimum(upper, current + radius)
    return rng.uniform(lo, hi)


def _pilot_temperature(rng, vdata, lower, upper, sched: SaSchedule) -> float:
    """Average uphill jump over random proposal pairs, scaled by -log p0."""
    increases = []
    for _ in range(sched.pilot_pairs):
        f0 = _objective(vdata, rng.uniform(lower, upper))
        f1 = _objective(vdata, rng.uniform(lower, upper))
        if math.isfinite(f0) and math.isfinite(f1) and f1 > f0:
            increases.append(f1 - f0)
    if not increases:
        return 1.0
    return -float(np.mean(increases)) / math.log(sched.p0)


def _run_one(vdata, box: ParamBox, sched: SaSchedule, rep: int, t0_temp: float,
             uphill_log: list | None):
    rng = np.random.default_rng((sched.seed, rep))
    lower, upper = box.lower, box.upper
    width = upper - lower
    eps = 1e-12 * width
    lower = lower + eps          # keep the open sigma2 endpoint strictly positive
    upper = upper - eps

    current = rng.uniform(lower, upper)
    f_curr = _objective(vdata, current)
    best, f_best = current.copy(), f_curr

    temp = t0_temp
    recent: list[float] = []
    stop = "max_iter"
    for _ in range(sched.max_iter):
        radius = width * max(0.10 * temp / t0_temp, 0.001)
        for _ in range(sched.chain_length):
            cand = _propose(rng, current, lower, upper, radius)
            f_cand = _objective(vdata, cand)
            df = f_cand - f_curr
            if df <= 0:
                accept = True
            else:
                rho = math.exp(-df / temp)
                accept = rng.random() < rho
                if uphill_log is not None:
                    uphill_log.append((df / temp, accept))
            if accept:
                current, f_curr = cand, f_cand
                if f_curr < f_best:
                    best, f_best = current.copy(), f_curr
            recent.append(f_curr)
        recent = recent[-sched.chain_length:]
        if len(recent) == sched.chain_length and max(recent) - min(recent) <= sched.flat_tol:
            stop = "flat_chain"
            break
        temp *= sched.gamma
        if temp < sched.t_final:
            stop = "temperature_floor"
            break
    params = ModelParams(eta=float(best[0]), poly=PolyCoeffs(tuple(best[1:-1])),
                         sigma2=float(best[-1]))
    return params, float(f_best), stop


def anneal(panel: PathPanel, p: int, box: ParamBox | None = None,
           sched: SaSchedule | None = None, uphill_log: list | None = None) -> SaResult:
    """Annealed maximum-likelihood estimate of degree ``p`` inside ``box``.

    Runs ``sched.replications`` independent seeded replications and averages
    the per-replication best solutions coordinate-wise (original scale).  Pass
    ``uphill_log`` to record ``(df/T, accepted)`` pairs for acceptance-rule
    diagnostics.
    """
    if box is None:
        box = build_box(panel, p)
    if sched is None:
        sched = SaSchedule()
    if len(box.beta_intervals) != p:
        raise ValueError(f"box has {len(box.beta_intervals)} beta intervals, need {p}")

    vdata = transform(panel)
    pilot_rng = np.random.default_rng((sched.seed, 0x9E3779B9))
    t0_temp = _pilot_temperature(pilot_rng, vdata, box.lower + 1e-12 * (box.upper - box.lower),
                                 box.upper, sched)

    per_rep = []
    reasons = []
    for rep in range(sched.replications):
        params, f_best, stop = _run_one(vdata, box, sched, rep, t0_temp, uphill_log)
        per_rep.append((params, f_best))
        reasons.append(stop)

    avg = np.mean([prm.as_vector() for prm, _ in per_rep], axis=0)
    xi_hat = ModelParams(eta=float(avg[0]), poly=PolyCoeffs(tuple(avg[1:-1])),
                         sigma2=float(avg[-1]))
    return SaResult(
        xi_hat=xi_hat,
        per_replication=tuple(per_rep),
        stop_reasons=tuple(reasons),
        t0_temperature=t0_temp,
    )
