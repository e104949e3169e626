"""Maximum likelihood by Newton-Raphson on the critical-point system.

The score equations reduce to p+2 equations: one for sigma2, whose only
admissible root has a closed form given the growth shape, and p+1 shape
equations ``y_l + sigma2/2 w_l + x_l = 0``.  The fitter eliminates sigma2
through the closed-form root and runs a damped Newton iteration on the p+1
shape equations alone, falling back to the full (p+2)-dimensional system if
the reduced iteration stalls.

Starting values come from two regressions on the sample mean curve:

* shape: ordinary least squares of ``-log(m_N/m_j - 1)`` on ``(1, t, ..., t^p)``
  (the response approximates the exponent polynomial plus ``log eta`` when the
  sample mean has effectively saturated by the last observation);
* noise: the cross-sectional lognormal variance proxy ``2 log(m_j / m^g_j)``
  estimates ``sigma1sq + sigma2 (t_j - t0)``, so its recentred slope over time
  estimates sigma2.

Residual components of the shape system carry scale factors ``t^l`` and can
differ by many orders of magnitude; convergence is therefore declared on
residuals normalized by per-equation characteristic scales frozen at the
starting point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .likelihood import LikelihoodStats, VData, compute_stats, fit_initial, transform
from .model import ModelParams, PolyCoeffs
from .simulate import PathPanel, geometric_mean, sample_mean

__all__ = [
    "FitError",
    "InitSolution",
    "NrResult",
    "initial_theta",
    "initial_sigma2",
    "sigma2_root",
    "system_residual",
    "fit",
]

SIGMA2_FLOOR = 1e-12


class FitError(RuntimeError):
    """Raised when an estimation step cannot produce a usable result."""


@dataclass(frozen=True)
class InitSolution:
    """Regression-based starting point for the Newton iteration."""

    eta0: float
    beta0: PolyCoeffs
    sigma2_0: float
    r_squared: float
    residuals: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class NrResult:
    """Outcome of a Newton-Raphson fit."""

    xi_hat: ModelParams
    iterations: int
    residual_norm: float
    converged: bool
    trace: tuple[float, ...]
    init: InitSolution | None = None
    used_fallback: bool = False
    message: str = ""


def _scaled_vandermonde(t: np.ndarray, p: int, intercept: bool):
    """Design matrix ``[1?, t, ..., t^p]`` with unit-norm columns (SVD-friendly)."""
    cols = [np.ones_like(t)] if intercept else []
    cols += [t**i for i in range(1, p + 1)]
    design = np.column_stack(cols)
    norms = np.linalg.norm(design, axis=0)
    norms[norms == 0] = 1.0
    return design / norms, norms


def usable_saturation_pairs(panel: PathPanel, noise_sigmas: float = 5.0):
    """Times and ratios ``m_N/m_j - 1`` that carry usable saturation signal.

    Pairs where the ratio is nonpositive are infeasible for the log response
    (this always drops the final time).  Pairs where the ratio is positive but
    smaller than ``noise_sigmas`` times its own sampling noise (delta-method
    estimate from the cross-sectional spread of the panel) are noise-dominated:
    their log response has unbounded variance as the ratio approaches zero and
    a large structural bias, so they are dropped too.  On noiseless panels the
    noise estimate is zero and the rule reduces to plain feasibility.

    Returns ``(t_shifted, ratio, keep_mask)`` over ``j = 1..N-1``.
    """
    grid = panel.common_grid()
    if grid is None:
        raise FitError("saturation regression needs a common observation grid")
    t = grid - grid[0]
    m = sample_mean(panel)
    ratio = m[-1] / m[:-1] - 1.0
    if panel.d > 1:
        sd_m = panel.values_matrix().std(axis=0, ddof=1) / math.sqrt(panel.d)
        rel = np.sqrt((sd_m[-1] / m[-1]) ** 2 + (sd_m[:-1] / m[:-1]) ** 2)
        noise = (m[-1] / m[:-1]) * rel
    else:
        noise = np.zeros_like(ratio)
    keep = ratio > noise_sigmas * noise
    return t[:-1], ratio, keep


def initial_theta(panel: PathPanel, p: int) -> tuple[float, PolyCoeffs, float, np.ndarray]:
    """Polynomial-regression starting values for ``(eta, beta)``.

    Returns ``(eta0, beta0, r_squared, residuals)``.  Infeasible and
    noise-dominated pairs are dropped per :func:`usable_saturation_pairs`.
    """
    t_all, ratio, keep = usable_saturation_pairs(panel)
    t_keep = t_all[keep]
    y = -np.log(ratio[keep])
    if t_keep.size < p + 2:
        raise FitError(
            f"only {t_keep.size} usable regression points for degree {p} "
            f"(need {p + 2}); the sample mean may not be increasing"
        )
    design, norms = _scaled_vandermonde(t_keep, p, intercept=True)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    coef = coef / norms
    fitted = design @ (coef * norms)
    resid = y - fitted
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    eta0 = float(np.exp(coef[0]))
    return eta0, PolyCoeffs(tuple(coef[1:])), r2, resid


def initial_sigma2(panel: PathPanel, sigma1sq_hat: float | None = None) -> float:
    """No-intercept slope of the lognormal variance proxy over elapsed time.

    ``2 log(m_j / m^g_j)`` estimates ``sigma1sq + sigma2 (t_j - t0)``; the
    slope of its recentred regression on ``t_j - t0`` estimates sigma2.
    Needs at least two paths (arithmetic and geometric means must differ).
    """
    if panel.d < 2:
        raise FitError("sigma2 starting value needs at least two paths")
    grid = panel.common_grid()
    if grid is None:
        raise FitError("sigma2 starting value needs a common observation grid")
    if sigma1sq_hat is None:
        sigma1sq_hat = fit_initial(transform(panel)).sigma1sq_hat
    proxy = 2.0 * np.log(sample_mean(panel) / geometric_mean(panel))
    x = grid - grid[0]
    slope = float(np.dot(x, proxy - sigma1sq_hat) / np.dot(x, x))
    return max(slope, SIGMA2_FLOOR)


def sigma2_root(stats: LikelihoodStats, n: int) -> float:
    """Closed-form admissible root of the sigma2 score equation given the shape.

    Solves ``sigma2 (n + sigma2 z3/4) = z1 + a - 2b``; the right side is a sum
    of squares, so the positive branch of the quadratic is the only admissible
    solution.
    """
    if not stats.z3 > 0:
        raise ValueError("z3 must be positive")
    k = stats.z1 + stats.a - 2.0 * stats.b
    if k < -1e-12 * max(1.0, stats.z1):
        raise FitError(f"sum-of-squares aggregate is negative ({k}); inconsistent stats")
    k = max(k, 0.0)
    return 2.0 * (-n + math.sqrt(n * n + stats.z3 * k)) / stats.z3


def _theta_residual(stats: LikelihoodStats, sigma2: float) -> np.ndarray:
    return stats.y + 0.5 * sigma2 * stats.w + stats.x


def system_residual(vdata: VData, xi: ModelParams) -> np.ndarray:
    """The p+2 critical-point equations at ``xi``: (sigma2 equation, l = 0..p)."""
    stats = compute_stats(vdata, xi)
    s2 = xi.sigma2
    sig_eq = s2 * (stats.n + 0.25 * s2 * stats.z3) - stats.z1 - stats.a + 2.0 * stats.b
    return np.concatenate(([sig_eq], _theta_residual(stats, s2)))


def _theta_to_params(theta: np.ndarray, sigma2: float) -> ModelParams:
    return ModelParams(eta=float(theta[0]), poly=PolyCoeffs(tuple(theta[1:])), sigma2=sigma2)


def _eval_reduced(vdata: VData, theta: np.ndarray) -> tuple[np.ndarray, float]:
    """Shape residual with sigma2 eliminated through its closed-form root."""
    if theta[0] <= 0:
        return np.full(theta.size, np.inf), np.nan
    stats = compute_stats(vdata, _theta_to_params(theta, 0.0))
    s2 = max(sigma2_root(stats, stats.n), SIGMA2_FLOOR)
    return _theta_residual(stats, s2), s2


def _fd_jacobian(f, x: np.ndarray, fx: np.ndarray, typ: np.ndarray) -> np.ndarray:
    jac = np.empty((fx.size, x.size))
    for k in range(x.size):
        h = 1e-6 * max(abs(x[k]), typ[k], 1e-9)
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        jac[:, k] = (f(xp) - f(xm)) / (2.0 * h)
    return jac


def _newton_loop(f, x0: np.ndarray, scale: np.ndarray, typ: np.ndarray,
                 tol: float, max_iter: int, max_backtracks: int):
    """Damped Newton iteration on ``f`` with backtracking on the scaled norm.

    Returns ``(x, norm, trace, converged, message)``; accepted steps never
    increase the scaled residual norm.
    """
    x = x0.copy()
    fx = f(x)
    norm = float(np.max(np.abs(fx / scale)))
    trace = [norm]
    message = ""
    for it in range(1, max_iter + 1):
        if norm < tol:
            return x, norm, trace, True, ""
        jac = _fd_jacobian(f, x, fx, typ)
        try:
            step = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError:
            step = None
        if step is None or not np.all(np.isfinite(step)):
            # Levenberg-style shift on the scaled system
            shift = 1e-8 * np.linalg.norm(jac, ord="fro") / max(jac.shape[0], 1)
            try:
                step = np.linalg.solve(jac + shift * np.eye(x.size), -fx)
            except np.linalg.LinAlgError:
                message = "singular Jacobian"
                break
        accepted = False
        lam = 1.0
        for _ in range(max_backtracks + 1):
            cand = x + lam * step
            fc = f(cand)
            cand_norm = float(np.max(np.abs(fc / scale))) if np.all(np.isfinite(fc)) else np.inf
            if cand_norm < norm:
                x, fx, norm = cand, fc, cand_norm
                trace.append(norm)
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            message = "line search stalled"
            break
        if np.max(np.abs(lam * step) / np.maximum(np.abs(x), typ)) < 1e-12:
            return x, norm, trace, norm < tol * 10, "step below resolution"
    else:
        message = f"no convergence in {max_iter} iterations"
    return x, norm, trace, norm < tol, message


def fit(
    panel: PathPanel,
    p: int,
    tol: float = 1e-9,
    max_iter: int = 200,
    max_backtracks: int = 30,
    init: tuple[np.ndarray, float] | None = None,
) -> NrResult:
    """Maximum-likelihood fit of degree ``p`` by damped Newton-Raphson.

    ``init`` optionally overrides the regression starting point as
    ``(theta0, sigma2_0)`` with ``theta0 = (eta, beta_1..beta_p)``.
    Non-convergence is reported, not raised: the best iterate reached is
    returned with ``converged=False`` and the residual trace attached.
    """
    vdata = transform(panel)

    init_solution = None
    if init is None:
        eta0, beta0, r2, resid = initial_theta(panel, p)
        try:
            s2_0 = initial_sigma2(panel)
        except FitError:
            s2_0 = 1e-4
        init_solution = InitSolution(eta0=eta0, beta0=beta0, sigma2_0=s2_0,
                                     r_squared=r2, residuals=resid)
        theta0 = np.array([eta0, *beta0.beta])
    else:
        theta0, s2_0 = np.asarray(init[0], dtype=float), float(init[1])

    typ = np.maximum(np.abs(theta0), 1e-6)

    def reduced(theta):
        return _eval_reduced(vdata, theta)[0]

    # per-equation characteristic scales, frozen at the starting point
    stats0 = compute_stats(vdata, _theta_to_params(theta0, 0.0))
    s2_for_scale = max(sigma2_root(stats0, stats0.n), SIGMA2_FLOOR)
    scale = np.maximum.reduce([
        np.abs(stats0.y),
        np.abs(stats0.x),
        0.5 * s2_for_scale * np.abs(stats0.w),
    ])
    scale = np.maximum(scale, 1e-12 * np.max(scale) + 1e-300)

    theta, norm, trace, converged, message = _newton_loop(
        reduced, theta0, scale, typ, tol, max_iter, max_backtracks
    )
    used_fallback = False

    if not converged:
        # full (p+2)-dimensional system on (theta, sigma2)
        def full_system(z):
            if z[0] <= 0 or z[-1] <= 0:
                return np.full(z.size, np.inf)
            return system_residual(vdata, _theta_to_params(z[:-1], z[-1]))

        _, s2_now = _eval_reduced(vdata, theta)
        if not np.isfinite(s2_now):
            s2_now = s2_0
        z0 = np.concatenate((theta, [max(s2_now, SIGMA2_FLOOR)]))
        stats_now = compute_stats(vdata, _theta_to_params(theta, 0.0))
        sig_scale = max(abs(stats_now.z1 + stats_now.a - 2 * stats_now.b),
                        s2_now * stats_now.n, 1e-300)
        full_scale = np.concatenate(([sig_scale], scale))
        full_typ = np.concatenate((typ, [max(s2_now, 1e-8)]))
        z, full_norm, trace2, converged, message2 = _newton_loop(
            full_system, z0, full_scale, full_typ, tol, max_iter, max_backtracks
        )
        if full_norm <= norm or converged:
            theta = z[:-1]
            used_fallback = True
            trace = list(trace) + list(trace2)
            norm = full_norm
            message = message2
            sigma2 = float(max(z[-1], SIGMA2_FLOOR))
            return NrResult(
                xi_hat=_theta_to_params(theta, sigma2),
                iterations=len(trace) - 1,
                residual_norm=norm,
                converged=converged,
                trace=tuple(trace),
                init=init_solution,
                used_fallback=used_fallback,
                message=message,
            )

    _, sigma2 = _eval_reduced(vdata, theta)
    if not np.isfinite(sigma2):
        sigma2 = s2_0
    return NrResult(
        xi_hat=_theta_to_params(theta, float(max(sigma2, SIGMA2_FLOOR))),
        iterations=len(trace) - 1,
        residual_norm=norm,
        converged=converged,
        trace=tuple(trace),
        init=init_solution,
        used_fallback=used_fallback,
        message=message,
    )
