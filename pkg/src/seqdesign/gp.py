"""Gaussian-process surrogate and Bayesian optimization of noisy utilities.

The surrogate is a Matern-5/2 GP over designs normalized to [0, 1], with
targets z-scored per run. Hyperparameters (lengthscale, signal variance,
noise nugget) are set by maximizing the log marginal likelihood with
multi-start L-BFGS on their logs; the acquisition is Expected Improvement.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize
from scipy.linalg import cho_factor, cho_solve, cholesky
from scipy.stats import norm

from .models import ContinuousDomain, DiscreteDomain

logger = logging.getLogger(__name__)

SQRT5 = math.sqrt(5.0)


def matern52(x, x2, lengthscale: float, signal_var: float = 1.0) -> np.ndarray:
    """Matern-5/2 kernel on scalars or arrays of scalars."""
    if lengthscale <= 0:
        raise ValueError("lengthscale must be positive")
    r = np.abs(np.asarray(x, dtype=float) - np.asarray(x2, dtype=float))
    u = SQRT5 * r / lengthscale
    return signal_var * (1.0 + u + u**2 / 3.0) * np.exp(-u)


def _kernel_matrix(xa, xb, lengthscale, signal_var):
    return matern52(xa[:, None], xb[None, :], lengthscale, signal_var)


def nll_and_grad(log_params: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Negative log marginal likelihood and its gradient.

    ``log_params`` is (log lengthscale, log signal variance, log noise
    variance); gradients are with respect to the log parameters.
    """
    log_l, log_s2, log_n2 = log_params
    ell, s2, n2 = np.exp(log_l), np.exp(log_s2), np.exp(log_n2)
    n = x.shape[0]

    r = np.abs(x[:, None] - x[None, :])
    u = SQRT5 * r / ell
    expu = np.exp(-u)
    K0 = s2 * (1.0 + u + u**2 / 3.0) * expu
    K = K0 + n2 * np.eye(n)

    try:
        L = cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        return np.inf, np.zeros(3)
    alpha = cho_solve((L, True), y)
    nll = 0.5 * y @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * n * math.log(2.0 * math.pi)

    Kinv = cho_solve((L, True), np.eye(n))
    M = np.outer(alpha, alpha) - Kinv  # d(log ml)/dK = 0.5 M

    # dK/d(log ell): via u -> dk/du = -s2 exp(-u) u (1+u)/3 and du/d(log ell) = -u.
    dK_dlogl = s2 * expu * u**2 * (1.0 + u) / 3.0
    dK_dlogs2 = K0
    dK_dlogn2 = n2 * np.eye(n)

    grad = -0.5 * np.array(
        [np.sum(M * dK_dlogl), np.sum(M * dK_dlogs2), np.sum(M * dK_dlogn2)]
    )
    return float(nll), grad


@dataclass
class GPSurrogate:
    """Fitted GP over normalized inputs with cached Cholesky factorization."""

    x: np.ndarray  # normalized inputs in [0, 1]
    y: np.ndarray  # z-scored targets
    lengthscale: float
    signal_var: float
    noise_var: float
    y_mean: float
    y_std: float
    x_lo: float
    x_span: float
    _chol: tuple = field(repr=False, default=None)
    _alpha: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        K = _kernel_matrix(self.x, self.x, self.lengthscale, self.signal_var)
        K[np.diag_indices_from(K)] += self.noise_var
        L = cholesky(K, lower=True)
        self._chol = (L, True)
        self._alpha = cho_solve(self._chol, self.y)

    def _normalize(self, designs):
        return (np.asarray(designs, dtype=float) - self.x_lo) / self.x_span

    def predict(self, designs):
        """Posterior mean and variance at raw-space designs, on the raw target scale."""
        xs = np.atleast_1d(self._normalize(designs))
        ks = _kernel_matrix(xs, self.x, self.lengthscale, self.signal_var)
        mean = ks @ self._alpha
        v = cho_solve(self._chol, ks.T)
        var = self.signal_var - np.einsum("ij,ji->i", ks, v)
        var = np.clip(var, 0.0, None)
        return mean * self.y_std + self.y_mean, var * self.y_std**2

    def predict_z(self, designs):
        """Posterior mean/var on the z-scored target scale (for acquisition)."""
        xs = np.atleast_1d(self._normalize(designs))
        ks = _kernel_matrix(xs, self.x, self.lengthscale, self.signal_var)
        mean = ks @ self._alpha
        v = cho_solve(self._chol, ks.T)
        var = np.clip(self.signal_var - np.einsum("ij,ji->i", ks, v), 0.0, None)
        return mean, var


def gp_fit(
    designs: np.ndarray,
    values: np.ndarray,
    domain_lo: float,
    domain_hi: float,
    rng: Optional[np.random.Generator] = None,
    n_restarts: int = 5,
    noise_floor_factor: float = 1e-6,
) -> GPSurrogate:
    """Fit GP hyperparameters by multi-start gradient ascent on the marginal likelihood."""
    designs = np.asarray(designs, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.unique(designs).size < 2:
        raise ValueError("need at least two distinct designs")
    rng = rng or np.random.default_rng(0)

    x_lo, x_span = float(domain_lo), float(domain_hi - domain_lo)
    x = (designs - x_lo) / x_span
    y_mean = float(values.mean())
    y_std = float(values.std())
    if y_std < 1e-12:
        y_std = 1.0
    y = (values - y_mean) / y_std

    # Bounds in normalized space: targets are z-scored, inputs span [0, 1].
    noise_floor = max(noise_floor_factor * float(np.var(y)), 1e-10)
    bounds = [
        (math.log(0.01), math.log(10.0)),
        (math.log(1e-3), math.log(1e3)),
        (math.log(noise_floor), math.log(10.0)),
    ]

    starts = [np.array([math.log(0.3), 0.0, math.log(0.1)])]
    for _ in range(n_restarts - 1):
        starts.append(np.array([rng.uniform(lo, hi) for lo, hi in bounds]))

    best = None
    for start in starts:
        try:
            res = optimize.minimize(
                nll_and_grad,
                start,
                args=(x, y),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
            )
        except np.linalg.LinAlgError:
            continue
        if not np.isfinite(res.fun):
            continue
        if best is None or res.fun < best.fun:
            best = res

    if best is None:
        # Median-heuristic fallback keeps the surrogate usable.
        logger.warning("GP hyperparameter search failed; using median-heuristic lengthscale")
        pair = np.abs(x[:, None] - x[None, :])
        ell = float(np.median(pair[pair > 0])) if np.any(pair > 0) else 0.3
        params = (ell, 1.0, max(0.1, noise_floor))
    else:
        params = tuple(np.exp(best.x))

    return GPSurrogate(
        x=x,
        y=y,
        lengthscale=params[0],
        signal_var=params[1],
        noise_var=params[2],
        y_mean=y_mean,
        y_std=y_std,
        x_lo=x_lo,
        x_span=x_span,
    )


def expected_improvement(mean, std, best) -> np.ndarray:
    """EI of a maximization problem; handles std = 0 by its limit."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise ValueError("std must be non-negative")
    improve = mean - best
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0, improve / np.where(std > 0, std, 1.0), 0.0)
        ei = np.where(
            std > 0,
            improve * norm.cdf(z) + std * norm.pdf(z),
            np.maximum(improve, 0.0),
        )
    return ei


@dataclass
class BOResult:
    d_star: object
    surrogate: GPSurrogate
    trace: list  # [(design, value), ...] in evaluation order
    grid: np.ndarray
    grid_mean: np.ndarray
    grid_var: np.ndarray
    best_raw: object

    @property
    def designs(self):
        return np.array([d for d, _ in self.trace])

    @property
    def values(self):
        return np.array([v for _, v in self.trace])


def _init_designs(domain, n_init):
    if isinstance(domain, DiscreteDomain):
        idx = np.unique(np.linspace(0, len(domain.values) - 1, n_init).round().astype(int))
        return [domain.values[i] for i in idx]
    # Midpoint spacing keeps the initial sweep away from the domain endpoints,
    # where several simulators degenerate (e.g. a measurement at time zero is
    # deterministic) and would anchor the surrogate to an extreme outlier.
    span = domain.hi - domain.lo
    return list(domain.lo + (np.arange(n_init) + 0.5) / n_init * span)


def _dense_grid(domain, grid_size):
    if isinstance(domain, DiscreteDomain):
        return np.array(domain.values, dtype=float)
    return np.linspace(domain.lo, domain.hi, grid_size)


def bo_optimize(
    utility: Callable,
    domain,
    budget: int,
    rng: np.random.Generator,
    n_init: int = 5,
    grid_size: int = 512,
    n_acq_starts: int = 50,
    dup_tol: float = 1e-6,
) -> BOResult:
    """Maximize a noisy utility over a 1-D continuous or discrete design domain.

    Returns the argmax of the fitted GP posterior mean over the domain (the
    best raw evaluation is also reported in the result).
    """
    if budget < n_init:
        raise ValueError("budget must cover the initial designs")
    discrete = isinstance(domain, DiscreteDomain)

    trace = []

    def evaluate(d):
        try:
            return float(utility(d))
        except Exception:
            logger.warning("utility evaluation failed at %s; retrying once", d, exc_info=True)
            return float(utility(d))

    for d in _init_designs(domain, n_init):
        try:
            trace.append((d, evaluate(d)))
        except Exception:
            logger.warning("skipping design %s after repeated failure", d, exc_info=True)

    surrogate = None
    while len(trace) < budget:
        designs = np.array([d for d, _ in trace], dtype=float)
        values = np.array([v for _, v in trace])
        surrogate = gp_fit(designs, values, domain.lo, domain.hi, rng=rng)
        best_z = float(surrogate.y.max())

        if discrete:
            cands = np.array(
                [d for d in domain.values if not np.any(np.abs(designs - d) < 0.5)], dtype=float
            )
            if cands.size == 0:
                break
        else:
            cands = np.concatenate(
                [
                    _dense_grid(domain, grid_size),
                    rng.uniform(domain.lo, domain.hi, size=n_acq_starts),
                ]
            )
        mean_z, var_z = surrogate.predict_z(cands)
        ei = expected_improvement(mean_z, np.sqrt(var_z), best_z)
        order = np.argsort(-ei)
        nxt = None
        for j in order:
            cand = float(cands[j])
            if discrete:
                cand = int(round(cand))
            if not np.any(np.abs(designs - cand) < dup_tol):
                nxt = cand
                break
        if nxt is None:
            nxt = int(rng.choice(cands)) if discrete else float(rng.uniform(domain.lo, domain.hi))
        try:
            trace.append((nxt, evaluate(nxt)))
        except Exception:
            logger.warning("skipping design %s after repeated failure", nxt, exc_info=True)
            # Burn the slot so a persistently failing utility cannot loop forever.
            budget -= 1

    designs = np.array([d for d, _ in trace], dtype=float)
    values = np.array([v for _, v in trace])
    if surrogate is None:
        surrogate = gp_fit(designs, values, domain.lo, domain.hi, rng=rng)
    grid = _dense_grid(domain, grid_size)
    grid_mean, grid_var = surrogate.predict(grid)
    i_star = int(np.argmax(grid_mean))
    d_star = domain.values[i_star] if discrete else float(grid[i_star])
    best_raw = trace[int(np.argmax(values))][0]
    return BOResult(
        d_star=d_star,
        surrogate=surrogate,
        trace=trace,
        grid=grid,
        grid_mean=grid_mean,
        grid_var=grid_var,
        best_raw=best_raw,
    )
