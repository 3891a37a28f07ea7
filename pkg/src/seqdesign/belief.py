"""Weighted particle representation of the current belief over parameters.

Weights are kept in log space: after several iterations the belief weight of a
particle is a product of many density ratios, which underflows in linear
space. Categorical sampling and the effective sample size are computed from
the log-sum-exp-normalized weights.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp

logger = logging.getLogger(__name__)


def ess(weights: np.ndarray) -> float:
    """Effective sample size (sum w)^2 / sum w^2 of non-negative weights."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    total = weights.sum()
    if total == 0:
        raise ValueError("all weights are zero")
    return float(total**2 / np.sum(weights**2))


def log_ess(log_weights: np.ndarray) -> float:
    """ESS computed from log weights without leaving log space."""
    lw = np.asarray(log_weights, dtype=float)
    finite = lw[np.isfinite(lw)]
    if finite.size == 0:
        raise ValueError("all weights are zero")
    return float(np.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))


@dataclass
class ParticleSet:
    """N parameter samples with unnormalized log weights and prior bounds."""

    thetas: np.ndarray  # (N, param_dim)
    log_weights: np.ndarray  # (N,)
    bounds: np.ndarray  # (param_dim, 2); +/-inf where unbounded
    iteration: int = 0

    def __post_init__(self):
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        self.bounds = np.asarray(self.bounds, dtype=float)
        if self.log_weights.shape[0] != self.thetas.shape[0]:
            raise ValueError("one weight per particle required")
        if not np.any(np.isfinite(self.log_weights)):
            raise ValueError("at least one particle weight must be positive")

    @classmethod
    def from_prior(cls, model, n: int, rng: np.random.Generator) -> "ParticleSet":
        return cls(
            thetas=model.sample_prior(n, rng),
            log_weights=np.zeros(n),
            bounds=model.param_bounds,
            iteration=0,
        )

    def __len__(self):
        return self.thetas.shape[0]

    @property
    def param_dim(self):
        return self.thetas.shape[1]

    @property
    def weights(self) -> np.ndarray:
        """Unnormalized weights on the linear scale."""
        return np.exp(self.log_weights)

    @property
    def normalized_weights(self) -> np.ndarray:
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    @property
    def ess(self) -> float:
        return log_ess(self.log_weights)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n parameters from the weighted belief, with replacement."""
        idx = rng.choice(len(self), size=n, replace=True, p=self.normalized_weights)
        return self.thetas[idx]

    def updated(self, log_ratios: np.ndarray, events: Optional[list] = None) -> "ParticleSet":
        """Multiply weights by per-particle density ratios (given in log space).

        Non-finite ratios zero out the corresponding particle's weight.
        """
        log_ratios = np.asarray(log_ratios, dtype=float)
        if log_ratios.shape != self.log_weights.shape:
            raise ValueError("one ratio per particle required")
        bad = ~np.isfinite(log_ratios) & ~np.isneginf(log_ratios)
        if bad.any():
            logger.warning("zeroing %d particle weights with non-finite ratios", bad.sum())
            if events is not None:
                events.append({"event": "nonfinite_ratio", "count": int(bad.sum())})
            log_ratios = np.where(bad, -np.inf, log_ratios)
        return ParticleSet(
            thetas=self.thetas.copy(),
            log_weights=self.log_weights + log_ratios,
            bounds=self.bounds,
            iteration=self.iteration + 1,
        )

    def to_dict(self) -> dict:
        return {
            "thetas": self.thetas.tolist(),
            "log_weights": self.log_weights.tolist(),
            "bounds": self.bounds.tolist(),
            "iteration": self.iteration,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParticleSet":
        return cls(
            thetas=np.asarray(d["thetas"], dtype=float),
            log_weights=np.asarray(d["log_weights"], dtype=float),
            bounds=np.asarray(d["bounds"], dtype=float),
            iteration=int(d["iteration"]),
        )


def update_weights(particles: ParticleSet, ratio_batch, observed_summary, events=None) -> ParticleSet:
    """Per-particle belief update: w_i <- w_i * r_i(observed summary)."""
    if len(ratio_batch) != len(particles):
        raise ValueError("need one fitted ratio model per particle")
    log_r = ratio_batch.log_ratio_at(np.asarray(observed_summary, dtype=float))
    return particles.updated(log_r, events=events)


def sample_belief(particles: ParticleSet, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw belief samples by categorical resampling of the particle set."""
    return particles.sample(n, rng)


@dataclass
class UnitScaler:
    """Per-dimension affine map onto the sample range [0, 1]."""

    lo: np.ndarray
    span: np.ndarray  # 1.0 in dimensions with zero sample range

    def transform(self, thetas: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(thetas) - self.lo) / self.span

    def inverse(self, thetas_unit: np.ndarray) -> np.ndarray:
        return np.atleast_2d(thetas_unit) * self.span + self.lo

    def transform_bounds(self, bounds: np.ndarray) -> np.ndarray:
        return (np.asarray(bounds, dtype=float) - self.lo[:, None]) / self.span[:, None]


def transform_unit(particles: ParticleSet):
    """Map particles onto the unit cube using per-dimension sample min/max.

    Returns (transformed thetas, transformed bounds, scaler). Dimensions with
    zero sample range pass through unscaled with a logged warning.
    """
    lo = particles.thetas.min(axis=0)
    hi = particles.thetas.max(axis=0)
    span = hi - lo
    degenerate = span <= 0
    if degenerate.any():
        logger.warning(
            "zero sample range in dimension(s) %s; passing through unscaled",
            np.flatnonzero(degenerate).tolist(),
        )
        span = np.where(degenerate, 1.0, span)
        lo = np.where(degenerate, 0.0, lo)
    scaler = UnitScaler(lo=lo, span=span)
    return scaler.transform(particles.thetas), scaler.transform_bounds(particles.bounds), scaler


def nn_median_distance(thetas: np.ndarray) -> float:
    """Median euclidean distance from each point to its nearest neighbour."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[0] < 2:
        raise ValueError("need at least two points")
    tree = cKDTree(thetas)
    dist, _ = tree.query(thetas, k=2)
    return float(np.median(dist[:, 1]))


DEGENERATE_SIGMA = 1e-3


def resample(
    particles: ParticleSet,
    rng: np.random.Generator,
    max_attempts: int = 1000,
    events: Optional[list] = None,
) -> ParticleSet:
    """Draw a fresh, equally weighted particle set from a smoothed belief.

    In unit-cube space, each draw picks a particle by its weight and jitters
    it with an isotropic Gaussian of scale sqrt(median nearest-neighbour
    distance), rejecting draws outside the transformed prior support.
    """
    if len(particles) < 2:
        raise ValueError("resampling needs at least two particles")
    unit, bounds_unit, scaler = transform_unit(particles)
    delta = nn_median_distance(unit)
    sigma = np.sqrt(delta) if delta > 0 else DEGENERATE_SIGMA
    probs = particles.normalized_weights

    n = len(particles)
    dim = particles.param_dim
    centers = unit[rng.choice(n, size=n, replace=True, p=probs)]
    out = np.empty_like(centers)
    lo, hi = bounds_unit[:, 0], bounds_unit[:, 1]
    n_fallback = 0
    for i in range(n):
        accepted = False
        for _ in range(max_attempts):
            cand = centers[i] + sigma * rng.standard_normal(dim)
            if np.all(cand >= lo) and np.all(cand <= hi):
                out[i] = cand
                accepted = True
                break
        if not accepted:
            out[i] = centers[i]
            n_fallback += 1
    if n_fallback:
        logger.warning("resample fell back to %d unjittered centers", n_fallback)
        if events is not None:
            events.append({"event": "resample_fallback", "count": n_fallback})

    new_thetas = scaler.inverse(out)
    # Guard against round-trip rounding at the support boundary.
    finite_lo = np.where(np.isfinite(particles.bounds[:, 0]), particles.bounds[:, 0], -np.inf)
    finite_hi = np.where(np.isfinite(particles.bounds[:, 1]), particles.bounds[:, 1], np.inf)
    new_thetas = np.clip(new_thetas, finite_lo, finite_hi)
    return ParticleSet(
        thetas=new_thetas,
        log_weights=np.zeros(n),
        bounds=particles.bounds,
        iteration=particles.iteration,
    )
