"""Design utilities: mutual-information estimators and D-optimality variants.

The MI utility at a design is the Monte-Carlo average, over parameters drawn
from the current belief, of the fitted log density ratio evaluated at each
parameter's own simulated observation. D-optimality reweights the same
per-particle ratio fits to form posterior covariances for each simulated
observation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .belief import ParticleSet
from .ratio import LfireConfig, RatioModelBatch, fit_logistic_batch

logger = logging.getLogger(__name__)

SINGULAR_CAP = 1e12
MAX_DROP_FRACTION = 0.1


class UtilityError(RuntimeError):
    pass


@dataclass
class UtilityEstimate:
    design: object
    value: float
    n_particles: int
    per_particle_log_ratios: Optional[np.ndarray] = None
    ratio_models: Optional[RatioModelBatch] = None
    diagnostics: dict = field(default_factory=dict)


def _canonical_particle_order(particles: ParticleSet) -> np.ndarray:
    """Lexicographic particle order making estimates independent of storage order."""
    keys = list(particles.thetas.T[::-1]) + [particles.log_weights]
    return np.lexsort(tuple(keys))


def fit_particle_ratios(
    thetas: np.ndarray,
    design,
    belief: ParticleSet,
    model,
    rng: np.random.Generator,
    config: Optional[LfireConfig] = None,
) -> tuple[RatioModelBatch, np.ndarray]:
    """Fit one ratio model per row of ``thetas`` at ``design``.

    Each fit separates ``n_like`` likelihood draws at that parameter from a
    marginal sample set shared across the batch (drawn from the belief).
    Returns the batch and the first likelihood summary row per parameter,
    which serves as that parameter's simulated observation y^(i).
    """
    config = config or LfireConfig()
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    n = thetas.shape[0]

    # Separate child streams so the marginal set depends only on the base
    # seed and the belief, not on how many likelihood draws preceded it.
    rng_like, rng_marg = rng.spawn(2)

    tiled = np.repeat(thetas, config.n_like, axis=0)
    like = model.simulate_summaries(tiled, design, rng_like).reshape(n, config.n_like, -1)
    y_summaries = like[:, 0, :].copy()

    marg_thetas = belief.sample(config.n_marginal, rng_marg)
    marginal = model.simulate_summaries(marg_thetas, design, rng_marg)

    beta, mean, std, diag = fit_logistic_batch(like, marginal, config)
    batch = RatioModelBatch(
        beta=beta,
        mean=mean,
        std=std,
        thetas=thetas,
        design=design,
        diagnostics={
            "n_like": diag["n_like"],
            "n_marginal": diag["n_marginal"],
            "penalty": diag["penalty"],
            "n_iterations": diag["n_iterations"],
            "n_degenerate_features": diag["n_degenerate_features"],
            "n_nonconverged": int((~diag["converged"]).sum()),
        },
    )
    return batch, y_summaries


def _finish_mi(design, log_ratios, weights, clip, batch, retain_models):
    finite = np.isfinite(log_ratios)
    n = log_ratios.shape[0]
    n_dropped = int(n - finite.sum())
    if n_dropped > MAX_DROP_FRACTION * n:
        raise UtilityError(
            f"{n_dropped}/{n} particles produced non-finite log-ratios at design {design}"
        )
    clipped = np.clip(log_ratios[finite], -clip, clip)
    n_clipped = int(np.sum(np.abs(log_ratios[finite]) > clip))
    if n_clipped:
        logger.warning("clipped %d log-ratio values at design %s", n_clipped, design)
    w = weights[finite]
    w = w / w.sum()
    value = float(np.sum(w * clipped))
    return UtilityEstimate(
        design=design,
        value=value,
        n_particles=n,
        per_particle_log_ratios=clipped if np.allclose(w, 1.0 / w.size) else None,
        ratio_models=batch if retain_models else None,
        diagnostics={"n_dropped": n_dropped, "n_clipped": n_clipped},
    )


def estimate_mi(
    design,
    belief: ParticleSet,
    model,
    n: int,
    rng: np.random.Generator,
    config: Optional[LfireConfig] = None,
    retain_models: bool = False,
) -> UtilityEstimate:
    """Sequential MI utility: mean fitted log-ratio at belief-sampled parameters."""
    config = config or LfireConfig()
    order = _canonical_particle_order(belief)
    canonical = ParticleSet(
        thetas=belief.thetas[order],
        log_weights=belief.log_weights[order],
        bounds=belief.bounds,
        iteration=belief.iteration,
    )
    rng_theta, rng_fit = rng.spawn(2)
    thetas = canonical.sample(n, rng_theta)
    batch, y_summaries = fit_particle_ratios(thetas, design, canonical, model, rng_fit, config)
    log_ratios = batch.log_ratio_own(y_summaries)
    est = _finish_mi(design, log_ratios, np.ones(n), config.clip, batch, retain_models)
    est.diagnostics.update(batch.diagnostics)
    return est


def estimate_mi_weighted(
    design,
    particles: ParticleSet,
    model,
    rng: np.random.Generator,
    config: Optional[LfireConfig] = None,
    retain_models: bool = False,
) -> UtilityEstimate:
    """MI estimated directly on the weighted particle set.

    Uses every particle once, weighting its log-ratio by the particle's
    self-normalized belief weight; identical to ``estimate_mi`` at uniform
    weights.
    """
    config = config or LfireConfig()
    order = _canonical_particle_order(particles)
    canonical = ParticleSet(
        thetas=particles.thetas[order],
        log_weights=particles.log_weights[order],
        bounds=particles.bounds,
        iteration=particles.iteration,
    )
    # Mirror estimate_mi's stream split so a shared base seed yields the
    # identical marginal sample set for both estimators.
    _, rng_fit = rng.spawn(2)
    batch, y_summaries = fit_particle_ratios(
        canonical.thetas, design, canonical, model, rng_fit, config
    )
    log_ratios = batch.log_ratio_own(y_summaries)
    est = _finish_mi(
        design, log_ratios, canonical.normalized_weights, config.clip, batch, retain_models
    )
    est.diagnostics.update(batch.diagnostics)
    return est


def _posterior_covariances(design, belief, model, n, rng, config):
    """Per simulated observation: covariance of the ratio-reweighted parameters."""
    config = config or LfireConfig()
    order = _canonical_particle_order(belief)
    canonical = ParticleSet(
        thetas=belief.thetas[order],
        log_weights=belief.log_weights[order],
        bounds=belief.bounds,
        iteration=belief.iteration,
    )
    rng_theta, rng_fit = rng.spawn(2)
    thetas = canonical.sample(n, rng_theta)
    batch, y_summaries = fit_particle_ratios(thetas, design, canonical, model, rng_fit, config)
    log_r = batch.log_ratio_matrix(y_summaries)  # (n_obs, n_models)
    log_r = np.clip(log_r, -config.clip, config.clip)

    dim = thetas.shape[1]
    log_dets = np.empty(n)
    for i in range(n):
        lw = log_r[i]
        w = np.exp(lw - logsumexp(lw))
        mu = w @ thetas
        centered = thetas - mu
        cov = (centered * w[:, None]).T @ centered
        sign, logdet = np.linalg.slogdet(cov)
        log_dets[i] = logdet if sign > 0 and np.isfinite(logdet) else -np.inf
    return thetas, log_dets, batch


def bd_opt(
    design,
    belief: ParticleSet,
    model,
    n: int,
    rng: np.random.Generator,
    config: Optional[LfireConfig] = None,
    aggregate: str = "median",
) -> UtilityEstimate:
    """Bayesian D-optimality: aggregate of 1/det posterior covariance over draws.

    The default aggregation is the median, which damps the spikes that the
    reciprocal determinant produces under Monte-Carlo noise; ``aggregate=
    'mean'`` recovers the plain expectation.
    """
    _, log_dets, batch = _posterior_covariances(design, belief, model, n, rng, config)
    inv_dets = np.where(np.isfinite(log_dets), np.exp(-log_dets), SINGULAR_CAP)
    n_singular = int((~np.isfinite(log_dets)).sum())
    if n_singular:
        logger.warning("%d singular posterior covariances at design %s", n_singular, design)
    inv_dets = np.minimum(inv_dets, SINGULAR_CAP)
    if aggregate == "median":
        value = float(np.median(inv_dets))
    elif aggregate == "mean":
        value = float(np.mean(inv_dets))
    else:
        raise ValueError("aggregate must be 'median' or 'mean'")
    return UtilityEstimate(
        design=design,
        value=value,
        n_particles=n,
        diagnostics={
            "aggregate": aggregate,
            "n_singular": n_singular,
            "inv_dets": inv_dets,
            "log_dets": log_dets,
        },
    )


def bd_opt_stable(
    design,
    belief: ParticleSet,
    model,
    n: int,
    rng: np.random.Generator,
    config: Optional[LfireConfig] = None,
) -> UtilityEstimate:
    """Stable D-optimality variant: negative mean log-determinant."""
    _, log_dets, _ = _posterior_covariances(design, belief, model, n, rng, config)
    n_singular = int((~np.isfinite(log_dets)).sum())
    clipped = np.clip(log_dets, -50.0, 50.0)
    value = float(-np.mean(clipped))
    return UtilityEstimate(
        design=design,
        value=value,
        n_particles=n,
        diagnostics={"n_singular": n_singular, "log_dets": clipped},
    )


def reference_mi(
    design,
    model,
    n_outer: int = 1000,
    n_inner: int = 1000,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Nested Monte-Carlo MI for models with an exact likelihood density.

    Averages log p(y_i | theta_i, d) minus the log of an inner sample average
    of the likelihood over fresh prior draws.
    """
    if not hasattr(model, "log_likelihood") or not hasattr(model, "sample_exact"):
        raise ValueError(f"model {model.name!r} has no tractable likelihood for reference MI")
    rng = rng or np.random.default_rng(0)
    outer = model.sample_prior(n_outer, rng)
    inner = model.sample_prior(n_inner, rng)
    ys = model.sample_exact(outer, design, rng)

    total = 0.0
    for i in range(n_outer):
        log_num = model.log_likelihood(ys[i], outer[i : i + 1], design)[0]
        log_den = logsumexp(model.log_likelihood(ys[i], inner, design)) - np.log(n_inner)
        total += log_num - log_den
    return float(total / n_outer)
