"""Campaign orchestration: the sequential design loop, state and persistence.

One iteration proposes the utility-maximizing design by Bayesian
optimization, obtains the observation at that design (from a simulated truth
or a human experimenter), and updates the particle belief with per-particle
density ratios fitted at the chosen design. All randomness derives from the
master seed through per-iteration, per-role seed sequences, so a reloaded
campaign resumes bit-for-bit and oracle draws never share a stream with
inference draws.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import gaussian_kde

from . import belief as belief_mod
from .belief import ParticleSet
from .gp import BOResult, bo_optimize
from .models import DiscreteDomain, make_model
from .ratio import LfireConfig, RatioModelBatch
from .utilities import (
    bd_opt,
    bd_opt_stable,
    estimate_mi,
    estimate_mi_weighted,
    fit_particle_ratios,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# RNG stream roles; oracle draws are never shared with inference draws.
_ROLE_PRIOR = 0
_ROLE_UTILITY = 1
_ROLE_ORACLE = 2
_ROLE_BO = 3
_ROLE_RESAMPLE = 4
_ROLE_FINAL_FIT = 5
_ROLE_POSTERIOR = 6


def rng_for(seed: int, iteration: int, role: int, *extra) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, iteration, role) + extra))


UTILITY_KINDS = ("mi", "mi_weighted", "bd_opt", "bd_opt_stable")
ORACLE_KINDS = ("simulated", "interactive")


@dataclass
class RunConfig:
    model: str = "oscillation"
    model_overrides: dict = field(default_factory=dict)
    n_particles: int = 1000
    n_iterations: int = 4
    utility: str = "mi"
    eta_min_frac: float = 0.5
    bo_budget: int = 30
    bo_init: int = 5
    mi_samples: Optional[int] = None  # defaults to n_particles
    n_like: int = 100
    n_marginal: int = 100
    penalty: Optional[float] = None
    clip: float = 50.0
    seed: int = 0
    oracle: str = "simulated"
    theta_true: Optional[list] = None

    def __post_init__(self):
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be at least 1")
        if self.n_particles < 2:
            raise ValueError("n_particles must be at least 2")
        if not 0.0 < self.eta_min_frac <= 1.0:
            raise ValueError("eta_min_frac must lie in (0, 1]")
        if self.utility not in UTILITY_KINDS:
            raise ValueError(f"utility must be one of {UTILITY_KINDS}")
        if self.oracle not in ORACLE_KINDS:
            raise ValueError(f"oracle must be one of {ORACLE_KINDS}")

    def lfire(self) -> LfireConfig:
        return LfireConfig(
            n_like=self.n_like,
            n_marginal=self.n_marginal,
            penalty=self.penalty,
            clip=self.clip,
        )

    def build_model(self):
        return make_model(self.model, **self.model_overrides)

    def resolved_theta_true(self, model) -> np.ndarray:
        if self.theta_true is not None:
            return np.asarray(self.theta_true, dtype=float)
        return model.default_theta_true()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(**d)


def simulated_oracle(model, theta_true, design, rng: np.random.Generator):
    """One simulator draw at the true parameters, on a dedicated RNG stream."""
    return model.simulate(np.atleast_2d(theta_true), design, rng).raw


STATUS_RUNNING = "running"
STATUS_AWAITING = "awaiting_observation"
STATUS_DONE = "done"


class RunState:
    """Full campaign state: config, particles, history and pending artifacts."""

    def __init__(self, config: RunConfig, particles=None, history=None, pending=None):
        self.config = config
        self.model = config.build_model()
        if particles is None:
            particles = ParticleSet.from_prior(
                self.model, config.n_particles, rng_for(config.seed, 0, _ROLE_PRIOR)
            )
        self.particles = particles
        self.history = history if history is not None else []
        self.pending = pending  # dict while awaiting an observation

    # -- status ----------------------------------------------------------

    @property
    def iteration(self) -> int:
        """Number of completed iterations."""
        return len(self.history)

    @property
    def status(self) -> str:
        if self.pending is not None:
            return STATUS_AWAITING
        if self.iteration >= self.config.n_iterations:
            return STATUS_DONE
        return STATUS_RUNNING

    @property
    def pending_design(self):
        return self.pending["design"] if self.pending else None

    # -- the sequential loop ---------------------------------------------

    def _utility_fn(self, k: int):
        cfg = self.config
        lfire = cfg.lfire()
        n = cfg.mi_samples or cfg.n_particles
        counter = {"i": 0}

        def evaluate(d):
            rng = rng_for(cfg.seed, k, _ROLE_UTILITY, counter["i"])
            counter["i"] += 1
            if cfg.utility == "mi":
                est = estimate_mi(d, self.particles, self.model, n, rng, lfire)
            elif cfg.utility == "mi_weighted":
                est = estimate_mi_weighted(d, self.particles, self.model, rng, lfire)
            elif cfg.utility == "bd_opt":
                est = bd_opt(d, self.particles, self.model, n, rng, lfire)
            else:
                est = bd_opt_stable(d, self.particles, self.model, n, rng, lfire)
            return est.value

        return evaluate

    def run_iteration(self) -> "RunState":
        """Execute one design-observe-update cycle (or stop awaiting input)."""
        if self.status == STATUS_AWAITING:
            raise RuntimeError("awaiting an observation; call observe() first")
        if self.status == STATUS_DONE:
            raise RuntimeError("campaign is complete")
        cfg = self.config
        k = self.iteration + 1
        events = []

        ess_before = self.particles.ess
        resampled = False
        if k > 1 and ess_before < cfg.eta_min_frac * len(self.particles):
            self.particles = belief_mod.resample(
                self.particles, rng_for(cfg.seed, k, _ROLE_RESAMPLE), events=events
            )
            resampled = True
            events.append({"event": "resample", "ess_before": ess_before})

        bo_res = bo_optimize(
            self._utility_fn(k),
            self.model.design_domain,
            cfg.bo_budget,
            rng_for(cfg.seed, k, _ROLE_BO),
            n_init=cfg.bo_init,
        )
        d_star = bo_res.d_star

        # Per-particle ratio fits at the chosen design back the weight update.
        batch, _ = fit_particle_ratios(
            self.particles.thetas,
            d_star,
            self.particles,
            self.model,
            rng_for(cfg.seed, k, _ROLE_FINAL_FIT),
            cfg.lfire(),
        )

        if cfg.oracle == "simulated":
            y_raw = simulated_oracle(
                self.model,
                cfg.resolved_theta_true(self.model),
                d_star,
                rng_for(cfg.seed, k, _ROLE_ORACLE),
            )
            self._commit(k, d_star, y_raw, batch, bo_res, ess_before, resampled, events)
        else:
            self.pending = {
                "iteration": k,
                "design": d_star,
                "ratio_models": batch,
                "bo": _bo_to_dict(bo_res),
                "ess_before": ess_before,
                "resampled": resampled,
                "events": events,
            }
        return self

    def observe(self, y_raw) -> "RunState":
        """Supply the real observation for the pending design and advance."""
        if self.status != STATUS_AWAITING:
            raise RuntimeError("no pending design awaiting an observation")
        self.model.validate_observation(y_raw)
        p = self.pending
        self._commit(
            p["iteration"],
            p["design"],
            y_raw,
            p["ratio_models"],
            p["bo"],
            p["ess_before"],
            p["resampled"],
            p["events"],
        )
        self.pending = None
        return self

    def _commit(self, k, design, y_raw, batch, bo_res, ess_before, resampled, events):
        self.model.validate_observation(y_raw)
        summary = self.model.summary_from_raw(y_raw)
        self.particles = belief_mod.update_weights(self.particles, batch, summary, events=events)
        entry = {
            "iteration": k,
            "design": design,
            "observation": _jsonable(y_raw),
            "observed_summary": np.asarray(summary, dtype=float).tolist(),
            "ess_before": ess_before,
            "resampled": resampled,
            "events": events,
            "ratio_models": batch.to_dict(),
            "bo": bo_res if isinstance(bo_res, dict) else _bo_to_dict(bo_res),
            "particles": self.particles.to_dict(),
        }
        self.history.append(entry)

    def run(self) -> "RunState":
        """Drive iterations until an observation is needed or the campaign is done."""
        while self.status == STATUS_RUNNING:
            self.run_iteration()
        return self

    # -- posterior summaries ---------------------------------------------

    def particles_at(self, iteration: Optional[int] = None) -> ParticleSet:
        """Particle snapshot after ``iteration`` completed steps (0 = prior)."""
        if iteration is None or iteration == self.iteration:
            return self.particles
        if iteration == 0:
            return ParticleSet.from_prior(
                self.model, self.config.n_particles, rng_for(self.config.seed, 0, _ROLE_PRIOR)
            )
        if not 1 <= iteration <= self.iteration:
            raise ValueError(f"iteration must be in [0, {self.iteration}]")
        return ParticleSet.from_dict(self.history[iteration - 1]["particles"])

    def summarize_posterior(
        self, iteration: Optional[int] = None, n_samples: int = 10_000, grid_size: int = 512
    ) -> dict:
        particles = self.particles_at(iteration)
        it = self.iteration if iteration is None else iteration
        rng = rng_for(self.config.seed, it, _ROLE_POSTERIOR)
        samples = particles.sample(n_samples, rng)
        out = {"iteration": it, "parameters": []}
        for j in range(particles.param_dim):
            out["parameters"].append(
                _marginal_summary(
                    samples[:, j], particles.bounds[j], self.model.param_names[j], grid_size
                )
            )
        return out

    # -- persistence -----------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "status": self.status,
            "iteration": self.iteration,
            "particles": self.particles.to_dict(),
            "history": self.history,
        }
        if self.pending is not None:
            p = dict(self.pending)
            p["ratio_models"] = p["ratio_models"].to_dict()
            d["pending"] = p
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunState":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported state schema version {d.get('schema_version')!r}")
        pending = d.get("pending")
        if pending is not None:
            pending = dict(pending)
            pending["ratio_models"] = RatioModelBatch.from_dict(pending["ratio_models"])
        return cls(
            config=RunConfig.from_dict(d["config"]),
            particles=ParticleSet.from_dict(d["particles"]),
            history=list(d["history"]),
            pending=pending,
        )

    def save(self, out_dir) -> None:
        """Write a manifest plus one JSON document per completed iteration."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        state = self.to_dict()
        history = state.pop("history")
        state["history_files"] = [f"iteration_{h['iteration']:03d}.json" for h in history]
        (out_dir / "manifest.json").write_text(json.dumps(state, sort_keys=True, indent=1))
        for h in history:
            path = out_dir / f"iteration_{h['iteration']:03d}.json"
            path.write_text(json.dumps(h, sort_keys=True))
            _write_csv_sidecars(out_dir, h)

    @classmethod
    def load(cls, out_dir) -> "RunState":
        out_dir = Path(out_dir)
        state = json.loads((out_dir / "manifest.json").read_text())
        history = [
            json.loads((out_dir / name).read_text()) for name in state.pop("history_files")
        ]
        state["history"] = history
        return cls.from_dict(state)


def _bo_to_dict(bo_res: BOResult) -> dict:
    return {
        "designs": [d for d, _ in bo_res.trace],
        "values": [v for _, v in bo_res.trace],
        "d_star": bo_res.d_star,
        "best_raw": bo_res.best_raw,
        "grid": np.asarray(bo_res.grid, dtype=float).tolist(),
        "grid_mean": np.asarray(bo_res.grid_mean, dtype=float).tolist(),
        "grid_var": np.asarray(bo_res.grid_var, dtype=float).tolist(),
        "hyperparams": {
            "lengthscale": bo_res.surrogate.lengthscale,
            "signal_var": bo_res.surrogate.signal_var,
            "noise_var": bo_res.surrogate.noise_var,
        },
    }


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (tuple, list, np.ndarray)):
        return [_jsonable(v) for v in value]
    return value


def _write_csv_sidecars(out_dir: Path, entry: dict) -> None:
    k = entry["iteration"]
    bo = entry["bo"]
    with open(out_dir / f"bo_trace_{k:03d}.csv", "w") as f:
        f.write("design,value\n")
        for d, v in zip(bo["designs"], bo["values"]):
            f.write(f"{d},{v}\n")
    with open(out_dir / f"surface_{k:03d}.csv", "w") as f:
        f.write("design,gp_mean,gp_var\n")
        for d, m, v in zip(bo["grid"], bo["grid_mean"], bo["grid_var"]):
            f.write(f"{d},{m},{v}\n")


def hpdi_from_grid(grid: np.ndarray, density: np.ndarray, mass: float = 0.95):
    """Narrowest contiguous interval on the grid holding the requested mass."""
    cell = density / density.sum()
    cum = np.concatenate([[0.0], np.cumsum(cell)])
    n = grid.size
    best = (0, n - 1)
    best_width = np.inf
    j = 0
    for i in range(n):
        j = max(j, i)
        while j < n and cum[j + 1] - cum[i] < mass:
            j += 1
        if j >= n:
            break
        width = grid[j] - grid[i]
        if width < best_width:
            best_width = width
            best = (i, j)
    return float(grid[best[0]]), float(grid[best[1]])


def _marginal_summary(samples: np.ndarray, bounds, name: str, grid_size: int) -> dict:
    lo = bounds[0] if np.isfinite(bounds[0]) else samples.min() - 3 * samples.std()
    hi = bounds[1] if np.isfinite(bounds[1]) else samples.max() + 3 * samples.std()
    grid = np.linspace(lo, hi, grid_size)
    spread = samples.std()
    if spread < 1e-12:
        # Degenerate belief: a point mass; report a spike at the sample value.
        density = np.zeros(grid_size)
        density[int(np.argmin(np.abs(grid - samples[0])))] = 1.0
        hpdi = (float(samples[0]), float(samples[0]))
    else:
        kde = gaussian_kde(samples, bw_method="silverman")
        density = kde(grid)
        hpdi = hpdi_from_grid(grid, density)
    return {
        "name": name,
        "mean": float(samples.mean()),
        "hpdi": [hpdi[0], hpdi[1]],
        "grid": grid.tolist(),
        "density": density.tolist(),
    }
