"""Implicit simulator models: priors, forward simulation and summary statistics.

Each model exposes a samplable prior over its parameters, a stochastic forward
simulator at a given design (a measurement time or frame index), and a fixed
summary-statistic map. Simulators are pure functions of (parameters, design,
RNG stream), so they are safe to call concurrently with independent streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cell_kernel import simulate_cell_grid


@dataclass(frozen=True)
class ContinuousDomain:
    """Continuous design interval [lo, hi]."""

    lo: float
    hi: float

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, d) -> bool:
        return self.lo <= d <= self.hi

    def clip(self, d):
        return min(max(d, self.lo), self.hi)


@dataclass(frozen=True)
class DiscreteDomain:
    """Discrete design set, e.g. frame indices {1, ..., m}."""

    values: tuple

    @property
    def lo(self):
        return self.values[0]

    @property
    def hi(self):
        return self.values[-1]

    @property
    def width(self):
        return self.hi - self.lo

    def contains(self, d) -> bool:
        return d in self.values


@dataclass
class SimOutput:
    """A single forward-simulation draw: raw observation plus its summaries."""

    raw: object
    summary: np.ndarray


class ImplicitModel:
    """Base interface shared by all simulators."""

    name: str
    param_dim: int
    summary_dim: int
    param_names: tuple

    @property
    def param_bounds(self) -> np.ndarray:
        """Prior support as a (param_dim, 2) array; +/-inf where unbounded."""
        raise NotImplementedError

    @property
    def design_domain(self):
        raise NotImplementedError

    def sample_prior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def simulate(self, theta, d, rng: np.random.Generator) -> SimOutput:
        raise NotImplementedError

    def simulate_summaries(self, thetas: np.ndarray, d, rng: np.random.Generator) -> np.ndarray:
        """One draw per row of ``thetas`` at design ``d``; returns (B, summary_dim)."""
        raise NotImplementedError

    def summary_from_raw(self, raw) -> np.ndarray:
        raise NotImplementedError

    def validate_observation(self, raw):
        """Raise ValueError if ``raw`` violates the model's observation schema."""
        raise NotImplementedError

    def default_theta_true(self) -> np.ndarray:
        raise NotImplementedError

    def _check_design(self, d):
        if not self.design_domain.contains(d):
            raise ValueError(f"design {d!r} outside domain of model {self.name!r}")


class OscillationModel(ImplicitModel):
    """Noisy measurements of a stationary sinusoid; one frequency parameter."""

    name = "oscillation"
    param_dim = 1
    summary_dim = 3
    param_names = ("omega",)

    def __init__(self, noise: float = 0.1, t_max: float = 2.0 * math.pi):
        self.noise = noise
        self._domain = ContinuousDomain(0.0, t_max)

    @property
    def param_bounds(self):
        return np.array([[0.0, math.pi]])

    @property
    def design_domain(self):
        return self._domain

    def sample_prior(self, n, rng):
        return rng.uniform(0.0, math.pi, size=(n, 1))

    def simulate_summaries(self, thetas, d, rng):
        self._check_design(d)
        omega = np.atleast_2d(thetas)[:, 0]
        y = np.sin(omega * d) + self.noise * rng.standard_normal(omega.shape[0])
        return np.column_stack([y, y**2, y**3])

    def simulate(self, theta, d, rng):
        s = self.simulate_summaries(np.atleast_2d(theta), d, rng)[0]
        return SimOutput(raw=float(s[0]), summary=s)

    def summary_from_raw(self, raw):
        y = float(raw)
        return np.array([y, y**2, y**3])

    def validate_observation(self, raw):
        y = float(raw)
        if not np.isfinite(y):
            raise ValueError("oscillation observation must be a finite scalar")

    def default_theta_true(self):
        return np.array([0.5])

    def log_likelihood(self, raw, thetas, d):
        """Exact log density of the scalar observation; vectorized over thetas."""
        omega = np.atleast_2d(thetas)[:, 0]
        mu = np.sin(omega * d)
        z = (float(raw) - mu) / self.noise
        return -0.5 * z**2 - math.log(self.noise) - 0.5 * math.log(2.0 * math.pi)

    def sample_exact(self, thetas, d, rng):
        """Draw raw observations from the exact likelihood (same as the simulator)."""
        omega = np.atleast_2d(thetas)[:, 0]
        return np.sin(omega * d) + self.noise * rng.standard_normal(omega.shape[0])


class DeathModel(ImplicitModel):
    """Binomial tau-leaping pure-death (infection) process with one rate parameter."""

    name = "death"
    param_dim = 1
    summary_dim = 3
    param_names = ("b",)

    def __init__(self, n_pop: int = 50, dt: float = 0.01, t_max: float = 4.0):
        self.n_pop = n_pop
        self.dt = dt
        self._domain = ContinuousDomain(0.0, t_max)

    @property
    def param_bounds(self):
        return np.array([[0.0, np.inf]])

    @property
    def design_domain(self):
        return self._domain

    def sample_prior(self, n, rng):
        # Normal(1, 1) truncated to b > 0, via rejection.
        out = np.empty(n)
        filled = 0
        while filled < n:
            draw = rng.normal(1.0, 1.0, size=n - filled)
            draw = draw[draw > 0.0]
            out[filled : filled + draw.size] = draw
            filled += draw.size
        return out.reshape(-1, 1)

    def _simulate_counts(self, bs, tau, rng):
        steps = int(round(tau / self.dt))
        p = -np.expm1(-np.asarray(bs, dtype=float) * self.dt)
        infected = np.zeros(p.shape[0], dtype=np.int64)
        for _ in range(steps):
            infected += rng.binomial(self.n_pop - infected, p)
        return infected

    def simulate_summaries(self, thetas, d, rng):
        self._check_design(d)
        infected = self._simulate_counts(np.atleast_2d(thetas)[:, 0], d, rng).astype(float)
        return np.column_stack([infected, infected**2, infected**3])

    def simulate(self, theta, d, rng):
        s = self.simulate_summaries(np.atleast_2d(theta), d, rng)[0]
        return SimOutput(raw=int(s[0]), summary=s)

    def summary_from_raw(self, raw):
        i = float(raw)
        return np.array([i, i**2, i**3])

    def validate_observation(self, raw):
        i = int(raw)
        if not 0 <= i <= self.n_pop:
            raise ValueError(f"death observation must be an integer in [0, {self.n_pop}]")

    def default_theta_true(self):
        return np.array([1.5])

    def log_likelihood(self, raw, thetas, d):
        """Exact log pmf of I(tau): I ~ Bin(n_pop, 1 - exp(-b tau))."""
        from scipy import stats

        b = np.atleast_2d(thetas)[:, 0]
        p = -np.expm1(-b * d)
        return stats.binom.logpmf(int(raw), self.n_pop, p)

    def sample_exact(self, thetas, d, rng):
        b = np.atleast_2d(thetas)[:, 0]
        p = -np.expm1(-b * d)
        return rng.binomial(self.n_pop, p)


class SIRModel(ImplicitModel):
    """Binomial tau-leaping SIR epidemic with infection and recovery rates."""

    name = "sir"
    param_dim = 2
    summary_dim = 9
    param_names = ("beta", "gamma")

    def __init__(self, n_pop: int = 50, dt: float = 0.01, t_max: float = 10.0):
        self.n_pop = n_pop
        self.dt = dt
        self._domain = ContinuousDomain(0.0, t_max)

    @property
    def param_bounds(self):
        return np.array([[0.0, 0.5], [0.0, 0.5]])

    @property
    def design_domain(self):
        return self._domain

    def sample_prior(self, n, rng):
        return rng.uniform(0.0, 0.5, size=(n, 2))

    def _simulate_states(self, thetas, tau, rng):
        thetas = np.atleast_2d(thetas)
        beta, gamma = thetas[:, 0], thetas[:, 1]
        steps = int(round(tau / self.dt))
        n = thetas.shape[0]
        sus = np.full(n, self.n_pop - 1, dtype=np.int64)
        inf = np.ones(n, dtype=np.int64)
        rec = np.zeros(n, dtype=np.int64)
        for _ in range(steps):
            p_inf = np.clip(beta * inf / self.n_pop, 0.0, 1.0)
            d_inf = rng.binomial(sus, p_inf)
            d_rec = rng.binomial(inf, gamma)
            sus -= d_inf
            inf += d_inf - d_rec
            rec += d_rec
        return sus, inf, rec

    @staticmethod
    def _summaries(inf, rec):
        i = inf.astype(float)
        r = rec.astype(float)
        return np.column_stack([i, i**2, i**3, r, r**2, r**3, i * r, i**2 * r, i * r**2])

    def simulate_summaries(self, thetas, d, rng):
        self._check_design(d)
        _, inf, rec = self._simulate_states(thetas, d, rng)
        return self._summaries(inf, rec)

    def simulate(self, theta, d, rng):
        self._check_design(d)
        sus, inf, rec = self._simulate_states(np.atleast_2d(theta), d, rng)
        raw = (int(sus[0]), int(inf[0]), int(rec[0]))
        return SimOutput(raw=raw, summary=self._summaries(inf, rec)[0])

    def summary_from_raw(self, raw):
        _, inf, rec = raw
        return self._summaries(np.array([inf]), np.array([rec]))[0]

    def validate_observation(self, raw):
        if len(raw) != 3:
            raise ValueError("SIR observation must be a (S, I, R) triple")
        s, i, r = (int(v) for v in raw)
        if min(s, i, r) < 0:
            raise ValueError("SIR populations must be non-negative")
        if s + i + r != self.n_pop:
            raise ValueError(f"SIR populations must sum to {self.n_pop}")

    def default_theta_true(self):
        return np.array([0.15, 0.05])


class CellModel(ImplicitModel):
    """Lattice exclusion process of cell motility and proliferation on a grid.

    Cells live on a rows x cols grid, initially placed uniformly without
    collision in the top ``init_rows`` rows. Each discrete step, every cell (in
    uniformly shuffled order) attempts a move to a uniformly chosen von Neumann
    neighbour with probability pm, then attempts to spawn a new cell into a
    uniformly chosen neighbour with probability pp; attempts into occupied or
    out-of-grid sites fail silently. The design is the frame index to observe,
    frame 1 being the initial grid.
    """

    name = "cell"
    param_dim = 2
    summary_dim = 2
    param_names = ("pm", "pp")

    def __init__(
        self,
        rows: int = 27,
        cols: int = 36,
        n_init: int = 110,
        n_frames: int = 145,
        init_rows: Optional[int] = None,
        pp_max: float = 0.005,
    ):
        self.rows = rows
        self.cols = cols
        self.n_init = n_init
        self.n_frames = n_frames
        self.init_rows = init_rows if init_rows is not None else max(1, round(rows * 10 / 27))
        self.pp_max = pp_max
        if self.n_init > self.init_rows * self.cols:
            raise ValueError("initial cells do not fit in the seeded rows")
        self._domain = DiscreteDomain(tuple(range(1, n_frames + 1)))

    @property
    def param_bounds(self):
        return np.array([[0.0, 1.0], [0.0, self.pp_max]])

    @property
    def design_domain(self):
        return self._domain

    def sample_prior(self, n, rng):
        pm = rng.uniform(0.0, 1.0, size=n)
        pp = rng.uniform(0.0, self.pp_max, size=n)
        return np.column_stack([pm, pp])

    def simulate_summaries(self, thetas, d, rng):
        self._check_design(d)
        thetas = np.atleast_2d(thetas)
        seeds = rng.integers(0, 2**31 - 1, size=thetas.shape[0])
        out = np.empty((thetas.shape[0], 2))
        for i in range(thetas.shape[0]):
            ham, count = simulate_cell_grid(
                self.rows,
                self.cols,
                self.init_rows,
                self.n_init,
                float(thetas[i, 0]),
                float(thetas[i, 1]),
                int(d) - 1,
                int(seeds[i]),
            )
            out[i, 0] = ham
            out[i, 1] = count
        return out

    def simulate(self, theta, d, rng):
        s = self.simulate_summaries(np.atleast_2d(theta), d, rng)[0]
        return SimOutput(raw=(int(s[0]), int(s[1])), summary=s)

    def summary_from_raw(self, raw):
        ham, count = raw
        return np.array([float(ham), float(count)])

    def validate_observation(self, raw):
        if len(raw) != 2:
            raise ValueError("cell observation must be a (hamming, count) pair")
        ham, count = (int(v) for v in raw)
        if ham < 0:
            raise ValueError("Hamming distance must be non-negative")
        if count < self.n_init:
            raise ValueError(f"cell count must be at least {self.n_init}")

    def default_theta_true(self):
        return np.array([0.35, 0.001])


_MODELS = {
    "oscillation": OscillationModel,
    "death": DeathModel,
    "sir": SIRModel,
    "cell": CellModel,
}


def make_model(name: str, **overrides) -> ImplicitModel:
    """Instantiate a model by name with optional constructor overrides."""
    try:
        cls = _MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(_MODELS)}") from None
    return cls(**overrides)
