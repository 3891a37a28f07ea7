"""Command-line entry points for batch runs, the API server and dumps."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click
import numpy as np
import yaml

from .engine import RunConfig, RunState, rng_for
from .utilities import bd_opt, bd_opt_stable, estimate_mi, estimate_mi_weighted


def load_config(path) -> RunConfig:
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    return RunConfig.from_dict(data)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def run(config_path, out_dir):
    """Run a full campaign against the simulated oracle and persist the state."""
    config = load_config(config_path)
    state = RunState(config)
    while state.status == "running":
        state.run_iteration()
        if state.history:
            last = state.history[-1]
            click.echo(
                f"iteration {last['iteration']}: design={last['design']:.4g} "
                f"observation={last['observation']} ess={state.particles.ess:.1f}"
            )
        state.save(out_dir)
    if state.status == "awaiting_observation":
        click.echo(f"awaiting observation at design {state.pending_design}; serve to continue")
        state.save(out_dir)
    click.echo(f"state written to {out_dir}")


@main.command()
@click.option("--state", "state_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(state_dir, config_path, host, port):
    """Serve the campaign HTTP API (interactive mode)."""
    import uvicorn

    from .server import create_app

    state = None
    if config_path is not None:
        state = RunState(load_config(config_path))
        state.save(state_dir)
    app = create_app(state_dir, state=state)
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--design-grid", "grid_spec", required=True, help="lo:hi:n or comma list")
@click.option("--utility", "utility_kind", default=None, help="Override the configured utility.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", default=None, type=int)
def surface(config_path, grid_spec, utility_kind, out_path, seed):
    """Evaluate the configured utility on a design grid and dump CSV rows."""
    config = load_config(config_path)
    if seed is not None:
        config.seed = seed
    if utility_kind is not None:
        config.utility = utility_kind
    state = RunState(config)
    model, particles = state.model, state.particles
    lfire = config.lfire()
    n = config.mi_samples or config.n_particles

    if ":" in grid_spec:
        lo, hi, num = grid_spec.split(":")
        grid = np.linspace(float(lo), float(hi), int(num))
    else:
        grid = np.array([float(v) for v in grid_spec.split(",")])
    if hasattr(model.design_domain, "values"):
        grid = grid.round().astype(int)

    with open(out_path, "w") as f:
        f.write("design,value,n_dropped,seed\n")
        for i, d in enumerate(grid):
            rng = rng_for(config.seed, 1, 1, i)
            if config.utility == "mi":
                est = estimate_mi(d, particles, model, n, rng, lfire)
            elif config.utility == "mi_weighted":
                est = estimate_mi_weighted(d, particles, model, rng, lfire)
            elif config.utility == "bd_opt":
                est = bd_opt(d, particles, model, n, rng, lfire)
            else:
                est = bd_opt_stable(d, particles, model, n, rng, lfire)
            dropped = est.diagnostics.get("n_dropped", 0)
            f.write(f"{d},{est.value},{dropped},{config.seed}\n")
            click.echo(f"design {d}: {config.utility} = {est.value:.4f}")
    click.echo(f"surface written to {out_path}")


@main.command()
@click.option("--state", "state_dir", required=True, type=click.Path(exists=True))
@click.option("--iteration", default=None, type=int)
@click.option("--out", "out_path", default=None, type=click.Path())
def posterior(state_dir, iteration, out_path):
    """Dump the KDE/HPDI posterior summary for a completed iteration."""
    state = RunState.load(state_dir)
    summary = state.summarize_posterior(iteration)
    text = json.dumps(summary, indent=1)
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"posterior written to {out_path}")
    else:
        for p in summary["parameters"]:
            click.echo(
                f"{p['name']}: mean={p['mean']:.4g} "
                f"95% HPDI=[{p['hpdi'][0]:.4g}, {p['hpdi'][1]:.4g}]"
            )


if __name__ == "__main__":
    main()
