"""JSON-over-HTTP API exposing a campaign to interactive clients.

A single writer mutates the run state; mutating requests are serialized
through one lock while reads serve snapshots. The dashboard consumes this API
exclusively and performs no inference of its own.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .engine import RunConfig, RunState


class ObserveRequest(BaseModel):
    y: object


class ResetRequest(BaseModel):
    config: dict


def create_app(state_dir, state: Optional[RunState] = None) -> FastAPI:
    state_dir = Path(state_dir)
    app = FastAPI(title="seqdesign")
    lock = threading.Lock()

    holder = {"state": state}
    if holder["state"] is None and (state_dir / "manifest.json").exists():
        holder["state"] = RunState.load(state_dir)

    def require_state() -> RunState:
        if holder["state"] is None:
            raise HTTPException(status_code=409, detail="no campaign loaded; POST /reset first")
        return holder["state"]

    def persist():
        holder["state"].save(state_dir)

    @app.get("/state")
    def get_state():
        s = require_state()
        model = s.model
        domain = model.design_domain
        return {
            "status": s.status,
            "iteration": s.iteration,
            "n_iterations": s.config.n_iterations,
            "model": model.name,
            "param_names": list(model.param_names),
            "oracle": s.config.oracle,
            "theta_true": (
                s.config.resolved_theta_true(model).tolist()
                if s.config.oracle == "simulated"
                else None
            ),
            "design_domain": {
                "kind": "discrete" if hasattr(domain, "values") else "continuous",
                "lo": float(domain.lo),
                "hi": float(domain.hi),
            },
            "pending_design": s.pending_design,
            "ess": s.particles.ess,
            "n_particles": len(s.particles),
            "history": [
                {
                    "iteration": h["iteration"],
                    "design": h["design"],
                    "observation": h["observation"],
                    "ess_before": h["ess_before"],
                    "resampled": h["resampled"],
                }
                for h in s.history
            ],
            "timestamp": time.time(),
        }

    @app.get("/posterior")
    def get_posterior(iteration: Optional[int] = None):
        s = require_state()
        try:
            summary = s.summarize_posterior(iteration)
        except ValueError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        summary["prior"] = s.summarize_posterior(0)["parameters"]
        summary["theta_true"] = (
            s.config.resolved_theta_true(s.model).tolist()
            if s.config.oracle == "simulated"
            else None
        )
        return summary

    @app.get("/surface")
    def get_surface(iteration: Optional[int] = None):
        s = require_state()
        if iteration is not None:
            it = iteration
        else:
            it = s.iteration + 1 if s.pending is not None else s.iteration
        if s.pending is not None and it == s.iteration + 1:
            bo = s.pending["bo"]
        elif 1 <= it <= s.iteration:
            bo = s.history[it - 1]["bo"]
        else:
            raise HTTPException(status_code=404, detail=f"no surface for iteration {it}")
        return {"iteration": it, **bo}

    @app.post("/step")
    def post_step():
        s = require_state()
        with lock:
            if s.status == "done":
                raise HTTPException(status_code=409, detail="campaign is complete")
            if s.status == "awaiting_observation":
                raise HTTPException(status_code=409, detail="awaiting an observation")
            s.run()
            persist()
        return {"status": s.status, "iteration": s.iteration, "pending_design": s.pending_design}

    @app.post("/observe")
    def post_observe(req: ObserveRequest):
        s = require_state()
        with lock:
            if s.status != "awaiting_observation":
                raise HTTPException(status_code=409, detail="no pending design")
            try:
                s.observe(req.y)
            except (ValueError, TypeError) as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            persist()
        return {"status": s.status, "iteration": s.iteration}

    @app.post("/reset")
    def post_reset(req: ResetRequest):
        with lock:
            try:
                config = RunConfig.from_dict(req.config)
            except (TypeError, ValueError) as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            holder["state"] = RunState(config)
            persist()
        return {"status": holder["state"].status, "iteration": 0}

    return app
