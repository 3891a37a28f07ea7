"""Record real engine API payloads as JSON fixtures for contract tests.

Run from the repository root with the Python package installed:

    python3 frontend/scripts/record_fixtures.py

The fixtures pin the exact wire shapes the dashboard was developed against;
the contract tests fail if either side drifts.
"""

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from seqdesign.engine import RunConfig, RunState
from seqdesign.server import create_app

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def dump(name: str, payload) -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / name).write_text(json.dumps(payload, indent=2) + "\n")
    print(f"wrote {name}")


def main() -> None:
    config = RunConfig(
        model="oscillation",
        n_particles=60,
        n_iterations=2,
        mi_samples=40,
        n_like=40,
        n_marginal=40,
        bo_budget=6,
        seed=7,
    )
    with tempfile.TemporaryDirectory() as tmp:
        client = TestClient(create_app(tmp, RunState(config)))
        dump("state_fresh.json", client.get("/state").json())
        client.post("/step")
        dump("state_running.json", client.get("/state").json())
        dump("posterior.json", client.get("/posterior").json())
        dump("surface.json", client.get("/surface").json())
        dump("error_409.json", client.post("/observe", json={"y": 1.0}).json())

    interactive = RunConfig(
        model="death",
        oracle="interactive",
        n_particles=60,
        n_iterations=2,
        mi_samples=40,
        n_like=40,
        n_marginal=40,
        bo_budget=6,
        seed=7,
    )
    with tempfile.TemporaryDirectory() as tmp:
        client = TestClient(create_app(tmp, RunState(interactive)))
        client.post("/step")
        dump("state_awaiting.json", client.get("/state").json())


if __name__ == "__main__":
    main()
