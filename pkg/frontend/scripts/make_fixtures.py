"""Capture API fixtures for the UI test suite from a pipeline snapshot.

Usage: python3 scripts/make_fixtures.py <snapshot_dir> [out_dir]

The fixtures are real service responses, so the tests exercise the exact
wire format the UI sees in production.
"""

import json
import sys
from pathlib import Path

from fastapi.testclient import TestClient

from airtwin.service import create_app


def main() -> int:
    snapshot = sys.argv[1]
    out = Path(sys.argv[2] if len(sys.argv) > 2 else Path(__file__).parent.parent / "tests" / "fixtures")
    out.mkdir(parents=True, exist_ok=True)

    app = create_app(snapshot_dir=snapshot)
    with TestClient(app) as client:
        dump(out / "zones.json", client.get("/api/zones").json())
        dump(out / "catalog.json", client.get("/api/catalog").json())
        dump(out / "policy.json", client.get("/api/policy").json())

        baseline = client.post("/api/scenarios", json={"perturbations": []}).json()
        dump(out / "eval_baseline.json", baseline)

        slider = client.post(
            "/api/scenarios",
            json={
                "scenario_id": "slider-road-up",
                "perturbations": [
                    {"feature": "road_density", "op": "scale", "amount": 1.5}
                ],
            },
        ).json()
        dump(out / "eval_slider.json", slider)

        boundary = client.post(
            "/api/scenarios",
            json={
                "scenario_id": "boundary-crossing",
                "perturbations": [
                    {"feature": "building_density", "op": "scale", "amount": 0.5}
                ],
            },
        ).json()
        assert boundary.get("changed_zones"), "no boundary-crossing scenario found"
        dump(out / "eval_boundary.json", boundary)

        error = client.post(
            "/api/scenarios",
            json={"perturbations": [{"feature": "ghost", "op": "set", "amount": 1.0}]},
        )
        dump(out / "error_unknown_feature.json", {"status": error.status_code, **error.json()})
    print(f"fixtures written to {out}")
    return 0


def dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    raise SystemExit(main())
