"""The command line front end on the shipped scenarios."""

import json
import tempfile
from pathlib import Path

from epshape.cli import main
from epshape.scenario import fixture_path

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp)
    code = main(["run", str(fixture_path("uwv_drift.json")), "--out", tmp, "--reconstruct"])
    report = json.loads((out / "uwv_drift_report.json").read_text())
    print("run exit", code, "samples", report["samples"])
    print("transport deviations", report["reconstruction"]["transport_max_deviation"])

    for name in ("uwv_steady_stable", "uwv_steady_violated", "uwv_uncontrolled"):
        path = out / f"{name}_stability.json"
        code = main(["stability", str(fixture_path(name + ".json")), "--report", str(path)])
        cls = json.loads(path.read_text())["classification"] if code == 0 else "-"
        print(f"stability {name}: exit {code} {cls}")

    print("verify exit", main(["verify", "--filter", "casimir", "--report", str(out / "verify.json")]))
