"""Command line front end: ``epshape run | verify | stability``.

Exit codes: 0 success, 1 a verify property failed, 2 invalid scenario or
usage, 3 numerical failure, 4 the requested point is not an equilibrium.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from epshape.control import ClosedLoop, ControllerId
from epshape.errors import EpshapeError, NoConvergence, NonFiniteState, NotAnEquilibrium, ScenarioInvalid
from epshape.scenario import Scenario, digest, load_scenario
from epshape.sim import linearize, reconstruct, simulate, stability, transport_r3, transport_r4
from epshape.systems import SystemId
from epshape.verify import DEFAULT_SEED, run_properties

EXIT_OK, EXIT_PROPERTY, EXIT_INVALID, EXIT_NUMERICAL, EXIT_NOT_EQUILIBRIUM = 0, 1, 2, 3, 4
SEED_ENV = "EPSHAPE_SEED"


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _err(msg: str) -> None:
    print(f"epshape: {msg}", file=sys.stderr)


def _load(path: str) -> Scenario:
    sc = load_scenario(path)
    for w in sc.warnings:
        _err(f"warning: {w}")
    return sc


# ---------------------------------------------------------------------------
# run


def trajectory_csv(traj) -> str:
    cols = ["t"] + traj.columns
    blocks = [traj.times[:, None], traj.states]
    if traj.rotations is not None:
        cols += [f"R_{i}{j}" for i in range(1, 4) for j in range(1, 4)] + ["x_x", "x_y", "x_z"]
        blocks += [traj.rotations.reshape(len(traj), 9), traj.translations]
    data = np.hstack(blocks)
    lines = [",".join(cols)]
    lines += [",".join(format(v, ".17g") for v in row) for row in data.tolist()]
    return "\n".join(lines) + "\n"


def _transport_residuals(traj) -> dict:
    s = traj.loop.layout.slices()
    y0 = traj.states[0]
    out = {}
    if "theta" in s:
        out["Theta"] = transport_r3(traj.rotations, y0[s["theta"]]) - traj.field("theta")
    if traj.loop.system is SystemId.HeavyTopMovableBase:
        out["Gamma_h"] = transport_r4(traj.rotations, traj.translations, y0[s["a"]]) - traj.field("a")
    else:
        out["Gamma"] = transport_r3(traj.rotations, y0[s["a"]]) - traj.field("a")
    for k in ("delta1", "delta2"):
        if k in s:
            out[k] = transport_r4(traj.rotations, traj.translations, y0[s[k]]) - traj.field(k)
    return {k: float(np.max(np.abs(v))) for k, v in out.items()}


def cmd_run(args) -> int:
    try:
        sc = _load(args.scenario)
    except ScenarioInvalid as exc:
        _err(f"invalid scenario: {exc}")
        return EXIT_INVALID
    out_dir = Path(args.out) if args.out else Path.cwd()
    outputs = list(sc.outputs) or []
    csv_paths = [out_dir / o.path for o in outputs if o.format == "csv"] or [out_dir / "trajectory.csv"]
    json_paths = [out_dir / o.path for o in outputs if o.format == "json"] or [out_dir / "report.json"]
    report = {
        "scenario": Path(args.scenario).name,
        "digest": digest(sc),
        "system": sc.system.value,
        "controller": sc.controller.value,
        "warnings": list(sc.warnings),
    }
    try:
        traj = simulate(sc)
        if args.reconstruct:
            reconstruct(traj, sc.pose)
    except (NonFiniteState, FloatingPointError) as exc:
        _err(f"numerical failure: {exc}")
        report.update(exit_status=EXIT_NUMERICAL, error=str(exc))
        for p in json_paths:
            write_atomic(p, _dump(report))
        return EXIT_NUMERICAL
    except EpshapeError as exc:
        _err(f"invalid scenario: {exc}")
        return EXIT_INVALID
    report.update(
        samples=len(traj),
        t_final=float(traj.times[-1]),
        step=sc.integrator.effective_step,
        conservation=traj.conservation_table(),
    )
    if traj.rotations is not None:
        report["reconstruction"] = {
            "max_orthogonality_residual": float(np.max(traj.orthogonality)),
            "transport_max_deviation": _transport_residuals(traj),
        }
    report["exit_status"] = EXIT_OK
    text = trajectory_csv(traj)
    for p in csv_paths:
        write_atomic(p, text)
    for p in json_paths:
        write_atomic(p, _dump(report))
    print(f"wrote {', '.join(str(p) for p in csv_paths + json_paths)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def resolve_seed(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env)
    return DEFAULT_SEED


def cmd_verify(args) -> int:
    try:
        seed = resolve_seed(args.seed)
    except ValueError:
        _err(f"{SEED_ENV} must be an integer")
        return EXIT_INVALID
    results = run_properties(seed, args.filter, frozenset(args.mutate or ()))
    if not results:
        _err(f"no property matches filter {args.filter!r}")
        return EXIT_INVALID
    ok = all(r.passed for r in results)
    report = {
        "seed": seed,
        "filter": args.filter,
        "passed": ok,
        "properties": [r.to_dict() for r in results],
    }
    if args.mutate:
        report["mutated_terms"] = sorted(args.mutate)
    text = _dump(report)
    if args.report:
        write_atomic(Path(args.report), text)
    else:
        sys.stdout.write(text)
    for r in results:
        if not r.passed:
            _err(f"property failed: {r.name} (residual {r.residual:.3g} >= {r.tolerance:g}) {r.detail}".rstrip())
    return EXIT_OK if ok else EXIT_PROPERTY


# ---------------------------------------------------------------------------
# stability


def cmd_stability(args) -> int:
    try:
        sc = _load(args.scenario)
    except ScenarioInvalid as exc:
        _err(f"invalid scenario: {exc}")
        return EXIT_INVALID
    if sc.system is not SystemId.UnderwaterVehicle or sc.desired is None:
        _err("invalid scenario: desired: stability needs the vehicle with a desired motion")
        return EXIT_INVALID
    loop = sc.closed_loop()
    try:
        if sc.controller is ControllerId.NONE:
            # probe the uncontrolled vehicle at the controlled steady motion
            target = ClosedLoop(sc.inertia, sc.system, ControllerId.UWV_STEADY, sc.gains, sc.desired)
            linearize(loop.rhs, target.equilibrium()[: loop.layout.dim])
        rep = stability(loop)
    except NotAnEquilibrium as exc:
        _err(f"not an equilibrium: {exc}")
        return EXIT_NOT_EQUILIBRIUM
    except (NonFiniteState, NoConvergence) as exc:
        _err(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    report = {"scenario": Path(args.scenario).name, "digest": digest(sc), "warnings": list(sc.warnings)}
    report.update(rep.to_dict())
    text = _dump(report)
    if args.report:
        write_atomic(Path(args.report), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epshape", description="Simulate and check potential-shaping controllers on SE(3)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Integrate a scenario and write trajectory CSV plus a JSON report")
    run.add_argument("scenario", help="Path to the scenario JSON file")
    run.add_argument("--out", help="Directory for output files (default: current directory)")
    run.add_argument("--reconstruct", action="store_true", help="Also reconstruct R(t), x(t) and check transport")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="Run the seeded property suite")
    ver.add_argument("--filter", help="Only run properties whose name contains this text")
    ver.add_argument("--seed", type=int, help=f"Random seed (default: ${SEED_ENV} or {DEFAULT_SEED})")
    ver.add_argument("--report", help="Write the JSON report here instead of stdout")
    # test hook: reverse the sign of the named control term(s)
    ver.add_argument("--mutate", action="append", choices=["gravity", "heading", "drift", "base"], help=argparse.SUPPRESS)
    ver.set_defaults(func=cmd_verify)

    stab = sub.add_parser("stability", help="Linearize at the desired steady motion and classify the spectrum")
    stab.add_argument("scenario", help="Path to the scenario JSON file")
    stab.add_argument("--report", help="Write the JSON report here instead of stdout")
    stab.set_defaults(func=cmd_stability)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
