"""Scenario files: JSON parsing, validation and canonical serialization.

A scenario looks like::

    {
      "system": "UnderwaterVehicle",
      "controller": "UwvSteady",
      "inertia": {"J": [[3,0,0],[0,2,0],[0,0,1]], "D": [[0,0,0],[0,0,0],[0,0,0]],
                  "M": [[1.2,0,0],[0,1.5,0],[0,0,2]], "m": 1.0, "m_total": 3.0,
                  "g": 9.81, "l": 0.1019367991845056, "chi": [0,0,1]},
      "gains": {"alpha": 25.0, "beta": 1.0, "K": [[2,0],[0,1]]},
      "desired": {"R_d": [[1,0,0],[0,1,0],[0,0,1]], "v_d": [0.5,0,0.5]},
      "initial": {"at_equilibrium": true, "offset": {"Omega": [0.05,0,0]}},
      "integrator": {"step": 0.001, "t_final": 10.0, "method": "RK4"},
      "outputs": [{"format": "csv", "path": "trajectory.csv"},
                  {"format": "json", "path": "report.json"}]
    }

``initial`` is either explicit (``Omega``, ``v``, ``Gamma``, and as the
model needs ``h``, ``Theta``, ``Delta1``, ``Delta2``) or the desired steady
motion plus an ``offset`` with any of those keys.  An optional ``pose``
``{"R": ..., "x": ...}`` gives s(0) for reconstruction (identity by default).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from epshape.algebra import AlgebraVector, SE3Element
from epshape.control import ClosedLoop, ControllerId, DesiredMotion, Gains, stability_warnings
from epshape.errors import EpshapeError, ParseError, ScenarioInvalid
from epshape.sim import IntegratorConfig
from epshape.systems import InertiaParams, ReducedState, SystemId

STATE_KEYS = ("Omega", "v", "Gamma", "h", "Theta", "Delta1", "Delta2")
_WIDTH = {"Omega": 3, "v": 3, "Gamma": 3, "h": None, "Theta": 3, "Delta1": 4, "Delta2": 4}
OUTPUT_FORMATS = ("csv", "json")


@dataclass(frozen=True)
class InitialCondition:
    """Explicit initial values, or offsets from the desired steady motion."""

    values: dict
    at_equilibrium: bool = False


@dataclass(frozen=True)
class OutputSpec:
    format: str
    path: str


@dataclass(frozen=True)
class Scenario:
    system: SystemId
    controller: ControllerId
    inertia: InertiaParams
    gains: Gains
    desired: DesiredMotion | None
    initial: InitialCondition
    integrator: IntegratorConfig
    outputs: tuple[OutputSpec, ...] = ()
    pose: SE3Element = field(default_factory=SE3Element.identity)
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def closed_loop(self, flip=frozenset()) -> ClosedLoop:
        return ClosedLoop(self.inertia, self.system, self.controller, self.gains, self.desired, flip=flip)

    def initial_state(self, loop: ClosedLoop | None = None) -> ReducedState:
        loop = loop or self.closed_loop()
        vals = self.initial.values
        if self.initial.at_equilibrium:
            base = _equilibrium_for(self, loop)
            fields_ = _state_dict(base)
            for k, off in vals.items():
                fields_[k] = np.asarray(fields_[k]) + np.asarray(off)
            vals = fields_
        return _to_state(vals, self.system)

    def initial_vector(self, loop: ClosedLoop | None = None) -> np.ndarray:
        loop = loop or self.closed_loop()
        return loop.layout.pack(self.inertia, self.initial_state(loop))


def _equilibrium_for(sc: Scenario, loop: ClosedLoop) -> ReducedState:
    if sc.controller is ControllerId.NONE:
        # the uncontrolled vehicle started at the controlled loop's steady motion
        e = ClosedLoop(sc.inertia, sc.system, ControllerId.UWV_STEADY, sc.gains, sc.desired).equilibrium_state()
        return ReducedState(e.xi, a_r3=e.a_r3)
    return loop.equilibrium_state()


def _state_dict(s: ReducedState) -> dict:
    out = {"Omega": s.xi.omega, "v": s.xi.vel}
    if s.a_r3 is not None:
        out["Gamma"] = s.a_r3
    if s.theta is not None:
        out["Theta"] = s.theta
    if s.deltas is not None:
        out["Delta1"], out["Delta2"] = s.deltas
    return out


def _to_state(vals: dict, system: SystemId) -> ReducedState:
    xi = AlgebraVector(vals["Omega"], vals["v"])
    kw = {}
    if system is SystemId.HeavyTopMovableBase:
        kw["a_r4"] = np.append(vals["Gamma"], vals["h"])
    else:
        kw["a_r3"] = vals["Gamma"]
    if "Theta" in vals:
        kw["theta"] = vals["Theta"]
    if "Delta1" in vals:
        kw["deltas"] = (vals["Delta1"], vals["Delta2"])
    return ReducedState(xi, **kw)


# ---------------------------------------------------------------------------
# parsing


def _get(obj: dict, key: str, path: str, default=...):
    if not isinstance(obj, dict):
        raise ScenarioInvalid("expected an object", path)
    if key not in obj:
        if default is ...:
            raise ScenarioInvalid("required field is missing", f"{path}.{key}" if path else key)
        return default
    return obj[key]


def _num(x, path: str, finite=True) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ScenarioInvalid(f"expected a number, got {type(x).__name__}", path)
    x = float(x)
    if finite and not np.isfinite(x):
        raise ScenarioInvalid("must be finite", path)
    return x


def _array(x, shape, path: str, finite=True) -> np.ndarray:
    try:
        arr = np.array(x, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioInvalid(f"expected a numeric array of shape {shape}", path) from None
    if arr.shape != shape or (isinstance(x, (str, bytes))):
        raise ScenarioInvalid(f"expected shape {shape}, got {arr.shape}", path)
    if finite and not np.all(np.isfinite(arr)):
        raise ScenarioInvalid("entries must be finite", path)
    return arr


def _enum(cls, value, path):
    try:
        return cls(value)
    except ValueError:
        allowed = ", ".join(m.value for m in cls)
        raise ScenarioInvalid(f"unknown value {value!r}; expected one of {allowed}", path) from None


def _check_keys(obj: dict, allowed, path: str):
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ScenarioInvalid(f"unknown field '{extra[0]}'", f"{path}.{extra[0]}" if path else extra[0])


def _parse_inertia(obj) -> InertiaParams:
    _check_keys(obj, ("J", "D", "M", "m", "m_total", "g", "l", "chi"), "inertia")
    kw = dict(
        j_block=_array(_get(obj, "J", "inertia"), (3, 3), "inertia.J"),
        d_block=_array(_get(obj, "D", "inertia", [[0.0] * 3] * 3), (3, 3), "inertia.D"),
        m_block=_array(_get(obj, "M", "inertia"), (3, 3), "inertia.M"),
        m_body=_num(_get(obj, "m", "inertia"), "inertia.m"),
        m_total=_num(_get(obj, "m_total", "inertia", 0.0), "inertia.m_total"),
        g=_num(_get(obj, "g", "inertia"), "inertia.g"),
        l=_num(_get(obj, "l", "inertia"), "inertia.l"),
        chi=_array(_get(obj, "chi", "inertia"), (3,), "inertia.chi"),
    )
    chi = kw["chi"]
    if abs(np.linalg.norm(chi) - 1.0) > 1e-9:
        raise ScenarioInvalid(f"must be a unit vector (norm {np.linalg.norm(chi):.12g})", "inertia.chi")
    if kw["m_body"] < 0:
        raise ScenarioInvalid("must be nonnegative", "inertia.m")
    try:
        return InertiaParams(**kw)
    except EpshapeError as exc:
        raise ScenarioInvalid(str(exc), "inertia") from exc


def _parse_initial(obj, system: SystemId, controller: ControllerId, has_desired: bool) -> InitialCondition:
    if not isinstance(obj, dict):
        raise ScenarioInvalid("expected an object", "initial")
    if obj.get("at_equilibrium", False):
        _check_keys(obj, ("at_equilibrium", "offset"), "initial")
        if system is not SystemId.UnderwaterVehicle or not has_desired:
            raise ScenarioInvalid("an equilibrium start needs the vehicle and a desired motion", "initial.at_equilibrium")
        offset = _get(obj, "offset", "initial", {})
        allowed = ["Omega", "v", "Gamma"]
        if controller is ControllerId.UWV_STEADY:
            allowed.append("Theta")
        if controller is ControllerId.UWV_DRIFT:
            allowed += ["Delta1", "Delta2"]
        _check_keys(offset, allowed, "initial.offset")
        vals = {k: _array(v, (_WIDTH[k],), f"initial.offset.{k}", finite=False) for k, v in offset.items()}
        return InitialCondition(vals, True)

    need = ["Omega", "v", "Gamma"]
    if system is SystemId.HeavyTopMovableBase:
        need.append("h")
    if controller is ControllerId.UWV_STEADY:
        need.append("Theta")
    if controller is ControllerId.UWV_DRIFT:
        need += ["Delta1", "Delta2"]
    _check_keys(obj, need + ["at_equilibrium"], "initial")
    vals = {}
    for k in need:
        raw = _get(obj, k, "initial")
        if k == "h":
            vals[k] = _num(raw, "initial.h", finite=False)
        else:
            vals[k] = _array(raw, (_WIDTH[k],), f"initial.{k}", finite=False)
    return InitialCondition(vals, False)


def parse_dict(data) -> Scenario:
    if not isinstance(data, dict):
        raise ParseError("scenario must be a JSON object")
    _check_keys(
        data,
        ("system", "controller", "inertia", "gains", "desired", "initial", "integrator", "outputs", "pose"),
        "",
    )
    system = _enum(SystemId, _get(data, "system", ""), "system")
    controller = _enum(ControllerId, _get(data, "controller", "", "None"), "controller")
    inertia = _parse_inertia(_get(data, "inertia", ""))

    g_obj = _get(data, "gains", "", {})
    _check_keys(g_obj, ("alpha", "beta", "K"), "gains")
    k = _array(_get(g_obj, "K", "gains", [[1.0, 0.0], [0.0, 1.0]]), (2, 2), "gains.K")
    if abs(k[0, 1] - k[1, 0]) > 1e-12 * max(1.0, np.abs(k).max()):
        raise ScenarioInvalid("must be symmetric", "gains.K")
    if controller is ControllerId.UWV_DRIFT and not (k[0, 0] > 0 and np.linalg.det(k) > 0):
        raise ScenarioInvalid("must be positive definite for the drift controller", "gains.K")
    gains = Gains(_num(_get(g_obj, "alpha", "gains", 0.0), "gains.alpha"), _num(_get(g_obj, "beta", "gains", 0.0), "gains.beta"), k)

    desired = None
    d_obj = _get(data, "desired", "", None)
    if d_obj is not None:
        _check_keys(d_obj, ("R_d", "v_d"), "desired")
        r_d = _array(_get(d_obj, "R_d", "desired"), (3, 3), "desired.R_d")
        v_d = _array(_get(d_obj, "v_d", "desired"), (3,), "desired.v_d")
        try:
            desired = DesiredMotion(r_d, v_d)
        except EpshapeError as exc:
            path = "desired.v_d" if "velocity" in str(exc) else "desired.R_d"
            raise ScenarioInvalid(str(exc), path) from exc

    if controller is ControllerId.HTMB_SHAPING and system is not SystemId.HeavyTopMovableBase:
        raise ScenarioInvalid("HtmbShaping requires system HeavyTopMovableBase", "controller")
    if controller in (ControllerId.UWV_STEADY, ControllerId.UWV_DRIFT):
        if system is not SystemId.UnderwaterVehicle:
            raise ScenarioInvalid(f"{controller.value} requires system UnderwaterVehicle", "controller")
        if desired is None:
            raise ScenarioInvalid(f"required by controller {controller.value}", "desired")

    initial = _parse_initial(_get(data, "initial", ""), system, controller, desired is not None)

    i_obj = _get(data, "integrator", "")
    _check_keys(i_obj, ("step", "t_final", "method"), "integrator")
    step = _num(_get(i_obj, "step", "integrator"), "integrator.step")
    t_final = _num(_get(i_obj, "t_final", "integrator"), "integrator.t_final")
    method = _get(i_obj, "method", "integrator", "RK4")
    if method != "RK4":
        raise ScenarioInvalid(f"unsupported method {method!r}; only RK4 is available", "integrator.method")
    if step <= 0:
        raise ScenarioInvalid("must be positive", "integrator.step")
    if t_final <= 0:
        raise ScenarioInvalid("must be positive", "integrator.t_final")
    if step > t_final:
        raise ScenarioInvalid("must not exceed integrator.t_final", "integrator.step")
    integrator = IntegratorConfig(step, t_final)

    outputs = []
    o_list = _get(data, "outputs", "", [])
    if not isinstance(o_list, list):
        raise ScenarioInvalid("expected a list", "outputs")
    for i, o in enumerate(o_list):
        path = f"outputs[{i}]"
        _check_keys(o, ("format", "path"), path)
        fmt = _get(o, "format", path)
        if fmt not in OUTPUT_FORMATS:
            raise ScenarioInvalid(f"unknown format {fmt!r}; expected one of {', '.join(OUTPUT_FORMATS)}", f"{path}.format")
        dest = _get(o, "path", path)
        if not isinstance(dest, str) or not dest:
            raise ScenarioInvalid("expected a nonempty string", f"{path}.path")
        outputs.append(OutputSpec(fmt, dest))

    pose = SE3Element.identity()
    p_obj = _get(data, "pose", "", None)
    if p_obj is not None:
        _check_keys(p_obj, ("R", "x"), "pose")
        try:
            pose = SE3Element(
                _array(_get(p_obj, "R", "pose", np.eye(3).tolist()), (3, 3), "pose.R"),
                _array(_get(p_obj, "x", "pose", [0.0] * 3), (3,), "pose.x"),
            )
        except EpshapeError as exc:
            raise ScenarioInvalid(str(exc), "pose.R") from exc

    warns = ()
    if controller in (ControllerId.UWV_STEADY, ControllerId.UWV_DRIFT):
        warns = tuple(stability_warnings(inertia, gains))
    return Scenario(system, controller, inertia, gains, desired, initial, integrator, tuple(outputs), pose, warns)


def parse_scenario(text: str | bytes) -> Scenario:
    """Parse and validate scenario JSON.  Stability-condition warnings land in ``.warnings``."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"scenario is not valid UTF-8: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_dict(data)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ScenarioInvalid(f"cannot read scenario file: {exc.strerror}", str(path)) from exc
    return parse_scenario(raw)


# ---------------------------------------------------------------------------
# serialization


def _lst(a):
    return np.asarray(a, dtype=float).tolist()


def to_dict(sc: Scenario) -> dict:
    p = sc.inertia
    out = {
        "system": sc.system.value,
        "controller": sc.controller.value,
        "inertia": {
            "J": _lst(p.j_block),
            "D": _lst(p.d_block),
            "M": _lst(p.m_block),
            "m": p.m_body,
            "m_total": p.m_total,
            "g": p.g,
            "l": p.l,
            "chi": _lst(p.chi),
        },
        "gains": {"alpha": sc.gains.alpha, "beta": sc.gains.beta, "K": _lst(sc.gains.k_matrix)},
    }
    if sc.desired is not None:
        out["desired"] = {"R_d": _lst(sc.desired.r_d), "v_d": _lst(sc.desired.v_d)}
    vals = {k: (float(v) if k == "h" else _lst(v)) for k, v in sc.initial.values.items()}
    vals = {k: vals[k] for k in STATE_KEYS if k in vals}
    if sc.initial.at_equilibrium:
        out["initial"] = {"at_equilibrium": True, "offset": vals}
    else:
        out["initial"] = vals
    out["integrator"] = {"step": sc.integrator.step, "t_final": sc.integrator.t_final, "method": sc.integrator.method.value}
    out["outputs"] = [{"format": o.format, "path": o.path} for o in sc.outputs]
    out["pose"] = {"R": _lst(sc.pose.rotation), "x": _lst(sc.pose.translation)}
    return out


def serialize_scenario(sc: Scenario) -> str:
    return json.dumps(to_dict(sc), indent=2, sort_keys=False) + "\n"


def digest(sc: Scenario) -> str:
    """sha256 of the canonical serialization."""
    return hashlib.sha256(json.dumps(to_dict(sc), sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def fixture_path(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``"uwv_steady_stable.json"``."""
    return Path(__file__).parent / "scenarios" / name


def fixture_names() -> list[str]:
    return sorted(p.name for p in (Path(__file__).parent / "scenarios").glob("*.json"))
