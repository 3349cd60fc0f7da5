"""Seeded property suite behind ``epshape verify``.

Each property draws its own random data from ``seed`` and returns the worst
residual it measured.  ``flip`` is forwarded to every controller so a
deliberately wrong sign can be shown to fail the suite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from epshape import poisson
from epshape.algebra import AlgebraVector, MomentumCovector, SE3Element, ad, coad, exp_so3, pairing
from epshape.control import (
    TERMS,
    ClosedLoop,
    ControllerId,
    DesiredMotion,
    Gains,
    matching_residual_theorem1,
    matching_residual_theorem2,
)
from epshape.sim import Classification, IntegratorConfig, integrate, reconstruct, stability, transport_r3, transport_r4
from epshape.systems import InertiaParams, SystemId

DEFAULT_SEED = 42


@dataclass
class PropertyResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    seconds: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "seconds": round(self.seconds, 4),
            "detail": self.detail,
        }


# ---------------------------------------------------------------------------
# random data


def random_params(rng: np.random.Generator) -> InertiaParams:
    a = rng.normal(size=(6, 6))
    metric = a @ a.T + 6.0 * np.eye(6)
    chi = rng.normal(size=3)
    return InertiaParams(
        metric[:3, :3],
        metric[:3, 3:],
        metric[3:, 3:],
        m_body=rng.uniform(0.5, 2.0),
        m_total=rng.uniform(2.0, 5.0),
        g=9.81,
        l=rng.uniform(0.05, 0.5),
        chi=chi / np.linalg.norm(chi),
    )


def random_desired(rng) -> DesiredMotion:
    return DesiredMotion(exp_so3(rng.normal(size=3)), rng.normal(size=3))


def random_gains(rng) -> Gains:
    b = rng.normal(size=(2, 2))
    return Gains(rng.uniform(5.0, 30.0), rng.uniform(-2.0, 2.0), b @ b.T + 0.5 * np.eye(2))


def random_loop(rng, system, controller, flip=frozenset()) -> ClosedLoop:
    flip = frozenset(flip) & set(_terms(controller))
    return ClosedLoop(random_params(rng), system, controller, random_gains(rng), random_desired(rng), flip=flip)


def _terms(controller):
    return TERMS.get(controller, ())


# desk-scale loop with gains satisfying the stability condition
def desk_loop(controller, beta=1.0, flip=frozenset()) -> ClosedLoop:
    p = InertiaParams.desk_defaults()
    d = DesiredMotion(exp_so3([0.2, -0.3, 0.1]), [0.5, 0.0, 0.5])
    g = Gains(25.0, beta, [[2.0, 0.0], [0.0, 1.0]])
    return ClosedLoop(p, SystemId.UnderwaterVehicle, controller, g, d, flip=frozenset(flip) & set(_terms(controller)))


# ---------------------------------------------------------------------------
# properties


def _theorem2(controller):
    def run(rng, flip):
        worst = 0.0
        for _ in range(200):
            loop = random_loop(rng, SystemId.UnderwaterVehicle, controller, flip)
            state = loop.layout.unpack(loop.params, rng.normal(size=loop.layout.dim))
            worst = max(worst, matching_residual_theorem2(loop, state))
        return worst

    return run


def _theorem1(rng, flip):
    worst = 0.0
    for _ in range(200):
        loop = random_loop(rng, SystemId.HeavyTopMovableBase, ControllerId.HTMB_SHAPING, flip)
        state = loop.layout.unpack(loop.params, rng.normal(size=10))
        worst = max(worst, matching_residual_theorem1(state, loop.params, loop.flip))
    return worst


def _bracket_ep(system, controller):
    def run(rng, flip):
        worst = 0.0
        for _ in range(200):
            loop = random_loop(rng, system, controller, flip)
            y = rng.normal(size=loop.layout.dim)
            # the Hamiltonian route uses the unflipped shaped potential
            ref = ClosedLoop(loop.params, system, controller, loop.gains, loop.desired)
            lp = poisson.hamiltonian_rhs_flat(ref.bracket_id, y, ref.hamiltonian_gradient(y))
            worst = max(worst, float(np.max(np.abs(lp - loop.rhs_reference(y)))))
            worst = max(worst, float(np.max(np.abs(loop.rhs(y) - loop.rhs_reference(y)))))
        return worst

    return run


def _casimir_brackets(bid):
    def run(rng, flip):
        worst = 0.0
        n = poisson.dimension(bid)
        for _ in range(50):
            z = rng.normal(size=n)
            df = rng.normal(size=n)
            for c in poisson.CASIMIRS[bid]:
                worst = max(worst, abs(poisson.bracket_flat(bid, z, c.grad_flat(bid, z), df)))
        return worst

    return run


def _casimir_drift_trajectory(rng, flip):
    loop = desk_loop(ControllerId.UWV_DRIFT, flip=flip)
    y0 = loop.equilibrium() + np.r_[0.05 * rng.normal(size=6), np.zeros(loop.layout.dim - 6)]
    tr = integrate(loop, y0, IntegratorConfig(1e-3, 10.0))
    table = tr.conservation_table()
    return max(v["max_drift"] for v in table.values())


def _equilibrium(controller):
    def run(rng, flip):
        worst = 0.0
        for _ in range(20):
            loop = random_loop(rng, SystemId.UnderwaterVehicle, controller, flip)
            worst = max(worst, float(np.max(np.abs(loop.rhs_reference(loop.equilibrium())))))
        loop = desk_loop(controller, flip=flip)
        return max(worst, float(np.max(np.abs(loop.rhs_reference(loop.equilibrium())))))

    return run


def _coad_duality(rng, flip):
    worst = 0.0
    for _ in range(200):
        x, y = AlgebraVector.from_array(rng.normal(size=6)), AlgebraVector.from_array(rng.normal(size=6))
        m = MomentumCovector.from_array(rng.normal(size=6))
        worst = max(worst, abs(pairing(coad(x, m), y) - pairing(m, ad(x, y))))
    return worst


def _jacobi(bid):
    def run(rng, flip):
        return max(poisson.jacobi_probe(bid, rng.normal(size=poisson.dimension(bid)), seed=int(rng.integers(2**31))) for _ in range(3))

    return run


def _spectral(controller):
    def run(rng, flip):
        stable = stability(desk_loop(controller, beta=1.0, flip=flip))
        unstable = stability(desk_loop(controller, beta=-1.0, flip=flip))
        # residual: stable max real part, or inf when the violated gains are not flagged
        if unstable.classification is Classification.SPECTRALLY_STABLE:
            return float("inf")
        return max(stable.max_real_part, 0.0)

    return run


def _transport(rng, flip):
    loop = ClosedLoop(
        InertiaParams.desk_defaults(),
        SystemId.UnderwaterVehicle,
        ControllerId.UWV_DRIFT,
        Gains(25.0, 1.0, [[2.0, 0.0], [0.0, 1.0]]),
        DesiredMotion(exp_so3([0.2, -0.3, 0.1]), [0.5, 0.0, 0.5]),
        flip=frozenset(flip) & set(_terms(ControllerId.UWV_DRIFT)),
        track_theta=True,
    )
    y0 = loop.equilibrium() + np.r_[0.05 * rng.normal(size=6), np.zeros(loop.layout.dim - 6)]
    tr = reconstruct(integrate(loop, y0, IntegratorConfig(1e-2, 10.0)), SE3Element(loop.desired.r_d, np.zeros(3)))
    s = loop.layout.slices()
    worst = np.max(np.abs(transport_r3(tr.rotations, y0[s["a"]]) - tr.field("a")))
    worst = max(worst, np.max(np.abs(transport_r3(tr.rotations, y0[s["theta"]]) - tr.field("theta"))))
    for k in ("delta1", "delta2"):
        worst = max(worst, np.max(np.abs(transport_r4(tr.rotations, tr.translations, y0[s[k]]) - tr.field(k))))
    return float(worst)


PROPERTIES: dict[str, tuple[Callable, float]] = {
    "matching_theorem2_steady": (_theorem2(ControllerId.UWV_STEADY), 1e-12),
    "matching_theorem2_drift": (_theorem2(ControllerId.UWV_DRIFT), 1e-12),
    "matching_theorem1_htmb": (_theorem1, 1e-12),
    "bracket_ep_uwv": (_bracket_ep(SystemId.UnderwaterVehicle, ControllerId.NONE), 1e-10),
    "bracket_ep_htmb": (_bracket_ep(SystemId.HeavyTopMovableBase, ControllerId.NONE), 1e-10),
    "bracket_ep_htmb_shaped": (_bracket_ep(SystemId.HeavyTopMovableBase, ControllerId.HTMB_SHAPING), 1e-10),
    "bracket_ep_uwv_steady": (_bracket_ep(SystemId.UnderwaterVehicle, ControllerId.UWV_STEADY), 1e-10),
    "bracket_ep_uwv_drift": (_bracket_ep(SystemId.UnderwaterVehicle, ControllerId.UWV_DRIFT), 1e-10),
    **{f"casimir_bracket_{bid}": (_casimir_brackets(bid), 1e-12) for bid in poisson.BRACKETS},
    "casimir_drift_trajectory": (_casimir_drift_trajectory, 1e-8),
    "equilibrium_steady": (_equilibrium(ControllerId.UWV_STEADY), 1e-12),
    "equilibrium_drift": (_equilibrium(ControllerId.UWV_DRIFT), 1e-12),
    "coad_duality": (_coad_duality, 1e-12),
    **{f"jacobi_{bid}": (_jacobi(bid), 1e-9) for bid in poisson.BRACKETS},
    "spectral_steady": (_spectral(ControllerId.UWV_STEADY), 1e-6),
    "spectral_drift": (_spectral(ControllerId.UWV_DRIFT), 1e-6),
    "transport_drift": (_transport, 1e-6),
}


def run_properties(seed: int = DEFAULT_SEED, name_filter: str | None = None, flip=frozenset()) -> list[PropertyResult]:
    results = []
    for i, (name, (fn, tol)) in enumerate(PROPERTIES.items()):
        if name_filter and name_filter not in name:
            continue
        rng = np.random.default_rng([seed, i])
        t0 = time.perf_counter()
        try:
            residual = float(fn(rng, frozenset(flip)))
            detail = ""
        except Exception as exc:  # a crashing property is a failing property
            residual, detail = float("inf"), f"{type(exc).__name__}: {exc}"
        passed = bool(np.isfinite(residual) and residual < tol)
        results.append(PropertyResult(name, passed, residual, tol, time.perf_counter() - t0, detail))
    return results
