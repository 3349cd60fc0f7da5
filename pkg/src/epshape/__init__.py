"""Euler-Poincare dynamics on SE(3) with advected parameters, and potential-shaping control.

Modules, bottom up: ``algebra`` (se(3) operators and semidirect-product
descriptors), ``systems`` (underwater vehicle and heavy top on a movable
base), ``control`` (feedback laws, shaped potentials, matching checks),
``poisson`` (Lie-Poisson brackets and Casimirs), ``sim`` (RK4, reconstruction,
spectral stability), ``scenario`` and ``cli`` (the ``epshape`` command).
"""

from epshape.algebra import AlgebraVector, MomentumCovector, SE3Element
from epshape.control import ClosedLoop, ControllerId, DesiredMotion, Gains
from epshape.scenario import load_scenario, parse_scenario
from epshape.sim import IntegratorConfig, reconstruct, simulate, stability
from epshape.systems import InertiaParams, ReducedState, SystemId

__all__ = [
    "AlgebraVector",
    "ClosedLoop",
    "ControllerId",
    "DesiredMotion",
    "Gains",
    "InertiaParams",
    "IntegratorConfig",
    "MomentumCovector",
    "ReducedState",
    "SE3Element",
    "SystemId",
    "load_scenario",
    "parse_scenario",
    "reconstruct",
    "simulate",
    "stability",
]
