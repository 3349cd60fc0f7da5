"""Potential-shaping controllers reproduce the shaped-Lagrangian dynamics.

For each controller the closed loop is compared with the uncontrolled
equations of the shaped Lagrangian at random states.  Reversing the sign
of one control term breaks the match.
"""

import numpy as np

from epshape.control import ControllerId, matching_residual_theorem1, matching_residual_theorem2
from epshape.systems import SystemId
from epshape.verify import random_loop

rng = np.random.default_rng(1)


def worst(controller, flip=frozenset()):
    out = 0.0
    for _ in range(50):
        if controller is ControllerId.HTMB_SHAPING:
            loop = random_loop(rng, SystemId.HeavyTopMovableBase, controller, flip)
            state = loop.layout.unpack(loop.params, rng.normal(size=loop.layout.dim))
            out = max(out, matching_residual_theorem1(state, loop.params, loop.flip))
        else:
            loop = random_loop(rng, SystemId.UnderwaterVehicle, controller, flip)
            state = loop.layout.unpack(loop.params, rng.normal(size=loop.layout.dim))
            out = max(out, matching_residual_theorem2(loop, state))
    return out


for controller, term in [
    (ControllerId.HTMB_SHAPING, "base"),
    (ControllerId.UWV_STEADY, "heading"),
    (ControllerId.UWV_DRIFT, "drift"),
]:
    print(f"{controller.value:13s} residual {worst(controller):.1e}   with '{term}' flipped {worst(controller, {term}):.1e}")
