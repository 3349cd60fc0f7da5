"""Desired steady motion: spectrum of the linearization, then a perturbed run.

With alpha * l * I - M positive definite and l * beta > 0 the spectrum sits on
the imaginary axis; flipping beta produces an unstable eigenvalue.  The
perturbed drift-controlled run is then reconstructed on SE(3) and the advected
variables are compared with their definitions in terms of R(t), x(t).
"""

import numpy as np

from epshape.algebra import SE3Element
from epshape.control import ClosedLoop, ControllerId, frame_from_desired
from epshape.sim import IntegratorConfig, integrate, reconstruct, stability
from epshape.systems import SystemId
from epshape.verify import desk_loop

for beta in (1.0, -1.0):
    rep = stability(desk_loop(ControllerId.UWV_DRIFT, beta=beta))
    print(f"beta {beta:+.0f}: max Re {rep.max_real_part:.2e} -> {rep.classification.value}")

base = desk_loop(ControllerId.UWV_DRIFT)
loop = ClosedLoop(base.params, SystemId.UnderwaterVehicle, ControllerId.UWV_DRIFT, base.gains, base.desired, track_theta=True)
y0 = loop.equilibrium() + np.r_[0.05, -0.02, 0.03, 0.02, 0.0, -0.01, np.zeros(loop.layout.dim - 6)]
traj = reconstruct(integrate(loop, y0, IntegratorConfig(1e-3, 10.0)), SE3Element(loop.desired.r_d, np.zeros(3)))
w1, w2, w3, _ = frame_from_desired(loop.desired)

print("max |Theta - R^T w3|   :", np.abs(np.einsum("kji,j->ki", traj.rotations, w3) - traj.field("theta")).max())
print("max |delta1 - x . w1|  :", np.abs(traj.translations @ w1 - traj.field("delta1")[:, 3]).max())
print("max |delta2 - x . w2|  :", np.abs(traj.translations @ w2 - traj.field("delta2")[:, 3]).max())
print("final position          :", traj.translations[-1].round(4))
