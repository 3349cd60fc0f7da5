"""Free underwater vehicle: energy and Casimirs along an RK4 run."""

import numpy as np

from epshape.control import ClosedLoop
from epshape.sim import IntegratorConfig, integrate
from epshape.systems import InertiaParams

params = InertiaParams.desk_defaults(d_block=[[0.1, 0.0, 0.05], [0.0, 0.2, 0.0], [0.05, 0.0, 0.0]])
loop = ClosedLoop(params)
y0 = np.r_[0.3, -0.2, 0.1, 0.5, 0.0, 0.2, 0.0, 0.6, -0.8]
traj = integrate(loop, y0, IntegratorConfig(1e-3, 10.0))

print(f"bracket {loop.bracket_id}, {len(traj)} samples")
for name, row in traj.conservation_table().items():
    print(f"  {name:10s} initial {row['initial']: .6f}  max drift {row['max_drift']:.2e}")
