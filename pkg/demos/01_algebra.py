"""se(3) operators: bracket, coadjoint action and momentum maps.

Checks the pairing identities numerically at a random point.
"""

import numpy as np

from epshape.algebra import AlgebraVector, MomentumCovector, ad, advect_rate_r3, coad, infinitesimal_r3, momentum_K_r3, pairing

rng = np.random.default_rng(0)
x = AlgebraVector.from_array(rng.normal(size=6))
y = AlgebraVector.from_array(rng.normal(size=6))
m = MomentumCovector.from_array(rng.normal(size=6))

print("ad(x, y)             =", ad(x, y).to_array().round(4))
print("<coad(x, m), y>      =", pairing(coad(x, m), y))
print("<m, ad(x, y)>        =", pairing(m, ad(x, y)))

gamma, w = rng.normal(size=3), rng.normal(size=3)
print("<K(w, Gamma), x>     =", pairing(momentum_K_r3(w, gamma), x))
print("<Gamma, x . w>       =", gamma @ infinitesimal_r3(x, w))
print("advected Gamma rate  =", advect_rate_r3(x, gamma).round(4))
