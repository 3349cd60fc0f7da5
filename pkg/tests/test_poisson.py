import numpy as np
import pytest
from numpy.testing import assert_allclose

from epshape import poisson
from epshape.control import ClosedLoop, ControllerId, Gains
from epshape.errors import ArityMismatch
from epshape.poisson import (
    BRACKETS,
    CASIMIRS,
    GradientEval,
    PhasePoint,
    bracket,
    bracket_drift,
    bracket_flat,
    bracket_se3,
    bracket_se3_r3,
    dimension,
    hamiltonian_rhs,
    hamiltonian_rhs_flat,
    jacobi_probe,
)
from epshape.systems import SystemId

from conftest import make_loop

E1, E2, E3 = np.eye(3)
Z = np.zeros(3)


def test_dimensions():
    assert [dimension(b) for b in BRACKETS] == [6, 9, 10, 12, 17]
    with pytest.raises(ValueError):
        dimension("so3")


def test_se3_examples(rng):
    z = PhasePoint(E3, rng.normal(size=3))
    f = GradientEval(E1, Z)
    h = GradientEval(E2, Z)
    # f = Pi_1, h = Pi_2 at Pi = e3: -Pi.(e1 x e2) = -1
    assert bracket_se3(z, f, h) == -1.0
    assert bracket_se3(z, f, f) == 0.0
    p = rng.normal(size=3)
    z = PhasePoint(rng.normal(size=3), p)
    casimir = GradientEval(Z, 2 * p)
    for _ in range(20):
        hh = GradientEval(*rng.normal(size=(2, 3)))
        assert abs(bracket_se3(z, casimir, hh)) < 1e-14


def test_structured_and_flat_agree(rng):
    z = PhasePoint(*rng.normal(size=(2, 3)), gamma=rng.normal(size=3))
    f = GradientEval(*rng.normal(size=(2, 3)), d_gamma=rng.normal(size=3))
    h = GradientEval(*rng.normal(size=(2, 3)), d_gamma=rng.normal(size=3))
    v = bracket_se3_r3(z, f, h)
    assert v == bracket_flat("se3_r3", z.flat("se3_r3"), f.flat("se3_r3"), h.flat("se3_r3"))
    # the r3 term written out
    se3 = bracket_se3(z, f, h)
    assert_allclose(v - se3, -z.gamma @ (np.cross(f.d_pi, h.d_gamma) - np.cross(h.d_pi, f.d_gamma)), atol=1e-14)


def test_drift_bracket_terms_by_hand(rng):
    z = PhasePoint.from_flat("drift", rng.normal(size=17))
    f = GradientEval.from_flat("drift", rng.normal(size=17))
    h = GradientEval.from_flat("drift", rng.normal(size=17))
    val = bracket_drift(z, f, h)
    ref = bracket_se3(z, f, h) - z.gamma @ (np.cross(f.d_pi, h.d_gamma) - np.cross(h.d_pi, f.d_gamma))
    for d, fd, hd in ((z.d1, f.d_d1, h.d_d1), (z.d2, f.d_d2, h.d_d2)):
        ref -= d[:3] @ (np.cross(f.d_pi, hd[:3]) - np.cross(h.d_pi, fd[:3]))
        ref -= d[:3] @ (hd[3] * f.d_p - fd[3] * h.d_p)
    assert abs(val - ref) < 1e-12


@pytest.mark.parametrize("bid", BRACKETS)
def test_antisymmetry_and_bilinearity(rng, bid):
    n = dimension(bid)
    for _ in range(20):
        z, f, g, h = rng.normal(size=(4, n))
        a, b = rng.normal(size=2)
        assert abs(bracket_flat(bid, z, f, h) + bracket_flat(bid, z, h, f)) < 1e-14
        lhs = bracket_flat(bid, z, a * f + b * g, h)
        rhs = a * bracket_flat(bid, z, f, h) + b * bracket_flat(bid, z, g, h)
        assert abs(lhs - rhs) < 1e-12
        assert abs(bracket_flat(bid, z, f, f)) == 0.0


@pytest.mark.parametrize("bid", BRACKETS)
def test_casimirs_annihilate(rng, bid):
    n = dimension(bid)
    for _ in range(50):
        z, h = rng.normal(size=(2, n))
        for c in CASIMIRS[bid]:
            assert abs(bracket_flat(bid, z, c.grad_flat(bid, z), h)) < 1e-12, c.name


@pytest.mark.parametrize("bid", BRACKETS)
def test_casimir_gradients_vs_finite_differences(rng, bid):
    n = dimension(bid)
    z = rng.normal(size=n)
    for c in CASIMIRS[bid]:
        fd = np.array([(c(bid, z + 1e-6 * e) - c(bid, z - 1e-6 * e)) / 2e-6 for e in np.eye(n)])
        assert_allclose(fd, c.grad_flat(bid, z), atol=1e-8)


def test_drift_casimir_list():
    names = [c.name for c in CASIMIRS["drift"]]
    assert names == [
        "P.(Delta1 x Delta2)",
        "|Gamma|^2",
        "|Delta1|^2",
        "|Delta2|^2",
        "Gamma.Delta1",
        "Gamma.Delta2",
        "Delta1.Delta2",
    ]


def test_non_casimir_is_detected(rng):
    # Pi.Pi is not a Casimir of se3_r3; guards against a vacuous annihilation test
    z = rng.normal(size=9)
    grad = np.r_[2 * z[:3], np.zeros(6)]
    assert max(abs(bracket_flat("se3_r3", z, grad, h)) for h in rng.normal(size=(10, 9))) > 1e-2


def test_casimir_values_batch(rng):
    zs = rng.normal(size=(5, 17))
    batch = poisson.casimir_values("drift", zs)
    for i, z in enumerate(zs):
        single = poisson.casimir_values("drift", z)
        for k in single:
            assert batch[k][i] == pytest.approx(single[k], abs=1e-14)


def test_arity_errors(rng):
    with pytest.raises(ArityMismatch):
        bracket_flat("se3_r3", np.zeros(8), np.zeros(9), np.zeros(9))
    with pytest.raises(ArityMismatch):
        PhasePoint(Z, Z).flat("se3_r3")
    with pytest.raises(ArityMismatch):
        PhasePoint(Z, Z, gamma=Z, theta=Z).flat("se3_r3")
    with pytest.raises(ArityMismatch):
        hamiltonian_rhs("drift", PhasePoint(Z, Z, gamma=Z), GradientEval(Z, Z, d_gamma=Z))
    with pytest.raises(ArityMismatch):
        CASIMIRS["se3_r3"][0]("se3_r3", np.zeros(10))


def test_hamiltonian_rhs_structured(rng, coupled):
    loop = ClosedLoop(coupled)
    y = rng.normal(size=9)
    z = PhasePoint.from_flat("se3_r3", y)
    g = GradientEval.from_flat("se3_r3", loop.hamiltonian_gradient(y))
    out = hamiltonian_rhs("se3_r3", z, g)
    assert_allclose(out.flat("se3_r3"), loop.rhs(y), atol=1e-10)


def _loops(params, desired):
    g = Gains(7.0, -0.6, [[2.0, 0.3], [0.3, 1.0]])
    yield make_loop(params, ControllerId.NONE, g, desired)
    yield make_loop(params, ControllerId.UWV_STEADY, g, desired)
    yield make_loop(params, ControllerId.UWV_DRIFT, g, desired)
    yield ClosedLoop(params, SystemId.HeavyTopMovableBase)
    yield ClosedLoop(params, SystemId.HeavyTopMovableBase, ControllerId.HTMB_SHAPING)


def test_bracket_dynamics_equal_ep(rng, coupled, desired):
    for loop in _loops(coupled, desired):
        for _ in range(50):
            y = rng.normal(size=loop.layout.dim)
            lp = hamiltonian_rhs_flat(loop.bracket_id, y, loop.hamiltonian_gradient(y))
            assert_allclose(lp, loop.rhs_reference(y), atol=1e-10)


def test_closed_loop_casimirs_rate(rng, coupled, desired):
    for loop in _loops(coupled, desired):
        for _ in range(10):
            y = rng.normal(size=loop.layout.dim)
            f = loop.rhs(y)
            for name in loop.casimirs(y):
                rate = (loop.casimirs(y + 1e-6 * f)[name] - loop.casimirs(y - 1e-6 * f)[name]) / 2e-6
                assert abs(rate) < 1e-7, (loop.bracket_id, name)


@pytest.mark.parametrize("bid", BRACKETS)
def test_jacobi(rng, bid):
    for _ in range(20):
        assert jacobi_probe(bid, rng.normal(size=dimension(bid)), seed=int(rng.integers(1000))) < 1e-6
    assert jacobi_probe(bid, rng.normal(size=dimension(bid)), kind="linear") < 1e-12


def test_jacobi_detects_perturbed_coefficient(rng):
    def perturbed(z, f, h):
        pi, p = z[:3], z[3:]
        return -pi @ np.cross(f[:3], h[:3]) - 1.5 * p @ (np.cross(f[:3], h[3:]) - np.cross(h[:3], f[3:]))

    z = rng.normal(size=6)
    assert jacobi_probe(perturbed, z) > 1e-3
    assert jacobi_probe("se3", z) < 1e-9
