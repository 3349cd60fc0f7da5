import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from epshape import poisson
from epshape.algebra import AlgebraVector
from epshape.errors import MissingField, SingularInertia
from epshape.systems import (
    InertiaParams,
    Layout,
    PotentialId,
    ReducedState,
    SystemId,
    advect_extras_rhs,
    energy,
    ep_rhs_htmb,
    ep_rhs_uwv,
    kinetic_energy,
    legendre,
    legendre_inverse,
    potential_gradient,
    uncontrolled_rhs,
)

E1, E2, E3 = np.eye(3)
Z = np.zeros(3)


def rand_state(rng, **kw):
    return ReducedState(AlgebraVector.from_array(rng.normal(size=6)), **kw)


def test_params_validation():
    with pytest.raises(ValueError):
        InertiaParams.desk_defaults(chi=[0, 0, 2.0])
    with pytest.raises(SingularInertia):
        InertiaParams.desk_defaults(m_block=np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(SingularInertia):
        InertiaParams.desk_defaults(d_block=[[0, 1.0, 0], [0, 0, 0], [0, 0, 0]], j_block=np.eye(3), m_block=np.eye(3))
    p = InertiaParams.desk_defaults()
    assert abs(p.mgl - 1.0) < 1e-15


def test_legendre_examples(rng):
    p = InertiaParams.desk_defaults(m_block=np.eye(3))
    m = legendre(p, AlgebraVector(E1, E2))
    assert_array_equal(m.pi, 3 * E1)
    assert_array_equal(m.p, E2)
    assert_array_equal(legendre(p, AlgebraVector(Z, Z)).to_array(), np.zeros(6))
    assert_array_equal(legendre_inverse(p, legendre(p, AlgebraVector(Z, Z))).to_array(), np.zeros(6))
    assert_allclose(legendre_inverse(p, m).to_array(), np.r_[E1, E2], atol=1e-15)


def test_legendre_round_trip_against_linear_solve(rng, coupled):
    for _ in range(50):
        xi = AlgebraVector.from_array(rng.normal(size=6))
        m = legendre(coupled, xi)
        assert_allclose(m.pi, coupled.j_block @ xi.omega + coupled.d_block @ xi.vel, atol=1e-14)
        assert_allclose(m.p, coupled.d_block.T @ xi.omega + coupled.m_block @ xi.vel, atol=1e-14)
        assert_allclose(legendre_inverse(coupled, m).to_array(), xi.to_array(), atol=1e-12)
        # independent route: dense solve of the block system
        assert_allclose(np.linalg.solve(coupled.metric, m.to_array()), xi.to_array(), atol=1e-12)


def test_uwv_rest_is_equilibrium(desk):
    mu, g = ep_rhs_uwv(desk, ReducedState(AlgebraVector(Z, Z), a_r3=-2 * E3))
    assert_array_equal(mu.to_array(), np.zeros(6))
    assert_array_equal(g, Z)


def test_uwv_pure_surge():
    p = InertiaParams.desk_defaults(m_block=np.eye(3))
    mu, g = ep_rhs_uwv(p, ReducedState(AlgebraVector(Z, E1), a_r3=E3))
    assert_array_equal(mu.to_array(), np.zeros(6))
    assert_array_equal(g, Z)


def test_uwv_rhs_by_hand(rng, coupled):
    for _ in range(20):
        s = rand_state(rng, a_r3=rng.normal(size=3))
        om, v, gam = s.xi.omega, s.xi.vel, s.a_r3
        pi = coupled.j_block @ om + coupled.d_block @ v
        pp = coupled.d_block.T @ om + coupled.m_block @ v
        mu, gd = ep_rhs_uwv(coupled, s)
        assert_allclose(mu.pi, np.cross(pi, om) + np.cross(pp, v) - coupled.mgl * np.cross(coupled.chi, gam), atol=1e-13)
        assert_allclose(mu.p, np.cross(pp, om), atol=1e-13)
        assert_allclose(gd, np.cross(gam, om), atol=1e-14)


def test_htmb_examples(desk):
    mu, a = ep_rhs_htmb(desk, ReducedState(AlgebraVector(Z, Z), a_r4=[0, 0, 1, 0]))
    assert_allclose(mu.pi, Z, atol=0)
    assert_allclose(mu.p, -desk.m_total * desk.g * E3, atol=0)
    assert a[3] == 0.0
    mu, a = ep_rhs_htmb(desk, ReducedState(AlgebraVector(Z, Z), a_r4=np.zeros(4)))
    assert_array_equal(mu.to_array(), np.zeros(6))


def test_missing_fields(desk):
    s = ReducedState(AlgebraVector(Z, Z))
    with pytest.raises(MissingField):
        ep_rhs_uwv(desk, s)
    with pytest.raises(MissingField):
        ep_rhs_htmb(desk, s)
    with pytest.raises(MissingField):
        advect_extras_rhs(s)
    with pytest.raises(MissingField):
        energy(desk, s, PotentialId.UWV)


def test_extras(rng):
    d1, d2 = rng.normal(size=4), rng.normal(size=4)
    th = rng.normal(size=3)
    r = advect_extras_rhs(ReducedState(AlgebraVector(Z, rng.normal(size=3)), theta=th, deltas=(d1, d2)))
    assert_array_equal(r["theta"], Z)
    assert_array_equal(r["delta1"][:3], Z)
    # v orthogonal to both spatial parts
    v = np.cross(d1[:3], d2[:3])
    r = advect_extras_rhs(ReducedState(AlgebraVector(rng.normal(size=3), v), deltas=(d1, d2)))
    assert abs(r["delta1"][3]) < 1e-14 and abs(r["delta2"][3]) < 1e-14


def test_cross_product_of_deltas_advects_like_theta(rng):
    # d/dt (D1 x D2) = D1' x D2 + D1 x D2' = (D1 x D2) x Omega
    for _ in range(20):
        d1, d2 = rng.normal(size=4), rng.normal(size=4)
        s = ReducedState(AlgebraVector.from_array(rng.normal(size=6)), deltas=(d1, d2))
        r = advect_extras_rhs(s)
        lhs = np.cross(r["delta1"][:3], d2[:3]) + np.cross(d1[:3], r["delta2"][:3])
        assert_allclose(lhs, np.cross(np.cross(d1[:3], d2[:3]), s.xi.omega), atol=1e-13)


def test_energy_examples(desk):
    assert energy(desk, ReducedState(AlgebraVector(Z, Z), a_r3=E3), PotentialId.UWV) == pytest.approx(1.0, abs=1e-15)
    assert energy(desk, ReducedState(AlgebraVector(Z, Z), a_r4=np.zeros(4)), PotentialId.HTMB) == 0.0
    s = ReducedState(AlgebraVector(Z, Z), a_r4=[0, 0, 0, 2.0])
    assert energy(desk, s, PotentialId.HTMB) == pytest.approx(2 * desk.m_total * desk.g)


def _flat_energy(p, system, layout):
    which = PotentialId.UWV if system is SystemId.UnderwaterVehicle else PotentialId.HTMB

    def h(y):
        return energy(p, layout.unpack(p, y), which)

    return h


@pytest.mark.parametrize("system,gdim", [(SystemId.UnderwaterVehicle, 3), (SystemId.HeavyTopMovableBase, 4)])
def test_energy_rate_vanishes(rng, coupled, system, gdim):
    layout = Layout(gdim)
    f = uncontrolled_rhs(coupled, system, layout)
    h = _flat_energy(coupled, system, layout)
    for _ in range(20):
        y = rng.normal(size=layout.dim)
        # analytic gradient: (velocities, potential gradient)
        grad = np.r_[coupled.metric_inv @ y[:6], potential_gradient(coupled, "uwv" if gdim == 3 else "htmb")]
        assert abs(grad @ f(y)) < 1e-12
        # and the analytic gradient agrees with finite differences of the energy
        fd = np.array([(h(y + 1e-6 * e) - h(y - 1e-6 * e)) / 2e-6 for e in np.eye(layout.dim)])
        assert_allclose(fd, grad, atol=1e-7)


def test_uwv_rate_level_invariants(rng, coupled):
    layout = Layout(3)
    f = uncontrolled_rhs(coupled, SystemId.UnderwaterVehicle, layout)
    for _ in range(20):
        y = rng.normal(size=9)
        r = f(y)
        pp, g = y[3:6], y[6:9]
        assert abs(pp @ r[3:6]) < 1e-13
        assert abs(g @ r[6:9]) < 1e-13
        assert abs(r[3:6] @ g + pp @ r[6:9]) < 1e-13


@pytest.mark.parametrize("system,gdim,bid", [(SystemId.UnderwaterVehicle, 3, "se3_r3"), (SystemId.HeavyTopMovableBase, 4, "se3_r4")])
def test_rhs_matches_bracket_dynamics(rng, coupled, system, gdim, bid):
    layout = Layout(gdim)
    f = uncontrolled_rhs(coupled, system, layout)
    which = "uwv" if gdim == 3 else "htmb"
    for _ in range(50):
        y = rng.normal(size=layout.dim)
        grad = np.r_[coupled.metric_inv @ y[:6], potential_gradient(coupled, which)]
        assert_allclose(poisson.hamiltonian_rhs_flat(bid, y, grad), f(y), atol=1e-10)


def test_layout_pack_unpack(rng, coupled):
    layout = Layout(3, theta=True, deltas=True)
    assert layout.dim == 20
    assert len(layout.names()) == 20
    assert layout.names()[-1] == "delta_2"
    y = rng.normal(size=20)
    assert_allclose(layout.pack(coupled, layout.unpack(coupled, y)), y, atol=1e-13)
    with pytest.raises(ValueError):
        layout.unpack(coupled, np.zeros(19))
    with pytest.raises(MissingField):
        Layout(3).pack(coupled, ReducedState(AlgebraVector(Z, Z), a_r3=E3, theta=E1))
    assert Layout(4).names()[9] == "h"


def test_kinetic_energy_positive(rng, coupled):
    for _ in range(20):
        assert kinetic_energy(coupled, AlgebraVector.from_array(rng.normal(size=6))) > 0
