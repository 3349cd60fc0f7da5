import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from epshape.algebra import SE3Element, exp_so3, hat
from epshape.control import ClosedLoop, ControllerId, Gains, frame_from_desired
from epshape.errors import NonFiniteState, NotAnEquilibrium
from epshape.sim import (
    Classification,
    IntegratorConfig,
    classify,
    eigenvalues,
    integrate,
    linearize,
    reconstruct,
    repair_rotation,
    rk4_step,
    stability,
    transport_r3,
    transport_r4,
)
from epshape.systems import SystemId

from conftest import make_loop

E1, E3 = np.eye(3)[0], np.eye(3)[2]
STEADY, DRIFT = ControllerId.UWV_STEADY, ControllerId.UWV_DRIFT


def uwv_start(rng):
    return np.r_[0.5 * rng.normal(size=6), exp_so3([0.3, 0.1, 0.0]) @ -E3]


# rk4


def test_rk4_examples():
    y = np.array([1.0, 2.0])
    assert np.array_equal(rk4_step(lambda x: np.zeros(2), y, 0.1), y)
    # one step of x' = x: 1 + h + h^2/2 + h^3/6 + h^4/24
    x1 = rk4_step(lambda x: x, np.array([1.0]), 0.1)[0]
    assert x1 == pytest.approx(1.10517083, abs=1e-8)
    assert abs(x1 - math.exp(0.1)) < 1e-7


def test_rk4_non_finite():
    with pytest.raises(NonFiniteState):
        rk4_step(lambda x: np.array([np.nan]), np.array([1.0]), 0.1)
    with pytest.raises(NonFiniteState):
        with np.errstate(over="ignore"):
            rk4_step(lambda x: x * 1e300, np.array([1e10]), 1.0)


def test_integrator_config():
    c = IntegratorConfig(0.3, 1.0)
    assert c.n_steps == 3
    assert c.effective_step == pytest.approx(1.0 / 3.0)
    with pytest.raises(ValueError):
        IntegratorConfig(0.0, 1.0)
    with pytest.raises(ValueError):
        IntegratorConfig(2.0, 1.0)
    with pytest.raises(ValueError):
        IntegratorConfig(0.1, 1.0, "Euler")


@pytest.mark.parametrize("system", [SystemId.UnderwaterVehicle, SystemId.HeavyTopMovableBase])
def test_fourth_order(rng, desk, system):
    loop = ClosedLoop(desk, system)
    y0 = uwv_start(rng)
    if system is SystemId.HeavyTopMovableBase:
        y0 = np.r_[y0, 0.0]
    t = 1.0
    ref = integrate(loop, y0, IntegratorConfig(1e-4, t)).states[-1]
    e1 = np.max(np.abs(integrate(loop, y0, IntegratorConfig(0.02, t)).states[-1] - ref))
    e2 = np.max(np.abs(integrate(loop, y0, IntegratorConfig(0.01, t)).states[-1] - ref))
    assert 12.0 <= e1 / e2 <= 20.0


def test_constant_trajectory_at_rest(desk):
    loop = ClosedLoop(desk)
    y0 = np.r_[np.zeros(6), -E3]
    tr = integrate(loop, y0, IntegratorConfig(0.01, 1.0))
    assert np.all(tr.states == y0)


def test_uncontrolled_conservation(rng, coupled):
    tr = integrate(ClosedLoop(coupled), uwv_start(rng), IntegratorConfig(1e-3, 10.0))
    table = tr.conservation_table()
    assert set(table) == {"energy", "|Gamma|^2", "P.Gamma", "|P|^2"}
    for name, row in table.items():
        assert row["max_drift"] < 1e-8, name
        assert row["max_drift"] >= 0


def test_drift_closed_loop_conservation(rng, desk, desired, stable_gains):
    loop = make_loop(desk, DRIFT, stable_gains, desired)
    y0 = loop.equilibrium() + np.r_[0.05 * rng.normal(size=6), np.zeros(11)]
    table = integrate(loop, y0, IntegratorConfig(1e-3, 10.0)).conservation_table()
    assert len(table) == 8
    assert max(r["max_drift"] for r in table.values()) < 1e-8


def test_times_strictly_increasing(desk):
    tr = integrate(ClosedLoop(desk), np.r_[np.ones(6), -E3], IntegratorConfig(0.3, 1.0))
    assert np.all(np.diff(tr.times) > 0)
    assert tr.times[-1] == 1.0
    assert len(tr) == 4


# reconstruction


def test_straight_line(desk):
    p = desk
    loop = ClosedLoop(p)
    # pure surge along a principal axis of M with Gamma parallel to chi
    y0 = np.r_[np.zeros(3), p.m_block @ E1, E3]
    tr = reconstruct(integrate(loop, y0, IntegratorConfig(0.01, 2.0)), SE3Element.identity())
    assert_allclose(tr.translations, np.outer(tr.times, E1), atol=1e-12)
    assert_allclose(tr.rotations, np.broadcast_to(np.eye(3), tr.rotations.shape), atol=0)


def test_transport_uwv(rng, coupled):
    tr = integrate(ClosedLoop(coupled), uwv_start(rng), IntegratorConfig(1e-3, 10.0))
    reconstruct(tr, SE3Element.identity())
    assert np.max(np.abs(transport_r3(tr.rotations, tr.states[0, 6:9]) - tr.field("a"))) < 1e-6
    # with R(0) = I this is R(t)^T Gamma(0)
    assert_allclose(np.einsum("kji,j->ki", tr.rotations, tr.states[0, 6:9]), tr.field("a"), atol=1e-6)
    assert np.max(tr.orthogonality) < 1e-8


def test_transport_htmb_height(rng, desk):
    loop = ClosedLoop(desk, SystemId.HeavyTopMovableBase, ControllerId.HTMB_SHAPING)
    y0 = np.r_[uwv_start(rng), 0.7]
    tr = reconstruct(integrate(loop, y0, IntegratorConfig(1e-3, 10.0)), SE3Element(exp_so3([0.1, 0.2, 0.3]), [1.0, 2.0, 3.0]))
    assert np.max(np.abs(transport_r4(tr.rotations, tr.translations, y0[6:]) - tr.field("a"))) < 1e-6


def test_drift_offsets_are_positions(rng, desk, desired, stable_gains):
    loop = make_loop(desk, DRIFT, stable_gains, desired, track_theta=True)
    y0 = loop.equilibrium() + np.r_[0.05 * rng.normal(size=6), np.zeros(loop.layout.dim - 6)]
    tr = reconstruct(integrate(loop, y0, IntegratorConfig(1e-3, 10.0)), SE3Element(desired.r_d, np.zeros(3)))
    w1, w2, w3, _ = frame_from_desired(desired)
    assert np.max(np.abs(tr.translations @ w1 - tr.field("delta1")[:, 3])) < 1e-6
    assert np.max(np.abs(tr.translations @ w2 - tr.field("delta2")[:, 3])) < 1e-6
    assert np.max(np.abs(np.einsum("kji,j->ki", tr.rotations, w3) - tr.field("theta"))) < 1e-6
    cross = np.cross(tr.field("delta1")[:, :3], tr.field("delta2")[:, :3])
    assert np.max(np.abs(cross - tr.field("theta"))) < 1e-8


def test_repair_rotation(rng):
    r = exp_so3(rng.normal(size=3))
    bent = r + 1e-6 * rng.normal(size=(3, 3))
    q = repair_rotation(bent)
    assert_allclose(q.T @ q, np.eye(3), atol=1e-14)
    assert np.linalg.det(q) > 0
    assert np.max(np.abs(q - r)) < 1e-5


def test_repair_is_applied(desk):
    # a coarse step leaves orthogonality residual above the repair threshold
    loop = ClosedLoop(desk)
    tr = reconstruct(integrate(loop, np.r_[3.0, 2.0, 1.0, 0, 0, 0, -E3], IntegratorConfig(0.1, 5.0)), SE3Element.identity())
    assert np.max(tr.orthogonality) < 1e-9


# linearization and spectra


def test_linearize_linear_map(rng):
    a = rng.normal(size=(5, 5))
    assert_allclose(linearize(lambda x: a @ x, np.zeros(5)), a, atol=1e-9)
    with pytest.raises(NotAnEquilibrium):
        linearize(lambda x: a @ x + 1.0, np.zeros(5))


def _sym3_eigs(a):
    # closed-form trigonometric roots of the characteristic cubic
    q = np.trace(a) / 3.0
    b = a - q * np.eye(3)
    p = math.sqrt(np.trace(b @ b) / 6.0)
    r = np.linalg.det(b / p) / 2.0
    phi = math.acos(min(1.0, max(-1.0, r))) / 3.0
    e1 = q + 2 * p * math.cos(phi)
    e3 = q + 2 * p * math.cos(phi + 2 * math.pi / 3)
    return sorted([e1, 3 * q - e1 - e3, e3])


def test_eigenvalues_examples(rng):
    assert_allclose(np.sort(eigenvalues(np.diag([1.0, 2.0, 3.0])).real), [1, 2, 3], atol=1e-14)
    ev = eigenvalues(hat(E3))
    assert_allclose(sorted(ev.imag), [-1, 0, 1], atol=1e-14)
    assert_allclose(ev.real, 0, atol=1e-14)
    for _ in range(20):
        m = rng.normal(size=(3, 3))
        m = m + m.T
        assert_allclose(np.sort(eigenvalues(m).real), _sym3_eigs(m), rtol=1e-8, atol=1e-12)
    with pytest.raises(ValueError):
        eigenvalues(np.zeros((21, 21)))
    with pytest.raises(ValueError):
        eigenvalues(np.zeros((2, 3)))


def test_classify():
    assert classify(1e-3) is Classification.UNSTABLE
    assert classify(1e-8) is Classification.SPECTRALLY_STABLE
    assert classify(-1.0) is Classification.SPECTRALLY_STABLE
    assert classify(1e-5) is Classification.MARGINAL


@pytest.mark.parametrize("controller", [STEADY, DRIFT])
def test_stability_with_and_without_condition(desk, desired, controller):
    rep = stability(make_loop(desk, controller, Gains(25.0, 1.0), desired))
    assert rep.max_real_part < 1e-6
    assert rep.classification is Classification.SPECTRALLY_STABLE
    assert rep.notes
    assert rep.equilibrium_residual < 1e-12
    bad = stability(make_loop(desk, controller, Gains(25.0, -1.0), desired))
    assert bad.classification is not Classification.SPECTRALLY_STABLE
    assert bad.max_real_part > 1e-4
    d = bad.to_dict()
    assert d["classification"] == "Unstable"
    assert len(d["eigenvalues"]) == bad.jacobian.shape[0]
