"""Fixed-step integration, group reconstruction and spectral stability.

The reduced state is integrated as a flat vector (see
:class:`epshape.systems.Layout`).  Reconstruction is a post-processing pass:
it replays each RK4 step of the reduced system together with
``R' = R hat(Omega)``, ``x' = R v`` so the group samples are consistent with
the stored reduced samples.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from epshape.algebra import SE3Element, hat, rotation_residual
from epshape.control import ClosedLoop
from epshape.errors import NoConvergence, NonFiniteState, NotAnEquilibrium
from epshape.systems import ReducedState

EQUILIBRIUM_TOL = 1e-10
REPAIR_TOL = 1e-9
UNSTABLE_TOL = 1e-4
STABLE_TOL = 1e-6
MAX_EIG_DIM = 20


class Method(enum.Enum):
    RK4 = "RK4"


@dataclass(frozen=True)
class IntegratorConfig:
    step: float
    t_final: float
    method: Method = Method.RK4

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        step, t_final = float(self.step), float(self.t_final)
        if not (np.isfinite(step) and step > 0):
            raise ValueError("step must be positive")
        if not (np.isfinite(t_final) and t_final > 0):
            raise ValueError("t_final must be positive")
        if step > t_final:
            raise ValueError("step must not exceed t_final")
        object.__setattr__(self, "step", step)
        object.__setattr__(self, "t_final", t_final)

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_final / self.step)))

    @property
    def effective_step(self) -> float:
        """Uniform step actually taken so that the last sample lands on t_final."""
        return self.t_final / self.n_steps


def rk4_step(rhs: Callable, y, h: float) -> np.ndarray:
    """One classical RK4 step of ``y' = rhs(y)``."""
    if not h > 0:
        raise ValueError("step must be positive")
    y = np.asarray(y, dtype=float)
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    # a non-finite stage always leaves a non-finite combination, so one check suffices
    return _finite(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def _finite(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise NonFiniteState("integration produced a non-finite value")
    return a


@dataclass
class Trajectory:
    """Reduced samples ``states[k]`` (flat vectors) at ``times[k]``.

    ``energy`` and ``casimirs`` are per-sample diagnostics; ``rotations`` and
    ``translations`` are filled in by :func:`reconstruct`.
    """

    loop: ClosedLoop
    times: np.ndarray
    states: np.ndarray
    energy: np.ndarray
    casimirs: dict[str, np.ndarray]
    rotations: np.ndarray | None = None
    translations: np.ndarray | None = None
    orthogonality: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.times)

    @property
    def columns(self) -> list[str]:
        return self.loop.layout.names()

    def state(self, k: int) -> ReducedState:
        return self.loop.layout.unpack(self.loop.params, self.states[k])

    def field(self, name: str) -> np.ndarray:
        """Samples of one layout block, e.g. ``"a"``, ``"theta"`` or ``"delta1"``."""
        return self.states[:, self.loop.layout.slices()[name]]

    def velocities(self) -> np.ndarray:
        """Body velocities (Omega, v) per sample, shape (n, 6)."""
        return self.states[:, :6] @ self.loop.params.metric_inv.T

    def conservation_table(self) -> dict[str, dict[str, float]]:
        """initial / final / max drift for the energy and each Casimir."""
        series = {"energy": self.energy, **self.casimirs}
        return {
            name: {
                "initial": float(v[0]),
                "final": float(v[-1]),
                "max_drift": float(np.max(np.abs(v - v[0]))),
            }
            for name, v in series.items()
        }


def integrate(loop: ClosedLoop, y0, config: IntegratorConfig) -> Trajectory:
    y = _finite(np.array(y0, dtype=float))
    if y.shape != (loop.layout.dim,):
        raise ValueError(f"initial vector has length {y.size}, layout needs {loop.layout.dim}")
    n, h = config.n_steps, config.effective_step
    states = np.empty((n + 1, y.size))
    states[0] = y
    for k in range(n):
        y = rk4_step(loop.rhs, y, h)
        states[k + 1] = y
    times = h * np.arange(n + 1)
    times[-1] = config.t_final
    return Trajectory(loop, times, states, loop.energy_batch(states), loop.casimirs_batch(states))


def simulate(scenario) -> Trajectory:
    """Integrate a validated scenario (see :mod:`epshape.scenario`)."""
    loop = scenario.closed_loop()
    return integrate(loop, scenario.initial_vector(loop), scenario.integrator)


# ---------------------------------------------------------------------------
# group reconstruction


def repair_rotation(r) -> np.ndarray:
    """Nearest rotation matrix (polar factor)."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=float))
    q = u @ vt
    if np.linalg.det(q) < 0:
        u[:, -1] *= -1.0
        q = u @ vt
    return q


def reconstruct(traj: Trajectory, s0: SE3Element) -> Trajectory:
    """Attach group samples s(t) = (R(t), x(t)) to ``traj`` starting from ``s0``.

    Each reduced RK4 step is replayed jointly with the group equations, so
    the group stages see exactly the velocities the reduced stages saw.
    """
    loop = traj.loop
    minv = loop.params.metric_inv
    n = len(traj)
    rots = np.empty((n, 3, 3))
    trans = np.empty((n, 3))
    resid = np.empty(n)
    r, x = np.array(s0.rotation), np.array(s0.translation)
    rots[0], trans[0], resid[0] = r, x, rotation_residual(r)

    def group_rate(y, r):
        vel = minv @ y[:6]
        return r @ hat(vel[:3]), r @ vel[3:]

    for k in range(n - 1):
        h = traj.times[k + 1] - traj.times[k]
        y = traj.states[k]
        ky1 = loop.rhs(y)
        kr1, kx1 = group_rate(y, r)
        y2 = y + 0.5 * h * ky1
        ky2 = loop.rhs(y2)
        kr2, kx2 = group_rate(y2, r + 0.5 * h * kr1)
        y3 = y + 0.5 * h * ky2
        ky3 = loop.rhs(y3)
        kr3, kx3 = group_rate(y3, r + 0.5 * h * kr2)
        kr4, kx4 = group_rate(y + h * ky3, r + h * kr3)
        r = _finite(r + (h / 6.0) * (kr1 + 2 * kr2 + 2 * kr3 + kr4))
        x = _finite(x + (h / 6.0) * (kx1 + 2 * kx2 + 2 * kx3 + kx4))
        if rotation_residual(r) > REPAIR_TOL:
            r = repair_rotation(r)
        rots[k + 1], trans[k + 1], resid[k + 1] = r, x, rotation_residual(r)
    traj.rotations, traj.translations, traj.orthogonality = rots, trans, resid
    return traj


def transport_r3(rotations: np.ndarray, a0) -> np.ndarray:
    """R(t)^T R(0) a0: body-frame view of a spatially fixed vector."""
    spatial = rotations[0] @ np.asarray(a0, dtype=float)
    return np.einsum("kji,j->ki", rotations, spatial)


def transport_r4(rotations: np.ndarray, translations: np.ndarray, a0) -> np.ndarray:
    """s(t)^T s(0)^{-T} a0 for a = (w, c) in (R^4)*."""
    a0 = np.asarray(a0, dtype=float)
    w = rotations[0] @ a0[:3]
    c = a0[3] - translations[0] @ w
    out = np.empty((len(rotations), 4))
    out[:, :3] = np.einsum("kji,j->ki", rotations, w)
    out[:, 3] = translations @ w + c
    return out


# ---------------------------------------------------------------------------
# linearization and spectra


class Classification(enum.Enum):
    SPECTRALLY_STABLE = "SpectrallyStable"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"


@dataclass
class StabilityReport:
    equilibrium: ReducedState
    equilibrium_residual: float
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    max_real_part: float
    classification: Classification
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "equilibrium_residual": self.equilibrium_residual,
            "jacobian": self.jacobian.tolist(),
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "max_real_part": self.max_real_part,
            "classification": self.classification.value,
            "notes": list(self.notes),
        }


def linearize(rhs: Callable, equilibrium, eps: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian with step ``eps * (1 + |x_i|)`` per coordinate."""
    x0 = np.asarray(equilibrium, dtype=float)
    f0 = np.asarray(rhs(x0), dtype=float)
    res = float(np.max(np.abs(f0))) if f0.size else 0.0
    if not res <= EQUILIBRIUM_TOL:
        raise NotAnEquilibrium(f"rhs at the proposed equilibrium has sup-norm {res:.3g} > {EQUILIBRIUM_TOL:g}")
    jac = np.empty((f0.size, x0.size))
    for i in range(x0.size):
        h = eps * (1.0 + abs(x0[i]))
        e = np.zeros_like(x0)
        e[i] = h
        jac[:, i] = (np.asarray(rhs(x0 + e)) - np.asarray(rhs(x0 - e))) / (2.0 * h)
    return jac


def eigenvalues(jacobian) -> np.ndarray:
    """All eigenvalues of a small dense real matrix (LAPACK QR iteration)."""
    a = np.asarray(jacobian, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("eigenvalues expects a square matrix")
    if a.shape[0] > MAX_EIG_DIM:
        raise ValueError(f"matrix dimension {a.shape[0]} exceeds {MAX_EIG_DIM}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteState("matrix has non-finite entries")
    try:
        return np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc


def classify(max_real: float) -> Classification:
    if max_real > UNSTABLE_TOL:
        return Classification.UNSTABLE
    if max_real < STABLE_TOL:
        return Classification.SPECTRALLY_STABLE
    return Classification.MARGINAL


def stability(loop: ClosedLoop, eps: float = 1e-6) -> StabilityReport:
    """Linearize the closed loop at its desired steady motion and classify the spectrum."""
    state = loop.equilibrium_state()
    y = loop.equilibrium()
    residual = float(np.max(np.abs(loop.rhs(y))))
    jac = linearize(loop.rhs, y, eps)
    eig = eigenvalues(jac)
    max_real = float(np.max(eig.real))
    cls = classify(max_real)
    notes = []
    if cls is Classification.SPECTRALLY_STABLE:
        notes.append(
            "spectral stability only: the closed loop is conservative, so eigenvalues sit on the "
            "imaginary axis and nonlinear stability is not implied by the spectrum alone"
        )
    return StabilityReport(state, residual, jac, eig, max_real, cls, notes)
