"""Lie-Poisson brackets on duals of semidirect products built over se(3).

Brackets consume gradients that the caller has already evaluated; nothing
here differentiates.  Phase spaces are identified by a bracket id:

========== =========================================== =====
id          coordinates                                 dim
========== =========================================== =====
se3         (Pi, P)                                      6
se3_r3      (Pi, P, Gamma)                               9
se3_r4      (Pi, P, Gamma, h)                           10
se3_r3_r3   (Pi, P, Gamma, Theta)                       12
drift       (Pi, P, Gamma, Delta_1, delta_1, Delta_2,   17
            delta_2)
========== =========================================== =====

The flat ordering matches :class:`epshape.systems.Layout`.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable

import numpy as np

from epshape.algebra import cross
from epshape.errors import ArityMismatch

# (field name, width) in flat order, after Pi and P
_FIELDS = {
    "se3": (),
    "se3_r3": (("gamma", 3),),
    "se3_r4": (("a4", 4),),
    "se3_r3_r3": (("gamma", 3), ("theta", 3)),
    "drift": (("gamma", 3), ("d1", 4), ("d2", 4)),
}
BRACKETS = tuple(_FIELDS)


def dimension(bracket_id: str) -> int:
    return 6 + sum(w for _, w in _fields(bracket_id))


def _fields(bracket_id: str):
    try:
        return _FIELDS[bracket_id]
    except KeyError:
        raise ValueError(f"unknown bracket '{bracket_id}', expected one of {BRACKETS}") from None


def _split(bracket_id: str, x: np.ndarray) -> dict[str, np.ndarray]:
    out = {"pi": x[..., 0:3], "p": x[..., 3:6]}
    k = 6
    for name, w in _fields(bracket_id):
        out[name] = x[..., k : k + w]
        k += w
    return out


@dataclass(frozen=True)
class PhasePoint:
    pi: np.ndarray
    p: np.ndarray
    gamma: np.ndarray | None = None
    a4: np.ndarray | None = None
    theta: np.ndarray | None = None
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None

    def flat(self, bracket_id: str) -> np.ndarray:
        return _flatten(self, bracket_id, ("pi", "p"))

    @classmethod
    def from_flat(cls, bracket_id: str, x) -> PhasePoint:
        x = _check_len(bracket_id, x)
        return cls(**{k: v.copy() for k, v in _split(bracket_id, x).items()})


@dataclass(frozen=True)
class GradientEval:
    """Partial derivatives of a function on the phase space, field by field."""

    d_pi: np.ndarray
    d_p: np.ndarray
    d_gamma: np.ndarray | None = None
    d_a4: np.ndarray | None = None
    d_theta: np.ndarray | None = None
    d_d1: np.ndarray | None = None
    d_d2: np.ndarray | None = None

    def flat(self, bracket_id: str) -> np.ndarray:
        return _flatten(self, bracket_id, ("d_pi", "d_p"), prefix="d_")

    @classmethod
    def from_flat(cls, bracket_id: str, x) -> GradientEval:
        x = _check_len(bracket_id, x)
        return cls(**{"d_" + k: v.copy() for k, v in _split(bracket_id, x).items()})


def _check_len(bracket_id, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (dimension(bracket_id),):
        raise ArityMismatch(f"bracket '{bracket_id}' expects {dimension(bracket_id)} coordinates, got {x.shape}")
    return x


def _flatten(obj, bracket_id, head, prefix=""):
    parts = [np.asarray(getattr(obj, h), dtype=float) for h in head]
    for name, w in _fields(bracket_id):
        val = getattr(obj, prefix + name)
        if val is None:
            raise ArityMismatch(f"bracket '{bracket_id}' needs field '{prefix + name}'")
        val = np.asarray(val, dtype=float)
        if val.shape != (w,):
            raise ArityMismatch(f"field '{prefix + name}' must have {w} components")
        parts.append(val)
    extra = [
        f.name
        for f in fields(obj)
        if getattr(obj, f.name) is not None
        and f.name not in head
        and f.name[len(prefix) :] not in dict(_fields(bracket_id))
    ]
    if extra:
        raise ArityMismatch(f"fields {extra} are not coordinates of bracket '{bracket_id}'")
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# bracket terms


# gradients may carry leading batch axes; the phase point never does


def _inner(a, b):
    return np.einsum("...i,...i->...", a, b)


def _se3_terms(z, f, h):
    return -_inner(z["pi"], cross(f["pi"], h["pi"])) - _inner(
        z["p"], cross(f["pi"], h["p"]) - cross(h["pi"], f["p"])
    )


def _r3_term(a, f_pi, h_pi, f_a, h_a):
    return -_inner(a, cross(f_pi, h_a) - cross(h_pi, f_a))


def _r4_term(a, f_pi, f_p, h_pi, h_p, f_a, h_a):
    vec = a[:3]
    return -_inner(
        vec,
        cross(f_pi, h_a[..., :3]) - cross(h_pi, f_a[..., :3]) - f_a[..., 3:] * h_p + h_a[..., 3:] * f_p,
    )


def _bracket_terms(bracket_id, z, f, h):
    val = _se3_terms(z, f, h)
    for name, w in _fields(bracket_id):
        if w == 3:
            val = val + _r3_term(z[name], f["pi"], h["pi"], f[name], h[name])
        else:
            val = val + _r4_term(z[name], f["pi"], f["p"], h["pi"], h["p"], f[name], h[name])
    return val


def bracket_flat(bracket_id: str, z, df, dh) -> float:
    """{f, h}(z) on flat coordinate and gradient vectors."""
    z = _split(bracket_id, _check_len(bracket_id, z))
    f = _split(bracket_id, _check_len(bracket_id, df))
    h = _split(bracket_id, _check_len(bracket_id, dh))
    return float(_bracket_terms(bracket_id, z, f, h))


def bracket(bracket_id: str, z: PhasePoint, df: GradientEval, dh: GradientEval) -> float:
    return bracket_flat(bracket_id, z.flat(bracket_id), df.flat(bracket_id), dh.flat(bracket_id))


def bracket_se3(z: PhasePoint, df: GradientEval, dh: GradientEval) -> float:
    """Lie-Poisson bracket on se(3)*; only the (Pi, P) fields are read."""
    zz = {"pi": np.asarray(z.pi, float), "p": np.asarray(z.p, float)}
    ff = {"pi": np.asarray(df.d_pi, float), "p": np.asarray(df.d_p, float)}
    hh = {"pi": np.asarray(dh.d_pi, float), "p": np.asarray(dh.d_p, float)}
    return float(_se3_terms(zz, ff, hh))


def bracket_se3_r3(z: PhasePoint, df: GradientEval, dh: GradientEval) -> float:
    return bracket("se3_r3", z, df, dh)


def bracket_drift(z: PhasePoint, df: GradientEval, dh: GradientEval) -> float:
    """Bracket of the drift-prevention closed loop (Gamma in R^3, Delta_i in R^4)."""
    return bracket("drift", z, df, dh)


def hamiltonian_rhs(bracket_id: str, z: PhasePoint, grad_h: GradientEval) -> PhasePoint:
    """Rates dz_i/dt = {z_i, h} assembled coordinate by coordinate."""
    zf = z.flat(bracket_id)
    hf = grad_h.flat(bracket_id)
    return PhasePoint.from_flat(bracket_id, hamiltonian_rhs_flat(bracket_id, zf, hf))


def hamiltonian_rhs_flat(bracket_id: str, z, dh) -> np.ndarray:
    """Rates {z_i, h} for every coordinate, all basis covectors in one batched bracket."""
    z = _split(bracket_id, _check_len(bracket_id, z))
    h = _split(bracket_id, _check_len(bracket_id, dh))
    return _bracket_terms(bracket_id, z, _split(bracket_id, np.eye(dimension(bracket_id))), h)


# ---------------------------------------------------------------------------
# Casimirs


@dataclass(frozen=True)
class Casimir:
    name: str
    value: Callable[[dict], float]
    gradient: Callable[[dict], dict]

    def __call__(self, bracket_id: str, z):
        """Value at ``z``; rows of a 2-D ``z`` give an array of values."""
        z = np.asarray(z, float)
        if z.shape[-1] != dimension(bracket_id):
            raise ArityMismatch(f"{bracket_id} expects vectors of length {dimension(bracket_id)}, got {z.shape[-1]}")
        val = self.value(_split(bracket_id, z))
        return float(val) if z.ndim == 1 else val

    def grad_flat(self, bracket_id: str, z) -> np.ndarray:
        zz = _split(bracket_id, np.asarray(z, float))
        g = {k: np.zeros_like(v) for k, v in zz.items()}
        g.update(self.gradient(zz))
        out = [g["pi"], g["p"]] + [g[name] for name, _ in _fields(bracket_id)]
        return np.concatenate(out)


def _rowdot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _sq(name, label, part=slice(0, 3)):
    return Casimir(
        label,
        lambda z: _rowdot(z[name][..., part], z[name][..., part]),
        lambda z: {name: _embed(z[name], part, 2.0 * z[name][part])},
    )


def _dot(a, b, label):
    return Casimir(
        label,
        lambda z: _rowdot(z[a][..., :3], z[b][..., :3]),
        lambda z: {a: _embed(z[a], slice(0, 3), z[b][:3]), b: _embed(z[b], slice(0, 3), z[a][:3])},
    )


def _embed(like, part, val):
    out = np.zeros_like(like)
    out[part] = val
    return out


def _triple(p, a, b, label):
    return Casimir(
        label,
        lambda z: _rowdot(z[p], cross(z[a][..., :3], z[b][..., :3])),
        lambda z: {
            p: cross(z[a][:3], z[b][:3]),
            a: _embed(z[a], slice(0, 3), cross(z[b][:3], z[p])),
            b: _embed(z[b], slice(0, 3), cross(z[p], z[a][:3])),
        },
    )


# The drift list is the one stated for that closed loop; the rest were
# verified numerically (see tests/test_poisson.py).
CASIMIRS: dict[str, tuple[Casimir, ...]] = {
    "se3": (_sq("p", "|P|^2"), _dot("pi", "p", "Pi.P")),
    "se3_r3": (_sq("gamma", "|Gamma|^2"), _dot("p", "gamma", "P.Gamma"), _sq("p", "|P|^2")),
    "se3_r4": (_sq("a4", "|Gamma|^2"),),
    "se3_r3_r3": (
        _sq("gamma", "|Gamma|^2"),
        _sq("theta", "|Theta|^2"),
        _dot("gamma", "theta", "Gamma.Theta"),
        _dot("p", "gamma", "P.Gamma"),
        _dot("p", "theta", "P.Theta"),
        _sq("p", "|P|^2"),
    ),
    "drift": (
        _triple("p", "d1", "d2", "P.(Delta1 x Delta2)"),
        _sq("gamma", "|Gamma|^2"),
        _sq("d1", "|Delta1|^2"),
        _sq("d2", "|Delta2|^2"),
        _dot("gamma", "d1", "Gamma.Delta1"),
        _dot("gamma", "d2", "Gamma.Delta2"),
        _dot("d1", "d2", "Delta1.Delta2"),
    ),
}


def casimir_values(bracket_id: str, z) -> dict:
    return {c.name: c(bracket_id, z) for c in CASIMIRS[bracket_id]}


# ---------------------------------------------------------------------------
# Jacobi identity probe

_STENCIL = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])


def _fd_gradient(fun, z, eps):
    # five-point central stencil: exact on polynomials of degree <= 4
    g = np.empty_like(z)
    for i in range(z.size):
        vals = []
        for off in _OFFSETS:
            zz = z.copy()
            zz[i] += off * eps
            vals.append(fun(zz))
        g[i] = _STENCIL @ np.array(vals) / eps
    return g


def _test_functions(n, kind, rng):
    funcs = []
    for _ in range(4):
        b = rng.standard_normal(n)
        if kind == "linear":
            funcs.append(lambda z, b=b: b.copy())
        else:
            a = rng.standard_normal((n, n))
            a = 0.5 * (a + a.T)
            funcs.append(lambda z, a=a, b=b: a @ z + b)
    return funcs


def jacobi_probe(bracket_id, z, kind: str = "quadratic", eps: float = 0.1, seed: int = 7) -> float:
    """Largest Jacobi-identity defect over a fixed family of test functions.

    ``bracket_id`` may also be a callable ``(z, df, dh) -> float`` paired with
    the dimension given by ``len(z)``; this is how perturbed brackets are
    probed.  Inner brackets are differentiated by finite differences.
    """
    z = np.asarray(z, dtype=float)
    if callable(bracket_id):
        br = bracket_id
    else:
        _check_len(bracket_id, z)
        br = lambda zz, f, h: bracket_flat(bracket_id, zz, f, h)  # noqa: E731
    grads = _test_functions(z.size, kind, np.random.default_rng(seed))

    def nested(f, g, h):
        inner = lambda zz: br(zz, g(zz), h(zz))  # noqa: E731
        return br(z, f(z), _fd_gradient(inner, z, eps))

    worst = 0.0
    n = len(grads)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                f, g, h = grads[i], grads[j], grads[k]
                total = nested(f, g, h) + nested(g, h, f) + nested(h, f, g)
                worst = max(worst, abs(total))
    return worst
