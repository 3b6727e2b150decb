"""Closed-form gate quantities on the 11-20 subspace.

Everything here uses the dimensionless parameterization of the resonant
exchange: detuning ``delta`` in units of the coupling g2 and interaction
time ``t = t_int*g2 - 2*pi`` offset so that the ideal gate set sits at
``delta = t = 0``. Phase conventions: a 20 amplitude evolving under a
positive detuning loses phase (clockwise rotation about +z of the Bloch
sphere spanned by 11 at the north pole and 20 at the south pole).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * math.pi


def wrap(x):
    """Wrap angles to (-pi, pi]."""
    w = np.mod(np.asarray(x, dtype=float) + np.pi, TWO_PI) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return w if w.ndim else float(w)


def amplitude_c11(delta, t, theta_idle):
    """Final 11 amplitude of the half-pulse / idle / half-pulse sequence.

    ``delta`` and ``t`` are the dimensionless detuning and time offset; the
    idle window applies a pure phase ``exp(-i*theta_idle)`` to the 20 state.
    Broadcasts over array inputs. |c11| <= 1 everywhere.
    """
    delta = np.asarray(delta, dtype=float)
    t = np.asarray(t, dtype=float)
    theta_idle = np.asarray(theta_idle, dtype=float)
    t_int = t + TWO_PI
    omega = np.sqrt(1.0 + delta**2)
    xi = (1.0 - np.exp(-1j * theta_idle)) / (2.0 * omega**2)
    c = np.exp(-0.5j * delta * t_int) * (
        xi + (1.0 - xi) * np.cos(0.5 * omega * t_int)
        + 1j * (delta / omega) * np.sin(0.5 * omega * t_int)
    )
    return c if c.ndim else complex(c)


def population_recovery(delta, t, theta_idle):
    """|c11|^2 for the same arguments as :func:`amplitude_c11`."""
    return np.abs(amplitude_c11(delta, t, theta_idle)) ** 2


#: Leading-order expansions of the population recovery around the gate set:
#: (exponent, coefficient) such that P = 1 + coeff * x**exponent + ...
_TAYLOR = {
    (0.0, "detuning"): (4, -math.pi**2 / 4.0),
    (math.pi, "detuning"): (2, -4.0),
    (0.0, "time"): (2, -0.25),
    (math.pi, "time"): (0, 0.0),
}


def taylor_sensitivity(theta_idle: float, axis: str) -> tuple[int, float]:
    """Leading-order sensitivity of the population recovery.

    Returns ``(order, coefficient)`` of the expansion
    ``P = 1 + coefficient * x**order`` along the requested axis
    (``"detuning"`` or ``"time"``) at ``theta_idle`` equal to 0 or pi.
    The echo point (pi, time) returns order 0 with coefficient 0: the
    recovery is insensitive to the interaction time there.
    """
    if axis not in ("detuning", "time"):
        raise ConfigError(f"axis must be 'detuning' or 'time', got {axis!r}")
    for key, value in _TAYLOR.items():
        if axis == key[1] and math.isclose(theta_idle, key[0], abs_tol=1e-12):
            return value
    raise ConfigError("taylor_sensitivity is tabulated only for theta_idle in {0, pi}")


@dataclass(frozen=True)
class CoherentGateModel:
    """One gate as the unitary Y(lambda) Z(beta) on the 11-20 subspace.

    ``lam`` collects coherent over-rotation (leakage per gate sin^2(lam/2));
    ``beta`` is the phase acquired by leaked population between gates.
    """

    lam: float
    beta: float

    def __post_init__(self):
        for name in ("lam", "beta"):
            v = getattr(self, name)
            if not -math.pi < v <= math.pi:
                raise ConfigError(f"{name} must lie in (-pi, pi], got {v}")

    def unitary(self) -> np.ndarray:
        c, s = math.cos(0.5 * self.lam), math.sin(0.5 * self.lam)
        y = np.array([[c, -s], [s, c]], dtype=complex)
        z = np.diag([np.exp(-0.5j * self.beta), np.exp(0.5j * self.beta)])
        return y @ z


def leakage_ln(model: CoherentGateModel, n: int) -> float:
    """Coherently accumulated leakage |<20|U^n|11>|^2 after n gates.

    Closed form from the Chebyshev expansion of the n-th power of a 2x2
    unitary. The removable singularity where cos(lam/2)*cos(beta/2) = +/-1
    is continued by its limit (the amplification factor tends to n^2).
    """
    if n < 1:
        raise ConfigError("gate count n must be >= 1")
    l1 = math.sin(0.5 * model.lam) ** 2
    c = math.cos(0.5 * model.lam) * math.cos(0.5 * model.beta)
    c = min(1.0, max(-1.0, c))
    x = math.acos(c)
    sx = math.sin(x)
    if abs(sx) < 1e-9:
        amp = float(n * n)
    else:
        amp = (math.sin(n * x) / sx) ** 2
    return l1 * amp


def leakage_ln_small(l1: float, beta: float, n: int) -> float:
    """Small-leakage interference pattern of the accumulated leakage.

    First order in the single-gate leakage ``l1``:
    ``L_n = l1 * (1 - cos(n*beta)) / (1 - cos(beta))``, 2*pi-periodic in
    ``beta``. On the constructive fringe (beta = 0 mod 2*pi) the rotations
    add up exactly and the resummed form ``sin^2(n*sqrt(l1))`` is returned,
    which reduces to ``n^2 * l1`` for small arguments and to
    ``sin^2(2*n*delta)`` when ``l1 = 4*delta^2``.
    """
    if n < 1:
        raise ConfigError("gate count n must be >= 1")
    if not 0.0 <= l1 <= 1.0:
        raise ConfigError("l1 must be a probability")
    denom = 1.0 - math.cos(beta)
    if denom < 1e-12:
        return math.sin(n * math.sqrt(l1)) ** 2
    return l1 * (1.0 - math.cos(n * beta)) / denom


def geom_phase_circle(delta: float, g2: float) -> float:
    """Conditional phase of a full-recovery circular trajectory.

    For a single resonant exchange at constant detuning the trajectory is a
    circle on the 11-20 Bloch sphere and the conditional phase is minus half
    the enclosed solid angle: ``-pi * (1 + delta/sqrt(g2^2 + delta^2))``,
    in (-2*pi, 0).
    """
    if g2 == 0.0:
        raise ConfigError("g2 must be nonzero")
    return -math.pi * (1.0 + delta / math.hypot(g2, delta))


@dataclass(frozen=True)
class GeometricDecomposition:
    """Split of a cyclic-evolution phase into geometric and dynamic parts."""

    theta_g: float
    theta_d: float
    solid_angle: float

    @property
    def total(self) -> float:
        return wrap(self.theta_g + self.theta_d)


def bloch_vector(states: np.ndarray) -> np.ndarray:
    """Bloch vectors of two-level states (11 at the north pole)."""
    a = states[..., 0]
    b = states[..., 1]
    return np.stack([2.0 * np.real(np.conj(a) * b),
                     2.0 * np.imag(np.conj(a) * b),
                     np.abs(a) ** 2 - np.abs(b) ** 2], axis=-1)


def solid_angle_polyline(points: np.ndarray) -> float:
    """Signed solid angle enclosed by a closed polyline on the unit sphere.

    Sums signed spherical-triangle excesses of a fan anchored at the loop's
    vector-area direction (falling back to the mean direction and then to
    the first vertex for degenerate loops). The sign follows the traversal
    orientation: positive for counter-clockwise loops seen from outside the
    enclosed region.
    """
    v = np.asarray(points, dtype=float)
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    cross = np.cross(v[:-1], v[1:])
    area_vec = 0.5 * cross.sum(axis=0)
    candidates = [area_vec, v.mean(axis=0), v[0] + 1e-3 * np.array([0.3, 0.7, 0.1])]
    for q in candidates:
        norm = np.linalg.norm(q)
        if norm > 1e-9:
            q = q / norm
            break
    else:  # pragma: no cover - unreachable for sane input
        raise ConfigError("cannot anchor the spherical fan")
    a = np.broadcast_to(q, v[:-1].shape)
    b, c = v[:-1], v[1:]
    num = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) \
        + np.einsum("ij,ij->i", c, a)
    return float(2.0 * np.arctan2(num, den).sum())


def aharonov_anandan(bloch: np.ndarray, deltas: np.ndarray, g2s,
                     times: np.ndarray) -> GeometricDecomposition:
    """Geometric/dynamic decomposition of the phase of a cyclic trajectory.

    ``bloch`` holds Bloch vectors sampled along the evolution, ``deltas``
    and ``g2s`` the Hamiltonian parameters at the same instants. The
    trajectory must close on itself within 1e-6. The dynamic phase is
    ``-integral <H> dt`` with ``<H> = delta*(1 - z)/2 + g2*x/2`` and the
    geometric phase is minus half the enclosed solid angle; their sum
    reproduces the total phase of the cycle modulo 2*pi.
    """
    bloch = np.asarray(bloch, dtype=float)
    if np.linalg.norm(bloch[0] - bloch[-1]) > 1e-6:
        raise ConfigError("trajectory is not cyclic (start != end)")
    deltas = np.asarray(deltas, dtype=float)
    g2s = np.broadcast_to(np.asarray(g2s, dtype=float), deltas.shape)
    h_expect = 0.5 * deltas * (1.0 - bloch[:, 2]) + 0.5 * g2s * bloch[:, 0]
    theta_d = -float(np.trapz(h_expect, times))
    s = solid_angle_polyline(bloch)
    theta_g = -0.5 * s
    return GeometricDecomposition(theta_g=theta_g, theta_d=theta_d, solid_angle=s)


def rotate_about_z(r: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    x, y, z = r
    return np.array([c * x - s * y, s * x + c * y, z])


def commute_z_axis(r_axis: np.ndarray, theta_d: float) -> np.ndarray:
    """Axis of the second rotation after commuting out the middle Z.

    For U = R(r, lam) Z(theta_d) R(r, lam) with Z(theta_d) the Bloch
    rotation by theta_d about +z (phase exp(i*theta_d) on the 20 state),
    the identity U = Z(theta_d) R(r', lam) R(r, lam) holds with
    ``r' = Rz(-theta_d) r``. The returned axis is unit-norm.
    """
    r = np.asarray(r_axis, dtype=float)
    norm = np.linalg.norm(r)
    if norm < 1e-300:
        raise ConfigError("rotation axis must be nonzero")
    return rotate_about_z(r / norm, -theta_d)


def axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """SU(2) rotation exp(-i*angle/2 * axis.sigma)."""
    ax = np.asarray(axis, dtype=float)
    ax = ax / np.linalg.norm(ax)
    sx = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    sy = np.array([[0.0, -1j], [1j, 0.0]])
    sz = np.diag([1.0, -1.0]).astype(complex)
    h = ax[0] * sx + ax[1] * sy + ax[2] * sz
    return (math.cos(0.5 * angle) * np.eye(2, dtype=complex)
            - 1j * math.sin(0.5 * angle) * h)


def z_rotation(angle: float) -> np.ndarray:
    """Bloch rotation by ``angle`` about +z: phase exp(i*angle) on 20."""
    return np.diag([1.0, np.exp(1j * angle)])
