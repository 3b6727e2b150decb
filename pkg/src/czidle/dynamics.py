"""Time-dependent propagation of the two-transmon system.

The six-level model keeps all product states with up to two excitations,
{00, 01, 10, 11, 02, 20}, with exchange couplings J1 (one-excitation
subspace) and J2 (11-20 and 11-02). The Hamiltonian is block-diagonal in
excitation number, so propagation works per block with exact matrix
exponentials of piecewise-constant sub-steps (midpoint sampling of the
flux trajectory). Reported phases are relative to the frame rotating at
the idle state energies, which makes the single-qubit dynamic phases of
the flux excursions explicit outputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .device import DeviceParams
from .errors import ConfigError, NumericError
from .waveform import (SHAPING_SIGMA, GateParams, SampledWaveform, gate_waveforms,
                       half_waveforms, midpoint_flux)

#: Basis labels of the six-level model (high-frequency qubit digit first).
BASIS6 = ("00", "01", "10", "11", "02", "20")
I00, I01, I10, I11, I02, I20 = range(6)

#: Excitation number of each qubit per basis state.
N_HIGH = np.array([0, 0, 1, 1, 0, 2])
N_LOW = np.array([0, 1, 0, 1, 2, 0])

#: Mapping of the six-level basis into the full two-qutrit space (3*nh + nl).
SIX_TO_NINE = tuple(3 * h + l for h, l in zip(N_HIGH, N_LOW))

#: Basis labels of the reduced leakage model used with dissipation.
BASIS3 = ("11", "20", "sink")


def wrap_phase(x):
    """Wrap angles to the interval (-pi, pi]."""
    w = np.mod(np.asarray(x, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return w if w.ndim else float(w)


@dataclass(frozen=True)
class TwoLevelHamiltonian:
    """Static Hamiltonian on the 11-20 subspace, [[0, g2/2], [g2/2, delta]]."""

    delta: float
    g2: float

    def matrix(self) -> np.ndarray:
        return np.array([[0.0, 0.5 * self.g2], [0.5 * self.g2, self.delta]])


@dataclass(frozen=True)
class Segment:
    """One piecewise-constant segment of a two-level drive.

    ``dephasing`` marks the segment as part of the interaction window for
    dissipative propagation; it is ignored by unitary propagation.
    """

    duration: float
    delta: float
    g2: float = 0.0
    dephasing: bool = False


@dataclass(frozen=True)
class NoiseParams:
    """Dissipation rates of the reduced {11, 20, sink} leakage model."""

    t1_11: float
    t1_20: float
    t_phi: float

    def __post_init__(self):
        for name in ("t1_11", "t1_20", "t_phi"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive (use np.inf to disable)")

    @classmethod
    def from_device(cls, dev: DeviceParams) -> "NoiseParams":
        t1_11 = 1.0 / (1.0 / dev.t1_high + 1.0 / dev.t1_low)
        return cls(t1_11=t1_11, t1_20=dev.t1_2_high, t_phi=dev.t_phi)


@dataclass(frozen=True)
class SixLevelModel:
    """Level energies and couplings of the two-transmon model."""

    dev: DeviceParams

    @property
    def j1(self) -> float:
        return self.dev.j1

    @property
    def j2(self) -> float:
        return self.dev.j2

    def energies(self, flux_h, flux_l) -> np.ndarray:
        """Bare level energies (..., 6) at the given fluxes."""
        wh = self.dev.map_high.freq(np.asarray(flux_h, dtype=float))
        wl = self.dev.map_low.freq(np.asarray(flux_l, dtype=float))
        zero = np.zeros_like(wh)
        return np.stack([
            zero,
            wl,
            wh,
            wh + wl,
            2.0 * wl + self.dev.alpha_low,
            2.0 * wh + self.dev.alpha_high,
        ], axis=-1)

    def idle_energies(self) -> np.ndarray:
        return self.energies(0.0, 0.0)

    def hamiltonian(self, flux_h, flux_l) -> np.ndarray:
        """Full (..., 6, 6) Hamiltonian at the given fluxes."""
        e = self.energies(flux_h, flux_l)
        shape = e.shape[:-1]
        h = np.zeros(shape + (6, 6), dtype=float)
        idx = np.arange(6)
        h[..., idx, idx] = e
        h[..., I01, I10] = h[..., I10, I01] = self.j1
        h[..., I11, I20] = h[..., I20, I11] = self.j2
        h[..., I11, I02] = h[..., I02, I11] = self.j2
        return h


@dataclass(frozen=True, eq=False)
class PropagationResult:
    """Final propagator (or density matrix) and derived gate quantities.

    Populations refer to an initial 11 state unless stated otherwise.
    ``conditional_phase`` is the frame-invariant combination
    arg U11,11 - arg U10,10 - arg U01,01 + arg U00,00.
    """

    final: np.ndarray
    basis: tuple
    populations: np.ndarray
    leakage: float
    conditional_phase: Optional[float] = None
    phase_high: Optional[float] = None
    phase_low: Optional[float] = None
    trace_error: float = 0.0
    unitary_lab: Optional[np.ndarray] = None


# -- exact block exponentials -------------------------------------------------

def _expm_2x2(a, b, c, dt):
    """exp(-i H dt) for H = [[a, c], [c, b]] with real entries (batched)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.broadcast_to(np.asarray(c, dtype=float), a.shape)
    mean = 0.5 * (a + b)
    diff = 0.5 * (a - b)
    omega = np.hypot(diff, c)
    ang = omega * dt
    sinc = np.where(omega > 0.0, np.sin(ang) / np.where(omega > 0.0, omega, 1.0), dt)
    cosang = np.cos(ang)
    phase = np.exp(-1j * mean * dt)
    u = np.empty(a.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = phase * (cosang - 1j * sinc * diff)
    u[..., 1, 1] = phase * (cosang + 1j * sinc * diff)
    u[..., 0, 1] = phase * (-1j * sinc * c)
    u[..., 1, 0] = u[..., 0, 1]
    return u


def _expm_herm(h, dt):
    """exp(-i h dt) for stacked Hermitian matrices via eigendecomposition."""
    w, v = np.linalg.eigh(h)
    phase = np.exp(-1j * w * dt)
    return np.einsum("...ik,...k,...jk->...ij", v, phase, v.conj())


def propagate_fluxes(model: SixLevelModel, flux_h: np.ndarray, flux_l: np.ndarray,
                     dt: float) -> np.ndarray:
    """Propagator for flux trajectories sampled at sub-step midpoints.

    ``flux_h``/``flux_l`` have shape (..., n_steps); each step evolves for
    ``dt`` under the constant midpoint Hamiltonian (exact exponential per
    step). Returns the lab-frame propagator of shape (..., 6, 6).
    """
    flux_h = np.asarray(flux_h, dtype=float)
    flux_l = np.asarray(flux_l, dtype=float)
    if flux_h.shape != flux_l.shape:
        raise ConfigError("flux trajectories must share a shape")
    batch = flux_h.shape[:-1]
    n = flux_h.shape[-1]
    wh = model.dev.map_high.freq(flux_h)
    wl = model.dev.map_low.freq(flux_l)
    a_l, a_h = model.dev.alpha_low, model.dev.alpha_high

    u1 = np.zeros(batch + (2, 2), dtype=complex)
    u1[..., 0, 0] = 1.0
    u1[..., 1, 1] = 1.0
    u2 = np.zeros(batch + (3, 3), dtype=complex)
    u2[..., 0, 0] = u2[..., 1, 1] = u2[..., 2, 2] = 1.0
    h2 = np.zeros(batch + (3, 3), dtype=float)
    h2[..., 0, 1] = h2[..., 1, 0] = model.j2
    h2[..., 0, 2] = h2[..., 2, 0] = model.j2

    for k in range(n):
        wh_k = wh[..., k]
        wl_k = wl[..., k]
        step1 = _expm_2x2(wl_k, wh_k, model.j1, dt)
        u1 = step1 @ u1
        h2[..., 0, 0] = wh_k + wl_k
        h2[..., 1, 1] = 2.0 * wl_k + a_l
        h2[..., 2, 2] = 2.0 * wh_k + a_h
        u2 = _expm_herm(h2, dt) @ u2

    u = np.zeros(batch + (6, 6), dtype=complex)
    u[..., I00, I00] = 1.0  # E00 = 0 for all fluxes
    u[..., I01:I10 + 1, I01:I10 + 1] = u1
    u[..., I11:, I11:] = u2
    return u


def idle_frame(model: SixLevelModel, u_lab: np.ndarray, total_time: float) -> np.ndarray:
    """Rotate a lab-frame propagator into the idle-frequency frame."""
    phases = np.exp(1j * model.idle_energies() * total_time)
    return phases[:, None] * u_lab


def idle_unitary(model: SixLevelModel, tau: float) -> np.ndarray:
    """Lab-frame evolution under the static idle Hamiltonian for time tau."""
    h = model.hamiltonian(0.0, 0.0)
    return _expm_herm(h, tau)


def observables_from_unitary(u: np.ndarray, initial: int = I11,
                             basis: tuple = BASIS6) -> PropagationResult:
    """Extract populations, leakage and phases from a frame propagator."""
    pops = np.abs(u[..., :, initial]) ** 2
    if basis is BASIS6:
        leak = float(pops[..., I02] + pops[..., I20])
        ang = np.angle(np.einsum("...ii->...i", u))
        cond = float(wrap_phase(ang[..., I11] - ang[..., I10] - ang[..., I01] + ang[..., I00]))
        ph = float(wrap_phase(ang[..., I10] - ang[..., I00]))
        pl = float(wrap_phase(ang[..., I01] - ang[..., I00]))
    else:
        leak = float(pops[..., 1])
        cond = float(np.angle(u[..., 0, 0]))
        ph = pl = None
    return PropagationResult(final=u, basis=basis, populations=pops, leakage=leak,
                             conditional_phase=cond, phase_high=ph, phase_low=pl)


def gate_unitary(dev: DeviceParams, params: GateParams, *, half: bool = False,
                 substeps: int = 64, sigma0: float = SHAPING_SIGMA,
                 include_line_filter: bool = True, interp: str = "fft",
                 tol: Optional[float] = None) -> PropagationResult:
    """Propagate one gate (or half-pulse) waveform pair on the six-level model.

    With ``tol`` given, the sub-step count is doubled until the populations
    move less than ``tol`` between refinements.
    """
    res = _gate_unitaries_impl(dev, [params], half=half, substeps=substeps,
                               sigma0=sigma0, include_line_filter=include_line_filter,
                               interp=interp)[0]
    if tol is None:
        return res
    for _ in range(6):
        finer = _gate_unitaries_impl(dev, [params], half=half, substeps=2 * substeps,
                                     sigma0=sigma0, include_line_filter=include_line_filter,
                                     interp=interp)[0]
        achieved = float(np.max(np.abs(finer.populations - res.populations)))
        res = finer
        substeps *= 2
        if achieved < tol:
            return res
    raise NumericError("propagation did not converge to requested tolerance",
                       achieved=achieved)


def gate_unitaries(dev: DeviceParams, params_list: Sequence[GateParams], *,
                   half: bool = False, substeps: int = 16,
                   sigma0: float = SHAPING_SIGMA, include_line_filter: bool = True,
                   interp: str = "fft") -> list[PropagationResult]:
    """Batched propagation of many gate parameter sets (one stacked pass)."""
    return _gate_unitaries_impl(dev, params_list, half=half, substeps=substeps,
                                sigma0=sigma0, include_line_filter=include_line_filter,
                                interp=interp)


def _gate_unitaries_impl(dev, params_list, *, half, substeps, sigma0,
                         include_line_filter, interp):
    model = SixLevelModel(dev)
    make = half_waveforms if half else gate_waveforms
    pairs = [make(p, dev, sigma0) for p in params_list]
    n_max = max(wf_h.n for wf_h, _ in pairs)
    dt = dev.sample_period / substeps
    sh = dev.sigma_high if include_line_filter else 0.0
    sl = dev.sigma_low if include_line_filter else 0.0

    def stack(idx, sigma):
        rows = np.zeros((len(pairs), n_max))
        for i, pair in enumerate(pairs):
            rows[i, : pair[idx].n] = pair[idx].samples
        wf = SampledWaveform(samples=rows, sample_period=dev.sample_period)
        return midpoint_flux(wf, substeps, sigma, interp=interp)

    flux_h = stack(0, sh)
    flux_l = stack(1, sl)
    u_lab = propagate_fluxes(model, flux_h, flux_l, dt)
    total = n_max * substeps * dt
    u_frame = idle_frame(model, u_lab, total)
    out = []
    for i in range(len(pairs)):
        res = observables_from_unitary(u_frame[i])
        out.append(PropagationResult(final=res.final, basis=res.basis,
                                     populations=res.populations, leakage=res.leakage,
                                     conditional_phase=res.conditional_phase,
                                     phase_high=res.phase_high, phase_low=res.phase_low,
                                     unitary_lab=u_lab[i]))
    return out


# -- two-level piecewise-constant propagation ---------------------------------

def _as_segments(drive, default_g2: float) -> list[Segment]:
    segs = []
    for item in drive:
        if isinstance(item, Segment):
            segs.append(item)
        else:
            duration, delta = item[0], item[1]
            g2 = item[2] if len(item) > 2 else default_g2
            segs.append(Segment(duration=duration, delta=delta, g2=g2))
    return segs


def propagate_segments(segments: Sequence[Segment]) -> np.ndarray:
    """Exact propagator of a piecewise-constant two-level drive."""
    u = np.eye(2, dtype=complex)
    for seg in segments:
        u = _expm_2x2(0.0, seg.delta, 0.5 * seg.g2, seg.duration) @ u
    return u


def segment_states(segments: Sequence[Segment], psi0: np.ndarray,
                   points_per_segment: int = 512):
    """States sampled densely along a piecewise-constant two-level drive.

    Returns ``(times, states, deltas, g2s)`` where the drive parameters are
    sampled at the same instants as the states (for phase decompositions).
    The final point of each segment is included so the trajectory is closed
    when the drive is cyclic.
    """
    times = [np.array([0.0])]
    states = [np.asarray(psi0, dtype=complex)[None, :]]
    deltas = [np.array([segments[0].delta])]
    g2s = [np.array([segments[0].g2])]
    t0 = 0.0
    psi = np.asarray(psi0, dtype=complex)
    for seg in segments:
        tau = np.linspace(0.0, seg.duration, points_per_segment + 1)[1:]
        u_t = _expm_2x2_var(seg.delta, 0.5 * seg.g2, tau)
        states.append(np.einsum("tij,j->ti", u_t, psi))
        times.append(t0 + tau)
        deltas.append(np.full_like(tau, seg.delta))
        g2s.append(np.full_like(tau, seg.g2))
        psi = states[-1][-1]
        t0 += seg.duration
    return (np.concatenate(times), np.concatenate(states),
            np.concatenate(deltas), np.concatenate(g2s))


def _expm_2x2_var(delta: float, c: float, t: np.ndarray) -> np.ndarray:
    """exp(-i H t) for H = [[0, c], [c, delta]] at an array of times."""
    mean = 0.5 * delta
    diff = -0.5 * delta
    omega = math.hypot(diff, c)
    ang = omega * t
    sinc = np.sin(ang) / omega if omega > 0.0 else t
    phase = np.exp(-1j * mean * t)
    u = np.empty(t.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = phase * (np.cos(ang) - 1j * sinc * diff)
    u[..., 1, 1] = phase * (np.cos(ang) + 1j * sinc * diff)
    u[..., 0, 1] = phase * (-1j * sinc * c)
    u[..., 1, 0] = u[..., 0, 1]
    return u


def propagate_unitary(model, drive, tol: Optional[float] = None, **kwargs) -> PropagationResult:
    """Propagate a state/process under the given model and drive.

    For a :class:`SixLevelModel`, ``drive`` is a pair of sampled waveforms
    (high, low). For a :class:`TwoLevelHamiltonian`, ``drive`` is a sequence
    of piecewise-constant segments, ``(duration, delta[, g2])`` tuples or
    :class:`Segment` objects; per-segment propagation is exact so ``tol``
    is ignored on that path.
    """
    if isinstance(model, SixLevelModel):
        wf_h, wf_l = drive
        params = kwargs.pop("params", None)
        if params is not None:
            return gate_unitary(model.dev, params, tol=tol, **kwargs)
        substeps = kwargs.pop("substeps", 64)
        interp = kwargs.pop("interp", "fft")
        include_line = kwargs.pop("include_line_filter", True)
        dt = wf_h.sample_period / substeps
        sh = model.dev.sigma_high if include_line else 0.0
        sl = model.dev.sigma_low if include_line else 0.0
        fh = midpoint_flux(wf_h, substeps, sh, interp=interp)
        fl = midpoint_flux(wf_l, substeps, sl, interp=interp)
        u_lab = propagate_fluxes(model, fh, fl, dt)
        u = idle_frame(model, u_lab, fh.shape[-1] * dt)
        res = observables_from_unitary(u)
        return PropagationResult(final=res.final, basis=res.basis,
                                 populations=res.populations, leakage=res.leakage,
                                 conditional_phase=res.conditional_phase,
                                 phase_high=res.phase_high, phase_low=res.phase_low,
                                 unitary_lab=u_lab)
    if isinstance(model, TwoLevelHamiltonian):
        segments = _as_segments(drive, model.g2)
        u = propagate_segments(segments)
        pops = np.abs(u[:, 0]) ** 2
        return PropagationResult(final=u, basis=("11", "20"), populations=pops,
                                 leakage=float(pops[1]),
                                 conditional_phase=float(np.angle(u[0, 0])))
    raise ConfigError(f"unsupported model type {type(model)!r}")


# -- superoperator utilities (row-major vectorization) -------------------------

def unitary_superop(u: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> U rho U^dagger."""
    return np.kron(u, u.conj())


def hamiltonian_generator(h: np.ndarray) -> np.ndarray:
    """Generator -i[H, .] in vectorized form."""
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def dissipator(l_op: np.ndarray) -> np.ndarray:
    """Lindblad dissipator D[L] in vectorized form."""
    eye = np.eye(l_op.shape[0])
    ldl = l_op.conj().T @ l_op
    return (np.kron(l_op, l_op.conj())
            - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T))


def propagate_lindblad(segments: Sequence[Segment], noise: NoiseParams,
                       rho0: Optional[np.ndarray] = None) -> PropagationResult:
    """Dissipative propagation of the reduced {11, 20, sink} model.

    Relaxation from 11 and 20 into the sink acts during the whole
    evolution; pure dephasing between 11 and 20 acts only on segments
    flagged as interaction windows. Each piecewise-constant segment is
    propagated with one exact exponential of its Lindblad generator.
    """
    if rho0 is None:
        rho0 = np.zeros((3, 3), dtype=complex)
        rho0[0, 0] = 1.0
    rho = np.asarray(rho0, dtype=complex)

    def rate(t):
        return 0.0 if np.isinf(t) else 1.0 / t

    l_11 = np.zeros((3, 3)); l_11[2, 0] = 1.0
    l_20 = np.zeros((3, 3)); l_20[2, 1] = 1.0
    l_phi = np.diag([1.0, -1.0, 0.0])
    relax = (rate(noise.t1_11) * dissipator(l_11)
             + rate(noise.t1_20) * dissipator(l_20))
    deph = 0.5 * rate(noise.t_phi) * dissipator(l_phi)

    for seg in segments:
        h = np.zeros((3, 3))
        h[0, 1] = h[1, 0] = 0.5 * seg.g2
        h[1, 1] = seg.delta
        gen = hamiltonian_generator(h) + relax
        if seg.dephasing:
            gen = gen + deph
        rho = (expm(gen * seg.duration) @ rho.reshape(-1)).reshape(3, 3)

    pops = np.real(np.diag(rho)).copy()
    trace_err = abs(pops.sum() - 1.0)
    if trace_err > 1e-9:
        raise NumericError("Lindblad propagation lost trace", achieved=trace_err)
    eigmin = float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))))
    if eigmin < -1e-9:
        raise NumericError("density matrix not positive", achieved=eigmin)
    return PropagationResult(final=rho, basis=BASIS3, populations=pops,
                             leakage=float(pops[1].real), trace_error=trace_err)


# -- gate channel ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GateChannel:
    """Two-qutrit process of one calibrated gate instance."""

    unitary: np.ndarray          # 9x9, virtual-Z corrected, noiseless
    superop: np.ndarray          # 81x81, includes dissipation when requested
    duration: float
    theta: float                 # achieved conditional phase
    leakage: float               # noiseless leakage out of 11
    vz_high: float
    vz_low: float


def embed_six_to_nine(u6: np.ndarray) -> np.ndarray:
    """Embed a six-level unitary into the 3x3-product space (rest identity)."""
    u9 = np.eye(9, dtype=complex)
    idx = np.array(SIX_TO_NINE)
    u9[np.ix_(idx, idx)] = u6
    return u9


def virtual_z_unitary9(phi_high: float, phi_low: float) -> np.ndarray:
    """Frame-shift phases per qutrit level, exp(i(phi_h*nh + phi_l*nl))."""
    nh = np.repeat(np.arange(3), 3)
    nl = np.tile(np.arange(3), 3)
    return np.diag(np.exp(1j * (phi_high * nh + phi_low * nl)))


def _qutrit_op(op3: np.ndarray, which: str) -> np.ndarray:
    eye = np.eye(3)
    return np.kron(op3, eye) if which == "high" else np.kron(eye, op3)


def damping_generator(dev: DeviceParams) -> np.ndarray:
    """Amplitude-damping generator on the two-qutrit space from device T1s."""
    low = np.zeros((3, 3)); low[0, 1] = 1.0
    two = np.zeros((3, 3)); two[1, 2] = 1.0
    gen = np.zeros((81, 81), dtype=complex)
    for which, t1, t1_2 in (("high", dev.t1_high, dev.t1_2_high),
                            ("low", dev.t1_low, dev.t1_2_low)):
        gen += dissipator(_qutrit_op(low, which) / math.sqrt(t1))
        gen += dissipator(_qutrit_op(two, which) / math.sqrt(t1_2))
    return gen


def dephasing_generator(t_phi: float) -> np.ndarray:
    """Dephasing generator between the 11 and 20 two-qutrit states."""
    op = np.zeros((9, 9))
    op[4, 4] = 1.0   # |11>
    op[6, 6] = -1.0  # |20>
    return 0.5 / t_phi * dissipator(op)


def gate_channel(params: GateParams, dev: DeviceParams,
                 noise: Optional[NoiseParams] = None, *, substeps: int = 16,
                 sigma0: float = SHAPING_SIGMA,
                 vz: Optional[tuple[float, float]] = None) -> GateChannel:
    """Deterministic two-qutrit process of one gate instance.

    The noiseless unitary is computed on the six-level model, corrected by
    per-qubit virtual-Z phases (defaulting to exact cancellation of the
    propagated single-qubit dynamic phases) and embedded into the 9-level
    product space. With ``noise`` given, amplitude damping over the full
    gate duration (device T1 values, both qutrit levels) and 11-20
    dephasing over the interaction time are composed with the unitary.
    """
    res = gate_unitary(dev, params, substeps=substeps, sigma0=sigma0)
    if vz is None:
        vz = (-res.phase_high, -res.phase_low)
    u9 = virtual_z_unitary9(vz[0], vz[1]) @ embed_six_to_nine(res.final)
    sup = unitary_superop(u9)
    if noise is not None:
        gen = damping_generator(dev) * params.duration
        gen = gen + dephasing_generator(noise.t_phi) * params.t_int
        sup = expm(gen) @ sup
    theta = res.conditional_phase
    return GateChannel(unitary=u9, superop=sup, duration=params.duration,
                       theta=theta, leakage=res.leakage,
                       vz_high=vz[0], vz_low=vz[1])


def average_gate_infidelity(superop: np.ndarray, ideal_unitary: np.ndarray,
                            comp_indices: Sequence[int] = (0, 1, 3, 4)) -> float:
    """Average infidelity of a channel to a target unitary on a subspace.

    Uses the entanglement-fidelity formula restricted to the computational
    indices; leakage out of the subspace is penalized as trace loss.
    """
    comp = list(comp_indices)
    d = len(comp)
    dim = ideal_unitary.shape[0]
    f_pro = 0.0
    for i in comp:
        for j in comp:
            e_ij = np.zeros((dim, dim), dtype=complex)
            e_ij[i, j] = 1.0
            out = (superop @ e_ij.reshape(-1)).reshape(dim, dim)
            out = ideal_unitary.conj().T @ out @ ideal_unitary
            f_pro += out[i, j]
    f_pro = float(np.real(f_pro)) / d**2
    f_avg = (d * f_pro + 1.0) / (d + 1.0)
    return 1.0 - f_avg


def residual_zz(dev: DeviceParams) -> float:
    """Static ZZ coupling at the idle point from dressed eigenvalues.

    Diagonalizes the excitation-number blocks of the six-level model at zero
    flux and returns E11 - E10 - E01 + E00 with eigenstates assigned to bare
    labels by maximum overlap. Vanishes exactly for J2 = 0.
    """
    model = SixLevelModel(dev)
    h = model.hamiltonian(0.0, 0.0)
    h1 = h[I01:I10 + 1, I01:I10 + 1]
    w1, v1 = np.linalg.eigh(h1)
    e01 = w1[np.argmax(np.abs(v1[0, :]))]
    e10 = w1[np.argmax(np.abs(v1[1, :]))]
    h2 = h[I11:, I11:]
    w2, v2 = np.linalg.eigh(h2)
    e11 = w2[np.argmax(np.abs(v2[0, :]))]
    return float(e11 - e10 - e01)
