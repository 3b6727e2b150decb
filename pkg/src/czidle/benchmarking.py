"""Cross-entropy benchmarking of the continuous gate set.

Each cycle applies an entangling mixing block (independent random
single-qubit gates from {X90, Y90, Z45} on both qubits followed by the
calibrated pi gate) and then the gate under test, so that even weakly
entangling members of the set can be benchmarked. A reference run whose
cycles contain only the mixing block isolates the error of the gate under
test. Circuits are executed as two-qutrit density matrices with per-gate
channels; ideal probabilities come from a noiseless statevector simulation
using the achieved conditional phases, and shots are drawn through the
three-level readout confusion matrices. Leakage is detected by postselecting
on either qutrit reading 2.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import curve_fit

from .calibration import CalibrationRecord
from .device import DeviceParams
from .dynamics import (GateChannel, NoiseParams, damping_generator,
                       dephasing_generator, gate_channel, gate_unitary,
                       unitary_superop, virtual_z_unitary9, embed_six_to_nine)
from .errors import ConfigError, DegenerateDataError, FitError

TWO_PI = 2.0 * math.pi

#: Computational-state indices within the two-qutrit space (3*nh + nl).
COMP_INDICES = (0, 1, 3, 4)

SINGLE_QUBIT_GATES = ("x90", "y90", "z45")


def _single_qutrit_gate(name: str) -> np.ndarray:
    c = 1.0 / math.sqrt(2.0)
    u = np.eye(3, dtype=complex)
    if name == "x90":
        u[:2, :2] = [[c, -1j * c], [-1j * c, c]]
    elif name == "y90":
        u[:2, :2] = [[c, -c], [c, c]]
    elif name == "z45":
        u[1, 1] = np.exp(1j * math.pi / 4.0)
    else:
        raise ConfigError(f"unknown single-qubit gate {name!r}")
    return u

_QUTRIT_GATES = tuple(_single_qutrit_gate(n) for n in SINGLE_QUBIT_GATES)
_QUBIT_GATES = tuple(g[:2, :2] for g in _QUTRIT_GATES)


def _cz_ideal4(theta: float) -> np.ndarray:
    return np.diag([1.0, 1.0, 1.0, np.exp(1j * theta)]).astype(complex)


@dataclass(frozen=True)
class XebConfig:
    """Cross-entropy benchmarking run configuration.

    ``theta`` fixes the conditional phase of the gate under test; ``None``
    selects random-phase mode where each cycle draws a phase uniformly from
    the gate-set grid. Defaults are the full-scale counts; see
    :func:`desk_scale_config` for the small configuration used in CI.
    """

    depths: tuple = (4, 8, 16, 32, 64, 128, 256)
    circuits_per_depth: int = 250
    shots: int = 2048
    theta: Optional[float] = None
    seed: int = 0
    theta_grid_size: int = 32
    ideal_from_target: bool = False   # ideal sim uses target instead of achieved phases

    def __post_init__(self):
        if list(self.depths) != sorted(set(self.depths)):
            raise ConfigError("depths must be strictly increasing")
        if min(self.depths) < 1 or self.circuits_per_depth < 1 or self.shots < 1:
            raise ConfigError("counts must be positive")
        if self.theta_grid_size < 2 or self.theta_grid_size % 2:
            raise ConfigError("theta grid size must be even and >= 2")


def desk_scale_config(**overrides) -> XebConfig:
    """Reduced-size configuration for quick runs and CI."""
    base = dict(depths=(4, 8, 16, 32, 64), circuits_per_depth=30, shots=512)
    base.update(overrides)
    return XebConfig(**base)


@dataclass(frozen=True, eq=False)
class XebCircuit:
    """One random circuit: per-cycle gate picks and phase indices."""

    picks_high: np.ndarray
    picks_low: np.ndarray
    theta_idx: np.ndarray
    basis: str = "z"

    @property
    def depth(self) -> int:
        return len(self.theta_idx)


def sample_circuits(config: XebConfig) -> list[XebCircuit]:
    """Deterministic circuit ensemble for the given configuration.

    Single-qubit picks are independent and uniform per qubit per cycle;
    each circuit uses an RNG stream keyed by (seed, circuit index), so the
    ensemble is reproducible and order-independent.
    """
    circuits = []
    index = 0
    if config.theta is not None:
        k = int(round((config.theta % TWO_PI) / TWO_PI * config.theta_grid_size))
        k %= config.theta_grid_size
    for depth in config.depths:
        for _ in range(config.circuits_per_depth):
            rng = np.random.default_rng([config.seed, index])
            picks_h = rng.integers(0, 3, size=depth)
            picks_l = rng.integers(0, 3, size=depth)
            if config.theta is None:
                th = rng.integers(0, config.theta_grid_size, size=depth)
            else:
                th = np.full(depth, k, dtype=int)
            circuits.append(XebCircuit(picks_high=picks_h, picks_low=picks_l,
                                       theta_idx=th))
            index += 1
    return circuits


@dataclass(frozen=True, eq=False)
class GateSet:
    """Calibrated gate channels on the conditional-phase grid."""

    thetas_target: np.ndarray
    thetas_achieved: np.ndarray
    superops: list
    czpi_superop: np.ndarray
    czpi_theta: float
    duration: float

    @property
    def grid_size(self) -> int:
        return len(self.thetas_target)


def build_gate_set(dev: DeviceParams, record: CalibrationRecord, *,
                   grid_size: int = 32, noise: Optional[NoiseParams] = None,
                   substeps: int = 16) -> GateSet:
    """Channels of the gate set on a uniform conditional-phase grid.

    Random-phase benchmarking draws from this grid; the grid contains pi,
    whose channel doubles as the mixing-block entangler.
    """
    thetas = TWO_PI * np.arange(grid_size) / grid_size
    vz = (record.vz_high, record.vz_low)
    noise_sup = None
    superops: list = []
    achieved = np.empty(grid_size)
    duration = record.params.duration
    for k, th in enumerate(thetas):
        params = record.gate_for_phase(th)
        res = gate_unitary(dev, params, substeps=substeps)
        u9 = virtual_z_unitary9(*vz) @ embed_six_to_nine(res.final)
        sup = unitary_superop(u9)
        if noise is not None:
            if noise_sup is None:
                gen = damping_generator(dev) * params.duration
                gen = gen + dephasing_generator(noise.t_phi) * params.t_int
                noise_sup = expm(gen)
            sup = noise_sup @ sup
        superops.append(sup)
        achieved[k] = res.conditional_phase
    k_pi = grid_size // 2
    return GateSet(thetas_target=thetas, thetas_achieved=achieved,
                   superops=superops, czpi_superop=superops[k_pi],
                   czpi_theta=achieved[k_pi], duration=duration)


def _apply_unitary(rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    return u @ rho @ u.conj().T


def simulate_circuit(circuit: XebCircuit, gate_set: GateSet,
                     confusion: Optional[np.ndarray], shots: Optional[int],
                     rng: Optional[np.random.Generator] = None, *,
                     reference: bool = False,
                     ideal_from_target: bool = False):
    """Execute one circuit; returns (counts9, ideal_probs4).

    The density matrix starts in 00 and per cycle receives the random
    single-qubit unitaries, the pi-gate channel and (unless ``reference``)
    the channel of the gate under test. With ``shots`` given the final
    three-level readout is sampled through ``confusion``; otherwise exact
    outcome probabilities are returned in place of counts.
    """
    rho = np.zeros((9, 9), dtype=complex)
    rho[0, 0] = 1.0
    psi = np.zeros(4, dtype=complex)
    psi[0] = 1.0
    thetas = gate_set.thetas_target if ideal_from_target else gate_set.thetas_achieved
    cz_pi_ideal = _cz_ideal4(math.pi if ideal_from_target else gate_set.czpi_theta)
    for i in range(circuit.depth):
        u1 = np.kron(_QUTRIT_GATES[circuit.picks_high[i]],
                     _QUTRIT_GATES[circuit.picks_low[i]])
        rho = _apply_unitary(rho, u1)
        rho = (gate_set.czpi_superop @ rho.reshape(-1)).reshape(9, 9)
        psi = np.kron(_QUBIT_GATES[circuit.picks_high[i]],
                      _QUBIT_GATES[circuit.picks_low[i]]) @ psi
        psi = cz_pi_ideal @ psi
        if not reference:
            k = circuit.theta_idx[i]
            rho = (gate_set.superops[k] @ rho.reshape(-1)).reshape(9, 9)
            psi = _cz_ideal4(thetas[k]) @ psi
    probs9 = np.clip(np.real(np.diag(rho)), 0.0, None)
    tr = probs9.sum()
    if abs(tr - 1.0) > 1e-9:
        raise ConfigError(f"circuit channel lost trace by {tr - 1.0:.2e}")
    probs9 = probs9 / tr
    if confusion is not None:
        probs9 = probs9 @ confusion
    if shots is None:
        counts = probs9
    else:
        rng = rng or np.random.default_rng()
        counts = rng.multinomial(shots, probs9).astype(float)
    ideal_probs4 = np.abs(psi) ** 2
    return counts, ideal_probs4


def readout_confusion9(dev: DeviceParams) -> np.ndarray:
    """Joint 9x9 confusion matrix of the two three-level readouts."""
    return np.kron(dev.readout_confusion_high, dev.readout_confusion_low)


def postselect_and_renormalize(counts: np.ndarray) -> tuple[np.ndarray, float]:
    """Drop shots with either qutrit read as 2 and renormalize.

    Returns the normalized distribution over the four computational
    outcomes and the excluded fraction. Raises
    :class:`DegenerateDataError` when nothing survives.
    """
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    kept = counts[list(COMP_INDICES)]
    kept_total = kept.sum()
    if kept_total <= 0.0:
        raise DegenerateDataError("all shots were read out as leaked")
    return kept / kept_total, float(1.0 - kept_total / total)


#: Circuits whose ideal output is this close to uniform carry no fidelity
#: information (the estimator denominator vanishes) and are skipped.
UNIFORM_GUARD = 0.02


def estimate_fidelity(counts4: np.ndarray, ideal_probs4: np.ndarray) -> float:
    """Per-circuit linear cross-entropy fidelity estimate.

    Normalized so that sampling the ideal distribution gives 1 and uniform
    sampling gives 0 for any circuit:
    ``F = (<p_ideal> - 1/D) / (sum p_ideal^2 - 1/D)`` with D = 4.

    Raises :class:`DegenerateDataError` for circuits whose ideal output
    distribution is (close to) uniform, where the estimator is undefined;
    such circuits occur at Clifford phases of the gate under test and are
    excluded from depth averages.
    """
    counts4 = np.asarray(counts4, dtype=float)
    p = np.asarray(ideal_probs4, dtype=float)
    n = counts4.sum()
    if n <= 0.0:
        raise DegenerateDataError("no shots to estimate fidelity from")
    m = float(counts4 @ p) / n
    e = float(p @ p)
    u = 1.0 / p.size
    if e - u < UNIFORM_GUARD:
        raise DegenerateDataError("ideal distribution is near-uniform; estimator undefined")
    return (m - u) / (e - u)


@dataclass(frozen=True)
class DecayFit:
    a: float
    b: float
    eps_a: float
    a_err: float
    b_err: float
    eps_err: float


def fit_decay(depths: Sequence[int], f_values: Sequence[float],
              f_errs: Optional[Sequence[float]] = None) -> DecayFit:
    """Fit F(M) = A (1 - 4/3 eps)^M + B to per-depth fidelities."""
    depths = np.asarray(depths, dtype=float)
    f = np.asarray(f_values, dtype=float)
    if depths.size < 3:
        raise FitError("decay fit needs at least three depths")

    def model(m, a, eps, b):
        return a * (1.0 - 4.0 / 3.0 * eps) ** m + b

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = f[1] / f[0] if f[0] > 0 else 0.5
    base = min(max(abs(ratio) ** (1.0 / (depths[1] - depths[0])), 1e-6), 1.0 - 1e-9)
    p0 = (max(f[0], 0.1), 0.75 * (1.0 - base), 0.0)
    sigma = None if f_errs is None else np.clip(np.asarray(f_errs, float), 1e-6, None)
    try:
        popt, pcov = curve_fit(model, depths, f, p0=p0, sigma=sigma,
                               absolute_sigma=f_errs is not None,
                               bounds=([0.0, 0.0, -0.5], [2.0, 1.0, 0.5]),
                               maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"exponential decay fit failed: {exc}") from exc
    perr = np.sqrt(np.clip(np.diag(pcov), 0.0, None))
    return DecayFit(a=popt[0], eps_a=popt[1], b=popt[2],
                    a_err=perr[0], eps_err=perr[1], b_err=perr[2])


def extract_gate_error(eps_tot: float, eps_umix: float) -> tuple[float, bool]:
    """Error of the gate under test from total and reference cycle errors.

    Uses the within-cycle fidelity product
    ``1 - eps_tot = (1 - eps_cz)(1 - eps_umix)``; a negative result is
    clamped to zero and flagged.
    """
    if not (0.0 <= eps_tot < 1.0) or not (0.0 <= eps_umix < 1.0):
        raise ConfigError("cycle errors must lie in [0, 1)")
    eps_cz = 1.0 - (1.0 - eps_tot) / (1.0 - eps_umix)
    if eps_cz < 0.0:
        return 0.0, True
    return eps_cz, False


@dataclass(frozen=True)
class LeakageFit:
    gamma: float
    gamma_err: float
    l_inf: float
    offset: float


def extract_leakage(depths: Sequence[int], leak_fractions: Sequence[float],
                    errs: Optional[Sequence[float]] = None) -> LeakageFit:
    """Leakage per cycle from the depth dependence of leaked-run fractions.

    Fits ``f(M) = c + L_inf (1 - (1 - gamma)^M)``; the offset absorbs the
    readout-confusion baseline. Statistically flat data returns gamma = 0.
    """
    depths = np.asarray(depths, dtype=float)
    f = np.asarray(leak_fractions, dtype=float)
    if depths.size < 3:
        raise FitError("leakage fit needs at least three depths")
    rise = f[-1] - f[0]
    scale = np.max(np.abs(f)) if np.max(np.abs(f)) > 0 else 1.0
    if abs(rise) < 1e-12 * max(scale, 1.0):
        return LeakageFit(gamma=0.0, gamma_err=0.0, l_inf=0.0, offset=float(f.mean()))

    def model(m, c, l_inf, gamma):
        return c + l_inf * (1.0 - (1.0 - gamma) ** m)

    p0 = (max(f[0], 0.0), max(rise, 1e-6), min(max(1.0 / depths[-1], 1e-6), 0.5))
    sigma = None if errs is None else np.clip(np.asarray(errs, float), 1e-9, None)
    try:
        popt, pcov = curve_fit(model, depths, f, p0=p0, sigma=sigma,
                               absolute_sigma=errs is not None,
                               bounds=([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]),
                               maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"leakage fit failed: {exc}") from exc
    gamma_err = float(np.sqrt(max(pcov[2, 2], 0.0)))
    return LeakageFit(gamma=float(popt[2]), gamma_err=gamma_err,
                      l_inf=float(popt[1]), offset=float(popt[0]))


@dataclass(frozen=True, eq=False)
class XebRun:
    """Results of one benchmarking run (plus optional reference)."""

    depths: tuple
    f_mean: np.ndarray
    f_err: np.ndarray
    leak_fraction: np.ndarray
    fit: DecayFit
    leak_fit: LeakageFit
    leaked_run_fraction: float
    theta: Optional[float]
    seed: int
    shots: int
    circuits_per_depth: int
    reference_fit: Optional[DecayFit] = None
    eps_cz: Optional[float] = None
    eps_cz_err: Optional[float] = None
    eps_cz_clamped: bool = False

    def to_dict(self) -> dict:
        doc = {
            "depths": list(self.depths),
            "f_mean": self.f_mean.tolist(),
            "f_err": self.f_err.tolist(),
            "leak_fraction": self.leak_fraction.tolist(),
            "fit": vars(self.fit).copy(),
            "leak_fit": vars(self.leak_fit).copy(),
            "leaked_run_fraction": self.leaked_run_fraction,
            "theta": self.theta,
            "seed": self.seed,
            "shots": self.shots,
            "circuits_per_depth": self.circuits_per_depth,
        }
        if self.reference_fit is not None:
            doc["reference_fit"] = vars(self.reference_fit).copy()
            doc["eps_cz"] = self.eps_cz
            doc["eps_cz_err"] = self.eps_cz_err
            doc["eps_cz_clamped"] = self.eps_cz_clamped
        return doc

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_csv(self, path) -> None:
        data = np.column_stack([self.depths, self.f_mean, self.f_err,
                                self.leak_fraction])
        np.savetxt(path, data, delimiter=",",
                   header="depth,f_xeb_mean,f_xeb_err,leak_fraction", comments="")


def _run_side(circuits, config, gate_set, confusion, *, reference):
    n_depth = len(config.depths)
    f_circ = [[] for _ in range(n_depth)]
    leak_circ = [[] for _ in range(n_depth)]
    idx = 0
    for d, depth in enumerate(config.depths):
        for _ in range(config.circuits_per_depth):
            circ = circuits[idx]
            rng = np.random.default_rng([config.seed, idx, 7 if reference else 3])
            counts, ideal = simulate_circuit(circ, gate_set, confusion, config.shots,
                                             rng, reference=reference,
                                             ideal_from_target=config.ideal_from_target)
            kept, frac = postselect_and_renormalize(counts)
            kept_counts = kept * (counts.sum() * (1.0 - frac))
            leak_circ[d].append(frac)
            try:
                f_circ[d].append(estimate_fidelity(kept_counts, ideal))
            except DegenerateDataError:
                pass  # near-uniform ideal output: no fidelity information
            idx += 1
        if len(f_circ[d]) < 2:
            raise DegenerateDataError(
                f"fewer than two informative circuits at depth {depth}")
    f_mean = np.array([np.mean(v) for v in f_circ])
    f_err = np.array([np.std(v, ddof=1) / math.sqrt(len(v)) for v in f_circ])
    leak = np.array([np.mean(v) for v in leak_circ])
    return f_mean, f_err, leak


def run_xeb(dev: DeviceParams, record: CalibrationRecord, config: XebConfig, *,
            noise: Optional[NoiseParams] = None, gate_set: Optional[GateSet] = None,
            include_reference: bool = True,
            apply_confusion: bool = True) -> XebRun:
    """Full benchmarking run of one gate (or the random-phase set).

    Deterministic for a given configuration and seed. The reference
    measurement (mixing block only) reuses the same circuit ensemble with
    the gate under test omitted.
    """
    if gate_set is None:
        gate_set = build_gate_set(dev, record, grid_size=config.theta_grid_size,
                                  noise=noise)
    confusion = readout_confusion9(dev) if apply_confusion else None
    circuits = sample_circuits(config)
    f_mean, f_err, leak = _run_side(circuits, config, gate_set, confusion,
                                    reference=False)
    fit = fit_decay(config.depths, f_mean, f_err)
    leak_fit = extract_leakage(config.depths, leak)
    result = XebRun(depths=tuple(config.depths), f_mean=f_mean, f_err=f_err,
                    leak_fraction=leak, fit=fit, leak_fit=leak_fit,
                    leaked_run_fraction=float(np.mean(leak)),
                    theta=config.theta, seed=config.seed, shots=config.shots,
                    circuits_per_depth=config.circuits_per_depth)
    if not include_reference:
        return result
    rf_mean, rf_err, _ = _run_side(circuits, config, gate_set, confusion,
                                   reference=True)
    ref_fit = fit_decay(config.depths, rf_mean, rf_err)
    eps_cz, clamped = extract_gate_error(fit.eps_a, ref_fit.eps_a)
    eps_err = math.hypot(fit.eps_err, ref_fit.eps_err)
    return replace(result, reference_fit=ref_fit, eps_cz=eps_cz,
                   eps_cz_err=eps_err, eps_cz_clamped=clamped)


def depolarizing_superop(q: float) -> np.ndarray:
    """Computational-subspace depolarizing channel of parameter q.

    With probability q the computational block is replaced by the
    maximally mixed state on it (leakage populations untouched). For a
    circuit confined to the computational block the resulting XEB decay
    base is exactly (1 - q), i.e. an average cycle error of 3q/4.
    """
    if not 0.0 <= q <= 1.0:
        raise ConfigError("depolarizing parameter must be in [0, 1]")
    eye = np.eye(81, dtype=complex)
    proj = np.zeros((9, 9))
    for i in COMP_INDICES:
        proj[i, i] = 1.0
    comp_mix = np.zeros((81, 81), dtype=complex)
    for i in COMP_INDICES:
        for j in COMP_INDICES:
            comp_mix[i * 9 + i, j * 9 + j] = 0.25
    leak_keep = unitary_superop(np.eye(9) - proj)
    return (1.0 - q) * eye + q * (comp_mix + leak_keep)


def ideal_gate_set(record: CalibrationRecord, *, grid_size: int = 32,
                   extra_superop: Optional[np.ndarray] = None) -> GateSet:
    """Gate set of exact unitaries (optionally composed with a test channel).

    Useful for estimator validation: the channels are ideal controlled-phase
    gates at the grid phases, with ``extra_superop`` (e.g. a depolarizing
    channel) appended to every cycle gate when supplied.
    """
    thetas = TWO_PI * np.arange(grid_size) / grid_size
    superops = []
    for th in thetas:
        u9 = np.eye(9, dtype=complex)
        u4 = _cz_ideal4(th)
        for a, i in enumerate(COMP_INDICES):
            for b, j in enumerate(COMP_INDICES):
                u9[i, j] = u4[a, b]
        sup = unitary_superop(u9)
        if extra_superop is not None:
            sup = extra_superop @ sup
        superops.append(sup)
    k_pi = grid_size // 2
    return GateSet(thetas_target=thetas, thetas_achieved=thetas.copy(),
                   superops=superops, czpi_superop=superops[k_pi],
                   czpi_theta=math.pi, duration=0.0)
