"""Calibration pipeline producing the single-parameter continuous gate set.

The pipeline mirrors a hardware tune-up on the simulated device:

1. rectangular half-pulses are tuned for a full 11 -> 20 exchange by
   iterating one-dimensional quadratic-fit sweeps of amplitude and duration,
2. the interaction detuning is fine-tuned at the zero-conditional-phase
   point by minimizing leakage amplified over repeated gates (maximized
   over the gate separation),
3. the interaction time is fine-tuned at the pi-conditional-phase point by
   minimizing single-gate leakage,
4. the conditional phase is characterized versus idle time, fitted with a
   linear model and inverted with a cubic spline,
5. per-qubit dynamic phases are measured once for the whole set and stored
   as virtual-Z corrections.

Measurements default to exact expectation values; pass a shot count for
sampled three-level readout through the confusion matrices.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import curve_fit

from .device import DeviceParams
from .dynamics import (BASIS6, I00, I01, I02, I10, I11, I20, N_HIGH, N_LOW,
                       PropagationResult, SixLevelModel, gate_unitaries,
                       gate_unitary, idle_unitary, wrap_phase)
from .errors import CalibrationError, ConfigError, FitError, FrequencyRangeError
from .waveform import SHAPING_SIGMA, GateParams

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

#: Default grid step of the detuning fine-tuning stage, in units of g2.
DETUNING_STEP = 4e-3


@dataclass(frozen=True)
class CalSettings:
    """Knobs of the calibration pipeline (defaults follow the tune-up recipe)."""

    sweep_points: int = 5
    sweep_span: float = 0.02          # relative half-width of 1-D sweeps
    rel_tol: float = 1e-4             # convergence threshold for parameter updates
    max_iter: int = 10
    n_phase_points: int = 12
    idle_lo: float = 11.0e-9          # start of the idle-time window
    idle_span_factor: float = 1.07    # table span in units of 2*pi/slope
    n_amplify: int = 16               # gates in the leakage-amplification stage
    detuning_step: float = DETUNING_STEP
    detuning_halfwidth: int = 15      # scan +- this many steps
    n_tsep: int = 24
    tsep_periods: float = 2.0
    substeps: int = 16
    refusal_tol: float = 1e-8         # objective span below which a sweep refuses
    shots: Optional[int] = None


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Populations (and optionally phase) measured over a parameter grid."""

    axes: dict
    recovery: np.ndarray
    leakage: np.ndarray
    phase: Optional[np.ndarray] = None
    shots: Optional[int] = None


@dataclass(frozen=True, eq=False)
class CalibrationRecord:
    """Tuned gate parameters plus the idle-time-to-phase characterization."""

    params: GateParams
    t_idle_table: np.ndarray
    theta_table: np.ndarray           # unwrapped conditional phases
    slope: float
    intercept: float
    residuals: np.ndarray
    vz_high: float
    vz_low: float
    delta_max: float
    interpolator_kind: str = "cubic-spline"

    def __post_init__(self):
        if np.max(np.abs(self.residuals)) >= math.pi / 180.0:
            raise CalibrationError("phase-vs-idle residuals exceed pi/180 rad")
        if abs(abs(self.slope) - self.delta_max) > 0.01 * self.delta_max:
            raise CalibrationError("fitted slope deviates from the idle detuning by > 1%")

    def theta_of_idle(self, t_idle: float) -> float:
        spline = CubicSpline(self.t_idle_table, self.theta_table)
        return float(spline(t_idle))

    def idle_time_for_phase(self, theta: float) -> float:
        return idle_time_for_phase(self, theta)

    def gate_for_phase(self, theta: float) -> GateParams:
        return replace(self.params, t_idle=self.idle_time_for_phase(theta))

    def to_dict(self) -> dict:
        return {
            "params": asdict(self.params),
            "t_idle_table": self.t_idle_table.tolist(),
            "theta_table": self.theta_table.tolist(),
            "slope": self.slope,
            "intercept": self.intercept,
            "residuals": self.residuals.tolist(),
            "vz_high": self.vz_high,
            "vz_low": self.vz_low,
            "delta_max": self.delta_max,
            "interpolator_kind": self.interpolator_kind,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "CalibrationRecord":
        return cls(
            params=GateParams(**doc["params"]),
            t_idle_table=np.asarray(doc["t_idle_table"]),
            theta_table=np.asarray(doc["theta_table"]),
            slope=doc["slope"],
            intercept=doc["intercept"],
            residuals=np.asarray(doc["residuals"]),
            vz_high=doc["vz_high"],
            vz_low=doc["vz_low"],
            delta_max=doc["delta_max"],
            interpolator_kind=doc.get("interpolator_kind", "cubic-spline"),
        )

    @classmethod
    def from_json(cls, path) -> "CalibrationRecord":
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- simulated measurements -----------------------------------------------------

def _qutrit_populations_high(pops: np.ndarray) -> np.ndarray:
    """Three-level populations of the high-frequency qubit."""
    out = np.zeros(pops.shape[:-1] + (3,))
    for idx, nh in enumerate(N_HIGH):
        out[..., nh] += pops[..., idx]
    return out


def _sample_readout(p3: np.ndarray, confusion: np.ndarray, shots: int,
                    rng: np.random.Generator) -> np.ndarray:
    p_read = p3 @ confusion
    counts = rng.multinomial(shots, p_read / p_read.sum())
    return counts / shots


def measure_population_recovery(dev: DeviceParams, params: GateParams, *,
                                half: bool = False, shots: Optional[int] = None,
                                rng: Optional[np.random.Generator] = None,
                                substeps: int = 16) -> np.ndarray:
    """Three-level populations of the high-frequency qubit after the pulse.

    Prepares 11 with ideal pi pulses, plays the flux waveforms (half or
    full net-zero pair) and reads out the high-frequency qubit. Without
    ``shots`` the exact populations are returned; with ``shots`` the
    confusion matrix is applied and a multinomial sample drawn.
    """
    res = gate_unitary(dev, params, half=half, substeps=substeps)
    p3 = _qutrit_populations_high(res.populations)
    if shots is None:
        return p3
    rng = rng or np.random.default_rng()
    return _sample_readout(p3, dev.readout_confusion_high, shots, rng)


def _phase_from_unitary(res: PropagationResult) -> float:
    return res.conditional_phase


def measure_conditional_phase(dev: DeviceParams, params: GateParams, *,
                              shots: Optional[int] = None,
                              rng: Optional[np.random.Generator] = None,
                              substeps: int = 16, n_ramsey_phases: int = 12) -> float:
    """Conditional phase of the gate from two Ramsey fringes.

    The low-frequency qubit is prepared on the equator, the gate applied
    with the high-frequency qubit in 0 or 1, and the phase of the final
    pi/2 pulse swept. The fringe-phase difference is the conditional phase
    in (-pi, pi]. Exact mode reads it directly off the propagated unitary;
    sampled mode fits cosines to simulated fringes and raises
    :class:`FitError` when the contrast drops below 0.1.
    """
    res = gate_unitary(dev, params, substeps=substeps)
    if shots is None:
        return _phase_from_unitary(res)
    rng = rng or np.random.default_rng()
    u = res.final
    phases = np.linspace(0.0, TWO_PI, n_ramsey_phases, endpoint=False)
    fringe = np.empty((2, n_ramsey_phases))
    for ctrl, (i0, i1) in enumerate((((I00), (I01)), ((I10), (I11)))):
        psi0 = np.zeros(6, dtype=complex)
        psi0[i0] = 1.0 / math.sqrt(2.0)
        psi0[i1] = 1.0 / math.sqrt(2.0)
        psi1 = u @ psi0
        a0, a1 = psi1[i0], psi1[i1]
        for k, ph in enumerate(phases):
            # final pi/2 rotation of the low qubit about the axis at angle ph
            b0 = (a0 - 1j * np.exp(-1j * ph) * a1) / math.sqrt(2.0)
            b1 = (-1j * np.exp(1j * ph) * a0 + a1) / math.sqrt(2.0)
            p_low = np.zeros(3)
            p_low[0] = abs(b0) ** 2
            p_low[1] = abs(b1) ** 2
            p_low[2] = 1.0 - p_low[0] - p_low[1]
            p_read = np.clip(p_low, 0.0, 1.0) @ dev.readout_confusion_low
            counts = rng.multinomial(shots, p_read / p_read.sum())
            fringe[ctrl, k] = counts[1] / shots

    def fit_phase(y):
        c = np.fft.rfft(y)[1]
        contrast = 2.0 * abs(c) / y.size
        if contrast < 0.1:
            raise FitError(f"Ramsey contrast {contrast:.3f} below 0.1")
        return -np.angle(c)

    return float(wrap_phase(fit_phase(fringe[1]) - fit_phase(fringe[0])))


def chevron_scan(dev: DeviceParams, params: GateParams,
                 t_int_values: Sequence[float], phi_low_values: Sequence[float], *,
                 half: bool = True, include_phase: bool = False,
                 shots: Optional[int] = None,
                 rng: Optional[np.random.Generator] = None,
                 substeps: int = 16) -> SweepResult:
    """Population-exchange pattern over interaction time and flux amplitude.

    Returns recovery (P1 of the high qubit), leakage (P2) and, for full
    net-zero pulses with ``include_phase``, the conditional phase on the
    same grid. Grid axes are ordered (t_int, phi_low).
    """
    grid = [replace(params, t_int=t, phi_low=a)
            for t in t_int_values for a in phi_low_values]
    results = gate_unitaries(dev, grid, half=half, substeps=substeps)
    shape = (len(t_int_values), len(phi_low_values))
    p3 = np.array([_qutrit_populations_high(r.populations) for r in results])
    if shots is not None:
        rng = rng or np.random.default_rng()
        p3 = np.array([_sample_readout(row, dev.readout_confusion_high, shots, rng)
                       for row in p3])
    recovery = p3[:, 1].reshape(shape)
    leakage = p3[:, 2].reshape(shape)
    phase = None
    if include_phase and not half:
        phase = np.array([r.conditional_phase for r in results]).reshape(shape)
    return SweepResult(axes={"t_int": np.asarray(t_int_values),
                             "phi_low": np.asarray(phi_low_values)},
                       recovery=recovery, leakage=leakage, phase=phase, shots=shots)


def fit_exchange_frequency(t_int_values: np.ndarray, p2_values: np.ndarray) -> float:
    """Angular frequency of the exchange fringe P2(t) ~ sin^2(omega*t/2)."""
    t = np.asarray(t_int_values, dtype=float)
    y = np.asarray(p2_values, dtype=float)
    dt = t[1] - t[0]
    spec = np.abs(np.fft.rfft(y - y.mean()))
    freqs = np.fft.rfftfreq(y.size, d=dt)
    f0 = freqs[np.argmax(spec)]

    def model(tt, amp, freq, phase, off):
        return amp * np.sin(math.pi * freq * tt + phase) ** 2 + off

    try:
        popt, _ = curve_fit(model, t, y, p0=(y.ptp(), f0, 0.0, y.min()), maxfev=20000)
    except RuntimeError as exc:
        raise FitError(f"exchange-fringe fit failed: {exc}") from exc
    return float(TWO_PI * abs(popt[1]))


# -- tuning stages ----------------------------------------------------------------


def _quadratic_extremum(x: np.ndarray, y: np.ndarray, maximize: bool,
                        refusal_tol: float, max_step: Optional[float] = None) -> float:
    """Vertex of a parabola fitted to a 1-D sweep, with sanity guards."""
    span = float(np.max(y) - np.min(y))
    if span < refusal_tol:
        raise CalibrationError(
            f"objective is flat over the sweep (span {span:.3e}); no sensitivity")
    coeffs = np.polyfit(x, y, 2)
    curv = coeffs[0]
    if (maximize and curv >= 0.0) or (not maximize and curv <= 0.0):
        # wrong curvature: fall back to the best grid point
        best = np.argmax(y) if maximize else np.argmin(y)
        return float(x[best])
    vertex = -0.5 * coeffs[1] / coeffs[0]
    center = float(x[len(x) // 2])
    if max_step is not None:
        vertex = min(max(vertex, center - max_step), center + max_step)
    return float(vertex)


def _p2_objective(dev, grid, *, half, shots, rng, substeps):
    results = gate_unitaries(dev, grid, half=half, substeps=substeps)
    p3 = np.array([_qutrit_populations_high(r.populations) for r in results])
    if shots is not None:
        rng = rng or np.random.default_rng()
        p3 = np.array([_sample_readout(row, dev.readout_confusion_high, shots, rng)
                       for row in p3])
    return p3[:, 2]


def tune_half_waveform(dev: DeviceParams, init: GateParams,
                       settings: CalSettings = CalSettings(), *,
                       rng: Optional[np.random.Generator] = None) -> GateParams:
    """Tune flux amplitude and duration for a full 11 -> 20 exchange.

    Alternates quadratic-fit sweeps (``sweep_points`` points spanning
    +-``sweep_span`` of the current value) of ``phi_low`` and ``t_int``,
    maximizing the 2-state population of the high-frequency qubit after a
    single half-pulse, until both parameters move by less than ``rel_tol``
    relative. Raises :class:`CalibrationError` after ``max_iter`` iterations,
    with the iterate trace attached.
    """
    p = init
    trace = [(p.phi_low, p.t_int)]
    rel = np.linspace(1.0 - settings.sweep_span, 1.0 + settings.sweep_span,
                      settings.sweep_points)
    for it in range(settings.max_iter):
        amps = p.phi_low * rel
        y = _p2_objective(dev, [replace(p, phi_low=a) for a in amps], half=True,
                          shots=settings.shots, rng=rng, substeps=settings.substeps)
        new_amp = _quadratic_extremum(amps, y, True, settings.refusal_tol,
                                      max_step=0.1 * abs(p.phi_low))
        p = replace(p, phi_low=new_amp)

        times = p.t_int * rel
        y = _p2_objective(dev, [replace(p, t_int=t) for t in times], half=True,
                          shots=settings.shots, rng=rng, substeps=settings.substeps)
        new_t = _quadratic_extremum(times, y, True, settings.refusal_tol,
                                    max_step=0.1 * p.t_int)
        p = replace(p, t_int=new_t)

        d_amp = abs(p.phi_low - trace[-1][0]) / abs(trace[-1][0])
        d_t = abs(p.t_int - trace[-1][1]) / trace[-1][1]
        trace.append((p.phi_low, p.t_int))
        log.info("half-pulse tuning it=%d phi_low=%.6f t_int=%.4f ns", it,
                 p.phi_low, p.t_int * 1e9)
        if d_amp < settings.rel_tol and d_t < settings.rel_tol:
            return p
    err = CalibrationError(
        f"half-pulse tuning did not converge in {settings.max_iter} iterations")
    err.trace = trace
    raise err


def amplified_leakage(dev: DeviceParams, params: GateParams, n: int,
                      tau_gaps: np.ndarray, *, substeps: int = 16,
                      results: Optional[PropagationResult] = None) -> np.ndarray:
    """2-state population of the high qubit after n gates vs gap time.

    Gates are composed in the lab frame with exact static idle evolution of
    the requested gap between repetitions, so the accumulated phase of the
    leaked population (and hence the interference condition) is scanned by
    the gate separation.
    """
    res = results or gate_unitary(dev, params, substeps=substeps)
    u_gate = res.unitary_lab
    model = SixLevelModel(dev)
    h_idle = model.hamiltonian(0.0, 0.0)
    w, v = np.linalg.eigh(h_idle)
    out = np.empty(len(tau_gaps))
    for i, tau in enumerate(tau_gaps):
        u_gap = (v * np.exp(-1j * w * tau)) @ v.conj().T
        m = np.linalg.matrix_power(u_gap @ u_gate, n)
        out[i] = abs(m[I20, I11]) ** 2
    return out


def tsep_gap_times(params: GateParams, settings: CalSettings,
                   delta_max: float) -> np.ndarray:
    """Gap-time grid covering the requested number of interference periods."""
    period = TWO_PI / delta_max
    return np.linspace(0.0, settings.tsep_periods * period, settings.n_tsep)


def fine_tune_detuning(dev: DeviceParams, params: GateParams,
                       n: Optional[int] = None,
                       settings: CalSettings = CalSettings()) -> GateParams:
    """Fine-tune the low-qubit amplitude by amplified-leakage interference.

    Requires the idle time to sit at the zero-conditional-phase point, where
    leakage is quadratic in the detuning. Scans the amplitude on a grid
    whose step corresponds to ``settings.detuning_step`` in units of g2,
    amplifies leakage over ``n`` repeated gates, takes the worst case over
    the gate separation and moves to the interference minimum.
    """
    n = n or settings.n_amplify
    dfreq = abs(dev.map_low.dfreq_dflux(params.phi_low))
    step = settings.detuning_step * dev.g2 / dfreq
    offsets = np.arange(-settings.detuning_halfwidth,
                        settings.detuning_halfwidth + 1)
    amps = params.phi_low + offsets * step
    taus = tsep_gap_times(params, settings, dev.delta_max)
    grid = [replace(params, phi_low=a) for a in amps]
    results = gate_unitaries(dev, grid, substeps=settings.substeps)
    worst = np.empty(len(amps))
    for i, res in enumerate(results):
        worst[i] = np.max(amplified_leakage(dev, grid[i], n, taus,
                                            substeps=settings.substeps, results=res))
    k = int(np.argmin(worst))
    if k == 0 or k == len(amps) - 1:
        raise CalibrationError("no interior minimum in the detuning scan window")
    # parabolic refinement between the neighbors of the grid minimum
    xs, ys = amps[k - 1:k + 2], worst[k - 1:k + 2]
    denom = ys[0] - 2.0 * ys[1] + ys[2]
    shift = 0.5 * (ys[0] - ys[2]) / denom if denom > 0 else 0.0
    shift = min(max(shift, -1.0), 1.0)
    new_amp = float(amps[k] + shift * step)
    log.info("detuning fine-tuned: phi_low %.6f -> %.6f (worst leak %.2e)",
             params.phi_low, new_amp, worst[k])
    return replace(params, phi_low=new_amp)


def fine_tune_interaction_time(dev: DeviceParams, params: GateParams,
                               settings: CalSettings = CalSettings(), *,
                               rng: Optional[np.random.Generator] = None) -> GateParams:
    """Fine-tune the interaction time by minimizing single-gate leakage.

    Requires the idle time to sit at the pi-conditional-phase point, where
    leakage is quadratic in the interaction time. At the zero-phase (echo)
    point the objective is flat and the stage refuses with
    :class:`CalibrationError`.
    """
    rel = np.linspace(1.0 - settings.sweep_span, 1.0 + settings.sweep_span,
                      settings.sweep_points)
    times = params.t_int * rel
    y = _p2_objective(dev, [replace(params, t_int=t) for t in times], half=False,
                      shots=settings.shots, rng=rng, substeps=settings.substeps)
    new_t = _quadratic_extremum(times, y, False, settings.refusal_tol,
                                max_step=settings.sweep_span * params.t_int)
    log.info("interaction time fine-tuned: %.4f -> %.4f ns",
             params.t_int * 1e9, new_t * 1e9)
    return replace(params, t_int=new_t)


def worst_case_leakage(dev: DeviceParams, params: GateParams,
                       t_grid: np.ndarray, *, substeps: int = 16) -> float:
    """Worst single-gate 2-state population of the high qubit over t_idle."""
    grid = [replace(params, t_idle=float(t)) for t in t_grid]
    results = gate_unitaries(dev, grid, substeps=substeps)
    return float(max(r.populations[I20] for r in results))


def refine_worst_leakage(dev: DeviceParams, params: GateParams,
                         settings: CalSettings = CalSettings(), *,
                         maxfev: int = 80) -> GateParams:
    """Jointly refine amplitude and duration against the whole idle range.

    The single-point stages each optimize the leakage at one idle phase;
    the leaked amplitude also carries components tagged by the idle phase
    (population leaking before or after the variable gap), so the worst
    case over the gate set is what matters. This stage runs a small
    simplex search on (phi_low, t_int) minimizing the maximum leakage over
    the idle-time table, which lands at the floor set by the filtered-edge
    resonance crossings.
    """
    from scipy.optimize import minimize

    t_grid = idle_time_grid(dev, settings)

    def objective(x):
        return worst_case_leakage(dev, replace(params, phi_low=float(x[0]),
                                               t_int=float(x[1])),
                                  t_grid, substeps=settings.substeps)

    x0 = np.array([params.phi_low, params.t_int])
    simplex = [x0, x0 + [3e-5, 0.0], x0 + [0.0, 0.08e-9]]
    res = minimize(objective, x0, method="Nelder-Mead",
                   options=dict(xatol=1e-9, fatol=1e-8, maxfev=maxfev,
                                initial_simplex=simplex))
    log.info("worst-case leakage refined to %.2e (%d evaluations)",
             res.fun, res.nfev)
    return replace(params, phi_low=float(res.x[0]), t_int=float(res.x[1]))


# -- phase characterization --------------------------------------------------------

def idle_time_grid(dev: DeviceParams, settings: CalSettings) -> np.ndarray:
    span = settings.idle_span_factor * TWO_PI / dev.delta_max
    return np.linspace(settings.idle_lo, settings.idle_lo + span,
                       settings.n_phase_points)


def characterize_phase_vs_idle(dev: DeviceParams, params: GateParams,
                               settings: CalSettings = CalSettings(), *,
                               rng: Optional[np.random.Generator] = None,
                               vz: Optional[tuple[float, float]] = None) -> CalibrationRecord:
    """Measure the conditional phase on the idle-time grid and fit a line.

    Returns a :class:`CalibrationRecord` whose construction enforces the
    residual and slope acceptance thresholds. Virtual-Z corrections may be
    supplied; otherwise they are measured at the grid midpoint.
    """
    t_grid = idle_time_grid(dev, settings)
    if settings.shots is None:
        results = gate_unitaries(dev, [replace(params, t_idle=t) for t in t_grid],
                                 substeps=settings.substeps)
        thetas = np.array([r.conditional_phase for r in results])
    else:
        thetas = np.array([
            measure_conditional_phase(dev, replace(params, t_idle=t),
                                      shots=settings.shots, rng=rng,
                                      substeps=settings.substeps)
            for t in t_grid])
    theta_un = np.unwrap(thetas)
    coeffs = np.polyfit(t_grid, theta_un, 1)
    fit = np.polyval(coeffs, t_grid)
    residuals = theta_un - fit
    if vz is None:
        vz = calibrate_virtual_z(dev, replace(params, t_idle=float(t_grid[len(t_grid) // 2])),
                                 settings=settings, t_idle_grid=t_grid)
    return CalibrationRecord(
        params=params,
        t_idle_table=t_grid,
        theta_table=theta_un,
        slope=float(coeffs[0]),
        intercept=float(coeffs[1]),
        residuals=residuals,
        vz_high=vz[0],
        vz_low=vz[1],
        delta_max=dev.delta_max,
    )


def idle_time_for_phase(record: CalibrationRecord, theta: float) -> float:
    """Idle time realizing the requested conditional phase.

    The target is canonicalized to [0, 2*pi) and mapped into the unwrapped
    table range; the characterization table must span a full turn.
    """
    table_t = record.t_idle_table
    table_th = record.theta_table
    span = float(table_th[0] - table_th[-1])
    if span < TWO_PI:
        raise FrequencyRangeError("phase table spans less than 2*pi")
    theta_c = float(np.mod(theta, TWO_PI))
    hi = table_th[0]
    target = hi - float(np.mod(hi - theta_c, TWO_PI))
    if target < table_th[-1] - 1e-12:
        raise FrequencyRangeError("requested phase falls outside the table")
    inv = CubicSpline(table_th[::-1], table_t[::-1])
    return float(inv(target))


def calibrate_virtual_z(dev: DeviceParams, params: GateParams,
                        settings: CalSettings = CalSettings(),
                        t_idle_grid: Optional[np.ndarray] = None) -> tuple[float, float]:
    """Virtual-Z corrections cancelling the single-qubit dynamic phases.

    The phases are measured once at the given parameters and verified to be
    independent of the idle time across the grid within pi/180 rad; larger
    variation indicates a waveform-generation bug and raises.
    """
    if t_idle_grid is None:
        t_idle_grid = idle_time_grid(dev, settings)
    results = gate_unitaries(dev, [replace(params, t_idle=t) for t in t_idle_grid],
                             substeps=settings.substeps)
    ph = np.array([r.phase_high for r in results])
    pl = np.array([r.phase_low for r in results])
    var = max(np.ptp(np.unwrap(ph)), np.ptp(np.unwrap(pl)))
    if var > math.pi / 180.0:
        raise CalibrationError(
            f"dynamic phases vary by {var:.3e} rad across the idle-time grid; "
            "waveform generation is inconsistent")
    ref = gate_unitary(dev, params, substeps=settings.substeps)
    return (-ref.phase_high, -ref.phase_low)


# -- full pipeline ------------------------------------------------------------------

def initial_gate_params(dev: DeviceParams, phi_low: float = 0.2,
                        settings: CalSettings = CalSettings()) -> GateParams:
    """Starting point estimated from the flux-frequency maps.

    The high-qubit amplitude brings 20 into resonance with 11 when the low
    qubit sits at ``phi_low``; the interaction time starts at a full
    exchange period plus an edge-erosion allowance of five filter widths.
    """
    omega_low = dev.map_low.freq(phi_low)
    phi_high = dev.map_high.flux(omega_low - dev.alpha_high)
    sigma_tot = max(math.hypot(SHAPING_SIGMA, dev.sigma_high),
                    math.hypot(SHAPING_SIGMA, dev.sigma_low))
    t_int = TWO_PI / dev.g2 + 5.0 * sigma_tot
    grid = idle_time_grid(dev, settings)
    t_idle_max = float(grid[-1] + 5 * dev.sample_period)
    return GateParams(phi_high=phi_high, phi_low=phi_low, t_int=t_int,
                      t_idle=float(grid[0]), t_idle_max=t_idle_max)


def run_full_calibration(dev: DeviceParams,
                         settings: CalSettings = CalSettings(), *,
                         init: Optional[GateParams] = None,
                         rng: Optional[np.random.Generator] = None) -> CalibrationRecord:
    """Execute the full tune-up and return the calibration record."""
    p = init or initial_gate_params(dev, settings=settings)
    log.info("stage 1: half-pulse exchange tuning")
    p = tune_half_waveform(dev, p, settings, rng=rng)

    log.info("stage 2: coarse phase table and zero-phase point")
    coarse = characterize_phase_vs_idle(dev, p, settings, rng=rng, vz=(0.0, 0.0))
    p = replace(p, t_idle=idle_time_for_phase(coarse, 0.0))

    log.info("stage 3: detuning fine-tuning at the zero-phase point")
    p = fine_tune_detuning(dev, p, settings=settings)

    log.info("stage 4: interaction-time fine-tuning at the pi-phase point")
    coarse = characterize_phase_vs_idle(dev, p, settings, rng=rng, vz=(0.0, 0.0))
    p = replace(p, t_idle=idle_time_for_phase(coarse, math.pi))
    p = fine_tune_interaction_time(dev, p, settings, rng=rng)

    log.info("stage 5: worst-case leakage refinement across the idle range")
    p = refine_worst_leakage(dev, p, settings)

    log.info("stage 6: final phase characterization and virtual-Z calibration")
    record = characterize_phase_vs_idle(dev, p, settings, rng=rng)
    log.info("calibration complete: slope/2pi = %.4f GHz, max residual %.2e rad",
             record.slope / TWO_PI / 1e9, np.max(np.abs(record.residuals)))
    return record


def residual_detuning(dev: DeviceParams, params: GateParams,
                      settings: CalSettings = CalSettings(), *,
                      halfwidth: float = 8e-3, n_points: int = 33) -> float:
    """Residual interaction detuning of a calibrated gate, in units of g2.

    Re-runs the amplified-leakage protocol (repeated gates, worst case over
    the gate separation) on a fine amplitude scan around the calibrated
    point and returns the signed distance to the interference minimum,
    converted to a dimensionless detuning via the local flux-to-frequency
    slope.
    """
    here = replace(params, t_idle=_zero_phase_idle(dev, params, settings))
    dfreq = abs(dev.map_low.dfreq_dflux(params.phi_low))
    span = halfwidth * dev.g2 / dfreq
    amps = params.phi_low + np.linspace(-span, span, n_points)
    taus = tsep_gap_times(params, settings, dev.delta_max)
    grid = [replace(here, phi_low=float(a)) for a in amps]
    results = gate_unitaries(dev, grid, substeps=settings.substeps)
    worst = np.array([np.max(amplified_leakage(dev, g, settings.n_amplify, taus,
                                               substeps=settings.substeps, results=r))
                      for g, r in zip(grid, results)])
    k = int(np.argmin(worst))
    if 0 < k < len(amps) - 1:
        ys = worst[k - 1:k + 2]
        denom = ys[0] - 2.0 * ys[1] + ys[2]
        shift = 0.5 * (ys[0] - ys[2]) / denom if denom > 0 else 0.0
    else:
        shift = 0.0
    phi_min = amps[k] + shift * (amps[1] - amps[0])
    return float((params.phi_low - phi_min) * dfreq / dev.g2)


def _zero_phase_idle(dev, params, settings):
    """Idle time of the zero-conditional-phase point for the given params."""
    record = characterize_phase_vs_idle(dev, params, settings, vz=(0.0, 0.0))
    return idle_time_for_phase(record, 0.0)


def gate_set_leakage(dev: DeviceParams, record: CalibrationRecord,
                     thetas: Sequence[float], *, substeps: int = 16) -> np.ndarray:
    """Per-gate 2-state population of the high qubit over a phase grid."""
    grid = [record.gate_for_phase(th) for th in thetas]
    results = gate_unitaries(dev, grid, substeps=substeps)
    return np.array([r.populations[I20] for r in results])


def verify_phase_targets(dev: DeviceParams, record: CalibrationRecord,
                         thetas: Sequence[float], *, substeps: int = 16) -> np.ndarray:
    """Wrapped phase errors of re-measured gates at the requested targets."""
    grid = [record.gate_for_phase(th) for th in thetas]
    results = gate_unitaries(dev, grid, substeps=substeps)
    achieved = np.array([r.conditional_phase for r in results])
    return wrap_phase(achieved - np.asarray(thetas))
