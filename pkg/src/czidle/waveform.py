"""Net-zero flux waveform synthesis and detuning trajectories.

The gate pulse is a pair of opposite-sign rectangles (duration t_int/2 each)
separated by a variable idle time, convolved with a Gaussian shaping filter
and sampled on the generator grid. The idle time is continuous: edges are
placed with sub-sample resolution by evaluating the filtered waveform
analytically (sums of error functions) at the sample instants, which is
equivalent to adjusting the sample amplitudes on the smooth edges.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import erf

from .device import DeviceParams
from .errors import ConfigError, WaveformWarning

#: Gaussian width of the shaping filter applied before sampling (seconds).
SHAPING_SIGMA = 0.5e-9


@dataclass(frozen=True)
class GateParams:
    """Control parameters of one gate instance.

    ``t_int`` is the total interaction time, split into the two half-pulses.
    ``t_idle`` is the gap between the halves and is continuous-valued.
    The total gate duration ``2*buffer + t_int + t_idle_max`` is independent
    of ``t_idle``: the trailing padding absorbs the variable idle time so
    every member of the gate set has the same length.
    """

    phi_high: float
    phi_low: float
    t_int: float
    t_idle: float
    buffer: float = 10e-9
    t_idle_max: float = 12e-9

    def __post_init__(self):
        if self.t_int <= 0.0:
            raise ConfigError("t_int must be positive")
        if self.t_idle < 0.0:
            raise ConfigError("t_idle must be non-negative")
        if self.buffer < 0.0:
            raise ConfigError("buffer must be non-negative")
        if self.t_idle > self.t_idle_max:
            raise ConfigError("t_idle exceeds t_idle_max")

    @property
    def duration(self) -> float:
        return 2.0 * self.buffer + self.t_int + self.t_idle_max

    def edge_times(self) -> tuple[float, float, float, float]:
        """Centers of the four pulse edges (rise/fall of each half)."""
        e0 = self.buffer
        e1 = e0 + 0.5 * self.t_int
        e2 = e1 + self.t_idle
        e3 = e2 + 0.5 * self.t_int
        return e0, e1, e2, e3

    def idle_window(self) -> tuple[float, float]:
        """Time window between the inner edge centers of the two halves."""
        _, e1, e2, _ = self.edge_times()
        return e1, e2


@dataclass(frozen=True, eq=False)
class SampledWaveform:
    """Flux sample sequence of one qubit on the generator grid."""

    samples: np.ndarray
    sample_period: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        if self.sample_period <= 0.0:
            raise ConfigError("sample_period must be positive")

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n) * self.sample_period

    @property
    def duration(self) -> float:
        return self.n * self.sample_period

    def write_csv(self, path) -> None:
        data = np.column_stack([self.times, self.samples])
        np.savetxt(path, data, delimiter=",", header="time_s,flux_phi0", comments="")


def filtered_step(t, sigma: float):
    """Unit step convolved with a Gaussian of width sigma."""
    t = np.asarray(t, dtype=float)
    if sigma == 0.0:
        return np.where(t >= 0.0, 1.0, 0.0)
    return 0.5 * (1.0 + erf(t / (math.sqrt(2.0) * sigma)))


def ideal_net_zero(t, params: GateParams, amplitude: float, sigma: float):
    """Continuous Gaussian-filtered net-zero pulse evaluated at times t."""
    e0, e1, e2, e3 = params.edge_times()
    return amplitude * (
        filtered_step(t - e0, sigma) - filtered_step(t - e1, sigma)
        - filtered_step(t - e2, sigma) + filtered_step(t - e3, sigma)
    )


def ideal_half(t, params: GateParams, amplitude: float, sigma: float):
    """Continuous filtered single rectangle of duration t_int/2."""
    e0, e1, _, _ = params.edge_times()
    return amplitude * (filtered_step(t - e0, sigma) - filtered_step(t - e1, sigma))


def _sample(params: GateParams, amplitude: float, sigma: float, sample_period: float,
            shape_fn, duration: float, net_zero: bool) -> SampledWaveform:
    n = int(round(duration / sample_period)) + 1
    t = np.arange(n) * sample_period
    samples = shape_fn(t, params, amplitude, sigma)
    peak = np.max(np.abs(samples)) if n else 0.0
    if abs(amplitude) > 0.0 and peak < 0.99 * abs(amplitude):
        warnings.warn(
            f"filter width {sigma:.3g} s erodes the plateau: peak {peak:.4g} < 99% of {amplitude:.4g}",
            WaveformWarning,
        )
    samples[0] = 0.0
    samples[-1] = 0.0
    if net_zero:
        # The analytic integral vanishes; remove the (tiny) discrete residual
        # proportionally so the sampled sum is exactly zero and endpoint zeros
        # stay untouched.
        total = samples.sum()
        weight = np.abs(samples).sum()
        if weight > 0.0:
            samples = samples - np.abs(samples) * (total / weight)
    return SampledWaveform(samples=samples, sample_period=sample_period)


def synth_net_zero(params: GateParams, sigma: float, sample_period: float,
                   qubit: str = "low") -> SampledWaveform:
    """Synthesize the net-zero flux waveform of one qubit.

    The idle time in ``params`` may take any non-negative value; edges are
    placed with continuous resolution. The returned sample sum is zero
    within 1e-12 of the peak amplitude and the first/last samples are zero.
    """
    amplitude = params.phi_high if qubit == "high" else params.phi_low
    return _sample(params, amplitude, sigma, sample_period,
                   ideal_net_zero, params.duration, net_zero=True)


def synth_half(params: GateParams, sigma: float, sample_period: float,
               qubit: str = "low") -> SampledWaveform:
    """Synthesize a single positive half-pulse (duration t_int/2).

    Used by the exchange calibration; not net-zero by construction.
    """
    amplitude = params.phi_high if qubit == "high" else params.phi_low
    duration = 2.0 * params.buffer + 0.5 * params.t_int
    return _sample(params, amplitude, sigma, sample_period,
                   ideal_half, duration, net_zero=False)


def gate_waveforms(params: GateParams, dev: DeviceParams,
                   sigma: float = SHAPING_SIGMA) -> tuple[SampledWaveform, SampledWaveform]:
    """Net-zero waveforms for both qubits on the device sample grid."""
    return (synth_net_zero(params, sigma, dev.sample_period, "high"),
            synth_net_zero(params, sigma, dev.sample_period, "low"))


def half_waveforms(params: GateParams, dev: DeviceParams,
                   sigma: float = SHAPING_SIGMA) -> tuple[SampledWaveform, SampledWaveform]:
    """Half-pulse waveforms for both qubits on the device sample grid."""
    return (synth_half(params, sigma, dev.sample_period, "high"),
            synth_half(params, sigma, dev.sample_period, "low"))


def resample_filtered(samples: np.ndarray, factor: int, sigma_over_dt: float,
                      midpoint: bool = False) -> np.ndarray:
    """Band-limited oversampling with an optional extra Gaussian filter.

    Zero-pads the spectrum by ``factor`` and multiplies the transfer function
    ``exp(-(2*pi*f*sigma)^2 / 2)``; ``sigma_over_dt`` is the filter width in
    units of the input sample period. With ``midpoint=True`` the returned
    points sit at the centers of the oversampled cells instead of their left
    edges. Operates along the last axis.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[-1]
    eff = 2 * factor if midpoint else factor
    m = n * eff
    spec = np.fft.rfft(samples, axis=-1)
    if n % 2 == 0:
        # the Nyquist bin is shared between +/- frequencies when upsampling
        spec[..., -1] *= 0.5
    pad = np.zeros(samples.shape[:-1] + (m // 2 + 1,), dtype=complex)
    pad[..., : spec.shape[-1]] = spec
    f = np.fft.rfftfreq(m, d=1.0 / eff)  # cycles per input sample period
    pad *= np.exp(-0.5 * (2.0 * np.pi * f * sigma_over_dt) ** 2)
    fine = np.fft.irfft(pad, n=m, axis=-1) * eff
    return fine[..., 1::2] if midpoint else fine


def hold_resample(samples: np.ndarray, factor: int) -> np.ndarray:
    """Zero-order-hold oversampling, for unfiltered rectangular studies."""
    return np.repeat(np.asarray(samples, dtype=float), factor, axis=-1)


def midpoint_flux(wf: SampledWaveform, substeps: int, line_sigma: float = 0.0,
                  interp: str = "fft") -> np.ndarray:
    """Flux at the midpoints of ``substeps`` sub-intervals per sample.

    ``line_sigma`` is the Gaussian width of the physical line response
    applied on top of the sampled waveform. ``interp='hold'`` treats the
    samples as a zero-order-hold sequence (no line filter allowed).
    """
    if interp == "hold":
        if line_sigma:
            raise ConfigError("hold interpolation cannot apply a line filter")
        return hold_resample(wf.samples, substeps)
    return resample_filtered(wf.samples, substeps, line_sigma / wf.sample_period,
                             midpoint=True)


def detuning_trajectory(wf_high: SampledWaveform, wf_low: SampledWaveform,
                        dev: DeviceParams, oversample: int = 16,
                        include_line_filter: bool = True,
                        interp: str = "fft") -> tuple[np.ndarray, np.ndarray]:
    """Detuning E20 - E11 over time for a pair of flux waveforms.

    Returns ``(times, delta)`` on a grid oversampled by the given factor.
    The per-qubit line response (Gaussian widths from the device) is applied
    before converting flux to frequency.
    """
    if wf_high.n != wf_low.n or wf_high.sample_period != wf_low.sample_period:
        raise ConfigError("waveforms must share length and sample period")
    sh = dev.sigma_high if include_line_filter else 0.0
    sl = dev.sigma_low if include_line_filter else 0.0
    if interp == "hold":
        fh = hold_resample(wf_high.samples, oversample)
        fl = hold_resample(wf_low.samples, oversample)
        dt = wf_high.sample_period / oversample
        times = (np.arange(fh.size) + 0.5) * dt
    else:
        fh = resample_filtered(wf_high.samples, oversample, sh / wf_high.sample_period)
        fl = resample_filtered(wf_low.samples, oversample, sl / wf_low.sample_period)
        dt = wf_high.sample_period / oversample
        times = np.arange(fh.size) * dt
    omega_h = dev.map_high.freq(fh)
    omega_l = dev.map_low.freq(fl)
    delta = omega_h + dev.alpha_high - omega_l
    return times, delta


def idle_phase(times: np.ndarray, delta: np.ndarray,
               window: tuple[float, float]) -> float:
    """Phase acquired by the 20 state over the inter-half window.

    Integrates the detuning trajectory over ``window`` (trapezoid rule with
    interpolated endpoints). For well-separated pulse halves the result is
    an affine function of the idle time with slope equal to the idle
    detuning.
    """
    a, b = window
    if b < a:
        raise ConfigError("window must be ordered")
    if a < times[0] or b > times[-1]:
        raise ConfigError("trajectory does not cover the idle window")
    if b == a:
        return 0.0
    inside = (times > a) & (times < b)
    t_int = np.concatenate([[a], times[inside], [b]])
    d_int = np.concatenate([[np.interp(a, times, delta)], delta[inside],
                            [np.interp(b, times, delta)]])
    return float(np.trapz(d_int, t_int))
