"""Heterodyne signal chain: trace synthesis, DFT spectra, responsivity.

The local and signal microwave tones beat at the intermediate frequency
delta_s.  Because delta_s is far below every optical rate in the problem,
the atoms track the slowly varying total Rabi frequency adiabatically and
the photodetector voltage can be synthesized point by point from the
steady-state transmission.  Analysis mirrors the lab workflow: window,
DFT, single-sided amplitude spectral density, peak readout at the
intermediate frequency, linear responsivity fit, and waveform averaging
for the smallest resolvable field.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.constants as sc
from scipy.interpolate import CubicSpline

from .bloch import LevelShifts
from .doppler import averaged_coherence
from .errors import AdiabaticityError, UndefinedCorrelationError, ValidationError
from .quantities import ExperimentConfig, derive, field_to_rabi

# The optical response is treated as instantaneous relative to the beat.
# Keeping the beat and the signal tone this far below the local-tone Rabi
# frequency bounds the quasi-static error at the few-1e-3 level.
ADIABATIC_RATIO_MAX = 0.25

# Shot-to-shot repetition rate used to convert a number of averaged
# windows into an equivalent acquisition time.
REPETITION_RATE = 100.0

_SPLINE_POINTS = 33


@dataclass(frozen=True)
class TimeTrace:
    """Sampled photodetector voltage over one acquisition window."""

    sample_rate: float
    volts: np.ndarray
    e_cal: float
    delta_s: float
    phi0: float
    seed: int | None

    def __post_init__(self) -> None:
        if self.sample_rate <= 0.0:
            raise ValidationError("sample_rate must be positive")
        v = np.asarray(self.volts, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValidationError("volts must be a 1-d array with >= 2 samples")
        if not np.all(np.isfinite(v)):
            raise ValidationError("volts contains non-finite samples")
        object.__setattr__(self, "volts", v)

    @property
    def duration(self) -> float:
        return self.volts.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.volts.size) / self.sample_rate


@dataclass(frozen=True)
class AmplitudeSpectrum:
    """Single-sided amplitude spectral density of a voltage trace.

    ``asd`` is in V/sqrt(Hz).  ``window_correction`` converts a peak ASD
    bin back to the amplitude of an on-bin sine: it is 1 for the
    rectangular window and sqrt(N * sum(w^2)) / sum(w) otherwise.
    """

    freqs: np.ndarray
    asd: np.ndarray
    window_correction: float
    bin_width: float

    def __post_init__(self) -> None:
        f = np.asarray(self.freqs, dtype=float)
        a = np.asarray(self.asd, dtype=float)
        if f.shape != a.shape or f.ndim != 1:
            raise ValidationError("freqs and asd must be matching 1-d arrays")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "asd", a)


@dataclass(frozen=True)
class SensitivitySpectrum:
    """Field-equivalent noise density, V/m/sqrt(Hz) per frequency bin."""

    freqs: np.ndarray
    field_asd: np.ndarray


@dataclass(frozen=True)
class ResponsivityFit:
    """Linear photovoltage-versus-field calibration.

    slope        through-origin responsivity, V per (V/m)
    free_slope   slope of the unconstrained linear fit
    intercept    intercept of the unconstrained fit, V
    r_squared    coefficient of determination of the unconstrained fit
    """

    slope: float
    free_slope: float
    intercept: float
    r_squared: float
    fields: np.ndarray = field(repr=False, default=None)
    amplitudes: np.ndarray = field(repr=False, default=None)

    @property
    def slope_mv_per_mv_cm(self) -> float:
        """Responsivity in mV per mV/cm, the conventional lab unit."""
        return 100.0 * self.slope


def _effective_rabi(omega_l: float, omega_s: float, delta_s: float,
                    phi0: float, t: np.ndarray) -> np.ndarray:
    # |Omega_L + Omega_S e^{-i(delta_s t + phi0)}| for real, positive tones.
    return np.sqrt(omega_l ** 2 + omega_s ** 2
                   + 2.0 * omega_l * omega_s * np.cos(delta_s * t + phi0))


def _imag_coherence_interp(config: ExperimentConfig, omega_vals: np.ndarray,
                           shifts: LevelShifts, gamma_deph: float) -> np.ndarray:
    """Im rho_21 at each requested total Rabi frequency.

    The steady state is solved on a coarse grid spanning the excursion of
    the beat and interpolated with a cubic spline; the excursion is small
    (adiabatic regime) so the coherence is smooth over the grid.
    """
    lo = float(np.min(omega_vals))
    hi = float(np.max(omega_vals))
    if hi - lo <= 1e-9 * max(hi, 1.0):
        rho = averaged_coherence(config, shifts=shifts, gamma_deph=gamma_deph,
                                 omega_l_eff=0.5 * (lo + hi))
        return np.full(omega_vals.shape, rho.imag)
    grid = np.linspace(lo, hi, _SPLINE_POINTS)
    ims = np.array([
        averaged_coherence(config, shifts=shifts, gamma_deph=gamma_deph,
                           omega_l_eff=w).imag
        for w in grid
    ])
    return CubicSpline(grid, ims)(omega_vals)


def synthesize_trace(config: ExperimentConfig, e_cal: float,
                     delta_s: float | None = None, phi0: float = 0.0,
                     seed: int | None = 0, sample_rate: float = 1.0e6,
                     noise_nev: float | None = None,
                     shifts: LevelShifts | None = None,
                     gamma_deph: float | None = None,
                     od_ramp: bool = True) -> TimeTrace:
    """Simulate one photodetector window with the signal tone applied.

    Parameters
    ----------
    e_cal : signal-tone field amplitude at the atoms, V/m.
    delta_s : beat frequency in rad/s (defaults to config.delta_s).
    seed : seed for the additive white detector noise; None disables noise.
    noise_nev : detector noise floor in V/sqrt(Hz) (defaults to config.nev).
    gamma_deph : Rydberg dephasing entering the optical response; defaults
        to the single-atom value gamma0 + gamma_t.
    od_ramp : ramp the optical depth linearly from od_start to od_end over
        the window, as the released cloud expands and falls.

    Raises AdiabaticityError when the signal tone or the beat frequency is
    too large a fraction of the local tone for quasi-static synthesis.
    """
    if e_cal < 0.0:
        raise ValidationError("e_cal must be non-negative")
    if sample_rate <= 0.0:
        raise ValidationError("sample_rate must be positive")
    der = derive(config)
    if delta_s is None:
        delta_s = config.delta_s
    if noise_nev is None:
        noise_nev = config.nev
    if gamma_deph is None:
        gamma_deph = config.gamma0 + der.gamma_t
    if shifts is None:
        shifts = LevelShifts(0.0, 0.0, 0.0)

    omega_s = field_to_rabi(config, e_cal)
    if omega_s > ADIABATIC_RATIO_MAX * config.omega_l:
        raise AdiabaticityError(
            "signal tone Rabi frequency %.3g rad/s exceeds %.0f%% of the local tone"
            % (omega_s, 100 * ADIABATIC_RATIO_MAX))
    if abs(delta_s) > ADIABATIC_RATIO_MAX * config.omega_l:
        raise AdiabaticityError(
            "beat frequency %.3g rad/s exceeds %.0f%% of the local tone Rabi frequency"
            % (delta_s, 100 * ADIABATIC_RATIO_MAX))

    n = int(round(sample_rate * config.window_ms * 1e-3))
    if n < 2:
        raise ValidationError("window too short for the requested sample rate")
    t = np.arange(n) / sample_rate

    omega_eff = _effective_rabi(config.omega_l, omega_s, delta_s, phi0, t)
    im = _imag_coherence_interp(config, omega_eff, shifts, gamma_deph)

    if od_ramp:
        od = config.od_start + (config.od_end - config.od_start) * t / t[-1]
    else:
        od = np.full(n, config.od_start)
    probe_rabi = config.omega_p0
    transmission = np.exp(-od * (config.gamma_e / probe_rabi) * im)
    volts = config.det_gain * config.probe_power * transmission

    if seed is not None and noise_nev > 0.0:
        rng = np.random.default_rng(seed)
        sigma = noise_nev * math.sqrt(sample_rate / 2.0)
        volts = volts + rng.normal(0.0, sigma, size=n)

    return TimeTrace(sample_rate=sample_rate, volts=volts, e_cal=e_cal,
                     delta_s=delta_s, phi0=phi0, seed=seed)


def _window(name: str, n: int) -> np.ndarray:
    if name == "rectangular":
        return np.ones(n)
    if name == "hann":
        return np.hanning(n)
    raise ValidationError("unknown window %r" % (name,))


def spectral_density(trace: TimeTrace, window: str = "rectangular",
                     detrend: bool = False,
                     nev_calib: float | None = None) -> AmplitudeSpectrum:
    """Single-sided amplitude spectral density of a trace.

    Scaled so that white noise of density S appears as a flat ASD at S
    independent of window and length.  ``detrend`` removes the best-fit
    line first, which suppresses leakage from the slow transmission ramp
    into the low-frequency bins.  ``nev_calib`` rescales the whole
    spectrum so its median off-DC bin equals the given density, mimicking
    the in-situ noise calibration against a known detector floor.
    """
    x = trace.volts
    n = x.size
    if detrend:
        t = np.arange(n, dtype=float)
        coef = np.polynomial.polynomial.polyfit(t, x, 1)
        x = x - np.polynomial.polynomial.polyval(t, coef)
    w = _window(window, n)
    sw = float(np.sum(w))
    sw2 = float(np.sum(w * w))
    spec = np.fft.rfft(x * w)
    scale = np.full(spec.size, math.sqrt(2.0 / (trace.sample_rate * sw2)))
    scale[0] = math.sqrt(1.0 / (trace.sample_rate * sw2))
    if n % 2 == 0:
        scale[-1] = math.sqrt(1.0 / (trace.sample_rate * sw2))
    asd = np.abs(spec) * scale
    freqs = np.fft.rfftfreq(n, d=1.0 / trace.sample_rate)
    correction = math.sqrt(n * sw2) / sw

    if nev_calib is not None:
        # Median-based density estimate: insensitive to a narrow signal
        # peak, with the Rayleigh median-to-rms factor sqrt(ln 2) undone.
        floor = float(np.median(asd[1:])) / math.sqrt(math.log(2.0))
        if floor <= 0.0:
            raise ValidationError("cannot calibrate an all-zero spectrum")
        asd = asd * (nev_calib / floor)

    return AmplitudeSpectrum(freqs=freqs, asd=asd, window_correction=correction,
                             bin_width=trace.sample_rate / n)


def peak_amplitude(spectrum: AmplitudeSpectrum, freq: float) -> tuple[float, float]:
    """Sine amplitude (V) read from the ASD bin nearest ``freq``.

    Returns (amplitude, actual bin frequency).  Exact for an on-bin tone;
    off-bin tones suffer the usual scalloping loss of the chosen window.
    """
    idx = int(np.argmin(np.abs(spectrum.freqs - freq)))
    amp = spectrum.asd[idx] * spectrum.window_correction \
        * math.sqrt(2.0 * spectrum.bin_width)
    return float(amp), float(spectrum.freqs[idx])


def noise_floor(spectrum: AmplitudeSpectrum, f_lo: float = 0.0,
                f_hi: float | None = None, robust: bool = False) -> float:
    """Noise density estimate over the requested band, excluding DC.

    The default is the quadratic mean of the ASD bins, which estimates a
    white-noise density without bias.  ``robust=True`` switches to the
    median corrected for the Rayleigh bin statistics, which ignores a
    narrow signal peak sitting in the band.
    """
    mask = spectrum.freqs > max(f_lo, 0.0)
    if f_hi is not None:
        mask &= spectrum.freqs <= f_hi
    if not np.any(mask):
        raise ValidationError("no spectral bins in the requested band")
    vals = spectrum.asd[mask]
    if robust:
        return float(np.median(vals)) / math.sqrt(math.log(2.0))
    return float(np.sqrt(np.mean(vals ** 2)))


def responsivity(fields: np.ndarray, amplitudes: np.ndarray) -> ResponsivityFit:
    """Fit photovoltage amplitude against applied field.

    Needs at least three points spanning a factor of ten in field so the
    fit actually constrains linearity.  The reported responsivity is the
    through-origin slope; the free fit only grades linearity via R^2.
    """
    e = np.asarray(fields, dtype=float)
    a = np.asarray(amplitudes, dtype=float)
    if e.shape != a.shape or e.ndim != 1:
        raise ValidationError("fields and amplitudes must be matching 1-d arrays")
    if e.size < 3:
        raise ValidationError("responsivity fit needs at least 3 points")
    if np.any(e <= 0.0):
        raise ValidationError("fields must be positive")
    if np.max(e) / np.min(e) < 10.0:
        raise ValidationError("fields must span at least a decade")

    slope0 = float(np.dot(e, a) / np.dot(e, e))
    coef = np.polynomial.polynomial.polyfit(e, a, 1)
    pred = np.polynomial.polynomial.polyval(e, coef)
    ss_res = float(np.sum((a - pred) ** 2))
    ss_tot = float(np.sum((a - np.mean(a)) ** 2))
    if ss_tot == 0.0:
        raise UndefinedCorrelationError("amplitude series is constant")
    r2 = 1.0 - ss_res / ss_tot
    return ResponsivityFit(slope=slope0, free_slope=float(coef[1]),
                           intercept=float(coef[0]), r_squared=r2,
                           fields=e, amplitudes=a)


def measure_responsivity(config: ExperimentConfig, fields: np.ndarray,
                         seed: int | None = 0, window: str = "rectangular",
                         od_ramp: bool = True) -> ResponsivityFit:
    """End-to-end responsivity: synthesize, analyze, fit.

    One trace per field value; traces share the detector noise seed offset
    by the point index so repeat calls are reproducible.  ``od_ramp=False``
    holds the optical depth at od_start, which puts the measured slope on
    the same footing as the budget responsivity instead of averaging over
    the decaying cloud.
    """
    fields = np.asarray(fields, dtype=float)
    amps = []
    for i, e in enumerate(fields):
        s = None if seed is None else seed + i
        trace = synthesize_trace(config, float(e), seed=s, od_ramp=od_ramp)
        spec = spectral_density(trace, window=window, detrend=True)
        amp, _ = peak_amplitude(spec, trace.delta_s / (2.0 * math.pi))
        amps.append(amp)
    return responsivity(fields, np.array(amps))


def sensitivity_spectrum(spectrum: AmplitudeSpectrum,
                         resp: float) -> SensitivitySpectrum:
    """Convert a voltage ASD to field-equivalent units via the responsivity."""
    if resp <= 0.0:
        raise ValidationError("responsivity must be positive")
    return SensitivitySpectrum(freqs=spectrum.freqs.copy(),
                               field_asd=spectrum.asd / resp)


def min_detectable_field(sensitivity: float, t_prime: float) -> float:
    """Smallest resolvable field after integrating for t_prime seconds."""
    if sensitivity < 0.0:
        raise ValidationError("sensitivity must be non-negative")
    if t_prime <= 0.0:
        raise ValidationError("integration time must be positive")
    return sensitivity / math.sqrt(t_prime)


def averaging_time(n_traces: int, rep_rate: float = REPETITION_RATE) -> float:
    """Equivalent integration time for n averaged acquisition windows."""
    if n_traces < 1:
        raise ValidationError("need at least one trace")
    return n_traces / rep_rate


def emin_measured(config: ExperimentConfig, n_traces: int, resp: float,
                  base_seed: int = 5000, band: tuple[float, float] = (10e3, 300e3),
                  window: str = "rectangular") -> float:
    """Smallest resolvable field from waveform averaging, measured.

    Averages ``n_traces`` noise-only windows sample by sample, reads the
    residual ASD floor of the averaged waveform over ``band``, and divides
    by the responsivity.  The deterministic part of the window is shared
    by all traces, so it is synthesized once and only the detector noise
    is redrawn per seed.
    """
    if n_traces < 1:
        raise ValidationError("need at least one trace")
    if resp <= 0.0:
        raise ValidationError("responsivity must be positive")
    base = synthesize_trace(config, 0.0, seed=None)
    n = base.volts.size
    sigma = config.nev * math.sqrt(base.sample_rate / 2.0)
    acc = np.zeros(n)
    for i in range(n_traces):
        rng = np.random.default_rng(base_seed + i)
        acc += rng.normal(0.0, sigma, size=n)
    mean = TimeTrace(sample_rate=base.sample_rate,
                     volts=base.volts + acc / n_traces, e_cal=0.0,
                     delta_s=base.delta_s, phi0=base.phi0, seed=None)
    spec = spectral_density(mean, window=window, detrend=True)
    return noise_floor(spec, band[0], band[1]) / resp


def trace_to_csv(trace: TimeTrace, path: str | Path,
                 extra_meta: dict | None = None) -> None:
    """Write a trace as t_s,volts CSV plus a JSON metadata sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "volts"])
        for ti, vi in zip(trace.times, trace.volts):
            writer.writerow(["%.9e" % ti, "%.12e" % vi])
    meta = {
        "sample_rate_hz": trace.sample_rate,
        "e_cal_v_per_m": trace.e_cal,
        "delta_s_hz": trace.delta_s / (2.0 * math.pi),
        "phi0_rad": trace.phi0,
        "seed": trace.seed,
    }
    if extra_meta:
        meta.update(extra_meta)
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def trace_from_csv(path: str | Path) -> TimeTrace:
    """Read a trace written by trace_to_csv; the sidecar is optional."""
    path = Path(path)
    times = []
    volts = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["t_s", "volts"]:
            raise ValidationError("unrecognized trace CSV header: %r" % (header,))
        for row in reader:
            times.append(float(row[0]))
            volts.append(float(row[1]))
    if len(times) < 2:
        raise ValidationError("trace CSV has fewer than 2 samples")
    dt = times[1] - times[0]
    if dt <= 0.0:
        raise ValidationError("trace CSV times must increase")
    meta_path = path.with_suffix(path.suffix + ".json")
    e_cal = 0.0
    delta_s = 0.0
    phi0 = 0.0
    seed = None
    if meta_path.exists():
        with open(meta_path) as fh:
            meta = json.load(fh)
        e_cal = float(meta.get("e_cal_v_per_m", 0.0))
        delta_s = 2.0 * math.pi * float(meta.get("delta_s_hz", 0.0))
        phi0 = float(meta.get("phi0_rad", 0.0))
        seed = meta.get("seed")
    return TimeTrace(sample_rate=1.0 / dt, volts=np.array(volts), e_cal=e_cal,
                     delta_s=delta_s, phi0=phi0, seed=seed)


def spectrum_to_csv(freqs: np.ndarray, values: np.ndarray, path: str | Path,
                    value_header: str = "asd",
                    extra_meta: dict | None = None) -> None:
    """Write a spectrum as freq_hz,<value> CSV with an optional JSON sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["freq_hz", value_header])
        for fi, vi in zip(np.asarray(freqs), np.asarray(values)):
            writer.writerow(["%.9e" % fi, "%.12e" % vi])
    if extra_meta is not None:
        with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
            json.dump(extra_meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
