"""Parameter sweeps, operating-point search, and the command line front end.

Sweeps assemble a complete noise budget per grid point. The probe-power
sweep follows the measurement convention: the heterodyne response (probe
transmission, slope, responsivity) is frozen at the reference operating
point where it was calibrated, so the photon term scales as P^-1/2 and
the detector term as P^-1, while the atomic side (trapped atom number,
interaction dephasing, coherence time) is recomputed per point from the
power calibration. Per-point totals treat the four noise terms as
independent; the correlation between the atomic and photon series is a
property of the whole sweep and is reported alongside the table rather
than entering any single point.

All persisted output is deterministic: CSV bytes depend only on the
configuration and the grid, never on wall time or worker count.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scipy.interpolate import CubicSpline

from .bloch import LevelShifts
from .doppler import averaged_coherence
from .errors import ConfigError, RydsenseError, ValidationError
from .heterodyne_dsp import (REPETITION_RATE, measure_responsivity,
                             min_detectable_field, noise_floor, peak_amplitude,
                             sensitivity_spectrum, spectral_density,
                             synthesize_trace, trace_from_csv, trace_to_csv,
                             emin_measured)
from .heterodyne_dsp import spectrum_to_csv as _freq_csv
from .interactions import interaction_summary
from .noise_budget import (V_M_TO_NV_CM, NoiseBudget, antenna_gain,
                           coherence_time, combine, correlation,
                           evaluate_budget, nef_at, nef_ex, nef_pd, nef_ph,
                           responsivity_from_slope, transmission_slope)
from .quantities import (ATOMS_AT_REFERENCE, TWO_PI, ExperimentConfig,
                         atoms_at_power, config_hash, default_config, derive,
                         load_config, probe_rabi_at, temp_from_doppler_width)
from .spectra import (ChiParams, eit_spectrum, fit_dephasing, fit_lorentzian,
                      fit_to_json, spectrum_from_csv, spectrum_to_csv)

# Doppler FWHM values (ordinary MHz) spanning cold-cloud to room-
# temperature vapour; the temperature axis of the default map.
MAP_DOPPLER_WIDTHS_MHZ = (0.3, 29.0, 92.0, 246.0, 405.0, 509.0)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# result containers

@dataclass(frozen=True)
class SweepTable:
    """One budget per point along a monotone scalar axis."""

    axis_name: str
    axis_unit: str
    axis: tuple
    budgets: tuple
    r_series: float     # correlation of nef_at vs nef_ph across the sweep
    config_digest: str

    def __post_init__(self):
        if len(self.axis) != len(self.budgets):
            raise ValidationError("one budget per axis point required")
        ax = np.asarray(self.axis, dtype=float)
        if ax.size < 2:
            raise ValidationError("sweep needs at least two points")
        if not np.all(np.isfinite(ax)):
            raise ValidationError("sweep axis must be finite")
        d = np.diff(ax)
        if not (np.all(d > 0.0) or np.all(d < 0.0)):
            raise ValidationError("sweep axis must be strictly monotone")

    @property
    def totals(self):
        return tuple(b.total for b in self.budgets)

    def minimum(self):
        """(axis value, budget) at the smallest combined NEF."""
        i = int(np.argmin([b.total for b in self.budgets]))
        return self.axis[i], self.budgets[i]


@dataclass(frozen=True)
class MapResult:
    """Sensitivity-to-SQL ratio over a temperature x optical depth grid.

    Rows follow ``gamma_d`` (Doppler FWHM, rad/s, with the equivalent
    cloud temperature in ``temps``), columns follow ``ods``. The photon
    and atom noise matrices are kept alongside the ratio so the map can
    be decomposed without recomputation.
    """

    gamma_d: tuple
    temps: tuple
    ods: tuple
    ratio: tuple
    nef_ph_map: tuple
    nef_at_map: tuple
    config_digest: str

    def __post_init__(self):
        nr, nc = len(self.gamma_d), len(self.ods)
        if len(self.temps) != nr:
            raise ValidationError("temperature axis length mismatch")
        for m in (self.ratio, self.nef_ph_map, self.nef_at_map):
            if len(m) != nr or any(len(row) != nc for row in m):
                raise ValidationError("map matrix shape mismatch")
        for ax in (self.gamma_d, self.temps, self.ods):
            a = np.asarray(ax, dtype=float)
            if not np.all(np.isfinite(a)) or np.any(a <= 0.0):
                raise ValidationError("map axes must be positive and finite")
            if a.size > 1 and not np.all(np.diff(a) > 0.0):
                raise ValidationError("map axes must be strictly increasing")
        # with independent per-cell noise terms the combined NEF cannot
        # fall below the atomic term, so the ratio is floored at one
        if np.min(np.asarray(self.ratio, dtype=float)) < 1.0 - 1e-9:
            raise ValidationError("ratio below the atom-noise floor")


@dataclass(frozen=True)
class RabiOptimum:
    """Local-tone Rabi frequency maximizing the transmission response."""

    omega_l: float            # argmax, rad/s
    slope: float              # |dT_P / dOmega_L| there, s
    omega_l_operating: float  # configured operating point, for comparison
    slope_operating: float
    boundary: bool            # True when pinned at the bracket edge
    evaluations: int


# ---------------------------------------------------------------------------
# per-point workers (module level so process pools can pickle them)

def _power_point(payload):
    config, ref, power, hold_atoms = payload
    if hold_atoms:
        n_p, t2 = ref.atom_number, ref.t2
        at, g_r, n_b = ref.nef_at, ref.gamma_r, ref.n_b
    else:
        n_p = atoms_at_power(config, power)
        c = dataclasses.replace(
            config, probe_power=power,
            omega_p0=probe_rabi_at(config, power),
            n_at=config.n_at * n_p / ATOMS_AT_REFERENCE)
        summary = interaction_summary(c)
        g_r, n_b = summary.gamma_r, summary.geometry.n_b
        t2 = coherence_time(c, derive(c).gamma_t, g_r)
        at = nef_at(c, n_p, t2)
    s = power / config.probe_power
    ph = ref.nef_ph / math.sqrt(s)
    pd = ref.nef_pd / s
    total = combine(at, ph, pd, ref.nef_ex, 0.0)
    return dataclasses.replace(
        ref, nef_at=at, nef_ph=ph, nef_pd=pd, r=0.0, total=total, t2=t2,
        r_h=ref.r_h * s, gamma_r=g_r, n_b=n_b, atom_number=n_p)


def _atoms_point(payload):
    config, gain, n = payload
    scale = n / ATOMS_AT_REFERENCE
    c = dataclasses.replace(config, n_at=config.n_at * scale)
    b = evaluate_budget(c, r=0.0, gain=gain, d_opt=config.od_start * scale)
    at = nef_at(c, n, b.t2)
    total = combine(at, b.nef_ph, b.nef_pd, b.nef_ex, 0.0)
    return dataclasses.replace(b, nef_at=at, atom_number=n, total=total)


def _map_cell(payload):
    config, gain, temp, od, sigma12 = payload
    c = dataclasses.replace(config, temp_a=temp,
                            n_at=od / (sigma12 * config.length_l))
    return evaluate_budget(c, r=0.0, gain=gain, d_opt=od)


def _run_points(fn, payloads, workers):
    if workers <= 1:
        return tuple(fn(p) for p in payloads)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return tuple(pool.map(fn, payloads))


# ---------------------------------------------------------------------------
# sweeps

def sweep_probe_power(config: ExperimentConfig, powers=None,
                      hold_atoms: bool = False, workers: int = 1) -> SweepTable:
    """Combined NEF against incident probe power.

    Per point the trapped atom number comes from the power calibration
    table, the interaction dephasing and coherence time are recomputed at
    the rescaled density and probe Rabi frequency, and the photon and
    detector terms scale from the reference-point response. With
    ``hold_atoms`` the atomic side is frozen too, which isolates the pure
    shot-noise scaling and makes the total strictly decreasing in power.
    """
    if powers is None:
        powers = np.linspace(0.33e-6, 9.53e-6, 24)
    powers = np.asarray(powers, dtype=float)
    if np.any(powers <= 0.0):
        raise ValidationError("probe powers must be positive")
    for p in powers:
        atoms_at_power(config, float(p))   # fail fast on table coverage
    ref = evaluate_budget(config)
    budgets = _run_points(
        _power_point,
        [(config, ref, float(p), hold_atoms) for p in powers], workers)
    if hold_atoms:
        r_series = float("nan")
    else:
        r_series = correlation([b.nef_at for b in budgets],
                               [b.nef_ph for b in budgets])
    return SweepTable("probe_power", "W", tuple(float(p) for p in powers),
                      budgets, r_series, config_hash(config))


def sweep_atom_number(config: ExperimentConfig, grid=None,
                      workers: int = 1) -> SweepTable:
    """Combined NEF against participating atom number at fixed probe power.

    The axis rescales the cloud density at fixed beam geometry, so the
    optical depth seen by the probe scales with N. Atom counts outside
    the calibration range are allowed: N enters the model directly.
    """
    if grid is None:
        grid = np.geomspace(5.2e2, 5.2e5, 13)
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= 0.0) or not np.all(np.isfinite(grid)):
        raise ValidationError("atom-number grid must be positive and finite")
    gain = antenna_gain(config.length_l, config.lambda_mw, config.beta)
    budgets = _run_points(
        _atoms_point, [(config, gain, float(n)) for n in grid], workers)
    r_series = correlation([b.nef_at for b in budgets],
                           [b.nef_ph for b in budgets])
    return SweepTable("atom_number", "", tuple(float(n) for n in grid),
                      budgets, r_series, config_hash(config))


def map_temperature_od(config: ExperimentConfig, temps=None, ods=None,
                       workers: int = 1) -> MapResult:
    """Ratio of combined NEF to the atom-noise limit over (T, D_opt).

    Each cell replaces the cloud temperature and rescales the density to
    hit the requested optical depth, then evaluates the full budget with
    independent noise terms. The photon-noise matrix doubles as the
    photon-limited sensitivity curves at each Doppler width.
    """
    if temps is None:
        temps = tuple(temp_from_doppler_width(config, TWO_PI * m * 1e6)
                      for m in MAP_DOPPLER_WIDTHS_MHZ)
    temps = tuple(float(t) for t in temps)
    if ods is None:
        ods = np.geomspace(0.05, 20.0, 9)
    ods = tuple(float(o) for o in np.asarray(ods, dtype=float))
    sigma12 = derive(config).sigma12
    gain = antenna_gain(config.length_l, config.lambda_mw, config.beta)
    payloads = [(config, gain, t, od, sigma12) for t in temps for od in ods]
    budgets = _run_points(_map_cell, payloads, workers)
    nc = len(ods)
    ratio, ph_map, at_map = [], [], []
    for i in range(len(temps)):
        row = budgets[i * nc:(i + 1) * nc]
        ratio.append(tuple(b.total / b.nef_at for b in row))
        ph_map.append(tuple(b.nef_ph for b in row))
        at_map.append(tuple(b.nef_at for b in row))
    gamma_d = tuple(derive(dataclasses.replace(config, temp_a=t)).gamma_d
                    for t in temps)
    return MapResult(gamma_d, temps, ods, tuple(ratio), tuple(ph_map),
                     tuple(at_map), config_hash(config))


def optimize_local_rabi(config: ExperimentConfig, lo: float = 0.0,
                        hi: float | None = None, scan_points: int = 17,
                        rel_tol: float = 1e-3, gamma_deph: float | None = None,
                        d_opt: float | None = None) -> RabiOptimum:
    """Find the local-tone Rabi frequency maximizing |dT_P / dOmega_L|.

    A coarse scan over [lo, hi] brackets the largest response the grid
    can resolve, then golden-section refinement narrows the bracket to
    ``rel_tol`` of the search span. The response is even in the local
    tone, so its derivative vanishes at zero and the origin is scored
    without a solve. A maximum pinned at the bracket edge is returned
    as-is with a warning.
    """
    der = derive(config)
    if hi is None:
        hi = config.omega_c0
    if not 0.0 <= lo < hi:
        raise ValidationError("need 0 <= lo < hi for the search bracket")
    if scan_points < 5:
        raise ValidationError("coarse scan needs at least five points")
    if gamma_deph is None:
        gamma_deph = config.gamma0 + der.gamma_t
    if d_opt is None:
        d_opt = config.od_start
    shifts = LevelShifts(0.0, 0.0, 0.0)
    evals = [0]

    def f(w):
        if w == 0.0:
            return 0.0
        evals[0] += 1
        return abs(transmission_slope(config, shifts, gamma_deph, w, d_opt))

    xs = np.linspace(lo, hi, scan_points)
    ys = np.array([f(float(x)) for x in xs])
    i = int(np.argmax(ys))
    op_slope = f(config.omega_l)
    if i == scan_points - 1 or (i == 0 and lo > 0.0):
        warnings.warn("transmission response maximal at the bracket edge; "
                      "returning the boundary value", RuntimeWarning)
        return RabiOptimum(float(xs[i]), float(ys[i]), config.omega_l,
                           op_slope, True, evals[0])
    a, b = float(xs[i - 1]) if i > 0 else lo, float(xs[i + 1])
    c1 = b - _GOLDEN * (b - a)
    c2 = a + _GOLDEN * (b - a)
    f1, f2 = f(c1), f(c2)
    while (b - a) > rel_tol * hi:
        if f1 < f2:
            a, c1, f1 = c1, c2, f2
            c2 = a + _GOLDEN * (b - a)
            f2 = f(c2)
        else:
            b, c2, f2 = c2, c1, f1
            c1 = b - _GOLDEN * (b - a)
            f1 = f(c1)
    w = 0.5 * (a + b)
    return RabiOptimum(w, f(w), config.omega_l, op_slope, False, evals[0])


# ---------------------------------------------------------------------------
# persistence helpers

_BUDGET_COLUMNS = ("nef_at", "nef_ph", "nef_pd", "nef_ex", "r", "total",
                   "t2", "gain", "t_p", "slope", "r_h", "gamma_r", "n_b",
                   "d_opt", "atom_number")


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_sweep_csv(path: Path, table: SweepTable) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(table.axis_name + "," + ",".join(_BUDGET_COLUMNS) + "\n")
        for x, b in zip(table.axis, table.budgets):
            row = [x] + [getattr(b, c) for c in _BUDGET_COLUMNS]
            fh.write(",".join("%.12e" % v for v in row) + "\n")


def _write_map_csv(path: Path, result: MapResult, matrix) -> None:
    with open(path, "w", newline="") as fh:
        head = ["gamma_d_rad_s", "temp_k"] + ["od_%.6g" % o for o in result.ods]
        fh.write(",".join(head) + "\n")
        for g, t, row in zip(result.gamma_d, result.temps, matrix):
            vals = [g, t] + list(row)
            fh.write(",".join("%.12e" % v for v in vals) + "\n")


def _sweep_sidecar(table: SweepTable) -> dict:
    x_min, b_min = table.minimum()
    return {
        "axis_name": table.axis_name,
        "axis_unit": table.axis_unit,
        "axis": list(table.axis),
        "r_series": None if math.isnan(table.r_series) else table.r_series,
        "minimum": {"axis_value": x_min,
                    "total_nv_cm_rthz": b_min.total * V_M_TO_NV_CM},
        "config_hash": table.config_digest,
    }


# ---------------------------------------------------------------------------
# command line front end

def _load(args) -> ExperimentConfig:
    if args.config is None:
        return default_config()
    return load_config(args.config)


def _rundir(args, sub: str, config: ExperimentConfig) -> Path:
    out = Path(args.out) / sub / config_hash(config)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _workers(args) -> int:
    if getattr(args, "workers", None) is not None:
        n = args.workers
    else:
        raw = os.environ.get("RYDSENSE_WORKERS", "1")
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"RYDSENSE_WORKERS is not an integer: {raw!r}")
    if n < 1:
        raise ConfigError("worker count must be at least 1")
    return n


def _nvcm(x: float) -> float:
    return x * V_M_TO_NV_CM


def _cmd_budget(args) -> int:
    config = _load(args)
    budget = evaluate_budget(config, r=args.r)
    out = _rundir(args, "budget", config)
    doc = {"model": budget.to_json_dict(), "config_hash": config_hash(config)}
    line = ("budget: total %.3f nV/cm/rtHz (at %.3f, ph %.3f, pd %.3f, "
            "ex %.3f, r %.2f)" % (_nvcm(budget.total), _nvcm(budget.nef_at),
                                  _nvcm(budget.nef_ph), _nvcm(budget.nef_pd),
                                  _nvcm(budget.nef_ex), budget.r))
    if args.inject is not None:
        at, ph, pd, ex = args.inject
        total = combine(at, ph, pd, ex, args.inject_r)
        doc["injected"] = {"nef_at": at, "nef_ph": ph, "nef_pd": pd,
                           "nef_ex": ex, "r": args.inject_r, "total": total,
                           "units": "nV/cm/rtHz"}
        line += "; injected total %.3f nV/cm/rtHz" % total
    _write_json(out / "budget.json", doc)
    _write_json(out / "config.json", config.to_json_dict())
    print(line + " -> " + str(out / "budget.json"))
    return 0


def _cmd_gain(args) -> int:
    config = _load(args)
    g = antenna_gain(args.length, args.wavelength, args.beta)
    out = _rundir(args, "gain", config)
    _write_json(out / "gain.json", {
        "length_l_m": args.length, "lambda_mw_m": args.wavelength,
        "beta_rad": args.beta, "gain": g,
        "config_hash": config_hash(config)})
    print("gain: G = %.4f for L = %g m, lambda = %g m, beta = %g rad"
          % (g, args.length, args.wavelength, args.beta))
    return 0


def _cmd_spectrum(args) -> int:
    config = _load(args)
    der = derive(config)
    span = TWO_PI * args.span_mhz * 1e6
    detunings = np.linspace(-span, span, args.points)
    spec = eit_spectrum(config, detunings, include_mw=not args.no_mw,
                        gamma_deph=config.gamma0 + der.gamma_t,
                        d_opt=config.od_start)
    out = _rundir(args, "spectrum", config)
    spectrum_to_csv(spec, out / "spectrum.csv")
    _write_json(out / "spectrum.json", {
        "span_mhz": args.span_mhz, "points": args.points,
        "microwave_on": not args.no_mw, "config_hash": config_hash(config)})
    _write_json(out / "config.json", config.to_json_dict())
    i = int(np.argmin(spec.values))
    print("spectrum: %d points, min transmission %.4f at %.3f MHz -> %s"
          % (args.points, spec.values[i], spec.detunings[i] / TWO_PI / 1e6,
             out / "spectrum.csv"))
    return 0


def _chi_params(config: ExperimentConfig) -> ChiParams:
    der = derive(config)
    gd = config.gamma0 + der.gamma_t
    return ChiParams(omega_c=config.omega_c0, omega_l=config.omega_l,
                     gamma2=config.gamma_e / 2.0,
                     gamma3=config.gamma_r / 2.0 + gd,
                     gamma4=config.gamma_rp / 2.0 + gd,
                     n0=config.n_at, mu12=config.mu_12)


def _cmd_fit(args) -> int:
    config = _load(args)
    spec = spectrum_from_csv(args.input)
    if args.kind == "lorentzian":
        result = fit_lorentzian(spec)
    else:
        der = derive(config)
        result = fit_dephasing(spec, _chi_params(config), der.k_p,
                               config.length_l)
    out = _rundir(args, "fit", config)
    fit_to_json(result, out / "fit.json")
    params = ", ".join("%s %.6g" % (k, v) for k, v in result.params.items())
    print("fit: %s, residual rms %.3g -> %s"
          % (params, result.residual_rms, out / "fit.json"))
    return 0


def _cmd_sweep_power(args) -> int:
    config = _load(args)
    lo, hi, n = args.grid_uw
    powers = np.linspace(lo * 1e-6, hi * 1e-6, int(n))
    table = sweep_probe_power(config, powers, hold_atoms=args.hold_atoms,
                              workers=_workers(args))
    out = _rundir(args, "sweep-power", config)
    _write_sweep_csv(out / "sweep.csv", table)
    _write_json(out / "sweep.json", _sweep_sidecar(table))
    _write_json(out / "config.json", config.to_json_dict())
    x_min, b_min = table.minimum()
    r_text = "n/a" if math.isnan(table.r_series) else "%.3f" % table.r_series
    print("sweep-power: %d points, min %.3f nV/cm/rtHz at %.3f uW, "
          "series r %s -> %s" % (len(table.axis), _nvcm(b_min.total),
                                 x_min * 1e6, r_text, out / "sweep.csv"))
    return 0


def _cmd_sweep_atoms(args) -> int:
    config = _load(args)
    lo, hi, n = args.grid_log
    grid = np.geomspace(lo, hi, int(n))
    table = sweep_atom_number(config, grid, workers=_workers(args))
    out = _rundir(args, "sweep-atoms", config)
    _write_sweep_csv(out / "sweep.csv", table)
    _write_json(out / "sweep.json", _sweep_sidecar(table))
    _write_json(out / "config.json", config.to_json_dict())
    x_min, b_min = table.minimum()
    print("sweep-atoms: %d points, min %.3f nV/cm/rtHz at N = %.3g, "
          "series r %.3f -> %s" % (len(table.axis), _nvcm(b_min.total),
                                   x_min, table.r_series, out / "sweep.csv"))
    return 0


def _cmd_map(args) -> int:
    config = _load(args)
    temps = None
    if args.widths_mhz is not None:
        temps = tuple(temp_from_doppler_width(config, TWO_PI * m * 1e6)
                      for m in args.widths_mhz)
    ods = np.geomspace(args.od_min, args.od_max, args.od_points)
    result = map_temperature_od(config, temps=temps, ods=ods,
                                workers=_workers(args))
    out = _rundir(args, "map", config)
    _write_map_csv(out / "ratio.csv", result, result.ratio)
    _write_map_csv(out / "nef_ph.csv", result, result.nef_ph_map)
    _write_map_csv(out / "nef_at.csv", result, result.nef_at_map)
    _write_json(out / "map.json", {
        "gamma_d_rad_s": list(result.gamma_d),
        "temps_k": list(result.temps),
        "ods": list(result.ods),
        "config_hash": result.config_digest})
    _write_json(out / "config.json", config.to_json_dict())
    mat = np.asarray(result.ratio)
    i, j = np.unravel_index(int(np.argmin(mat)), mat.shape)
    print("map: %dx%d cells, ratio range [%.4f, %.4f], min at "
          "gamma_D/2pi = %.3g MHz, D_opt = %.3g -> %s"
          % (mat.shape[0], mat.shape[1], mat.min(), mat.max(),
             result.gamma_d[i] / TWO_PI / 1e6, result.ods[j],
             out / "ratio.csv"))
    return 0


def _cmd_dsp_synth(args) -> int:
    config = _load(args)
    trace = synthesize_trace(config, args.e_cal, seed=args.seed,
                             sample_rate=args.fs,
                             noise_nev=0.0 if args.no_noise else None,
                             od_ramp=not args.no_ramp)
    out = _rundir(args, "dsp-synth", config)
    trace_to_csv(trace, out / "trace.csv",
                 extra_meta={"config_hash": config_hash(config)})
    _write_json(out / "config.json", config.to_json_dict())
    print("dsp-synth: %d samples over %.3f ms, mean %.4f V, e_cal %.3g V/m "
          "-> %s" % (trace.volts.size, trace.duration * 1e3,
                     float(np.mean(trace.volts)), args.e_cal,
                     out / "trace.csv"))
    return 0


def _cmd_dsp_analyze(args) -> int:
    config = _load(args)
    trace = trace_from_csv(args.input)
    spec = spectral_density(trace, window=args.window,
                            detrend=not args.no_detrend)
    out = _rundir(args, "dsp-analyze", config)
    _freq_csv(spec.freqs, spec.asd, out / "asd.csv", value_header="asd_v_rthz",
              extra_meta={"window": args.window,
                          "detrend": not args.no_detrend,
                          "config_hash": config_hash(config)})
    nyq = trace.sample_rate / 2.0
    floor = noise_floor(spec, min(10e3, 0.1 * nyq), min(300e3, 0.9 * nyq))
    line = "dsp-analyze: floor %.3e V/rtHz" % floor
    if trace.delta_s:
        amp, f_bin = peak_amplitude(spec, trace.delta_s / TWO_PI)
        line += ", peak %.3e V at %.3f kHz" % (amp, f_bin / 1e3)
    if args.resp is not None:
        sens = sensitivity_spectrum(spec, args.resp)
        _freq_csv(sens.freqs, sens.field_asd, out / "sensitivity.csv",
                  value_header="field_v_m_rthz",
                  extra_meta={"responsivity_v_per_v_m": args.resp,
                              "config_hash": config_hash(config)})
        line += ", field floor %.3f nV/cm/rtHz" % _nvcm(floor / args.resp)
    print(line + " -> " + str(out / "asd.csv"))
    return 0


def _cmd_emin(args) -> int:
    config = _load(args)
    if args.sens_nvcm is not None:
        sens = args.sens_nvcm / V_M_TO_NV_CM
    else:
        sens = evaluate_budget(config).total
    tau = args.pulses / REPETITION_RATE if args.pulses is not None else args.tau
    e_min = min_detectable_field(sens, tau)
    out = _rundir(args, "emin", config)
    doc = {"sensitivity_nv_cm_rthz": _nvcm(sens), "tau_s": tau,
           "e_min_v_m": e_min, "e_min_pv_cm": e_min * 1e10,
           "config_hash": config_hash(config)}
    line = ("emin: %.1f pV/cm for S = %.3f nV/cm/rtHz over %.0f s"
            % (e_min * 1e10, _nvcm(sens), tau))
    if args.measure:
        fields = np.geomspace(1e-4, 1e-3, 5)
        resp = measure_responsivity(config, fields, od_ramp=False).slope
        counts = sorted(set(args.measure))
        rows = [(n, n / REPETITION_RATE, emin_measured(config, n, resp))
                for n in counts]
        with open(out / "emin_measured.csv", "w", newline="") as fh:
            fh.write("n_traces,tau_s,e_min_v_m\n")
            for n, t, e in rows:
                fh.write("%d,%.12e,%.12e\n" % (n, t, e))
        if len(rows) >= 2:
            ln_n = np.log([r[0] for r in rows])
            ln_e = np.log([r[2] for r in rows])
            slope = float(np.polyfit(ln_n, ln_e, 1)[0])
            doc["measured_exponent"] = slope
            line += ", measured exponent %.3f" % slope
        doc["measured_responsivity_v_per_v_m"] = resp
    _write_json(out / "emin.json", doc)
    print(line + " -> " + str(out / "emin.json"))
    return 0


def _add_common(p) -> None:
    p.add_argument("--config", type=Path, default=None,
                   help="JSON config file (default: built-in operating point)")
    p.add_argument("--out", type=Path, default=Path("results"),
                   help="output directory root")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: RYDSENSE_WORKERS or 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rydsense",
        description="Sensitivity model and signal chain for a cold-atom "
                    "microwave heterodyne receiver.")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("budget", help="evaluate the noise budget")
    _add_common(p)
    p.add_argument("--r", type=float, default=None,
                   help="override the atom/photon correlation coefficient")
    p.add_argument("--inject", nargs=4, type=float, default=None,
                   metavar=("AT", "PH", "PD", "EX"),
                   help="also combine four given component NEFs (nV/cm/rtHz)")
    p.add_argument("--inject-r", type=float, default=-0.78,
                   help="correlation used with --inject")
    p.set_defaults(func=_cmd_budget)

    p = sub.add_parser("gain", help="effective antenna gain of a dipole")
    _add_common(p)
    p.add_argument("--L", dest="length", type=float, required=True,
                   help="dipole length, m")
    p.add_argument("--lambda", dest="wavelength", type=float, required=True,
                   help="microwave wavelength, m")
    p.add_argument("--beta", type=float, default=0.0,
                   help="phase detuning parameter, rad")
    p.set_defaults(func=_cmd_gain)

    p = sub.add_parser("spectrum", help="probe transmission spectrum")
    _add_common(p)
    p.add_argument("--span-mhz", type=float, default=30.0,
                   help="detuning half-span in MHz")
    p.add_argument("--points", type=int, default=601)
    p.add_argument("--no-mw", action="store_true",
                   help="disable the microwave drive (plain EIT)")
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("fit", help="fit a spectrum CSV")
    _add_common(p)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--kind", choices=("lorentzian", "dephasing"),
                   default="lorentzian")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("sweep-power", help="sensitivity vs probe power")
    _add_common(p)
    p.add_argument("--grid-uw", nargs=3, type=float,
                   default=(0.33, 9.53, 24), metavar=("LO", "HI", "N"),
                   help="linear power grid in microwatts")
    p.add_argument("--hold-atoms", action="store_true",
                   help="freeze the atomic side (pure shot-noise scaling)")
    p.set_defaults(func=_cmd_sweep_power)

    p = sub.add_parser("sweep-atoms", help="sensitivity vs atom number")
    _add_common(p)
    p.add_argument("--grid-log", nargs=3, type=float,
                   default=(5.2e2, 5.2e5, 13), metavar=("LO", "HI", "N"),
                   help="logarithmic atom-number grid")
    p.set_defaults(func=_cmd_sweep_atoms)

    p = sub.add_parser("map", help="sensitivity-to-SQL ratio map")
    _add_common(p)
    p.add_argument("--widths-mhz", nargs="+", type=float, default=None,
                   help="Doppler FWHM axis in MHz (default: built-in set)")
    p.add_argument("--od-min", type=float, default=0.05)
    p.add_argument("--od-max", type=float, default=20.0)
    p.add_argument("--od-points", type=int, default=9)
    p.set_defaults(func=_cmd_map)

    p = sub.add_parser("dsp-synth", help="synthesize a detector time trace")
    _add_common(p)
    p.add_argument("--e-cal", type=float, default=5e-4,
                   help="signal-tone field amplitude, V/m")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fs", type=float, default=1e6, help="sample rate, Hz")
    p.add_argument("--no-noise", action="store_true")
    p.add_argument("--no-ramp", action="store_true",
                   help="hold the optical depth instead of ramping it")
    p.set_defaults(func=_cmd_dsp_synth)

    p = sub.add_parser("dsp-analyze", help="spectral analysis of a trace")
    _add_common(p)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--window", choices=("rectangular", "hann"),
                   default="rectangular")
    p.add_argument("--no-detrend", action="store_true")
    p.add_argument("--resp", type=float, default=None,
                   help="responsivity V per V/m; also emit a field spectrum")
    p.set_defaults(func=_cmd_dsp_analyze)

    p = sub.add_parser("emin", help="smallest resolvable field")
    _add_common(p)
    p.add_argument("--sens-nvcm", type=float, default=None,
                   help="sensitivity in nV/cm/rtHz (default: model budget)")
    p.add_argument("--tau", type=float, default=420.0,
                   help="averaging time, s")
    p.add_argument("--pulses", type=int, default=None,
                   help="express the averaging time as a pulse count")
    p.add_argument("--measure", nargs="+", type=int, default=None,
                   help="also measure from averaged synthetic traces")
    p.set_defaults(func=_cmd_emin)
    return ap


def run(argv=None) -> int:
    """Entry point returning a process exit code.

    0 on success, 2 for configuration and input problems, 3 for
    numerical failures inside the model.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 2
        return 0 if code == 0 else 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except RydsenseError as exc:
        print("numerical error: %s" % exc, file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
