"""Probe transmission spectra, an analytic weak-probe model, and fits.

Two spectrum sources live here. ``eit_spectrum`` drives the full
density-matrix chain over a probe-detuning grid. ``chi_eff`` is the
weak-probe effective susceptibility of the microwave-dressed ladder,

    chi = -(2 n0 |mu12|^2 / hbar eps0) (d3 d4 - Ol^2/4)
          / (d2 d3 d4 - d2 Ol^2/4 - d4 Oc^2/4)

with d_j = Delta_j + i gamma_j. The imaginary parts make the medium
absorptive for positive dephasing; when all couplings vanish the
two-level Lorentzian is recovered. The susceptibility is normalized so
that its weak-probe transmission is exp(-k_p L Im(chi) / 2); the half
compensates the amplitude convention of the prefactor and makes the
two-level resonant limit reproduce exp(-d_opt) exactly.

Fits use damped normal equations (Levenberg-Marquardt style) with
forward-difference Jacobians.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.constants as sc

from . import doppler
from .bloch import LevelShifts
from .errors import DomainError, FitError, SingularityError
from .quantities import TWO_PI, ExperimentConfig, derive


@dataclass(frozen=True)
class Spectrum:
    """A sampled response curve: detunings in rad/s, dimensionless values."""

    detunings: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.detunings, float)
        v = np.asarray(self.values, float)
        if d.ndim != 1 or d.shape != v.shape:
            raise DomainError("spectrum needs matching 1-d detuning/value arrays")
        if d.size >= 2 and np.any(np.diff(d) <= 0.0):
            raise DomainError("spectrum detunings must increase")
        if not np.all(np.isfinite(v)):
            raise DomainError("spectrum values must be finite")
        object.__setattr__(self, "detunings", d)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class FitResult:
    """Fitted parameters, their covariance, and the residual scale."""

    params: dict
    covariance: np.ndarray
    residual_rms: float

    def to_json_dict(self):
        stderr = {}
        names = [k for k in self.params if not k.startswith("_")]
        diag = np.diag(self.covariance) if self.covariance.size else []
        for name, var in zip(names, diag):
            stderr[name] = math.sqrt(var) if var >= 0.0 else float("nan")
        return {"params": dict(self.params), "stderr": stderr,
                "residual_rms": self.residual_rms}


def eit_spectrum(config: ExperimentConfig, detunings, include_mw: bool = True,
                 shifts: LevelShifts = LevelShifts(), gamma_deph: float = 0.0,
                 d_opt: float | None = None,
                 od_ramp_average: bool = False) -> Spectrum:
    """Transmission versus probe detuning through the full model.

    ``include_mw`` selects between the dressed (microwave on) and plain
    EIT spectra. With ``od_ramp_average`` the transmission is averaged
    over nine optical depths spanning the configured window ramp, which
    mimics a spectrum integrated over the detection window.
    """
    detunings = np.asarray(detunings, float)
    if d_opt is None:
        d_opt = config.od_start
    if od_ramp_average:
        ods = np.linspace(config.od_start, config.od_end, 9)
    else:
        ods = np.array([d_opt])
    omega_l_eff = config.omega_l if include_mw else 0.0
    values = np.empty_like(detunings)
    for i, dp in enumerate(detunings):
        cfg = dataclasses.replace(config, delta_p=float(dp))
        rho = doppler.averaged_coherence(cfg, shifts, gamma_deph, omega_l_eff)
        t_each = [doppler.transmission(od, config.gamma_e, config.omega_p0, rho)
                  for od in ods]
        values[i] = float(np.mean(t_each))
    return Spectrum(detunings=detunings, values=values)


@dataclass(frozen=True)
class ChiParams:
    """Fixed inputs of the weak-probe susceptibility.

    ``gamma2`` is the full coherence decay of the probe transition
    (gamma_e/2 for pure radiative decay); ``gamma3``/``gamma4`` are the
    Rydberg coherence widths (decay/2 plus dephasing). The offsets shift
    the upper detunings relative to the probe detuning, which is where
    collective level shifts enter.
    """

    omega_c: float
    omega_l: float
    gamma2: float
    gamma3: float
    gamma4: float
    delta3_offset: float = 0.0
    delta4_offset: float = 0.0
    n0: float = 5.68e13
    mu12: float = 2.534e-29


def chi_eff(params: ChiParams, delta_p):
    """Weak-probe susceptibility of the microwave-dressed ladder."""
    dp = np.asarray(delta_p, float)
    d2 = dp + 1j * params.gamma2
    d3 = dp + params.delta3_offset + 1j * params.gamma3
    d4 = dp + params.delta4_offset + 1j * params.gamma4
    ol2 = 0.25 * params.omega_l ** 2
    oc2 = 0.25 * params.omega_c ** 2
    num = d3 * d4 - ol2
    den = d2 * d3 * d4 - d2 * ol2 - d4 * oc2
    scale = np.maximum.reduce([np.abs(d2 * d3 * d4), np.abs(d2) * ol2,
                               np.abs(d4) * oc2, np.full_like(dp, 1.0)])
    bad = np.abs(den) < 1e-12 * scale
    if np.any(bad):
        where = dp[bad] if dp.ndim else dp
        raise SingularityError(
            f"susceptibility pole at delta_p = {np.atleast_1d(where)[0]:g} rad/s")
    prefactor = 2.0 * params.n0 * params.mu12 ** 2 / (sc.hbar * sc.epsilon_0)
    chi = -prefactor * num / den
    return chi if chi.ndim else complex(chi)


def transmission_from_chi(chi, k_p: float, length: float):
    """Weak-probe power transmission for the susceptibility above."""
    if k_p <= 0.0 or length < 0.0:
        raise DomainError("need positive wave number and nonnegative length")
    return np.exp(-k_p * length * np.imag(chi) / 2.0)


def weak_probe_coherence(config: ExperimentConfig, gamma_deph: float,
                         delta_p, v: float = 0.0):
    """Analytic weak-probe rho21 by the continued-fraction expression.

    Independent of the dense steady-state solver; used to cross-check
    it in the perturbative regime.
    """
    der = derive(config)
    dp = np.asarray(delta_p, float)
    d2 = dp + der.k_p * v
    d3 = dp + (der.k_p - der.k_c) * v
    d4 = dp + (der.k_p - der.k_c + der.k_l) * v
    g2 = 0.5 * config.gamma_e
    g3 = 0.5 * config.gamma_r + gamma_deph
    g4 = 0.5 * config.gamma_rp + gamma_deph
    dd2 = g2 - 1j * d2
    dd3 = g3 - 1j * d3
    dd4 = g4 - 1j * d4
    chain = dd2 + (0.25 * config.omega_c0 ** 2) / (
        dd3 + (0.25 * config.omega_l ** 2) / dd4)
    return (1j * config.omega_p0 / 2.0) / chain


def _jacobian(model, p, scale=1e-6):
    r0 = model(p)
    jac = np.empty((r0.size, p.size))
    for k in range(p.size):
        h = scale * max(abs(p[k]), 1e-30)
        pk = p.copy()
        pk[k] += h
        jac[:, k] = (model(pk) - r0) / h
    return jac, r0


def _lm_fit(model, p0, data, max_iter: int = 200, lam0: float = 1e-3):
    """Damped normal-equation least squares. Returns (p, cov, rms)."""
    data = np.asarray(data, float)
    if data.size <= len(p0):
        raise FitError("fewer data points than free parameters")
    if np.ptp(data) == 0.0:
        raise FitError("degenerate fit data: all values equal")
    p = np.asarray(p0, float).copy()

    def residual(q):
        return model(q) - data

    def finish(q, c):
        jac, _ = _jacobian(residual, q)
        dof = max(data.size - q.size, 1)
        try:
            cov = np.linalg.inv(jac.T @ jac) * (c / dof)
        except np.linalg.LinAlgError:
            cov = np.full((q.size, q.size), np.nan)
        return q, cov, math.sqrt(c / data.size)

    r = residual(p)
    cost = float(r @ r)
    lam = lam0
    for _ in range(max_iter):
        jac, _ = _jacobian(residual, p)
        grad = jac.T @ r
        hess = jac.T @ jac
        scale = np.diag(hess).copy()
        scale[scale <= 0.0] = 1.0
        if cost == 0.0 or np.max(np.abs(grad)) == 0.0:
            return finish(p, cost)
        improved = False
        for _ in range(60):
            try:
                step = np.linalg.solve(hess + lam * np.diag(scale), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_try = p + step
            r_try = residual(p_try)
            cost_try = float(r_try @ r_try)
            if np.isfinite(cost_try) and cost_try <= cost:
                improved = True
                break
            lam *= 3.0
        if not improved:
            # damping exhausted: accept a stationary point, reject a stall
            if np.max(np.abs(grad)) <= 1e-8 * max(cost, 1e-300):
                return finish(p, cost)
            raise FitError(
                f"fit stalled; residual rms {math.sqrt(cost / data.size):.3e}")
        rel_step = float(np.max(np.abs(step) / np.maximum(np.abs(p_try), 1e-30)))
        gain = cost - cost_try
        p, r, cost = p_try, r_try, cost_try
        lam = max(lam * 0.3, 1e-12)
        if rel_step <= 1e-10 or gain <= 1e-14 * max(cost, 1e-300):
            return finish(p, cost)
    raise FitError(
        f"fit not converged after {max_iter} iterations; residual rms "
        f"{math.sqrt(cost / data.size):.3e}")


def _half_depth_width(x, y):
    """Rough full width of the deepest dip at half its depth."""
    y = np.asarray(y, float)
    base = np.max(y)
    idx = int(np.argmin(y))
    half = 0.5 * (base + y[idx])
    below = np.where(y <= half)[0]
    if below.size < 2:
        return (x[-1] - x[0]) / 10.0
    return float(x[below[-1]] - x[below[0]])


def fit_dephasing(spectrum: Spectrum, fixed: ChiParams, k_p: float,
                  length: float, init: tuple | None = None) -> FitResult:
    """Fit the Rydberg coherence widths gamma3, gamma4 to a spectrum.

    Everything else in ``fixed`` is held. The widths enter through
    their magnitudes, so the fit cannot wander into gain. Initial
    guesses default to the half-depth width of the deepest feature.
    """
    x, y = spectrum.detunings, spectrum.values
    if init is None:
        g0 = max(_half_depth_width(x, y) / 4.0, 1e-3 * (x[-1] - x[0]))
        init = (g0, g0)

    def model(p):
        trial = dataclasses.replace(fixed, gamma3=abs(p[0]), gamma4=abs(p[1]))
        return transmission_from_chi(chi_eff(trial, x), k_p, length)

    p, cov, rms = _lm_fit(model, np.asarray(init, float), y)
    params = {"gamma3": abs(p[0]), "gamma4": abs(p[1])}
    return FitResult(params=params, covariance=cov, residual_rms=rms)


def fit_lorentzian(response: Spectrum) -> FitResult:
    """Fit A/(1 + ((x-x0)/g)^2) + c to a response curve.

    Returns amplitude, center, half width g, offset, plus the derived
    full width (2g) and the 3 dB frequency g*sqrt(sqrt(2)-1), the
    offset from center where the amplitude response has dropped by half
    power.
    """
    x, y = response.detunings, response.values
    c0 = float(np.min(y))
    a0 = float(np.max(y) - c0)
    if a0 <= 0.0:
        raise FitError("degenerate fit data: all values equal")
    x0 = float(x[int(np.argmax(y))])
    above = np.where(y >= c0 + 0.5 * a0)[0]
    g0 = 0.5 * float(x[above[-1]] - x[above[0]]) if above.size >= 2 else (
        (x[-1] - x[0]) / 10.0)
    g0 = max(g0, 1e-6 * (x[-1] - x[0]))

    def model(p):
        a, center, g, c = p
        return a / (1.0 + ((x - center) / g) ** 2) + c

    p, cov, rms = _lm_fit(model, np.array([a0, x0, g0, c0]), y)
    a, center, g, c = p
    g = abs(g)
    params = {"amplitude": a, "center": center, "hwhm": g, "offset": c,
              "fwhm": 2.0 * g, "f_3db": g * math.sqrt(math.sqrt(2.0) - 1.0)}
    return FitResult(params=params, covariance=cov, residual_rms=rms)


def spectrum_to_csv(spectrum: Spectrum, path) -> None:
    """Write a spectrum as two-column CSV with detuning in ordinary Hz."""
    with open(path, "w") as fh:
        fh.write("detuning_hz,value\n")
        for d, v in zip(spectrum.detunings, spectrum.values):
            fh.write(f"{d / TWO_PI:.12g},{v:.12g}\n")


def spectrum_from_csv(path) -> Spectrum:
    """Read a two-column (detuning_hz, value) CSV back into a Spectrum."""
    det, val = [], []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DomainError(f"{path}:{line_no}: expected two columns")
            try:
                det.append(float(parts[0]) * TWO_PI)
                val.append(float(parts[1]))
            except ValueError:
                if line_no == 1:
                    continue
                raise DomainError(f"{path}:{line_no}: non-numeric entry") from None
    return Spectrum(detunings=np.array(det), values=np.array(val))


def fit_to_json(result: FitResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(result.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
