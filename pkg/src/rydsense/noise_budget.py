"""Noise-equivalent-field budget of the heterodyne receiver.

Four statistically independent-or-correlated contributions are modeled,
all in V/m per sqrt(Hz):

* ``nef_at``   atom shot noise, h / (mu_mw sqrt(N T2))
* ``nef_ph``   probe photon shot noise referred to the field through
               the transmission slope against the local Rabi frequency
* ``nef_pd``   detector voltage noise over the heterodyne responsivity
* ``nef_ex``   thermal and vacuum field picked up by the atomic antenna

Atom and photon terms share the EIT medium, so they combine with a
correlation coefficient r; detector and antenna terms add in
quadrature. The total is compared against the dipole thermal-
equilibrium bound computed from the effective aperture of a lossless
resonant dipole.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.constants as sc
from scipy.integrate import dblquad

from . import doppler, interactions
from .bloch import LevelShifts
from .errors import (DomainError, InsensitiveOperatingPointError,
                     QuadratureAccuracyError, UndefinedCorrelationError)
from .quantities import TWO_PI, ExperimentConfig, derive

V_M_TO_NV_CM = 1e7  # 1 V/m = 1e7 nV/cm


@dataclass(frozen=True)
class NoiseBudget:
    """Field-referred noise components and diagnostics at one operating point."""

    nef_at: float
    nef_ph: float
    nef_pd: float
    nef_ex: float
    r: float
    total: float
    t2: float
    gain: float
    t_p: float = float("nan")
    slope: float = float("nan")      # dT_p / dOmega_l, s
    r_h: float = float("nan")        # heterodyne responsivity, V per V/m
    gamma_r: float = float("nan")
    n_b: float = float("nan")
    d_opt: float = float("nan")
    atom_number: float = float("nan")

    def to_json_dict(self):
        return {
            "nef_at_nv_cm_rthz": self.nef_at * V_M_TO_NV_CM,
            "nef_ph_nv_cm_rthz": self.nef_ph * V_M_TO_NV_CM,
            "nef_pd_nv_cm_rthz": self.nef_pd * V_M_TO_NV_CM,
            "nef_ex_nv_cm_rthz": self.nef_ex * V_M_TO_NV_CM,
            "total_nv_cm_rthz": self.total * V_M_TO_NV_CM,
            "r_corr": self.r,
            "t2_s": self.t2,
            "antenna_gain": self.gain,
            "t_p": self.t_p,
            "transmission_slope_s": self.slope,
            "responsivity_v_per_v_m": self.r_h,
            "gamma_r_rad_s": self.gamma_r,
            "blockade_fraction": self.n_b,
            "d_opt": self.d_opt,
            "atom_number": self.atom_number,
        }


def coherence_time(config: ExperimentConfig, gamma_t: float, gamma_r: float) -> float:
    """Ensemble coherence time 1 / (gamma0 + gamma_t + gamma_r + Gamma_r/2)."""
    total = config.gamma0 + gamma_t + gamma_r + 0.5 * config.gamma_r
    if total <= 0.0:
        raise DomainError("all decoherence rates vanish: coherence time is infinite")
    return 1.0 / total


def nef_at(config: ExperimentConfig, atom_number: float, t2: float) -> float:
    """Atom-projection-noise limited field, V/m per sqrt(Hz)."""
    if atom_number <= 0.0 or t2 <= 0.0:
        raise DomainError("nef_at needs positive atom number and coherence time")
    return sc.h / (config.mu_mw * math.sqrt(atom_number * t2))


def transmission_slope(config: ExperimentConfig, shifts: LevelShifts,
                       gamma_deph: float, omega_l: float,
                       d_opt: float | None = None, rel_step: float = 1e-4) -> float:
    """dT_p/dOmega_l by central differences with one Richardson step."""
    if d_opt is None:
        d_opt = derive(config).d_opt
    step = rel_step * (omega_l if omega_l > 0.0 else config.omega_c0)

    def t_at(om):
        t_p, _ = doppler.transmission_chain(config, shifts, gamma_deph,
                                            omega_l_eff=om, d_opt=d_opt)
        return t_p

    def central(h):
        return (t_at(omega_l + h) - t_at(omega_l - h)) / (2.0 * h)

    coarse = central(step)
    fine = central(0.5 * step)
    return (4.0 * fine - coarse) / 3.0


def nef_ph(config: ExperimentConfig, t_p: float, slope: float) -> float:
    """Photon-shot-noise limited field from transmission and its slope.

    NEF_ph = (2 sqrt(2) pi hbar / mu_mw) sqrt(T_p hbar w_p / P0) / |dT_p/dW|

    where the derivative in this textbook form is against the signal
    Rabi frequency expressed in ordinary-frequency units. ``slope`` is
    the internal dT_p/dOmega_l in s per rad/s, so a 2*pi converts it;
    the expression then reduces to the familiar shot-noise form
    (hbar/mu) sqrt(2 T_p hbar w_p / P0) / |slope|.
    """
    if not 0.0 < t_p <= 1.0 + 1e-12:
        raise DomainError(f"transmission {t_p:g} outside (0, 1]")
    if abs(slope) < 1e-18:
        raise InsensitiveOperatingPointError(
            "transmission slope below 1e-18 s: operating point carries no signal")
    omega_opt = TWO_PI * sc.c / config.lambda_p
    photon_term = math.sqrt(t_p * sc.hbar * omega_opt / config.probe_power)
    slope_per_hz = TWO_PI * abs(slope)
    return (2.0 * math.sqrt(2.0) * math.pi * sc.hbar / config.mu_mw) * (
        photon_term / slope_per_hz)


def responsivity_from_slope(config: ExperimentConfig, slope: float) -> float:
    """Heterodyne responsivity R_h = G_det P0 |dT/dOmega_l| mu_mw/hbar."""
    return config.det_gain * config.probe_power * abs(slope) * config.mu_mw / sc.hbar


def nef_pd(nev: float, r_h: float) -> float:
    """Detector-noise limited field: voltage noise over responsivity."""
    if r_h <= 0.0:
        raise DomainError("responsivity must be positive")
    if nev < 0.0:
        raise DomainError("detector noise must be nonnegative")
    return nev / r_h


def antenna_pattern(theta, phi, length_l: float, lambda_mw: float, beta: float):
    """Amplitude pattern of the elongated ensemble as a traveling-wave antenna.

    F = sin(theta) * sinc((pi L / lambda)(sin theta sin phi - cos beta))
    with sinc(y) = sin(y)/y.
    """
    arg = (math.pi * length_l / lambda_mw) * (
        np.sin(theta) * np.sin(phi) - math.cos(beta))
    return np.sin(theta) * np.sinc(arg / math.pi)


def antenna_gain(length_l: float, lambda_mw: float, beta: float = 0.0) -> float:
    """Directive gain 4*pi over the integrated squared pattern.

    The zero-length limit is the short-dipole value 1.5.
    """
    if lambda_mw <= 0.0:
        raise DomainError("wavelength must be positive")
    if length_l < 0.0:
        raise DomainError("antenna length must be nonnegative")

    def integrand(phi, theta):
        f = antenna_pattern(theta, phi, length_l, lambda_mw, beta)
        return f * f * math.sin(theta)

    value, abserr = dblquad(integrand, 0.0, math.pi, 0.0, 2.0 * math.pi,
                            epsabs=1e-12, epsrel=1e-6)
    if value <= 0.0 or abserr > max(1e-9, 1e-5 * value):
        raise QuadratureAccuracyError(
            f"pattern integral unreliable: value {value:g}, abserr {abserr:g}")
    return 4.0 * math.pi / value


def nef_ex(nu_mw: float, temp_amb: float, gain: float) -> float:
    """Field noise collected from the thermal plus vacuum environment."""
    if nu_mw <= 0.0 or gain <= 0.0:
        raise DomainError("nef_ex needs positive frequency and gain")
    if temp_amb < 0.0:
        raise DomainError("temperature must be nonnegative")
    if temp_amb == 0.0:
        occupation = 0.0
    else:
        occupation = 1.0 / math.expm1(sc.h * nu_mw / (sc.k * temp_amb))
    return math.sqrt(8.0 * math.pi * sc.h * nu_mw ** 3 / (
        sc.epsilon_0 * sc.c ** 3 * gain) * (2.0 * occupation + 1.0))


def correlation(series_a, series_b) -> float:
    """Pearson correlation coefficient of two equal-length series."""
    a = np.asarray(series_a, float)
    b = np.asarray(series_b, float)
    if a.shape != b.shape or a.ndim != 1:
        raise DomainError("correlation needs two equal-length 1-d series")
    if a.size < 2:
        raise DomainError("correlation needs at least two samples")
    da = a - a.mean()
    db = b - b.mean()
    va = float(da @ da)
    vb = float(db @ db)
    if va == 0.0 or vb == 0.0:
        raise UndefinedCorrelationError("a series has zero variance")
    return float(da @ db) / math.sqrt(va * vb)


def combine(at: float, ph: float, pd: float, ex: float, r: float) -> float:
    """Total noise-equivalent field with correlated atom/photon terms."""
    if not -1.0 <= r <= 1.0:
        raise DomainError("correlation coefficient must lie in [-1, 1]")
    if min(at, ph, pd, ex) < 0.0:
        raise DomainError("noise components must be nonnegative")
    return math.sqrt(at * at + 2.0 * r * at * ph + ph * ph + pd * pd + ex * ex)


def thermal_dipole_limit(temp_eq: float, lambda_mw: float) -> float:
    """Equilibrium bound for a lossless resonant dipole of aperture 0.41 lambda^2/pi."""
    if temp_eq < 0.0 or lambda_mw <= 0.0:
        raise DomainError("need nonnegative temperature and positive wavelength")
    aperture = 0.41 * lambda_mw ** 2 / math.pi
    return math.sqrt(2.0 * sc.k * temp_eq / (sc.epsilon_0 * sc.c * aperture))


def evaluate_budget(config: ExperimentConfig, r: float | None = None,
                    omega_l: float | None = None, gain: float | None = None,
                    d_opt: float | None = None,
                    response_gamma_r: bool = False) -> NoiseBudget:
    """Full budget at one operating point.

    ``r`` defaults to the configured correlation coefficient; sweeps
    recompute it from their own series. ``gain`` may be passed in to
    avoid repeating the pattern integral across sweep points.

    The interaction dephasing gamma_r always enters the coherence time
    behind ``nef_at``. The optical transmission response is evaluated
    with single-atom dephasing only, which is what the measured
    heterodyne responsivity and the resolved microwave doublet support;
    pass ``response_gamma_r=True`` to broaden the response as well. The
    optical depth of the response defaults to the measured window-start
    calibration ``od_start``; the density-derived value carries beam
    geometry uncertainty and is available from :func:`derive`.
    """
    if r is None:
        r = config.r_corr
    if omega_l is None:
        omega_l = config.omega_l
    if d_opt is None:
        d_opt = config.od_start
    derived = derive(config)
    summary = interactions.interaction_summary(config, derived.gamma_t)
    gamma_resp = config.gamma0 + derived.gamma_t + (
        summary.gamma_r if response_gamma_r else 0.0)
    t2 = coherence_time(config, derived.gamma_t, summary.gamma_r)
    at = nef_at(config, derived.atom_number, t2)
    t_p, _ = doppler.transmission_chain(config, summary.shifts, gamma_resp,
                                        omega_l_eff=omega_l, d_opt=d_opt)
    slope = transmission_slope(config, summary.shifts, gamma_resp, omega_l,
                               d_opt=d_opt)
    ph = nef_ph(config, t_p, slope)
    r_h = responsivity_from_slope(config, slope)
    pd = nef_pd(config.nev, r_h)
    if gain is None:
        gain = antenna_gain(config.length_l, config.lambda_mw, config.beta)
    ex = nef_ex(config.nu_mw, config.temp_amb, gain)
    total = combine(at, ph, pd, ex, r)
    return NoiseBudget(nef_at=at, nef_ph=ph, nef_pd=pd, nef_ex=ex, r=r,
                       total=total, t2=t2, gain=gain, t_p=t_p, slope=slope,
                       r_h=r_h, gamma_r=summary.gamma_r,
                       n_b=summary.geometry.n_b, d_opt=d_opt,
                       atom_number=derived.atom_number)
