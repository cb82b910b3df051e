"""Experiment configuration and derived single-atom quantities.

Everything internal works in SI units with angular frequencies in rad/s.
Config files may give any angular-frequency key in ordinary Hz by
appending ``_hz`` to the key name; the loader multiplies by 2*pi.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.constants as sc

from .errors import DomainError, SchemaError, ValidationError

TWO_PI = 2.0 * math.pi

# Keys that hold angular frequencies and therefore accept a *_hz variant.
ANGULAR_KEYS = (
    "omega_p0",
    "omega_c0",
    "omega_l",
    "omega_s",
    "delta_p",
    "delta_s",
    "gamma_e",
    "gamma_r",
    "gamma_rp",
    "gamma0",
    "gamma_eit",
)


@dataclass(frozen=True)
class AngularTable:
    """Tabulated angular dependence of an interaction coefficient.

    ``theta`` in rad must increase from 0 to pi; ``value`` is in
    ordinary-frequency units (Hz m^6 for van der Waals tables).
    """

    theta: tuple
    value: tuple

    def arrays(self):
        return np.asarray(self.theta, float), np.asarray(self.value, float)

    def to_json_dict(self):
        gu = 1e27  # Hz m^6 -> GHz um^6
        return {
            "theta_rad": list(self.theta),
            "value_ghz_um6": [v * gu for v in self.value],
        }

    @staticmethod
    def from_json_dict(d):
        try:
            theta = tuple(float(x) for x in d["theta_rad"])
            value = tuple(float(x) * 1e-27 for x in d["value_ghz_um6"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad angular table: {exc}") from exc
        return AngularTable(theta, value)


@dataclass(frozen=True)
class PowerAtomTable:
    """Calibration of participating atom number against probe power."""

    power_w: tuple
    atoms: tuple

    def arrays(self):
        return np.asarray(self.power_w, float), np.asarray(self.atoms, float)

    def to_json_dict(self):
        return {"power_w": list(self.power_w), "atoms": list(self.atoms)}

    @staticmethod
    def from_json_dict(d):
        try:
            p = tuple(float(x) for x in d["power_w"])
            n = tuple(float(x) for x in d["atoms"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad atom-number table: {exc}") from exc
        return PowerAtomTable(p, n)


def _default_c6_table(points: int = 33) -> AngularTable:
    # Smooth anisotropy between the measured extremes 0.14 and 0.38 GHz um^6,
    # maximal along the quantization axis.
    theta = np.linspace(0.0, math.pi, points)
    ghz_um6 = 0.26 + 0.12 * np.cos(2.0 * theta)
    return AngularTable(tuple(theta), tuple(ghz_um6 * 1e-27))


# Atom-number calibration against probe power. Weak probes leave the trap
# population nearly intact; above a knee power the probe light ejects atoms
# through radiation pressure and depumping, and the participating number
# collapses. The fitted loss model N(P) = N_ref exp[(P_ref/P_k)^m - (P/P_k)^m]
# is anchored so 5.2e5 atoms participate at the 7.6 uW reference power.
ATOMS_AT_REFERENCE = 5.2e5
REFERENCE_POWER = 7.6e-6
ATOM_LOSS_KNEE = 5.6e-6     # onset of probe-induced trap loss
ATOM_LOSS_ORDER = 3.0       # sharpness of the loss knee


def _default_power_table(points: int = 60) -> PowerAtomTable:
    power = np.linspace(0.2e-6, 12.0e-6, points)
    x_ref = (REFERENCE_POWER / ATOM_LOSS_KNEE) ** ATOM_LOSS_ORDER
    atoms = ATOMS_AT_REFERENCE * np.exp(
        x_ref - (power / ATOM_LOSS_KNEE) ** ATOM_LOSS_ORDER)
    return PowerAtomTable(tuple(power), tuple(atoms))


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete operating point of the receiver model.

    Angular frequencies are rad/s, lengths m, temperatures K, dipole
    moments C m, powers W. ``c3`` and the C6 tables are in ordinary
    frequency units (Hz m^3, Hz m^6).
    """

    # Optical and microwave drive
    omega_p0: float = TWO_PI * 4.7e6     # probe Rabi at probe_power
    omega_c0: float = TWO_PI * 6.1e6     # coupling Rabi
    omega_l: float = TWO_PI * 2.0e6      # local microwave Rabi
    omega_s: float = 0.0                 # signal microwave Rabi
    delta_p: float = 0.0                 # probe detuning
    delta_s: float = TWO_PI * 10e3       # signal-local offset frequency
    lambda_p: float = 780.241e-9
    lambda_c: float = 481.0e-9
    lambda_mw: float = sc.c / 36.9e9
    nu_mw: float = 36.9e9

    # Decay and dephasing
    gamma_e: float = TWO_PI * 6.0666e6   # intermediate state decay
    gamma_r: float = TWO_PI * 1.0e3      # upper Rydberg state decay
    gamma_rp: float = TWO_PI * 1.0e3     # partner Rydberg state decay
    gamma0: float = TWO_PI * 1.0e5       # residual single-atom dephasing

    # Dipole moments
    mu_mw: float = 1.0673e-26            # microwave transition dipole
    mu_12: float = 2.534e-29             # probe transition dipole

    # Ensemble
    atom_mass: float = 1.44316060e-25    # 87 amu
    temp_a: float = 200e-6               # atom temperature
    temp_amb: float = 293.0              # ambient temperature (antenna)
    temp_eq: float = 293.0               # equilibrium temperature (limit)
    n_at: float = 5.68e13                # atomic density, m^-3
    length_l: float = 0.02               # medium length along the probe
    waist_p: float = 500e-6              # probe 1/e^2 radius
    waist_c: float = 400e-6              # coupling 1/e^2 radius
    beta: float = 0.0                    # microwave arrival angle parameter

    # Rydberg interactions
    c6_table: AngularTable = dataclasses.field(default_factory=_default_c6_table)
    c6p_table: AngularTable = dataclasses.field(default_factory=_default_c6_table)
    c3: float = 1.95e-8                  # exchange coefficient, Hz m^3
    gamma_eit: float = TWO_PI * 3.0e6    # EIT linewidth for blockade radii
    gamma_eit_mode: str = "fixed"        # or "self_consistent"

    # Detection chain calibration
    probe_power: float = 7.6e-6
    nev: float = 6.0e-10                 # detector voltage noise, V/rtHz
    det_gain: float = 877.0              # photovoltage per optical watt
    od_start: float = 0.46               # optical depth at window start
    od_end: float = 0.22                 # optical depth at window end
    window_ms: float = 1.0
    n_vs_power: PowerAtomTable = dataclasses.field(default_factory=_default_power_table)
    r_corr: float = -0.78                # default atom/photon correlation

    def to_json_dict(self):
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (AngularTable, PowerAtomTable)):
                d[f.name] = v.to_json_dict()
            else:
                d[f.name] = v
        return d


_FIELD_NAMES = {f.name for f in dataclasses.fields(ExperimentConfig)}


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def load_config(path) -> ExperimentConfig:
    """Read a JSON config, apply unit conversions, validate.

    Unknown keys raise :class:`SchemaError`; out-of-range values raise
    :class:`ValidationError`. Missing keys keep their defaults.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaError("config root must be a JSON object")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    kwargs = {}
    for key, val in raw.items():
        base = key[:-3] if key.endswith("_hz") else key
        if key.endswith("_hz") and base in ANGULAR_KEYS:
            if base in kwargs:
                raise SchemaError(f"config gives both {base} and {key}")
            kwargs[base] = float(val) * TWO_PI
            continue
        if key not in _FIELD_NAMES:
            raise SchemaError(f"unknown config key: {key}")
        if key in ("c6_table", "c6p_table"):
            kwargs[key] = AngularTable.from_json_dict(val)
        elif key == "n_vs_power":
            kwargs[key] = PowerAtomTable.from_json_dict(val)
        elif key == "gamma_eit_mode":
            kwargs[key] = str(val)
        else:
            if base in kwargs:
                raise SchemaError(f"config gives both {key} and {key}_hz")
            kwargs[key] = float(val)
    config = dataclasses.replace(default_config(), **kwargs)
    validate(config)
    return config


def validate(config: ExperimentConfig) -> None:
    """Range-check a config; raises :class:`ValidationError`."""

    def positive(name):
        if getattr(config, name) <= 0.0:
            raise ValidationError(f"{name} must be positive")

    def nonnegative(name):
        if getattr(config, name) < 0.0:
            raise ValidationError(f"{name} must be nonnegative")

    for name in ("lambda_p", "lambda_c", "lambda_mw", "nu_mw", "atom_mass",
                 "length_l", "waist_p", "waist_c", "probe_power", "window_ms",
                 "mu_mw", "mu_12", "gamma_e"):
        positive(name)
    for name in ("gamma_r", "gamma_rp", "gamma0", "temp_a", "temp_amb",
                 "temp_eq", "n_at", "nev", "det_gain", "od_start", "od_end",
                 "omega_l", "omega_s", "c3", "gamma_eit"):
        nonnegative(name)
    if not abs(config.r_corr) <= 1.0:
        raise ValidationError("r_corr must lie in [-1, 1]")
    if config.gamma_eit_mode not in ("fixed", "self_consistent"):
        raise ValidationError("gamma_eit_mode must be fixed or self_consistent")
    for name in ("c6_table", "c6p_table"):
        theta, _ = getattr(config, name).arrays()
        if theta.size < 2:
            raise ValidationError(f"{name} needs at least two angles")
        if np.any(np.diff(theta) <= 0.0):
            raise ValidationError(f"{name} angles must increase")
        if abs(theta[0]) > 1e-9 or abs(theta[-1] - math.pi) > 1e-9:
            raise ValidationError(f"{name} must cover [0, pi]")
    p, n = config.n_vs_power.arrays()
    if p.size < 2 or np.any(np.diff(p) <= 0.0):
        raise ValidationError("n_vs_power powers must increase")
    if np.any(n <= 0.0):
        raise ValidationError("n_vs_power atom numbers must be positive")


@dataclass(frozen=True)
class Derived:
    """Quantities computed once from a config.

    Wave numbers rad/m, velocities m/s, cross section m^2, rates rad/s.
    """

    k_p: float
    k_c: float
    k_l: float
    omega_opt: float        # probe optical angular frequency
    u: float                # most probable speed
    sigma12: float          # resonant absorption cross section
    d_opt: float            # optical depth n_at * sigma12 * L
    atom_number: float      # atoms inside the smaller beam
    gamma_t: float          # transit dephasing rate
    gamma_d: float          # Doppler FWHM of the probe line


def derive(config: ExperimentConfig) -> Derived:
    """Evaluate the standard derived quantities for a config."""
    if min(config.lambda_p, config.lambda_c, config.lambda_mw) <= 0.0:
        raise DomainError("wavelengths must be positive")
    if config.atom_mass <= 0.0:
        raise DomainError("atom mass must be positive")
    k_p = TWO_PI / config.lambda_p
    k_c = TWO_PI / config.lambda_c
    k_l = TWO_PI / config.lambda_mw
    u = math.sqrt(2.0 * sc.k * config.temp_a / config.atom_mass)
    sigma12 = 2.0 * k_p * config.mu_12 ** 2 / (sc.hbar * sc.epsilon_0 * config.gamma_e)
    d_opt = config.n_at * sigma12 * config.length_l
    w = min(config.waist_p, config.waist_c)
    atom_number = config.n_at * math.pi * w ** 2 * config.length_l
    gamma_t = (1.0 / (w * math.sqrt(2.0 * math.log(2.0)))) * math.sqrt(
        8.0 * sc.k * config.temp_a / (math.pi * config.atom_mass))
    gamma_d = 2.0 * math.sqrt(math.log(2.0)) * k_p * u
    return Derived(
        k_p=k_p, k_c=k_c, k_l=k_l,
        omega_opt=TWO_PI * sc.c / config.lambda_p,
        u=u, sigma12=sigma12, d_opt=d_opt, atom_number=atom_number,
        gamma_t=gamma_t, gamma_d=gamma_d,
    )


def probe_rabi_at(config: ExperimentConfig, power: float) -> float:
    """Probe Rabi frequency at a different probe power.

    Scales the calibrated ``omega_p0`` by sqrt(power / probe_power);
    the square-root law holds because the Rabi frequency is linear in
    the field amplitude.
    """
    if power < 0.0:
        raise DomainError("probe power must be nonnegative")
    return config.omega_p0 * math.sqrt(power / config.probe_power)


def atoms_at_power(config: ExperimentConfig, power: float) -> float:
    """Participating atom number from the power calibration table."""
    p, n = config.n_vs_power.arrays()
    if power < p[0] or power > p[-1]:
        from .errors import ExtrapolationError
        raise ExtrapolationError(
            f"power {power:g} W outside the calibrated range "
            f"[{p[0]:g}, {p[-1]:g}] W")
    return float(np.interp(power, p, n))


def field_to_rabi(config: ExperimentConfig, field: float) -> float:
    """Microwave Rabi frequency (rad/s) for a field amplitude in V/m."""
    return config.mu_mw * field / sc.hbar


def rabi_to_field(config: ExperimentConfig, rabi: float) -> float:
    """Field amplitude (V/m) for a microwave Rabi frequency in rad/s."""
    return sc.hbar * rabi / config.mu_mw


def temp_from_doppler_width(config: ExperimentConfig, gamma_d: float) -> float:
    """Atom temperature that gives a requested Doppler FWHM."""
    if gamma_d < 0.0:
        raise DomainError("Doppler width must be nonnegative")
    k_p = TWO_PI / config.lambda_p
    u = gamma_d / (2.0 * math.sqrt(math.log(2.0)) * k_p)
    return config.atom_mass * u ** 2 / (2.0 * sc.k)


def config_hash(config: ExperimentConfig) -> str:
    """Short deterministic digest of a config for output provenance."""
    blob = json.dumps(config.to_json_dict(), sort_keys=True,
                      separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
