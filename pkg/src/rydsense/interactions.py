"""Mean-field Rydberg interaction shifts and dephasing.

Doubly excited pairs sample van der Waals (C6) and resonant exchange
(C3) potentials weighted by steady-state double-excitation fractions.
Atoms closer than the blockade radius are excluded; the remainder
produce a mean level shift and, through the spread of the shift, an
extra dephasing rate for both Rydberg levels.

Interaction coefficients are tabulated in ordinary-frequency units
(Hz m^6, Hz m^3) and converted to angular units inside the formulas.
Blockade radii use the ratio 2*C6_avg/gamma_eit in which the 2*pi
factor cancels.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .bloch import LevelShifts
from .errors import DomainError, NumericalError, SchemaError
from .quantities import TWO_PI, AngularTable, ExperimentConfig


@dataclass(frozen=True)
class ExcitationFractions:
    """Steady-state double-excitation fractions of the driven ladder."""

    sigma_rr: float    # both atoms in |3>
    sigma_rprp: float  # both atoms in |4>
    sigma_rrp: float   # magnitude of the |3>|4> cross term


@dataclass(frozen=True)
class BlockadeGeometry:
    """Blockade radii and the angular moments they derive from.

    ``c6_avg`` carries the angular integral of C6(theta) sin(theta)
    over [0, pi] (Hz m^6), ``c6_sq_int`` the same integral of C6^2.
    """

    r_b: float
    r_b_prime: float
    n_b: float
    c6_avg: float
    c6p_avg: float
    c6_sq_int: float
    c6p_sq_int: float


@dataclass(frozen=True)
class InteractionSummary:
    """Everything downstream consumers need about interactions."""

    fractions: ExcitationFractions
    geometry: BlockadeGeometry
    shifts: LevelShifts
    theta_rr: float     # shift variance from |3>|3> pairs, rad^2/s^2
    theta_rprp: float   # from |4>|4> pairs
    theta_rrp: float    # from exchange |3>|4> pairs
    gamma_r: float      # total interaction dephasing rate, rad/s
    gamma_eit_used: float
    iterations: int = 1


def excitation_fractions(config: ExperimentConfig) -> ExcitationFractions:
    """Perturbative double-excitation fractions at the operating point.

    All three share the denominator

        D = (G*Gr^2 + Ol^2*G + Oc^2*Grp)^2 + (Op*Oc*Grp)^2 + (Ol*Op*Oc)^2

    which is homogeneous with the numerators, so any consistent
    frequency unit may be used.
    """
    g, gr, grp = config.gamma_e, config.gamma_r, config.gamma_rp
    op, oc, ol = config.omega_p0, config.omega_c0, config.omega_l
    a = g * gr ** 2 + ol ** 2 * g + oc ** 2 * grp
    den = a ** 2 + (op * oc * grp) ** 2 + (ol * op * oc) ** 2
    if den == 0.0:
        raise DomainError("excitation fractions undefined: all rates and drives vanish")
    return ExcitationFractions(
        sigma_rr=(op * oc * grp) ** 2 / den,
        sigma_rprp=(ol * op * oc) ** 2 / den,
        sigma_rrp=gr * op ** 2 * oc ** 2 * ol / den,
    )


def _angular_moments(table: AngularTable) -> tuple[float, float]:
    theta, value = table.arrays()
    s = np.sin(theta)
    return (float(trapezoid(value * s, theta)),
            float(trapezoid(value ** 2 * s, theta)))


def blockade_geometry(config: ExperimentConfig,
                      gamma_eit: float | None = None) -> BlockadeGeometry:
    """Blockade radii for both Rydberg levels and the blockade fraction."""
    if gamma_eit is None:
        gamma_eit = config.gamma_eit
    if gamma_eit <= 0.0:
        raise DomainError("blockade radius needs a positive EIT linewidth")
    c6_avg, c6_sq = _angular_moments(config.c6_table)
    c6p_avg, c6p_sq = _angular_moments(config.c6p_table)
    if c6_avg <= 0.0 or c6p_avg <= 0.0:
        raise DomainError("angular average of C6 must be positive")
    gamma_eit_hz = gamma_eit / TWO_PI
    r_b = (2.0 * c6_avg / gamma_eit_hz) ** (1.0 / 6.0)
    r_b_prime = (2.0 * c6p_avg / gamma_eit_hz) ** (1.0 / 6.0)
    n_b = config.n_at * (4.0 * math.pi / 3.0) * r_b ** 3
    return BlockadeGeometry(r_b=r_b, r_b_prime=r_b_prime, n_b=n_b,
                            c6_avg=c6_avg, c6p_avg=c6p_avg,
                            c6_sq_int=c6_sq, c6p_sq_int=c6p_sq)


def level_shifts(config: ExperimentConfig, fractions: ExcitationFractions,
                 geometry: BlockadeGeometry) -> LevelShifts:
    """Mean collective shifts of the two Rydberg levels, rad/s.

    The exchange term integrates a 1/R^3 potential between the blockade
    radius and the coupling beam radius, hence the logarithm; the beam
    must be wider than the blockade sphere.
    """
    w = config.waist_c
    if w <= geometry.r_b:
        raise DomainError(
            f"coupling waist {w:g} m must exceed the blockade radius "
            f"{geometry.r_b:g} m")
    c6_rad = TWO_PI * geometry.c6_avg
    c6p_rad = TWO_PI * geometry.c6p_avg
    c3_rad = TWO_PI * config.c3
    v_vdw = TWO_PI * c6_rad * fractions.sigma_rr * config.n_at / (3.0 * geometry.r_b ** 3)
    v_vdw_p = TWO_PI * c6p_rad * fractions.sigma_rprp * config.n_at / (
        3.0 * geometry.r_b_prime ** 3)
    v_dd = 4.0 * math.pi * c3_rad * fractions.sigma_rrp * config.n_at * math.log(
        w / geometry.r_b)
    return LevelShifts(v_vdw=v_vdw, v_vdw_prime=v_vdw_p, v_dd=v_dd)


def dephasing_terms(config: ExperimentConfig, fractions: ExcitationFractions,
                    geometry: BlockadeGeometry) -> tuple[float, float, float]:
    """Shift variances (theta_rr, theta_rprp, theta_rrp), rad^2/s^2."""
    c6_sq_rad = TWO_PI ** 2 * geometry.c6_sq_int
    c6p_sq_rad = TWO_PI ** 2 * geometry.c6p_sq_int
    c3_rad = TWO_PI * config.c3
    theta_rr = TWO_PI * fractions.sigma_rr * config.n_at * c6_sq_rad / (
        9.0 * geometry.r_b ** 9)
    theta_rprp = TWO_PI * fractions.sigma_rprp * config.n_at * c6p_sq_rad / (
        9.0 * geometry.r_b_prime ** 9)
    theta_rrp = 4.0 * math.pi * c3_rad ** 2 * fractions.sigma_rrp * config.n_at / (
        3.0 * geometry.r_b ** 3)
    return theta_rr, theta_rprp, theta_rrp


def _summary_at(config: ExperimentConfig, gamma_eit: float) -> InteractionSummary:
    fractions = excitation_fractions(config)
    geometry = blockade_geometry(config, gamma_eit)
    shifts = level_shifts(config, fractions, geometry)
    t_rr, t_rprp, t_rrp = dephasing_terms(config, fractions, geometry)
    gamma_r = math.sqrt(t_rr) + math.sqrt(t_rprp) + 2.0 * math.sqrt(t_rrp)
    return InteractionSummary(fractions=fractions, geometry=geometry,
                              shifts=shifts, theta_rr=t_rr, theta_rprp=t_rprp,
                              theta_rrp=t_rrp, gamma_r=gamma_r,
                              gamma_eit_used=gamma_eit)


def interaction_summary(config: ExperimentConfig, gamma_t: float = 0.0,
                        rtol: float = 1e-6, max_iter: int = 50) -> InteractionSummary:
    """Interaction shifts and dephasing at the configured operating point.

    In ``self_consistent`` mode the EIT linewidth defining the blockade
    radius is iterated as gamma0 + gamma_t + gamma_r until the
    dephasing rate settles; the dependence is sublinear, so the
    iteration contracts.
    """
    if config.gamma_eit_mode == "fixed":
        return _summary_at(config, config.gamma_eit)
    gamma_eit = config.gamma_eit
    summary = _summary_at(config, gamma_eit)
    for iteration in range(2, max_iter + 1):
        gamma_eit = config.gamma0 + gamma_t + summary.gamma_r
        updated = _summary_at(config, gamma_eit)
        if abs(updated.gamma_r - summary.gamma_r) <= rtol * max(updated.gamma_r, 1.0):
            return dataclasses.replace(updated, iterations=iteration)
        summary = updated
    raise NumericalError(
        f"self-consistent EIT width not settled after {max_iter} iterations")


def load_c6_csv(path) -> AngularTable:
    """Read an angular C6 table from CSV (theta_rad, value_ghz_um6)."""
    rows = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise SchemaError(f"{path}:{line_no}: expected two columns")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                if line_no == 1:
                    continue  # header row
                raise SchemaError(f"{path}:{line_no}: non-numeric entry") from None
    if len(rows) < 2:
        raise SchemaError(f"{path}: need at least two angle rows")
    theta = tuple(r[0] for r in rows)
    value = tuple(r[1] * 1e-27 for r in rows)  # GHz um^6 -> Hz m^6
    return AngularTable(theta, value)
