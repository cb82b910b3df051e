"""Maxwell-Boltzmann averaging of the probe coherence and transmission.

The thermal average of the steady-state probe coherence is

    rho21_bar = integral dv  exp(-v^2/u^2) / (u sqrt(pi)) * rho21(v)

truncated at +-5u and evaluated with composite 16-node Gauss-Legendre
panels. The panel count is doubled until two successive refinements
agree to 1e-9. The generator is affine in v, so each refinement is a
single batched linear solve over all velocity nodes.

Probe power transmission through the medium follows Beer-Lambert with
the averaged coherence:

    T_p = exp(-(d_opt * gamma_e / omega_p) * Im rho21_bar)
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import bloch
from .errors import DomainError, QuadratureAccuracyError, UnphysicalGainError
from .quantities import ExperimentConfig, derive

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_MAX_PANELS = 1024


@dataclass(frozen=True)
class VelocityGrid:
    """Quadrature nodes and Gaussian-weighted weights for one refinement."""

    nodes: np.ndarray
    weights: np.ndarray
    truncation: float

    def weight_sum(self) -> float:
        return float(math.fsum(self.weights))


def velocity_grid(u: float, truncation: float = 5.0, panels: int = 4) -> VelocityGrid:
    """Composite Gauss-Legendre grid over [-truncation*u, truncation*u].

    Weights carry the normalized Maxwell-Boltzmann factor, so they sum
    to erf(truncation) rather than one.
    """
    if u <= 0.0:
        raise DomainError("velocity grid needs u > 0; use the v=0 path instead")
    if truncation < 5.0:
        raise DomainError("truncation below 5 thermal widths loses weight")
    if panels < 1:
        raise DomainError("need at least one panel")
    edges = np.linspace(-truncation * u, truncation * u, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    weights = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    weights = weights * np.exp(-(nodes / u) ** 2) / (u * math.sqrt(math.pi))
    return VelocityGrid(nodes=nodes, weights=weights, truncation=truncation)


def _weighted_sum(values: np.ndarray, weights: np.ndarray) -> complex:
    # fsum keeps the reduction deterministic regardless of panel layout
    re = math.fsum((weights * values.real).tolist())
    im = math.fsum((weights * values.imag).tolist())
    return complex(re, im)


def _coherences_at(config: ExperimentConfig, shifts: bloch.LevelShifts,
                   gamma_deph: float, nodes: np.ndarray) -> np.ndarray:
    """Steady-state rho21 at every velocity node via one batched solve."""
    h0 = bloch.build_hamiltonian(config, shifts, v=0.0)
    hv = bloch.build_hamiltonian(config, shifts, v=1.0) - h0
    l0 = bloch.hamiltonian_superop(h0) + bloch.dissipator_superop(config, gamma_deph)
    lv = bloch.hamiltonian_superop(hv)
    stacked = l0[None, :, :] + nodes[:, None, None] * lv[None, :, :]
    vecs = bloch._solve_constrained(stacked)
    return vecs[:, bloch.IDX_RHO21]


def averaged_coherence(config: ExperimentConfig, shifts: bloch.LevelShifts = bloch.LevelShifts(),
                       gamma_deph: float = 0.0, omega_l_eff: float | None = None,
                       truncation: float = 5.0) -> complex:
    """Thermally averaged steady-state probe coherence rho21.

    ``gamma_deph`` is the total Rydberg dephasing rate entering the
    Lindblad term. ``omega_l_eff`` overrides the microwave Rabi
    frequency (the signal term is dropped when it is given, which is
    what the quasi-static trace model needs).

    At zero atom temperature this is exactly the v = 0 steady state.
    """
    if omega_l_eff is not None:
        config = dataclasses.replace(config, omega_l=omega_l_eff, omega_s=0.0)
    u = derive(config).u
    if u == 0.0:
        lio = bloch.build_liouvillian(bloch.build_hamiltonian(config, shifts),
                                      config, gamma_deph)
        return bloch.steady_state(lio).coherence(1, 0)
    panels = 4
    previous = None
    disagreement = math.inf
    while panels <= _MAX_PANELS:
        grid = velocity_grid(u, truncation, panels)
        rho21 = _coherences_at(config, shifts, gamma_deph, grid.nodes)
        value = _weighted_sum(rho21, grid.weights)
        if previous is not None:
            disagreement = abs(value - previous)
            if disagreement <= 1e-9:
                return value
        previous = value
        panels *= 2
    if disagreement <= 1e-8:  # accept a slightly looser bound at the cap
        return value
    raise QuadratureAccuracyError(
        f"velocity average stuck at {disagreement:.2e} after {_MAX_PANELS} panels")


def transmission(d_opt: float, gamma_e: float, omega_p: float,
                 rho21_bar: complex) -> float:
    """Probe power transmission from the averaged coherence."""
    if omega_p <= 0.0:
        raise DomainError("transmission needs a positive probe Rabi frequency")
    if d_opt < 0.0:
        raise DomainError("optical depth must be nonnegative")
    im = rho21_bar.imag
    if im < -1e-9:
        raise UnphysicalGainError(
            f"Im rho21 = {im:.3e} < 0 implies probe gain; check the model inputs")
    return math.exp(-(d_opt * gamma_e / omega_p) * im)


def transmission_chain(config: ExperimentConfig, shifts: bloch.LevelShifts = bloch.LevelShifts(),
                       gamma_deph: float = 0.0, omega_l_eff: float | None = None,
                       d_opt: float | None = None) -> tuple[float, complex]:
    """Convenience: averaged coherence and the resulting transmission."""
    if d_opt is None:
        d_opt = derive(config).d_opt
    rho = averaged_coherence(config, shifts, gamma_deph, omega_l_eff)
    t_p = transmission(d_opt, config.gamma_e, config.omega_p0, rho)
    return t_p, rho
