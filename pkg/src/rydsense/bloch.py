"""Four-level ladder optical Bloch equations.

Level ordering: ground |1>, intermediate |2>, Rydberg |3>, partner
Rydberg |4>. The probe couples 1-2, the coupling laser 2-3, and the
microwave pair (local plus signal) couples 3-4. The rotating-frame
Hamiltonian is

    H/hbar = diag(0, -D2, -D3, -D4)
             - (Omega_p/2)|2><1| - (Omega_c/2)|3><2|
             - ((Omega_l + Omega_s e^{-i phi})/2)|4><3| + h.c.

with cumulative detunings

    D2 = delta_p + k_p v
    D3 = delta_p + V_vdw + V_dd + (k_p - k_c) v
    D4 = delta_p + V_dd + V_vdw' + (k_p - k_c + k_l) v

for an atom moving at velocity v along the probe. Collective level
shifts enter through :class:`LevelShifts`. Dissipation is Lindblad
decay 2->1 at gamma_e, 3->2 at gamma_r, 4->1 at gamma_rp, plus pure
dephasing of both Rydberg levels at a common rate.

Density matrices are column stacked, vec(rho)[4j + i] = rho[i, j].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSteadyStateError, DomainError, StepSizeError
from .quantities import TWO_PI, ExperimentConfig

N_LEVELS = 4
_TRACE_IDX = np.arange(N_LEVELS) * (N_LEVELS + 1)
# vec index of rho[1, 0], the probe coherence
IDX_RHO21 = 1


@dataclass(frozen=True)
class LevelShifts:
    """Mean-field shifts of the two Rydberg levels, rad/s."""

    v_vdw: float = 0.0       # van der Waals shift of |3>
    v_vdw_prime: float = 0.0  # van der Waals shift of |4>
    v_dd: float = 0.0        # resonant exchange shift of both


@dataclass(frozen=True)
class DensityMatrix4:
    """Validated 4x4 density matrix plus the symmetrization defect."""

    rho: np.ndarray
    herm_defect: float = 0.0

    def population(self, i: int) -> float:
        return float(self.rho[i, i].real)

    def coherence(self, i: int, j: int) -> complex:
        return complex(self.rho[i, j])


@dataclass(frozen=True)
class Liouvillian:
    """Master-equation generator acting on column-stacked rho."""

    matrix: np.ndarray

    def trace_residual(self) -> float:
        """How badly the generator fails to preserve the trace.

        Left-applies the trace functional and normalizes by the largest
        generator entry. Exactly trace preserving generators give 0 up
        to rounding.
        """
        scale = np.abs(self.matrix).max()
        if scale == 0.0:
            return 0.0
        tr_row = self.matrix[_TRACE_IDX, :].sum(axis=0)
        return float(np.abs(tr_row).max() / scale)


def detunings(config: ExperimentConfig, shifts: LevelShifts, v: float = 0.0):
    """Cumulative detunings (D2, D3, D4) including Doppler terms."""
    k_p = TWO_PI / config.lambda_p
    k_c = TWO_PI / config.lambda_c
    k_l = TWO_PI / config.lambda_mw
    d2 = config.delta_p + k_p * v
    d3 = config.delta_p + shifts.v_vdw + shifts.v_dd + (k_p - k_c) * v
    d4 = config.delta_p + shifts.v_dd + shifts.v_vdw_prime + (k_p - k_c + k_l) * v
    return d2, d3, d4


def build_hamiltonian(config: ExperimentConfig, shifts: LevelShifts = LevelShifts(),
                      v: float = 0.0, phase: float = 0.0) -> np.ndarray:
    """Rotating-frame Hamiltonian over hbar, rad/s, for one velocity."""
    d2, d3, d4 = detunings(config, shifts, v)
    omega_mw = config.omega_l + config.omega_s * np.exp(-1j * phase)
    h = np.zeros((N_LEVELS, N_LEVELS), complex)
    h[1, 1] = -d2
    h[2, 2] = -d3
    h[3, 3] = -d4
    h[1, 0] = -0.5 * config.omega_p0
    h[2, 1] = -0.5 * config.omega_c0
    h[3, 2] = -0.5 * omega_mw
    h[0, 1] = np.conj(h[1, 0])
    h[1, 2] = np.conj(h[2, 1])
    h[2, 3] = np.conj(h[3, 2])
    return h


def hamiltonian_superop(h: np.ndarray) -> np.ndarray:
    """Coherent part -i[H, .] as a 16x16 matrix on vec(rho)."""
    eye = np.eye(N_LEVELS)
    return -1j * (np.kron(eye, h) - np.kron(h.T, eye))


def _dissipator(c: np.ndarray) -> np.ndarray:
    cdc = c.conj().T @ c
    eye = np.eye(N_LEVELS)
    return (np.kron(c.conj(), c)
            - 0.5 * np.kron(eye, cdc)
            - 0.5 * np.kron(cdc.T, eye))


def dissipator_superop(config: ExperimentConfig, gamma_deph: float) -> np.ndarray:
    """Sum of Lindblad dissipators: decays plus Rydberg dephasing.

    ``gamma_deph`` is the total pure dephasing rate applied to each
    Rydberg level (population-preserving jump sqrt(2 gamma)|k><k|).
    """
    if min(config.gamma_e, config.gamma_r, config.gamma_rp) < 0.0 or gamma_deph < 0.0:
        raise DomainError("decay and dephasing rates must be nonnegative")
    d = np.zeros((N_LEVELS ** 2, N_LEVELS ** 2), complex)
    jumps = []
    c = np.zeros((N_LEVELS, N_LEVELS))
    c[0, 1] = math.sqrt(config.gamma_e)
    jumps.append(c)
    c = np.zeros((N_LEVELS, N_LEVELS))
    c[1, 2] = math.sqrt(config.gamma_r)
    jumps.append(c)
    c = np.zeros((N_LEVELS, N_LEVELS))
    c[0, 3] = math.sqrt(config.gamma_rp)
    jumps.append(c)
    for k in (2, 3):
        c = np.zeros((N_LEVELS, N_LEVELS))
        c[k, k] = math.sqrt(2.0 * gamma_deph)
        jumps.append(c)
    for c in jumps:
        d += _dissipator(c)
    return d


def build_liouvillian(h: np.ndarray, config: ExperimentConfig,
                      gamma_deph: float) -> Liouvillian:
    """Full generator for a given Hamiltonian and dephasing rate."""
    return Liouvillian(hamiltonian_superop(h) + dissipator_superop(config, gamma_deph))


def _solve_constrained(matrices: np.ndarray) -> np.ndarray:
    """Null vectors of stacked generators with unit trace imposed.

    ``matrices`` has shape (..., 16, 16). The first row of each system
    is replaced by the trace functional; the right-hand side selects
    trace one. Returns vec(rho) with shape (..., 16).
    """
    a = np.array(matrices, complex, copy=True)
    a[..., 0, :] = 0.0
    a[..., 0, _TRACE_IDX] = 1.0
    b = np.zeros(a.shape[:-1] + (1,), complex)
    b[..., 0, 0] = 1.0
    try:
        return np.linalg.solve(a, b)[..., 0]
    except np.linalg.LinAlgError as exc:
        raise DegenerateSteadyStateError(
            "steady state is not unique (singular constrained system)") from exc


def steady_state(liouvillian: Liouvillian) -> DensityMatrix4:
    """Unique steady state of the generator.

    Solves L vec(rho) = 0 with one equation replaced by unit trace,
    symmetrizes the result, and checks it really annihilates L.
    """
    vec = _solve_constrained(liouvillian.matrix)
    scale = max(np.abs(liouvillian.matrix).max(), 1.0)
    residual = np.abs(liouvillian.matrix @ vec).max() / scale
    if residual > 1e-8:
        raise DegenerateSteadyStateError(
            f"steady-state residual {residual:.2e} (near-degenerate generator)")
    rho = vec.reshape(N_LEVELS, N_LEVELS, order="F")
    herm_defect = float(np.abs(rho - rho.conj().T).max())
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix4(rho=rho, herm_defect=herm_defect)


def time_evolve(liouvillian: Liouvillian, rho0: np.ndarray, t: float,
                dt: float) -> DensityMatrix4:
    """Propagate rho0 for time t with fixed-step fourth-order Runge-Kutta.

    The last step is shortened to land exactly on t. Propagation aborts
    with :class:`StepSizeError` if the trace drifts by more than 1e-6.
    """
    if dt <= 0.0:
        raise DomainError("dt must be positive")
    if t < 0.0:
        raise DomainError("t must be nonnegative")
    vec = np.asarray(rho0, complex).reshape(N_LEVELS ** 2, order="F").copy()
    if t == 0.0:
        return DensityMatrix4(rho=np.asarray(rho0, complex).copy())
    l_m = liouvillian.matrix
    n_full, remainder = divmod(t, dt)
    steps = [dt] * int(n_full)
    if remainder > 1e-15 * t:
        steps.append(remainder)

    def rhs(y):
        return l_m @ y

    for h in steps:
        k1 = rhs(vec)
        k2 = rhs(vec + 0.5 * h * k1)
        k3 = rhs(vec + 0.5 * h * k2)
        k4 = rhs(vec + h * k3)
        vec = vec + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        drift = abs(vec[_TRACE_IDX].sum() - 1.0)
        if drift > 1e-6:
            raise StepSizeError(
                f"trace drifted by {drift:.2e}; reduce dt below {dt:g}")
    rho = vec.reshape(N_LEVELS, N_LEVELS, order="F")
    herm_defect = float(np.abs(rho - rho.conj().T).max())
    return DensityMatrix4(rho=0.5 * (rho + rho.conj().T), herm_defect=herm_defect)
