"""Exact dynamics of a two-quantum-dot spin-qubit system.

The two dots are modeled as a four-mode fermionic Fock space (dot0-up,
dot0-down, dot1-up, dot1-down), giving a 16-dimensional Hilbert space.
The Hamiltonian collects on-site energies, Zeeman splittings, Hubbard
repulsion, and tunnel coupling (with Jordan-Wigner fermionic signs).

Basis indices are big-endian occupation bitstrings over the mode order
above, so the (1,1)-charge computational states sit at indices
{5, 6, 9, 10} = {down-down, down-up, up-down, up-up}.  A pulse drives the
16x16 unitary; projecting onto those four indices and removing the
single-qubit virtual-Z phases yields the effective two-qubit gate, scored
against CZ with a fidelity that penalizes both leakage and distance from
the target.

Energies are linear frequencies in GHz, durations in ns, so one
evolution step is exp(-i 2*pi H dt).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_MODES = 4
DIM_FULL = 16
DIM_COMP = 4

# Full-space basis indices of {down-down, down-up, up-down, up-up}.
COMPUTATIONAL_INDICES = (5, 6, 9, 10)

# Target gate: controlled-Z in the computational basis.
CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)

EPS_BOUNDS = (-750.0, 750.0)
TUN_BOUNDS = (0.0, 5.0)

PHASE_TOL = 1e-8


class CompensationDegenerate(Exception):
    """A diagonal entry needed for virtual-Z compensation is (near) zero."""


def _mode_bit(mode: int) -> int:
    return 1 << (N_MODES - 1 - mode)


def _occupations() -> np.ndarray:
    """occ[s, m] = occupation of mode m in basis state s."""
    occ = np.zeros((DIM_FULL, N_MODES), dtype=np.int64)
    for s in range(DIM_FULL):
        for m in range(N_MODES):
            occ[s, m] = (s >> (N_MODES - 1 - m)) & 1
    return occ


_OCC = _occupations()


def _annihilation(mode: int) -> np.ndarray:
    """Jordan-Wigner annihilation operator for one mode (16x16, real)."""
    a = np.zeros((DIM_FULL, DIM_FULL))
    bit = _mode_bit(mode)
    for s in range(DIM_FULL):
        if s & bit:
            parity = int(_OCC[s, :mode].sum())
            a[s & ~bit, s] = -1.0 if parity % 2 else 1.0
    return a


def _hopping_operator() -> np.ndarray:
    """Sum over spin of c0^dag c1 + h.c. between the two dots."""
    hop = np.zeros((DIM_FULL, DIM_FULL))
    for spin in range(2):
        a0 = _annihilation(0 + spin)   # dot0, this spin
        a1 = _annihilation(2 + spin)   # dot1, this spin
        hop += a0.T @ a1 + a1.T @ a0
    return hop


_HOP = _hopping_operator()

# Per-basis-state occupation numbers (n_up, n_down) for each dot and
# double-occupancy indicators, used for the diagonal Hamiltonian terms.
_N_UP = (_OCC[:, 0], _OCC[:, 2])
_N_DOWN = (_OCC[:, 1], _OCC[:, 3])


@dataclass(frozen=True)
class HamiltonianParams:
    """Physical controls and constants of the two-dot system (all GHz).

    eps: on-site energies of dot 0 and dot 1.
    tun: tunnel coupling between the dots.
    u:   Hubbard repulsion of each dot.
    ez:  Zeeman splitting (qubit resonance frequency) of each dot.
    """

    eps: tuple[float, float]
    tun: float
    u: tuple[float, float]
    ez: tuple[float, float]

    def validate(self) -> None:
        for i, e in enumerate(self.eps):
            if not EPS_BOUNDS[0] <= e <= EPS_BOUNDS[1]:
                raise ValueError(f"eps[{i}]={e} outside {EPS_BOUNDS} GHz")
        if not TUN_BOUNDS[0] <= self.tun <= TUN_BOUNDS[1]:
            raise ValueError(f"tun={self.tun} outside {TUN_BOUNDS} GHz")
        for i, ui in enumerate(self.u):
            if ui < 0:
                raise ValueError(f"u[{i}]={ui} must be >= 0")
        for i, ez in enumerate(self.ez):
            if ez < 0:
                raise ValueError(f"ez[{i}]={ez} must be >= 0")


@dataclass(frozen=True)
class FidelityReport:
    """Gate fidelity of a (possibly leaky) 4x4 matrix against a target.

    fidelity = (unitarity_trace + overlap) / (d*(d+1)) with d = 4, where
    unitarity_trace = Tr(U^dag U) and overlap = |Tr(U_target^dag U)|^2.
    """

    fidelity: float
    unitarity_trace: float
    overlap: float


def build_hamiltonian(params: HamiltonianParams) -> np.ndarray:
    """Assemble the 16x16 Hamiltonian H_eps + H_Z + H_U + H_T (GHz)."""
    params.validate()
    diag = np.zeros(DIM_FULL)
    for dot in range(2):
        n_up, n_dn = _N_UP[dot], _N_DOWN[dot]
        diag += params.eps[dot] * (n_up + n_dn)
        diag += 0.5 * params.ez[dot] * (n_up - n_dn)
        diag += params.u[dot] * (n_up * n_dn)
    h = np.diag(diag).astype(complex)
    h -= params.tun * _HOP
    return h


def evolve_step(h: np.ndarray, dt: float) -> np.ndarray:
    """Unitary exp(-i 2*pi h dt) via eigendecomposition of the Hermitian h.

    h in GHz, dt in ns; the 2*pi converts linear frequencies to angular.
    """
    if dt <= 0:
        raise ValueError(f"dt={dt} must be positive")
    try:
        energies, vectors = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"eigendecomposition failed for {h.shape} Hamiltonian: {exc}"
        ) from exc
    phases = np.exp(-2j * np.pi * energies * dt)
    return (vectors * phases) @ vectors.conj().T


def accumulate(u_step: np.ndarray, u_acc: np.ndarray) -> np.ndarray:
    """Left-multiply the newest step onto the accumulated unitary."""
    if u_step.shape != u_acc.shape:
        raise ValueError(f"shape mismatch: {u_step.shape} vs {u_acc.shape}")
    return u_step @ u_acc


def project_to_computational(u16: np.ndarray) -> np.ndarray:
    """Extract the 4x4 block over the computational indices {5,6,9,10}.

    The result is generally sub-unitary: amplitude outside the block is
    leakage and is simply dropped.
    """
    if u16.shape != (DIM_FULL, DIM_FULL):
        raise ValueError(f"expected {DIM_FULL}x{DIM_FULL} matrix, got {u16.shape}")
    idx = np.asarray(COMPUTATIONAL_INDICES)
    return u16[np.ix_(idx, idx)]


def _compensation_phases(u4: np.ndarray) -> np.ndarray:
    """Diagonal phases e^{i lambda_ab} removing global + single-qubit Z."""
    phi00 = np.angle(u4[0, 0])
    phi01 = np.angle(u4[1, 1])
    phi10 = np.angle(u4[2, 2])
    lam = np.array([
        -phi00,
        -phi01,
        -phi10,
        -(phi10 + phi01 - phi00),
    ])
    return np.exp(1j * lam)


def phase_compensate(u4: np.ndarray, tol: float = PHASE_TOL) -> np.ndarray:
    """Remove the global phase and one virtual-Z per qubit from u4.

    Afterwards the diagonal entries 0, 1, 2 have zero argument, so a gate
    that is diagonal-equivalent to CZ becomes exactly diag(1, 1, 1, -1).
    """
    if u4.shape != (DIM_COMP, DIM_COMP):
        raise ValueError(f"expected {DIM_COMP}x{DIM_COMP} matrix, got {u4.shape}")
    mags = np.abs(np.diag(u4)[:3])
    if np.any(mags < tol):
        k = int(np.argmin(mags))
        raise CompensationDegenerate(
            f"|u4[{k},{k}]|={mags[k]:.3e} below {tol}; gate too far from "
            "diagonal-equivalent to compensate"
        )
    return _compensation_phases(u4)[:, None] * u4


def try_phase_compensate(u4: np.ndarray, tol: float = PHASE_TOL):
    """Compensate if possible; otherwise return u4 unchanged.

    Returns (matrix, compensated_flag).  Used mid-episode where a
    degenerate state should not abort the run.
    """
    if np.any(np.abs(np.diag(u4)[:3]) < tol):
        return u4, False
    return _compensation_phases(u4)[:, None] * u4, True


def gate_fidelity(u_final: np.ndarray, u_target: np.ndarray = CZ) -> FidelityReport:
    """Fidelity of a projected, compensated 4x4 gate against the target."""
    if u_final.shape != (DIM_COMP, DIM_COMP):
        raise ValueError(f"expected {DIM_COMP}x{DIM_COMP} matrix, got {u_final.shape}")
    if u_target.shape != (DIM_COMP, DIM_COMP):
        raise ValueError(f"expected {DIM_COMP}x{DIM_COMP} target, got {u_target.shape}")
    unitarity = float(np.real(np.trace(u_final.conj().T @ u_final)))
    overlap = float(np.abs(np.trace(u_target.conj().T @ u_final)) ** 2)
    d = DIM_COMP
    return FidelityReport(
        fidelity=(unitarity + overlap) / (d * (d + 1)),
        unitarity_trace=unitarity,
        overlap=overlap,
    )
