"""Dispersive Ramsey interferometry on a three-level atom.

Atom basis order is (e, g, f). Joint operators act on atom (x) field, so the
joint index is ``level * dim + n``. Everything is in the interaction picture:
the free Hamiltonian commutes with the dispersive term and is never applied.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import FitError, NumericalError
from .fock import HERMITIAN_TOL, PSD_TOL, TRACE_TOL, FieldState, FockSpace, expm_dense
from .states import ThermalParams

E, G, F = 0, 1, 2


@dataclass(frozen=True)
class AtomState:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (3, 3):
            raise ValueError(f"atom state must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NumericalError("atom state has non-finite entries")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise NumericalError("atom state not Hermitian")
        if abs(np.trace(m) - 1) > TRACE_TOL:
            raise NumericalError(f"atom state trace {np.trace(m)} differs from 1")
        if np.linalg.eigvalsh(m)[0] < -PSD_TOL:
            raise NumericalError("atom state not positive")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_gfx(cls, g: float, f: float, x: complex) -> "AtomState":
        """g|g><g| + f|f><f| + (x|g><f| + h.c.)."""
        if abs(g + f - 1) > TRACE_TOL:
            raise ValueError(f"g + f must be 1, got {g + f}")
        if abs(x) ** 2 > g * f + 1e-15:
            raise ValueError(f"|x|^2 = {abs(x) ** 2} exceeds g*f = {g * f}")
        m = np.zeros((3, 3), dtype=complex)
        m[G, G], m[F, F] = g, f
        m[G, F], m[F, G] = x, np.conj(x)
        return cls(m)

    @classmethod
    def pure(cls, psi) -> "AtomState":
        psi = np.asarray(psi, dtype=complex)
        return cls(np.outer(psi, psi.conj()))

    @property
    def e_pop(self) -> float:
        return float(self.matrix[E, E].real)

    @property
    def g_pop(self) -> float:
        return float(self.matrix[G, G].real)

    @property
    def f_pop(self) -> float:
        return float(self.matrix[F, F].real)

    @property
    def coherence_gf(self) -> complex:
        return complex(self.matrix[G, F])


@dataclass(frozen=True)
class DispersiveCoupling:
    """Dispersive shift per photon, omega = Omega0^2 / (4 delta)."""

    omega: Optional[float] = None
    rabi_vacuum: Optional[float] = None
    detuning: Optional[float] = None

    def __post_init__(self):
        if self.rabi_vacuum is not None or self.detuning is not None:
            if self.rabi_vacuum is None or self.detuning is None:
                raise ValueError("give both rabi_vacuum and detuning, or neither")
            derived = self.rabi_vacuum ** 2 / (4 * self.detuning)
            if self.omega is not None and abs(self.omega - derived) > 1e-12 * max(1.0, abs(derived)):
                raise ValueError(f"omega={self.omega} inconsistent with Omega0^2/(4 delta)={derived}")
            if abs(self.detuning) < 10 * abs(self.rabi_vacuum):
                warnings.warn(
                    f"|delta|/Omega0 = {abs(self.detuning / self.rabi_vacuum):.3g} < 10: "
                    "dispersive approximation is questionable",
                    stacklevel=2,
                )
            object.__setattr__(self, "omega", derived)
        if self.omega is None or not self.omega > 0:
            raise ValueError(f"dispersive coupling omega must be positive, got {self.omega}")


@dataclass(frozen=True)
class InteractionConfig:
    coupling: DispersiveCoupling
    delta_t: float
    phase_grid: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.delta_t < 0:
            raise ValueError(f"delta_t must be >= 0, got {self.delta_t}")
        if self.phase_grid is not None:
            grid = np.array(self.phase_grid, dtype=float)
            if grid.ndim != 1 or grid.size == 0:
                raise ValueError("phase_grid must be a nonempty 1-D sequence")
            grid.setflags(write=False)
            object.__setattr__(self, "phase_grid", grid)

    @classmethod
    def from_phase(cls, omega_dt: float, omega: float = 1.0, phi_points: Optional[int] = None):
        grid = None if phi_points is None else uniform_phase_grid(phi_points)
        return cls(DispersiveCoupling(omega=omega), omega_dt / omega, grid)

    @property
    def omega_dt(self) -> float:
        return self.coupling.omega * self.delta_t


def uniform_phase_grid(n: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n) / n


# Ramsey zones: |g> -> (|g> + |f>)/sqrt2, |f> -> (-|g> + |f>)/sqrt2, e untouched.
RAMSEY_PULSE = np.eye(3, dtype=complex)
RAMSEY_PULSE[np.ix_([G, F], [G, F])] = np.array([[1, -1], [1, 1]]) / math.sqrt(2)
RAMSEY_PULSE.setflags(write=False)


def phase_shift(phi: float) -> np.ndarray:
    return np.diag([1.0, 1.0, np.exp(1j * phi)])


def prepared_atom() -> AtomState:
    """R1 applied to |g>: coherence x = 1/2, so V0 = 1."""
    return AtomState.pure(RAMSEY_PULSE @ np.array([0, 1, 0], dtype=complex))


def dispersive_hamiltonian(space: FockSpace, coupling: DispersiveCoupling) -> np.ndarray:
    """omega a^dag a (|e><e| - |g><g|) on atom (x) field."""
    n = np.arange(space.dim, dtype=float)
    diag = coupling.omega * np.concatenate([n, -n, np.zeros_like(n)])
    return np.diag(diag).astype(complex)


def evolve_joint(field: FieldState, atom: AtomState, cfg: InteractionConfig) -> np.ndarray:
    """exp(-i H_I dt) (rho_A (x) rho_F) exp(+i H_I dt)."""
    h = dispersive_hamiltonian(field.space, cfg.coupling)
    u = expm_dense(-1j * cfg.delta_t * h)
    u_diag = u.diagonal()
    rho = np.kron(atom.matrix, field.matrix)
    out = u_diag[:, None] * rho * u_diag.conj()[None, :]
    if not np.all(np.isfinite(out)):
        raise NumericalError("joint evolution produced non-finite entries")
    return out


def reduced_atom(joint: np.ndarray) -> AtomState:
    """Partial trace over the field."""
    joint = np.asarray(joint)
    dim = joint.shape[0] // 3
    if joint.shape != (3 * dim, 3 * dim):
        raise ValueError(f"joint state shape {joint.shape} is not (3 dim, 3 dim)")
    r = np.einsum("injn->ij", joint.reshape(3, dim, 3, dim))
    return AtomState((r + r.conj().T) / 2)


def visibility_from_atom(atom: AtomState) -> float:
    return 2.0 * abs(atom.coherence_gf)


def visibility_characteristic(field: FieldState, cfg: InteractionConfig, v0: float = 1.0) -> float:
    """V0 |Tr[rho exp(i omega dt a^dag a)]|, evaluated from the field alone."""
    n = np.arange(field.space.dim)
    phases = np.exp(1j * cfg.omega_dt * n)
    return v0 * abs(np.dot(field.matrix.diagonal(), phases))


def _sinh_half(p: ThermalParams) -> float:
    p.check_window()
    return math.sinh(p.beta_omega0 / 2)


def visibility_thermal_closed_form(p: ThermalParams, omega_dt: float) -> float:
    sh = _sinh_half(p)
    s = math.sin(omega_dt / 2)
    return sh / math.sqrt(sh * sh + s * s)


def visibility_displaced_closed_form(p: ThermalParams, alpha: complex, omega_dt: float) -> float:
    sh = _sinh_half(p)
    ch = math.cosh(p.beta_omega0 / 2)
    s2 = math.sin(omega_dt / 2) ** 2
    expo = -2 * abs(complex(alpha)) ** 2 * s2 * sh * ch / (sh * sh + s2)
    return visibility_thermal_closed_form(p, omega_dt) * math.exp(expo)


@dataclass(frozen=True)
class FringeRecord:
    phases: np.ndarray
    p_f: np.ndarray
    visibility: float
    mean: float
    amplitude: float
    coherence: complex

    def __len__(self):
        return len(self.phases)


def fit_first_harmonic(phases: np.ndarray, p: np.ndarray) -> tuple:
    """Least-squares fit p ~ c0 + c cos(phi) + s sin(phi); returns (c0, amplitude)."""
    design = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    coef, *_ = np.linalg.lstsq(design, p, rcond=None)
    return float(coef[0]), float(math.hypot(coef[1], coef[2]))


def interferometer_scan(
    field: FieldState, cfg: InteractionConfig, atom: Optional[AtomState] = None
) -> FringeRecord:
    """Detector probability P_f(phi) over ``cfg.phase_grid`` and the fitted visibility.

    The atom enters in |g>, crosses R1, interacts dispersively with the
    field, picks up diag(1, e^{i phi}) on (g, f) and crosses R2 before
    detection in |f>. Field and atom only meet in the cavity, so R2 and the
    detector are applied to the reduced atomic state.
    """
    if cfg.phase_grid is None or len(cfg.phase_grid) < 8:
        raise ValueError("interferometer_scan needs a phase grid with at least 8 points")
    if atom is None:
        atom = prepared_atom()
    rho_a = reduced_atom(evolve_joint(field, atom, cfg)).matrix

    phases = np.asarray(cfg.phase_grid)
    p_f = np.empty(len(phases))
    for k, phi in enumerate(phases):
        u = RAMSEY_PULSE @ phase_shift(phi)
        p_f[k] = (u @ rho_a @ u.conj().T)[F, F].real

    c0, amp = fit_first_harmonic(phases, p_f)
    coherence = complex(rho_a[G, F])
    if np.ptp(p_f) <= 1e-14 and abs(coherence) > 1e-14:
        raise FitError("flat fringe record despite nonzero atomic coherence")
    # extrema of the fitted harmonic are c0 +/- amp
    vis = amp / c0 if c0 > 0 else 0.0
    return FringeRecord(phases, p_f, vis, c0, amp, coherence)
