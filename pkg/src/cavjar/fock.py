"""Truncated Fock-space numerics.

Dense complex matrices on the span of |0>, ..., |dim-1>. Units are hbar = 1.
The top retained level acts as an absorbing boundary, so every object built
here is only trustworthy while the probability mass near the boundary is
negligible; :func:`tail_weight` and :func:`auto_dim` keep that in check.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import NumericalError, TruncationError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
DEFAULT_TAIL_TOL = 1e-8
DEFAULT_DIM_CAP = 512

# Geometric thermal tail e^{-x N} targeted by auto_dim.
_THERMAL_TAIL_TARGET = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FockSpace:
    """Fock levels 0 .. dim-1 of a single bosonic mode."""

    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"FockSpace needs an integer dim >= 2, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))

    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)

    def basis(self, n: int) -> np.ndarray:
        if not 0 <= n < self.dim:
            raise IndexError(f"level {n} outside 0..{self.dim - 1}")
        v = np.zeros(self.dim, dtype=complex)
        v[n] = 1.0
        return v


@dataclass(frozen=True)
class FieldOperator:
    space: FockSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = _readonly(self.matrix)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"operator shape {m.shape} does not match dim {self.space.dim}")
        object.__setattr__(self, "matrix", m)

    def adjoint(self) -> "FieldOperator":
        return FieldOperator(self.space, self.matrix.conj().T)

    def __matmul__(self, other: "FieldOperator") -> "FieldOperator":
        return FieldOperator(self.space, self.matrix @ other.matrix)

    def __add__(self, other: "FieldOperator") -> "FieldOperator":
        return FieldOperator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "FieldOperator") -> "FieldOperator":
        return FieldOperator(self.space, self.matrix - other.matrix)

    def __mul__(self, c: complex) -> "FieldOperator":
        return FieldOperator(self.space, c * self.matrix)

    __rmul__ = __mul__


@dataclass(frozen=True)
class FieldState:
    """Density matrix of the cavity field.

    Construction validates hermiticity, unit trace and positivity. The
    truncation tail is checked by the builders in :mod:`cavjar.states`,
    because only they know which tolerance the caller asked for.
    """

    space: FockSpace
    matrix: np.ndarray
    beta: Optional[float] = None
    alpha: Optional[complex] = None
    omega0: Optional[float] = None
    _eigs: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        m = _readonly(self.matrix)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"state shape {m.shape} does not match dim {self.space.dim}")
        if not np.all(np.isfinite(m)):
            raise NumericalError("field state has non-finite entries")
        herm = np.max(np.abs(m - m.conj().T))
        if herm > HERMITIAN_TOL:
            raise NumericalError(f"field state not Hermitian (deviation {herm:.3e})")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise NumericalError(f"field state trace {tr} differs from 1")
        eigs = np.linalg.eigvalsh(m)
        if eigs[0] < -PSD_TOL:
            raise NumericalError(f"field state not positive (min eigenvalue {eigs[0]:.3e})")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_eigs", eigs)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._eigs

    @property
    def populations(self) -> np.ndarray:
        return self.matrix.diagonal().real.copy()

    def expect(self, op) -> complex:
        m = op.matrix if isinstance(op, FieldOperator) else np.asarray(op)
        return complex(np.trace(self.matrix @ m))

    def purity(self) -> float:
        return float(np.real(np.sum(self.matrix * self.matrix.T)))


def make_annihilation(space: FockSpace) -> FieldOperator:
    a = np.diag(np.sqrt(np.arange(1, space.dim, dtype=float)), k=1)
    return FieldOperator(space, a)


def make_creation(space: FockSpace) -> FieldOperator:
    return make_annihilation(space).adjoint()


def make_number(space: FockSpace) -> FieldOperator:
    return FieldOperator(space, np.diag(np.arange(space.dim, dtype=float)))


def _is_diagonal(m: np.ndarray) -> bool:
    return not np.any(m - np.diag(m.diagonal()))


def _hermitian_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def expm_dense(a: np.ndarray, method: str = "auto") -> np.ndarray:
    """Exponential of a dense square matrix.

    ``method`` is one of ``"auto"``, ``"diag"``, ``"eigh"`` or ``"pade"``.
    ``auto`` uses the exact diagonal formula when possible, a unitary
    eigendecomposition for Hermitian or anti-Hermitian input, and scipy's
    scaling-and-squaring Pade otherwise.
    """
    a = np.asarray(a, dtype=complex)
    if not np.all(np.isfinite(a)):
        raise NumericalError("matrix_exp input has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0

    if method == "auto":
        if _is_diagonal(a):
            method = "diag"
        elif _hermitian_defect(a) <= 1e-14 * scale:
            method = "eigh"
        elif float(np.max(np.abs(a + a.conj().T))) <= 1e-14 * scale:
            method = "eigh"
        else:
            method = "pade"

    with np.errstate(over="ignore", invalid="ignore"):
        out = _expm_by(a, method, 1e-14 * scale)
    if not np.all(np.isfinite(out)):
        raise NumericalError("matrix exponential overflowed")
    return out


def _expm_by(a: np.ndarray, method: str, tol: float) -> np.ndarray:
    if method == "diag":
        if not _is_diagonal(a):
            raise ValueError("method='diag' needs a diagonal matrix")
        return np.diag(np.exp(a.diagonal()))
    if method == "eigh":
        if _hermitian_defect(a) <= tol:
            w, v = scipy.linalg.eigh((a + a.conj().T) / 2)
            return (v * np.exp(w)) @ v.conj().T
        # anti-Hermitian: a = -i K with K = i a Hermitian
        k = 1j * a
        if _hermitian_defect(k) > tol:
            raise ValueError("method='eigh' needs a Hermitian or anti-Hermitian matrix")
        w, v = scipy.linalg.eigh((k + k.conj().T) / 2)
        return (v * np.exp(-1j * w)) @ v.conj().T
    if method == "pade":
        return scipy.linalg.expm(a)
    raise ValueError(f"unknown matrix_exp method {method!r}")


def matrix_exp(op: FieldOperator, scale: complex = 1.0, method: str = "auto") -> FieldOperator:
    """Return exp(scale * op)."""
    if not np.isfinite(scale):
        raise NumericalError(f"non-finite scale {scale!r}")
    return FieldOperator(op.space, expm_dense(scale * op.matrix, method=method))


def displacement_generator(space: FockSpace, alpha: complex) -> np.ndarray:
    a = make_annihilation(space).matrix
    return alpha * a.conj().T - np.conj(alpha) * a


def make_displacement(space: FockSpace, alpha: complex) -> FieldOperator:
    """D(alpha) = exp(alpha a^dag - alpha^* a) on the truncated space."""
    alpha = complex(alpha)
    if alpha == 0:
        return FieldOperator(space, space.identity())
    d = expm_dense(displacement_generator(space, alpha))
    defect = float(np.max(np.abs(d.conj().T @ d - np.eye(space.dim))))
    if defect > 1e-6:
        raise TruncationError(
            f"displacement unitarity defect {defect:.2e} at dim={space.dim}, |alpha|={abs(alpha):.3g}"
        )
    return FieldOperator(space, d)


def tail_weight(state: FieldState, k: int = 1) -> float:
    """Probability mass held by the top ``k`` retained Fock levels."""
    dim = state.space.dim
    if not 1 <= k < dim:
        raise ValueError(f"k must satisfy 1 <= k < dim, got k={k}, dim={dim}")
    return float(np.sum(state.populations[dim - k:]))


def check_tail(state: FieldState, tail_tol: float = DEFAULT_TAIL_TOL) -> None:
    w = tail_weight(state, 1)
    if w > tail_tol:
        raise TruncationError(
            f"top-level population {w:.3e} exceeds tail_tol {tail_tol:.1e} at dim={state.space.dim}"
        )


def dim_cap() -> int:
    raw = os.environ.get("CAVJAR_DIM_CAP")
    if raw is None or raw == "":
        return DEFAULT_DIM_CAP
    cap = int(raw)
    if cap < 2:
        raise ValueError(f"CAVJAR_DIM_CAP must be >= 2, got {cap}")
    return cap


def auto_dim(beta_omega0: float, alpha: complex = 0.0, cap: Optional[int] = None) -> int:
    """Truncation dimension for a thermal state of ``beta_omega0`` displaced by ``alpha``.

    Takes the larger of ceil((sqrt(nbar + |alpha|^2) + 6)^2) and a
    high-temperature term that pushes the geometric tail e^{-x N} below 1e-12
    before adding the displacement spread, then clips to the cap.
    """
    if cap is None:
        cap = dim_cap()
    x = float(beta_omega0)
    a2 = abs(complex(alpha)) ** 2
    nbar = 1.0 / math.expm1(x)
    base = math.ceil((math.sqrt(nbar + a2) + 6.0) ** 2)
    n_th = math.ceil(-math.log(_THERMAL_TAIL_TARGET) / x)
    hot = math.ceil((math.sqrt(n_th) + math.sqrt(a2) + 2.0) ** 2)
    return int(min(max(base, hot, 2), cap))
