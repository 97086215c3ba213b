"""Equilibrium cavity states, partition functions and free energies.

The bare mode Hamiltonian is omega0 (a^dag a + 1/2). A drive of amplitude
lambda adds lambda a^dag + lambda^* a; completing the square shows that this
is the bare Hamiltonian conjugated by D(alpha) with alpha = lambda / omega0,
shifted down by omega0 |alpha|^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, RangeError
from .fock import (
    DEFAULT_TAIL_TOL,
    FieldState,
    FockSpace,
    auto_dim,
    check_tail,
    make_displacement,
)

BETA_OMEGA0_MIN = 1e-6
BETA_OMEGA0_MAX = 50.0


@dataclass(frozen=True)
class ThermalParams:
    beta: float
    omega0: float = 1.0

    def __post_init__(self):
        if not (self.beta > 0 and self.omega0 > 0):
            raise RangeError(f"beta and omega0 must be positive, got beta={self.beta}, omega0={self.omega0}")

    @classmethod
    def from_beta_omega0(cls, beta_omega0: float, omega0: float = 1.0) -> "ThermalParams":
        return cls(beta=beta_omega0 / omega0, omega0=omega0)

    @property
    def beta_omega0(self) -> float:
        return self.beta * self.omega0

    @property
    def mean_occupation(self) -> float:
        return 1.0 / math.expm1(self.beta_omega0)

    def check_window(self) -> None:
        x = self.beta_omega0
        if not BETA_OMEGA0_MIN < x < BETA_OMEGA0_MAX:
            raise RangeError(
                f"beta*omega0 = {x:g} outside certified window ({BETA_OMEGA0_MIN:g}, {BETA_OMEGA0_MAX:g})"
            )


@dataclass(frozen=True)
class DriveProtocol:
    """Drive amplitude lambda(t) switched on over ``duration``.

    ``shape`` is ``"quench"`` (sudden switch, duration 0), ``"linear_ramp"``
    or ``"schedule"`` (piecewise-linear through ``times``/``values``).
    """

    lambda_final: complex
    lambda_initial: complex = 0.0
    shape: str = "quench"
    duration: float = 0.0
    times: Optional[tuple] = None
    values: Optional[tuple] = None

    def __post_init__(self):
        if self.shape == "quench":
            return
        if self.shape == "linear_ramp":
            if not self.duration > 0:
                raise ValueError(f"linear_ramp needs duration > 0, got {self.duration}")
            return
        if self.shape != "schedule":
            raise ValueError(f"unknown protocol shape {self.shape!r}")
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 2 or len(self.values) != len(t):
            raise ValueError("schedule needs matching times/values with at least two samples")
        if t[0] != 0 or np.any(np.diff(t) <= 0):
            raise ValueError("schedule times must start at 0 and increase strictly")
        object.__setattr__(self, "duration", float(t[-1]))
        object.__setattr__(self, "lambda_initial", complex(self.values[0]))
        object.__setattr__(self, "lambda_final", complex(self.values[-1]))

    @classmethod
    def quench(cls, lambda_final: complex, lambda_initial: complex = 0.0) -> "DriveProtocol":
        return cls(lambda_final=lambda_final, lambda_initial=lambda_initial)

    @classmethod
    def linear_ramp(cls, lambda_final: complex, duration: float, lambda_initial: complex = 0.0) -> "DriveProtocol":
        return cls(lambda_final=lambda_final, lambda_initial=lambda_initial, shape="linear_ramp", duration=duration)

    @classmethod
    def from_samples(cls, times: Sequence[float], values: Sequence[complex]) -> "DriveProtocol":
        return cls(
            lambda_final=values[-1],
            shape="schedule",
            times=tuple(float(t) for t in times),
            values=tuple(complex(v) for v in values),
        )

    @classmethod
    def from_alpha(cls, alpha: complex, omega0: float = 1.0, shape: str = "quench", duration: float = 0.0):
        if shape == "quench":
            return cls.quench(alpha * omega0)
        return cls.linear_ramp(alpha * omega0, duration)

    @property
    def is_quench(self) -> bool:
        return self.shape == "quench"

    def amplitude(self, t):
        """lambda(t); vectorised over ``t``."""
        t = np.asarray(t, dtype=float)
        if self.shape == "quench":
            return np.where(t > 0, self.lambda_final, self.lambda_initial).astype(complex)
        if self.shape == "linear_ramp":
            s = np.clip(t / self.duration, 0.0, 1.0)
            return self.lambda_initial + (self.lambda_final - self.lambda_initial) * s
        tt = np.asarray(self.times)
        vv = np.asarray(self.values)
        return np.interp(t, tt, vv.real) + 1j * np.interp(t, tt, vv.imag)

    def alpha_initial(self, omega0: float) -> complex:
        return complex(self.lambda_initial) / omega0

    def alpha_final(self, omega0: float) -> complex:
        return complex(self.lambda_final) / omega0

    def label(self) -> str:
        if self.shape == "quench":
            return "quench"
        if self.shape == "linear_ramp":
            return f"ramp:{self.duration:g}"
        return "schedule"


def _thermal_populations(dim: int, x: float) -> np.ndarray:
    n = np.arange(dim)
    return -math.expm1(-x) * np.exp(-x * n)


def _finish(space, matrix, p, alpha, tail_tol) -> FieldState:
    st = FieldState(space, matrix, beta=p.beta, alpha=alpha, omega0=p.omega0)
    check_tail(st, tail_tol)
    return st


def thermal_state(space: FockSpace, p: ThermalParams, tail_tol: float = DEFAULT_TAIL_TOL) -> FieldState:
    """Gibbs state of the bare mode, renormalised on the retained levels."""
    p.check_window()
    pops = _thermal_populations(space.dim, p.beta_omega0)
    pops = pops / pops.sum()
    return _finish(space, np.diag(pops).astype(complex), p, None, tail_tol)


def displaced_thermal_state(
    space: FockSpace, p: ThermalParams, alpha: complex, tail_tol: float = DEFAULT_TAIL_TOL
) -> FieldState:
    """D^dag(alpha) rho_th D(alpha).

    With this ordering a displaced vacuum has <a> = -alpha. Every
    observable used downstream depends on |alpha| only.
    """
    rho = thermal_state(space, p, tail_tol=1.0).matrix
    alpha = complex(alpha)
    if alpha == 0:
        return _finish(space, rho, p, alpha, tail_tol)
    d = make_displacement(space, alpha).matrix
    out = d.conj().T @ rho @ d
    out = (out + out.conj().T) / 2
    out = out / np.trace(out).real
    return _finish(space, out, p, alpha, tail_tol)


def state_space(p: ThermalParams, alpha: complex = 0.0, dim: Optional[int] = None) -> FockSpace:
    """FockSpace sized by :func:`cavjar.fock.auto_dim` unless ``dim`` is given."""
    return FockSpace(dim if dim is not None else auto_dim(p.beta_omega0, alpha))


def partition_function(p: ThermalParams) -> float:
    p.check_window()
    x = p.beta_omega0
    return math.exp(-x / 2) / -math.expm1(-x)


def displaced_partition_function(p: ThermalParams, alpha: complex) -> float:
    return partition_function(p) * math.exp(p.beta_omega0 * abs(complex(alpha)) ** 2)


def log_partition_function(p: ThermalParams, alpha: complex = 0.0) -> float:
    p.check_window()
    x = p.beta_omega0
    return -x / 2 - math.log(-math.expm1(-x)) + x * abs(complex(alpha)) ** 2


def helmholtz_free_energy(Z: float, beta: float) -> float:
    if not Z > 0:
        raise DomainError(f"partition function must be positive, got {Z}")
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta}")
    return -math.log(Z) / beta


def delta_F(p: ThermalParams, protocol: DriveProtocol) -> float:
    """Free-energy change between the equilibria at lambda_initial and lambda_final."""
    li = abs(complex(protocol.lambda_initial)) ** 2
    lf = abs(complex(protocol.lambda_final)) ** 2
    return (li - lf) / p.omega0
