"""Free-energy estimation from Ramsey fringe visibilities.

For a thermal field and the same field displaced by alpha, the two
visibilities measured at a common interaction time satisfy

    (V_th / V_alpha) ** (1 / (1 - V_th**2)) == exp(|alpha|^2 sinh(beta omega0))

for every interaction time. At high temperature sinh(x) ~ x and the left
side estimates exp(-beta dF) = exp(beta omega0 |alpha|^2) directly
(``small_beta``). ``exact_inversion`` raises it to x / sinh(x), which removes
the high-temperature approximation; it is an extension not present in the
original small-beta identification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateError
from .ramsey import (
    InteractionConfig,
    interferometer_scan,
    visibility_characteristic,
    visibility_displaced_closed_form,
    visibility_thermal_closed_form,
)
from .states import (
    DriveProtocol,
    ThermalParams,
    delta_F,
    displaced_thermal_state,
    state_space,
    thermal_state,
)
from .work import tpm_exponential_average

DEGENERATE_MARGIN = 1e-9
MODES = ("small_beta", "exact_inversion")
SMALL_BETA_REGIME_LIMIT = 0.3


@dataclass(frozen=True)
class VisibilityPair:
    v_thermal: float
    v_displaced: float
    beta_omega0: Optional[float] = None

    def __post_init__(self):
        vt, vd = self.v_thermal, self.v_displaced
        if not (0 < vd <= 1 and 0 < vt <= 1):
            raise ValueError(f"visibilities must lie in (0, 1], got {vt}, {vd}")
        # allow rounding noise when alpha -> 0
        if vd > vt * (1 + 1e-12):
            raise ValueError(f"displaced visibility {vd} exceeds thermal visibility {vt}")

    @classmethod
    def from_closed_forms(cls, p: ThermalParams, alpha: complex, omega_dt: float) -> "VisibilityPair":
        return cls(
            visibility_thermal_closed_form(p, omega_dt),
            visibility_displaced_closed_form(p, alpha, omega_dt),
            p.beta_omega0,
        )


def _log_functional(pair: VisibilityPair) -> float:
    vt = pair.v_thermal
    if vt >= 1 - DEGENERATE_MARGIN:
        raise DegenerateError(
            f"thermal visibility {vt!r} is 1 to within {DEGENERATE_MARGIN:g}; the interaction "
            "time sits at a multiple of 2 pi / omega. Choose omega*dt = pi instead."
        )
    return (math.log(vt) - math.log(pair.v_displaced)) / -math.expm1(2 * math.log(vt))


def visibility_ratio_functional(pair: VisibilityPair) -> float:
    """(v_thermal / v_displaced) ** (1 / (1 - v_thermal**2))."""
    return math.exp(_log_functional(pair))


def _exponent_correction(pair: VisibilityPair, mode: str) -> float:
    if mode == "small_beta":
        return 1.0
    if mode != "exact_inversion":
        raise ValueError(f"unknown estimator mode {mode!r}")
    x = pair.beta_omega0
    if x is None:
        raise ValueError("exact_inversion needs beta_omega0")
    ThermalParams.from_beta_omega0(x).check_window()
    return x / math.sinh(x)


def log_exp_neg_beta_deltaF(pair: VisibilityPair, mode: str = "small_beta") -> float:
    return _log_functional(pair) * _exponent_correction(pair, mode)


def estimate_exp_neg_beta_deltaF(pair: VisibilityPair, mode: str = "small_beta") -> float:
    return math.exp(log_exp_neg_beta_deltaF(pair, mode))


def estimate_deltaF(pair: VisibilityPair, mode: str = "small_beta", omega0: float = 1.0) -> float:
    """Free-energy change in the units of ``omega0``."""
    if pair.beta_omega0 is None:
        raise ValueError("estimate_deltaF needs beta_omega0 to divide out beta")
    beta = pair.beta_omega0 / omega0
    return -log_exp_neg_beta_deltaF(pair, mode) / beta


def deltaF_sensitivity(pair: VisibilityPair, mode: str = "small_beta", omega0: float = 1.0) -> tuple:
    """First-order derivatives of :func:`estimate_deltaF` w.r.t. (v_thermal, v_displaced)."""
    vt, vd = pair.v_thermal, pair.v_displaced
    c = _exponent_correction(pair, mode)
    beta = pair.beta_omega0 / omega0
    one_m = 1 - vt * vt
    log_ratio = math.log(vt / vd)
    d_vt = 1 / (vt * one_m) + log_ratio * 2 * vt / one_m ** 2
    d_vd = -1 / (vd * one_m)
    return -c * d_vt / beta, -c * d_vd / beta


def noisy_pair(pair: VisibilityPair, sigma: float, rng: np.random.Generator) -> VisibilityPair:
    """Add Gaussian noise to both visibilities, clipped to (0, 1]."""
    tiny = np.finfo(float).tiny
    vt = float(np.clip(pair.v_thermal + sigma * rng.standard_normal(), tiny, 1.0))
    vd = float(np.clip(pair.v_displaced + sigma * rng.standard_normal(), tiny, 1.0))
    vd = min(vd, vt)
    return VisibilityPair(vt, vd, pair.beta_omega0)


def noise_study(
    pair: VisibilityPair, sigma: float, n_trials: int, seed: int, mode: str = "exact_inversion", omega0: float = 1.0
) -> np.ndarray:
    """Estimated dF for ``n_trials`` noisy copies of ``pair`` (trial k seeded by (seed, k))."""
    out = np.empty(n_trials)
    for k in range(n_trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        out[k] = estimate_deltaF(noisy_pair(pair, sigma, rng), mode, omega0)
    return out


@dataclass(frozen=True)
class IdentityReport:
    """Three members of exp(-beta dF) = visibility functional = <exp(-beta dE)>."""

    beta_omega0: float
    alpha: float
    omega_dt: float
    mode: str
    visibility_functional: float
    exp_neg_beta_deltaF: float
    tpm_average: float
    v_thermal: float
    v_displaced: float
    source: str

    @property
    def spread(self) -> float:
        vals = (self.visibility_functional, self.exp_neg_beta_deltaF, self.tpm_average)
        return (max(vals) - min(vals)) / self.exp_neg_beta_deltaF

    @property
    def deviations(self) -> dict:
        ref = self.exp_neg_beta_deltaF
        return {
            "functional_vs_free_energy": abs(self.visibility_functional - ref) / ref,
            "tpm_vs_free_energy": abs(self.tpm_average - ref) / ref,
            "functional_vs_tpm": abs(self.visibility_functional - self.tpm_average) / ref,
        }

    @property
    def regime(self) -> str:
        if self.mode == "small_beta" and self.beta_omega0 >= SMALL_BETA_REGIME_LIMIT:
            return "small_beta_degraded"
        return "ok"


def measured_pair(
    p: ThermalParams, alpha: complex, omega_dt: float, source: str = "closed_form", phi_points: int = 16
) -> VisibilityPair:
    """Visibility pair from closed forms, the characteristic function, or a fringe scan."""
    if source == "closed_form":
        return VisibilityPair.from_closed_forms(p, alpha, omega_dt)
    space = state_space(p, alpha)
    cfg = InteractionConfig.from_phase(omega_dt, phi_points=phi_points)
    th = thermal_state(space, p)
    disp = displaced_thermal_state(space, p, alpha)
    if source == "characteristic":
        return VisibilityPair(visibility_characteristic(th, cfg), visibility_characteristic(disp, cfg), p.beta_omega0)
    if source == "simulation":
        return VisibilityPair(
            interferometer_scan(th, cfg).visibility, interferometer_scan(disp, cfg).visibility, p.beta_omega0
        )
    raise ValueError(f"unknown visibility source {source!r}")


def visibility_work_identity_report(
    p: ThermalParams,
    protocol: DriveProtocol,
    omega_dt: float,
    mode: str = "small_beta",
    source: str = "closed_form",
    tpm_kwargs: Optional[dict] = None,
) -> IdentityReport:
    """Evaluate all three members of the visibility/work identity for ``protocol``.

    Only protocols starting from lambda = 0 map onto a thermal/displaced
    visibility pair.
    """
    if protocol.lambda_initial != 0:
        raise ValueError("the visibility identity needs a protocol starting at lambda = 0")
    alpha = protocol.alpha_final(p.omega0)
    pair = measured_pair(p, alpha, omega_dt, source)
    functional = estimate_exp_neg_beta_deltaF(pair, mode)
    target = math.exp(-p.beta * delta_F(p, protocol))
    tpm = tpm_exponential_average(p, protocol, **(tpm_kwargs or {}))
    return IdentityReport(
        p.beta_omega0, abs(alpha), omega_dt, mode, functional, target, tpm,
        pair.v_thermal, pair.v_displaced, source,
    )
