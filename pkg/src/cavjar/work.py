"""Two-point-measurement work statistics for the driven cavity mode.

H(lambda) = omega0 (a^dag a + 1/2) + lambda a^dag + lambda^* a. Its
eigenvectors are D^dag(lambda/omega0)|j> with energies
(j + 1/2) omega0 - |lambda|^2 / omega0. The TPM protocol measures H(lambda_i)
on a thermal state, evolves with U(t_f), and measures H(lambda_f).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import ConvergenceError, TruncationError
from .fock import DEFAULT_TAIL_TOL, FockSpace, auto_dim, make_annihilation, make_displacement
from .states import DriveProtocol, ThermalParams, delta_F

UNITARITY_TOL = 1e-8
TROTTER_SELF_TOL = 1e-7
TROTTER_ORACLE_TOL = 1e-6
TROTTER_MIN_STEPS = 1000
TROTTER_MAX_STEPS = 1 << 19
MC_BLOCK = 1 << 16


def protocol_space(p: ThermalParams, protocol: DriveProtocol, dim: Optional[int] = None) -> FockSpace:
    """FockSpace large enough for both endpoint equilibria of ``protocol``."""
    if dim is not None:
        return FockSpace(dim)
    a = max(abs(protocol.alpha_initial(p.omega0)), abs(protocol.alpha_final(p.omega0)))
    return FockSpace(auto_dim(p.beta_omega0, a))


def drive_hamiltonian(space: FockSpace, omega0: float, lam: complex) -> np.ndarray:
    a = make_annihilation(space).matrix
    h = omega0 * np.diag(np.arange(space.dim) + 0.5) + lam * a.conj().T + np.conj(lam) * a
    return h.astype(complex)


@dataclass(frozen=True)
class Eigensystem:
    energies: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors


def _trusted_levels(dim: int, r: float) -> int:
    fit = math.floor(max(math.sqrt(dim) - r - 3.0, 0.0) ** 2) + 1
    return max(1, min(dim // 2 + 1, fit))


def hamiltonian_eigensystem(space: FockSpace, omega0: float, lam: complex, check: bool = True) -> Eigensystem:
    """Analytic eigensystem of H(lambda), cross-checked against diagonalisation.

    The truncated matrix H(lambda) is distorted near the top level, so only
    levels j with (sqrt(j) + |alpha| + 3)^2 <= dim, capped at the lower half
    of the spectrum, are compared (eigenvalues and overlaps to 1e-8). The
    analytic basis is an exactly orthonormal basis of the truncated space.
    """
    alpha = complex(lam) / omega0
    energies = omega0 * (np.arange(space.dim) + 0.5) - omega0 * abs(alpha) ** 2
    vectors = make_displacement(space, alpha).matrix.conj().T
    if check and alpha != 0:
        w, v = scipy.linalg.eigh(drive_hamiltonian(space, omega0, lam))
        low = _trusted_levels(space.dim, abs(alpha))
        e_err = np.max(np.abs(w[:low] - energies[:low])) / omega0
        overlap = np.abs(np.einsum("ij,ij->j", vectors[:, :low].conj(), v[:, :low])) ** 2
        o_err = float(np.max(1 - overlap))
        if e_err > 1e-8 or o_err > 1e-8:
            raise TruncationError(
                f"low spectrum mismatch at dim={space.dim}: energy {e_err:.2e}, overlap {o_err:.2e}"
            )
    return Eigensystem(energies, vectors)


def initial_hamiltonian_eigensystem(space, p: ThermalParams, protocol: DriveProtocol, check=True) -> Eigensystem:
    return hamiltonian_eigensystem(space, p.omega0, protocol.lambda_initial, check=check)


def final_hamiltonian_eigensystem(space, p: ThermalParams, protocol: DriveProtocol, check=True) -> Eigensystem:
    return hamiltonian_eigensystem(space, p.omega0, protocol.lambda_final, check=check)


@dataclass(frozen=True)
class ProtocolPropagator:
    matrix: np.ndarray
    method: str
    n_steps: int = 0

    def __post_init__(self):
        u = self.matrix
        defect = float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))
        if defect > UNITARITY_TOL:
            raise ConvergenceError(f"{self.method} propagator unitarity defect {defect:.2e}")

    @property
    def unitarity_defect(self) -> float:
        u = self.matrix
        return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def _low_block_diff(u1: np.ndarray, u2: np.ndarray) -> float:
    k = u1.shape[0] // 2 + 1
    return float(np.max(np.abs(u1[:k, :k] - u2[:k, :k])))


def _slices(protocol: DriveProtocol, n_steps: int, scheme: str) -> tuple:
    """Drive amplitudes and durations of the exponential slices, in time order."""
    dt = protocol.duration / n_steps
    t0 = np.arange(n_steps) * dt
    if scheme == "midpoint":
        return protocol.amplitude(t0 + 0.5 * dt), np.full(n_steps, dt)
    if scheme != "cf4":
        raise ValueError(f"unknown trotter scheme {scheme!r}")
    # Fourth-order commutator-free Magnus: H is affine in lambda, so each
    # factor exp(-i dt (a H(t1) + b H(t2))) with a + b = 1/2 is a plain slice
    # exp(-i H(2(a l1 + b l2)) dt/2).
    r = math.sqrt(3) / 6
    c1, c2 = 0.5 - r, 0.5 + r
    w1, w2 = (3 - 2 * math.sqrt(3)) / 12, (3 + 2 * math.sqrt(3)) / 12
    l1 = protocol.amplitude(t0 + c1 * dt)
    l2 = protocol.amplitude(t0 + c2 * dt)
    first = 2 * (w2 * l1 + w1 * l2)
    second = 2 * (w1 * l1 + w2 * l2)
    lams = np.column_stack([first, second]).ravel()
    return lams, np.full(2 * n_steps, dt / 2)


def trotter_propagator(
    space: FockSpace, omega0: float, protocol: DriveProtocol, n_steps: int, scheme: str = "cf4"
) -> np.ndarray:
    """Time-ordered product of exp(-i H(lambda_k) dt_k) slices.

    ``scheme="midpoint"`` samples lambda at slice midpoints (second order);
    ``"cf4"`` uses two half-slices per step at Gauss-combined amplitudes
    (fourth order).
    """
    lams, dts = _slices(protocol, n_steps, scheme)
    a = make_annihilation(space).matrix
    n_diag = omega0 * (np.arange(space.dim) + 0.5)
    h0 = np.diag(n_diag)
    u = np.eye(space.dim, dtype=complex)
    if np.all(np.imag(lams) == 0):
        # real symmetric H = N + lam X; real eigh is about twice as fast
        x = (a + a.T).real
        for lam, dt in zip(lams.real, dts):
            w, v = np.linalg.eigh(h0 + lam * x)
            u = ((v * np.exp(-1j * w * dt)) @ v.T) @ u
    else:
        for lam, dt in zip(lams, dts):
            w, v = np.linalg.eigh(h0 + lam * a.conj().T + np.conj(lam) * a)
            u = ((v * np.exp(-1j * w * dt)) @ v.conj().T) @ u
    return u


def driven_displacement(omega0: float, protocol: DriveProtocol) -> tuple:
    """Interaction-picture solution of the linearly driven oscillator.

    With f(t) = lambda(t) e^{i omega0 t}, U_I(t_f) = e^{i theta} D(z) where
    z = -i int f dt and theta = -int_0^tf dt1 int_0^t1 dt2 Im[f*(t1) f(t2)].
    Returns ``(z, theta)``.
    """
    tf = protocol.duration
    pts = list(protocol.times[1:-1]) if protocol.shape == "schedule" else None
    opts = dict(limit=500, epsabs=1e-14, epsrel=1e-13, points=pts)

    def f(t):
        return complex(protocol.amplitude(t)) * np.exp(1j * omega0 * t)

    with warnings.catch_warnings():
        # oscillatory integrands hit quad's roundoff floor well below 1e-12
        warnings.simplefilter("ignore", scipy.integrate.IntegrationWarning)
        re = scipy.integrate.quad(lambda t: f(t).real, 0, tf, **opts)[0]
        im = scipy.integrate.quad(lambda t: f(t).imag, 0, tf, **opts)[0]

        def inner(t1):
            return scipy.integrate.quad(lambda t2: (np.conj(f(t1)) * f(t2)).imag, 0, t1, **opts)[0]

        theta = -scipy.integrate.quad(inner, 0, tf, **opts)[0]
    return -1j * complex(re, im), theta


def magnus_propagator(space: FockSpace, omega0: float, protocol: DriveProtocol) -> np.ndarray:
    z, theta = driven_displacement(omega0, protocol)
    free = np.exp(-1j * omega0 * (np.arange(space.dim) + 0.5) * protocol.duration)
    d = make_displacement(space, z).matrix
    return np.exp(1j * theta) * (free[:, None] * d)


def build_propagator(
    space: FockSpace,
    p: ThermalParams,
    protocol: DriveProtocol,
    method: str = "auto",
    n_steps: Optional[int] = None,
    scheme: str = "cf4",
) -> ProtocolPropagator:
    """U(t_f) for ``protocol``.

    ``method``: ``exact_quench`` (identity, the sudden limit), ``trotter``
    (step-doubled from ``n_steps`` until successive products agree to 1e-7
    on the lower half of the space, then checked against the analytic
    solution to 1e-6), ``magnus_analytic``, or ``auto`` (quench for quench
    protocols, trotter otherwise).
    """
    if method == "auto":
        method = "exact_quench" if protocol.is_quench else "trotter"
    if method == "exact_quench":
        if not protocol.is_quench:
            raise ValueError("exact_quench only applies to quench protocols")
        return ProtocolPropagator(np.eye(space.dim, dtype=complex), method)
    if protocol.is_quench:
        raise ValueError(f"{method} needs a protocol with finite duration")
    if method == "magnus_analytic":
        return ProtocolPropagator(magnus_propagator(space, p.omega0, protocol), method)
    if method != "trotter":
        raise ValueError(f"unknown propagator method {method!r}")

    steps = max(TROTTER_MIN_STEPS, n_steps or TROTTER_MIN_STEPS)
    prev = trotter_propagator(space, p.omega0, protocol, steps, scheme)
    while True:
        steps *= 2
        if steps > TROTTER_MAX_STEPS:
            raise ConvergenceError(f"trotter step doubling did not converge within {TROTTER_MAX_STEPS} steps")
        cur = trotter_propagator(space, p.omega0, protocol, steps, scheme)
        if _low_block_diff(cur, prev) <= TROTTER_SELF_TOL:
            break
        prev = cur
    oracle = magnus_propagator(space, p.omega0, protocol)
    diff = _low_block_diff(cur, oracle)
    if diff > TROTTER_ORACLE_TOL:
        raise ConvergenceError(f"trotter and analytic propagators differ by {diff:.2e} after {steps} steps")
    return ProtocolPropagator(cur, method, steps)


def transition_probabilities(
    U: ProtocolPropagator, initial_basis: np.ndarray, final_basis: np.ndarray, check: bool = True
) -> np.ndarray:
    """w[m, n] = |<psi_m^f| U |psi_n^0>|^2 (basis vectors are columns)."""
    amp = final_basis.conj().T @ U.matrix @ initial_basis
    w = np.abs(amp) ** 2
    if check:
        k = w.shape[1] // 2 + 1
        cols = w[:, :k].sum(axis=0)
        if np.min(cols) < 1 - 1e-6:
            raise TruncationError(f"transition column sum {np.min(cols):.3e} < 1 - 1e-6")
    return w


def initial_populations(energies: np.ndarray, beta: float, tail_tol: float = DEFAULT_TAIL_TOL) -> np.ndarray:
    """Boltzmann weights P_n on the retained levels."""
    logw = -beta * (energies - energies[0])
    pops = np.exp(logw)
    pops /= pops.sum()
    if pops[-1] > tail_tol:
        raise TruncationError(f"initial population of top level {pops[-1]:.3e} exceeds {tail_tol:.1e}")
    return pops


@dataclass(frozen=True)
class WorkDistribution:
    """Work values E_m^f - E_n^0 with their TPM probabilities P_n w_mn."""

    work: np.ndarray
    prob: np.ndarray
    mode: str = "exact_sum"

    def exp_average(self, beta: float) -> float:
        # shift by the minimum work to keep exponentials bounded
        w0 = float(np.min(self.work[self.prob > 0])) if np.any(self.prob > 0) else 0.0
        return float(np.exp(-beta * w0) * np.sum(self.prob * np.exp(-beta * (self.work - w0))))

    def mean(self) -> float:
        return float(np.sum(self.prob * self.work))

    def characteristic(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=complex))
        return np.exp(1j * np.outer(u, self.work)) @ self.prob

    @property
    def total(self) -> float:
        return float(np.sum(self.prob))


@dataclass(frozen=True)
class TPMSetup:
    space: FockSpace
    propagator: ProtocolPropagator
    initial: Eigensystem
    final: Eigensystem
    populations: np.ndarray
    transitions: np.ndarray  # w[m, n]


def tpm_setup(
    p: ThermalParams,
    protocol: DriveProtocol,
    space: Optional[FockSpace] = None,
    method: str = "auto",
    tail_tol: float = DEFAULT_TAIL_TOL,
    propagator: Optional[ProtocolPropagator] = None,
) -> TPMSetup:
    p.check_window()
    if space is None:
        space = protocol_space(p, protocol)
    if propagator is None:
        propagator = build_propagator(space, p, protocol, method)
    ini = initial_hamiltonian_eigensystem(space, p, protocol)
    fin = final_hamiltonian_eigensystem(space, p, protocol)
    pops = initial_populations(ini.energies, p.beta, tail_tol)
    w = transition_probabilities(propagator, ini.vectors, fin.vectors)
    return TPMSetup(space, propagator, ini, fin, pops, w)


def work_distribution(setup: TPMSetup) -> WorkDistribution:
    work = setup.final.energies[:, None] - setup.initial.energies[None, :]
    prob = setup.transitions * setup.populations[None, :]
    return WorkDistribution(work.ravel(), prob.ravel())


def _exact_sum(setup: TPMSetup, beta: float) -> float:
    # sum_n P_n sum_m w_mn exp(-beta (E_m - E_n)); split the exponent for range
    ef = np.exp(-beta * (setup.final.energies - setup.final.energies[0]))
    ei = np.exp(beta * (setup.initial.energies - setup.initial.energies[0]))
    inner = ef @ setup.transitions  # indexed by n
    shift = math.exp(-beta * (setup.final.energies[0] - setup.initial.energies[0]))
    return float(shift * np.sum(setup.populations * ei * inner))


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    n_shots: int
    seed: int


def monte_carlo_average(setup: TPMSetup, beta: float, seed: int, n_shots: int) -> MonteCarloEstimate:
    """Sample n ~ P_n then m ~ w[:, n] by inverse CDF and average exp(-beta dE).

    Shots are drawn in fixed-size blocks, each from its own generator seeded
    by (seed, block index), so results do not depend on how blocks are
    scheduled.
    """
    if n_shots < 2:
        raise ValueError(f"n_shots must be >= 2, got {n_shots}")
    cdf_n = np.cumsum(setup.populations)
    cdf_n /= cdf_n[-1]
    cdf_m = np.cumsum(setup.transitions, axis=0)
    cdf_m /= cdf_m[-1:, :]
    last = setup.space.dim - 1
    ef, ei = setup.final.energies, setup.initial.energies

    total = 0.0
    total_sq = 0.0
    n_blocks = -(-n_shots // MC_BLOCK)
    for b in range(n_blocks):
        size = min(MC_BLOCK, n_shots - b * MC_BLOCK)
        rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
        u = rng.random((2, size))
        n = np.minimum(np.searchsorted(cdf_n, u[0], side="right"), last)
        m = np.empty(size, dtype=int)
        for k in np.unique(n):
            sel = n == k
            m[sel] = np.searchsorted(cdf_m[:, k], u[1, sel], side="right")
        m = np.minimum(m, last)
        vals = np.exp(-beta * (ef[m] - ei[n]))
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals * vals))

    mean = total / n_shots
    var = max(total_sq / n_shots - mean * mean, 0.0) * n_shots / (n_shots - 1)
    return MonteCarloEstimate(mean, math.sqrt(var / n_shots), n_shots, seed)


def tpm_exponential_average(
    p: ThermalParams,
    protocol: DriveProtocol,
    mode: str = "exact_sum",
    seed: int = 0,
    n_shots: int = 0,
    space: Optional[FockSpace] = None,
    method: str = "auto",
    setup: Optional[TPMSetup] = None,
) -> float:
    """<exp(-beta dE)> over the two-point-measurement distribution."""
    if setup is None:
        setup = tpm_setup(p, protocol, space=space, method=method)
    if mode == "exact_sum":
        return _exact_sum(setup, p.beta)
    if mode == "monte_carlo":
        return monte_carlo_average(setup, p.beta, seed, n_shots).mean
    raise ValueError(f"unknown mode {mode!r}")


def characteristic_function_G(
    p: ThermalParams,
    protocol: DriveProtocol,
    u: complex,
    space: Optional[FockSpace] = None,
    method: str = "auto",
    setup: Optional[TPMSetup] = None,
) -> complex:
    """G(u) = Tr[U^dag e^{iuH_f} U e^{-iuH_0} rho_0] with rho_0 thermal in H_0.

    The exponentials are built from the eigensystems of H_0 and H_f.
    """
    if setup is None:
        setup = tpm_setup(p, protocol, space=space, method=method)
    u = complex(u)
    ini, fin = setup.initial, setup.final
    # rho_0 and e^{-iuH_0} share the initial eigenbasis
    b = p.beta
    log_pops = -b * (ini.energies - ini.energies[0])
    log_pops -= np.log(np.sum(np.exp(log_pops)))
    diag0 = np.exp(log_pops - 1j * u * (ini.energies - ini.energies[0]))
    ref = np.exp(1j * u * (fin.energies[0] - ini.energies[0]))
    ef = np.exp(1j * u * (fin.energies - fin.energies[0]))
    if not (np.all(np.isfinite(diag0)) and np.all(np.isfinite(ef))):
        raise TruncationError(f"e^(-iuH) overflows on the truncated space at u={u}")
    m0 = (ini.vectors * diag0) @ ini.vectors.conj().T
    mf = (fin.vectors * ef) @ fin.vectors.conj().T
    U = setup.propagator.matrix
    return complex(ref * np.trace(U.conj().T @ mf @ U @ m0))


@dataclass(frozen=True)
class JarzynskiReport:
    lhs: float
    rhs: float
    abs_dev: float
    rel_dev: float
    N: int


def jarzynski_check(
    p: ThermalParams,
    protocol: DriveProtocol,
    N: int = 1,
    space: Optional[FockSpace] = None,
    method: str = "auto",
    setup: Optional[TPMSetup] = None,
) -> JarzynskiReport:
    """Compare e^{-beta dF} with <e^{-beta dE}>, both raised to the N-th power."""
    if N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    lhs = math.exp(-p.beta * delta_F(p, protocol)) ** N
    rhs = tpm_exponential_average(p, protocol, space=space, method=method, setup=setup) ** N
    return JarzynskiReport(lhs, rhs, abs(rhs - lhs), abs(rhs - lhs) / abs(lhs), N)
