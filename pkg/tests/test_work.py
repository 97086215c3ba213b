import math

import numpy as np
import pytest
import scipy.linalg

from cavjar.errors import ConvergenceError
from cavjar.fock import FockSpace
from cavjar.states import DriveProtocol, ThermalParams, delta_F
from cavjar.work import (
    ProtocolPropagator,
    build_propagator,
    characteristic_function_G,
    drive_hamiltonian,
    hamiltonian_eigensystem,
    jarzynski_check,
    magnus_propagator,
    monte_carlo_average,
    protocol_space,
    tpm_exponential_average,
    tpm_setup,
    transition_probabilities,
    trotter_propagator,
    work_distribution,
)

from .oracles import displaced_overlap_sq

P1 = ThermalParams(1.0)


@pytest.fixture(scope="module")
def quench_setup():
    return tpm_setup(P1, DriveProtocol.quench(1.0))


def test_eigensystem_undriven():
    es = hamiltonian_eigensystem(FockSpace(10), 2.0, 0.0)
    np.testing.assert_allclose(es.energies, 2.0 * (np.arange(10) + 0.5))
    np.testing.assert_array_equal(es.vectors, np.eye(10))


@pytest.mark.parametrize("omega0,lam", [(1.0, 1.0), (2.0, 0.6 - 0.8j)])
def test_eigensystem_matches_diagonalisation(omega0, lam):
    space = FockSpace(80)
    es = hamiltonian_eigensystem(space, omega0, lam)
    assert es.energies[0] == pytest.approx(omega0 / 2 - abs(lam) ** 2 / omega0, abs=1e-14)
    w = scipy.linalg.eigvalsh(drive_hamiltonian(space, omega0, lam))
    np.testing.assert_allclose(w[:40], es.energies[:40], atol=1e-8)
    h = drive_hamiltonian(space, omega0, lam)
    for j in range(5):
        v = es.vectors[:, j]
        assert np.linalg.norm(h @ v - es.energies[j] * v) <= 1e-8


def test_quench_propagator_is_identity():
    u = build_propagator(FockSpace(20), P1, DriveProtocol.quench(1.0))
    assert u.method == "exact_quench"
    np.testing.assert_array_equal(u.matrix, np.eye(20))
    assert u.unitarity_defect == 0.0


def test_propagator_rejects_non_unitary():
    with pytest.raises(ConvergenceError):
        ProtocolPropagator(2 * np.eye(3), "test")


def test_zero_drive_gives_free_evolution():
    space = FockSpace(30)
    prot = DriveProtocol.linear_ramp(0.0, 3.0)
    free = np.diag(np.exp(-1j * (np.arange(30) + 0.5) * 3.0))
    np.testing.assert_allclose(trotter_propagator(space, 1.0, prot, 50), free, atol=1e-13)
    np.testing.assert_allclose(magnus_propagator(space, 1.0, prot), free, atol=1e-13)


def test_trotter_matches_analytic_ramp():
    p = ThermalParams(1.0)
    prot = DriveProtocol.linear_ramp(0.5, 10.0)
    space = protocol_space(p, prot)
    u = build_propagator(space, p, prot, method="trotter")
    ref = magnus_propagator(space, 1.0, prot)
    k = space.dim // 2 + 1
    assert np.max(np.abs(u.matrix[:k, :k] - ref[:k, :k])) <= 1e-7
    assert u.unitarity_defect <= 1e-8
    assert u.n_steps >= 2000


def test_midpoint_scheme_converges_to_same_propagator():
    space = FockSpace(40)
    prot = DriveProtocol.linear_ramp(0.5, 2.0)
    mid = trotter_propagator(space, 1.0, prot, 4000, scheme="midpoint")
    cf4 = trotter_propagator(space, 1.0, prot, 200, scheme="cf4")
    assert np.max(np.abs(mid[:21, :21] - cf4[:21, :21])) <= 1e-6


def test_schedule_protocol_propagator():
    p = ThermalParams(1.0)
    prot = DriveProtocol.from_samples([0.0, 1.0, 2.0], [0.0, 0.8, 0.5])
    u = build_propagator(protocol_space(p, prot), p, prot, method="trotter")
    assert u.unitarity_defect <= 1e-8
    assert tpm_exponential_average(p, prot, setup=tpm_setup(p, prot, propagator=u)) == pytest.approx(
        math.exp(0.25), rel=1e-8
    )


def test_transition_identity():
    space = FockSpace(12)
    es = hamiltonian_eigensystem(space, 1.0, 0.0)
    u = ProtocolPropagator(np.eye(12, dtype=complex), "exact_quench")
    np.testing.assert_array_equal(transition_probabilities(u, es.vectors, es.vectors), np.eye(12))


def test_quench_transitions_match_laguerre_oracle():
    space = FockSpace(80)
    alpha = 1.0
    ini = hamiltonian_eigensystem(space, 1.0, 0.0)
    fin = hamiltonian_eigensystem(space, 1.0, alpha)
    u = ProtocolPropagator(np.eye(80, dtype=complex), "exact_quench")
    w = transition_probabilities(u, ini.vectors, fin.vectors)
    assert w[0, 0] == pytest.approx(math.exp(-1), abs=1e-14)
    for m in range(12):
        for n in range(12):
            assert w[m, n] == pytest.approx(displaced_overlap_sq(m, n, alpha), abs=1e-12)
    np.testing.assert_allclose(w[:, :41].sum(axis=0), 1.0, atol=1e-8)
    assert np.all(w >= 0)
    assert np.all(w.sum(axis=1) <= 1 + 1e-12)


def test_identity_protocol_average_is_one():
    prot = DriveProtocol.quench(0.7, lambda_initial=0.7)
    assert tpm_exponential_average(P1, prot) == pytest.approx(1.0, abs=1e-13)


def test_quench_exact_sum_e(quench_setup):
    assert tpm_exponential_average(P1, None, setup=quench_setup) == pytest.approx(math.e, rel=1e-6)


@pytest.mark.slow
def test_slow_ramp_exact_sum_e():
    prot = DriveProtocol.linear_ramp(1.0, 50.0)
    assert tpm_exponential_average(P1, prot) == pytest.approx(math.e, rel=1e-5)


def test_fast_ramp_exact_sum_e():
    prot = DriveProtocol.linear_ramp(1.0, 1.0)
    assert tpm_exponential_average(P1, prot) == pytest.approx(math.e, rel=1e-5)


@pytest.mark.parametrize("x,lam_i,lam_f,omega0", [(0.3, 0.0, 1.2, 1.0), (2.0, 0.5, -1.0j, 2.0), (1.0, 1.0, 0.0, 1.0)])
def test_jarzynski_general_quench(x, lam_i, lam_f, omega0):
    p = ThermalParams.from_beta_omega0(x, omega0)
    prot = DriveProtocol.quench(lam_f, lambda_initial=lam_i)
    target = math.exp(-p.beta * delta_F(p, prot))
    assert tpm_exponential_average(p, prot) == pytest.approx(target, rel=1e-8)


def test_monte_carlo_reproducible(quench_setup):
    a = monte_carlo_average(quench_setup, 1.0, seed=11, n_shots=200_000)
    b = monte_carlo_average(quench_setup, 1.0, seed=11, n_shots=200_000)
    c = monte_carlo_average(quench_setup, 1.0, seed=12, n_shots=200_000)
    assert a == b
    assert a.mean != c.mean
    assert abs(a.mean - math.e) <= 5 * a.stderr


def test_monte_carlo_block_prefix_is_stable(quench_setup):
    # the first block is identical regardless of the total shot count
    small = monte_carlo_average(quench_setup, 1.0, seed=3, n_shots=1 << 16)
    big = monte_carlo_average(quench_setup, 1.0, seed=3, n_shots=1 << 17)
    assert small.mean != big.mean
    assert monte_carlo_average(quench_setup, 1.0, seed=3, n_shots=1 << 16) == small


def test_monte_carlo_mode_dispatch(quench_setup):
    v = tpm_exponential_average(P1, None, mode="monte_carlo", seed=5, n_shots=50_000, setup=quench_setup)
    assert v == monte_carlo_average(quench_setup, 1.0, 5, 50_000).mean
    with pytest.raises(ValueError):
        tpm_exponential_average(P1, None, mode="other", setup=quench_setup)


@pytest.mark.parametrize("prot", [DriveProtocol.quench(1.0), DriveProtocol.linear_ramp(1.0, 1.0)], ids=["quench", "ramp"])
def test_jensen_bound(prot):
    dist = work_distribution(tpm_setup(P1, prot))
    assert dist.total == pytest.approx(1.0, abs=1e-10)
    assert dist.mean() >= delta_F(P1, prot) - 1e-12


def test_quench_mean_work():
    # sudden quench: <dE> = <H_f - H_0>_thermal = 0 since <a> = 0
    dist = work_distribution(tpm_setup(P1, DriveProtocol.quench(1.0)))
    assert dist.mean() == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("prot", [DriveProtocol.quench(1.0), DriveProtocol.linear_ramp(1.0, 1.0)], ids=["quench", "ramp"])
def test_exact_sum_truncation_invariance(prot):
    space = protocol_space(P1, prot)
    a = tpm_exponential_average(P1, prot, space=space)
    b = tpm_exponential_average(P1, prot, space=FockSpace(space.dim + 16))
    assert abs(a - b) <= 1e-8


def test_G_at_zero(quench_setup):
    assert characteristic_function_G(P1, None, 0.0, setup=quench_setup) == pytest.approx(1.0, abs=1e-13)


def test_G_real_axis_is_work_fourier_transform(quench_setup):
    dist = work_distribution(quench_setup)
    us = np.linspace(-3, 3, 16)
    got = np.array([characteristic_function_G(P1, None, u, setup=quench_setup) for u in us])
    np.testing.assert_allclose(got, dist.characteristic(us), atol=1e-8)


@pytest.mark.parametrize("x", [0.2, 1.0, 3.0])
@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_G_imaginary_beta_matches_exact_sum(x, alpha):
    p = ThermalParams(x)
    setup = tpm_setup(p, DriveProtocol.quench(alpha))
    g = characteristic_function_G(p, None, 1j * p.beta, setup=setup)
    avg = tpm_exponential_average(p, None, setup=setup)
    assert abs(g.imag) <= 1e-10
    assert g.real == pytest.approx(avg, rel=1e-6)
    assert avg == pytest.approx(math.exp(x * alpha**2), rel=1e-6)


def test_jarzynski_check_reports():
    r0 = jarzynski_check(P1, DriveProtocol.quench(0.0))
    assert r0.lhs == 1.0 and r0.rhs == pytest.approx(1.0, abs=1e-14)
    r1 = jarzynski_check(P1, DriveProtocol.quench(1.0))
    assert r1.rel_dev <= 1e-6
    r5 = jarzynski_check(P1, DriveProtocol.quench(1.0), N=5)
    assert r5.lhs == pytest.approx(math.exp(5), rel=1e-14)
    assert r5.rel_dev <= 5e-6
    with pytest.raises(ValueError):
        jarzynski_check(P1, DriveProtocol.quench(1.0), N=0)
