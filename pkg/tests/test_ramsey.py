import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavjar.errors import FitError
from cavjar.fock import FieldState, FockSpace
from cavjar.ramsey import (
    E,
    F,
    G,
    AtomState,
    DispersiveCoupling,
    InteractionConfig,
    dispersive_hamiltonian,
    evolve_joint,
    interferometer_scan,
    prepared_atom,
    reduced_atom,
    uniform_phase_grid,
    visibility_characteristic,
    visibility_displaced_closed_form,
    visibility_from_atom,
    visibility_thermal_closed_form,
)
from cavjar.states import ThermalParams, displaced_thermal_state, state_space, thermal_state

PI = math.pi


def _vacuum(dim=12):
    m = np.zeros((dim, dim))
    m[0, 0] = 1
    return FieldState(FockSpace(dim), m)


def _thermal(x, alpha=0.0):
    p = ThermalParams(x)
    s = state_space(p, alpha)
    return displaced_thermal_state(s, p, alpha) if alpha else thermal_state(s, p)


def _cfg(omega_dt, omega=1.0, n_phi=None):
    return InteractionConfig.from_phase(omega_dt, omega=omega, phi_points=n_phi)


def test_atom_state_constraints():
    at = AtomState.from_gfx(0.3, 0.7, 0.2 + 0.3j)
    assert at.g_pop == 0.3 and at.f_pop == 0.7 and at.e_pop == 0
    assert at.coherence_gf == 0.2 + 0.3j
    with pytest.raises(ValueError):
        AtomState.from_gfx(0.3, 0.6, 0.0)
    with pytest.raises(ValueError):
        AtomState.from_gfx(0.5, 0.5, 0.6)


def test_prepared_atom_is_optimal():
    at = prepared_atom()
    assert at.coherence_gf == pytest.approx(0.5)
    assert visibility_from_atom(at) == pytest.approx(1.0)


def test_dispersive_coupling_from_rabi():
    c = DispersiveCoupling(rabi_vacuum=2.0, detuning=50.0)
    assert c.omega == pytest.approx(4.0 / 200.0, rel=1e-12)
    with pytest.warns(UserWarning):
        DispersiveCoupling(rabi_vacuum=2.0, detuning=5.0)
    with pytest.raises(ValueError):
        DispersiveCoupling(omega=1.0, rabi_vacuum=2.0, detuning=50.0)
    with pytest.raises(ValueError):
        DispersiveCoupling(omega=-1.0)


def test_dispersive_hamiltonian_elements():
    dim = 6
    h = dispersive_hamiltonian(FockSpace(dim), DispersiveCoupling(omega=0.3))
    assert np.count_nonzero(h - np.diag(h.diagonal())) == 0
    for n in range(dim):
        assert h[G * dim + n, G * dim + n] == pytest.approx(-0.3 * n)
        assert h[F * dim + n, F * dim + n] == 0
        assert h[E * dim + n, E * dim + n] == pytest.approx(0.3 * n)


def test_evolve_joint_zero_time():
    field = _thermal(1.0)
    atom = prepared_atom()
    joint = evolve_joint(field, atom, InteractionConfig(DispersiveCoupling(omega=1.0), 0.0))
    np.testing.assert_array_equal(joint, np.kron(atom.matrix, field.matrix))
    red = reduced_atom(joint)
    np.testing.assert_allclose(red.matrix, atom.matrix, atol=1e-15)


def test_evolve_joint_vacuum_unchanged():
    field = _vacuum()
    atom = prepared_atom()
    joint = evolve_joint(field, atom, _cfg(1.234))
    np.testing.assert_allclose(joint, np.kron(atom.matrix, field.matrix), atol=1e-15)


def test_evolve_joint_preserves_trace_and_purity():
    field = _thermal(0.5, 1.0)
    atom = prepared_atom()
    rho0 = np.kron(atom.matrix, field.matrix)
    joint = evolve_joint(field, atom, _cfg(2.1))
    assert abs(np.trace(joint) - 1) <= 1e-12
    p0 = np.real(np.trace(rho0 @ rho0))
    assert abs(np.real(np.trace(joint @ joint)) - p0) <= 1e-10


@pytest.mark.parametrize("omega_dt", [0.3, PI / 2, PI, 5.0])
def test_reduced_atom_structure(omega_dt):
    field = _thermal(0.8, 0.7)
    atom = AtomState.from_gfx(0.4, 0.6, 0.3 - 0.2j)
    red = reduced_atom(evolve_joint(field, atom, _cfg(omega_dt)))
    assert red.g_pop == pytest.approx(0.4, abs=1e-13)
    assert red.f_pop == pytest.approx(0.6, abs=1e-13)
    assert red.e_pop == pytest.approx(0.0, abs=1e-15)
    pops = field.populations
    expected = (0.3 - 0.2j) * sum(pops[n] * np.exp(1j * n * omega_dt) for n in range(len(pops)))
    assert red.coherence_gf == pytest.approx(expected, abs=1e-13)
    assert abs(red.coherence_gf) <= abs(0.3 - 0.2j) + 1e-15


def test_visibility_from_atom_values():
    assert visibility_from_atom(AtomState.from_gfx(0.5, 0.5, 0.0)) == 0.0
    field = _thermal(1.3)
    red = reduced_atom(evolve_joint(field, prepared_atom(), _cfg(PI)))
    assert visibility_from_atom(red) == pytest.approx(math.tanh(0.65), abs=1e-12)


def test_visibility_characteristic_zero_time():
    for field in (_vacuum(), _thermal(0.3), _thermal(1.0, 2.0)):
        assert visibility_characteristic(field, _cfg(0.0)) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("x", [0.1, 0.5, 1, 2, 5])
@pytest.mark.parametrize("omega_dt", [0, PI / 4, PI / 2, PI])
def test_visibility_characteristic_thermal_closed_form(x, omega_dt):
    v = visibility_characteristic(_thermal(x), _cfg(omega_dt))
    assert v == pytest.approx(visibility_thermal_closed_form(ThermalParams(x), omega_dt), abs=1e-10)


@pytest.mark.parametrize("x", [0.2, 1, 3])
@pytest.mark.parametrize("alpha", [0.5, 1, 2])
@pytest.mark.parametrize("omega_dt", [PI / 3, PI / 2, PI])
def test_visibility_displaced_matches_characteristic(x, alpha, omega_dt):
    v = visibility_characteristic(_thermal(x, alpha), _cfg(omega_dt))
    assert v == pytest.approx(visibility_displaced_closed_form(ThermalParams(x), alpha, omega_dt), abs=1e-8)


def test_pipeline_matches_characteristic():
    for field in (_thermal(0.5), _thermal(1.0, 1.0), _thermal(2.0, 0.5)):
        for omega_dt in (0.4, PI / 2, 2.5):
            red = reduced_atom(evolve_joint(field, prepared_atom(), _cfg(omega_dt)))
            assert visibility_from_atom(red) == pytest.approx(
                visibility_characteristic(field, _cfg(omega_dt)), abs=1e-10
            )


def test_closed_form_values():
    p = ThermalParams(1.7)
    assert visibility_thermal_closed_form(p, 0.0) == 1.0
    assert visibility_thermal_closed_form(p, PI) == pytest.approx(math.tanh(0.85), rel=1e-14)
    small = visibility_thermal_closed_form(ThermalParams(0.1), PI)
    assert abs(small / 0.05 - 1) <= 0.05
    assert visibility_displaced_closed_form(p, 0, 1.1) == visibility_thermal_closed_form(p, 1.1)
    assert visibility_displaced_closed_form(p, 1.3, PI) == pytest.approx(
        math.tanh(0.85) * math.exp(-2 * 1.69 * math.tanh(0.85)), rel=1e-13
    )


@settings(max_examples=60, deadline=None)
@given(
    x=st.floats(0.01, 30),
    a1=st.floats(0, 3),
    da=st.floats(0, 2),
    odt=st.floats(0.05, 2 * PI - 0.05),
    k=st.integers(-3, 3),
)
def test_closed_form_properties(x, a1, da, odt, k):
    p = ThermalParams(x)
    v1 = visibility_displaced_closed_form(p, a1, odt)
    v2 = visibility_displaced_closed_form(p, a1 + da, odt)
    assert 0 <= v2 <= v1 <= 1
    assert visibility_displaced_closed_form(p, a1, odt + 2 * PI * k) == pytest.approx(v1, rel=1e-9, abs=1e-300)


def test_vacuum_fringes_two_beam():
    rec = interferometer_scan(_vacuum(), _cfg(1.0, n_phi=16))
    np.testing.assert_allclose(rec.p_f, (1 + np.cos(uniform_phase_grid(16))) / 2, atol=1e-12)
    assert rec.visibility == pytest.approx(1.0, abs=1e-12)


def test_thermal_fringe_visibility_tanh():
    rec = interferometer_scan(_thermal(1.0), _cfg(PI, n_phi=16))
    assert rec.visibility == pytest.approx(math.tanh(0.5), abs=1e-8)


@pytest.mark.parametrize("x,alpha,odt", [(0.3, 0.0, 1.0), (1.0, 1.0, PI / 2), (2.0, 2.0, 2.0), (0.5, 0.5, PI)])
def test_fringe_fit_matches_characteristic(x, alpha, odt):
    field = _thermal(x, alpha)
    rec = interferometer_scan(field, _cfg(odt, n_phi=9))
    assert rec.visibility == pytest.approx(visibility_characteristic(field, _cfg(odt)), abs=1e-8)


def test_fringe_fit_nonuniform_grid():
    field = _thermal(1.0, 0.5)
    grid = np.sort(np.random.default_rng(0).uniform(0, 2 * PI, 11))
    cfg = InteractionConfig(DispersiveCoupling(omega=1.0), PI / 2, grid)
    rec = interferometer_scan(field, cfg)
    assert rec.visibility == pytest.approx(visibility_characteristic(field, cfg), abs=1e-10)


def test_interferometer_scan_needs_phase_grid():
    with pytest.raises(ValueError):
        interferometer_scan(_vacuum(), _cfg(1.0, n_phi=4))
    with pytest.raises(ValueError):
        interferometer_scan(_vacuum(), _cfg(1.0))


def test_flat_fringes_without_coherence_are_fine():
    atom = AtomState.from_gfx(0.5, 0.5, 0.0)
    rec = interferometer_scan(_vacuum(), _cfg(1.0, n_phi=8), atom=atom)
    assert rec.visibility == pytest.approx(0.0, abs=1e-15)


def test_fit_error_guard(monkeypatch):
    import cavjar.ramsey as ramsey

    monkeypatch.setattr(ramsey, "phase_shift", lambda phi: np.eye(3))
    with pytest.raises(FitError):
        interferometer_scan(_vacuum(), _cfg(1.0, n_phi=8))


def test_coupling_scale_only_enters_through_product():
    field = _thermal(0.9, 0.8)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        v1 = visibility_characteristic(field, _cfg(1.3, omega=1.0))
        v2 = visibility_characteristic(field, _cfg(1.3, omega=0.01))
    assert v1 == pytest.approx(v2, abs=1e-14)
