import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from berrysim.kernel import (
    RFControl, SpinSystem, basis_state, build_hamiltonian, hard_pulse,
    product_operator, slice_propagator, su2_propagator, transverse_signal,
)

from conftest import series_expm

finite = st.floats(-1e3, 1e3, allow_nan=False)
positive = st.floats(0, 1e3, allow_nan=False)


def _max_unitarity_error(u):
    return np.max(np.abs(u.conj().T @ u - np.eye(len(u))))


def test_zero_hamiltonian():
    h = build_hamiltonian(SpinSystem(0, 0), RFControl())
    assert np.all(h == 0)


def test_s1_gap_is_delta_plus_j():
    h = build_hamiltonian(SpinSystem(221.3, 209.2), RFControl())
    e = np.real(np.diag(h))
    # indices 2i + s; S = 1 manifold is |01>, |11>
    assert e[1] - e[3] == pytest.approx(2 * math.pi * 430.5, rel=1e-12)
    assert e[0] - e[2] == pytest.approx(2 * math.pi * 221.3, rel=1e-12)


def test_rf_phase_selects_y():
    h = build_hamiltonian(SpinSystem(0, 0), RFControl(100, math.pi / 2))
    np.testing.assert_allclose(h, 2 * math.pi * 100 * product_operator("Iy"), atol=1e-10)


def test_hamiltonian_block_diagonal_and_hermitian():
    h = build_hamiltonian(SpinSystem(221.3, 209.2, 37.0), RFControl(441.8, 1.1))
    assert np.max(np.abs(h - h.conj().T)) < 1e-12
    for a, b in [(0, 1), (0, 3), (2, 1), (2, 3)]:
        assert h[a, b] == 0 and h[b, a] == 0


def test_invalid_types():
    with pytest.raises(ValueError):
        SpinSystem(0, -1)
    with pytest.raises(ValueError):
        SpinSystem(float("nan"), 1)
    with pytest.raises(ValueError):
        RFControl(-1.0)


def test_su2_zero_field_is_identity():
    np.testing.assert_array_equal(su2_propagator([0, 0, 0], 3.7), np.eye(2))


def test_su2_pi_about_x():
    om = 1234.5
    u = su2_propagator([om, 0, 0], math.pi / om)
    np.testing.assert_allclose(u, -1j * np.array([[0, 1], [1, 0]]), atol=1e-12)


def test_su2_z_rotation_against_series():
    f = [0, 0, 2 * math.pi * 100]
    u = su2_propagator(f, 2.5e-3)
    np.testing.assert_allclose(u, np.diag([np.exp(-1j * math.pi / 4), np.exp(1j * math.pi / 4)]),
                               atol=1e-12)
    a = -0.5j * 2.5e-3 * f[2] * np.diag([1, -1])
    np.testing.assert_allclose(u, series_expm(a), atol=1e-9)


def test_slice_zero_is_identity():
    np.testing.assert_array_equal(slice_propagator(SpinSystem(0, 0), RFControl(), 1e-3),
                                  np.eye(4))


def test_slice_pure_offsets_diagonal():
    system = SpinSystem(221.3, 209.2)
    dt = 1e-4
    u = slice_propagator(system, RFControl(), dt)
    assert np.count_nonzero(u - np.diag(np.diag(u))) == 0
    for s, off in enumerate(system.offsets_hz):
        assert np.angle(u[s, s]) == pytest.approx(-math.pi * off * dt, abs=1e-12)
        assert np.angle(u[2 + s, 2 + s]) == pytest.approx(math.pi * off * dt, abs=1e-12)


def test_slice_negative_dt_rejected():
    with pytest.raises(ValueError):
        slice_propagator(SpinSystem(0, 0), RFControl(), -1.0)


def test_hard_pulse_identities():
    np.testing.assert_allclose(hard_pulse("I", 0, 37), np.eye(4), atol=1e-15)
    p = hard_pulse("I", 180, 90)
    np.testing.assert_allclose(p @ p, -np.eye(4), atol=1e-12)
    with pytest.raises(ValueError):
        hard_pulse("X", 90, 0)


def test_signal_normalisation():
    for k in (0, 1):
        psi = hard_pulse("I", 90, 90) @ basis_state(0, k)
        assert transverse_signal(psi, k) == pytest.approx(1 + 0j, abs=1e-15)
    assert transverse_signal(basis_state(0, 0), 0) == 0
    psi = np.kron(np.array([1, 1]) / math.sqrt(2), np.array([1, 0])).astype(complex)
    assert transverse_signal(psi, 0) == pytest.approx(1 + 0j, abs=1e-15)
    assert transverse_signal(psi, 1) == 0


def test_commutators():
    ops = {n: product_operator(n) for n in ("Ix", "Iy", "Iz", "Sx", "Sy", "Sz")}

    def comm(a, b):
        return ops[a] @ ops[b] - ops[b] @ ops[a]

    for sp in "IS":
        for a, b, c in [("x", "y", "z"), ("y", "z", "x"), ("z", "x", "y")]:
            assert np.max(np.abs(comm(sp + a, sp + b) - 1j * ops[sp + c])) < 1e-14
    for a in "xyz":
        for b in "xyz":
            assert np.max(np.abs(comm("I" + a, "S" + b))) < 1e-14


@settings(max_examples=200, deadline=None)
@given(finite, positive, finite, positive, st.floats(0, 2 * math.pi), st.floats(0, 1e-2))
def test_slice_unitary_and_block_diagonal(delta, j, ds, nu1, phase, dt):
    u = slice_propagator(SpinSystem(delta, j, ds), RFControl(nu1, phase), dt)
    assert _max_unitarity_error(u) < 1e-12
    for a, b in [(0, 1), (0, 3), (2, 1), (2, 3)]:
        assert abs(u[a, b]) < 1e-15 and abs(u[b, a]) < 1e-15


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=3, max_size=3), st.floats(0, 1e-2))
def test_su2_unitary(field, dt):
    assert _max_unitarity_error(su2_propagator(field, dt)) < 1e-12


def test_slice_matches_series_oracle_1000_inputs():
    rng = np.random.default_rng(1234)
    worst = 0.0
    for _ in range(1000):
        system = SpinSystem(rng.uniform(-500, 500), rng.uniform(0, 300), rng.uniform(-100, 100))
        rf = RFControl(rng.uniform(0, 800), rng.uniform(0, 2 * math.pi))
        h = build_hamiltonian(system, rf)
        norm = np.linalg.norm(h, 2)
        dt = rng.uniform(0, 1) / norm
        assert norm * dt <= 1
        u = slice_propagator(system, rf, dt)
        worst = max(worst, np.max(np.abs(u - series_expm(-1j * h * dt))))
    assert worst < 1e-9


def test_norm_preserved_over_many_slices():
    rng = np.random.default_rng(7)
    system = SpinSystem(221.3, 209.2, 15.0)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    psi /= np.linalg.norm(psi)
    for _ in range(10_000):
        u = slice_propagator(system, RFControl(rng.uniform(0, 800), rng.uniform(0, 6.3)),
                             rng.uniform(0, 1e-3))
        psi = u @ psi
        assert abs(np.linalg.norm(psi) - 1) < 1e-10
