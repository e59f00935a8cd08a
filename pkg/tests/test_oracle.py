import math

import numpy as np
import pytest

from lindrand.errors import StateError
from lindrand.model import from_terms, random_model, transfer_matrix, two_level_atom
from lindrand.oracle import (
    exact_evolve,
    exact_expectation,
    is_cptp,
    lindblad_rhs,
    matrix_exponential,
    propagator,
    rk4_evolve,
    trace_norm,
)

from conftest import random_density, random_hermitian


def taylor_exp(a, terms=100):
    # scale so the series converges quickly, then square back
    s = max(0, math.ceil(math.log2(max(np.linalg.norm(a, 1), 1))))
    b = a / 2**s
    out = term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ b / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def test_matrix_exponential_examples():
    np.testing.assert_array_equal(matrix_exponential(np.zeros((3, 3))), np.eye(3))
    np.testing.assert_allclose(matrix_exponential(np.diag([1.0, -2.0])), np.diag([math.e, math.exp(-2)]))
    rng = np.random.default_rng(0)
    h = random_hermitian(4, rng)
    u = matrix_exponential(1j * h)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(4), atol=1e-10)
    for _ in range(3):
        a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
        assert np.linalg.norm(matrix_exponential(a) - taylor_exp(a)) <= 1e-9 * np.linalg.norm(taylor_exp(a))
    with pytest.raises(ValueError):
        matrix_exponential(np.array([[np.nan]]))


def test_zero_time(atom, ket0):
    np.testing.assert_allclose(exact_evolve(atom, ket0, 0.0), ket0)
    assert exact_expectation(atom, ket0, ket0, 0.0) == 1


def test_closed_system_rotation():
    m = from_terms([("Z", 1.0)], n=1)
    plus = np.full((2, 2), 0.5, dtype=complex)
    t = math.pi / 4
    u = np.diag(np.exp([-1j * t, 1j * t]))
    np.testing.assert_allclose(exact_evolve(m, plus, t), u @ plus @ u.conj().T, atol=1e-12)


def test_rk4_cross_check(atom, ket0):
    np.testing.assert_allclose(rk4_evolve(atom, ket0, 5.0, 1e-4), exact_evolve(atom, ket0, 5.0), atol=1e-6)


def test_identity_observable(atom, ket0):
    for t in (0.3, 2.0):
        assert exact_expectation(atom, ket0, np.eye(2), t) == pytest.approx(1, abs=1e-12)


def test_pure_decay(ket0):
    m = two_level_atom(delta=0, omega=0, gamma=1)
    for t in (0.5, 2.0, 8.0):
        assert exact_expectation(m, ket0, ket0, t) == pytest.approx(math.exp(-t), abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_propagator_properties(seed):
    m = random_model(2, np.random.default_rng(seed))
    p1, p2, p12 = propagator(m, 0.3), propagator(m, 0.5), propagator(m, 0.8)
    np.testing.assert_allclose(p2.exp_tg @ p1.exp_tg, p12.exp_tg, atol=1e-9)
    assert p12.trace_defect() < 1e-9
    assert is_cptp(p12.exp_tg)


def test_non_cptp_detected():
    g = transfer_matrix(from_terms([("Z", 1.0)], n=1))
    assert not is_cptp(np.eye(4) + 0.1 * g @ g + np.diag([0.1, 0, 0, 0]))


@pytest.mark.parametrize("seed", range(5))
def test_generator_one_to_one_bound(seed):
    rng = np.random.default_rng(seed)
    m = random_model(2, rng)
    a = random_hermitian(4, rng)
    assert trace_norm(lindblad_rhs(m, a)) <= m.pauli_norm * trace_norm(a) + 1e-10


def test_state_validation(atom):
    with pytest.raises(StateError):
        exact_evolve(atom, 0.9 * np.diag([1.0, 0.0]), 1.0)
    with pytest.raises(StateError):
        exact_evolve(atom, np.array([[0.5, 0.5], [0.0, 0.5]]), 1.0)
    with pytest.raises(StateError):
        exact_expectation(atom, random_density(2, np.random.default_rng(0)), np.array([[0, 1], [0, 0]]), 1.0)
