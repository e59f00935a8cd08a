import numpy as np
import pytest

from lindrand.model import random_model, two_level_atom


@pytest.fixture
def atom():
    return two_level_atom()


@pytest.fixture(params=[11, 12, 13])
def random_2q(request):
    return random_model(2, np.random.default_rng(request.param), n_hamiltonian=3, n_jumps=2, jump_terms=3)


@pytest.fixture
def ket0():
    return np.diag([1.0, 0.0]).astype(complex)


def random_density(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_hermitian(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (a + a.conj().T) / 2
