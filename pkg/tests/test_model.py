import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindrand.errors import ModelError
from lindrand.model import (
    alpha,
    from_terms,
    load_model,
    model_to_dict,
    pauli_norm,
    random_model,
    tau,
    transfer_matrix,
    two_level_atom,
)
from lindrand.vectorize import unvec, vec, vec_identity

from conftest import random_density

ATOM_DOC = {
    "n": 1,
    "hamiltonian": [{"pauli": "Z", "coeff": -0.5}, {"pauli": "X", "coeff": -0.5}],
    "jumps": [[{"pauli": "X", "coeff": [0.5, 0.0]}, {"pauli": "Y", "coeff": [0.0, -0.5]}]],
}


def test_atom_scalars(atom):
    assert atom.alpha0 == 1.0
    assert atom.jump_alphas.tolist() == [1.0]
    assert pauli_norm(atom) == 4.0
    assert alpha(atom) == 3.0
    assert atom.K == 1 and atom.M == 2
    np.testing.assert_allclose(atom.jumps[0].probs, [0.5, 0.5])
    np.testing.assert_allclose(atom.jumps[0].phases, [0, 3 * math.pi / 2])


def test_atom_jump_is_lowering(atom):
    # L maps |0> to |1> and annihilates |1>
    np.testing.assert_allclose(atom.jump_matrices()[0], [[0, 0], [1, 0]], atol=1e-15)


def test_load_model_document(tmp_path):
    path = tmp_path / "atom.json"
    path.write_text(json.dumps(ATOM_DOC))
    m = load_model(path)
    assert pauli_norm(m) == 4.0
    np.testing.assert_allclose(transfer_matrix(m), transfer_matrix(two_level_atom()))
    assert pauli_norm(load_model(model_to_dict(m))) == 4.0


def test_closed_and_jump_only_models():
    closed = load_model({"n": 1, "hamiltonian": [{"pauli": "Z", "coeff": 1.0}], "jumps": []})
    assert pauli_norm(closed) == 2.0 and alpha(closed) == 2.0
    jump_only = from_terms([], [[("X", 1.0)]], n=1)
    assert alpha(jump_only) == 1.0


@pytest.mark.parametrize(
    "doc, message",
    [
        ({**ATOM_DOC, "hamiltonian": [{"pauli": "Z", "coeff": [0.5, 0.1]}]}, "Hamiltonian coefficients must be real"),
        ({**ATOM_DOC, "jumps": [[{"pauli": "X", "coeff": 0.0}]]}, "zero norm"),
        ({**ATOM_DOC, "hamiltonian": [{"pauli": "ZZ", "coeff": 1.0}]}, "mixed label lengths"),
        ({**ATOM_DOC, "extra": 1}, "unknown field"),
        ({**ATOM_DOC, "hamiltonian": [{"pauli": "Z", "coeff": 1.0, "w": 2}]}, "unknown field"),
        ({**ATOM_DOC, "hamiltonian": [{"pauli": "Q", "coeff": 1.0}]}, "invalid Pauli character"),
        ({"hamiltonian": []}, "missing field 'n'"),
    ],
)
def test_load_model_rejects(doc, message):
    with pytest.raises(ModelError, match=message):
        load_model(doc)


def test_load_model_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ModelError):
        load_model(path)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10))
def test_scaling_homogeneity(seed, s):
    m = random_model(2, np.random.default_rng(seed))
    assert pauli_norm(m.scaled(s)) == pytest.approx(s * pauli_norm(m))
    np.testing.assert_allclose(transfer_matrix(m.scaled(s)), s * transfer_matrix(m), atol=1e-10)


def test_tau_examples(atom):
    assert tau(atom, 0.0, 3, 2) == 0
    assert tau(atom, 1.0, 4, 0) == pytest.approx(0.75)
    assert tau(atom, 1.0, 4, 1) == pytest.approx(0.25)


def test_transfer_matrix_examples():
    empty = from_terms([], [], n=1)
    np.testing.assert_array_equal(transfer_matrix(empty), np.zeros((4, 4)))
    z = np.diag([1.0, -1.0])
    closed = from_terms([("Z", 1.0)], n=1)
    np.testing.assert_allclose(transfer_matrix(closed), -1j * np.kron(np.eye(2), z) + 1j * np.kron(z.T, np.eye(2)))


def test_transfer_matrix_matches_euler(atom, ket0):
    # forward Euler on the master equation in matrix form, step 1e-5
    h = atom.hamiltonian_matrix()
    (lk,) = atom.jump_matrices()
    ld = lk.conj().T
    rho, dt, steps = ket0.copy(), 1e-5, 20000
    for _ in range(steps):
        rho = rho + dt * (-1j * (h @ rho - rho @ h) + lk @ rho @ ld - 0.5 * (ld @ lk @ rho + rho @ ld @ lk))
    from scipy.linalg import expm

    want = unvec(expm(0.2 * transfer_matrix(atom)) @ vec(ket0))
    np.testing.assert_allclose(rho, want, atol=1e-5)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_generator_annihilates_trace(seed, n):
    m = random_model(n, np.random.default_rng(seed))
    assert np.abs(vec_identity(1 << n) @ transfer_matrix(m)).max() < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pauli_norm_bounds_one_to_one_norm(seed):
    rng = np.random.default_rng(seed)
    m = random_model(2, rng)
    rho = random_density(4, rng)
    out = unvec(transfer_matrix(m) @ vec(rho))
    assert np.linalg.svd(out, compute_uv=False).sum() <= pauli_norm(m) * 1.0 + 1e-12
