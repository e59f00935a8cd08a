import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindrand.errors import CapacityError, PauliParseError
from lindrand.pauli import (
    PauliString,
    PauliSum,
    PhasedPauli,
    entrywise_conjugate,
    multiply,
    parse,
    to_matrix,
    transpose,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
LETTERS = {"I": np.eye(2), "X": X, "Y": Y, "Z": Z}


def dense(label):
    out = np.eye(1)
    for ch in label:
        out = np.kron(out, LETTERS[ch])
    return out


def pp(label, phase=0.0):
    return PhasedPauli.from_label(label, phase)


labels = st.integers(1, 3).flatmap(lambda n: st.text("IXYZ", min_size=n, max_size=n))
phases = st.floats(0, 2 * math.pi, allow_nan=False)


def same_n_triple():
    return st.integers(1, 3).flatmap(
        lambda n: st.tuples(*[st.tuples(st.text("IXYZ", min_size=n, max_size=n), phases) for _ in range(3)])
    )


@pytest.mark.parametrize(
    "a, b, want",
    [
        (pp("I"), pp("X"), pp("X")),
        (pp("X"), pp("Y"), pp("Z", math.pi / 2)),
        (pp("Y", math.pi), pp("Y"), pp("I", math.pi)),
    ],
)
def test_multiply_examples(a, b, want):
    assert multiply(a, b) == want
    assert a * b == want


def test_multiply_size_mismatch():
    with pytest.raises(ValueError):
        multiply(pp("X"), pp("XX"))


@pytest.mark.parametrize(
    "p, want",
    [
        (pp("X"), pp("X")),
        (pp("Y"), pp("Y", math.pi)),
        # conj(i Z(x)Y) = -i Z(x)(-Y) = i Z(x)Y
        (pp("ZY", math.pi / 2), pp("ZY", math.pi / 2)),
    ],
)
def test_entrywise_conjugate_examples(p, want):
    got = entrywise_conjugate(p)
    assert got == want
    np.testing.assert_allclose(got.to_matrix(), p.to_matrix().conj(), atol=1e-12)


@pytest.mark.parametrize(
    "p, want",
    [(pp("Z"), pp("Z")), (pp("Y"), pp("Y", math.pi)), (pp("XY"), pp("XY", math.pi))],
)
def test_transpose_examples(p, want):
    got = transpose(p)
    assert got == want
    np.testing.assert_allclose(got.to_matrix(), p.to_matrix().T, atol=1e-12)


def test_to_matrix_examples():
    np.testing.assert_array_equal(to_matrix(pp("I")), np.eye(2))
    np.testing.assert_array_equal(to_matrix(pp("Z")), np.diag([1, -1]))
    np.testing.assert_allclose(to_matrix(pp("X", math.pi / 2)), [[0, 1j], [1j, 0]], atol=1e-15)


def test_dense_limit():
    with pytest.raises(CapacityError):
        PauliString.from_label("X" * 7).to_matrix()


def test_parse_examples():
    c, p = parse("ZI", 0.5)
    assert c == 0.5 and p.z_bits == (1, 0) and p.x_bits == (0, 0)
    c, p = parse("XY", -0.5j)
    assert c == -0.5j and p.label == "XY"
    with pytest.raises(PauliParseError) as err:
        parse("Q", 1)
    assert err.value.position == 0
    with pytest.raises(PauliParseError) as err:
        parse("XQZ", 1)
    assert err.value.position == 1
    with pytest.raises(PauliParseError):
        parse("XX", 1, n=3)


def test_phase_is_canonical():
    assert pp("X", -math.pi / 2).phase == pytest.approx(3 * math.pi / 2)
    assert 0 <= pp("X", 9.0).phase < 2 * math.pi


def test_pauli_sum_merges_and_drops():
    s = PauliSum.from_list([("XZ", 1.0), ("ZZ", 0.5), ("XZ", -1.0), ("IZ", 2j)])
    assert [p.label for p in s.paulis] == ["ZZ", "IZ"]
    assert s.l1_norm == pytest.approx(2.5)
    assert PauliSum(2).l1_norm == 0
    np.testing.assert_allclose(s.to_matrix(), 0.5 * dense("ZZ") + 2j * dense("IZ"))


@given(labels)
def test_label_round_trip(label):
    p = PauliString.from_label(label)
    assert p.label == label
    assert PauliString.from_bits(p.x_bits, p.z_bits) == p
    np.testing.assert_array_equal(p.to_matrix(), dense(label))


@settings(max_examples=200)
@given(same_n_triple())
def test_group_law(triple):
    a, b, c = (pp(label, ph) for label, ph in triple)
    assert multiply(multiply(a, b), c) == multiply(a, multiply(b, c))
    np.testing.assert_allclose(multiply(a, b).to_matrix(), a.to_matrix() @ b.to_matrix(), atol=1e-12)


@given(labels, phases)
def test_involutions(label, phase):
    p = pp(label, phase)
    assert transpose(transpose(p)) == p
    assert entrywise_conjugate(entrywise_conjugate(p)) == p
    np.testing.assert_allclose(entrywise_conjugate(p).to_matrix(), p.to_matrix().conj(), atol=1e-12)


@given(labels)
def test_bare_strings_square_to_identity(label):
    p = pp(label)
    assert multiply(p, p) == pp("I" * len(label))
    # for bare strings, transpose equals the entrywise conjugate
    assert transpose(p) == entrywise_conjugate(p)
