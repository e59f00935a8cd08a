"""n-qubit Pauli strings in symplectic form with exact phase tracking.

A Pauli string is stored as two integer bit masks ``x`` and ``z``. Qubit ``q``
(the ``q``-th character of a big-endian label) lives at bit ``n - 1 - q``, so
the mask value doubles as a row index into the Kronecker-ordered matrix.

The letter for a qubit is decoded from its ``(x, z)`` pair as

    (0, 0) -> I,  (1, 0) -> X,  (1, 1) -> Y,  (0, 1) -> Z

and the string equals ``i**w X^x Z^z`` with ``w = popcount(x & z)`` (one factor
of ``i`` per ``Y``). Products of strings therefore only ever produce powers of
``i``, which :class:`PhasedPauli` tracks exactly as a quarter-turn integer next
to a free floating-point angle for the arbitrary coefficient phases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import CapacityError, PauliParseError

DENSE_LIMIT = 6
"""Largest qubit count for which dense matrices are built."""

TWO_PI = 2.0 * math.pi

_DECODE = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_ENCODE = {v: k for k, v in _DECODE.items()}


def popcount(v):
    """Bit count of an int or integer array."""
    if isinstance(v, (np.ndarray, np.integer)):
        return np.bitwise_count(v).astype(np.int64)
    return int(v).bit_count()


def product_bits(x1, z1, x2, z2):
    """Multiply bare Pauli strings given as masks.

    Works elementwise on integer arrays as well as on plain ints.

    Returns:
        ``(x, z, quarter)`` such that ``P1 @ P2 == i**quarter * P(x, z)``.
    """
    x = x1 ^ x2
    z = z1 ^ z2
    quarter = popcount(x1 & z1) + popcount(x2 & z2) - popcount(x & z) + 2 * popcount(z1 & x2)
    return x, z, quarter % 4


def check_dense(n: int) -> None:
    if n > DENSE_LIMIT:
        raise CapacityError(f"n={n} exceeds the dense limit of {DENSE_LIMIT} qubits")


def pauli_matrices(x, z, n: int) -> np.ndarray:
    """Dense matrices for a batch of bare Pauli strings.

    Args:
        x, z: integer masks of equal shape ``(N,)``.
        n: qubit count.

    Returns:
        Array of shape ``(N, 2**n, 2**n)``.
    """
    check_dense(n)
    x = np.asarray(x, dtype=np.int64).reshape(-1)
    z = np.asarray(z, dtype=np.int64).reshape(-1)
    dim = 1 << n
    cols = np.arange(dim, dtype=np.int64)
    # P|b> = i^w (-1)^{b.z} |b ^ x>
    signs = 1 - 2 * (popcount(cols[None, :] & z[:, None]) & 1)
    vals = (1j ** (popcount(x & z) % 4))[:, None] * signs
    out = np.zeros((x.size, dim, dim), dtype=complex)
    rows = cols[None, :] ^ x[:, None]
    out[np.arange(x.size)[:, None], rows, cols[None, :]] = vals
    return out


@dataclass(frozen=True)
class PauliString:
    """A bare n-qubit Pauli string (Hermitian, unitary)."""

    n: int
    x: int = 0
    z: int = 0

    def __post_init__(self):
        mask = (1 << self.n) - 1
        if self.n < 0 or self.x & ~mask or self.z & ~mask:
            raise ValueError(f"bit masks do not fit in n={self.n} qubits")

    @classmethod
    def identity(cls, n: int) -> PauliString:
        return cls(n, 0, 0)

    @classmethod
    def from_label(cls, label: str) -> PauliString:
        x = z = 0
        for pos, ch in enumerate(label):
            try:
                bx, bz = _ENCODE[ch]
            except KeyError:
                raise PauliParseError(
                    f"invalid Pauli character {ch!r} at index {pos} in {label!r}", pos
                ) from None
            x = (x << 1) | bx
            z = (z << 1) | bz
        return cls(len(label), x, z)

    @classmethod
    def from_bits(cls, x_bits: Iterable[int], z_bits: Iterable[int]) -> PauliString:
        x_bits, z_bits = tuple(x_bits), tuple(z_bits)
        if len(x_bits) != len(z_bits):
            raise ValueError("x_bits and z_bits must have equal length")
        x = z = 0
        for bx, bz in zip(x_bits, z_bits):
            x = (x << 1) | (bx & 1)
            z = (z << 1) | (bz & 1)
        return cls(len(x_bits), x, z)

    @property
    def x_bits(self) -> tuple[int, ...]:
        return tuple((self.x >> (self.n - 1 - q)) & 1 for q in range(self.n))

    @property
    def z_bits(self) -> tuple[int, ...]:
        return tuple((self.z >> (self.n - 1 - q)) & 1 for q in range(self.n))

    @property
    def label(self) -> str:
        return "".join(_DECODE[b] for b in zip(self.x_bits, self.z_bits))

    @property
    def num_y(self) -> int:
        return popcount(self.x & self.z)

    @property
    def weight(self) -> int:
        return popcount(self.x | self.z)

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def to_matrix(self) -> np.ndarray:
        return pauli_matrices([self.x], [self.z], self.n)[0]

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True, eq=False)
class PhasedPauli:
    """A Pauli string times a unit complex number ``exp(i * phase)``.

    The phase is held as ``quarter * pi/2 + angle``; Pauli products only touch
    ``quarter`` so they introduce no rounding.
    """

    pauli: PauliString
    quarter: int = 0
    angle: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "quarter", int(self.quarter) % 4)
        object.__setattr__(self, "angle", float(self.angle) % TWO_PI)

    @classmethod
    def from_label(cls, label: str, phase: float = 0.0) -> PhasedPauli:
        return cls(PauliString.from_label(label), 0, phase)

    @property
    def n(self) -> int:
        return self.pauli.n

    @property
    def phase(self) -> float:
        """The total phase, canonicalized to ``[0, 2*pi)``."""
        return (self.angle + self.quarter * math.pi / 2) % TWO_PI

    @property
    def unit(self) -> complex:
        return 1j**self.quarter * complex(math.cos(self.angle), math.sin(self.angle))

    def to_matrix(self) -> np.ndarray:
        return self.unit * self.pauli.to_matrix()

    def __mul__(self, other: PhasedPauli) -> PhasedPauli:
        return multiply(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PhasedPauli):
            return NotImplemented
        if self.pauli != other.pauli:
            return False
        diff = (self.phase - other.phase) % TWO_PI
        return min(diff, TWO_PI - diff) < 1e-12

    def __hash__(self) -> int:
        return hash(self.pauli)

    def __repr__(self) -> str:
        return f"PhasedPauli({self.pauli.label!r}, phase={self.phase:.12g})"


def multiply(a: PhasedPauli, b: PhasedPauli) -> PhasedPauli:
    """Group product ``a @ b`` with the phase tracked exactly."""
    if a.n != b.n:
        raise ValueError(f"qubit count mismatch: {a.n} vs {b.n}")
    x, z, q = product_bits(a.pauli.x, a.pauli.z, b.pauli.x, b.pauli.z)
    return PhasedPauli(PauliString(a.n, x, z), a.quarter + b.quarter + q, a.angle + b.angle)


def entrywise_conjugate(p: PhasedPauli) -> PhasedPauli:
    """The phased Pauli whose matrix is the complex conjugate of ``p``'s."""
    return PhasedPauli(p.pauli, -p.quarter + 2 * p.pauli.num_y, -p.angle)


def transpose(p: PhasedPauli) -> PhasedPauli:
    """The phased Pauli whose matrix is the transpose of ``p``'s."""
    return PhasedPauli(p.pauli, p.quarter + 2 * p.pauli.num_y, p.angle)


def to_matrix(p: PhasedPauli | PauliString) -> np.ndarray:
    return p.to_matrix()


def parse(label: str, coeff: complex = 1.0, n: int | None = None) -> tuple[complex, PauliString]:
    """Parse a single ``(label, coeff)`` term.

    Raises:
        PauliParseError: on a bad character (with its index) or when ``n`` is
            given and the label length differs.
    """
    if not isinstance(label, str) or not label:
        raise PauliParseError(f"Pauli label must be a non-empty string, got {label!r}")
    p = PauliString.from_label(label)
    if n is not None and p.n != n:
        raise PauliParseError(f"label {label!r} has length {p.n}, expected {n}")
    return complex(coeff), p


@dataclass(frozen=True)
class PauliSum:
    """A linear combination of distinct Pauli strings on a common qubit count.

    Duplicate strings are merged on construction (keeping first-occurrence
    order) and terms whose merged coefficient is exactly zero are dropped.
    """

    n: int
    terms: tuple[tuple[complex, PauliString], ...] = field(default=())

    def __post_init__(self):
        merged: dict[PauliString, complex] = {}
        for coeff, p in self.terms:
            if p.n != self.n:
                raise PauliParseError(f"term {p.label!r} has length {p.n}, expected {self.n}")
            merged[p] = merged.get(p, 0j) + complex(coeff)
        object.__setattr__(
            self, "terms", tuple((c, p) for p, c in merged.items() if c != 0)
        )

    @classmethod
    def from_list(cls, items: Iterable[tuple[str, complex]], n: int | None = None) -> PauliSum:
        items = list(items)
        if n is None:
            if not items:
                raise ValueError("n is required for an empty PauliSum")
            n = len(items[0][0])
        return cls(n, tuple(parse(label, coeff, n) for label, coeff in items))

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self) -> Iterator[tuple[complex, PauliString]]:
        return iter(self.terms)

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms], dtype=complex)

    @property
    def paulis(self) -> tuple[PauliString, ...]:
        return tuple(p for _, p in self.terms)

    @property
    def l1_norm(self) -> float:
        return float(np.abs(self.coeffs).sum()) if self.terms else 0.0

    def to_list(self) -> list[tuple[str, complex]]:
        return [(p.label, c) for c, p in self.terms]

    def to_matrix(self) -> np.ndarray:
        check_dense(self.n)
        dim = 1 << self.n
        if not self.terms:
            return np.zeros((dim, dim), dtype=complex)
        mats = pauli_matrices([p.x for p in self.paulis], [p.z for p in self.paulis], self.n)
        return np.tensordot(self.coeffs, mats, axes=1)
