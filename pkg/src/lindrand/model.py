"""Lindblad models given as Pauli sums, their derived scalars and generator.

The Hamiltonian is ``H = sum_j a_0j P_0j`` with real coefficients and each jump
operator is ``L_k = sum_j a_kj P_kj`` with complex coefficients. Every scalar the
samplers need (norms, term probabilities and phases) is computed eagerly when
the model is built.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from os import PathLike
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ModelError, PauliParseError
from .pauli import PauliSum, check_dense, parse

_DOC_FIELDS = {"n", "hamiltonian", "jumps"}
_TERM_FIELDS = {"pauli", "coeff"}


def _frozen(a) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TermTable:
    """Flat arrays describing one Pauli sum for fast sampling.

    ``probs[j] = |a_j| / norm`` and ``phases[j] = arg(a_j)``.
    """

    x: np.ndarray
    z: np.ndarray
    probs: np.ndarray
    phases: np.ndarray
    norm: float

    @classmethod
    def from_sum(cls, ps: PauliSum) -> TermTable:
        coeffs = ps.coeffs
        mags = np.abs(coeffs)
        norm = float(mags.sum())
        probs = mags / norm if norm > 0 else mags
        return cls(
            x=_frozen([p.x for p in ps.paulis]).astype(np.int64),
            z=_frozen([p.z for p in ps.paulis]).astype(np.int64),
            probs=_frozen(probs),
            phases=_frozen(np.angle(coeffs) % (2 * np.pi)),
            norm=norm,
        )

    def __len__(self) -> int:
        return self.x.size


@dataclass(frozen=True, eq=False)
class JumpOperator:
    terms: PauliSum
    table: TermTable

    @property
    def alpha(self) -> float:
        return self.table.norm

    @property
    def probs(self) -> np.ndarray:
        return self.table.probs

    @property
    def phases(self) -> np.ndarray:
        return self.table.phases

    def to_matrix(self) -> np.ndarray:
        return self.terms.to_matrix()


@dataclass(frozen=True, eq=False)
class LindbladModel:
    n: int
    hamiltonian: PauliSum
    h_table: TermTable
    jumps: tuple[JumpOperator, ...]

    @property
    def alpha0(self) -> float:
        return self.h_table.norm

    @property
    def h_signs(self) -> np.ndarray:
        return np.sign(self.hamiltonian.coeffs.real)

    @property
    def K(self) -> int:
        return len(self.jumps)

    @property
    def M(self) -> int:
        return max((len(j.terms) for j in self.jumps), default=0)

    @property
    def jump_alphas(self) -> np.ndarray:
        return np.array([j.alpha for j in self.jumps])

    @property
    def pauli_norm(self) -> float:
        return 2.0 * (self.alpha0 + float(np.sum(self.jump_alphas**2)))

    @property
    def alpha(self) -> float:
        return 2.0 * self.alpha0 + float(np.sum(self.jump_alphas**2))

    def is_empty(self) -> bool:
        return not self.hamiltonian.terms and not self.jumps

    def hamiltonian_matrix(self) -> np.ndarray:
        return self.hamiltonian.to_matrix()

    def jump_matrices(self) -> list[np.ndarray]:
        return [j.to_matrix() for j in self.jumps]

    def scaled(self, s: float) -> LindbladModel:
        """The model for ``s * L`` (Hamiltonian times s, jumps times sqrt(s))."""
        h = PauliSum(self.n, tuple((c * s, p) for c, p in self.hamiltonian))
        jumps = [PauliSum(self.n, tuple((c * math.sqrt(s), p) for c, p in j.terms)) for j in self.jumps]
        return build_model(self.n, h, jumps)


def build_model(n: int, hamiltonian: PauliSum, jumps: Sequence[PauliSum]) -> LindbladModel:
    """Validate Pauli sums and assemble a :class:`LindbladModel`."""
    if n < 1:
        raise ModelError(f"n must be a positive integer, got {n}")
    if hamiltonian.n != n or any(j.n != n for j in jumps):
        raise ModelError("all Pauli labels must have length n")
    if np.any(np.abs(hamiltonian.coeffs.imag) > 0):
        raise ModelError("Hamiltonian coefficients must be real")
    h = PauliSum(n, tuple((complex(c.real), p) for c, p in hamiltonian))
    ops = []
    for k, j in enumerate(jumps, start=1):
        if j.l1_norm == 0:
            raise ModelError(f"jump operator {k} has zero norm")
        ops.append(JumpOperator(j, TermTable.from_sum(j)))
    return LindbladModel(n, h, TermTable.from_sum(h), tuple(ops))


def from_terms(
    hamiltonian: Sequence[tuple[str, float]] = (),
    jumps: Sequence[Sequence[tuple[str, complex]]] = (),
    n: int | None = None,
) -> LindbladModel:
    """Build a model from ``(label, coeff)`` lists.

    Example:
        >>> m = from_terms([("Z", -0.5), ("X", -0.5)], [[("X", 0.5), ("Y", -0.5j)]])
        >>> m.pauli_norm
        4.0
    """
    labels = [lab for lab, _ in hamiltonian] + [lab for j in jumps for lab, _ in j]
    if n is None:
        if not labels:
            raise ModelError("n is required for an empty model")
        n = len(labels[0])
    try:
        for lab in labels:
            parse(lab, 1.0, n)
        h = PauliSum(n, tuple(parse(lab, c, n) for lab, c in hamiltonian))
        js = [PauliSum(n, tuple(parse(lab, c, n) for lab, c in j)) for j in jumps]
    except PauliParseError as exc:
        raise ModelError(str(exc)) from exc
    return build_model(n, h, js)


def _parse_coeff(value: Any, where: str) -> complex:
    if isinstance(value, bool):
        raise ModelError(f"{where}: coefficient must be numeric")
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        return complex(value[0], value[1])
    raise ModelError(f"{where}: coefficient must be a number or [re, im], got {value!r}")


def _parse_terms(items: Any, where: str) -> list[tuple[str, complex]]:
    if not isinstance(items, list):
        raise ModelError(f"{where}: expected a list of terms")
    out = []
    for i, term in enumerate(items):
        loc = f"{where}[{i}]"
        if not isinstance(term, Mapping):
            raise ModelError(f"{loc}: expected an object with 'pauli' and 'coeff'")
        extra = set(term) - _TERM_FIELDS
        if extra:
            raise ModelError(f"{loc}: unknown field(s) {sorted(extra)}")
        if set(term) != _TERM_FIELDS:
            raise ModelError(f"{loc}: missing field(s) {sorted(_TERM_FIELDS - set(term))}")
        out.append((term["pauli"], _parse_coeff(term["coeff"], loc)))
    return out


def model_from_dict(doc: Mapping[str, Any]) -> LindbladModel:
    """Validate a model document already decoded into Python objects."""
    if not isinstance(doc, Mapping):
        raise ModelError("model document must be an object")
    extra = set(doc) - _DOC_FIELDS
    if extra:
        raise ModelError(f"unknown field(s) {sorted(extra)}")
    if "n" not in doc:
        raise ModelError("missing field 'n'")
    n = doc["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ModelError(f"'n' must be a positive integer, got {n!r}")
    h = _parse_terms(doc.get("hamiltonian", []), "hamiltonian")
    for i, (_, c) in enumerate(h):
        if c.imag != 0:
            raise ModelError(f"hamiltonian[{i}]: Hamiltonian coefficients must be real")
    raw_jumps = doc.get("jumps", [])
    if not isinstance(raw_jumps, list):
        raise ModelError("'jumps' must be a list of term lists")
    jumps = [_parse_terms(j, f"jumps[{k}]") for k, j in enumerate(raw_jumps)]
    for lab, _ in h + [t for j in jumps for t in j]:
        if not isinstance(lab, str):
            raise ModelError(f"Pauli label must be a string, got {lab!r}")
        if len(lab) != n:
            raise ModelError(f"mixed label lengths: {lab!r} does not have length n={n}")
    return from_terms(h, jumps, n=n)


def load_model(source: Mapping[str, Any] | str | PathLike) -> LindbladModel:
    """Load a model from a JSON document path or an already-parsed mapping.

    The document has the form::

        {"n": 1,
         "hamiltonian": [{"pauli": "Z", "coeff": -0.5}, {"pauli": "X", "coeff": -0.5}],
         "jumps": [[{"pauli": "X", "coeff": [0.5, 0.0]},
                    {"pauli": "Y", "coeff": [0.0, -0.5]}]]}
    """
    if isinstance(source, Mapping):
        return model_from_dict(source)
    with open(source, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{source}: invalid JSON ({exc})") from exc
    return model_from_dict(doc)


def model_to_dict(m: LindbladModel) -> dict[str, Any]:
    return {
        "n": m.n,
        "hamiltonian": [{"pauli": p.label, "coeff": c.real} for c, p in m.hamiltonian],
        "jumps": [
            [{"pauli": p.label, "coeff": [c.real, c.imag]} for c, p in j.terms] for j in m.jumps
        ],
    }


def two_level_atom(delta: float = 1.0, omega: float = 1.0, gamma: float = 1.0) -> LindbladModel:
    """Driven, damped two-level atom: ``H = -(delta/2) Z - (omega/2) X``,
    ``L = sqrt(gamma) (X - iY) / 2`` (which maps ``|0>`` to ``|1>``)."""
    h = [(lab, c) for lab, c in (("Z", -delta / 2), ("X", -omega / 2)) if c != 0]
    s = math.sqrt(gamma) / 2
    jumps = [[("X", s), ("Y", -1j * s)]] if gamma > 0 else []
    return from_terms(h, jumps, n=1)


def random_model(
    n: int,
    rng: np.random.Generator,
    n_hamiltonian: int = 3,
    n_jumps: int = 2,
    jump_terms: int = 2,
    scale: float = 1.0,
) -> LindbladModel:
    """A model with random Pauli strings and Gaussian coefficients."""
    def label():
        return "".join(rng.choice(list("IXYZ"), size=n))

    h = [(label(), scale * rng.normal()) for _ in range(n_hamiltonian)]
    jumps = []
    for _ in range(n_jumps):
        terms = [(label(), scale * complex(rng.normal(), rng.normal())) for _ in range(jump_terms)]
        jumps.append(terms)
    return from_terms(h, jumps, n=n)


def pauli_norm(m: LindbladModel) -> float:
    """``2 (alpha_0 + sum_k alpha_k^2)``."""
    return m.pauli_norm


def alpha(m: LindbladModel) -> float:
    """``2 alpha_0 + sum_k alpha_k^2``."""
    return m.alpha


def tau(m: LindbladModel, t: float, r: int, l: int) -> float:
    """Per-segment step ``alpha (t/r) / (2l + 1)``."""
    if t < 0 or r < 1:
        raise ValueError("tau requires t >= 0 and r >= 1")
    return m.alpha * (t / r) / (2 * l + 1)


def transfer_matrix(m: LindbladModel) -> np.ndarray:
    """Dense generator ``G`` acting on column-stacked density matrices."""
    check_dense(m.n)
    dim = 1 << m.n
    eye = np.eye(dim)
    h = m.hamiltonian_matrix()
    g = -1j * np.kron(eye, h) + 1j * np.kron(h.T, eye)
    for lk in m.jump_matrices():
        lk_dag_lk = lk.conj().T @ lk
        g += np.kron(lk.conj(), lk) - 0.5 * np.kron(eye, lk_dag_lk) - 0.5 * np.kron(lk_dag_lk.T, eye)
    return g
