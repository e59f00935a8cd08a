"""Random circuit sampling for the truncated Lindblad decomposition.

The short-time propagator of each of the ``r`` segments is written as a
weighted mixture of three kinds of blocks:

* type-I:   an asymmetric Pauli pair, the superoperator ``e^{i theta} P . Q^dagger``
            with transfer matrix ``e^{i theta} conj(Q) (x) P``;
* type-II:  the dissipative CPTN block built from ``L_k`` at step ``tau_l``;
* type-III: a Pauli rotation ``exp(-i theta_l sgn P)`` on one side only.

Every branch value is produced by a vectorized *builder* that maps index arrays
to Pauli pairs. The random samplers draw index arrays and call the builder; the
enumerators list every index combination with its probability and call the
same builder, so the exact expectation identities exercise the production path.

Phased operators are handled as ``(x, z, quarter, angle)`` arrays. A pair is
assembled from a ket-side operator ``K`` and a bra-side operator ``Q`` as
``conj(Q) (x) K`` times a constant phase, and is then reduced to bare Pauli
strings with all phases collected into ``theta``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Union

import numpy as np

from .errors import ConfigurationError, DomainError, ModelError
from .model import LindbladModel
from .pauli import PauliString, PhasedPauli, TWO_PI, multiply, pauli_matrices, product_bits

HALF_PI = math.pi / 2


# ---------------------------------------------------------------------------
# circuit IR


@dataclass(frozen=True)
class AsymPauliPair:
    """Type-I block: ``P`` on the ancilla-0 branch, ``Q`` on the ancilla-1 branch.

    ``theta`` is this block's contribution to the global phase; it is already
    included in the circuit's :class:`FinalPhase` and is not re-applied.
    """

    p_ket: PauliString
    p_bra: PauliString
    theta: float


@dataclass(frozen=True)
class ControlledRotation:
    """Type-III block ``exp(-i angle sign P)`` applied on the ket or bra side."""

    p: PauliString
    angle: float
    sign: int
    side: str

    def unitary(self) -> np.ndarray:
        mat = self.p.to_matrix()
        return math.cos(self.angle) * np.eye(mat.shape[0]) - 1j * math.sin(self.angle) * self.sign * mat


@dataclass(frozen=True)
class Dissipative:
    """Type-II block: the CPTN map of jump ``k`` (1-based) at step ``tau``."""

    k: int
    tau: float


@dataclass(frozen=True)
class FinalPhase:
    phi: float


CircuitBlock = Union[AsymPauliPair, ControlledRotation, Dissipative, FinalPhase]


@dataclass(frozen=True)
class SampledCircuit:
    blocks: tuple[CircuitBlock, ...]
    c_total: float
    q_order: int
    r: int
    model: LindbladModel = field(repr=False, compare=False)
    rng_state: dict | None = field(default=None, repr=False, compare=False)

    @property
    def phi(self) -> float:
        return self.blocks[-1].phi


def format_circuit(c: SampledCircuit) -> str:
    """Line-oriented dump of a circuit, one block per line."""
    lines = [f"# r={c.r} Q={c.q_order} C={c.c_total!r}"]
    for b in c.blocks:
        if isinstance(b, AsymPauliPair):
            lines.append(f"pair ket={b.p_ket.label} bra={b.p_bra.label} theta={b.theta:.12f}")
        elif isinstance(b, ControlledRotation):
            lines.append(f"rot pauli={b.p.label} angle={b.angle:.12f} sign={b.sign:+d} side={b.side}")
        elif isinstance(b, Dissipative):
            lines.append(f"diss k={b.k} tau={b.tau:.12f}")
        else:
            lines.append(f"phase phi={b.phi:.12f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# scalar coefficients


def truncation_order(r: int, delta: float) -> int:
    """``Q = ceil(ln(3r/2delta) / ln ln(3r/2delta))``."""
    if not 0 < delta < 1 / math.e:
        raise DomainError(f"delta must lie in (0, 1/e), got {delta}")
    if r < 1:
        raise DomainError(f"r must be a positive integer, got {r}")
    x = 3 * r / (2 * delta)
    return math.ceil(math.log(x) / math.log(math.log(x)))


def correction_norm(tau):
    """Pauli-weight norm of the recovery superoperator at step ``tau``."""
    return tau**2 / 4 + tau**3 / 2 + 5 * tau**4 / 64 + tau**5 / 32 + tau**6 / 256


def jump_branch_weight(tau):
    """``gamma(tau) = 1 + ||R|| + tau^2/4``, the total weight of a jump's three branches."""
    return 1 + correction_norm(tau) + tau**2 / 4


def rotation_angle(tau):
    """``theta = arccos((1 + tau^2)^(-1/2))``, i.e. ``arctan(tau)``."""
    return np.arctan(tau)


def segment_weights(m: LindbladModel, t: float, r: int, q_order: int) -> np.ndarray:
    """Weights ``C_0 .. C_Q`` of the Taylor orders within one segment."""
    _check_segments(m, t, r)
    a = m.alpha
    ls = np.arange(q_order + 1)
    taus = a * (t / r) / (2 * ls + 1)
    bracket = _k_weights(m, taus).sum(axis=1)
    x = t * m.pauli_norm / r
    pref = np.array([x ** (2 * l) / math.factorial(2 * l) for l in ls])
    return pref * bracket


def _k_weights(m: LindbladModel, taus: np.ndarray) -> np.ndarray:
    """Unnormalized ``q_kl``: column 0 is the Hamiltonian, columns 1..K the jumps."""
    a = m.alpha
    taus = np.asarray(taus, dtype=float)
    h = 2 * (m.alpha0 / a) * np.sqrt(1 + taus**2)
    jumps = (m.jump_alphas**2 / a)[None, :] * jump_branch_weight(taus)[:, None]
    return np.column_stack([h, jumps])


def _check_segments(m: LindbladModel, t: float, r: int) -> None:
    if m.is_empty():
        raise ModelError("the model is empty")
    if t < 0:
        raise ConfigurationError(f"t must be nonnegative, got {t}")
    if r < 1 or int(r) != r:
        raise ConfigurationError(f"r must be a positive integer, got {r}")
    if r < t * m.pauli_norm * (1 - 1e-12):
        raise ConfigurationError(
            f"r={r} violates r >= t*||L||_pauli = {t * m.pauli_norm:.6g}"
        )


def auto_segments(m: LindbladModel, t: float) -> int:
    """``r = max(ceil(2 ||L||^2 t^2), 1)``."""
    return max(math.ceil(2 * m.pauli_norm**2 * t**2), 1)


# ---------------------------------------------------------------------------
# vectorized phased-Pauli arithmetic


class _Ops(NamedTuple):
    """A batch of phased Pauli operators ``i^q e^{i a} P(x, z)``."""

    x: np.ndarray
    z: np.ndarray
    q: np.ndarray
    a: np.ndarray


def _ident(size: int, q: int = 0) -> _Ops:
    zi = np.zeros(size, dtype=np.int64)
    return _Ops(zi, zi.copy(), np.full(size, q, dtype=np.int64), np.zeros(size))


def _mul(p: _Ops, r: _Ops) -> _Ops:
    x, z, q = product_bits(p.x, p.z, r.x, r.z)
    return _Ops(x, z, p.q + r.q + q, p.a + r.a)


def _select(cond: np.ndarray, a: _Ops, b: _Ops) -> _Ops:
    return _Ops(*(np.where(cond, u, v) for u, v in zip(a, b)))


class Pairs(NamedTuple):
    """A batch of type-I pairs in standard form ``e^{i theta} conj(Q) (x) P``."""

    ket_x: np.ndarray
    ket_z: np.ndarray
    bra_x: np.ndarray
    bra_z: np.ndarray
    theta: np.ndarray

    def take(self, idx) -> Pairs:
        return Pairs(*(f[idx] for f in self))

    def block(self, i: int, n: int) -> AsymPauliPair:
        return AsymPauliPair(
            PauliString(n, int(self.ket_x[i]), int(self.ket_z[i])),
            PauliString(n, int(self.bra_x[i]), int(self.bra_z[i])),
            float(self.theta[i]) % TWO_PI,
        )


def _standard_form(ket: _Ops, bra: _Ops, extra) -> Pairs:
    theta = (ket.q - bra.q) * HALF_PI + ket.a - bra.a + extra
    return Pairs(ket.x, ket.z, bra.x, bra.z, np.asarray(theta, dtype=float))


def compose_pairs(first: Pairs, second: Pairs) -> Pairs:
    """The pair equal to applying ``first`` and then ``second``."""
    kx, kz, kq = product_bits(second.ket_x, second.ket_z, first.ket_x, first.ket_z)
    bx, bz, bq = product_bits(second.bra_x, second.bra_z, first.bra_x, first.bra_z)
    return Pairs(kx, kz, bx, bz, first.theta + second.theta + (kq - bq) * HALF_PI)


def identity_pairs(size: int) -> Pairs:
    zi = np.zeros(size, dtype=np.int64)
    return Pairs(zi, zi, zi, zi, np.zeros(size))


# ---------------------------------------------------------------------------
# model tables


@dataclass(frozen=True)
class _Tables:
    n: int
    hx: np.ndarray
    hz: np.ndarray
    hphase: np.ndarray
    hcum: np.ndarray
    jx: np.ndarray  # (K, M), padded
    jz: np.ndarray
    jphase: np.ndarray
    jcum: np.ndarray
    jprob: np.ndarray
    jcount: np.ndarray
    k_cum: np.ndarray  # outer distribution of the generator sampler over 0..K


def _cum(p) -> np.ndarray:
    c = np.cumsum(p, axis=-1)
    c[..., -1] = 1.0
    return c


def _tables(m: LindbladModel) -> _Tables:
    ht = m.h_table
    if len(ht):
        hx, hz, hphase, hcum = ht.x, ht.z, ht.phases, _cum(ht.probs)
    else:
        hx = hz = np.zeros(1, dtype=np.int64)
        hphase, hcum = np.zeros(1), np.ones(1)
    K, M = max(m.K, 1), max(m.M, 1)
    jx = np.zeros((K, M), dtype=np.int64)
    jz = np.zeros((K, M), dtype=np.int64)
    jphase = np.zeros((K, M))
    jprob = np.zeros((K, M))
    jprob[:, 0] = 1.0
    jcount = np.ones(K, dtype=np.int64)
    for k, jump in enumerate(m.jumps):
        tb = jump.table
        s = len(tb)
        jx[k, :s], jz[k, :s], jphase[k, :s] = tb.x, tb.z, tb.phases
        jprob[k] = 0.0
        jprob[k, :s] = tb.probs
        jcount[k] = s
    norm = m.pauli_norm
    pk = np.concatenate([[2 * m.alpha0 / norm], 2 * m.jump_alphas**2 / norm])
    return _Tables(m.n, hx, hz, hphase, hcum, jx, jz, jphase, _cum(jprob), jprob, jcount, _cum(pk))


def _draw(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw; ``cum`` is shared (1-D) or one row per sample (2-D)."""
    if cum.ndim == 1:
        return np.searchsorted(cum, u, side="right")
    return (cum <= u[:, None]).sum(axis=1)


def _jump_term(tb: _Tables, kk: np.ndarray, j: np.ndarray, dagger: bool = False) -> _Ops:
    """``L_k``'s term ``j`` with its coefficient phase (negated for ``L_k^dagger``)."""
    phase = tb.jphase[kk, j]
    return _Ops(tb.jx[kk, j], tb.jz[kk, j], np.zeros_like(j), -phase if dagger else phase)


def _ldag_l(tb: _Tables, kk, j1, j2) -> _Ops:
    """A sample of ``L^dagger L``: term ``j1`` of ``L^dagger`` times term ``j2`` of ``L``."""
    return _mul(_jump_term(tb, kk, j1, dagger=True), _jump_term(tb, kk, j2))


# ---------------------------------------------------------------------------
# generator sampler: G / ||L||


def _xg_build(tb: _Tables, k, l, j1, j2) -> Pairs:
    k, l, j1, j2 = (np.asarray(v, dtype=np.int64) for v in (k, l, j1, j2))
    size = k.size
    is_h = k == 0
    kk = np.maximum(k - 1, 0)
    hj = np.where(is_h, j1, 0)
    h_term = _Ops(tb.hx[hj], tb.hz[hj], np.zeros(size, dtype=np.int64), tb.hphase[hj])
    one = _ident(size)
    ja = np.where(is_h, 0, j1)
    # -i 1(x)H : K = H_j, extra -pi/2.   i H^T(x)1 : X -> X (iH), so Q = -iH_j.
    h_ket = _select(l == 1, h_term, one)
    h_bra = _select(l == 2, h_term._replace(a=h_term.a - HALF_PI), one)
    h_extra = np.where(l == 1, -HALF_PI, 0.0)
    # jumps: l=1 conj(L)(x)L ; l=2 -1/2 1(x)L^dag L ; l=3 -1/2 (L^dag L)^T (x) 1
    ll = _ldag_l(tb, kk, ja, j2)
    j_ket = _select(l == 1, _jump_term(tb, kk, j2), _select(l == 2, ll, one))
    j_bra = _select(l == 1, _jump_term(tb, kk, ja), _select(l == 3, ll, one))
    j_extra = np.where(l == 1, 0.0, math.pi)
    ket = _select(is_h, h_ket, j_ket)
    bra = _select(is_h, h_bra, j_bra)
    return _standard_form(ket, bra, np.where(is_h, h_extra, j_extra))


def _xg_indices(tb: _Tables, u: np.ndarray):
    """Map four rows of uniforms to the generator sampler's ``(k, l, j1, j2)``."""
    k = _draw(tb.k_cum, u[0])
    is_h = k == 0
    l = np.where(is_h, 1 + (u[1] >= 0.5), 1 + (u[1] >= 0.5) + (u[1] >= 0.75))
    kk = np.maximum(k - 1, 0)
    j_jump1 = _draw(tb.jcum[kk], u[2])
    j1 = np.where(is_h, _draw(tb.hcum, u[2]), j_jump1)
    j2 = _draw(tb.jcum[kk], u[3])
    return k, l, j1, j2


def _sample_xg_batch(tb: _Tables, size: int, rng: np.random.Generator) -> Pairs:
    return _xg_build(tb, *_xg_indices(tb, rng.random((4, size))))


def sample_xg(m: LindbladModel, rng) -> AsymPauliPair:
    """Draw one branch of the generator decomposition ``G / ||L||_pauli``."""
    if m.is_empty():
        raise ModelError("the model is empty")
    rng = np.random.default_rng(rng)
    return _sample_xg_batch(_tables(m), 1, rng).block(0, m.n)


@dataclass(frozen=True)
class BranchTable:
    """Every branch of a sampler with its probability."""

    n: int
    probs: np.ndarray
    pairs: Pairs

    def __len__(self) -> int:
        return self.probs.size

    def __iter__(self) -> Iterator[tuple[float, AsymPauliPair]]:
        for i in range(len(self)):
            yield float(self.probs[i]), self.pairs.block(i, self.n)

    def transfer(self) -> np.ndarray:
        """``sum_b prob_b e^{i theta_b} conj(Q_b) (x) P_b`` as a dense matrix."""
        return pairs_transfer(self.pairs, self.probs, self.n)


def pairs_transfer(pairs: Pairs, weights: np.ndarray, n: int) -> np.ndarray:
    """Weighted sum of pair transfer matrices, aggregated by distinct strings."""
    shift = np.int64(n)
    key = ((pairs.bra_x << shift | pairs.bra_z) << shift | pairs.ket_x) << shift | pairs.ket_z
    uniq, inv = np.unique(key, return_inverse=True)
    w = weights * np.exp(1j * pairs.theta)
    coef = np.bincount(inv, w.real, uniq.size) + 1j * np.bincount(inv, w.imag, uniq.size)
    mask = (1 << n) - 1
    kz, kx = uniq & mask, (uniq >> shift) & mask
    bz, bx = (uniq >> 2 * shift) & mask, (uniq >> 3 * shift) & mask
    kets = pauli_matrices(kx, kz, n)
    bras = pauli_matrices(bx, bz, n).conj()
    dim = 1 << n
    out = np.einsum("u,uab,ucd->acbd", coef, bras, kets).reshape(dim * dim, dim * dim)
    return out


def _grid(*sizes: int) -> list[np.ndarray]:
    return [g.reshape(-1) for g in np.indices(sizes)] if sizes else []


def enumerate_xg(m: LindbladModel) -> BranchTable:
    """All branches of the generator sampler with their probabilities."""
    if m.is_empty():
        raise ModelError("the model is empty")
    tb = _tables(m)
    pk = np.diff(tb.k_cum, prepend=0.0)
    cols = {"k": [], "l": [], "j1": [], "j2": [], "p": []}

    def add(k, l, j1, j2, p):
        for name, v in zip(("k", "l", "j1", "j2", "p"), (k, l, j1, j2, p)):
            cols[name].append(np.broadcast_to(v, np.shape(p)).astype(float if name == "p" else np.int64))

    nh = len(m.h_table)
    if nh:
        ll, jj = _grid(2, nh)
        add(0, ll + 1, jj, 0, pk[0] * 0.5 * m.h_table.probs[jj])
    for k, jump in enumerate(m.jumps, start=1):
        s = len(jump.table)
        ll, a, b = _grid(3, s, s)
        pl = np.array([0.5, 0.25, 0.25])[ll]
        add(k, ll + 1, a, b, pk[k] * pl * jump.probs[a] * jump.probs[b])
    cat = {name: np.concatenate(v) for name, v in cols.items()}
    pairs = _xg_build(tb, cat["k"], cat["l"], cat["j1"], cat["j2"])
    return BranchTable(m.n, cat["p"], pairs)


# ---------------------------------------------------------------------------
# recovery sampler: the recovery superoperator R / ||R||


def xr_lambda_probs(tau):
    """Probabilities of the two Kraus indices, ``prop. to (1 + tau/2)^2`` and ``tau``."""
    g0, g1 = (1 + tau / 2) ** 2, tau
    return g0 / (g0 + g1), g1 / (g0 + g1)


def xr_term_probs(tau):
    """Probabilities of the three terms of R, ``prop. to (1, 1, tau^2/8)``."""
    w = 2 + tau**2 / 8
    return 1 / w, 1 / w, tau**2 / 8 / w


def _b_factor(tb: _Tables, kk, lam, ident, ja, jb) -> _Ops:
    """A sample of ``-B_0/gamma_0`` (lam=0) or ``B_1/gamma_1`` (lam=1).

    The identity part of ``B_0`` is represented by ``P_{k0} P_{k0}`` with
    ``P_{k0} = i 1``, which contributes ``-1``; the same sign appears on both
    sides of every branch and cancels.
    """
    size = kk.size
    b0 = _select(ident, _ident(size, q=2), _ldag_l(tb, kk, ja, jb))
    return _select(lam == 0, b0, _jump_term(tb, kk, ja))


def _d_factor(tb: _Tables, kk, d) -> _Ops:
    """A sample of ``D = (L^dagger L)^2 / alpha^4``."""
    return _mul(_ldag_l(tb, kk, d[0], d[1]), _ldag_l(tb, kk, d[2], d[3]))


def _xr_build(tb: _Tables, kk, lam, i, bra_ident, ket_ident, bra_j, ket_j, bra_d, ket_d) -> Pairs:
    """Branch values of the recovery sampler.

    Terms of R (each for both Kraus indices lam):
        i=0:  conj(B)   (x) B D
        i=1:  conj(B D) (x) B
        i=2: -conj(B D) (x) B D
    """
    ket = _b_factor(tb, kk, lam, ket_ident, ket_j[0], ket_j[1])
    bra = _b_factor(tb, kk, lam, bra_ident, bra_j[0], bra_j[1])
    ket = _select((i == 0) | (i == 2), _mul(ket, _d_factor(tb, kk, ket_d)), ket)
    bra = _select((i == 1) | (i == 2), _mul(bra, _d_factor(tb, kk, bra_d)), bra)
    # the third term of R carries a minus sign, applied as an extra pi
    extra = np.where(i == 2, math.pi, 0.0)
    return _standard_form(ket, bra, extra)


def _xr_indices(tb: _Tables, kk: np.ndarray, tau: np.ndarray, u: np.ndarray):
    """Map 16 rows of uniforms to the recovery sampler's indices for jump row ``kk``."""
    p_lam0, _ = xr_lambda_probs(tau)
    p_i0, p_i1, _ = xr_term_probs(tau)
    lam = (u[0] >= p_lam0).astype(np.int64)
    i = (u[1] >= p_i0).astype(np.int64) + (u[1] >= p_i0 + p_i1)
    p_ident = 1 / (1 + tau / 2)
    bra_ident = u[2] < p_ident
    ket_ident = u[3] < p_ident
    cum = tb.jcum[kk]
    js = [_draw(cum, u[4 + c]) for c in range(12)]
    return lam, i, bra_ident, ket_ident, js[0:2], js[2:4], js[4:8], js[8:12]


def sample_xr(m: LindbladModel, k: int, tau: float, rng) -> AsymPauliPair:
    """Draw one branch of the recovery decomposition ``R_k(tau) / ||R||``."""
    _check_xr(m, k, tau)
    rng = np.random.default_rng(rng)
    tb = _tables(m)
    kk = np.array([k - 1])
    taus = np.array([float(tau)])
    u = rng.random((16, 1))
    lam, i, bi, ki, bj, kj, bd, kd = _xr_indices(tb, kk, taus, u)
    return _xr_build(tb, kk, lam, i, bi, ki, bj, kj, bd, kd).block(0, m.n)


def _check_xr(m: LindbladModel, k: int, tau: float) -> None:
    if not 1 <= k <= m.K:
        raise ModelError(f"jump index k={k} out of range 1..{m.K}")
    if tau <= 0:
        raise DomainError("the recovery decomposition is degenerate at tau = 0")
    if tau > 3:
        raise DomainError(f"tau must lie in (0, 3], got {tau}")


@functools.lru_cache(maxsize=8)
def _xr_branches(m: LindbladModel, k: int) -> tuple[list, Pairs]:
    """Branch structure of the recovery sampler for jump ``k``; independent of tau.

    Returns per-part index data for the probabilities and the concatenated
    pairs. Each part is ``(lam, i, ob, ok, d_prob)`` where ``ob``/``ok`` index
    the B options of the two sides and ``d_prob`` is the product of the D
    factor term probabilities.
    """
    tb = _tables(m)
    s = len(m.jumps[k - 1].table)
    p = m.jumps[k - 1].probs
    parts, pairs = [], []
    for lam in (0, 1):
        b_ident, b_a, b_b = _xr_b_options(s, lam)
        for i in (0, 1, 2):
            ket_d = i in (0, 2)
            bra_d = i in (1, 2)
            g = _grid(b_ident.size, b_ident.size, *[s] * (4 * ket_d + 4 * bra_d))
            ob, ok, rest = g[0], g[1], g[2:]
            zero = np.zeros_like(ob)
            kd = rest[:4] if ket_d else [zero] * 4
            bd = rest[-4:] if bra_d else [zero] * 4
            d_prob = np.prod([p[d] for d in rest], axis=0) if rest else np.ones(ob.size)
            size = ob.size
            pairs.append(
                _xr_build(
                    tb,
                    np.full(size, k - 1),
                    np.full(size, lam),
                    np.full(size, i),
                    b_ident[ob],
                    b_ident[ok],
                    [b_a[ob], b_b[ob]],
                    [b_a[ok], b_b[ok]],
                    bd,
                    kd,
                )
            )
            parts.append((lam, i, ob, ok, d_prob))
    return parts, Pairs(*(np.concatenate([pp[f] for pp in pairs]) for f in range(5)))


def _xr_b_options(s: int, lam: int):
    """B options per side: lam=0 -> identity or a pair (a, b); lam=1 -> a single a."""
    if lam == 0:
        o = np.arange(1 + s * s)
        rest = np.maximum(o - 1, 0)
        return o == 0, rest // s, rest % s
    return np.zeros(s, dtype=bool), np.arange(s), np.zeros(s, dtype=np.int64)


def enumerate_xr(m: LindbladModel, k: int, tau: float) -> BranchTable:
    """All branches of the recovery sampler for jump ``k`` at step ``tau``."""
    _check_xr(m, k, tau)
    p = m.jumps[k - 1].probs
    s = p.size
    p_lam = xr_lambda_probs(tau)
    p_i = xr_term_probs(tau)
    p_ident = 1 / (1 + tau / 2)
    b_prob = []
    for lam in (0, 1):
        b_ident, b_a, b_b = _xr_b_options(s, lam)
        side = (1 - p_ident) * p[b_a] * p[b_b] if lam == 0 else p[b_a]
        b_prob.append(np.where(b_ident, p_ident, side))
    parts, pairs = _xr_branches(m, k)
    probs = np.concatenate(
        [p_lam[lam] * p_i[i] * b_prob[lam][ob] * b_prob[lam][ok] * d_prob for lam, i, ob, ok, d_prob in parts]
    )
    return BranchTable(m.n, probs, pairs)


def _gamma3_build(tb: _Tables, kk, d) -> Pairs:
    """Branches of ``-(L^dagger L) . (L^dagger L)`` (normalized by alpha^4).

    The right factor ``L_{d2}^dagger L_{d3}`` equals ``Q^dagger`` for
    ``Q = L_{d3}^dagger L_{d2}``.
    """
    return _standard_form(_ldag_l(tb, kk, d[0], d[1]), _ldag_l(tb, kk, d[3], d[2]), math.pi)


def enumerate_gamma3(m: LindbladModel, k: int) -> BranchTable:
    """All branches of the double-product block of jump ``k``."""
    if not 1 <= k <= m.K:
        raise ModelError(f"jump index k={k} out of range 1..{m.K}")
    jump = m.jumps[k - 1]
    s = len(jump.table)
    d = _grid(s, s, s, s)
    prob = np.prod([jump.probs[v] for v in d], axis=0)
    pairs = _gamma3_build(_tables(m), np.full(d[0].size, k - 1), d)
    return BranchTable(m.n, prob, pairs)


# ---------------------------------------------------------------------------
# circuit sampler: whole circuits


@dataclass(frozen=True)
class CircuitPlan:
    """Everything about the circuit distribution that does not depend on the draw."""

    model: LindbladModel
    t: float
    r: int
    delta: float
    q_order: int
    taus: np.ndarray
    thetas: np.ndarray
    weights: np.ndarray
    l_cum: np.ndarray
    k_cum: np.ndarray  # (Q+1, K+1)
    nu_cum: np.ndarray  # (Q+1, 3) for jump blocks
    tables: _Tables = field(repr=False)

    @property
    def c_total(self) -> float:
        return float(self.weights.sum() ** self.r)


def plan_circuit(m: LindbladModel, t: float, r: int, delta: float, q_order: int | None = None) -> CircuitPlan:
    """Precompute the per-segment distributions.

    Args:
        q_order: override of the truncation order (defaults to the formula).
    """
    _check_segments(m, t, r)
    if q_order is None:
        q_order = truncation_order(r, delta)
    ls = np.arange(q_order + 1)
    taus = m.alpha * (t / r) / (2 * ls + 1)
    if np.any(taus > 3):
        raise DomainError("tau_l exceeds 3")
    weights = segment_weights(m, t, r, q_order)
    kw = _k_weights(m, taus)
    nu = np.column_stack([np.ones_like(taus), correction_norm(taus), taus**2 / 4])
    return CircuitPlan(
        model=m,
        t=float(t),
        r=int(r),
        delta=float(delta),
        q_order=q_order,
        taus=taus,
        thetas=rotation_angle(taus),
        weights=weights,
        l_cum=_cum(weights / weights.sum()),
        k_cum=_cum(kw / kw.sum(axis=1, keepdims=True)),
        nu_cum=_cum(nu / nu.sum(axis=1, keepdims=True)),
        tables=_tables(m),
    )


GAMMA_ROTATION, GAMMA_DISSIPATIVE, GAMMA_PAIR = 0, 1, 2


@dataclass(frozen=True)
class SegmentDraw:
    """One segment of a batch of independent circuits.

    ``kind`` selects the leading block: a rotation (term ``rot_j`` of H,
    side ket for ``nu == 1``), a dissipative block of jump ``k``, or the pair in
    ``pair``. ``xg[s]`` is the ``s``-th generator pair, present where
    ``2 * l > s``.
    """

    l: np.ndarray
    k: np.ndarray
    nu: np.ndarray
    kind: np.ndarray
    rot_j: np.ndarray
    pair: Pairs
    xg: list[Pairs]

    def __len__(self) -> int:
        return self.l.size


_SEG_FIELDS = 20


def sample_segments(plan: CircuitPlan, size: int, rng: np.random.Generator) -> Iterator[SegmentDraw]:
    """Yield the ``r`` segments for ``size`` independent circuits."""
    tb = plan.tables
    for _ in range(plan.r):
        u = rng.random((_SEG_FIELDS, size))
        l = _draw(plan.l_cum, u[0])
        k = _draw(plan.k_cum[l], u[1])
        is_h = k == 0
        nu = np.where(is_h, 1 + (u[2] >= 0.5), 1 + _draw(plan.nu_cum[l], u[2]))
        kind = np.where(is_h, GAMMA_ROTATION, np.where(nu == 1, GAMMA_DISSIPATIVE, GAMMA_PAIR))
        rot_j = _draw(tb.hcum, u[3])
        kk = np.maximum(k - 1, 0)
        tau = plan.taus[l]
        # nu=2: recovery pair; nu=3: -(L^dag L) . (L^dag L)
        lam, i, bi, ki, bj, kj, bd, kd = _xr_indices(tb, kk, tau, u[4:])
        xr = _xr_build(tb, kk, lam, i, bi, ki, bj, kj, bd, kd)
        # the nu=3 indices reuse rows already spent on the (exclusive) nu=2 branch
        g3 = _gamma3_build(tb, kk, [_draw(tb.jcum[kk], u[8 + c]) for c in range(4)])
        pair = Pairs(*(np.where(nu == 2, a, b) for a, b in zip(xr, g3)))
        lmax = int(l.max()) if size else 0
        xg = [_sample_xg_batch(tb, size, rng) for _ in range(2 * lmax)]
        yield SegmentDraw(l, k, nu, kind, rot_j, pair, xg)


def segment_blocks(plan: CircuitPlan, seg: SegmentDraw, idx: int) -> list[CircuitBlock]:
    """The uncollapsed blocks of circuit ``idx`` in one segment."""
    m = plan.model
    l = int(seg.l[idx])
    kind = seg.kind[idx]
    if kind == GAMMA_ROTATION:
        j = int(seg.rot_j[idx])
        p = m.hamiltonian.paulis[j]
        sign = int(m.h_signs[j])
        side = "ket" if seg.nu[idx] == 1 else "bra"
        blocks: list[CircuitBlock] = [ControlledRotation(p, float(plan.thetas[l]), sign, side)]
    elif kind == GAMMA_DISSIPATIVE:
        blocks = [Dissipative(int(seg.k[idx]), float(plan.taus[l]))]
    else:
        blocks = [seg.pair.block(idx, m.n)]
    blocks += [seg.xg[s].block(idx, m.n) for s in range(2 * l)]
    return blocks


def sample_circuit(
    m: LindbladModel, t: float, r: int, delta: float, rng=None, q_order: int | None = None
) -> SampledCircuit:
    """Draw one circuit of the truncated decomposition (uncollapsed)."""
    plan = plan_circuit(m, t, r, delta, q_order)
    return _sample_from_plan(plan, rng)


def _sample_from_plan(plan: CircuitPlan, rng) -> SampledCircuit:
    rng = np.random.default_rng(rng)
    state = rng.bit_generator.state
    blocks: list[CircuitBlock] = []
    for seg in sample_segments(plan, 1, rng):
        blocks += segment_blocks(plan, seg, 0)
    phi = sum(b.theta for b in blocks if isinstance(b, AsymPauliPair)) % TWO_PI
    blocks.append(FinalPhase(phi))
    return SampledCircuit(tuple(blocks), plan.c_total, plan.q_order, plan.r, plan.model, state)


def replay_rng(c: SampledCircuit) -> np.random.Generator:
    """A generator positioned where ``c`` was drawn from."""
    if c.rng_state is None:
        raise ValueError("circuit carries no generator state")
    bg = getattr(np.random, c.rng_state["bit_generator"])()
    bg.state = c.rng_state
    return np.random.Generator(bg)


def _pair_ops(b: AsymPauliPair) -> tuple[PhasedPauli, PhasedPauli]:
    return PhasedPauli(b.p_ket), PhasedPauli(b.p_bra)


def collapse_type1_runs(c: SampledCircuit) -> SampledCircuit:
    """Merge each maximal run of consecutive pairs into one pair.

    Later blocks act after earlier ones, so a run ``B_1, ..., B_m`` becomes the
    pair with ``P = P_m ... P_1`` and ``Q = Q_m ... Q_1``. The quarter turns
    produced by the products are added to the final phase.
    """
    out: list[CircuitBlock] = []
    extra = 0.0
    run: list[AsymPauliPair] = []

    def flush():
        nonlocal extra
        if len(run) == 1:
            out.append(run[0])
        elif run:
            ket, bra = _pair_ops(run[0])
            theta = run[0].theta
            for b in run[1:]:
                bk, bb = _pair_ops(b)
                ket, bra = multiply(bk, ket), multiply(bb, bra)
                theta += b.theta
            gained = (ket.quarter - bra.quarter) * HALF_PI
            extra += gained
            out.append(AsymPauliPair(ket.pauli, bra.pauli, (theta + gained) % TWO_PI))
        run.clear()

    for b in c.blocks:
        if isinstance(b, AsymPauliPair):
            run.append(b)
            continue
        flush()
        if isinstance(b, FinalPhase):
            b = FinalPhase((b.phi + extra) % TWO_PI)
        out.append(b)
    flush()
    return SampledCircuit(tuple(out), c.c_total, c.q_order, c.r, c.model, c.rng_state)
