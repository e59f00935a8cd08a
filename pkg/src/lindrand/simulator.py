"""Density-matrix execution of sampled circuits on system plus one ancilla.

The ancilla is the most significant qubit and starts in ``|+>``. Every block is
block-diagonal in the ancilla basis, so the state always has the form

    [[rho_00, rho_01],
     [rho_10, rho_11]]

and a pair ``(P, Q)`` maps ``rho_01 -> P rho_01 Q^dag``. The circuit's final
phase multiplies ``rho_01`` by ``e^{i phi}`` and the estimate of one circuit is
``Tr[(X (x) O) rho]``.

Two engines share these semantics. The scalar engine walks the blocks of one
:class:`~lindrand.sampler.SampledCircuit`. The batched engine draws and runs a
whole chunk of circuits at once: each segment reduces to at most two Kraus
operators per circuit (the leading block with every generator pair of the
segment folded in), applied with a single batched product.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channels import approx_kraus, build_dissipation
from .errors import StateError
from .model import LindbladModel
from .oracle import check_density_matrix, check_observable
from .pauli import PauliSum, pauli_matrices
from .sampler import (
    GAMMA_DISSIPATIVE,
    GAMMA_PAIR,
    GAMMA_ROTATION,
    AsymPauliPair,
    CircuitPlan,
    ControlledRotation,
    Dissipative,
    FinalPhase,
    SampledCircuit,
    auto_segments,
    compose_pairs,
    enumerate_gamma3,
    enumerate_xg,
    enumerate_xr,
    identity_pairs,
    plan_circuit,
    sample_segments,
    segment_blocks,
)
from .vectorize import sandwich, unvec, vec

CLUSTER_TOL = 1e-9
CHUNK_SIZE = 4096
MODES = ("exact", "shots")

PLUS = np.full((2, 2), 0.5, dtype=complex)


@dataclass(frozen=True)
class DensityMatrix:
    """State of ``n`` system qubits plus the ancilla; may be subnormalized."""

    n: int
    mat: np.ndarray

    @property
    def qubits(self) -> int:
        return self.n + 1

    @property
    def trace(self) -> float:
        return float(np.trace(self.mat).real)

    def block(self, a: int, b: int) -> np.ndarray:
        d = 1 << self.n
        return self.mat[a * d : (a + 1) * d, b * d : (b + 1) * d]

    def check(self, tol: float = 1e-10) -> None:
        """Raise :class:`StateError` if the state invariants are broken."""
        if np.abs(self.mat - self.mat.conj().T).max() > 1e2 * tol:
            raise StateError("state is not Hermitian")
        if np.linalg.eigvalsh(self.mat).min() < -tol:
            raise StateError("state has a negative eigenvalue")
        if not -tol <= self.trace <= 1 + 1e-12:
            raise StateError(f"state trace {self.trace} outside [0, 1]")


@dataclass(frozen=True)
class TrajectoryOutcome:
    value: float
    terminated_early: bool
    midcircuit_failures: int


def init_state(rho0: np.ndarray) -> DensityMatrix:
    """``|+><+| (x) rho0``."""
    rho0 = check_density_matrix(rho0)
    n = int(rho0.shape[0]).bit_length() - 1
    if 1 << n != rho0.shape[0]:
        raise StateError(f"dimension {rho0.shape[0]} is not a power of two")
    return DensityMatrix(n, np.kron(PLUS, rho0))


def _controlled(u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
    """``|0><0| (x) u0 + |1><1| (x) u1`` for single or batched operators."""
    d = u0.shape[-1]
    out = np.zeros(u0.shape[:-2] + (2 * d, 2 * d), dtype=complex)
    out[..., :d, :d] = u0
    out[..., d:, d:] = u1
    return out


def _conjugate(s: DensityMatrix, u: np.ndarray) -> DensityMatrix:
    return DensityMatrix(s.n, u @ s.mat @ u.conj().T)


def apply_asym_pair(s: DensityMatrix, blk: AsymPauliPair) -> DensityMatrix:
    return _conjugate(s, _controlled(blk.p_ket.to_matrix(), blk.p_bra.to_matrix()))


def apply_controlled_rotation(s: DensityMatrix, blk: ControlledRotation) -> DensityMatrix:
    rot = blk.unitary()
    eye = np.eye(rot.shape[0])
    u = _controlled(rot, eye) if blk.side == "ket" else _controlled(eye, rot)
    return _conjugate(s, u)


def apply_dissipative_exact(s: DensityMatrix, kraus) -> DensityMatrix:
    """``rho -> sum_lam (1 (x) B'_lam) rho (1 (x) B'_lam)^dag``."""
    eye = np.eye(2)
    out = sum(np.kron(eye, b) @ s.mat @ np.kron(eye, b).conj().T for b in kraus.kraus)
    return DensityMatrix(s.n, out)


def apply_dissipative_trajectory(
    s: DensityMatrix, kraus, rng: np.random.Generator
) -> tuple[DensityMatrix, bool]:
    """Sample the flag measurement; on success return the renormalized state."""
    out = apply_dissipative_exact(s, kraus)
    p = out.trace / s.trace if s.trace > 0 else 0.0
    if p < -1e-12:
        raise StateError(f"negative success probability {p}")
    if rng.random() < p:
        return DensityMatrix(s.n, out.mat * (s.trace / out.trace)), True
    return DensityMatrix(s.n, np.zeros_like(s.mat)), False


def apply_final_phase(s: DensityMatrix, phi: float) -> DensityMatrix:
    d = 1 << s.n
    mat = s.mat.copy()
    mat[:d, d:] *= np.exp(1j * phi)
    mat[d:, :d] *= np.exp(-1j * phi)
    return DensityMatrix(s.n, mat)


class _KrausCache:
    def __init__(self, m: LindbladModel):
        self.m = m
        self._store = {}

    def __call__(self, k: int, tau: float):
        key = (k, tau)
        if key not in self._store:
            self._store[key] = approx_kraus(build_dissipation(self.m, k, tau))
        return self._store[key]


def _apply_block(s: DensityMatrix, blk, kraus: _KrausCache) -> DensityMatrix:
    if isinstance(blk, AsymPauliPair):
        return apply_asym_pair(s, blk)
    if isinstance(blk, ControlledRotation):
        return apply_controlled_rotation(s, blk)
    if isinstance(blk, Dissipative):
        return apply_dissipative_exact(s, kraus(blk.k, blk.tau))
    if isinstance(blk, FinalPhase):
        return apply_final_phase(s, blk.phi)
    raise TypeError(f"unknown block {blk!r}")


def _observable(obs, n: int) -> np.ndarray:
    if isinstance(obs, PauliSum):
        obs = obs.to_matrix()
    return check_observable(obs, 1 << n)


def _x_obs(obs: np.ndarray) -> np.ndarray:
    return np.kron(np.array([[0, 1], [1, 0]]), obs)


def expectation_exact(c: SampledCircuit, rho0: np.ndarray, obs) -> float:
    """``Tr[(X (x) O) W(|+><+| (x) rho0)]`` with dissipative blocks as CPTN maps."""
    s = init_state(rho0)
    obs = _observable(obs, s.n)
    kraus = _KrausCache(c.model)
    for blk in c.blocks:
        s = _apply_block(s, blk, kraus)
    val = np.trace(_x_obs(obs) @ s.mat)
    if abs(val.imag) > 1e-10:
        raise StateError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


@dataclass(frozen=True)
class JointMeasurement:
    """Projective measurement of ``X_anc (x) O`` in a joint eigenbasis.

    Eigenvalues of ``O`` closer than :data:`CLUSTER_TOL` share one projector.
    """

    values: np.ndarray  # (J,)
    projectors: np.ndarray = field(repr=False)  # (J, 2D, 2D)
    norm: float

    @classmethod
    def of(cls, obs: np.ndarray) -> JointMeasurement:
        evals, evecs = np.linalg.eigh(obs)
        groups = np.concatenate([[0], np.cumsum(np.diff(evals) > CLUSTER_TOL)])
        minus = np.array([[0.5, -0.5], [-0.5, 0.5]], dtype=complex)
        values, projs = [], []
        for g in range(groups[-1] + 1):
            sel = groups == g
            o = float(evals[sel].mean())
            v = evecs[:, sel]
            proj = v @ v.conj().T
            for sign, anc in ((1, PLUS), (-1, minus)):
                values.append(sign * o)
                projs.append(np.kron(anc, proj))
        return cls(np.array(values), np.array(projs), float(np.abs(evals).max()))

    def probabilities(self, mats: np.ndarray) -> np.ndarray:
        """Outcome probabilities for a batch of states, shape ``(N, J)``."""
        return np.einsum("jab,nba->nj", self.projectors, mats).real

    def sample(self, mats: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One outcome value per state; all-zero (terminated) states give 0."""
        probs = np.clip(self.probabilities(mats), 0, None)
        total = probs.sum(axis=1)
        alive = total > 0
        cum = np.cumsum(probs, axis=1) / np.where(alive, total, 1)[:, None]
        u = rng.random(mats.shape[0])
        idx = np.minimum((cum <= u[:, None]).sum(axis=1), len(self.values) - 1)
        return np.where(alive, self.values[idx], 0.0)


def run_trajectory(c: SampledCircuit, rho0: np.ndarray, obs, rng) -> TrajectoryOutcome:
    """One shot: sampled flag measurements, then the joint final measurement."""
    rng = np.random.default_rng(rng)
    s = init_state(rho0)
    meas = JointMeasurement.of(_observable(obs, s.n))
    kraus = _KrausCache(c.model)
    for blk in c.blocks:
        if isinstance(blk, Dissipative):
            s, ok = apply_dissipative_trajectory(s, kraus(blk.k, blk.tau), rng)
            if not ok:
                return TrajectoryOutcome(0.0, True, 1)
        else:
            s = _apply_block(s, blk, kraus)
    value = float(meas.sample(s.mat[None], rng)[0])
    return TrajectoryOutcome(value, False, 0)


# ---------------------------------------------------------------------------
# batched engine


class _BatchOps:
    """Per-plan dense operators indexed by the segment draws."""

    def __init__(self, plan: CircuitPlan):
        m, tb = plan.model, plan.tables
        self.n = m.n
        self.dim = 1 << m.n
        eye = np.eye(self.dim)
        self.h_mats = pauli_matrices(tb.hx, tb.hz, m.n)
        self.h_signs = m.h_signs if len(m.hamiltonian) else np.zeros(1)
        self.thetas = plan.thetas
        # kraus[k, l, lam] for the dissipative block of jump k at step tau_l
        shape = (max(m.K, 1), plan.q_order + 1, 2, self.dim, self.dim)
        self.kraus = np.zeros(shape, dtype=complex)
        self.kraus[..., 0, :, :] = eye
        for k in range(m.K):
            for l, tau in enumerate(plan.taus):
                self.kraus[k, l] = np.array(approx_kraus(build_dissipation(m, k + 1, tau)).kraus)

    def pair_unitaries(self, pairs) -> np.ndarray:
        return _controlled(
            pauli_matrices(pairs.ket_x, pairs.ket_z, self.n),
            pauli_matrices(pairs.bra_x, pairs.bra_z, self.n),
        )

    def leading_kraus(self, seg) -> np.ndarray:
        """Shape ``(N, 2, 2D, 2D)``; unitary blocks leave the second slot zero."""
        size = len(seg)
        out = np.zeros((size, 2, 2 * self.dim, 2 * self.dim), dtype=complex)
        eye = np.eye(self.dim)

        rot = seg.kind == GAMMA_ROTATION
        if rot.any():
            theta = self.thetas[seg.l[rot]]
            sign = self.h_signs[seg.rot_j[rot]]
            r = np.cos(theta)[:, None, None] * eye - 1j * (np.sin(theta) * sign)[:, None, None] * self.h_mats[
                seg.rot_j[rot]
            ]
            ket = (seg.nu[rot] == 1)[:, None, None]
            eyes = np.broadcast_to(eye, r.shape)
            out[rot, 0] = _controlled(np.where(ket, r, eyes), np.where(ket, eyes, r))

        diss = seg.kind == GAMMA_DISSIPATIVE
        if diss.any():
            b = self.kraus[seg.k[diss] - 1, seg.l[diss]]  # (N', 2, D, D)
            out[diss] = _controlled(b, b)

        pair = seg.kind == GAMMA_PAIR
        if pair.any():
            out[pair, 0] = self.pair_unitaries(seg.pair.take(pair))
        return out


def _folded_generators(seg) -> object:
    """All generator pairs of a segment composed into one, per circuit."""
    acc = identity_pairs(len(seg))
    for s, xg in enumerate(seg.xg):
        live = 2 * seg.l > s
        step = type(xg)(*(np.where(live, a, b) for a, b in zip(xg, identity_pairs(len(seg)))))
        acc = compose_pairs(acc, step)
    return acc


@dataclass
class BatchResult:
    values: np.ndarray
    terminated: np.ndarray
    circuits: dict[int, SampledCircuit]


def run_batch(
    plan: CircuitPlan,
    rho0: np.ndarray,
    meas: JointMeasurement,
    obs: np.ndarray,
    size: int,
    circuit_rng: np.random.Generator,
    shot_rng: np.random.Generator | None = None,
    mode: str = "exact",
    keep: tuple[int, ...] = (),
) -> BatchResult:
    """Draw ``size`` circuits and evaluate each one.

    In exact mode ``values[i]`` is the per-circuit trace (without the factor
    ``C``); in shots mode it is one measured ``b_X b_O`` (0 when terminated).
    Circuits listed in ``keep`` are also materialized for inspection.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    ops = _BatchOps(plan)
    d2 = 2 * ops.dim
    mats = np.broadcast_to(np.kron(PLUS, rho0), (size, d2, d2)).copy()
    phi = np.zeros(size)
    dead = np.zeros(size, dtype=bool)
    kept = {i: [] for i in keep}

    for seg in sample_segments(plan, size, circuit_rng):
        for i in kept:
            kept[i] += segment_blocks(plan, seg, i)
        gens = _folded_generators(seg)
        phi += gens.theta + np.where(seg.kind == GAMMA_PAIR, seg.pair.theta, 0.0)
        kr = ops.pair_unitaries(gens)[:, None] @ ops.leading_kraus(seg)
        mats = (kr @ mats[:, None] @ kr.conj().swapaxes(-1, -2)).sum(axis=1)
        if mode == "shots":
            diss = (seg.kind == GAMMA_DISSIPATIVE) & ~dead
            if diss.any():
                p = np.trace(mats[diss], axis1=1, axis2=2).real
                if p.min() < -1e-12:
                    raise StateError(f"negative success probability {p.min()}")
                ok = shot_rng.random(p.size) < p
                idx = np.flatnonzero(diss)
                dead[idx[~ok]] = True
                mats[idx[ok]] /= p[ok][:, None, None]
                mats[dead] = 0

    d = ops.dim
    mats[:, :d, d:] *= np.exp(1j * phi)[:, None, None]
    mats[:, d:, :d] *= np.exp(-1j * phi)[:, None, None]
    if mode == "exact":
        values = np.einsum("ab,nba->n", _x_obs(obs), mats).real
    else:
        values = meas.sample(mats, shot_rng)

    circuits = {}
    for i, blocks in kept.items():
        total = sum(b.theta for b in blocks if isinstance(b, AsymPauliPair)) % (2 * math.pi)
        circuits[i] = SampledCircuit(
            tuple(blocks) + (FinalPhase(total),), plan.c_total, plan.q_order, plan.r, plan.model
        )
    return BatchResult(values, dead, circuits)


@dataclass(frozen=True)
class EstimateReport:
    estimate: float
    t: float
    r: int
    q_order: int
    c_total: float
    n_samples: int
    mode: str
    delta: float
    obs_norm: float
    std_error: float
    terminated: int

    def hoeffding_radius(self, confidence: float = 0.95) -> float:
        return hoeffding_radius(self.c_total, self.obs_norm, self.n_samples, 1 - confidence)

    @property
    def hoeffding_95(self) -> float:
        return self.hoeffding_radius(0.95)


def hoeffding_radius(c_total: float, obs_norm: float, n_samples: int, fail_prob: float) -> float:
    """Two-sided Hoeffding radius for a mean of ``C b`` with ``|b| <= ||O||``."""
    return c_total * obs_norm * math.sqrt(2 * math.log(2 / fail_prob) / n_samples)


def _seed_sequence(rng) -> np.random.SeedSequence:
    if isinstance(rng, np.random.SeedSequence):
        return rng
    if isinstance(rng, np.random.Generator):
        return np.random.SeedSequence(int(rng.integers(2**63)))
    return np.random.SeedSequence(rng)


def estimate(
    m: LindbladModel,
    rho0: np.ndarray,
    obs,
    t: float,
    r: int | str | None = "auto",
    delta: float = 1e-2,
    n_samples: int = 1000,
    rng=None,
    mode: str = "exact",
    q_order: int | None = None,
    chunk_size: int = CHUNK_SIZE,
    workers: int = 1,
) -> EstimateReport:
    """Monte Carlo estimate of ``Tr[O e^{tL}(rho0)]``.

    Circuits are processed in chunks of ``chunk_size``; chunk ``c`` draws from
    the ``c``-th child of the seed sequence, so the result does not depend on
    ``workers``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    rho0 = check_density_matrix(rho0, m.n)
    obs = _observable(obs, m.n)
    if r is None or r == "auto":
        r = auto_segments(m, t)
    plan = plan_circuit(m, t, int(r), delta, q_order)
    meas = JointMeasurement.of(obs)

    sizes = [min(chunk_size, n_samples - s) for s in range(0, n_samples, chunk_size)]
    seeds = _seed_sequence(rng).spawn(len(sizes))

    def work(c: int) -> BatchResult:
        circ, shot = (np.random.default_rng(s) for s in seeds[c].spawn(2))
        return run_batch(plan, rho0, meas, obs, sizes[c], circ, shot, mode)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, range(len(sizes))))
    else:
        results = [work(c) for c in range(len(sizes))]

    values = np.concatenate([res.values for res in results])
    c_total = plan.c_total
    std = c_total * float(values.std(ddof=1)) / math.sqrt(n_samples) if n_samples > 1 else float("nan")
    return EstimateReport(
        estimate=c_total * float(values.mean()),
        t=float(t),
        r=plan.r,
        q_order=plan.q_order,
        c_total=c_total,
        n_samples=n_samples,
        mode=mode,
        delta=float(delta),
        obs_norm=meas.norm,
        std_error=std,
        terminated=int(sum(res.terminated.sum() for res in results)),
    )


# ---------------------------------------------------------------------------
# exact circuit-distribution average


def expected_segment_transfer(plan: CircuitPlan) -> np.ndarray:
    """``C_seg E[segment]`` as a dense transfer matrix, by branch enumeration.

    Its ``r``-th power is the mean of ``C`` times the circuit superoperator
    over the full circuit distribution, so comparing it with ``e^{tG}``
    measures the truncation bias without sampling noise.
    """
    m = plan.model
    dim = 1 << m.n
    eye = np.eye(dim)
    xg = enumerate_xg(m).transfer()
    pk = np.diff(plan.k_cum, prepend=0.0, axis=1)
    nu = np.diff(plan.nu_cum, prepend=0.0, axis=1)
    h_mats = [p.to_matrix() for p in m.hamiltonian.paulis]
    g3 = [enumerate_gamma3(m, k).transfer() for k in range(1, m.K + 1)]
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    for l, weight in enumerate(plan.weights):
        if weight == 0:
            continue
        tau, theta = plan.taus[l], plan.thetas[l]
        gamma = np.zeros_like(out)
        for j, (p, sign) in enumerate(zip(h_mats, m.h_signs)):
            rot = math.cos(theta) * eye - 1j * math.sin(theta) * sign * p
            pj = m.h_table.probs[j]
            gamma += pk[l, 0] * pj * 0.5 * (np.kron(eye, rot) + np.kron(rot.conj(), eye))
        for k in range(1, m.K + 1):
            kp = approx_kraus(build_dissipation(m, k, tau))
            blk = nu[l, 0] * (sandwich(kp.bp0) + sandwich(kp.bp1)) + nu[l, 2] * g3[k - 1]
            if tau > 0:
                blk = blk + nu[l, 1] * enumerate_xr(m, k, tau).transfer()
            gamma += pk[l, k] * blk
        out += weight * np.linalg.matrix_power(xg, 2 * l) @ gamma
    return out


def distribution_expectation(plan: CircuitPlan, rho0: np.ndarray, obs) -> float:
    """``C E[value]`` over the circuit distribution, computed without sampling."""
    rho0 = check_density_matrix(rho0, plan.model.n)
    obs = _observable(obs, plan.model.n)
    seg = expected_segment_transfer(plan)
    rho = unvec(np.linalg.matrix_power(seg, plan.r) @ vec(rho0))
    return float(np.trace(obs @ rho).real)
