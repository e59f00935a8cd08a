"""Dissipative blocks, their recovery term, and the OAA block-encoding checks.

For a jump ``L`` with Pauli weight ``alpha`` and step ``tau`` the target Kraus
pair is ``B_0 = 1 - (tau/2) L^dag L / alpha^2`` and ``B_1 = sqrt(tau) L / alpha``.
It is not trace non-increasing, so circuits run the amplified pair
``B'_lam = B_lam (1 - tau^2 D / 8)`` with ``D = (L^dag L)^2 / alpha^4`` instead,
and the difference ``R = B - B'`` is resampled as Pauli pairs.

The second half of the module builds the amplitude-amplified circuit
explicitly as dense unitaries, which is only used for verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConsistencyError, DomainError, ModelError
from .model import LindbladModel
from .pauli import DENSE_LIMIT, check_dense
from .vectorize import sandwich

TOL = 1e-10


@dataclass(frozen=True)
class DissipationOps:
    b0: np.ndarray
    b1: np.ndarray
    d: np.ndarray
    tau: float


@dataclass(frozen=True)
class KrausPair:
    bp0: np.ndarray
    bp1: np.ndarray

    @property
    def kraus(self) -> tuple[np.ndarray, np.ndarray]:
        return self.bp0, self.bp1


def _jump(m: LindbladModel, k: int) -> tuple[np.ndarray, float]:
    if not 1 <= k <= m.K:
        raise ModelError(f"jump index k={k} out of range 1..{m.K}")
    check_dense(m.n)
    jump = m.jumps[k - 1]
    return jump.to_matrix(), jump.alpha


def build_dissipation(m: LindbladModel, k: int, tau: float) -> DissipationOps:
    if not 0 <= tau <= 3:
        raise DomainError(f"tau must lie in [0, 3], got {tau}")
    lk, a = _jump(m, k)
    ll = lk.conj().T @ lk / a**2
    eye = np.eye(lk.shape[0])
    return DissipationOps(eye - 0.5 * tau * ll, math.sqrt(tau) * lk / a, ll @ ll, float(tau))


def approx_kraus(ops: DissipationOps) -> KrausPair:
    """The trace non-increasing pair ``B'_lam = B_lam (1 - tau^2 D / 8)``."""
    shrink = np.eye(ops.d.shape[0]) - ops.tau**2 / 8 * ops.d
    kp = KrausPair(ops.b0 @ shrink, ops.b1 @ shrink)
    top = np.linalg.eigvalsh(completeness(kp)).max()
    if top > 1 + 1e-12:
        raise ConsistencyError(f"Kraus pair is not trace non-increasing (max eigenvalue {top})")
    return kp


def completeness(kp: KrausPair) -> np.ndarray:
    """``sum_lam B'^dag B'``."""
    return sum(b.conj().T @ b for b in kp.kraus)


def dissipation_transfer(ops: DissipationOps) -> np.ndarray:
    """``S(B) = sum_lam conj(B_lam) (x) B_lam``."""
    return sandwich(ops.b0) + sandwich(ops.b1)


def kraus_transfer(kp: KrausPair) -> np.ndarray:
    return sandwich(kp.bp0) + sandwich(kp.bp1)


def correction_matrix(ops: DissipationOps) -> np.ndarray:
    """Dense transfer matrix of the recovery superoperator ``R``."""
    t2, t4 = ops.tau**2 / 8, ops.tau**4 / 64
    out = 0
    for b in (ops.b0, ops.b1):
        bd = b @ ops.d
        out = out + t2 * sandwich(bd, b) + t2 * sandwich(b, bd) - t4 * sandwich(bd)
    return np.asarray(out, dtype=complex)


# ---------------------------------------------------------------------------
# explicit amplitude-amplified circuit


def _ry(c0: float, c1: float) -> np.ndarray:
    """Real rotation sending |0> to ``c0|0> + c1|1>``."""
    return np.array([[c0, -c1], [c1, c0]], dtype=complex)


P0 = np.diag([1.0, 0.0]).astype(complex)
P1 = np.diag([0.0, 1.0]).astype(complex)


@dataclass
class Gate:
    name: str
    kind: str  # single | mcx | w_l | c_w_l
    matrix: np.ndarray = field(repr=False)


@dataclass
class CheckResult:
    name: str
    deviation: float
    passed: bool
    note: str = ""


@dataclass
class OAAReport:
    """Outcome of the dense block-encoding verification."""

    n: int
    lcu_qubits: int
    tau: float
    checks: list[CheckResult]
    census: dict[str, int]
    expected_census: dict[str, int]
    oaa_sign: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def census_findings(self) -> list[str]:
        return [
            f"{key}: built {self.census.get(key)} vs stated {val}"
            for key, val in self.expected_census.items()
            if self.census.get(key) != val
        ]

    def format(self) -> str:
        lines = [
            f"oaa_verification n={self.n} lcu_qubits={self.lcu_qubits} tau={self.tau!r}",
            f"total_qubits={self.n + self.lcu_qubits + 3}",
        ]
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            note = f" note={c.note}" if c.note else ""
            lines.append(f"check {c.name} max_dev={c.deviation:.3e} {status}{note}")
        for key, val in self.census.items():
            lines.append(f"census {key}={val} stated={self.expected_census.get(key)}")
        findings = self.census_findings
        lines.append("census_findings=" + ("none" if not findings else "; ".join(findings)))
        lines.append(f"oaa_sign={self.oaa_sign:+d}")
        return "\n".join(lines) + "\n"


class _Register:
    """Qubit layout ``[a, p, b, lcu..., sys...]`` with big-endian Kronecker order."""

    def __init__(self, lcu: int, n: int):
        self.lcu, self.n = lcu, n
        self.width = 3 + lcu + n
        self.dim = 1 << self.width

    def embed(self, a=None, p=None, b=None, lcu=None, sys=None) -> np.ndarray:
        """Tensor together per-register operators (identity where omitted)."""
        parts = [
            a if a is not None else np.eye(2),
            p if p is not None else np.eye(2),
            b if b is not None else np.eye(2),
            lcu if lcu is not None else np.eye(1 << self.lcu),
            sys if sys is not None else np.eye(1 << self.n),
        ]
        out = parts[0]
        for op in parts[1:]:
            out = np.kron(out, op)
        return out

    def lcu_sys(self, op: np.ndarray) -> np.ndarray:
        """Embed an operator acting jointly on the LCU and system registers."""
        return np.kron(np.eye(8), op)


def _lcu_walk(m: LindbladModel, k: int, lcu: int) -> np.ndarray:
    """``W_L = (PRE^dag (x) 1) SEL (PRE (x) 1)`` on the LCU and system registers."""
    jump = m.jumps[k - 1]
    size = 1 << lcu
    amps = np.zeros(size)
    amps[: len(jump.table)] = np.sqrt(jump.probs)
    pre = _householder(amps)
    dim = 1 << m.n
    sel = np.zeros((size * dim, size * dim), dtype=complex)
    for j in range(size):
        if j < len(jump.table):
            c, p = jump.terms.terms[j]
            block = np.exp(1j * np.angle(c)) * p.to_matrix()
        else:
            block = np.eye(dim)
        sel[j * dim : (j + 1) * dim, j * dim : (j + 1) * dim] = block
    pre_full = np.kron(pre, np.eye(dim))
    return pre_full.conj().T @ sel @ pre_full


def _householder(v: np.ndarray) -> np.ndarray:
    """Reflection mapping ``|0>`` to the real unit vector ``v``."""
    v = np.asarray(v, dtype=complex)
    e = np.zeros_like(v)
    e[0] = 1.0
    w = v - e
    norm = np.linalg.norm(w)
    if norm < 1e-15:
        return np.eye(v.size, dtype=complex)
    w = w / norm
    return np.eye(v.size, dtype=complex) - 2 * np.outer(w, w.conj())


def _zero_proj(bits: int) -> np.ndarray:
    out = np.zeros((1 << bits, 1 << bits), dtype=complex)
    out[0, 0] = 1.0
    return out


def build_oaa_circuit(m: LindbladModel, k: int, tau: float):
    """Dense gates of ``U = (R_y (x) 1)(1 (x) W_B)`` and ``V = U(1-2Pi)U^dag(2Pi~-1)U``.

    Returns:
        ``(register, w_b0, u, v, gates)`` where ``gates`` lists every gate of
        ``V`` in application order.
    """
    if not 0 <= tau <= 3:
        raise DomainError(f"tau must lie in [0, 3], got {tau}")
    _jump(m, k)
    lcu = max(1, math.ceil(math.log2(max(len(m.jumps[k - 1].table), 1))))
    if m.n + lcu > DENSE_LIMIT:
        raise CapacityError(f"OAA circuit on {m.n + lcu + 3} qubits exceeds the dense limit")
    reg = _Register(lcu, m.n)
    w_l = _lcu_walk(m, k, lcu)
    lz = _zero_proj(lcu)
    ref = np.eye(1 << lcu) - 2 * lz  # 1 - 2|0><0| on the LCU register
    eye_sys = np.eye(1 << m.n)

    pre_b = _ry(math.sqrt(tau / 4), math.sqrt(1 - tau / 4))
    pre_p = _ry(1 / math.sqrt(1 + tau), math.sqrt(tau / (1 + tau)))
    ry_a = _ry(math.sqrt(1 + tau) / 2, math.sqrt((3 - tau) / 4))

    # W_B on (p, b, lcu, sys)
    g_pre_p = Gate("PRE'", "single", reg.embed(p=pre_p))
    g_wl = Gate("W_L", "w_l", reg.lcu_sys(w_l))
    g_pre_b = Gate("PRE", "single", reg.embed(b=pre_b))
    ref_full = np.kron(ref, eye_sys)
    lcu_sys_dim = ref_full.shape[0]
    cref = reg.embed(p=P0, b=P0, lcu=ref) + (
        np.eye(reg.dim) - reg.embed(p=P0, b=P0)
    )
    g_ref = Gate("REF|p=0,b=0", "mcx", cref)
    g_pre_b_dag = Gate("PRE^dag", "single", reg.embed(b=pre_b.conj().T))
    cw = reg.embed(p=P0) @ reg.lcu_sys(w_l.conj().T) + reg.embed(p=P1)
    g_cwl = Gate("W_L^dag|p=0", "c_w_l", cw)
    w_b_gates = [g_pre_p, g_wl, g_pre_b, g_ref, g_pre_b_dag, g_cwl]
    g_ry = Gate("R_y", "single", reg.embed(a=ry_a))
    u_gates = w_b_gates + [g_ry]

    def product(gates):
        out = np.eye(reg.dim, dtype=complex)
        for g in gates:
            out = g.matrix @ out
        return out

    u = product(u_gates)
    u_dag_gates = [Gate(g.name + "^dag", g.kind, g.matrix.conj().T) for g in reversed(u_gates)]
    pi_in = reg.embed(a=P0, p=P0, b=P0, lcu=lz)
    pi_out = reg.embed(a=P0, b=P0, lcu=lz)
    refl_in = Gate("1-2Pi", "mcx", np.eye(reg.dim) - 2 * pi_in)
    refl_out = Gate("2Pi~-1", "mcx", 2 * pi_out - np.eye(reg.dim))
    gates = u_gates + [refl_out] + u_dag_gates + [refl_in] + u_gates
    v = product(gates)

    # W_B0 on (b, lcu, sys), used for the first check
    pre = np.kron(pre_b, np.eye(lcu_sys_dim))
    wl = np.kron(np.eye(2), w_l)
    cref0 = np.kron(P0, ref_full) + np.kron(P1, np.eye(lcu_sys_dim))
    w_b0 = pre.conj().T @ wl.conj().T @ cref0 @ wl @ pre
    return reg, w_b0, u, v, gates


STATED_CENSUS = {"single_qubit": 12, "multi_controlled_not": 5, "w_l": 3, "controlled_w_l": 3}


def oaa_block_encodings(m: LindbladModel, k: int, tau: float) -> OAAReport:
    """Build the amplified dissipative block densely and check its encodings."""
    ops = build_dissipation(m, k, tau)
    kp = approx_kraus(ops)
    lk, a = _jump(m, k)
    reg, w_b0, u, v, gates = build_oaa_circuit(m, k, tau)
    dim_sys = 1 << m.n
    lcu_dim = 1 << reg.lcu
    checks = []

    # (a) <0|<0|W_B0|0>|0> = 1 - tau L^dag L / (2 alpha^2)
    blk = w_b0[:dim_sys, :dim_sys]
    target = np.eye(dim_sys) - tau * lk.conj().T @ lk / (2 * a**2)
    checks.append(_check("a:W_B0_block", blk, target))

    # (b) Pi~ U Pi = 1/2 sum_lam |0><0|_a (x) |lam><0|_p (x) |0><0|_b (x) |0><0|_lcu (x) B_lam
    pi_in = reg.embed(a=P0, p=P0, b=P0, lcu=_zero_proj(reg.lcu))
    pi_out = reg.embed(a=P0, b=P0, lcu=_zero_proj(reg.lcu))
    lz = _zero_proj(reg.lcu)
    raise_p = np.array([[0, 0], [1, 0]], dtype=complex)
    expect_u = 0.5 * (
        reg.embed(a=P0, p=P0, b=P0, lcu=lz, sys=ops.b0) + reg.embed(a=P0, p=raise_p, b=P0, lcu=lz, sys=ops.b1)
    )
    checks.append(_check("b:U_block", pi_out @ u @ pi_in, expect_u))

    # (c) Pi~ V Pi = s W (1 - tau^2 D / 8) with W = 2 Pi~ U Pi
    w = 2 * pi_out @ u @ pi_in
    d_embed = reg.embed(a=P0, p=P0, b=P0, lcu=lz, sys=ops.d)
    expect_v = w @ (pi_in - tau**2 / 8 * d_embed)
    got_v = pi_out @ v @ pi_in
    dev_plus = float(np.abs(got_v - expect_v).max())
    dev_minus = float(np.abs(got_v + expect_v).max())
    sign = 1 if dev_plus <= dev_minus else -1
    checks.append(
        CheckResult("c:V_OAA_block", min(dev_plus, dev_minus), min(dev_plus, dev_minus) <= TOL, f"sign={sign:+d}")
    )

    # induced Kraus operators equal sign * B'_lam
    def amp(lam):
        row = ((0 * 2 + lam) * 2 + 0) * lcu_dim * dim_sys
        return v[row : row + dim_sys, :dim_sys]

    dev = max(np.abs(amp(0) - sign * kp.bp0).max(), np.abs(amp(1) - sign * kp.bp1).max())
    checks.append(CheckResult("c:kraus_from_V", float(dev), dev <= TOL))

    # success probability = <psi| sum B'^dag B' |psi> on random inputs
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(4):
        psi = rng.normal(size=dim_sys) + 1j * rng.normal(size=dim_sys)
        psi /= np.linalg.norm(psi)
        full = np.zeros(reg.dim, dtype=complex)
        full[:dim_sys] = psi
        out = pi_out @ v @ full
        p_succ = np.vdot(out, out).real
        worst = max(worst, abs(p_succ - np.vdot(psi, completeness(kp) @ psi).real))
    checks.append(CheckResult("success_probability", worst, worst <= TOL))

    checks.append(_check("unitarity:V", v.conj().T @ v, np.eye(reg.dim)))

    census = {key: 0 for key in STATED_CENSUS}
    names = {"single": "single_qubit", "mcx": "multi_controlled_not", "w_l": "w_l", "c_w_l": "controlled_w_l"}
    for g in gates:
        census[names[g.kind]] += 1
    census["ancilla_qubits"] = reg.lcu + 3
    expected = dict(STATED_CENSUS, ancilla_qubits=reg.lcu + 3)
    return OAAReport(m.n, reg.lcu, float(tau), checks, census, expected, sign)


def _check(name: str, got: np.ndarray, want: np.ndarray) -> CheckResult:
    dev = float(np.abs(got - want).max())
    return CheckResult(name, dev, dev <= TOL)
