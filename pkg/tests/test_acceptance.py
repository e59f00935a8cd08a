"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line to the terminal
(visible without ``-s``) before asserting, so a full run shows the summary even
when a criterion fails.
"""

import math
import time

import numpy as np
import pytest

from lindrand.channels import (
    STATED_CENSUS,
    approx_kraus,
    build_dissipation,
    completeness,
    correction_matrix,
    dissipation_transfer,
    kraus_transfer,
    oaa_block_encodings,
)
from lindrand.model import random_model, transfer_matrix, two_level_atom
from lindrand.oracle import exact_expectation, is_cptp, propagator, rk4_evolve
from lindrand.sampler import (
    auto_segments,
    correction_norm,
    enumerate_xg,
    enumerate_xr,
    jump_branch_weight,
    plan_circuit,
)
from lindrand.simulator import distribution_expectation, estimate

from conftest import random_density

TAU_GRID = (0.1, 0.5, 1.0, 2.0, 3.0)
TIME_GRID = (0.1, 1.0, 2.0, 3.0, 4.0, 5.0)
DELTA = 1e-2


@pytest.fixture
def report(capsys):
    def emit(num: int, ok: bool, detail: str, elapsed: float) -> None:
        with capsys.disabled():
            print(f"\ncriterion {num}: {'PASS' if ok else 'FAIL'} {detail} ({elapsed:.2f}s)")

    return emit


def _models():
    atom = two_level_atom()
    rand = [random_model(2, np.random.default_rng(s), n_hamiltonian=3, n_jumps=2, jump_terms=3) for s in (11, 12, 13)]
    return [atom, *rand]


def _ket0(n):
    rho = np.zeros((1 << n, 1 << n), dtype=complex)
    rho[0, 0] = 1
    return rho


def test_criterion_1_sampler_identities(report):
    start = time.perf_counter()
    xg_err = xr_err = 0.0
    for m in _models():
        xg_err = max(xg_err, np.linalg.norm(m.pauli_norm * enumerate_xg(m).transfer() - transfer_matrix(m)))
        for k in range(1, m.K + 1):
            for tau in TAU_GRID:
                want = correction_matrix(build_dissipation(m, k, tau))
                got = correction_norm(tau) * enumerate_xr(m, k, tau).transfer()
                xr_err = max(xr_err, np.linalg.norm(got - want))
    elapsed = time.perf_counter() - start
    ok = xg_err <= 1e-10 and xr_err <= 1e-10 and elapsed < 10
    report(1, ok, f"max XG err {xg_err:.2e}, max XR err {xr_err:.2e}", elapsed)
    assert ok


def test_criterion_2_exact_recovery(report):
    start = time.perf_counter()
    rec_err, lo, hi = 0.0, math.inf, -math.inf
    for m in _models():
        for k in range(1, m.K + 1):
            for tau in TAU_GRID:
                ops = build_dissipation(m, k, tau)
                kp = approx_kraus(ops)
                diff = dissipation_transfer(ops) - kraus_transfer(kp) - correction_matrix(ops)
                rec_err = max(rec_err, np.linalg.norm(diff))
                ev = np.linalg.eigvalsh(np.eye(ops.d.shape[0]) - completeness(kp))
                lo, hi = min(lo, ev.min()), max(hi, ev.max())
    elapsed = time.perf_counter() - start
    ok = rec_err <= 1e-10 and lo >= -1e-12 and hi <= 1 and elapsed < 5
    report(2, ok, f"max recovery err {rec_err:.2e}, defect eigenvalues in [{lo:.2e}, {hi:.3f}]", elapsed)
    assert ok


def test_criterion_3_oaa(report):
    start = time.perf_counter()
    reps = [oaa_block_encodings(two_level_atom(), 1, tau) for tau in TAU_GRID]
    elapsed = time.perf_counter() - start
    worst = max(c.deviation for rep in reps for c in rep.checks)
    findings = reps[0].census_findings
    census = ", ".join(f"{k}={reps[0].census[k]}" for k in STATED_CENSUS)
    ok = all(rep.passed for rep in reps) and elapsed < 5
    note = "; census matches the stated counts" if not findings else f"; census findings: {findings}"
    report(3, ok, f"max check err {worst:.2e}, OAA sign {reps[0].oaa_sign:+d}, {census}{note}", elapsed)
    assert ok


def test_criterion_4_coefficient_norm(report):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = -math.inf
    for _ in range(20):
        n = int(rng.integers(1, 3))
        m = random_model(n, rng, n_hamiltonian=int(rng.integers(1, 4)), n_jumps=int(rng.integers(1, 3)))
        t = float(rng.uniform(0.05, 1.0))
        r = math.ceil(t * m.pauli_norm) + int(rng.integers(0, 8))
        c = plan_circuit(m, t, r, DELTA).c_total
        # compare logs: log C - 2 ||L||^2 t^2 / r <= 0
        worst = max(worst, math.log(c) - 2 * m.pauli_norm**2 * t**2 / r)
    atom = two_level_atom()
    c_atom = [plan_circuit(atom, t, auto_segments(atom, t), DELTA).c_total for t in TIME_GRID]
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and max(c_atom) < 1.5 and elapsed < 5
    cs = ", ".join(f"{c:.3f}" for c in c_atom)
    report(4, ok, f"max log-bound slack {worst:.3f}; atom C(auto r) = [{cs}]", elapsed)
    assert ok


def test_criterion_5_truncation_order(report):
    start = time.perf_counter()
    atom = two_level_atom()
    qs = [plan_circuit(atom, t, auto_segments(atom, t), DELTA).q_order for t in TIME_GRID]
    elapsed = time.perf_counter() - start
    ok = max(qs) <= 11
    report(5, ok, f"Q over the grid = {qs}", elapsed)
    assert ok


def test_criterion_6_gamma_inequality(report):
    start = time.perf_counter()
    x = np.round(np.arange(0, 101) * 0.01, 10)
    ns = np.arange(50)
    fact = np.array([float(math.factorial(2 * k)) for k in ns])
    terms = x[:, None] ** (2 * ns[None, :]) / fact[None, :]
    lhs = (terms * jump_branch_weight(x[:, None] / (2 * ns[None, :] + 1))).sum(axis=1)
    ratio = lhs / np.exp(1.66 * x**2)
    elapsed = time.perf_counter() - start
    ok = ratio.max() <= 1 + 1e-15 and elapsed < 1
    report(6, ok, f"max lhs/bound {ratio.max():.6f} at x={x[ratio.argmax()]:.2f}", elapsed)
    assert ok


def test_criterion_7_end_to_end_bias(report):
    start = time.perf_counter()
    atom = two_level_atom()
    ket0 = _ket0(1)
    exact = exact_expectation(atom, ket0, ket0, 1.0)
    plan = plan_circuit(atom, 1.0, 4, DELTA)
    bias = abs(distribution_expectation(plan, ket0, ket0) - exact)
    rep = estimate(atom, ket0, ket0, 1.0, 4, DELTA, 100_000, rng=7, mode="exact")
    mc_err = abs(rep.estimate - exact)
    elapsed = time.perf_counter() - start
    ok = bias <= DELTA and mc_err <= DELTA + 3 * rep.std_error and elapsed < 300
    report(
        7,
        ok,
        f"r=4 Q={plan.q_order}: enumeration bias {bias:.2e}; "
        f"MC N=1e5 err {mc_err:.4f} vs Delta+3sigma {DELTA + 3 * rep.std_error:.4f}",
        elapsed,
    )
    assert ok


def test_criterion_8_shots_mode(report):
    start = time.perf_counter()
    atom = two_level_atom()
    ket0 = _ket0(1)
    n = 20_000
    seeds = np.random.SeedSequence(8).spawn(len(TIME_GRID))
    rows, ok = [], True
    for t, seed in zip(TIME_GRID, seeds):
        rep = estimate(atom, ket0, ket0, t, "auto", DELTA, n, rng=seed, mode="shots")
        err = abs(rep.estimate - exact_expectation(atom, ket0, ket0, t))
        tol = DELTA + rep.c_total * math.sqrt(math.log(2 / 0.01) / (2 * n))
        ok &= err <= tol
        rows.append(f"t={t:g}: r={rep.r} err={err:.4f} tol={tol:.4f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 1800
    report(8, ok, "; ".join(rows), elapsed)
    assert ok


def test_criterion_9_oracle_self_checks(report):
    start = time.perf_counter()
    semi = tp = rk4 = 0.0
    cptp = True
    cases = [(two_level_atom(), 5.0, 1e-4)] + [(m, 1.0, 1e-3) for m in _models()[1:]]
    for i, (m, t, dt) in enumerate(cases):
        dim = 1 << m.n
        whole, half = propagator(m, t), propagator(m, t / 2)
        semi = max(semi, np.abs(whole.exp_tg - half.exp_tg @ half.exp_tg).max())
        tp = max(tp, whole.trace_defect())
        cptp &= is_cptp(whole.exp_tg)
        rho0 = random_density(dim, np.random.default_rng(100 + i))
        rk4 = max(rk4, np.abs(rk4_evolve(m, rho0, t, dt) - whole.apply(rho0)).max())
    elapsed = time.perf_counter() - start
    ok = semi <= 1e-10 and tp <= 1e-10 and cptp and rk4 <= 1e-6 and elapsed < 30
    report(9, ok, f"semigroup {semi:.2e}, trace defect {tp:.2e}, CPTP {cptp}, RK4 {rk4:.2e}", elapsed)
    assert ok
