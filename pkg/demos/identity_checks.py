"""Exhaustive checks of the sampling identities behind the estimator.

Each sampler is a probability distribution over asymmetric Pauli pairs
e^{i theta} P . Q^dagger. Summing every branch with its probability must give
back the superoperator it stands for:

* generator sampler:  ||L||_pauli E[X_G] = G
* recovery sampler:   ||R|| E[X_R] = R_k(tau)
* recovery identity:  S(B) = S(B') + S(R), with B' the amplified Kraus map

Frobenius errors are printed for the atom and two random two-qubit models.
"""

import numpy as np

from lindrand.channels import (
    approx_kraus,
    build_dissipation,
    correction_matrix,
    dissipation_transfer,
    kraus_transfer,
)
from lindrand.model import random_model, transfer_matrix, two_level_atom
from lindrand.sampler import correction_norm, enumerate_xg, enumerate_xr

TAUS = (0.1, 0.5, 1.0, 2.0, 3.0)


def main() -> None:
    models = {"atom": two_level_atom()}
    for seed in (1, 2):
        models[f"random(n=2, seed={seed})"] = random_model(2, np.random.default_rng(seed), n_jumps=2)

    for name, m in models.items():
        table = enumerate_xg(m)
        err_g = np.linalg.norm(m.pauli_norm * table.transfer() - transfer_matrix(m))
        print(f"{name}: {len(table)} generator branches, error {err_g:.2e}")
        for k in range(1, m.K + 1):
            for tau in TAUS:
                want = correction_matrix(build_dissipation(m, k, tau))
                xr = enumerate_xr(m, k, tau)
                err_r = np.linalg.norm(correction_norm(tau) * xr.transfer() - want)
                ops = build_dissipation(m, k, tau)
                err_b = np.linalg.norm(dissipation_transfer(ops) - kraus_transfer(approx_kraus(ops)) - want)
                print(f"  k={k} tau={tau:<4g} {len(xr):>7} recovery branches, error {err_r:.2e}; B - B' - R {err_b:.2e}")


if __name__ == "__main__":
    main()
