"""Brute-force many-body steady state for small chains.

Builds fermionic ladder operators on the full 2^L Fock space via the
Jordan-Wigner construction, assembles the vectorized Lindblad generator,
and extracts the steady state from its null space.  This is exponentially
expensive and capped at L = 6; it exists purely as ground truth for the
correlation-matrix machinery.

Vectorization is column-stacking, so with vec(A X B) = (B^T kron A) vec(X)
the generator reads

    Liou = -i (I kron H - H^T kron I)
           + sum_mu [ conj(L_mu) kron L_mu
                      - 1/2 I kron (L_mu^dag L_mu)
                      - 1/2 (L_mu^dag L_mu)^T kron I ].

Sign and transpose mistakes here are the classic failure mode, hence the
convention is spelled out and unit-tested against trace preservation.

Jump operators: sqrt(dephasing) n_j on every site, sqrt(drive) c_1^dag
(injection) and sqrt(drive) c_L (extraction), matching the rate
convention of :mod:`nesslab.lindblad`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .lattice import LatticeSpec, build_hamiltonian
from .lindblad import DissipationSpec

MAX_SITES = 6

_SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]])  # |empty><occupied|
_PARITY = np.diag([1.0, -1.0])
_ID2 = np.eye(2)


class OracleError(RuntimeError):
    """Raised when the many-body steady state cannot be extracted."""


@dataclass
class FockOperatorSet:
    """Dense 2^L x 2^L ladder and number operators with fermionic signs."""

    lowering: list  # c_j
    number: list  # n_j = c_j^dag c_j

    @property
    def dim(self) -> int:
        return self.lowering[0].shape[0]


def fock_operators(length: int) -> FockOperatorSet:
    """Jordan-Wigner ladder operators; site 1 is the leftmost tensor factor."""
    if length > MAX_SITES:
        raise OracleError(f"refusing {length} sites: 2^L blowup (max {MAX_SITES})")
    lowering = []
    for j in range(length):
        factors = [_PARITY] * j + [_SIGMA_MINUS] + [_ID2] * (length - j - 1)
        op = factors[0]
        for f in factors[1:]:
            op = np.kron(op, f)
        lowering.append(op)
    number = [c.conj().T @ c for c in lowering]
    return FockOperatorSet(lowering=lowering, number=number)


def _jump_operators(spec: LatticeSpec, diss: DissipationSpec, ops: FockOperatorSet):
    jumps = [np.sqrt(diss.dephasing) * n for n in ops.number]
    jumps.append(np.sqrt(diss.drive) * ops.lowering[0].conj().T)
    jumps.append(np.sqrt(diss.drive) * ops.lowering[-1])
    return jumps


def many_body_hamiltonian(spec: LatticeSpec, ops: FockOperatorSet) -> np.ndarray:
    h1 = build_hamiltonian(spec)
    dim = ops.dim
    h = np.zeros((dim, dim), dtype=complex)
    for i in range(spec.length):
        ci = ops.lowering[i]
        for j in range(i + 1, spec.length):
            hop = h1[i, j] * (ci.conj().T @ ops.lowering[j])
            h += hop + hop.conj().T
    return h


def build_liouvillian(spec: LatticeSpec, diss: DissipationSpec) -> np.ndarray:
    """Dense 4^L x 4^L generator acting on column-stacked density matrices."""
    if spec.length > MAX_SITES:
        raise OracleError(
            f"refusing {spec.length} sites: 4^L blowup (max {MAX_SITES})"
        )
    ops = fock_operators(spec.length)
    h = many_body_hamiltonian(spec, ops)
    dim = ops.dim
    eye = np.eye(dim)
    liou = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for l_op in _jump_operators(spec, diss, ops):
        ldl = l_op.conj().T @ l_op
        liou += np.kron(l_op.conj(), l_op)
        liou -= 0.5 * np.kron(eye, ldl)
        liou -= 0.5 * np.kron(ldl.T, eye)
    return liou


def oracle_ness(spec: LatticeSpec, diss: DissipationSpec):
    """Steady-state density matrix and hole correlation matrix.

    The steady state is the (unique, for drive > 0) null vector of the
    generator, found by dense eigendecomposition; it is Hermitized and
    trace-normalized before observables are taken.

    Returns ``(rho, corr)`` with ``corr[n, m] = Tr[rho c_n c_m^dag]``.
    """
    liou = build_liouvillian(spec, diss)
    w, v = sla.eig(liou)
    scale = np.abs(w).max()
    null_tol = 1e-10 * max(scale, 1.0)
    null_idx = np.flatnonzero(np.abs(w) <= null_tol)
    if len(null_idx) != 1:
        raise OracleError(
            f"null space dimension {len(null_idx)} != 1 "
            f"(eigenvalue magnitudes near zero: {np.sort(np.abs(w))[:3]})"
        )
    dim = int(np.sqrt(liou.shape[0]) + 0.5)
    rho = v[:, null_idx[0]].reshape((dim, dim), order="F")
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real

    ops = fock_operators(spec.length)
    n = spec.length
    corr = np.empty((n, n), dtype=complex)
    for i in range(n):
        rho_ci = rho @ ops.lowering[i]
        for j in range(n):
            # Tr[rho c_i c_j^dag] = sum (rho c_i) * conj(c_j) elementwise
            corr[i, j] = np.sum(rho_ci * ops.lowering[j].conj())
    return rho, corr


def oracle_boundary_currents(spec: LatticeSpec, diss: DissipationSpec, rho=None):
    """(injected, extracted) currents Tr[rho drive (1 - n_1)], Tr[rho drive n_L]."""
    if rho is None:
        rho, _ = oracle_ness(spec, diss)
    ops = fock_operators(spec.length)
    n_first = np.trace(rho @ ops.number[0]).real
    n_last = np.trace(rho @ ops.number[-1]).real
    return diss.drive * (1.0 - n_first), diss.drive * n_last
