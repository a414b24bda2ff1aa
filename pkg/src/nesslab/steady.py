"""Exact steady state of the driven, dephased chain.

The stationary correlation matrix solves

    i H_eff C - i C H_eff^dag = P(diag C),

which after a bi-orthogonal eigendecomposition H_eff = Phi_R diag(lam) Phi_L^dag
turns into an elementwise division in the eigenbasis: for a diagonal pump P,

    C = Phi_R [ (Phi_L^dag P Phi_L) / (i (lam_p - conj(lam_q))) ] Phi_R^dag.

Since the pump itself contains dephasing * diag(C), the correlation diagonal
x = diag(C) satisfies the self-consistent linear system

    (I - dephasing * M) x = drive * b,

where M[i, k] and b[i] are diagonal elements of the steady-state response to
unit pumps at site k and at the extraction site.  M is never materialized on
the fast path: its action costs one O(L^3) eigenbasis sandwich, and the
system is solved with restarted GMRES on that operator.  A damped fixed
point and a dense direct solve (built column by column from the same
response) back the Krylov solve up for strongly dephased, large chains
where the operator develops a near-singular band of slow diffusive modes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, gmres

from .lattice import LatticeSpec, build_hamiltonian
from .lindblad import DissipationSpec, build_damping, build_effective_hamiltonian

#: largest chain for which the rank-3 response tensor may be touched
#: elementwise or the response matrix formed explicitly on request
DENSE_VALIDATION_MAX = 128

_BIORTHO_TOL = 1e-10
_RIGHT_COND_MAX = 1e12


class EigendecompositionError(RuntimeError):
    """Raised for (near-)defective effective Hamiltonians."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NessSolveError(RuntimeError):
    """Raised when the self-consistent solve does not converge."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history or []


@dataclass
class BiorthogonalEigensystem:
    """Eigenvalues and right/left eigenvector matrices with Phi_L^dag Phi_R = I."""

    values: np.ndarray  # (L,) complex, Im < 0 for drive > 0
    right: np.ndarray  # (L, L), columns are right eigenvectors
    left: np.ndarray  # (L, L), columns are left eigenvectors
    biortho_residual: float = 0.0

    @property
    def dim(self) -> int:
        return self.values.size

    def reconstruct(self) -> np.ndarray:
        """Phi_R diag(values) Phi_L^dag, for validation against H_eff."""
        return (self.right * self.values) @ self.left.conj().T


def biorthogonal_eig(h_eff: np.ndarray) -> BiorthogonalEigensystem:
    """Bi-orthogonal eigendecomposition of the effective Hamiltonian.

    Left eigenvectors come from the same LAPACK call as the right ones
    (i.e. from the right-eigenvector problem of H_eff^dag) and are rescaled
    so that Phi_L^dag Phi_R = I.  If the pairing is spoiled by numerically
    degenerate eigenvalues, the left basis is recomputed as the inverse
    adjoint of the right basis.  Raises if the matrix is near defective;
    callers may perturb the dephasing by <= 1e-10 and retry.
    """
    values, vl, vr = sla.eig(h_eff, left=True, right=True)
    overlap = np.einsum("ip,ip->p", vl.conj(), vr)
    bad = np.abs(overlap) < 1e-300
    if np.any(bad):
        raise EigendecompositionError(
            "vanishing left/right overlap: defective eigensystem"
        )
    left = vl / overlap.conj()[None, :]

    gram = left.conj().T @ vr
    residual = float(np.abs(gram - np.eye(gram.shape[0])).max())
    if residual > _BIORTHO_TOL:
        # mis-paired (near-degenerate) columns: fall back to the inverse basis
        left = np.linalg.inv(vr).conj().T
        gram = left.conj().T @ vr
        residual = float(np.abs(gram - np.eye(gram.shape[0])).max())
        if residual > _BIORTHO_TOL:
            raise EigendecompositionError(
                f"bi-orthonormality residual {residual:.3e} above "
                f"{_BIORTHO_TOL:.0e}",
                residual=residual,
            )

    cond = np.linalg.cond(vr)
    if cond > _RIGHT_COND_MAX:
        raise EigendecompositionError(
            f"right eigenbasis condition number {cond:.3e} above "
            f"{_RIGHT_COND_MAX:.0e}",
            residual=cond,
        )
    return BiorthogonalEigensystem(
        values=values, right=vr, left=left, biortho_residual=residual
    )


def _inverse_gaps(eig: BiorthogonalEigensystem, h_scale: float) -> np.ndarray:
    """Kernel 1 / (i (lam_p - conj(lam_q))), guarded against defective gaps."""
    lam = eig.values
    gaps = 1j * (lam[:, None] - lam.conj()[None, :])
    min_gap = np.abs(gaps).min()
    if min_gap < 1e-12 * max(h_scale, 1e-300):
        raise EigendecompositionError(
            f"eigenvalue gap {min_gap:.3e} too small relative to scale "
            f"{h_scale:.3e}: decomposition numerically defective"
        )
    return 1.0 / gaps


def sylvester_solve(eig: BiorthogonalEigensystem, pump_diag: np.ndarray) -> np.ndarray:
    """Stationary correlation matrix for a fixed diagonal pump.

    Solves i H_eff C - i C H_eff^dag = diag(pump_diag) in the eigenbasis;
    one O(L^3) operation.  Linear in the pump.
    """
    h_scale = float(np.abs(eig.values).max())
    inv_gaps = _inverse_gaps(eig, h_scale)
    pump_diag = np.asarray(pump_diag, dtype=float)
    sandwich = (eig.left.conj().T * pump_diag) @ eig.left
    c = (eig.right @ (sandwich * inv_gaps)) @ eig.right.conj().T
    return 0.5 * (c + c.conj().T)


def pump_kernel(eig: BiorthogonalEigensystem, i: int, j: int, k: int) -> complex:
    """Steady-state response of correlation element (i, j) to a unit pump at k.

    Indices are 0-based.  Available only for small systems: the rank-3
    kernel costs O(L^2) per element and is never formed on the production
    path.
    """
    n = eig.dim
    if n > DENSE_VALIDATION_MAX:
        raise ValueError(
            f"elementwise kernel limited to L <= {DENSE_VALIDATION_MAX}"
        )
    for name, idx in (("i", i), ("j", j), ("k", k)):
        if not 0 <= idx < n:
            raise IndexError(f"index {name}={idx} outside 0..{n - 1}")
    inv_gaps = _inverse_gaps(eig, float(np.abs(eig.values).max()))
    a = eig.right[i, :] * eig.left[k, :].conj()  # over p
    b = (eig.right[j, :] * eig.left[k, :].conj()).conj()  # over q
    return complex(a @ inv_gaps @ b)


def pump_kernel_matrix(eig: BiorthogonalEigensystem, k: int) -> np.ndarray:
    """Full (i, j) response matrix for a unit pump at site k (small systems)."""
    if eig.dim > DENSE_VALIDATION_MAX:
        raise ValueError(
            f"kernel matrices limited to L <= {DENSE_VALIDATION_MAX}"
        )
    pump = np.zeros(eig.dim)
    pump[k] = 1.0
    return sylvester_solve(eig, pump)


class _DiagonalResponse:
    """Action of the pump-diagonal -> correlation-diagonal response map."""

    def __init__(self, eig: BiorthogonalEigensystem):
        self.eig = eig
        self.inv_gaps = _inverse_gaps(eig, float(np.abs(eig.values).max()))
        self.applications = 0

    def apply(self, w: np.ndarray) -> np.ndarray:
        """diag of the stationary C for pump diag(w); O(L^3)."""
        self.applications += 1
        eig = self.eig
        sandwich = (eig.left.conj().T * w) @ eig.left
        half = eig.right @ (sandwich * self.inv_gaps)
        # diag(A B^dag) per row; the exact result is real
        return np.einsum("ip,ip->i", half, eig.right.conj()).real

    def dense_matrix(self) -> np.ndarray:
        """Explicit response matrix M, built one column per GEMM."""
        eig = self.eig
        n = eig.dim
        m = np.empty((n, n))
        for k in range(n):
            lk = eig.left[k, :].conj()
            a = eig.right * lk[None, :]
            b = a @ self.inv_gaps
            m[:, k] = np.einsum("iq,iq->i", b, a.conj()).real
            self.applications += 1
        return m


def _self_consistency_residual(x, mx, b, gamma, drive):
    target = gamma * mx + drive * b
    scale = np.linalg.norm(x)
    if scale == 0:
        return np.linalg.norm(target)
    return np.linalg.norm(x - target) / scale


@dataclass
class NessResult:
    """Steady-state observables plus solver diagnostics."""

    correlations: np.ndarray
    density: np.ndarray
    site_in_currents: np.ndarray  # length L-1, sites 2..L (0-based 1..L-1)
    cut_currents: np.ndarray  # length L-1, bond between m and m+1
    injected_current: float  # drive * (1 - n_first)
    current: float  # drive * n_last
    resistance: float
    iterations: int = 0
    residual: float = 0.0
    wall_time_s: float = 0.0
    method: str = ""
    diagnostics: dict = field(default_factory=dict)


def density_profile(c: np.ndarray) -> np.ndarray:
    """Site occupations 1 - Re diag(C); rejects non-physical input."""
    diag = np.diag(c)
    if np.abs(diag.imag).max() > 1e-10:
        raise ValueError(
            f"correlation diagonal has imaginary residue "
            f"{np.abs(diag.imag).max():.3e}"
        )
    density = 1.0 - diag.real
    if density.min() < -1e-9 or density.max() > 1.0 + 1e-9:
        raise ValueError(
            f"density outside [0, 1]: range [{density.min():.3e}, "
            f"{density.max():.3e}]"
        )
    return density


def site_in_current(c: np.ndarray, spec: LatticeSpec, m: int) -> float:
    """Coherent current flowing into site m from all sites to its left.

    0-based; m = 0 is rejected because the in-current at the first site is
    the lead current drive * (1 - n_first), exposed separately.
    """
    if m < 1 or m >= spec.length:
        raise ValueError(f"site index m={m} outside 1..{spec.length - 1}")
    r = np.arange(1, m + 1, dtype=float)
    weights = 2.0 * spec.prefactor * spec.hopping / r**spec.alpha
    return float(weights @ c[m, m - 1 :: -1].imag)


def site_in_current_profile(c: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    """Vector of in-currents for sites 2..L (0-based 1..L-1)."""
    h = build_hamiltonian(spec)
    flow = 2.0 * h * c.imag  # antisymmetric pairwise flows, row = receiving site
    return np.array(
        [flow[m, :m].sum() for m in range(1, spec.length)]
    )


def cut_current(c: np.ndarray, spec: LatticeSpec, m: int) -> float:
    """Total coherent current across the bond between sites m and m+1.

    0-based bond index 0 <= m <= L-2; positive means left-to-right flow.
    Sums every pair (i <= m < j), which is the conserved flux for
    long-range hopping.
    """
    if m < 0 or m >= spec.length - 1:
        raise ValueError(f"bond index m={m} outside 0..{spec.length - 2}")
    return float(cut_current_profile(c, spec)[m])


def cut_current_profile(c: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    """All L-1 cut currents at once via 2D prefix sums; O(L^2)."""
    h = build_hamiltonian(spec)
    flow = np.tril(2.0 * h * c.imag, k=-1)  # flow[j, i] = current i -> j, i < j
    col_prefix = np.cumsum(flow, axis=1)
    tail = np.cumsum(col_prefix[::-1], axis=0)[::-1]  # sum over rows >= j
    n = spec.length
    # cut m separates 0..m | m+1..: rows j >= m+1, columns i <= m
    return np.array([tail[m + 1, m] for m in range(n - 1)])


def _dense_solve(response, gamma, drive, b, history):
    m = response.dense_matrix()
    n = b.size
    x = np.linalg.solve(np.eye(n) - gamma * m, drive * b)
    history.append(_self_consistency_residual(x, response.apply(x), b, gamma, drive))
    return x


def _solve_diagonal_system(response, gamma, drive, b, tolerance, max_iterations,
                           restart, method):
    """Solve (I - gamma M) x = drive b; returns (x, method, history)."""
    n = b.size
    history = []

    if method == "direct":
        x = _dense_solve(response, gamma, drive, b, history)
        return x, "direct", history

    x0 = drive * b  # exact at gamma = 0
    # GMRES pays off only while it needs clearly fewer applications than
    # the dense column-by-column build
    budget = min(max_iterations, max(64, n)) if method == "auto" else max_iterations

    op = LinearOperator(
        (n, n),
        matvec=lambda v: v - gamma * response.apply(v),
        dtype=float,
    )
    x, _ = gmres(
        op,
        drive * b,
        x0=x0,
        rtol=min(tolerance, 1e-12),
        atol=0.0,
        restart=restart,
        maxiter=max(1, budget // restart),
    )
    res = _self_consistency_residual(x, response.apply(x), b, gamma, drive)
    history.append(res)
    if res <= tolerance:
        return x, "gmres", history
    if method == "gmres":
        raise NessSolveError(
            f"gmres stalled at self-consistency residual {res:.3e} "
            f"(tolerance {tolerance:.0e})",
            residual_history=history,
        )

    # Damped fixed point can rescue a nearly-converged Krylov solve; when
    # GMRES is far off, its contraction is far too slow to bother.
    if method == "fixed-point" or res < 1e-6:
        omega = 0.5
        x_fp = x
        fp_budget = max_iterations if method == "fixed-point" else 60
        prev = None
        for _ in range(fp_budget):
            mx = response.apply(x_fp)
            res = _self_consistency_residual(x_fp, mx, b, gamma, drive)
            history.append(res)
            if res <= tolerance:
                return x_fp, "fixed-point", history
            if prev is not None and res > 0.97 * prev:
                break  # contraction too slow to ever finish within budget
            prev = res
            x_fp = (1.0 - omega) * x_fp + omega * (gamma * mx + drive * b)
        if method == "fixed-point":
            raise NessSolveError(
                f"fixed-point iteration stalled at residual {history[-1]:.3e}",
                residual_history=history,
            )

    # terminal exact path: dense response matrix + direct solve
    x = _dense_solve(response, gamma, drive, b, history)
    if history[-1] > tolerance:
        raise NessSolveError(
            f"dense fallback residual {history[-1]:.3e} above tolerance "
            f"{tolerance:.0e}",
            residual_history=history,
        )
    return x, "dense-fallback", history


def solve_ness(
    spec: LatticeSpec,
    diss: DissipationSpec,
    tolerance: float = 1e-10,
    max_iterations: int = 500,
    restart: int = 30,
    method: str = "auto",
) -> NessResult:
    """Compute the unique steady state and its transport observables.

    ``method`` selects the solver for the diagonal self-consistency:
    "auto" (GMRES, then damped fixed point, then dense solve), "gmres",
    "fixed-point", or "direct" (explicit response matrix, validation path,
    L <= 128).  All paths agree to solver tolerance.
    """
    if method not in ("auto", "gmres", "fixed-point", "direct"):
        raise ValueError(f"unknown method {method!r}")
    if method == "direct" and spec.length > DENSE_VALIDATION_MAX:
        raise ValueError(
            f"direct validation path limited to L <= {DENSE_VALIDATION_MAX}"
        )
    t0 = time.perf_counter()
    h = build_hamiltonian(spec)
    h_eff = build_effective_hamiltonian(h, diss)
    eig = biorthogonal_eig(h_eff)
    if eig.values.imag.max() >= 0:
        raise EigendecompositionError(
            "effective Hamiltonian has an undamped eigenvalue; "
            "steady state not unique"
        )

    response = _DiagonalResponse(eig)
    unit_last = np.zeros(spec.length)
    unit_last[-1] = 1.0
    b = response.apply(unit_last)

    gamma, drive = diss.dephasing, diss.drive
    if gamma == 0.0:
        x = drive * b
        solve_method = "pump-only"
        history = [0.0]
    else:
        x, solve_method, history = _solve_diagonal_system(
            response, gamma, drive, b, tolerance, max_iterations, restart, method
        )

    def assemble(x_diag):
        c = sylvester_solve(eig, gamma * x_diag + drive * unit_last)
        density = density_profile(c)
        cuts = cut_current_profile(c, spec) if spec.length > 1 else np.array([])
        current = drive * density[-1]
        injected = drive * (1.0 - density[0])
        return c, density, cuts, current, injected

    c, density, cuts, current, injected = assemble(x)

    # The exact steady state conserves the current identically, so any
    # boundary/cut mismatch measures solution error that the ill-conditioned
    # residual cannot see.  Escalate iterative solutions that fail it.
    if solve_method in ("gmres", "fixed-point") and method == "auto":
        scale = max(abs(current), 1e-300)
        mismatch = abs(injected - current) / scale
        if cuts.size:
            mismatch = max(mismatch, np.abs(cuts - current).max() / scale)
        if not np.isfinite(mismatch) or mismatch > 1e-9:
            x = _dense_solve(response, gamma, drive, b, history)
            c, density, cuts, current, injected = assemble(x)
            solve_method = "dense-escalated"

    site_in = site_in_current_profile(c, spec) if spec.length > 1 else np.array([])
    return NessResult(
        correlations=c,
        density=density,
        site_in_currents=site_in,
        cut_currents=cuts,
        injected_current=injected,
        current=current,
        resistance=np.inf if current == 0 else 1.0 / current,
        iterations=response.applications,
        residual=history[-1],
        wall_time_s=time.perf_counter() - t0,
        method=solve_method,
        diagnostics={
            "biortho_residual": eig.biortho_residual,
            "residual_history": history,
        },
    )
