"""Dissipation structure and correlation-matrix dynamics.

The chain is driven at the boundaries (particle injection at the first
site, extraction at the last, both at rate ``drive``) and dephased on
every site at rate ``dephasing``.  The single-particle hole correlation
matrix ``C[n, m] = <c_n c_m^dag>`` then obeys a closed equation of motion

    dC/dt = -i [H, C] - {D, C} + P(diag C),

with a diagonal damping matrix ``D`` (dephasing/2 everywhere, plus
drive/2 on the boundary sites) and a diagonal pump
``P = dephasing * diag(C) + drive * e_last e_last^T``.  Equivalently
``dC/dt = -i H_eff C + i C H_eff^dag + P`` with ``H_eff = H - iD``,
whose damped spectrum guarantees relaxation to a unique steady state
for ``drive > 0``.

The jump-operator rates consistent with this equation are ``dephasing``
for the on-site number channels and ``drive`` for the boundary channels;
the many-body oracle in :mod:`nesslab.oracle` uses the same convention
so the two layers agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from threadpoolctl import threadpool_limits

from .lattice import LatticeSpec, build_hamiltonian


@dataclass(frozen=True)
class DissipationSpec:
    """Dephasing rate and boundary injection/extraction rate (units of hopping)."""

    dephasing: float
    drive: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.dephasing) or self.dephasing < 0:
            raise ValueError(f"dephasing must be >= 0, got {self.dephasing}")
        if not np.isfinite(self.drive) or self.drive <= 0:
            # drive = 0 leaves the steady state non-unique
            raise ValueError(f"drive must be > 0, got {self.drive}")


class IntegrationError(RuntimeError):
    """Raised when the fixed-step integrator produces unusable state."""


@dataclass
class Trajectory:
    """Sampled correlation-matrix trajectory from :func:`evolve`."""

    times: np.ndarray
    states: list
    final: np.ndarray
    steps: int = 0
    dt: float = 0.0
    stopped_early: bool = False
    diagnostics: dict = field(default_factory=dict)


def build_damping(spec: LatticeSpec, diss: DissipationSpec) -> np.ndarray:
    """Diagonal of the damping matrix D as a length-L vector.

    Every site gets dephasing/2; the first and last site additionally get
    drive/2 each.  For a single-site chain both boundary terms land on the
    same site.
    """
    d = np.full(spec.length, 0.5 * diss.dephasing)
    d[0] += 0.5 * diss.drive
    d[-1] += 0.5 * diss.drive
    return d


def build_pump(diag_c: np.ndarray, diss: DissipationSpec) -> np.ndarray:
    """Diagonal of the pump matrix P for a given correlation diagonal."""
    diag_c = np.asarray(diag_c, dtype=float)
    p = diss.dephasing * diag_c.copy()
    p[-1] += diss.drive
    return p


def build_effective_hamiltonian(h: np.ndarray, diss: DissipationSpec) -> np.ndarray:
    """Non-Hermitian single-particle matrix H - iD driving the relaxation."""
    n = h.shape[0]
    d = np.full(n, 0.5 * diss.dephasing)
    d[0] += 0.5 * diss.drive
    d[-1] += 0.5 * diss.drive
    h_eff = h.astype(complex, copy=True)
    h_eff[np.diag_indices(n)] -= 1j * d
    return h_eff


def correlation_rhs(c, h, damping, diss=None, pump=None):
    """Right-hand side -i[H,C] - {D,C} + P of the correlation equation.

    ``damping`` is the diagonal of D as a vector.  The pump diagonal is
    built from ``diss`` and diag(C) unless an explicit ``pump`` vector is
    supplied (test harnesses use that to switch channels off
    individually).  The result is Hermitian whenever C is.
    """
    if pump is None:
        if diss is None:
            raise ValueError("need either diss or an explicit pump vector")
        pump = build_pump(np.diag(c).real, diss)
    k = h @ c
    rhs = -1j * (k - k.conj().T)
    rhs -= damping[:, None] * c
    rhs -= damping[None, :] * c
    rhs[np.diag_indices(c.shape[0])] += pump
    return rhs


def _spectral_scale(h: np.ndarray, damping: np.ndarray) -> float:
    """Fastest rate in the generator, used to pick the integration step."""
    return float(np.abs(sla.eigvalsh(h)).max() + damping.max())


def evolve(
    c0: np.ndarray,
    t_final: float,
    spec: LatticeSpec,
    diss: DissipationSpec,
    n_samples: int = 10,
    step_budget: float = 0.1,
    stop_residual: float | None = None,
) -> Trajectory:
    """Integrate the correlation matrix with a fixed-step 4th-order scheme.

    The step is chosen so that ``h * (||H||_2 + max D) <= step_budget``
    (default 0.1) and then rounded so the samples land on uniform times.
    The state is re-Hermitized after every step to suppress drift.  If
    ``stop_residual`` is given, integration ends early once the Frobenius
    norm of the right-hand side falls below it.

    Returns the sampled trajectory including the initial state.
    """
    if t_final < 0:
        raise ValueError("t_final must be >= 0")
    c = np.array(c0, dtype=complex)
    h = build_hamiltonian(spec)
    damping = build_damping(spec, diss)
    if t_final == 0:
        return Trajectory(times=np.array([0.0]), states=[c.copy()], final=c)

    rate = _spectral_scale(h, damping)
    h_step = step_budget / rate if rate > 0 else t_final
    n_steps = max(1, int(np.ceil(t_final / h_step)))
    if n_steps > 5e8:
        raise IntegrationError(
            f"step underflow: {n_steps} steps needed for t_final={t_final} "
            f"(rate scale {rate:.3g})"
        )
    h_step = t_final / n_steps
    n_samples = max(1, min(n_samples, n_steps))
    sample_every = n_steps // n_samples

    h_eff = build_effective_hamiltonian(h, diss)
    gamma, drive = diss.dephasing, diss.drive
    n = spec.length
    diag = np.diag_indices(n)

    # minus_ih_eff @ C has Hermitian part equal to the full coherent+damping
    # term because C stays Hermitian: rhs = K + K^dag + pump, K = -i H_eff C
    minus_ih_eff = -1j * h_eff
    work = np.empty((n, n), dtype=complex)

    def rhs(x, out):
        np.matmul(minus_ih_eff, x, out=work)
        np.conjugate(work.T, out=out)
        out += work
        out_diag = np.einsum("ii->i", out)
        out_diag += gamma * np.einsum("ii->i", x).real
        out[-1, -1] += drive
        return out

    k1 = np.empty((n, n), dtype=complex)
    k2 = np.empty((n, n), dtype=complex)
    k3 = np.empty((n, n), dtype=complex)
    k4 = np.empty((n, n), dtype=complex)
    stage = np.empty((n, n), dtype=complex)

    times = [0.0]
    states = [c.copy()]
    stopped = False
    step = 0
    # BLAS worker handoff dominates small matmuls; run the tight loop
    # single-threaded below the crossover size
    limit = 1 if n <= 192 else None
    with threadpool_limits(limits=limit):
        for step in range(1, n_steps + 1):
            rhs(c, k1)
            np.multiply(k1, 0.5 * h_step, out=stage)
            stage += c
            rhs(stage, k2)
            np.multiply(k2, 0.5 * h_step, out=stage)
            stage += c
            rhs(stage, k3)
            np.multiply(k3, h_step, out=stage)
            stage += c
            rhs(stage, k4)
            k2 += k3
            k2 *= 2.0
            k1 += k4
            k1 += k2
            k1 *= h_step / 6.0
            c += k1
            np.conjugate(c.T, out=work)
            c += work
            c *= 0.5
            if step % sample_every == 0 or step == n_steps:
                if not np.all(np.isfinite(c)):
                    raise IntegrationError(
                        f"non-finite state at t={step * h_step:.6g} "
                        f"(step {step}, dt={h_step:.3g})"
                    )
                times.append(step * h_step)
                states.append(c.copy())
                if stop_residual is not None:
                    res = np.linalg.norm(rhs(c, stage))
                    if res <= stop_residual:
                        stopped = True
                        break

    return Trajectory(
        times=np.asarray(times),
        states=states,
        final=c,
        steps=step,
        dt=h_step,
        stopped_early=stopped,
    )
