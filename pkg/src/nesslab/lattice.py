"""Single-particle Hamiltonian of the open chain with power-law hopping.

The chain couples every pair of sites (i, j) with amplitude
``hopping / |i - j|**alpha``; there is no truncation radius.  ``alpha = 0``
is the all-to-all limit, large ``alpha`` approaches a nearest-neighbor
chain.  No Kac-type rescaling of the amplitude is applied; an optional
scalar ``prefactor`` hook exists but defaults to 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LatticeSpec:
    """Parameters of the chain: site count, hopping scale, decay exponent."""

    length: int
    alpha: float
    hopping: float = 1.0
    prefactor: float = 1.0

    def __post_init__(self):
        if int(self.length) != self.length or self.length < 1:
            raise ValueError(f"length must be a positive integer, got {self.length}")
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not np.isfinite(self.hopping) or self.hopping <= 0:
            raise ValueError(f"hopping must be positive, got {self.hopping}")
        if not np.isfinite(self.prefactor) or self.prefactor <= 0:
            raise ValueError(f"prefactor must be positive, got {self.prefactor}")


def hopping_amplitude(r: int, spec: LatticeSpec) -> float:
    """Hopping amplitude between two sites a distance ``r`` apart.

    ``r`` must satisfy ``1 <= r <= length - 1``.
    """
    if r < 1 or r >= spec.length:
        raise ValueError(f"distance r={r} outside 1..{spec.length - 1}")
    with np.errstate(over="ignore"):
        decay = np.float64(r) ** spec.alpha
    return float(spec.prefactor * spec.hopping / decay)


def build_hamiltonian(spec: LatticeSpec) -> np.ndarray:
    """Dense real symmetric hopping matrix with zero diagonal.

    Entry (i, j) is ``hopping / |i - j|**alpha`` for i != j.  Off-nearest
    entries underflow to zero for very large alpha, which reproduces the
    short-range limit without any explicit cutoff.
    """
    n = spec.length
    idx = np.arange(n)
    dist = np.abs(idx[:, None] - idx[None, :]).astype(float)
    np.fill_diagonal(dist, 1.0)  # dummy, diagonal zeroed below
    with np.errstate(over="ignore"):  # dist**alpha -> inf for huge alpha is fine
        h = spec.prefactor * spec.hopping / dist**spec.alpha
    np.fill_diagonal(h, 0.0)
    return h
