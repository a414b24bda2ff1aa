"""System-size scaling fits and transport-regime classification.

Steady-state resistance against chain length is fitted with three nested
models: logarithmic (R = a ln L + b), power law (ln R = nu ln L + c) and
constant.  Each model's parameters come from ordinary least squares in
its natural space; for model selection all three are scored with a
small-sample-corrected information criterion computed on a common
response (log resistance), since the log and power models would otherwise
live in different spaces.  The winning model plus the fitted exponent map
onto standard transport labels: resistance growing like L is diffusive,
slower growth (power nu < 1 or log) is super-diffusive, faster is
sub-diffusive, and size-independent resistance is ballistic.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

MODEL_LOG = "LOG"
MODEL_POWER = "POWER"
MODEL_CONST = "CONST"

REGIME_DIFFUSIVE = "DIFFUSIVE"
REGIME_SUPER_POWER = "SUPERDIFFUSIVE_POWER"
REGIME_SUPER_LOG = "SUPERDIFFUSIVE_LOG"
REGIME_SUBDIFFUSIVE = "SUBDIFFUSIVE"
REGIME_BALLISTIC = "BALLISTIC"

_MIN_POINTS = 4
_TINY_RSS = 1e-280


class FitError(ValueError):
    """Raised for degenerate or insufficient scaling data."""


class ExponentCurveError(RuntimeError):
    """Raised when a solver run inside the exponent sweep fails."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial or []


@dataclass(frozen=True)
class ScalingSeries:
    """Resistance-vs-size data at fixed model parameters."""

    alpha: float
    gamma: float
    drive: float
    lengths: tuple
    currents: tuple

    def __post_init__(self):
        lengths = np.asarray(self.lengths, dtype=float)
        currents = np.asarray(self.currents, dtype=float)
        if lengths.size != currents.size:
            raise FitError("lengths and currents must have equal size")
        if lengths.size < _MIN_POINTS:
            raise FitError(f"need >= {_MIN_POINTS} sizes, got {lengths.size}")
        if np.any(np.diff(lengths) <= 0):
            raise FitError("lengths must be strictly increasing")
        if np.any(currents <= 0):
            raise FitError("all currents must be positive")

    @property
    def resistances(self) -> np.ndarray:
        return 1.0 / np.asarray(self.currents, dtype=float)


@dataclass(frozen=True)
class ScalingFit:
    """Fitted model with parameters, uncertainties and selection score."""

    model: str
    params: tuple  # (slope or exponent, intercept or prefactor)
    stderr: tuple
    r_squared: float
    aic: float
    diagnostics: dict = field(default_factory=dict)


def _ols(x: np.ndarray, y: np.ndarray):
    """Two-parameter least squares; returns coef, stderr, r2, residuals."""
    design = np.column_stack([x, np.ones_like(x)])
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    rss = float(resid @ resid)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if tss == 0 else max(0.0, 1.0 - rss / tss)
    dof = x.size - 2
    sigma2 = rss / dof if dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(design.T @ design)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return coef, se, r2, resid


def _aicc(log_resid: np.ndarray, n_params: int) -> float:
    """Corrected information criterion from common-space residuals."""
    n = log_resid.size
    rss = max(float(log_resid @ log_resid), _TINY_RSS)
    k = n_params + 1  # count the noise scale as a parameter
    aic = n * np.log(rss / n) + 2.0 * k
    if n - k - 1 > 0:
        aic += 2.0 * k * (k + 1) / (n - k - 1)
    return float(aic)


def fit_log(series: ScalingSeries) -> ScalingFit:
    """Least squares of resistance against ln(length)."""
    x = np.log(np.asarray(series.lengths, dtype=float))
    r = series.resistances
    coef, se, r2, _ = _ols(x, r)
    predicted = coef[0] * x + coef[1]
    if np.any(predicted <= 0):
        log_resid = np.full(r.size, np.inf)
        aic = np.inf
    else:
        log_resid = np.log(r) - np.log(predicted)
        aic = _aicc(log_resid, 2)
    return ScalingFit(
        model=MODEL_LOG,
        params=(float(coef[0]), float(coef[1])),
        stderr=(float(se[0]), float(se[1])),
        r_squared=r2,
        aic=aic,
    )


def fit_powerlaw(series: ScalingSeries) -> ScalingFit:
    """Least squares of ln(resistance) against ln(length); slope is nu."""
    x = np.log(np.asarray(series.lengths, dtype=float))
    y = np.log(series.resistances)
    coef, se, r2, resid = _ols(x, y)
    exponent = float(coef[0])
    prefactor = float(np.exp(coef[1]))
    return ScalingFit(
        model=MODEL_POWER,
        params=(exponent, prefactor),
        stderr=(float(se[0]), float(se[1]) * prefactor),
        r_squared=r2,
        aic=_aicc(resid, 2),
    )


def fit_const(series: ScalingSeries) -> ScalingFit:
    """Size-independent resistance (geometric mean level)."""
    y = np.log(series.resistances)
    level = float(np.exp(y.mean()))
    resid = y - y.mean()
    n = y.size
    se_mean = float(np.std(resid, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    tss = float(resid @ resid)
    return ScalingFit(
        model=MODEL_CONST,
        params=(0.0, level),
        stderr=(0.0, se_mean * level),
        r_squared=0.0 if tss > 0 else 1.0,
        aic=_aicc(resid, 1),
    )


def classify_regime(series: ScalingSeries):
    """Pick the best-scoring model and map it onto a transport label.

    Returns ``(label, winning_fit)``.  Thresholds: a power-law win counts
    as diffusive within |nu - 1| <= 0.1 (finite-size slack around the
    nominal linear growth), super-diffusive below 0.9, sub-diffusive above
    1.1, and ballistic when nu <= 0.05 or the constant model wins.
    """
    fits = {
        MODEL_LOG: fit_log(series),
        MODEL_POWER: fit_powerlaw(series),
        MODEL_CONST: fit_const(series),
    }
    winner = min(fits.values(), key=lambda f: f.aic)
    if winner.model == MODEL_CONST:
        return REGIME_BALLISTIC, winner
    if winner.model == MODEL_LOG:
        return REGIME_SUPER_LOG, winner
    nu = winner.params[0]
    if nu <= 0.05:
        return REGIME_BALLISTIC, winner
    if abs(nu - 1.0) <= 0.1:
        return REGIME_DIFFUSIVE, winner
    if nu < 0.9:
        return REGIME_SUPER_POWER, winner
    return REGIME_SUBDIFFUSIVE, winner


def _default_current(args):
    from .lattice import LatticeSpec
    from .lindblad import DissipationSpec
    from .steady import solve_ness

    length, alpha, gamma, drive = args
    result = solve_ness(
        LatticeSpec(length=length, alpha=alpha),
        DissipationSpec(dephasing=gamma, drive=drive),
    )
    return result.current


def exponent_curve(alphas, gamma, lengths, drive=1.0, current_fn=None, workers=1):
    """Fitted power-law exponent nu for every alpha over the size grid.

    Runs the steady-state solver (or ``current_fn(length, alpha, gamma,
    drive)``) on the full grid, fits each alpha's series, and returns a
    list of ``(alpha, nu, stderr)``.  A failing solve aborts the sweep
    with the completed points attached to the raised error.
    """
    alphas = [float(a) for a in alphas]
    lengths = [int(n) for n in lengths]
    tasks = [(n, a, float(gamma), float(drive)) for a in alphas for n in lengths]
    fn = _default_current if current_fn is None else (lambda t: current_fn(*t))

    currents = {}
    done = []
    try:
        if workers > 1 and current_fn is None:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for task, current in zip(tasks, pool.map(_default_current, tasks)):
                    currents[task] = current
        else:
            for task in tasks:
                currents[task] = fn(task)
    except Exception as exc:
        raise ExponentCurveError(f"solver failure in exponent sweep: {exc}",
                                 partial=done) from exc

    for alpha in alphas:
        series = ScalingSeries(
            alpha=alpha,
            gamma=float(gamma),
            drive=float(drive),
            lengths=tuple(lengths),
            currents=tuple(currents[(n, alpha, float(gamma), float(drive))]
                           for n in lengths),
        )
        fit = fit_powerlaw(series)
        done.append((alpha, fit.params[0], fit.stderr[0]))
    return done
