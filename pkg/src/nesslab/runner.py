"""Parameter-sweep execution: result records, caching, workers, serialization.

Every solved point becomes a flat ``ResultRecord``.  Records are cached on
disk keyed by a stable hash of the physical parameters, the solver
tolerance and the code version, written atomically (write-once per key),
so concurrent sweeps never interleave partial records and a warm rerun
reproduces output files byte for byte.  Floats are serialized with
``repr``, the shortest representation that round-trips.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

from . import __version__
from .lattice import LatticeSpec
from .lindblad import DissipationSpec
from .steady import solve_ness

CACHE_ENV_VAR = "NESSLAB_CACHE_DIR"

CSV_HEADER = (
    "L,alpha,gamma,Gamma,J_ness,R_ness,n_first,n_last,"
    "converged,iterations,residual,wall_time_s,config_hash"
)
CSV_FIELDS = CSV_HEADER.split(",")

PROFILE_HEADER = "site_index,density,site_in_current"


@dataclass
class ResultRecord:
    """One steady-state solve, flattened for CSV/JSON output."""

    L: int
    alpha: float
    gamma: float
    Gamma: float
    J_ness: float | None
    R_ness: float | None
    n_first: float | None
    n_last: float | None
    converged: bool
    iterations: int
    residual: float | None
    wall_time_s: float
    config_hash: str
    code_version: str = __version__
    error: str | None = None


def cache_key(length, alpha, gamma, drive, tolerance, version=__version__) -> str:
    """Stable key for one physical point at one solver setting."""
    text = "|".join(
        [str(int(length)), repr(float(alpha)), repr(float(gamma)),
         repr(float(drive)), repr(float(tolerance)), version]
    )
    return hashlib.sha256(text.encode()).hexdigest()[:24]


def resolve_cache_dir(configured: str | None) -> str | None:
    """Environment variable beats the configured cache directory."""
    return os.environ.get(CACHE_ENV_VAR) or configured


def _cache_path(cache_dir: str, key: str) -> str:
    return os.path.join(cache_dir, key + ".json")


def cache_load(cache_dir: str | None, key: str) -> ResultRecord | None:
    if not cache_dir:
        return None
    path = _cache_path(cache_dir, key)
    if not os.path.isfile(path):
        return None
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    data.pop("cache_key", None)
    return ResultRecord(**data)


def cache_store(cache_dir: str | None, key: str, record: ResultRecord) -> None:
    """Atomic write-once store; an existing entry is left untouched."""
    if not cache_dir:
        return
    os.makedirs(cache_dir, exist_ok=True)
    path = _cache_path(cache_dir, key)
    if os.path.exists(path):
        return
    payload = dict(asdict(record), cache_key=key)
    fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


@dataclass(frozen=True)
class PointTask:
    """One grid point plus the solver settings used for it."""

    length: int
    alpha: float
    gamma: float
    drive: float = 1.0
    tolerance: float = 1e-10
    max_iterations: int = 500
    config_hash: str = ""


def solve_point(task: PointTask) -> ResultRecord:
    """Run one steady-state solve and flatten it into a record.

    Solver failures are captured as a non-converged record rather than
    raised, so sweeps can flag individual cells and continue.
    """
    t0 = time.perf_counter()
    try:
        result = solve_ness(
            LatticeSpec(length=task.length, alpha=task.alpha),
            DissipationSpec(dephasing=task.gamma, drive=task.drive),
            tolerance=task.tolerance,
            max_iterations=task.max_iterations,
        )
    except Exception as exc:  # noqa: BLE001 - cell failures become data
        return ResultRecord(
            L=task.length, alpha=task.alpha, gamma=task.gamma, Gamma=task.drive,
            J_ness=None, R_ness=None, n_first=None, n_last=None,
            converged=False, iterations=0, residual=None,
            wall_time_s=time.perf_counter() - t0,
            config_hash=task.config_hash, error=f"{type(exc).__name__}: {exc}",
        )
    return ResultRecord(
        L=task.length, alpha=task.alpha, gamma=task.gamma, Gamma=task.drive,
        J_ness=float(result.current), R_ness=float(result.resistance),
        n_first=float(result.density[0]), n_last=float(result.density[-1]),
        converged=True, iterations=int(result.iterations),
        residual=float(result.residual), wall_time_s=float(result.wall_time_s),
        config_hash=task.config_hash,
    )


def _limit_blas_threads(count=1):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(count)


def run_points(tasks, workers=1, cache_dir=None, blas_threads_per_worker=1):
    """Solve a list of PointTasks, consulting and filling the cache.

    With ``workers > 1`` uncached points run in separate processes, each
    restricted to ``blas_threads_per_worker`` BLAS threads (default 1) so
    memory and core usage stay predictable.  Results come back in task
    order.
    """
    records = {}
    pending = []
    for task in tasks:
        key = cache_key(task.length, task.alpha, task.gamma, task.drive,
                        task.tolerance)
        hit = cache_load(cache_dir, key)
        if hit is not None:
            records[task] = (key, hit)
        else:
            pending.append((task, key))

    if pending:
        if workers > 1:
            with ProcessPoolExecutor(
                max_workers=workers,
                initializer=_limit_blas_threads,
                initargs=(blas_threads_per_worker,),
            ) as pool:
                solved = list(pool.map(solve_point, [t for t, _ in pending]))
        else:
            solved = [solve_point(t) for t, _ in pending]
        for (task, key), record in zip(pending, solved):
            if record.converged:
                cache_store(cache_dir, key, record)
            records[task] = (key, record)

    return [records[task][1] for task in tasks]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))  # shortest round-trip form, numpy-safe
    return str(value)


def records_to_csv(records) -> str:
    lines = [CSV_HEADER]
    for rec in records:
        row = asdict(rec)
        lines.append(",".join(_fmt(row[f]) for f in CSV_FIELDS))
    return "\n".join(lines) + "\n"


def records_to_json(records) -> str:
    payload = [asdict(rec) for rec in records]
    return json.dumps(payload, indent=2) + "\n"


def profile_to_csv(density, in_currents) -> str:
    """Per-site profile file; sites are 1-based in the file format."""
    lines = [PROFILE_HEADER]
    for idx, (dens, cur) in enumerate(zip(density, in_currents), start=1):
        lines.append(f"{idx},{repr(float(dens))},{repr(float(cur))}")
    return "\n".join(lines) + "\n"


def write_text(path: str, text: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
