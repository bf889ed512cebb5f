"""Residual, order, work-precision and simulation studies on the plate problem.

Study points (method x dt x sweep count) are independent and may run in a
process pool. Results are collected in submission order, so reports do not
depend on the worker count.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import InvalidArgumentError, SolverError, StepError
from ..heat2d import as_split_system, assemble
from ..quadrature import MultiRateTableau
from ..steppers import (
    integrate,
    make_tableau,
    mrsdc_predictor,
    mrsdc_sweep,
    sdc_residual,
    sisdc_predictor,
    sisdc_sweep,
)
from ..system import CountingSystem
from .io import write_csv, write_field_csv, write_manifest, write_vtk

__all__ = [
    "Row",
    "StudyReport",
    "step_count",
    "fit_order",
    "contraction_factor",
    "run_residual_study",
    "run_order_study",
    "run_work_precision",
    "run_simulation",
    "write_report",
]

ROW_FIELDS = ("method", "M", "P", "K", "dt", "k", "value", "wall_s", "implicit_solves", "fast_evals", "status")


@dataclass(frozen=True)
class Row:
    """One measured point; ``value`` is an error or a residual."""

    method: str
    M: int
    P: int
    K: int
    dt: float
    k: int
    value: float
    wall_s: float
    implicit_solves: int
    fast_evals: int
    status: str = "ok"

    def cells(self, fields):
        return tuple(getattr(self, f) for f in fields)


@dataclass
class StudyReport:
    kind: str
    rows: list
    orders: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)
    final: np.ndarray | None = None
    rates: list = field(default_factory=list)


# -- helpers ---------------------------------------------------------------------


@lru_cache(maxsize=8)
def _problem(config):
    return assemble(config)


def _system(config, rtol):
    return CountingSystem(as_split_system(_problem(config), rtol=rtol))


def step_count(t_end, dt):
    """Number of equal steps of size ``dt`` covering ``[0, t_end]`` exactly."""
    n = round(t_end / dt)
    if n < 1 or abs(n * dt - t_end) > 1e-9 * t_end:
        raise InvalidArgumentError(f"dt={dt:g} does not divide t_end={t_end:g}")
    return int(n)


def fit_order(dts, errors):
    """Least-squares slope of ``log(error)`` against ``log(dt)``."""
    dts, errors = np.asarray(dts, float), np.asarray(errors, float)
    if dts.size < 2 or not np.all(np.isfinite(errors)) or np.any(errors <= 0):
        return float("nan")
    return float(np.polyfit(np.log(dts), np.log(errors), 1)[0])


def contraction_factor(residuals, floor_factor=1e3):
    """Geometric per-sweep contraction fitted to ``r^k``, ``k >= 1``.

    Points within ``floor_factor`` of the smallest residual are treated as the
    rounding plateau and skipped.
    """
    r = np.asarray(residuals, float)
    if r.size < 3 or not np.all(np.isfinite(r)):
        return float("nan")
    floor = floor_factor * r.min()
    ks = [k for k in range(1, r.size) if r[k] > floor]
    if len(ks) < 2:
        return float("nan")
    return float(np.exp(np.polyfit(ks, np.log(r[ks]), 1)[0]))


def _pmap(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


@dataclass(frozen=True)
class _Run:
    problem: object
    stepper: object
    t_end: float
    n_steps: int
    rtol: float


def _integrate_point(task):
    """Run one integration; failures are returned, not raised."""
    sys = _system(task.problem, task.rtol)
    T0 = np.full(sys.dimension, task.problem.T_init)
    try:
        res = integrate(sys, T0, 0.0, task.t_end, task.n_steps, task.stepper)
        return res.T, res.wall_time, sys.implicit_solves, sys.fast_evals, "ok"
    except (StepError, SolverError) as exc:
        return None, float("nan"), sys.implicit_solves, sys.fast_evals, f"failed: {exc}"


def _reference(task, cache_dir):
    """Final field of ``task``, cached on disk under a hash of everything that defines it."""
    key = hashlib.sha256(repr((task.problem, task.stepper, task.t_end, task.n_steps, task.rtol)).encode()).hexdigest()[:24]
    path = Path(cache_dir) / f"ref-{key}.npy"
    if path.exists():
        return np.load(path), True
    T, _, _, _, status = _integrate_point(task)
    if T is None:
        raise StepError(-1, f"reference solution failed ({status})")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npy")
    np.save(tmp, T)
    tmp.replace(path)
    return T, False


def _rel_error(T, ref):
    if T is None:
        return float("nan")
    return float(np.max(np.abs(T - ref)) / np.max(np.abs(ref)))


def _sweep_counts(spec, m):
    return range(spec.K + 1) if m.iterative else (0,)


# -- residual --------------------------------------------------------------------


def _residual_point(args):
    problem, stepper, dt, rtol = args
    sys = _system(problem, rtol)
    T_n = np.full(sys.dimension, problem.T_init)
    tab = make_tableau(stepper, dt, 0.0)
    multirate = isinstance(tab, MultiRateTableau)
    predictor, sweep = (mrsdc_predictor, mrsdc_sweep) if multirate else (sisdc_predictor, sisdc_sweep)
    out = []
    start = time.perf_counter()
    try:
        states = predictor(sys, T_n, tab)
        for k in range(stepper.K + 1):
            if k > 0:
                states = sweep(sys, states, tab)
            wall = time.perf_counter() - start
            out.append((k, sdc_residual(sys, states, tab), wall, sys.implicit_solves, sys.fast_evals, "ok"))
    except SolverError as exc:
        out.append((len(out), float("nan"), float("nan"), sys.implicit_solves, sys.fast_evals, f"failed: {exc}"))
    return out


def run_residual_study(spec):
    """Residual after each sweep of one step from the initial field."""
    tasks, labels = [], []
    for m in spec.methods:
        for dt in spec.dt_list:
            stepper = m.stepper(spec.K, spec.rtol, spec.problem, dt)
            tasks.append((spec.problem, stepper, dt, spec.rtol))
            labels.append((m, stepper, dt))
    rows, rates = [], []
    for (m, st, dt), result in zip(labels, _pmap(_residual_point, tasks, spec.workers)):
        for k, r, wall, ns, nf, status in result:
            rows.append(Row(m.method, st.M, st.P, st.K, dt, k, r, wall, ns, nf, status))
        rates.append((m.method, st.M, st.P, dt, contraction_factor([x[1] for x in result])))
    return StudyReport("residual", rows, rates=rates)


# -- order -----------------------------------------------------------------------


def run_order_study(spec):
    """Errors at ``t_end`` against a same-method reference at ``dt_min / reference_factor``.

    The reference uses the largest sweep count ``K``. One slope per
    (method, k) is fitted over the three smallest step sizes.
    """
    dt_ref = spec.dt_list[-1] / spec.reference_factor
    n_ref = step_count(spec.t_end, dt_ref)
    rows, orders = [], []
    for m in spec.methods:
        ref_stepper = m.stepper(spec.K, spec.rtol, spec.problem, dt_ref)
        ref, _ = _reference(_Run(spec.problem, ref_stepper, spec.t_end, n_ref, spec.rtol), spec.reference_cache)
        tasks = []
        for k in _sweep_counts(spec, m):
            for dt in spec.dt_list:
                st = m.stepper(k, spec.rtol, spec.problem, dt)
                tasks.append(_Run(spec.problem, st, spec.t_end, step_count(spec.t_end, dt), spec.rtol))
        results = _pmap(_integrate_point, tasks, spec.workers)
        by_k = {}
        for task, (T, wall, ns, nf, status) in zip(tasks, results):
            st = task.stepper
            dt = spec.t_end / task.n_steps
            err = _rel_error(T, ref)
            rows.append(Row(m.method, st.M, st.P, st.K, dt, st.K, err, wall, ns, nf, status))
            by_k.setdefault(st.K, []).append((dt, err))
        for k, pts in by_k.items():
            finest = sorted(pts)[:3]
            orders.append((m.method, m.M, ref_stepper.P if m.method == "mrsdc" else 1, k, fit_order(*zip(*finest))))
    return StudyReport("order", rows, orders)


# -- work-precision ----------------------------------------------------------------


def run_work_precision(spec):
    """Error against a common reference together with wall clock and solve counts."""
    dt_ref = spec.dt_list[-1] / spec.reference_factor
    n_ref = step_count(spec.t_end, dt_ref)
    ref_stepper = spec.reference.stepper(spec.reference_K, spec.rtol, spec.problem, dt_ref)
    ref, _ = _reference(_Run(spec.problem, ref_stepper, spec.t_end, n_ref, spec.rtol), spec.reference_cache)
    tasks = []
    for m in spec.methods:
        for k in _sweep_counts(spec, m):
            for dt in spec.dt_list:
                st = m.stepper(k, spec.rtol, spec.problem, dt)
                tasks.append(_Run(spec.problem, st, spec.t_end, step_count(spec.t_end, dt), spec.rtol))
    rows = []
    for task, (T, wall, ns, nf, status) in zip(tasks, _pmap(_integrate_point, tasks, spec.workers)):
        st = task.stepper
        rows.append(Row(st.method, st.M, st.P, st.K, spec.t_end / task.n_steps, st.K, _rel_error(T, ref), wall, ns, nf, status))
    return StudyReport("work-precision", rows, manifest={"reference": ref_stepper.label, "reference_dt": dt_ref})


# -- simulation -------------------------------------------------------------------


def _snapshot_name(t):
    return f"field_t{t:012.6f}".replace(".", "p")


def run_simulation(spec):
    """Integrate the plate with the first configured method and write snapshots.

    On a stepper failure the snapshots written so far are kept and the
    manifest records ``status = failed``.
    """
    cfg = spec.problem
    dt = spec.dt if spec.dt is not None else spec.dt_list[0]
    n_steps = step_count(spec.t_end, dt)
    method = spec.methods[0]
    stepper = method.stepper(spec.K, spec.rtol, cfg, dt)
    prob = _problem(cfg)
    sys = CountingSystem(as_split_system(prob, rtol=spec.rtol))
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    pending = sorted(set(spec.snapshot_times))
    written = []

    def dump(t, T):
        name = _snapshot_name(t)
        write_field_csv(out / f"{name}.csv", prob.coords, T)
        write_vtk(out / f"{name}.vtk", prob, T, title=f"temperature at t = {t:g}")
        written.append(name)

    def on_step(n, t, T):
        while pending and abs(pending[0] - t) <= 1e-9 * max(1.0, abs(t)):
            dump(pending.pop(0), T)

    T0 = np.full(sys.dimension, cfg.T_init)
    while pending and abs(pending[0]) <= 1e-12:
        dump(pending.pop(0), T0)

    status, T_final, wall = "ok", None, float("nan")
    start = time.perf_counter()
    try:
        res = integrate(sys, T0, 0.0, spec.t_end, n_steps, stepper, snapshot_times=spec.snapshot_times, on_step=on_step)
        T_final, wall = res.T, res.wall_time
    except StepError as exc:
        status = f"failed at step {exc.step}: {exc.cause}"
        wall = time.perf_counter() - start
    if T_final is not None:
        write_field_csv(out / "field_final.csv", prob.coords, T_final)
        write_vtk(out / "field_final.vtk", prob, T_final, title=f"temperature at t = {spec.t_end:g}")

    manifest = {
        "study": "simulate",
        "status": status,
        "method": stepper.label,
        "dt": dt,
        "n_steps": n_steps,
        "wall_s": wall,
        "implicit_solves": sys.implicit_solves,
        "fast_evals": sys.fast_evals,
        "snapshots": ",".join(written),
    }
    if T_final is not None:
        manifest.update(T_min=float(T_final.min()), T_max=float(T_final.max()))
    return StudyReport("simulate", [], manifest=manifest, final=T_final)


# -- output -----------------------------------------------------------------------


def write_report(report, spec):
    """Write CSV files and the manifest of a study into ``spec.output_dir``.

    Wall-clock times go to ``<kind>_timings.csv`` (and the work-precision
    table) so that residual and order tables are reproducible bit for bit.
    """
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    stem = report.kind.replace("-", "_")
    if report.kind == "work-precision":
        files.append(write_csv(out / f"{stem}.csv", ROW_FIELDS, (r.cells(ROW_FIELDS) for r in report.rows)))
    elif report.rows:
        det = tuple(f for f in ROW_FIELDS if f != "wall_s")
        name = "residual" if report.kind == "residual" else "error"
        header = tuple(name if f == "value" else f for f in det)
        files.append(write_csv(out / f"{stem}.csv", header, (r.cells(det) for r in report.rows)))
        tf = ("method", "M", "P", "K", "dt", "k", "wall_s")
        files.append(write_csv(out / f"{stem}_timings.csv", tf, (r.cells(tf) for r in report.rows)))
    if report.rates:
        files.append(write_csv(out / "residual_rates.csv", ("method", "M", "P", "dt", "contraction"), report.rates))
    if report.orders:
        files.append(write_csv(out / "order_slopes.csv", ("method", "M", "P", "k", "order"), report.orders))

    manifest = {
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
        "study": report.kind,
    }
    manifest.update(report.manifest)
    manifest["files"] = ",".join(p.name for p in files)
    for key, value in sorted(spec.values.items()):
        if isinstance(value, tuple):
            value = ",".join(f"{v:g}" for v in value)
        manifest[f"config.{key}"] = value
    write_manifest(out / f"{stem}_manifest.txt", manifest)
    return files
