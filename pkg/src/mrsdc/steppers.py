"""Time steppers: implicit Euler, IMEX Euler, SISDC and multi-rate SDC.

Every stepper works on a :class:`~mrsdc.system.SplitSystem`. Within one step
the SDC variants keep their iterates in a :class:`NodeStates` record. Single
rate SDC is stored with ``P = 1`` so that the embedded arrays coincide with
the standard ones.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError, SolverError, StepError
from .quadrature import (
    CollocationTableau,
    MultiRateTableau,
    make_collocation,
    make_multirate,
)

__all__ = [
    "METHODS",
    "NodeStates",
    "StepperConfig",
    "IntegrationResult",
    "imex_euler_step",
    "implicit_euler_step",
    "sisdc_predictor",
    "sisdc_sweep",
    "mrsdc_predictor",
    "mrsdc_sweep",
    "sdc_residual",
    "make_tableau",
    "sdc_step",
    "integrate",
    "choose_embedded_count",
]

METHODS = ("implicit-euler", "imex-euler", "sdc", "mrsdc")


@dataclass(frozen=True)
class NodeStates:
    """Iterate ``k`` of one SDC step.

    ``T_emb[m, p]`` and ``f_fast[m, p]`` hold states and ``f_E`` values at the
    embedded nodes; ``T_std[m]`` always equals ``T_emb[m, -1]``. ``f_slow``
    caches ``f_I`` and ``g`` caches the source at the standard nodes.
    """

    T0: np.ndarray
    f_fast0: np.ndarray
    T_std: np.ndarray
    T_emb: np.ndarray
    f_slow: np.ndarray
    g: np.ndarray
    f_fast: np.ndarray
    k: int = 0

    @property
    def F_slow(self):
        """Cached ``f_I + g`` at the standard nodes."""
        return self.f_slow + self.g

    @property
    def M(self):
        return self.T_std.shape[0]

    @property
    def P(self):
        return self.T_emb.shape[1]


@dataclass(frozen=True)
class StepperConfig:
    method: str = "mrsdc"
    M: int = 3
    P: int = 2
    K: int = 1
    rtol: float = 1e-10

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgumentError(
                f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}"
            )
        if self.M < 1:
            raise InvalidArgumentError("M must be >= 1")
        if self.method == "mrsdc" and self.P < 1:
            raise InvalidArgumentError("P must be >= 1 for mrsdc")
        if self.K < 0:
            raise InvalidArgumentError("K must be >= 0")
        if not self.rtol > 0:
            raise InvalidArgumentError("rtol must be positive")

    @property
    def label(self):
        if self.method == "mrsdc":
            return f"MRSDC({self.M},{self.P}) K={self.K}"
        if self.method == "sdc":
            return f"SDC({self.M}) K={self.K}"
        return self.method

    @property
    def sweeps(self):
        return self.K if self.method in ("sdc", "mrsdc") else 0


# -- single-stage steppers ---------------------------------------------------


def imex_euler_step(sys, T_n, t_n, dt):
    """One IMEX Euler step: ``f_I`` and ``g`` at ``t_n + dt``, ``f_E`` at ``t_n``."""
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    t1 = t_n + dt
    rhs = sys.apply_mass(T_n) + dt * (sys.eval_source(t1) + sys.eval_fast(T_n, t_n))
    return sys.solve_shifted(dt, rhs, guess=T_n)


def implicit_euler_step(sys, T_n, t_n, dt):
    """One backward Euler step with the fast operator reassembled at ``t_n + dt``."""
    if not dt > 0:
        raise InvalidArgumentError("dt must be positive")
    t1 = t_n + dt
    _, b = sys.fast_operator(t1)
    rhs = sys.apply_mass(T_n) + dt * (sys.eval_source(t1) + b)
    return sys.solve_fully_implicit(dt, rhs, t1, guess=T_n)


# -- single-rate SDC -----------------------------------------------------------


def sisdc_predictor(sys, T_n, tableau):
    """Node-to-node IMEX Euler through the standard nodes."""
    T_n = np.array(T_n, dtype=float)
    M, N = tableau.M, T_n.size
    t_n = tableau.t_left
    T_std = np.empty((M, N))
    f_slow = np.empty((M, N))
    g = np.empty((M, N))
    f_fast = np.empty((M, 1, N))

    f_fast0 = sys.eval_fast(T_n, t_n)
    T_prev, fE_prev = T_n, f_fast0
    for m in range(M):
        dtau, tau = tableau.dtau[m], tableau.nodes[m]
        g[m] = sys.eval_source(tau)
        rhs = sys.apply_mass(T_prev) + dtau * (g[m] + fE_prev)
        T_std[m] = sys.solve_shifted(dtau, rhs, guess=T_prev)
        f_slow[m] = sys.eval_slow(T_std[m])
        f_fast[m, 0] = sys.eval_fast(T_std[m], tau)
        T_prev, fE_prev = T_std[m], f_fast[m, 0]

    return NodeStates(
        T0=T_n, f_fast0=f_fast0, T_std=T_std, T_emb=T_std[:, None, :],
        f_slow=f_slow, g=g, f_fast=f_fast, k=0,
    )


def sisdc_sweep(sys, states, tableau):
    """One semi-implicit correction sweep; returns iterate ``k + 1``."""
    M, N = states.M, states.T0.size
    mass = sys.mass
    F = states.f_slow + states.g + states.f_fast[:, 0]
    I = tableau.s @ F

    T_std = np.empty((M, N))
    f_slow = np.empty((M, N))
    f_fast = np.empty((M, 1, N))
    T_prev = states.T0
    fE_prev_new = fE_prev_old = states.f_fast0
    for m in range(M):
        dtau, tau = tableau.dtau[m], tableau.nodes[m]
        rhs = (
            mass * T_prev
            - dtau * states.f_slow[m]
            + dtau * (fE_prev_new - fE_prev_old)
            + I[m]
        )
        T_std[m] = sys.solve_shifted(dtau, rhs, guess=states.T_std[m])
        f_slow[m] = sys.eval_slow(T_std[m])
        f_fast[m, 0] = sys.eval_fast(T_std[m], tau)
        T_prev = T_std[m]
        fE_prev_old, fE_prev_new = states.f_fast[m, 0], f_fast[m, 0]

    return replace(
        states, T_std=T_std, T_emb=T_std[:, None, :], f_slow=f_slow,
        f_fast=f_fast, k=states.k + 1,
    )


# -- multi-rate SDC ----------------------------------------------------------


def mrsdc_predictor(sys, T_n, tableau):
    """Prediction step of multi-rate SDC.

    Per standard interval: one implicit Euler step in ``f_I + g`` whose slope
    is then frozen across ``P`` explicit Euler substeps in ``f_E``.
    """
    T_n = np.array(T_n, dtype=float)
    M, P, N = tableau.M, tableau.P, T_n.size
    mass = sys.mass
    t_n = tableau.t_left
    T_emb = np.empty((M, P, N))
    f_fast = np.empty((M, P, N))
    f_slow = np.empty((M, N))
    g = np.empty((M, N))

    f_fast0 = sys.eval_fast(T_n, t_n)
    T_prev, fE_prev = T_n, f_fast0
    for m in range(M):
        dtau, tau = tableau.dtau[m], tableau.nodes[m]
        g[m] = sys.eval_source(tau)
        T_star = sys.solve_shifted(dtau, sys.apply_mass(T_prev) + dtau * g[m], guess=T_prev)
        f_star = sys.eval_slow(T_star) + g[m]
        for p in range(P):
            T_prev = T_prev + tableau.dtau_emb[m, p] * (f_star + fE_prev) / mass
            T_emb[m, p] = T_prev
            fE_prev = f_fast[m, p] = sys.eval_fast(T_prev, tableau.embedded[m, p])
        f_slow[m] = sys.eval_slow(T_prev)

    return NodeStates(
        T0=T_n, f_fast0=f_fast0, T_std=T_emb[:, -1, :], T_emb=T_emb,
        f_slow=f_slow, g=g, f_fast=f_fast, k=0,
    )


def _multirate_integrals(states, tableau):
    F_slow = states.F_slow
    I_std = tableau.s @ F_slow + np.einsum("mp,mpn->mn", tableau.s_hat, states.f_fast)
    I_emb = np.einsum("mpj,jn->mpn", tableau.s_tilde, F_slow) + np.einsum(
        "mpq,mqn->mpn", tableau.s_emb, states.f_fast
    )
    return I_std, I_emb


def mrsdc_sweep(sys, states, tableau):
    """Correction sweep of multi-rate SDC; returns iterate ``k + 1``."""
    M, P, N = tableau.M, tableau.P, states.T0.size
    mass = sys.mass
    I_std, I_emb = _multirate_integrals(states, tableau)

    T_emb = np.empty((M, P, N))
    f_fast = np.empty((M, P, N))
    f_slow = np.empty((M, N))
    T_prev = states.T0
    fE_new = fE_old = states.f_fast0
    for m in range(M):
        dtau = tableau.dtau[m]
        rhs = mass * T_prev - dtau * states.f_slow[m] + I_std[m]
        T_star = sys.solve_shifted(dtau, rhs, guess=states.T_std[m])
        f_star = sys.eval_slow(T_star) - states.f_slow[m]
        for p in range(P):
            h = tableau.dtau_emb[m, p]
            T_prev = T_prev + (h * f_star + h * (fE_new - fE_old) + I_emb[m, p]) / mass
            T_emb[m, p] = T_prev
            fE_old = states.f_fast[m, p]
            fE_new = f_fast[m, p] = sys.eval_fast(T_prev, tableau.embedded[m, p])
        f_slow[m] = sys.eval_slow(T_prev)

    return replace(
        states, T_std=T_emb[:, -1, :], T_emb=T_emb, f_slow=f_slow,
        f_fast=f_fast, k=states.k + 1,
    )


def sdc_residual(sys, states, tableau, T_n=None):
    """Max-norm defect of the iterate in the collocation equations.

    The quadrature is taken from ``t_n`` to each standard node, i.e. the
    cumulative sum of the node-to-node integrals. For a multi-rate tableau the
    fast part is integrated from the embedded values.
    """
    T0 = states.T0 if T_n is None else np.asarray(T_n, dtype=float)
    if isinstance(tableau, MultiRateTableau):
        I_std, _ = _multirate_integrals(states, tableau)
    else:
        I_std = tableau.s @ (states.F_slow + states.f_fast[:, 0])
    mass = sys.mass
    defect = mass * states.T_std - mass * T0 - np.cumsum(I_std, axis=0)
    return float(np.max(np.abs(defect)))


# -- drivers -------------------------------------------------------------------


def make_tableau(config, dt, t_left=0.0):
    if config.method == "mrsdc":
        return make_multirate(config.M, config.P, t_left, t_left + dt)
    if config.method == "sdc":
        return make_collocation(config.M, t_left, t_left + dt)
    return None


def sdc_step(sys, T_n, tableau, K, residuals=None):
    """Predictor plus ``K`` sweeps; appends ``r^k`` to ``residuals`` if given."""
    multirate = isinstance(tableau, MultiRateTableau)
    predictor = mrsdc_predictor if multirate else sisdc_predictor
    sweep = mrsdc_sweep if multirate else sisdc_sweep
    states = predictor(sys, T_n, tableau)
    if residuals is not None:
        residuals.append(sdc_residual(sys, states, tableau))
    for _ in range(K):
        states = sweep(sys, states, tableau)
        if residuals is not None:
            residuals.append(sdc_residual(sys, states, tableau))
    return states


@dataclass
class IntegrationResult:
    T: np.ndarray
    t: float
    n_steps: int
    snapshots: dict = field(default_factory=dict)
    wall_time: float = 0.0


def _snapshot_indices(times, t0, dt, n_steps):
    out = {}
    for ts in times:
        x = (ts - t0) / dt
        n = int(round(x))
        if abs(x - n) > 1e-9 * max(1.0, abs(x)) or not 0 <= n <= n_steps:
            raise InvalidArgumentError(
                f"snapshot time {ts} is not a step boundary for dt={dt}"
            )
        out.setdefault(n, []).append(ts)
    return out


def integrate(sys, T_0, t_0, t_end, n_steps, config, snapshot_times=(), on_step=None):
    """Integrate from ``t_0`` to ``t_end`` with ``n_steps`` equal steps.

    Snapshot times must fall on step boundaries. ``on_step(n, t, T)`` is
    called after every completed step.

    Raises
    ------
    StepError
        Wrapping the underlying failure, with the step index attached.
    """
    if int(n_steps) != n_steps or n_steps < 1:
        raise InvalidArgumentError("n_steps must be a positive integer")
    if not t_end > t_0:
        raise InvalidArgumentError("t_end must exceed t_0")
    n_steps = int(n_steps)
    dt = (t_end - t_0) / n_steps
    snaps_at = _snapshot_indices(snapshot_times, t_0, dt, n_steps)
    template = make_tableau(config, dt, 0.0)

    T = np.array(T_0, dtype=float)
    snapshots = {ts: T.copy() for ts in snaps_at.get(0, [])}
    start = time.perf_counter()
    for n in range(n_steps):
        t_n = t_0 + n * dt
        try:
            if config.method == "imex-euler":
                T = imex_euler_step(sys, T, t_n, dt)
            elif config.method == "implicit-euler":
                T = implicit_euler_step(sys, T, t_n, dt)
            else:
                states = sdc_step(sys, T, template.shifted(t_n), config.K)
                T = states.T_std[-1].copy()
        except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise StepError(n, exc) from exc
        if not np.all(np.isfinite(T)):
            raise StepError(n, "non-finite state")
        for ts in snaps_at.get(n + 1, []):
            snapshots[ts] = T.copy()
        if on_step is not None:
            on_step(n, t_0 + (n + 1) * dt, T)
    wall = time.perf_counter() - start
    return IntegrationResult(T=T, t=t_end, n_steps=n_steps, snapshots=snapshots, wall_time=wall)


def choose_embedded_count(v, dx, dtau):
    """Smallest ``P`` such that a source moving at speed ``v`` crosses at most
    one cell of width ``dx`` per embedded substep of ``dtau / P``."""
    if v == 0:
        return 1
    if not (dx > 0 and dtau > 0):
        raise InvalidArgumentError("dx and dtau must be positive")
    ratio = dtau * abs(v) / dx
    return max(1, math.ceil(ratio * (1 - 1e-12)))
