"""Rectangular plate heated by a strip sliding along its top edge.

The plate ``[0, Lx] x [0, Ly]`` is meshed with ``nx x ny`` bilinear
quadrilaterals. All boundaries are insulated except the part of the top edge
covered by the stock, where the flux is ``alpha (T0 - T)``. The
semi-discrete system is

    M dT/dt = nu A T + alpha M_B(t) T + alpha c_B(t)

with ``A`` the (negative semidefinite) discrete Laplacian, ``M`` the
row-sum lumped mass, ``M_B(t) = -int_{Gamma(t)} phi_i phi_j`` and
``c_B(t) = T0 int_{Gamma(t)} phi_i``. Partially covered boundary edges are
integrated exactly so that the coupling varies continuously with ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError
from .system import DEFAULT_RTOL, LinearSplitSystem

__all__ = [
    "LinearMotion",
    "SinusoidalMotion",
    "Heat2DConfig",
    "Heat2DProblem",
    "Heat2DSystem",
    "assemble",
    "element_matrices",
    "stock_interval",
    "edge_integrals",
    "assemble_coupling",
    "as_split_system",
]


@dataclass(frozen=True)
class LinearMotion:
    v: float = -0.1
    x0: float = 2.0

    kind = "linear"

    def center(self, t):
        return self.x0 + self.v * t

    def speed(self):
        return abs(self.v)


@dataclass(frozen=True)
class SinusoidalMotion:
    a: float = 0.495
    eps: float = 24.0
    s0: float = 0.505

    kind = "sinusoidal"

    def center(self, t):
        return self.a * math.sin(2.0 * math.pi * t / self.eps) + self.s0

    def speed(self):
        """Peak speed ``2 pi a / eps``."""
        return 2.0 * math.pi * abs(self.a) / self.eps


@dataclass(frozen=True)
class Heat2DConfig:
    """Geometry, material and motion parameters of the plate problem.

    Defaults are artifact choices: the strip starts flush with the right edge
    and, at ``v = -0.1``, reaches the left corner after 17.5 s. The small
    ``nu`` and ``alpha`` keep the explicit coupling well inside the range
    where multi-rate sweeps contract (Biot number ``alpha Ly / nu = 5``).
    """

    Lx: float = 2.0
    Ly: float = 1.0
    nx: int = 64
    ny: int = 32
    nu: float = 1e-4
    alpha: float = 5e-4
    T0: float = 1.0
    stock_width: float = 0.25
    motion: LinearMotion | SinusoidalMotion = field(
        default_factory=lambda: LinearMotion(v=-0.1, x0=1.875)
    )
    T_init: float = 0.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 1 or self.ny < 1:
            raise InvalidArgumentError("nx and ny must be positive integers")
        for name in ("Lx", "Ly", "nu", "alpha"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise InvalidArgumentError(f"{name} must be finite and nonnegative")
        if not (self.Lx > 0 and self.Ly > 0 and self.nu > 0):
            raise InvalidArgumentError("Lx, Ly and nu must be positive")
        if not 0 < self.stock_width <= self.Lx:
            raise InvalidArgumentError("stock_width must lie in (0, Lx]")
        if not isinstance(self.motion, (LinearMotion, SinusoidalMotion)):
            raise InvalidArgumentError("motion must be LinearMotion or SinusoidalMotion")

    @property
    def dx(self):
        """Top-edge element length, the cell size of the stroboscope rule."""
        return self.Lx / self.nx

    def replace(self, **changes):
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return Heat2DConfig(**values)


def element_matrices(hx, hy):
    """Stiffness ``int grad phi . grad phi`` and consistent mass of one rectangle.

    Local node order is counter-clockwise from the lower-left corner. Both
    integrands are at most biquadratic, so 2x2 Gauss quadrature is exact.
    """
    g = 1.0 / math.sqrt(3.0)
    pts = [(-g, -g), (g, -g), (g, g), (-g, g)]
    corners = np.array([(-1, -1), (1, -1), (1, 1), (-1, 1)], dtype=float)
    jac = hx * hy / 4.0
    K = np.zeros((4, 4))
    Mc = np.zeros((4, 4))
    for xi, eta in pts:
        N = 0.25 * (1 + corners[:, 0] * xi) * (1 + corners[:, 1] * eta)
        dN_dxi = 0.25 * corners[:, 0] * (1 + corners[:, 1] * eta)
        dN_deta = 0.25 * corners[:, 1] * (1 + corners[:, 0] * xi)
        dx = dN_dxi * 2.0 / hx
        dy = dN_deta * 2.0 / hy
        K += (np.outer(dx, dx) + np.outer(dy, dy)) * jac
        Mc += np.outer(N, N) * jac
    return K, Mc


@dataclass(frozen=True)
class Heat2DProblem:
    """Assembled matrices of the plate; immutable after :func:`assemble`."""

    config: Heat2DConfig
    hx: float
    hy: float
    A: sp.csr_matrix
    mass: np.ndarray
    coords: np.ndarray
    top_idx: np.ndarray
    top_x: np.ndarray

    @property
    def dimension(self):
        return self.mass.size


def assemble(config):
    """Assemble the stiffness (negated, without ``nu``) and lumped mass."""
    if not isinstance(config, Heat2DConfig):
        raise InvalidArgumentError("assemble expects a Heat2DConfig")
    nx, ny = int(config.nx), int(config.ny)
    hx, hy = config.Lx / nx, config.Ly / ny
    n_nodes = (nx + 1) * (ny + 1)

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ll = (ii + jj * (nx + 1)).ravel()
    conn = np.stack([ll, ll + 1, ll + nx + 2, ll + nx + 1], axis=1)

    Ke, Me = element_matrices(hx, hy)
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    vals = np.tile(-Ke.ravel(), conn.shape[0])
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n_nodes, n_nodes)).tocsr()
    A.sum_duplicates()

    mass = np.zeros(n_nodes)
    np.add.at(mass, conn.ravel(), np.tile(Me.sum(axis=1), conn.shape[0]))
    mass.setflags(write=False)

    xs = np.linspace(0.0, config.Lx, nx + 1)
    ys = np.linspace(0.0, config.Ly, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    coords = np.column_stack([X.ravel(), Y.ravel()])
    top_idx = ny * (nx + 1) + np.arange(nx + 1)
    return Heat2DProblem(
        config=config, hx=hx, hy=hy, A=A, mass=mass, coords=coords,
        top_idx=top_idx, top_x=xs,
    )


def stock_interval(config, t):
    """Covered part ``(x_left, x_right)`` of the top edge; empty when left >= right."""
    c = config.motion.center(t)
    half = 0.5 * config.stock_width
    return max(c - half, 0.0), min(c + half, config.Lx)


def edge_integrals(edge_x, x_left, x_right):
    """Exact boundary integrals of linear hat functions over a sub-interval.

    For each edge ``[edge_x[e], edge_x[e+1]]`` intersected with
    ``[x_left, x_right]`` returns ``(m00, m01, m11, c0, c1)``: the entries of
    ``int phi_a phi_b`` and ``int phi_a`` for the edge's two end nodes.
    """
    x0, x1 = edge_x[:-1], edge_x[1:]
    h = x1 - x0
    a = np.clip((x_left - x0) / h, 0.0, 1.0)
    b = np.clip((x_right - x0) / h, 0.0, 1.0)
    b = np.maximum(a, b)
    ua, ub = 1.0 - a, 1.0 - b
    m00 = h * (ua**3 - ub**3) / 3.0
    m11 = h * (b**3 - a**3) / 3.0
    m01 = h * ((b**2 - a**2) / 2.0 - (b**3 - a**3) / 3.0)
    c0 = h * (ua**2 - ub**2) / 2.0
    c1 = h * (b**2 - a**2) / 2.0
    return m00, m01, m11, c0, c1


def assemble_coupling(problem, config, t):
    """Boundary operator ``M_B(t)`` (sparse, negative semidefinite) and ``c_B(t)``."""
    n = problem.dimension
    xl, xr = stock_interval(config, t)
    c_B = np.zeros(n)
    if xl >= xr:
        return sp.csr_matrix((n, n)), c_B
    m00, m01, m11, c0, c1 = edge_integrals(problem.top_x, xl, xr)
    i0, i1 = problem.top_idx[:-1], problem.top_idx[1:]
    rows = np.concatenate([i0, i0, i1, i1])
    cols = np.concatenate([i0, i1, i0, i1])
    vals = -np.concatenate([m00, m01, m01, m11])
    M_B = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    np.add.at(c_B, i0, config.T0 * c0)
    np.add.at(c_B, i1, config.T0 * c1)
    return M_B, c_B


class Heat2DSystem(LinearSplitSystem):
    """Split system ``f_I = nu A T``, ``f_E = alpha (M_B T + c_B)``, ``g = 0``."""

    def __init__(self, problem, config=None, rtol=DEFAULT_RTOL):
        self.problem = problem
        self.config = problem.config if config is None else config
        super().__init__(self.config.nu * problem.A, problem.mass, rtol=rtol)
        self._top0 = problem.top_idx[:-1]
        self._top1 = problem.top_idx[1:]

    def eval_fast(self, T, t):
        T = self._check(T)
        cfg = self.config
        out = np.zeros(self.dimension)
        xl, xr = stock_interval(cfg, t)
        if xl >= xr or cfg.alpha == 0:
            return out
        # only edges overlapping the strip contribute
        x = self.problem.top_x
        e0 = max(int(np.searchsorted(x, xl, side="right")) - 1, 0)
        e1 = min(int(np.searchsorted(x, xr, side="left")), x.size - 1)
        if e1 <= e0:
            return out
        m00, m01, m11, c0, c1 = edge_integrals(x[e0:e1 + 1], xl, xr)
        i0, i1 = self._top0[e0:e1], self._top1[e0:e1]
        Ta, Tb = T[i0], T[i1]
        T0 = cfg.T0
        out[i0] += cfg.alpha * (T0 * c0 - m00 * Ta - m01 * Tb)
        out[i1] += cfg.alpha * (T0 * c1 - m01 * Ta - m11 * Tb)
        return out

    def eval_source(self, t):
        return np.zeros(self.dimension)

    def fast_operator(self, t):
        M_B, c_B = assemble_coupling(self.problem, self.config, t)
        return self.config.alpha * M_B, self.config.alpha * c_B


def as_split_system(problem, config=None, rtol=DEFAULT_RTOL):
    return Heat2DSystem(problem, config, rtol=rtol)
