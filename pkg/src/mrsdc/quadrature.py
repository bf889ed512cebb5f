"""Quadrature nodes and weights for single-rate and multi-rate SDC.

All weights are integrals of Lagrange polynomials, computed exactly from the
monomial expansion of each basis polynomial. Nodes are mapped to [-1, 1]
before expansion so the Vandermonde systems stay well conditioned
for the small node counts used in practice.

Indexing is zero-based throughout: ``nodes[m]`` is the standard node
``tau_{m+1}`` and ``embedded[m, p]`` is ``tau_{m+1, p+1}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import InvalidArgumentError

__all__ = [
    "CollocationTableau",
    "MultiRateTableau",
    "make_nodes_equidistant_noleft",
    "lagrange_integrals",
    "collocation_weights",
    "node_to_node_weights",
    "make_collocation",
    "make_multirate",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def make_nodes_equidistant_noleft(M, t_left, t_right):
    """Equidistant nodes on ``(t_left, t_right]`` excluding the left end."""
    if int(M) != M or M < 1:
        raise InvalidArgumentError(f"node count must be a positive integer, got {M!r}")
    if not (np.isfinite(t_left) and np.isfinite(t_right)) or not t_left < t_right:
        raise InvalidArgumentError(f"degenerate interval [{t_left}, {t_right}]")
    M = int(M)
    h = (t_right - t_left) / M
    nodes = t_left + h * np.arange(1, M + 1)
    # exact right endpoint regardless of rounding
    nodes[-1] = t_right
    return nodes


def lagrange_integrals(nodes, lower, upper):
    """Integrate every Lagrange basis polynomial of ``nodes`` over intervals.

    Parameters
    ----------
    nodes : array_like, shape (n,)
        Distinct interpolation nodes.
    lower, upper : array_like, shape (k,)
        Integration bounds; ``lower[i]`` may exceed ``upper[i]``.

    Returns
    -------
    ndarray, shape (k, n)
        Entry ``[i, j]`` is the integral of ``l_j`` from ``lower[i]`` to
        ``upper[i]``.
    """
    nodes = np.asarray(nodes, dtype=float)
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    n = nodes.size
    if n == 0:
        raise InvalidArgumentError("empty node set")
    if np.unique(nodes).size != n:
        raise InvalidArgumentError("quadrature nodes must be distinct")

    # affine map onto [-1, 1] keeps the monomial coefficients small
    origin = 0.5 * (nodes.max() + nodes.min())
    scale = 0.5 * (nodes.max() - nodes.min())
    if scale == 0.0:
        scale = 1.0
    x = (nodes - origin) / scale
    xl = (lower - origin) / scale
    xu = (upper - origin) / scale

    out = np.empty((lower.size, n))
    with np.errstate(all="ignore"):
        for j in range(n):
            others = np.delete(x, j)
            coef = npoly.polyfromroots(others) / np.prod(x[j] - others)
            anti = npoly.polyint(coef)
            out[:, j] = npoly.polyval(xu, anti) - npoly.polyval(xl, anti)
    if not np.all(np.isfinite(out)):
        raise InvalidArgumentError(f"{n} nodes overflow the Lagrange expansion")
    return out * scale


def collocation_weights(nodes, t_left):
    """Collocation matrix ``q[m, j] = int_{t_left}^{nodes[m]} l_j``."""
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 1 or nodes.size == 0:
        raise InvalidArgumentError("nodes must be a nonempty 1-D sequence")
    if np.any(np.diff(nodes) <= 0):
        raise InvalidArgumentError("nodes must be distinct and sorted")
    return lagrange_integrals(nodes, np.full(nodes.size, t_left), nodes)


def node_to_node_weights(q):
    """Row differences of ``q``; the first row is kept as is."""
    q = np.asarray(q, dtype=float)
    return np.diff(q, axis=0, prepend=np.zeros((1, q.shape[1])))


@dataclass(frozen=True)
class CollocationTableau:
    """Standard nodes and weights on one step ``[t_left, t_right]``."""

    t_left: float
    t_right: float
    nodes: np.ndarray
    q: np.ndarray
    s: np.ndarray
    dtau: np.ndarray

    @property
    def M(self):
        return self.nodes.size

    @property
    def dt(self):
        return self.t_right - self.t_left

    def shifted(self, t_left):
        """Same tableau moved to start at ``t_left``; weights are reused."""
        delta = t_left - self.t_left
        return CollocationTableau(
            t_left=t_left,
            t_right=self.t_right + delta,
            nodes=_frozen(self.nodes + delta),
            q=self.q,
            s=self.s,
            dtau=self.dtau,
        )


@dataclass(frozen=True)
class MultiRateTableau:
    """Standard nodes plus ``P`` embedded nodes in each standard interval.

    Attributes
    ----------
    base : CollocationTableau
    embedded : ndarray, shape (M, P)
    s_hat : ndarray, shape (M, P)
        Standard interval, values at embedded nodes.
    s_tilde : ndarray, shape (M, P, M)
        Embedded interval, values at standard nodes.
    s_emb : ndarray, shape (M, P, P)
        Embedded interval, values at embedded nodes.
    dtau_emb : ndarray, shape (M, P)
    """

    base: CollocationTableau
    embedded: np.ndarray
    s_hat: np.ndarray
    s_tilde: np.ndarray
    s_emb: np.ndarray
    dtau_emb: np.ndarray

    @property
    def M(self):
        return self.base.M

    @property
    def P(self):
        return self.embedded.shape[1]

    @property
    def t_left(self):
        return self.base.t_left

    @property
    def t_right(self):
        return self.base.t_right

    @property
    def nodes(self):
        return self.base.nodes

    @property
    def s(self):
        return self.base.s

    @property
    def q(self):
        return self.base.q

    @property
    def dtau(self):
        return self.base.dtau

    @property
    def dt(self):
        return self.base.dt

    def shifted(self, t_left):
        delta = t_left - self.base.t_left
        return MultiRateTableau(
            base=self.base.shifted(t_left),
            embedded=_frozen(self.embedded + delta),
            s_hat=self.s_hat,
            s_tilde=self.s_tilde,
            s_emb=self.s_emb,
            dtau_emb=self.dtau_emb,
        )


def make_collocation(M, t_left, t_right):
    """Build the no-left equidistant collocation tableau."""
    nodes = make_nodes_equidistant_noleft(M, t_left, t_right)
    q = collocation_weights(nodes, t_left)
    s = node_to_node_weights(q)
    dtau = np.diff(nodes, prepend=t_left)
    return CollocationTableau(
        t_left=float(t_left),
        t_right=float(t_right),
        nodes=_frozen(nodes),
        q=_frozen(q),
        s=_frozen(s),
        dtau=_frozen(dtau),
    )


def make_multirate(M, P, t_left, t_right):
    """Build standard and embedded nodes with all four weight families."""
    if int(P) != P or P < 1:
        raise InvalidArgumentError(f"embedded node count must be a positive integer, got {P!r}")
    P = int(P)
    base = make_collocation(M, t_left, t_right)
    M = base.M
    starts = np.concatenate(([base.t_left], base.nodes[:-1]))

    embedded = np.empty((M, P))
    s_hat = np.empty((M, P))
    s_tilde = np.empty((M, P, M))
    s_emb = np.empty((M, P, P))
    for m in range(M):
        emb = make_nodes_equidistant_noleft(P, starts[m], base.nodes[m])
        lo = np.concatenate(([starts[m]], emb[:-1]))
        embedded[m] = emb
        s_hat[m] = lagrange_integrals(emb, [starts[m]], [base.nodes[m]])[0]
        s_tilde[m] = lagrange_integrals(base.nodes, lo, emb)
        s_emb[m] = lagrange_integrals(emb, lo, emb)
    dtau_emb = np.diff(np.column_stack((starts, embedded)), axis=1)

    return MultiRateTableau(
        base=base,
        embedded=_frozen(embedded),
        s_hat=_frozen(s_hat),
        s_tilde=_frozen(s_tilde),
        s_emb=_frozen(s_emb),
        dtau_emb=_frozen(dtau_emb),
    )
