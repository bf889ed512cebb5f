"""Split initial value problems ``M dT/dt = f_I(T) + f_E(T, t) + g(t)``.

``f_I`` is the slow, linear, time-independent part that steppers treat
implicitly; ``f_E`` is the fast, affine, time-dependent part treated
explicitly; ``g`` is a slow source independent of ``T``. The mass matrix is a
positive diagonal (lumped).

Steppers never see an assembled Jacobian of ``f_I``. They use matrix actions
plus :meth:`SplitSystem.solve_shifted`, which solves ``(M - a K) T = rhs`` for
the linear operator ``K`` of ``f_I``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgumentError, SolverError

__all__ = [
    "SplitSystem",
    "LinearSplitSystem",
    "ScalarSplitSystem",
    "CountingSystem",
    "pcg",
]

DEFAULT_RTOL = 1e-10


def pcg(A, b, diag, rtol=DEFAULT_RTOL, maxiter=None, x0=None):
    """Diagonally preconditioned conjugate gradients for SPD ``A``.

    The stopping test is ``||b - A x|| <= rtol * ||b||``. A warm start ``x0``
    is used only through its defect, so the returned iterate satisfies the
    same bound whatever the quality of the guess.

    Raises
    ------
    SolverError
        If the tolerance is not met within ``maxiter`` iterations.
    """
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    if not np.isfinite(bnorm):
        raise SolverError("non-finite right-hand side", residual=float("nan"))
    if bnorm == 0.0:
        return np.zeros_like(b)
    if maxiter is None:
        maxiter = 10 * n

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    rnorm = np.linalg.norm(r)
    if x0 is not None and rnorm > bnorm:
        # the guess is worse than zero
        x = np.zeros_like(b)
        r = b.copy()
        rnorm = bnorm
    if rnorm <= rtol * bnorm * 1e-3:
        return x

    # solve for the correction to a tighter relative tolerance than requested
    # when warm-started, so repeated solves near a fixed point stay accurate
    target = rtol * min(bnorm, rnorm)
    z = r / diag
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            return x
        z = r / diag
        rz_new = r @ z
        p *= rz_new / rz
        p += z
        rz = rz_new
    raise SolverError(
        f"PCG did not converge in {maxiter} iterations "
        f"(relative residual {rnorm / bnorm:.3e}, rtol {rtol:.1e})",
        residual=rnorm / bnorm,
        iterations=maxiter,
    )


class SplitSystem:
    """Contract consumed by the steppers.

    Subclasses implement the six capabilities below. ``mass`` is the lumped
    diagonal as a read-only vector of length :attr:`dimension`.
    """

    dimension: int
    mass: np.ndarray

    def eval_slow(self, T):
        raise NotImplementedError

    def eval_fast(self, T, t):
        raise NotImplementedError

    def eval_source(self, t):
        raise NotImplementedError

    def apply_mass(self, T):
        return self.mass * self._check(T)

    def solve_shifted(self, a, rhs, guess=None):
        raise NotImplementedError

    def fast_operator(self, t):
        """Return ``(B, b)`` with ``f_E(T, t) = B @ T + b``."""
        raise NotImplementedError

    def solve_fully_implicit(self, a, rhs, t, guess=None):
        """Solve ``(M - a (K + B(t))) T = rhs`` with ``B(t)`` from :meth:`fast_operator`."""
        raise NotImplementedError

    def _check(self, T):
        T = np.asarray(T, dtype=float)
        if T.shape != (self.dimension,):
            raise InvalidArgumentError(
                f"state has shape {T.shape}, expected ({self.dimension},)"
            )
        return T


class LinearSplitSystem(SplitSystem):
    """Split system with a sparse linear slow operator.

    Parameters
    ----------
    stiffness : sparse matrix or array, shape (N, N)
        Linear operator ``K`` with ``f_I(T) = K @ T``. Must make ``M - a K``
        symmetric positive definite for ``a >= 0``.
    mass : array_like, shape (N,)
        Strictly positive lumped mass diagonal.
    fast : callable, optional
        ``fast(t) -> (B, b)``; ``B`` sparse ``(N, N)`` or ``None``, ``b`` a
        vector or ``None``. Omitted means ``f_E = 0``.
    source : callable, optional
        ``source(t) -> vector``. Omitted means ``g = 0``.
    rtol : float
        Relative residual tolerance of the shifted solves.
    """

    def __init__(self, stiffness, mass, fast=None, source=None, rtol=DEFAULT_RTOL):
        mass = np.array(mass, dtype=float).ravel()
        if mass.size == 0 or not np.all(np.isfinite(mass)) or np.any(mass <= 0):
            raise InvalidArgumentError("lumped mass must be finite and strictly positive")
        mass.setflags(write=False)
        K = sp.csr_matrix(stiffness, dtype=float)
        if K.shape != (mass.size, mass.size):
            raise InvalidArgumentError(
                f"stiffness has shape {K.shape}, mass has length {mass.size}"
            )
        if rtol <= 0:
            raise InvalidArgumentError("rtol must be positive")
        self.dimension = mass.size
        self.mass = mass
        self.stiffness = K
        self.rtol = float(rtol)
        self._fast = fast
        self._source = source
        self._zero = np.zeros(self.dimension)
        self._zero.setflags(write=False)
        self._shifted = lru_cache(maxsize=16)(self._build_shifted)

    def eval_slow(self, T):
        return self.stiffness @ self._check(T)

    def eval_fast(self, T, t):
        T = self._check(T)
        if self._fast is None:
            return np.zeros(self.dimension)
        B, b = self._fast(t)
        out = np.zeros(self.dimension) if B is None else B @ T
        if b is not None:
            out = out + b
        return out

    def eval_source(self, t):
        if self._source is None:
            return np.zeros(self.dimension)
        return np.asarray(self._source(t), dtype=float).reshape(self.dimension)

    def fast_operator(self, t):
        if self._fast is None:
            return sp.csr_matrix((self.dimension, self.dimension)), self._zero
        B, b = self._fast(t)
        if B is None:
            B = sp.csr_matrix((self.dimension, self.dimension))
        if b is None:
            b = self._zero
        return sp.csr_matrix(B), np.asarray(b, dtype=float)

    def _build_shifted(self, a):
        return (sp.diags(self.mass) - a * self.stiffness).tocsr()

    def shifted_operator(self, a):
        """Assembled ``M - a K`` (cached for recently used shifts)."""
        return self._shifted(float(a))

    def solve_shifted(self, a, rhs, guess=None):
        if a < 0:
            raise InvalidArgumentError("shift must be nonnegative")
        rhs = self._check(rhs)
        if a == 0:
            return rhs / self.mass
        A = self.shifted_operator(a)
        diag = self.mass - a * self.stiffness.diagonal()
        return pcg(A, rhs, diag, rtol=self.rtol, maxiter=10 * self.dimension, x0=guess)

    def solve_fully_implicit(self, a, rhs, t, guess=None):
        rhs = self._check(rhs)
        B, _ = self.fast_operator(t)
        A = (self.shifted_operator(a) - a * B).tocsr()
        return _bicgstab(A, rhs, self.rtol, guess)


def _bicgstab(A, rhs, rtol, guess=None):
    bnorm = np.linalg.norm(rhs)
    if not np.isfinite(bnorm):
        raise SolverError("non-finite right-hand side", residual=float("nan"))
    if bnorm == 0.0:
        return np.zeros_like(rhs)
    n = rhs.size
    diag = A.diagonal()
    precond = spla.LinearOperator(A.shape, matvec=lambda v: v / diag)
    x, info = spla.bicgstab(A, rhs, x0=guess, rtol=rtol, atol=0.0, maxiter=10 * n, M=precond)
    res = np.linalg.norm(rhs - A @ x) / bnorm
    if info != 0 or not np.isfinite(res) or res > rtol * 10:
        raise SolverError(
            f"BiCGSTAB failed (info={info}, relative residual {res:.3e})",
            residual=res,
        )
    return x


class ScalarSplitSystem(LinearSplitSystem):
    """One-dimensional test problem ``m y' = lam_slow y + lam_fast y + g(t)``.

    ``lam_fast`` may be a constant or a callable of ``t``.
    """

    def __init__(self, lam_slow, lam_fast=0.0, source=None, mass=1.0):
        if mass <= 0:
            raise InvalidArgumentError("mass must be positive")
        if lam_slow > 0:
            raise InvalidArgumentError("slow eigenvalue must be nonpositive")
        self.lam_slow = float(lam_slow)
        self.lam_fast = lam_fast
        self._g = source
        super().__init__(
            np.array([[lam_slow]]),
            [mass],
            fast=self._fast_op,
            source=None if source is None else (lambda t: np.array([source(t)])),
        )

    def _lam_fast(self, t):
        return self.lam_fast(t) if callable(self.lam_fast) else self.lam_fast

    def _fast_op(self, t):
        return sp.csr_matrix([[self._lam_fast(t)]]), None

    def eval_fast(self, T, t):
        return self._lam_fast(t) * self._check(T)

    def solve_shifted(self, a, rhs, guess=None):
        if a < 0:
            raise InvalidArgumentError("shift must be nonnegative")
        return self._check(rhs) / (self.mass - a * self.lam_slow)

    def solve_fully_implicit(self, a, rhs, t, guess=None):
        return self._check(rhs) / (self.mass - a * (self.lam_slow + self._lam_fast(t)))


class CountingSystem(SplitSystem):
    """Transparent wrapper that counts implicit solves and fast evaluations."""

    def __init__(self, inner):
        self.inner = inner
        self.dimension = inner.dimension
        self.mass = inner.mass
        self.implicit_solves = 0
        self.fast_evals = 0

    def eval_slow(self, T):
        return self.inner.eval_slow(T)

    def eval_fast(self, T, t):
        self.fast_evals += 1
        return self.inner.eval_fast(T, t)

    def eval_source(self, t):
        return self.inner.eval_source(t)

    def apply_mass(self, T):
        return self.inner.apply_mass(T)

    def solve_shifted(self, a, rhs, guess=None):
        self.implicit_solves += 1
        return self.inner.solve_shifted(a, rhs, guess)

    def fast_operator(self, t):
        self.fast_evals += 1
        return self.inner.fast_operator(t)

    def solve_fully_implicit(self, a, rhs, t, guess=None):
        self.implicit_solves += 1
        return self.inner.solve_fully_implicit(a, rhs, t, guess)

    def __getattr__(self, name):
        return getattr(self.inner, name)
