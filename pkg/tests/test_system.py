import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mrsdc.errors import InvalidArgumentError, SolverError
from mrsdc.heat2d import Heat2DConfig, as_split_system, assemble
from mrsdc.system import CountingSystem, LinearSplitSystem, ScalarSplitSystem, pcg


@pytest.fixture(scope="module")
def plate():
    cfg = Heat2DConfig(nx=8, ny=4, nu=0.1, alpha=0.01)
    return as_split_system(assemble(cfg))


def _laplacian_1d(n):
    main = 2.0 * np.ones(n)
    off = -np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


class TestScalarSystem:
    def test_eval_slow(self):
        sys = ScalarSplitSystem(-1.0)
        np.testing.assert_array_equal(sys.eval_slow([2.0]), [-2.0])
        np.testing.assert_array_equal(sys.eval_slow([0.0]), [0.0])

    def test_eval_fast(self):
        sys = ScalarSplitSystem(-1.0, 0.5)
        np.testing.assert_array_equal(sys.eval_fast([2.0], 0.0), [1.0])

    def test_time_dependent_fast(self):
        sys = ScalarSplitSystem(-1.0, lambda t: -t)
        np.testing.assert_array_equal(sys.eval_fast([2.0], 3.0), [-6.0])

    def test_source(self):
        sys = ScalarSplitSystem(-1.0, source=math.sin)
        assert sys.eval_source(0.0)[0] == 0.0
        assert sys.eval_source(math.pi / 2)[0] == pytest.approx(1.0)

    def test_solve_shifted_example(self):
        sys = ScalarSplitSystem(-1.0)
        np.testing.assert_allclose(sys.solve_shifted(0.5, [1.0]), [2.0 / 3.0], rtol=1e-15)

    def test_fully_implicit_includes_fast(self):
        sys = ScalarSplitSystem(-1.0, 0.5)
        np.testing.assert_allclose(sys.solve_fully_implicit(1.0, [1.0], 0.0), [1.0 / 1.5])

    @pytest.mark.parametrize("kwargs", [dict(lam_slow=1.0), dict(lam_slow=-1.0, mass=0.0)])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            ScalarSplitSystem(**kwargs)

    def test_negative_shift(self):
        with pytest.raises(InvalidArgumentError):
            ScalarSplitSystem(-1.0).solve_shifted(-0.1, [1.0])


class TestLinearSystem:
    def test_apply_mass(self):
        sys = LinearSplitSystem(sp.csr_matrix((2, 2)), [2.0, 3.0])
        np.testing.assert_array_equal(sys.apply_mass([1.0, 1.0]), [2.0, 3.0])
        ident = LinearSplitSystem(sp.csr_matrix((2, 2)), [1.0, 1.0])
        np.testing.assert_array_equal(ident.apply_mass([4.0, -1.0]), [4.0, -1.0])

    def test_zero_shift_is_mass_inverse(self, plate):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(plate.dimension)
        np.testing.assert_allclose(plate.solve_shifted(0.0, plate.apply_mass(x)), x, rtol=1e-14)

    @pytest.mark.parametrize("a", [1e-3, 1.0, 100.0])
    def test_shifted_residual(self, plate, a):
        rng = np.random.default_rng(1)
        rhs = rng.standard_normal(plate.dimension)
        T = plate.solve_shifted(a, rhs)
        res = plate.shifted_operator(a) @ T - rhs
        assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(rhs)

    def test_inverse_pair(self, plate):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(plate.dimension)
        a = 3.0
        y = plate.solve_shifted(a, plate.shifted_operator(a) @ x)
        cond = np.linalg.cond(plate.shifted_operator(a).toarray())
        np.testing.assert_allclose(y, x, atol=10 * cond * 1e-10 * np.abs(x).max())

    def test_shifted_operator_spd(self, plate):
        A = plate.shifted_operator(5.0).toarray()
        np.testing.assert_allclose(A, A.T, atol=1e-15)
        assert np.linalg.eigvalsh(A).min() > 0

    def test_dimension_mismatch(self, plate):
        with pytest.raises(InvalidArgumentError):
            plate.eval_slow(np.zeros(plate.dimension + 1))
        with pytest.raises(InvalidArgumentError):
            plate.eval_fast(np.zeros(3), 0.0)
        with pytest.raises(InvalidArgumentError):
            plate.solve_shifted(1.0, np.zeros(2))

    def test_linearity(self, plate):
        rng = np.random.default_rng(3)
        a, b = rng.standard_normal((2, plate.dimension))
        np.testing.assert_allclose(
            plate.eval_slow(a + b), plate.eval_slow(a) + plate.eval_slow(b), atol=1e-12
        )

    def test_fast_affine(self, plate):
        rng = np.random.default_rng(4)
        a, b = rng.standard_normal((2, plate.dimension))
        t = 1.0
        lin = lambda x: plate.eval_fast(x, t) - plate.eval_fast(np.zeros_like(x), t)
        np.testing.assert_allclose(lin(2 * a - b), 2 * lin(a) - lin(b), atol=1e-12)

    def test_fast_operator_matches_eval(self, plate):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(plate.dimension)
        for t in (0.0, 0.7, 3.1):
            B, b = plate.fast_operator(t)
            np.testing.assert_allclose(B @ x + b, plate.eval_fast(x, t), atol=1e-14)

    def test_fully_implicit_residual(self, plate):
        rng = np.random.default_rng(6)
        rhs = rng.standard_normal(plate.dimension)
        a, t = 2.0, 0.3
        T = plate.solve_fully_implicit(a, rhs, t)
        B, _ = plate.fast_operator(t)
        res = (plate.shifted_operator(a) - a * B) @ T - rhs
        assert np.linalg.norm(res) <= 1e-9 * np.linalg.norm(rhs)

    def test_invalid_mass(self):
        with pytest.raises(InvalidArgumentError):
            LinearSplitSystem(sp.eye(2), [1.0, 0.0])
        with pytest.raises(InvalidArgumentError):
            LinearSplitSystem(sp.eye(3), [1.0, 1.0])

    def test_default_fast_and_source(self):
        sys = LinearSplitSystem(-_laplacian_1d(4), np.ones(4))
        np.testing.assert_array_equal(sys.eval_fast(np.ones(4), 0.0), np.zeros(4))
        np.testing.assert_array_equal(sys.eval_source(1.0), np.zeros(4))


class TestPCG:
    @given(b=arrays(float, 20, elements=st.floats(-10, 10)), shift=st.floats(1e-3, 10))
    @settings(max_examples=40, deadline=None)
    def test_tolerance_met(self, b, shift):
        A = (sp.identity(20) * shift + _laplacian_1d(20)).tocsr()
        x = pcg(A, b, A.diagonal(), rtol=1e-10)
        assert np.linalg.norm(A @ x - b) <= 1e-10 * max(np.linalg.norm(b), 1e-300)

    def test_zero_rhs(self):
        A = _laplacian_1d(5)
        np.testing.assert_array_equal(pcg(A, np.zeros(5), A.diagonal()), np.zeros(5))

    def test_warm_start_exact_guess(self):
        A = (_laplacian_1d(10) + sp.identity(10)).tocsr()
        x = np.linspace(0, 1, 10)
        b = A @ x
        np.testing.assert_allclose(pcg(A, b, A.diagonal(), x0=x), x, rtol=1e-12)

    def test_bad_guess_falls_back(self):
        A = (_laplacian_1d(10) + sp.identity(10)).tocsr()
        b = np.ones(10)
        x = pcg(A, b, A.diagonal(), x0=1e6 * np.ones(10))
        assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)

    def test_non_finite_rhs(self):
        A = _laplacian_1d(3)
        with pytest.raises(SolverError):
            pcg(A, np.array([1.0, np.inf, 0.0]), A.diagonal())

    def test_non_convergence_reports_residual(self):
        A = (_laplacian_1d(50) * 1e3 + sp.identity(50)).tocsr()
        with pytest.raises(SolverError) as info:
            pcg(A, np.ones(50), A.diagonal(), rtol=1e-14, maxiter=2)
        assert info.value.residual > 0
        assert info.value.iterations == 2


class TestCountingSystem:
    def test_counts(self):
        sys = CountingSystem(ScalarSplitSystem(-1.0, 0.5))
        sys.eval_fast([1.0], 0.0)
        sys.solve_shifted(1.0, [1.0])
        sys.solve_fully_implicit(1.0, [1.0], 0.0)
        assert sys.fast_evals == 1
        assert sys.implicit_solves == 2
        assert sys.lam_slow == -1.0
