import pytest
import numpy as np
from scipy import sparse
from src.sdpsolve import (ConicProblem, PSDBlock, SolverError, SolveReport, SolveStatus, Tolerances, check_solution,
                          solve)


def two_by_two_block():
    """Map s -> [[s0, s1], [s1, s2]] flattened row-major"""
    rows = [0, 1, 2, 3]
    cols = [0, 1, 1, 2]
    return PSDBlock('moment', 2, sparse.csr_matrix(([1.0] * 4, (rows, cols)), shape=(4, 3)))


def equalities(pairs, n=3):
    """Rows s_col = value"""
    cols = [col for col, _ in pairs]
    A = sparse.csr_matrix(([1.0] * len(pairs), (list(range(len(pairs))), cols)), shape=(len(pairs), n))
    return A, np.array([value for _, value in pairs], dtype=float)


def toy_problem(sense='inf'):
    """min s0 subject to [[s0, s1], [s1, s2]] PSD, s2 = 1, s1 = 0.5"""
    A, b = equalities([(2, 1.0), (1, 0.5)])
    return ConicProblem(A, b, np.array([1.0, 0.0, 0.0]), (two_by_two_block(),), sense)


def trace_problem(C, sense):
    """Optimise <C, X> over PSD X with unit trace; the optimum is an extreme eigenvalue of C"""
    k = C.shape[0]
    pairs = [(i, j) for i in range(k) for j in range(i, k)]
    position = {pair: col for col, pair in enumerate(pairs)}
    rows = list(range(k * k))
    cols = [position[(min(i, j), max(i, j))] for i in range(k) for j in range(k)]
    block = PSDBlock('X', k, sparse.csr_matrix(([1.0] * (k * k), (rows, cols)), shape=(k * k, len(pairs))))
    trace = sparse.csr_matrix(([1.0] * k, ([0] * k, [position[(i, i)] for i in range(k)])), shape=(1, len(pairs)))
    c = np.array([C[i, j] if i == j else 2.0 * C[i, j] for i, j in pairs])
    return ConicProblem(trace, np.array([1.0]), c, (block,), sense)


class TestConicProblem:
    def test_dimensions(self):
        """Test problem dimensions"""
        problem = toy_problem()

        assert (problem.n, problem.m, problem.total_psd_dimension) == (3, 2, 2)

    def test_unknown_sense(self):
        """Test that only inf and sup are accepted"""
        with pytest.raises(SolverError, match='Unknown sense'):
            toy_problem('max')

    def test_shape_mismatch(self):
        """Test that A must match the cost vector"""
        A, b = equalities([(0, 1.0)], n=2)

        with pytest.raises(SolverError):
            ConicProblem(A, b, np.zeros(3), ())


class TestSolve:
    def test_toy_optimum(self):
        """Test that the smallest s0 with s0 * 1 >= 0.5^2 is 0.25"""
        result = solve(toy_problem())

        assert result.report.status is SolveStatus.OPTIMAL
        assert result.report.is_verified
        assert result.report.bound == pytest.approx(0.25, abs=1e-6)
        assert result.s[1:] == pytest.approx([0.5, 1.0], abs=1e-9)
        assert 'status=optimal' in result.report.summary()

    def test_maximisation(self):
        """Test the largest off-diagonal entry of a unit-diagonal PSD matrix"""
        A, b = equalities([(0, 1.0), (2, 1.0)])
        problem = ConicProblem(A, b, np.array([0.0, 1.0, 0.0]), (two_by_two_block(),), 'sup')

        result = solve(problem)

        assert result.report.status is SolveStatus.OPTIMAL
        assert result.report.bound == pytest.approx(1.0, abs=1e-6)

    def test_redundant_rows_are_dropped(self):
        """Test that repeated equalities are removed in presolve"""
        A, b = equalities([(2, 1.0), (2, 1.0), (1, 0.5)])
        problem = ConicProblem(A, b, np.array([1.0, 0.0, 0.0]), (two_by_two_block(),))

        result = solve(problem)

        assert result.report.dropped_rows == 1
        assert result.report.bound == pytest.approx(0.25, abs=1e-6)

    def test_inconsistent_equalities(self):
        """Test s0 = 1 and s0 = 2 together"""
        A, b = equalities([(0, 1.0), (0, 2.0)])
        problem = ConicProblem(A, b, np.array([1.0, 0.0, 0.0]), (two_by_two_block(),))

        result = solve(problem)

        assert result.report.status is SolveStatus.INFEASIBLE
        assert 'inconsistent' in result.report.message

    def test_fixed_block_not_psd(self):
        """Test a block pinned by the equalities to an indefinite matrix"""
        A, b = equalities([(0, 1.0), (1, 2.0), (2, 1.0)])
        problem = ConicProblem(A, b, np.array([1.0, 0.0, 0.0]), (two_by_two_block(),))

        result = solve(problem)

        assert result.report.status is SolveStatus.INFEASIBLE
        assert result.report.certificate_norm == pytest.approx(1.0)

    def test_fixed_singular_block_within_rounding(self, caplog):
        """Test that a pinned block with a rounding-sized negative eigenvalue stays feasible"""
        A, b = equalities([(0, 1.0), (1, 1.0), (2, 1.0 - 1e-7)])
        problem = ConicProblem(A, b, np.array([1.0, 0.0, 0.0]), (two_by_two_block(),))

        result = solve(problem)

        assert result.report.status is SolveStatus.OPTIMAL
        assert result.report.bound == pytest.approx(1.0)
        assert 'within the rounding slack' in caplog.text

    def test_fixed_block_beside_free_block(self):
        """Test that a pinned singular block does not spoil the optimum of a free block"""
        A, b = equalities([(0, 1.0), (1, 1.0), (2, 1.0 - 1e-7), (5, 1.0), (4, 0.5)], n=6)
        free = PSDBlock('free', 2, sparse.csr_matrix(([1.0] * 4, ([0, 1, 2, 3], [3, 4, 4, 5])), shape=(4, 6)))
        pinned = PSDBlock('pinned', 2, sparse.csr_matrix(([1.0] * 4, ([0, 1, 2, 3], [0, 1, 1, 2])), shape=(4, 6)))
        problem = ConicProblem(A, b, np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0]), (pinned, free))

        result = solve(problem)

        assert result.report.status is SolveStatus.OPTIMAL
        assert result.report.bound == pytest.approx(0.25, abs=1e-6)

    def test_unbounded_without_blocks(self):
        """Test a free direction that no PSD block limits"""
        A, b = equalities([(1, 1.0)], n=2)
        problem = ConicProblem(A, b, np.array([1.0, 0.0]), ())

        assert solve(problem).report.status is SolveStatus.UNBOUNDED

    def test_fully_determined(self):
        """Test a problem with no free directions"""
        A, b = equalities([(0, 1.0), (1, 0.5), (2, 1.0)])
        problem = ConicProblem(A, b, np.array([1.0, 0.0, 0.0]), (two_by_two_block(),))

        result = solve(problem)

        assert result.report.status is SolveStatus.OPTIMAL
        assert result.report.iterations == 0
        assert result.report.bound == pytest.approx(1.0)

    def test_psd_cap(self):
        """Test that oversized problems are refused"""
        with pytest.raises(SolverError, match='exceeds the cap'):
            solve(toy_problem(), Tolerances.from_config(psd_cap=1))

    def test_tolerance_overrides(self):
        """Test that None leaves the configured value"""
        tol = Tolerances.from_config(tol_gap=1e-6, max_iter=None)

        assert tol.tol_gap == 1e-6
        assert tol.max_iter == Tolerances.from_config().max_iter


class TestAnalyticLibrary:
    @pytest.mark.parametrize('seed', range(50))
    def test_extreme_eigenvalue(self, seed):
        """Test unit-trace problems whose optimum is the smallest or largest eigenvalue"""
        rng = np.random.default_rng(seed)
        k = 2 + seed % 3
        G = rng.normal(size=(k, k))
        C = 0.5 * (G + G.T)
        sense = 'inf' if seed % 2 == 0 else 'sup'
        eigenvalues = np.linalg.eigvalsh(C)
        expected = eigenvalues[0] if sense == 'inf' else eigenvalues[-1]

        result = solve(trace_problem(C, sense))

        assert result.report.status is SolveStatus.OPTIMAL
        assert result.report.bound == pytest.approx(expected, abs=1e-7)
        assert result.report.gap <= 1e-7


class TestSolveReport:
    def report(self, status):
        return SolveReport(status, 'sup', 0.40095, 0.40188, 1e-3, 1e-9, 0.0, 40, 0.1)

    def test_optimal_report_is_a_bound(self):
        """Test that an optimal solve certifies its objective"""
        assert self.report(SolveStatus.OPTIMAL).bound == 0.40095

    def test_unverified_reports_have_no_bound(self):
        """Test that stalled or failed solves give no certified bound"""
        for status in (SolveStatus.NEAR_OPTIMAL, SolveStatus.FAILURE):
            report = self.report(status)

            assert report.bound is None
            assert not report.is_verified
            assert report.primal_objective == 0.40095


class TestCheckSolution:
    def setup_method(self):
        """Set up test fixtures"""
        self.problem = toy_problem()

    def test_optimal_point(self):
        """Test the analytic optimum"""
        check = check_solution(self.problem, [0.25, 0.5, 1.0])

        assert check.residual == 0.0
        assert check.min_eigenvalue == pytest.approx(0.0, abs=1e-12)
        assert check.objective == 0.25
        assert check.feasible()

    def test_indefinite_point(self):
        """Test a point violating the PSD constraint"""
        check = check_solution(self.problem, [0.0, 0.5, 1.0])

        assert check.block_min_eigenvalues['moment'] == pytest.approx((1.0 - np.sqrt(2.0)) / 2.0)
        assert not check.feasible()

    def test_wrong_length(self):
        """Test that the vector must match the variables"""
        with pytest.raises(SolverError):
            check_solution(self.problem, [1.0, 2.0])
