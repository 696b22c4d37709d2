"""
Unit tests for the sparse QP interior-point solver.

Tests cover:
  1. Program construction and builder cost expansion
  2. Optimal solves on small QPs / LPs with known answers, badly scaled and repeated rows
  3. Infeasibility detection with a Farkas certificate
  4. KKT certification and duality gap at the optimum
  5. COO text dump

Run:  python -m pytest tests/test_solver.py -v
"""
import sys
import os

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from markovgrid.errors import InputValidationError
from markovgrid.solver import (
    ConvexProgram,
    ProgramBuilder,
    Solution,
    SolverConfig,
    SolveStatus,
    dump_program,
    is_positive_semidefinite,
    load_program,
    solve,
    verify_kkt,
)


def _box_qp() -> ConvexProgram:
    """min (x−1)² + (y−2)² − 5  s.t.  x + y <= 2."""
    return ConvexProgram.from_dense(
        Q=[[2.0, 0.0], [0.0, 2.0]],
        c=[-2.0, -4.0],
        A_in=[[1.0, 1.0]],
        b_in=[2.0],
    )


# ═══════════════════════════════════════════════════════════════════════════
#  PROGRAM CONSTRUCTION
# ═══════════════════════════════════════════════════════════════════════════


class TestProgram:
    def test_shape_mismatch_rejected(self):
        with pytest.raises(InputValidationError):
            ConvexProgram.from_dense(c=[1.0, 1.0], A_eq=[[1.0, 1.0, 1.0]], b_eq=[1.0])

    def test_asymmetric_q_rejected(self):
        with pytest.raises(InputValidationError, match="symmetric"):
            ConvexProgram.from_dense(Q=[[1.0, 1.0], [0.0, 1.0]], c=[0.0, 0.0])

    def test_crossed_bounds_rejected(self):
        with pytest.raises(InputValidationError, match="Lower bound"):
            ConvexProgram.from_dense(c=[0.0], lb=[1.0], ub=[0.0])

    def test_square_term_matches_its_expansion(self):
        b = ProgramBuilder()
        x = b.add_variables("x", 2, lb=-np.inf)
        b.add_square(x, [2.0, -1.0], offset=0.5, weight=3.0)
        program = b.build()
        for point in ([0.0, 0.0], [1.0, 2.0], [-0.3, 0.7]):
            p = np.asarray(point)
            expected = 3.0 * (2.0 * p[0] - p[1] - 0.5) ** 2
            assert program.objective(p) == pytest.approx(expected)

    def test_negative_square_weight_rejected(self):
        b = ProgramBuilder()
        x = b.add_variables("x", 1)
        with pytest.raises(InputValidationError):
            b.add_square(x, [1.0], weight=-1.0)

    def test_range_skips_infinite_sides(self):
        b = ProgramBuilder()
        x = b.add_variables("x", 1)
        b.add_range(x, [1.0], -np.inf, 1.0, "r1")
        b.add_range(x, [1.0], 0.0, 1.0, "r2")
        program = b.build()
        assert program.num_in == 3
        assert program.in_labels == ("r1:hi", "r2:hi", "r2:lo")

    def test_psd_check(self):
        import scipy.sparse as sp

        assert is_positive_semidefinite(sp.csc_matrix(np.diag([1.0, 0.0])))
        assert not is_positive_semidefinite(sp.csc_matrix(np.diag([1.0, -1.0])))


# ═══════════════════════════════════════════════════════════════════════════
#  OPTIMAL SOLVES
# ═══════════════════════════════════════════════════════════════════════════


class TestOptimal:
    def test_inequality_qp(self):
        program = _box_qp()
        sol = solve(program)
        assert sol.status == SolveStatus.OPTIMAL
        np.testing.assert_allclose(sol.x, [0.5, 1.5], atol=1e-6)
        assert sol.objective == pytest.approx(-4.5, abs=1e-6)

    def test_equality_qp(self):
        program = ConvexProgram.from_dense(Q=np.eye(2) * 2.0, c=[0.0, 0.0], A_eq=[[1.0, 1.0]], b_eq=[1.0])
        sol = solve(program)
        assert sol.is_optimal
        np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-6)

    def test_bounded_lp_hits_upper_bound(self):
        program = ConvexProgram.from_dense(c=[-1.0], lb=[0.0], ub=[3.0])
        sol = solve(program)
        assert sol.is_optimal
        assert sol.x[0] == pytest.approx(3.0, abs=1e-6)

    def test_fixed_variable(self):
        b = ProgramBuilder()
        x = b.add_variables("x", 2, lb=0.0, ub=10.0)
        b.fix(int(x[0]), 2.0)
        b.add_square(x, [1.0, 1.0], offset=5.0)
        sol = solve(b.build())
        assert sol.is_optimal
        np.testing.assert_allclose(sol.x, [2.0, 3.0], atol=1e-6)

    def test_scaled_objective_same_minimizer(self):
        program = _box_qp()
        base = solve(program)
        scaled = solve(program.scaled(1e6))
        assert scaled.is_optimal
        np.testing.assert_allclose(scaled.x, base.x, atol=1e-5)

    def test_badly_scaled_rows_certify_against_original(self):
        """Rows scaled by 1e6 and 1e-4 give the same point; duals are reported for the rows as given."""
        program = ConvexProgram.from_dense(
            Q=[[2.0, 0.0], [0.0, 2.0]],
            c=[-2.0, -4.0],
            A_eq=[[1e6, -1e6]],
            b_eq=[-1e6],
            A_in=[[1e-4, 1e-4]],
            b_in=[2e-4],
        )
        sol = solve(program)
        assert sol.is_optimal
        np.testing.assert_allclose(sol.x, [0.5, 1.5], atol=1e-6)
        assert verify_kkt(program, sol, 1e-6).passed

    def test_repeated_equality_rows(self):
        program = ConvexProgram.from_dense(
            Q=np.eye(2) * 2.0, c=[0.0, 0.0], A_eq=[[1.0, 1.0], [1.0, 1.0], [2.0, 2.0]], b_eq=[1.0, 1.0, 2.0],
        )
        sol = solve(program)
        assert sol.is_optimal
        np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-6)

    def test_non_psd_rejected(self):
        program = ConvexProgram.from_dense(Q=[[-1.0]], c=[0.0], lb=[0.0], ub=[1.0])
        with pytest.raises(InputValidationError):
            solve(program)


# ═══════════════════════════════════════════════════════════════════════════
#  INFEASIBILITY / UNBOUNDEDNESS
# ═══════════════════════════════════════════════════════════════════════════


class TestInfeasible:
    def test_empty_interval(self):
        """x <= 0 and x >= 1."""
        program = ConvexProgram.from_dense(c=[0.0], A_in=[[1.0], [-1.0]], b_in=[0.0, -1.0])
        sol = solve(program)
        assert sol.status == SolveStatus.INFEASIBLE
        cert = sol.certificate
        assert cert is not None
        assert np.all(cert.z_in >= 0.0)
        # z_inᵀ b_in = −1 proves emptiness
        assert float(cert.z_in @ program.b_in) == pytest.approx(-1.0, abs=1e-6)

    def test_unbounded_is_not_optimal(self):
        program = ConvexProgram.from_dense(c=[-1.0], lb=[0.0])
        sol = solve(program, SolverConfig(max_iter=60))
        assert sol.status != SolveStatus.OPTIMAL


# ═══════════════════════════════════════════════════════════════════════════
#  KKT CERTIFICATION
# ═══════════════════════════════════════════════════════════════════════════


class TestKkt:
    def test_optimal_solution_passes(self):
        program = _box_qp()
        sol = solve(program)
        report = verify_kkt(program, sol, 1e-8)
        assert report.passed
        assert report.as_dict()["passed"] is True

    def test_history_gap_closes(self):
        sol = solve(_box_qp())
        assert sol.history
        last = sol.history[-1]
        assert abs(last.gap) < 1e-6
        assert last.dual_objective <= last.primal_objective + 1e-6

    def test_arbitrary_point_fails(self):
        program = _box_qp()
        report = verify_kkt(program, Solution.primal_only(program, np.array([3.0, 3.0])), 1e-8)
        assert not report.passed
        assert report.inequality > 0


# ═══════════════════════════════════════════════════════════════════════════
#  DUMP
# ═══════════════════════════════════════════════════════════════════════════


class TestDump:
    def test_dump_reload_preserves_program(self, tmp_path):
        program = _box_qp()
        path = dump_program(program, tmp_path / "qp.txt")
        loaded = load_program(path)
        assert loaded.n == program.n
        np.testing.assert_allclose(loaded.Q.toarray(), program.Q.toarray())
        np.testing.assert_allclose(loaded.A_in.toarray(), program.A_in.toarray())
        np.testing.assert_allclose(loaded.b_in, program.b_in)
        np.testing.assert_allclose(solve(loaded).x, solve(program).x, atol=1e-6)
