import numpy as np
import pytest

import koopid
from koopid import numerics
from koopid.errors import InvalidInput
from koopid.ssd import write_grid_csv
from conftest import EX2_A, EX2_SPECTRUM, equivalence_instance

# columns of the identity selecting {1, x1, x2, x1^2, x1*x2, x2^2} inside the
# 9-function dictionary
QUADRATIC_SPAN = np.eye(9)[:, :6]


@pytest.fixture(scope="module")
def ex2_ssd(ex2_matrices):
    DX, DY = ex2_matrices
    return koopid.ssd(DX, DY)


@pytest.fixture(scope="module")
def vdp_ssd(vdp_matrices):
    DX, DY = vdp_matrices
    return koopid.ssd(DX, DY)


class TestExactSsd:
    def test_linear_dictionary_is_already_invariant(self, ex2_snapshots):
        linear = koopid.MonomialDictionary(2, [(1, 0), (0, 1)])
        DX = koopid.evaluate(linear, ex2_snapshots.X)
        DY = koopid.evaluate(linear, ex2_snapshots.Y)
        result = koopid.ssd(DX, DY)
        np.testing.assert_array_equal(result.C, np.eye(2))
        assert result.iterations == 1
        assert result.log[0].action == "complete"
        assert result.log[0].null_dim == 2

    def test_linear_system_identifies_quadratic_span(self, ex2_matrices, ex2_ssd,
                                                     tol):
        DX, _ = ex2_matrices
        assert ex2_ssd.subspace_dim == 6
        assert koopid.subspace_equal(DX @ ex2_ssd.C, DX @ QUADRATIC_SPAN, tol)
        assert ex2_ssd.max_range_angle <= 1e-8

    def test_dimension_strictly_decreases(self, ex2_ssd):
        dims = [entry.subspace_dim for entry in ex2_ssd.log]
        assert dims == sorted(dims, reverse=True)
        assert all(a > b for a, b in zip(dims, dims[1:]))
        assert ex2_ssd.iterations <= 9
        assert ex2_ssd.log[-1].action == "complete"

    def test_vanderpol_keeps_only_constants(self, vdp_ssd):
        assert vdp_ssd.subspace_dim == 1
        direction = vdp_ssd.C[:, 0] / np.linalg.norm(vdp_ssd.C[:, 0])
        assert abs(direction[0]) > 1.0 - 1e-8
        assert np.max(np.abs(direction[1:])) < 1e-3

    def test_zero_result_when_nothing_evolves_linearly(self):
        # x+ = 1/x on [1, 2] with the single observable x: the x and 1/x
        # data columns are linearly independent, so no nonzero combination
        # evolves linearly
        rng = np.random.Generator(np.random.PCG64(12))
        x = rng.uniform(1.0, 2.0, size=100)
        result = koopid.ssd(x[:, None], (1.0 / x)[:, None])
        assert result.is_zero
        assert result.subspace_dim == 0
        assert result.log[-1].action == "empty"

    def test_range_equality(self, ex2_matrices, ex2_ssd, tol):
        DX, DY = ex2_matrices
        assert koopid.subspace_equal(DX @ ex2_ssd.C, DY @ ex2_ssd.C, tol)

    def test_maximality_against_known_invariant_witnesses(self, ex2_matrices,
                                                          ex2_ssd, tol):
        DX, DY = ex2_matrices
        witnesses = [np.eye(9)[:, :1], np.eye(9)[:, :3], QUADRATIC_SPAN]
        Q = numerics.orthonormal_range(ex2_ssd.C, tol)
        for E in witnesses:
            assert koopid.subspace_equal(DX @ E, DY @ E, tol)
            residual = E - Q @ (Q.conj().T @ E)
            assert np.linalg.norm(residual, axis=0).max() <= 1e-8

    def test_basis_invariance(self, ex2_matrices, ex2_ssd, tol):
        DX, DY = ex2_matrices
        rng = np.random.Generator(np.random.PCG64(21))
        P = rng.standard_normal((9, 9)) + 3.0 * np.eye(9)
        transformed = koopid.ssd(DX @ P, DY @ P, tol)
        assert transformed.subspace_dim == ex2_ssd.subspace_dim
        assert koopid.subspace_equal((DX @ P) @ transformed.C, DX @ ex2_ssd.C, tol)
        # coefficient-space ranges transform consistently: range(P C') = range(C)
        assert koopid.subspace_equal(P @ transformed.C, ex2_ssd.C, tol)

    def test_assumption_violation(self):
        DX = np.ones((30, 2))
        with pytest.raises(koopid.AssumptionViolation):
            koopid.ssd(DX, DX)

    def test_few_samples_warns(self):
        rng = np.random.Generator(np.random.PCG64(13))
        DX = rng.standard_normal((5, 3))
        DY = rng.standard_normal((5, 3))
        with pytest.warns(UserWarning, match="snapshots"):
            koopid.ssd(DX, DY)


class TestApproximateSsd:
    def test_tiny_epsilon_matches_exact_on_exact_data(self, ex2_matrices,
                                                      ex2_ssd, tol):
        DX, DY = ex2_matrices
        result = koopid.approximate_ssd(DX, DY, 1e-15)
        assert result.mode == "approximate"
        assert result.subspace_dim == ex2_ssd.subspace_dim
        assert koopid.subspace_equal(DX @ result.C, DX @ ex2_ssd.C, tol)

    def test_recovers_subspace_from_perturbed_data(self, ex2_matrices, ex2_ssd):
        DX, DY = ex2_matrices
        rng = np.random.Generator(np.random.PCG64(5))
        DY_noisy = DY + 1e-6 * rng.standard_normal(DY.shape)
        result = koopid.approximate_ssd(DX, DY_noisy, 1e-4)
        assert result.subspace_dim == 6
        angles = koopid.principal_angles(DX @ result.C, DX @ ex2_ssd.C)
        assert angles.max() <= 1e-3

    def test_iteration_log_records_truncation(self, ex2_matrices):
        DX, DY = ex2_matrices
        rng = np.random.Generator(np.random.PCG64(6))
        DY_noisy = DY + 1e-6 * rng.standard_normal(DY.shape)
        result = koopid.approximate_ssd(DX, DY_noisy, 1e-4)
        for entry in result.log:
            assert entry.kept_rank is not None
            assert entry.truncation_ratio is not None
            if not entry.exact_fallback:
                assert entry.truncation_ratio <= 1e-4

    @pytest.mark.parametrize("eps", [0.0, 1.0, 1.5, -1e-3])
    def test_epsilon_out_of_range(self, ex2_matrices, eps):
        DX, DY = ex2_matrices
        with pytest.raises(InvalidInput):
            koopid.approximate_ssd(DX, DY, eps)


class TestReducedKoopman:
    def test_linear_dictionary_gives_transposed_map(self, ex2_snapshots):
        linear = koopid.MonomialDictionary(2, [(1, 0), (0, 1)])
        DX = koopid.evaluate(linear, ex2_snapshots.X)
        DY = koopid.evaluate(linear, ex2_snapshots.Y)
        result = koopid.ssd(DX, DY)
        reduced = koopid.reduced_koopman(DX, DY, result)
        np.testing.assert_allclose(reduced.matrix, EX2_A.T, atol=1e-12)
        oracle = np.linalg.solve(DX.T @ DX, DX.T @ DY)
        np.testing.assert_allclose(reduced.matrix, oracle, atol=1e-10)

    def test_linear_system_spectrum(self, ex2_matrices, ex2_ssd, ex2_dictionary):
        DX, DY = ex2_matrices
        reduced = koopid.reduced_koopman(DX, DY, ex2_ssd,
                                         dictionary=ex2_dictionary)
        assert reduced.matrix.shape == (6, 6)
        assert reduced.e_r <= 1e-10
        spectrum = np.sort_complex(np.linalg.eigvals(reduced.matrix))
        np.testing.assert_allclose(spectrum, EX2_SPECTRUM, atol=1e-9)
        assert koopid.numerical_rank(reduced.matrix) == 6
        assert reduced.dictionary.size == 6

    def test_constant_subspace_gives_unit_koopman(self, vdp_matrices, vdp_ssd):
        DX, DY = vdp_matrices
        reduced = koopid.reduced_koopman(DX, DY, vdp_ssd)
        np.testing.assert_allclose(reduced.matrix, [[1.0]], atol=1e-8)

    def test_zero_result_rejected(self):
        rng = np.random.Generator(np.random.PCG64(14))
        x = rng.uniform(1.0, 2.0, size=50)
        DX, DY = x[:, None], (1.0 / x)[:, None]
        result = koopid.ssd(DX, DY)
        with pytest.raises(InvalidInput):
            koopid.reduced_koopman(DX, DY, result)


class TestLiftEigenvectors:
    def test_constant_lift(self, vdp_matrices, vdp_ssd):
        DX, DY = vdp_matrices
        reduced = koopid.reduced_koopman(DX, DY, vdp_ssd)
        lifted = koopid.lift_eigenvectors(DX, DY, vdp_ssd, reduced)
        assert len(lifted) == 1
        ev = lifted[0]
        assert abs(ev.eigenvalue - 1.0) <= 1e-8
        direction = vdp_ssd.C[:, 0] / np.linalg.norm(vdp_ssd.C[:, 0])
        assert abs(np.vdot(ev.coefficients, direction)) > 1.0 - 1e-10

    def test_zero_reduced_eigenvalues_are_skipped(self, ex2_snapshots):
        linear = koopid.MonomialDictionary(2, [(1, 0), (0, 1)])
        DX = koopid.evaluate(linear, ex2_snapshots.X)
        DY = koopid.evaluate(linear, ex2_snapshots.Y)
        result = koopid.ssd(DX, DY)
        doctored = koopid.ReducedKoopman(matrix=np.diag([0.0, 0.5]), e_r=0.0)
        lifted = koopid.lift_eigenvectors(DX, DY, result, doctored)
        assert [ev.eigenvalue for ev in lifted] == [0.5]

    def test_radius_mode(self, ex2_matrices, ex2_ssd):
        DX, DY = ex2_matrices
        reduced = koopid.reduced_koopman(DX, DY, ex2_ssd)
        lifted = koopid.lift_eigenvectors(DX, DY, ex2_ssd, reduced)
        radius = [ev for ev in lifted if abs(ev.eigenvalue - 0.89) <= 1e-8]
        assert len(radius) == 1
        v = radius[0].coefficients
        target = np.zeros(9)
        target[3] = target[5] = 1.0 / np.sqrt(2.0)
        assert abs(np.vdot(v, target)) > 1.0 - 1e-9

    def test_every_lifted_pair_evolves_linearly(self, ex2_matrices, ex2_ssd):
        DX, DY = ex2_matrices
        reduced = koopid.reduced_koopman(DX, DY, ex2_ssd)
        for ev in koopid.lift_eigenvectors(DX, DY, ex2_ssd, reduced):
            ok, _ = koopid.check_linear_evolution(DX, DY, ev.coefficients,
                                                  ev.eigenvalue)
            assert ok

    def test_lifted_spans_match_forward_backward(self, ex2_matrices, ex2_ssd, tol):
        DX, DY = ex2_matrices
        reduced = koopid.reduced_koopman(DX, DY, ex2_ssd)
        lifted = koopid.lift_eigenvectors(DX, DY, ex2_ssd, reduced)
        fb = koopid.forward_backward_eigenpairs(DX, DY, tol)
        assert len(lifted) == len(fb) == 6
        for target in {round(e.eigenvalue.real, 6) + 1j * round(e.eigenvalue.imag, 6)
                       for e in lifted}:
            V_l = np.column_stack([e.coefficients for e in lifted
                                   if abs(e.eigenvalue - target) <= 1e-6])
            V_f = np.column_stack([e.coefficients for e in fb
                                   if abs(e.eigenvalue - target) <= 1e-6])
            assert V_l.shape == V_f.shape
            assert koopid.subspace_equal(V_l, V_f, tol)
        # every forward-backward vector lies in range(C)
        Q = numerics.orthonormal_range(ex2_ssd.C, tol)
        for e in fb:
            residual = e.coefficients - Q @ (Q.conj().T @ e.coefficients)
            assert np.linalg.norm(residual) <= 1e-8
        # and on the data, the identified subspace equals the span of the
        # matched functions
        F = np.column_stack([DX @ e.coefficients for e in fb])
        assert koopid.subspace_equal(DX @ ex2_ssd.C, F, tol)

    def test_equivalence_on_a_pruned_random_instance(self, tol):
        dictionary, snapshots = equivalence_instance(3)
        DX = koopid.evaluate(dictionary, snapshots.X)
        DY = koopid.evaluate(dictionary, snapshots.Y)
        result = koopid.ssd(DX, DY, tol)
        assert 0 < result.subspace_dim < dictionary.size
        reduced = koopid.reduced_koopman(DX, DY, result, tol)
        lifted = koopid.lift_eigenvectors(DX, DY, result, reduced, tol)
        fb = koopid.forward_backward_eigenpairs(DX, DY, tol)
        lam_l = np.sort_complex(np.array([e.eigenvalue for e in lifted]))
        lam_f = np.sort_complex(np.array([e.eigenvalue for e in fb]))
        np.testing.assert_allclose(lam_l, lam_f, atol=1e-6)


class TestEigenfunctionGrid:
    def test_constant_function(self, ex2_dictionary):
        v = np.zeros(9)
        v[0] = 1.0
        grid = koopid.eigenfunction_grid(ex2_dictionary, v,
                                         [(-2, 2), (-2, 2)], 11)
        np.testing.assert_allclose(grid.abs_values, np.ones(121))
        np.testing.assert_allclose(grid.angles, np.zeros(121))
        assert grid.shape == (11, 11)

    def test_radius_function_corner_value(self, ex2_dictionary):
        v = np.zeros(9)
        v[3] = v[5] = 1.0
        grid = koopid.eigenfunction_grid(ex2_dictionary, v, [(-2, 2), (-2, 2)], 5)
        corner = np.flatnonzero((grid.points == [2.0, 2.0]).all(axis=1))
        assert corner.size == 1
        assert grid.abs_values[corner[0]] == pytest.approx(8.0)
        assert grid.angles[corner[0]] == 0.0

    def test_conjugate_symmetry_of_angles(self, ex2_dictionary):
        v = np.zeros(9, dtype=complex)
        v[1], v[2] = 1.0, 1.0j
        g = koopid.eigenfunction_grid(ex2_dictionary, v, [(-2, 2), (-2, 2)], 7)
        g_conj = koopid.eigenfunction_grid(ex2_dictionary, np.conj(v),
                                           [(-2, 2), (-2, 2)], 7)
        np.testing.assert_allclose(g_conj.abs_values, g.abs_values, atol=1e-14)
        # angles negate modulo the branch cut
        wrap = np.abs(np.exp(1j * (g.angles + g_conj.angles)) - 1.0)
        assert wrap.max() <= 1e-12

    def test_resolution_must_be_at_least_two(self, ex2_dictionary):
        with pytest.raises(InvalidInput):
            koopid.eigenfunction_grid(ex2_dictionary, np.ones(9),
                                      [(-1, 1), (-1, 1)], 1)

    def test_coefficient_length_checked(self, ex2_dictionary):
        with pytest.raises(InvalidInput):
            koopid.eigenfunction_grid(ex2_dictionary, np.ones(4),
                                      [(-1, 1), (-1, 1)], 5)

    def test_grid_csv(self, ex2_dictionary, tmp_path):
        v = np.zeros(9)
        v[0] = 1.0
        grid = koopid.eigenfunction_grid(ex2_dictionary, v, [(-1, 1), (-1, 1)], 4)
        path = tmp_path / "grid.csv"
        write_grid_csv(grid, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "x_1,x_2,abs,angle"
        assert len(lines) == 1 + 16
