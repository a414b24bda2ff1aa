import numpy as np
import pytest
import scipy.linalg as sla

from nesslab.lattice import LatticeSpec, build_hamiltonian
from nesslab.lindblad import DissipationSpec, build_damping, build_effective_hamiltonian
from nesslab.oracle import oracle_ness
from nesslab.steady import (
    biorthogonal_eig,
    cut_current,
    cut_current_profile,
    density_profile,
    pump_kernel,
    pump_kernel_matrix,
    site_in_current,
    site_in_current_profile,
    solve_ness,
    sylvester_solve,
)


def _eig_for(length, alpha, gamma, drive=1.0):
    h = build_hamiltonian(LatticeSpec(length, alpha=alpha))
    h_eff = build_effective_hamiltonian(h, DissipationSpec(gamma, drive))
    return h_eff, biorthogonal_eig(h_eff)


class TestEigendecomposition:
    def test_two_site_analytic(self):
        _, eig = _eig_for(2, 1.0, 0.0)
        np.testing.assert_allclose(
            sorted(eig.values, key=np.real), [-1 - 0.5j, 1 - 0.5j], atol=1e-14
        )

    @pytest.mark.parametrize(
        "length,alpha,gamma", [(8, 0.5, 0.0), (64, 1.2, 0.7), (33, 2.0, 3.0)]
    )
    def test_invariants(self, length, alpha, gamma):
        h_eff, eig = _eig_for(length, alpha, gamma)
        gram = eig.left.conj().T @ eig.right
        assert np.abs(gram - np.eye(length)).max() <= 1e-10
        rec_err = np.linalg.norm(eig.reconstruct() - h_eff)
        assert rec_err <= 1e-9 * np.linalg.norm(h_eff)
        assert eig.values.imag.max() < 0

    def test_hermitian_limit_left_equals_right(self):
        # damping proportional to identity: eigenvectors stay orthonormal,
        # left and right bases coincide
        h = build_hamiltonian(LatticeSpec(10, alpha=1.0))
        h_eff = h - 0.5j * np.eye(10)
        eig = biorthogonal_eig(h_eff)
        np.testing.assert_allclose(
            np.abs(eig.left.conj().T @ eig.right), np.eye(10), atol=1e-10
        )
        assert np.allclose(eig.values.imag, -0.5, atol=1e-12)


class TestPumpKernel:
    def test_hermitian_pair_symmetry(self):
        _, eig = _eig_for(6, 1.0, 0.8)
        for i, j, k in [(0, 3, 2), (1, 4, 5), (2, 2, 0)]:
            assert pump_kernel(eig, j, i, k) == pytest.approx(
                np.conj(pump_kernel(eig, i, j, k)), abs=1e-13
            )

    def test_matches_sylvester_solve(self):
        _, eig = _eig_for(5, 1.3, 0.4)
        rng = np.random.default_rng(5)
        pump = rng.uniform(0.1, 1.0, size=5)
        c = sylvester_solve(eig, pump)
        for i in range(5):
            for j in range(5):
                total = sum(pump[k] * pump_kernel(eig, i, j, k) for k in range(5))
                assert c[i, j] == pytest.approx(total, abs=1e-12)

    def test_kernel_matrix_positive_semidefinite(self):
        _, eig = _eig_for(4, 0.9, 1.1)
        for k in range(4):
            w = np.linalg.eigvalsh(pump_kernel_matrix(eig, k))
            assert w.min() >= -1e-12

    def test_kernel_matches_time_integral_quadrature(self):
        # independent oracle: quadrature of the damped propagator integral
        from scipy.integrate import quad

        h_eff, eig = _eig_for(4, 1.0, 0.6)
        k = 2
        proj = np.zeros((4, 4))
        proj[k, k] = 1.0

        def integrand(tau, i, j, part):
            u = sla.expm(-1j * h_eff * tau)
            val = (u @ proj @ u.conj().T)[i, j]
            return val.real if part == "re" else val.imag

        for i, j in [(0, 0), (1, 3), (2, 1)]:
            re, _ = quad(integrand, 0, 60.0, args=(i, j, "re"), limit=200)
            im, _ = quad(integrand, 0, 60.0, args=(i, j, "im"), limit=200)
            assert pump_kernel(eig, i, j, k) == pytest.approx(
                re + 1j * im, abs=1e-8
            )

    def test_size_guard(self):
        _, eig = _eig_for(6, 1.0, 0.5)
        with pytest.raises(IndexError):
            pump_kernel(eig, 0, 0, 6)


class TestSylvesterSolve:
    def test_zero_pump_gives_zero(self):
        _, eig = _eig_for(5, 1.0, 0.3)
        assert np.abs(sylvester_solve(eig, np.zeros(5))).max() == 0.0

    @pytest.mark.parametrize("length,alpha,gamma", [(5, 1.0, 0.2), (12, 0.7, 1.5)])
    def test_stationarity_residual(self, length, alpha, gamma):
        h_eff, eig = _eig_for(length, alpha, gamma)
        rng = np.random.default_rng(length)
        pump = rng.uniform(0.0, 1.0, size=length)
        c = sylvester_solve(eig, pump)
        residual = -1j * (h_eff @ c - c @ h_eff.conj().T) + np.diag(pump)
        assert np.linalg.norm(residual) <= 1e-9 * np.linalg.norm(np.diag(pump))

    def test_boundary_pump_matches_oracle(self):
        spec = LatticeSpec(4, alpha=1.0)
        diss = DissipationSpec(0.0, 1.0)
        _, eig = _eig_for(4, 1.0, 0.0)
        pump = np.zeros(4)
        pump[-1] = 1.0
        c = sylvester_solve(eig, pump)
        _, c_oracle = oracle_ness(spec, diss)
        assert np.abs(c - c_oracle).max() <= 1e-10


class TestSolveNess:
    def test_single_site_half_filling_any_dephasing(self):
        for gamma in (0.0, 0.5, 7.0):
            res = solve_ness(LatticeSpec(1, alpha=1.0), DissipationSpec(gamma, 1.3))
            assert res.density[0] == pytest.approx(0.5, abs=1e-12)
            assert res.current == pytest.approx(1.3 * 0.5, abs=1e-12)

    def test_matches_oracle(self):
        spec = LatticeSpec(5, alpha=1.3)
        diss = DissipationSpec(0.8, 1.0)
        res = solve_ness(spec, diss)
        _, c_oracle = oracle_ness(spec, diss)
        assert np.abs(res.correlations - c_oracle).max() <= 1e-8

    def test_near_nearest_neighbor_flat_bulk_without_dephasing(self):
        res = solve_ness(LatticeSpec(256, alpha=30.0), DissipationSpec(0.0, 1.0))
        bulk = res.density[64:192]
        assert np.abs(bulk - 0.5).max() < 0.01

    def test_solver_paths_agree(self):
        spec = LatticeSpec(24, alpha=1.1)
        diss = DissipationSpec(1.7, 1.0)
        c_iter = solve_ness(spec, diss, method="auto").correlations
        c_direct = solve_ness(spec, diss, method="direct").correlations
        assert np.abs(c_iter - c_direct).max() <= 1e-9

    def test_direct_path_size_guard(self):
        with pytest.raises(ValueError):
            solve_ness(LatticeSpec(200, alpha=1.0), DissipationSpec(1.0, 1.0),
                       method="direct")

    def test_rhs_residual_at_solution(self):
        from nesslab.lindblad import correlation_rhs

        spec = LatticeSpec(40, alpha=0.8)
        diss = DissipationSpec(2.0, 1.0)
        res = solve_ness(spec, diss)
        rhs = correlation_rhs(
            res.correlations, build_hamiltonian(spec), build_damping(spec, diss), diss
        )
        assert np.linalg.norm(rhs) <= 1e-8 * diss.drive

    @pytest.mark.parametrize("seed", range(4))
    def test_conservation_random_points(self, seed):
        rng = np.random.default_rng(seed)
        length = int(rng.integers(3, 48))
        alpha = float(rng.uniform(0.1, 2.5))
        gamma = float(rng.uniform(0.0, 5.0))
        res = solve_ness(LatticeSpec(length, alpha=alpha), DissipationSpec(gamma, 1.0))
        assert res.injected_current == pytest.approx(res.current, rel=1e-8)
        np.testing.assert_allclose(
            res.cut_currents, res.current, rtol=1e-8, atol=1e-12 * res.current
        )

    def test_densities_in_range(self):
        res = solve_ness(LatticeSpec(30, alpha=0.4), DissipationSpec(0.9, 1.0))
        assert res.density.min() >= 0.0
        assert res.density.max() <= 1.0


class TestObservables:
    def test_density_profile_edges(self):
        np.testing.assert_array_equal(density_profile(np.eye(4)), np.zeros(4))
        np.testing.assert_array_equal(
            density_profile(np.zeros((4, 4))), np.ones(4)
        )

    def test_density_profile_rejects_imaginary_diagonal(self):
        c = np.eye(3, dtype=complex)
        c[1, 1] += 1e-6j
        with pytest.raises(ValueError):
            density_profile(c)

    def test_density_profile_rejects_unphysical(self):
        with pytest.raises(ValueError):
            density_profile(np.diag([0.5, 1.5, 0.5]))

    def test_near_linear_profile_short_range(self):
        res = solve_ness(LatticeSpec(256, alpha=3.0), DissipationSpec(0.05, 1.0))
        d = res.density
        assert np.all(np.diff(d) <= 1e-12)  # monotone non-increasing
        # interior close to the straight line through the bulk
        x = np.arange(256)
        coef = np.polyfit(x[32:224], d[32:224], 1)
        fit = np.polyval(coef, x[32:224])
        assert np.abs(d[32:224] - fit).max() < 0.01

    @pytest.mark.parametrize("alpha", [0.5, 1.0])
    def test_flatter_bulk_at_stronger_dephasing_long_range(self, alpha):
        # the flattening with dephasing is a long-range effect; short-range
        # chains steepen instead (diffusive ramp)
        lo = solve_ness(LatticeSpec(128, alpha=alpha), DissipationSpec(0.05, 1.0))
        hi = solve_ness(LatticeSpec(128, alpha=alpha), DissipationSpec(2.0, 1.0))
        spread = lambda d: d[16:112].max() - d[16:112].min()
        assert spread(hi.density) < spread(lo.density)

    def test_site_current_zero_for_real_correlations(self):
        spec = LatticeSpec(6, alpha=1.0)
        c = np.outer(np.linspace(0.2, 0.8, 6), np.linspace(0.2, 0.8, 6))
        c = 0.5 * (c + c.T).astype(complex)
        for m in range(1, 6):
            assert site_in_current(c, spec, m) == 0.0

    def test_site_current_domain_error(self):
        spec = LatticeSpec(6, alpha=1.0)
        c = np.eye(6, dtype=complex)
        with pytest.raises(ValueError):
            site_in_current(c, spec, 0)

    def test_cut_current_identity_state_zero(self):
        spec = LatticeSpec(7, alpha=0.9)
        assert cut_current(np.eye(7, dtype=complex), spec, 3) == 0.0

    def test_cut_profile_matches_pairwise_sum(self):
        rng = np.random.default_rng(2)
        spec = LatticeSpec(9, alpha=1.4)
        a = rng.standard_normal((9, 9)) + 1j * rng.standard_normal((9, 9))
        c = 0.5 * (a + a.conj().T)
        h = build_hamiltonian(spec)
        profile = cut_current_profile(c, spec)
        for m in range(8):
            naive = sum(
                2.0 * h[j, i] * c[j, i].imag
                for i in range(m + 1)
                for j in range(m + 1, 9)
            )
            assert profile[m] == pytest.approx(naive, abs=1e-12)

    def test_sites_currents_match_cut_in_nearest_neighbor_limit(self):
        res = solve_ness(LatticeSpec(20, alpha=40.0), DissipationSpec(0.3, 1.0))
        # for nearest-neighbor hopping the site in-current is the bond flux
        np.testing.assert_allclose(
            res.site_in_currents, res.cut_currents, rtol=1e-8
        )

    def test_transient_cuts_not_conserved(self):
        from nesslab.lindblad import evolve

        spec = LatticeSpec(10, alpha=1.0)
        diss = DissipationSpec(0.5, 1.0)
        traj = evolve(np.eye(10, dtype=complex), 0.8, spec, diss, n_samples=1)
        cuts = cut_current_profile(traj.final, spec)
        assert np.abs(np.diff(cuts)).max() > 1e-4

    def test_in_current_profile_matches_elementwise(self):
        rng = np.random.default_rng(8)
        spec = LatticeSpec(8, alpha=1.2)
        a = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        c = 0.5 * (a + a.conj().T)
        profile = site_in_current_profile(c, spec)
        for m in range(1, 8):
            assert profile[m - 1] == pytest.approx(
                site_in_current(c, spec, m), abs=1e-13
            )


def test_site_in_current_matches_oracle_operator():
    # compare the correlation-matrix current formula against the expectation
    # of the corresponding many-body current operator in the exact NESS
    from nesslab.oracle import fock_operators

    spec = LatticeSpec(4, alpha=1.0)
    diss = DissipationSpec(0.5, 1.0)
    rho, c_oracle = oracle_ness(spec, diss)
    ops = fock_operators(4)
    h = build_hamiltonian(spec)
    for m in range(1, 4):
        j_op = np.zeros((16, 16), dtype=complex)
        for i in range(m):
            hop = ops.lowering[m].conj().T @ ops.lowering[i]
            j_op += -1j * h[m, i] * (hop - hop.conj().T)
        expected = np.trace(rho @ j_op).real
        assert site_in_current(c_oracle, spec, m) == pytest.approx(
            expected, abs=1e-8
        )


def test_defective_matrix_rejected():
    from nesslab.steady import EigendecompositionError

    jordan = np.array([[1.0, 1.0], [0.0, 1.0]], dtype=complex) - 0.5j * np.eye(2)
    with pytest.raises(EigendecompositionError):
        biorthogonal_eig(jordan)


def test_solver_rejects_unknown_method():
    with pytest.raises(ValueError):
        solve_ness(LatticeSpec(4, alpha=1.0), DissipationSpec(0.5, 1.0),
                   method="magic")


def test_fixed_point_method_converges_easy_regime():
    spec = LatticeSpec(10, alpha=1.0)
    diss = DissipationSpec(0.3, 1.0)
    res_fp = solve_ness(spec, diss, method="fixed-point", max_iterations=2000)
    res_auto = solve_ness(spec, diss)
    assert np.abs(res_fp.correlations - res_auto.correlations).max() < 1e-9
