import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochch.spectral import (
    BasisSpec,
    SpectralField,
    apply_phi,
    apply_semigroup,
    eigenvalue,
    eigenfunction_eval,
    load_field,
    min_dealias_grid,
    phi_factors,
    project,
    save_field,
    to_grid,
    to_spectral,
)

from oracles import fd_neumann_eigenvalues_1d, phi_weight_riemann


def random_field(basis, rng, scale=1.0):
    return SpectralField(basis, rng.normal() * scale, rng.normal(size=basis.n_modes) * scale)


class TestBasis:
    def test_mode_counts(self):
        assert BasisSpec(1, 7).n_modes == 7
        assert BasisSpec(2, 3).n_modes == 15

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            BasisSpec(3, 4)
        with pytest.raises(ValueError):
            BasisSpec(1, 0)

    def test_eigenvalue_1d(self):
        basis = BasisSpec(1, 8)
        assert eigenvalue(1, basis) == pytest.approx(np.pi**2, rel=1e-14)
        assert eigenvalue(3, basis) == pytest.approx(9 * np.pi**2, rel=1e-14)

    def test_mean_mode_is_not_an_index(self):
        basis = BasisSpec(1, 8)
        with pytest.raises(IndexError):
            eigenvalue(0, basis)
        with pytest.raises(IndexError):
            eigenvalue(9, basis)
        with pytest.raises(IndexError):
            eigenvalue((0, 0), BasisSpec(2, 3))

    def test_eigenvalue_2d_tensor_sum(self):
        assert eigenvalue((1, 2), BasisSpec(2, 4)) == pytest.approx(5 * np.pi**2, rel=1e-14)

    def test_eigenvalue_2d_against_finite_differences(self):
        # tensor sums of the 1-D FD Neumann spectrum are the 2-D FD spectrum
        fd = fd_neumann_eigenvalues_1d(256)
        target = fd[1] + fd[2]  # modes 1 and 2
        assert eigenvalue((1, 2), BasisSpec(2, 4)) == pytest.approx(target, rel=2e-4)

    def test_eigenvalues_positive_sorted_layout(self):
        basis = BasisSpec(2, 5)
        lam = basis.eigenvalues()
        assert (lam > 0).all()
        assert lam.shape == (basis.n_modes,)


class TestEigenfunctions:
    def test_point_values(self):
        basis = BasisSpec(1, 8)
        assert eigenfunction_eval(1, 0.0, basis) == pytest.approx(np.sqrt(2), rel=1e-14)
        assert eigenfunction_eval(2, 0.5, basis) == pytest.approx(-np.sqrt(2), rel=1e-14)

    def test_unit_l2_norm_by_quadrature(self):
        basis = BasisSpec(1, 8)
        x = (np.arange(1024) + 0.5) / 1024
        for j in range(1, 9):
            sq = eigenfunction_eval(j, x, basis) ** 2
            assert np.mean(sq) == pytest.approx(1.0, abs=1e-12)

    def test_2d_zero_index_is_constant_direction(self):
        basis = BasisSpec(2, 3)
        pts = np.array([[0.3, 0.9], [0.7, 0.1]])
        vals = eigenfunction_eval((2, 0), pts, basis)
        expect = np.sqrt(2) * np.cos(2 * np.pi * pts[:, 0])
        assert np.allclose(vals, expect, atol=1e-14)
        # unit norm via quadrature
        n = 128
        x = (np.arange(n) + 0.5) / n
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        grid = np.stack([X1, X2], axis=-1)
        vals = eigenfunction_eval((2, 3), grid, basis)
        assert np.mean(vals**2) == pytest.approx(1.0, abs=1e-12)


class TestSemigroup:
    def test_identity_at_zero(self):
        basis = BasisSpec(1, 6)
        v = random_field(basis, np.random.default_rng(0))
        w = apply_semigroup(v, 0.0)
        assert w.mean == v.mean
        assert np.array_equal(w.coeffs, v.coeffs)

    def test_mode_one_decay(self):
        basis = BasisSpec(1, 4)
        v = SpectralField.from_modes(basis, {1: 1.0})
        w = apply_semigroup(v, 1.0)
        assert w.coeffs[0] == pytest.approx(np.exp(-np.pi**4), rel=1e-13)

    def test_mean_only_field_invariant(self):
        basis = BasisSpec(1, 4)
        v = SpectralField(basis, 2.5, np.zeros(4))
        w = apply_semigroup(v, 17.0)
        assert w.mean == 2.5
        assert np.array_equal(w.coeffs, np.zeros(4))

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            apply_semigroup(SpectralField.zero(BasisSpec(1, 2)), -1e-9)

    @settings(max_examples=30, deadline=None)
    @given(
        s=st.floats(1e-6, 0.5),
        t=st.floats(1e-6, 0.5),
        seed=st.integers(0, 2**16),
    )
    def test_composition(self, s, t, seed):
        basis = BasisSpec(1, 12)
        v = random_field(basis, np.random.default_rng(seed))
        a = apply_semigroup(apply_semigroup(v, s), t)
        b = apply_semigroup(v, s + t)
        # atol floor: doubly-exponential decay drives modes into the subnormal
        # range where relative comparison is meaningless
        assert np.allclose(a.coeffs, b.coeffs, rtol=1e-13, atol=1e-280)
        assert a.mean == b.mean

    @pytest.mark.parametrize("mu", [1, 2, 3, 4])
    def test_smoothing_bound(self, mu):
        # sup over modes of lam^{mu/2} e^{-t lam^2} t^{mu/4} <= sup_x x^{mu/4} e^{-x}
        basis = BasisSpec(1, 512)
        lam = basis.eigenvalues()
        bound = (mu / 4.0) ** (mu / 4.0) * np.exp(-mu / 4.0)
        for t in np.geomspace(1e-8, 1.0, 40):
            val = np.max(lam ** (mu / 2.0) * np.exp(-t * lam**2)) * t ** (mu / 4.0)
            assert val <= bound * (1 + 1e-12)


class TestPhi:
    def test_scalar_weight_value(self):
        basis = BasisSpec(1, 1)
        tau = 2.0**-9
        w = phi_factors(basis, tau)[0]
        assert w == pytest.approx((1 - np.exp(-np.pi**4 / 512)) / np.pi**2, rel=1e-13)
        assert w == pytest.approx(0.01755, rel=1e-3)

    def test_weight_matches_riemann_sum(self):
        basis = BasisSpec(1, 3)
        tau = 2.0**-9
        for k in range(1, 4):
            lam = eigenvalue(k, basis)
            target = phi_weight_riemann(lam, tau)
            assert phi_factors(basis, tau)[k - 1] == pytest.approx(target, rel=1e-7)

    def test_weight_bounds(self):
        basis = BasisSpec(1, 64)
        lam = basis.eigenvalues()
        for tau in (1e-4, 1e-2, 1.0):
            w = phi_factors(basis, tau)
            assert (w <= np.minimum(tau * lam, 1.0 / lam) * (1 + 1e-12)).all()

    def test_requires_zero_mean(self):
        basis = BasisSpec(1, 4)
        with pytest.raises(ValueError):
            apply_phi(SpectralField(basis, 1.0, np.zeros(4)), 0.5)

    def test_linear_in_input(self):
        basis = BasisSpec(1, 4)
        z = apply_phi(SpectralField.zero(basis), 0.25)
        assert np.array_equal(z.coeffs, np.zeros(4))

    def test_agrees_with_semigroup_route(self):
        # A^{-1}(v - E(tau)v) computed independently mode by mode
        basis = BasisSpec(1, 24)
        rng = np.random.default_rng(3)
        v = SpectralField(basis, 0.0, rng.normal(size=24))
        tau = 2.0**-7
        a = apply_phi(v, tau)
        ev = apply_semigroup(v, tau)
        other = (v.coeffs - ev.coeffs) / basis.eigenvalues()
        assert np.allclose(a.coeffs, other, rtol=1e-13)

    @pytest.mark.parametrize("nu", [1, 2, 3, 4])
    def test_inverse_smoothing_bound(self, nu):
        # max_k lam^{-nu/2}(1 - e^{-t lam^2}) <= t^{nu/4} sup_x (1-e^{-x})/x^{nu/4}
        from scipy.optimize import minimize_scalar

        if nu == 4:
            sup = 1.0
        else:
            res = minimize_scalar(
                lambda u: -(1 - np.exp(-np.exp(u))) / np.exp(u * nu / 4.0),
                bounds=(-25, 25),
                method="bounded",
                options={"xatol": 1e-12},
            )
            sup = -res.fun
        basis = BasisSpec(1, 512)
        lam = basis.eigenvalues()
        for t in np.geomspace(1e-8, 1.0, 40):
            val = np.max(lam ** (-nu / 2.0) * (1 - np.exp(-t * lam**2)))
            assert val <= t ** (nu / 4.0) * sup * (1 + 1e-9)


class TestProjection:
    def test_identity_at_full_level(self):
        basis = BasisSpec(1, 6)
        v = random_field(basis, np.random.default_rng(1))
        w = project(v, 6)
        assert np.array_equal(w.coeffs, v.coeffs)

    def test_truncation(self):
        basis = BasisSpec(1, 6)
        v = SpectralField.from_modes(basis, {1: 1.0, 5: 1.0})
        w = project(v, 3)
        assert w.coeffs[0] == 1.0
        assert np.array_equal(w.coeffs[1:], np.zeros(5))

    def test_level_above_basis_rejected(self):
        with pytest.raises(ValueError):
            project(SpectralField.zero(BasisSpec(1, 4)), 5)

    def test_parseval_identity_for_tail(self):
        basis = BasisSpec(1, 16)
        rng = np.random.default_rng(2)
        v = random_field(basis, rng)
        w = project(v, 9)
        tail = np.sqrt(np.sum(v.coeffs[9:] ** 2))
        diff = np.sqrt(np.sum((v.coeffs - w.coeffs) ** 2))
        assert diff == pytest.approx(tail, abs=1e-14)

    def test_2d_component_wise(self):
        basis = BasisSpec(2, 3)
        v = SpectralField.from_modes(basis, {(1, 1): 1.0, (3, 1): 2.0, (0, 3): 3.0})
        w = project(v, 2)
        assert w.coeffs[basis.flat_index((1, 1))] == 1.0
        assert w.coeffs[basis.flat_index((3, 1))] == 0.0
        assert w.coeffs[basis.flat_index((0, 3))] == 0.0

    def test_mean_untouched(self):
        basis = BasisSpec(1, 6)
        v = SpectralField(basis, -0.75, np.ones(6))
        assert project(v, 2).mean == -0.75


class TestTransforms:
    def test_round_trip_single_mode(self):
        basis = BasisSpec(1, 4)
        v = SpectralField.from_modes(basis, {2: 1.0})
        g = to_grid(v, 8)
        w = to_spectral(g, 4)
        assert np.allclose(w.coeffs, v.coeffs, atol=1e-13)
        assert abs(w.mean) < 1e-14

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**16), n_extra=st.integers(0, 8))
    def test_round_trip_random(self, seed, n_extra):
        basis = BasisSpec(1, 12)
        v = random_field(basis, np.random.default_rng(seed))
        n_grid = 13 + n_extra
        w = to_spectral(to_grid(v, n_grid), 12)
        assert np.allclose(w.coeffs, v.coeffs, rtol=1e-12, atol=1e-12)
        assert w.mean == pytest.approx(v.mean, abs=1e-12)

    def test_constant_field_values(self):
        basis = BasisSpec(1, 4)
        g = to_grid(SpectralField(basis, 3.25, np.zeros(4)), 9)
        assert np.allclose(g.values, 3.25, atol=1e-14)

    def test_parseval_quadrature(self):
        basis = BasisSpec(1, 16)
        v = random_field(basis, np.random.default_rng(5))
        g = to_grid(v, 64)
        quad = np.mean(g.values**2)
        assert quad == pytest.approx(v.norm() ** 2, abs=1e-10)

    def test_grid_too_small_rejected(self):
        basis = BasisSpec(1, 8)
        v = SpectralField.zero(basis)
        with pytest.raises(ValueError):
            to_grid(v, 8)
        with pytest.raises(ValueError):
            to_spectral(to_grid(v, 9), 9)

    def test_round_trip_2d(self):
        basis = BasisSpec(2, 5)
        v = random_field(basis, np.random.default_rng(7))
        w = to_spectral(to_grid(v, 11), 5)
        assert np.allclose(w.coeffs, v.coeffs, rtol=1e-12, atol=1e-12)
        assert w.mean == pytest.approx(v.mean, abs=1e-12)

    def test_matches_scipy_dct(self):
        # independent route: scipy's DCT-II on the same midpoint grid recovers
        # the mean as y_0 and the coefficients as sqrt(2) y_j
        from scipy.fft import dct

        basis = BasisSpec(1, 10)
        v = random_field(basis, np.random.default_rng(9))
        g = to_grid(v, 32)
        y = dct(g.values, type=2, norm="forward")
        assert y[0] == pytest.approx(v.mean, abs=1e-12)
        assert np.allclose(np.sqrt(2.0) * y[1:11], v.coeffs, atol=1e-12)

    def test_dealias_grid_bound(self):
        assert min_dealias_grid(4) == 9
        assert min_dealias_grid(64) == 129


class TestSerialization:
    def test_round_trip(self, tmp_path):
        basis = BasisSpec(1, 5)
        v = random_field(basis, np.random.default_rng(11))
        path = tmp_path / "field.csv"
        save_field(v, path)
        w = load_field(path)
        assert w.basis == basis
        assert w.mean == v.mean
        assert np.array_equal(w.coeffs, v.coeffs)

    def test_round_trip_2d(self, tmp_path):
        basis = BasisSpec(2, 3)
        v = random_field(basis, np.random.default_rng(12))
        path = tmp_path / "field2d.csv"
        save_field(v, path)
        w = load_field(path)
        assert w.basis == basis
        assert np.array_equal(w.coeffs, v.coeffs)

    def test_bad_header_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("nope\n1,1\n0.0\n0.0\n")
        with pytest.raises(ValueError):
            load_field(p)


class TestMeanInvariance:
    def test_operations_preserve_mean_bit_exactly(self):
        basis = BasisSpec(1, 8)
        v = SpectralField(basis, 0.1234567890123456, np.random.default_rng(1).normal(size=8))
        assert apply_semigroup(v, 0.37).mean == v.mean
        assert project(v, 3).mean == v.mean
