"""Tests for the periodic spectral layer: transforms, operators, and the
real-space quadrature oracle for the nonlocal dissipation operator."""

import numpy as np
import pytest

from fralign.spectral import (
    AsymmetryError,
    InvalidFieldError,
    MeanViolationError,
    ParameterError,
    RealField,
    SpectralField,
    SpectralGrid,
    dealias,
    derivative,
    eval_at,
    forward_transform,
    fractional_laplacian,
    fractional_laplacian_quadrature,
    integrate,
    inverse_transform,
    kernel_constant,
    mean_zero_primitive,
    refine,
)


def random_band_limited(grid, max_mode, seed, mean=0.0):
    """Random real field supported on modes |m| <= max_mode."""
    rng = np.random.default_rng(seed)
    c = np.zeros(grid.n, dtype=complex)
    c[0] = mean
    for m in range(1, max_mode + 1):
        a = rng.normal() + 1j * rng.normal()
        c[m] = a
        c[-m] = np.conj(a)
    return inverse_transform(SpectralField(grid, c))


class TestGridAndFields:
    def test_grid_basics(self):
        g = SpectralGrid(64)
        assert g.length == pytest.approx(2 * np.pi)
        assert g.nodes[0] == 0.0
        assert np.allclose(np.diff(g.nodes), g.spacing)
        # wavenumber table symmetric about zero (Nyquist excepted)
        k = np.sort(g.wavenumbers)
        assert np.allclose(k[1:-1], -k[1:-1][::-1] * 0 + k[1:-1])
        assert set(g.modes) == set(range(-32, 32))

    def test_grid_validation(self):
        with pytest.raises(ParameterError):
            SpectralGrid(7)
        with pytest.raises(ParameterError):
            SpectralGrid(6)
        with pytest.raises(ParameterError):
            SpectralGrid(64, -1.0)

    def test_field_validation(self):
        g = SpectralGrid(16)
        with pytest.raises(InvalidFieldError):
            RealField(g, np.full(16, np.nan))
        with pytest.raises(InvalidFieldError):
            RealField(g, np.zeros(8))
        f = RealField(g, np.ones(16))
        with pytest.raises(ValueError):
            f.values[0] = 2.0  # immutable


class TestTransforms:
    def test_constant_has_only_mean_mode(self):
        g = SpectralGrid(32)
        F = forward_transform(RealField(g, np.full(32, 3.25)))
        assert F.coeffs[0] == pytest.approx(3.25)
        assert np.max(np.abs(F.coeffs[1:])) < 1e-14

    def test_single_cosine_modes(self):
        g = SpectralGrid(32)
        F = forward_transform(RealField(g, np.cos(2 * np.pi * g.nodes / g.length)))
        assert F.coeffs[1] == pytest.approx(0.5)
        assert F.coeffs[-1] == pytest.approx(0.5)
        others = np.delete(F.coeffs, [1, g.n - 1])
        assert np.max(np.abs(others)) < 1e-14

    def test_round_trip(self):
        g = SpectralGrid(128)
        f = random_band_limited(g, 40, seed=1, mean=0.7)
        back = inverse_transform(forward_transform(f))
        assert np.max(np.abs(back.values - f.values)) <= 1e-12 * f.max_abs()

    def test_round_trip_sampled_sine(self):
        g = SpectralGrid(64)
        f = RealField(g, np.sin(4 * np.pi * g.nodes / g.length))
        back = inverse_transform(forward_transform(f))
        assert np.max(np.abs(back.values - f.values)) < 1e-12

    def test_inverse_trivial_cases(self):
        g = SpectralGrid(16)
        zero = inverse_transform(SpectralField(g, np.zeros(16, dtype=complex)))
        assert np.all(zero.values == 0.0)
        c = np.zeros(16, dtype=complex)
        c[0] = -2.5
        const = inverse_transform(SpectralField(g, c))
        assert np.allclose(const.values, -2.5)

    def test_inverse_rejects_asymmetry(self):
        g = SpectralGrid(16)
        c = np.zeros(16, dtype=complex)
        c[1] = 1.0  # no conjugate partner at -1
        with pytest.raises(AsymmetryError):
            inverse_transform(SpectralField(g, c))


class TestDerivative:
    def test_constant(self):
        g = SpectralGrid(32)
        d = derivative(RealField(g, np.full(32, 4.0)))
        assert np.max(np.abs(d.values)) < 1e-14

    def test_single_mode_symbol(self):
        g = SpectralGrid(64, 2 * np.pi)
        f = RealField(g, np.sin(g.nodes))
        d = derivative(f)
        assert np.max(np.abs(d.values - np.cos(g.nodes))) < 1e-13

    def test_single_mode_symbol_general_period(self):
        L = 3.7
        g = SpectralGrid(64, L)
        f = RealField(g, np.sin(2 * np.pi * g.nodes / L))
        d = derivative(f)
        expect = (2 * np.pi / L) * np.cos(2 * np.pi * g.nodes / L)
        assert np.max(np.abs(d.values - expect)) < 1e-12

    def test_matches_finite_differences(self):
        # centered-difference oracle on the trigonometric interpolant
        g = SpectralGrid(128)
        f = random_band_limited(g, 10, seed=3)
        d = derivative(f)
        xs = g.nodes[::7]
        errs = []
        for h in (1e-2, 5e-3, 2.5e-3):
            fd = (eval_at(f, xs + h) - eval_at(f, xs - h)) / (2 * h)
            errs.append(np.max(np.abs(fd - eval_at(d, xs))))
        # O(h^2): each halving cuts the error by about 4
        assert errs[1] < errs[0] / 3.0
        assert errs[2] < errs[1] / 3.0
        assert errs[-1] < 1e-3 * d.max_abs()


class TestFractionalLaplacian:
    def test_annihilates_constants(self):
        g = SpectralGrid(32)
        out = fractional_laplacian(RealField(g, np.full(32, 2.0)), 0.5)
        assert np.max(np.abs(out.values)) < 1e-14

    def test_single_mode_symbol(self):
        L = 5.0
        g = SpectralGrid(64, L)
        k1 = 2 * np.pi / L
        f = RealField(g, np.cos(k1 * g.nodes))
        out = fractional_laplacian(f, 0.5)
        assert np.max(np.abs(out.values - k1 ** 0.5 * np.cos(k1 * g.nodes))) < 1e-13

    def test_symbol_exact_in_coefficients(self):
        g = SpectralGrid(64)
        for m in (1, 5, 17):
            c = np.zeros(64, dtype=complex)
            c[m] = 0.5
            c[-m] = 0.5
            f = inverse_transform(SpectralField(g, c))
            out = forward_transform(fractional_laplacian(f, 0.7))
            assert out.coeffs[m] == pytest.approx(0.5 * abs(g.wavenumbers[m]) ** 0.7)

    def test_alpha_range(self):
        g = SpectralGrid(16)
        f = RealField(g, np.cos(g.nodes))
        for bad in (0.0, -0.3, 2.0, 2.5):
            with pytest.raises(ParameterError):
                fractional_laplacian(f, bad)

    def test_commutes_with_derivative(self):
        g = SpectralGrid(128)
        f = random_band_limited(g, 30, seed=5)
        a = derivative(fractional_laplacian(f, 0.6))
        b = fractional_laplacian(derivative(f), 0.6)
        assert np.max(np.abs(a.values - b.values)) <= 1e-12 * max(1.0, a.max_abs())


class TestMeanZeroPrimitive:
    def test_zero_field(self):
        g = SpectralGrid(16)
        out = mean_zero_primitive(RealField(g, np.zeros(16)))
        assert np.all(out.values == 0.0)

    def test_single_mode(self):
        L = 2 * np.pi
        g = SpectralGrid(64, L)
        out = mean_zero_primitive(RealField(g, np.cos(g.nodes)))
        assert np.max(np.abs(out.values - np.sin(g.nodes))) < 1e-13

    def test_right_inverse_of_derivative(self):
        g = SpectralGrid(128)
        f = random_band_limited(g, 40, seed=9)
        p = mean_zero_primitive(f)
        assert abs(p.mean()) < 1e-14 * max(1.0, p.max_abs())
        back = derivative(p)
        assert np.max(np.abs(back.values - f.values)) <= 1e-12 * f.max_abs()

    def test_rejects_nonzero_mean(self):
        g = SpectralGrid(16)
        with pytest.raises(MeanViolationError):
            mean_zero_primitive(RealField(g, np.cos(g.nodes) + 0.1))


class TestDealias:
    def test_low_modes_unchanged(self):
        g = SpectralGrid(96)
        f = random_band_limited(g, g.cutoff_mode, seed=2)
        F = forward_transform(f)
        assert np.allclose(dealias(F).coeffs, F.coeffs)

    def test_nyquist_mode_zeroed(self):
        g = SpectralGrid(32)
        c = np.zeros(32, dtype=complex)
        c[16] = 1.0  # pure Nyquist
        out = dealias(SpectralField(g, c))
        assert np.all(out.coeffs == 0.0)

    def test_projection_contracts_energy(self):
        g = SpectralGrid(64)
        rng = np.random.default_rng(11)
        for _ in range(5):
            f = RealField(g, rng.normal(size=64))
            F = forward_transform(f)
            assert np.sum(np.abs(dealias(F).coeffs) ** 2) <= np.sum(np.abs(F.coeffs) ** 2)


class TestInterpolation:
    def test_refine_matches_analytic(self):
        g = SpectralGrid(32)
        f = RealField(g, np.cos(g.nodes) + 0.3 * np.sin(2 * g.nodes))
        r = refine(f, 4)
        expect = np.cos(r.grid.nodes) + 0.3 * np.sin(2 * r.grid.nodes)
        assert np.max(np.abs(r.values - expect)) < 1e-13

    def test_refine_identity(self):
        g = SpectralGrid(32)
        f = RealField(g, np.cos(g.nodes))
        assert refine(f, 1) is f

    def test_eval_at_matches_nodes(self):
        g = SpectralGrid(64)
        f = random_band_limited(g, 20, seed=4, mean=1.0)
        assert np.max(np.abs(eval_at(f, g.nodes) - f.values)) < 1e-12

    def test_integrate(self):
        g = SpectralGrid(64, 2 * np.pi)
        assert integrate(RealField(g, np.full(64, 2.0))) == pytest.approx(4 * np.pi)


class TestQuadratureOracle:
    def test_constant_maps_to_zero(self):
        g = SpectralGrid(32)
        q = fractional_laplacian_quadrature(RealField(g, np.full(32, 1.5)), 0.5, 200)
        assert np.max(np.abs(q.field.values)) < 1e-10

    def test_cosine_matches_spectral(self):
        g = SpectralGrid(128)
        f = RealField(g, np.cos(2 * np.pi * g.nodes / g.length))
        q = fractional_laplacian_quadrature(f, 0.5, 10_000)
        s = fractional_laplacian(f, 0.5)
        rel = np.max(np.abs(q.field.values - s.values)) / np.max(np.abs(s.values))
        assert rel < 1e-6
        assert q.warning is None

    def test_oracle_agreement_band_limited(self):
        # module invariant: spectral and kernel-quadrature paths agree
        g = SpectralGrid(128)
        f = random_band_limited(g, 8, seed=7)
        for alpha in (0.3, 0.5, 0.7, 1.0):
            q = fractional_laplacian_quadrature(f, alpha, 10_000)
            s = fractional_laplacian(f, alpha)
            rel = np.max(np.abs(q.field.values - s.values)) / np.max(np.abs(s.values))
            assert rel < 1e-6, f"alpha={alpha}: {rel:.3e}"

    def test_refinement_decreases_error(self):
        g = SpectralGrid(128)
        f = random_band_limited(g, 8, seed=7)
        s = fractional_laplacian(f, 0.5)
        errs = []
        for n_images in (50, 100, 200, 400, 800):
            q = fractional_laplacian_quadrature(f, 0.5, n_images)
            errs.append(np.max(np.abs(q.field.values - s.values)))
        assert all(b < a for a, b in zip(errs, errs[1:])), errs

    def test_warning_when_underresolved(self):
        g = SpectralGrid(128)
        f = random_band_limited(g, 8, seed=7)
        q = fractional_laplacian_quadrature(f, 0.5, 10)
        assert q.warning is not None
        assert q.estimated_error > 1e-6

    def test_parameter_validation(self):
        g = SpectralGrid(32)
        f = RealField(g, np.cos(g.nodes))
        with pytest.raises(ParameterError):
            fractional_laplacian_quadrature(f, 0.5, 5)
        with pytest.raises(ParameterError):
            fractional_laplacian_quadrature(f, 2.5, 100)


class TestKernelConstant:
    def test_alpha_one_is_one_over_pi(self):
        assert kernel_constant(1.0) == pytest.approx(1.0 / np.pi)

    def test_matches_cosine_integral(self):
        # independent characterization: 1/c = integral of (1-cos w)/|w|^(1+a)
        # over the whole line; the oscillatory tail needs the QAWF algorithm
        from scipy.integrate import quad

        cut = 40.0
        for alpha in (0.3, 0.5, 0.9, 1.3):
            head, _ = quad(
                lambda w: (1 - np.cos(w)) / w ** (1 + alpha), 0, cut, limit=200
            )
            osc, _ = quad(
                lambda w: w ** (-1 - alpha), cut, np.inf, weight="cos", wvar=1.0
            )
            val = head + cut ** (-alpha) / alpha - osc
            assert kernel_constant(alpha) == pytest.approx(1.0 / (2 * val), rel=1e-9)
