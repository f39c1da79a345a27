"""Secular-equation solver: bracketing, interlacing, sum rules, fallbacks."""

import math
import warnings

import numpy as np
import pytest
import sympy

from reschaos import (
    Background,
    BareSpectrum,
    InvalidRangeError,
    InvalidSpectrumError,
    LengthMismatchError,
    NonPositiveCoefficientError,
    SolverGuaranteeWarning,
    dress_spectrum,
    effective_widths,
    find_resonance_positions,
    find_scattering_zeros,
    resonance_shift,
    scan_secular_roots,
    scattering_length,
    secular_value,
    solve_secular,
)


def random_positive_problem(rng, n, b_max=None):
    b_max = float(n) if b_max is None else b_max
    while True:
        poles = np.sort(rng.uniform(0.0, b_max, n))
        if n == 1 or np.min(np.diff(poles)) > 0.05:
            break
    coeffs = rng.uniform(0.01, 0.5, n)
    return coeffs, poles


class TestSolveSecular:
    def test_single_term_solved_exactly(self):
        roots = solve_secular(np.array([0.25]), np.array([1.5]), tol=1e-12)
        assert roots[0] == 1.5 + 0.25

    def test_two_pole_quadratic_oracle(self):
        # 1 - 0.1/b - 0.1/(b-1) = 0  <=>  b^2 - 1.2 b + 0.1 = 0
        roots = solve_secular([0.1, 0.1], [0.0, 1.0], tol=1e-14)
        expected = np.array([(1.2 - math.sqrt(1.04)) / 2, (1.2 + math.sqrt(1.04)) / 2])
        np.testing.assert_allclose(roots, expected, atol=1e-12)

    def test_residual_and_interlacing_fifty_resonances(self):
        rng = np.random.default_rng(7)
        coeffs, poles = random_positive_problem(rng, 50)
        roots = solve_secular(coeffs, poles, tol=1e-12)
        assert roots.size == 50
        residuals = np.abs(secular_value(roots, coeffs, poles))
        assert residuals.max() < 1e-9
        assert np.all(roots[:-1] > poles[:-1]) and np.all(roots[:-1] < poles[1:])
        assert poles[-1] < roots[-1] <= poles[-1] + coeffs.sum() * (1 + 1e-12)

    def test_vieta_sum_rule_numeric(self):
        rng = np.random.default_rng(8)
        for n in (2, 5, 20):
            coeffs, poles = random_positive_problem(rng, n)
            roots = solve_secular(coeffs, poles, tol=1e-13)
            total = poles.sum() + coeffs.sum()
            assert roots.sum() == pytest.approx(total, rel=1e-9)

    def test_vieta_sum_rule_symbolic(self):
        # For N=2,3: clearing denominators of 1 - sum c_j/(b - p_j) gives a
        # monic polynomial whose root sum is sum(p) + sum(c).
        b = sympy.Symbol("b")
        for n in (2, 3):
            ps = sympy.symbols(f"p0:{n}", real=True)
            cs = sympy.symbols(f"c0:{n}", positive=True)
            poly = sympy.prod([b - p for p in ps]) - sum(
                c * sympy.prod([b - p for k, p in enumerate(ps) if k != j])
                for j, c in enumerate(cs)
            )
            poly = sympy.Poly(sympy.expand(poly), b)
            root_sum = -poly.coeffs()[1] / poly.coeffs()[0]
            assert sympy.simplify(root_sum - (sum(ps) + sum(cs))) == 0

    def test_matches_rank_one_eigenvalue_oracle(self):
        # Zeros of 1 - sum c_j/(b - p_j) are the eigenvalues of
        # diag(p) + sqrt(c) sqrt(c)^T.
        rng = np.random.default_rng(9)
        coeffs, poles = random_positive_problem(rng, 12)
        roots = solve_secular(coeffs, poles, tol=1e-13)
        v = np.sqrt(coeffs)
        eigs = np.linalg.eigvalsh(np.diag(poles) + np.outer(v, v))
        np.testing.assert_allclose(roots, eigs, atol=1e-8)

    def test_roots_increase_under_proportional_coefficient_growth(self):
        # F_t(old root) = 1 - t < 0 for t > 1, and F_t increases in b, so
        # every root moves strictly up under uniform scaling of the
        # coefficients.  (Non-uniform increases can move individual roots
        # down, so only the proportional version is asserted.)
        rng = np.random.default_rng(10)
        coeffs, poles = random_positive_problem(rng, 9)
        base = solve_secular(coeffs, poles, tol=1e-13)
        for t in (1.1, 2.0, 5.0):
            scaled = solve_secular(t * coeffs, poles, tol=1e-13)
            assert np.all(scaled > base)

    def test_tiny_coefficient_root_pinched_at_pole(self):
        roots = solve_secular([1e-18, 0.3], [0.0, 1.0], tol=1e-15)
        assert 0.0 < roots[0] < 1e-12
        assert abs(secular_value(roots[1], [1e-18, 0.3], [0.0, 1.0])) < 1e-9

    def test_error_conditions(self):
        with pytest.raises(NonPositiveCoefficientError):
            solve_secular([0.1, -0.1], [0.0, 1.0], tol=1e-12)
        with pytest.raises(NonPositiveCoefficientError):
            solve_secular([0.1, 0.0], [0.0, 1.0], tol=1e-12)
        with pytest.raises(InvalidSpectrumError):
            solve_secular([0.1, 0.1], [1.0, 0.0], tol=1e-12)
        with pytest.raises(InvalidRangeError):
            solve_secular([0.1], [0.0], tol=0.0)
        with pytest.raises(LengthMismatchError):
            solve_secular([0.1], [0.0, 1.0], tol=1e-12)

    def test_empty_problem(self):
        assert solve_secular([], [], tol=1e-12).size == 0


class TestScanFallback:
    def test_finds_roots_of_mixed_sign_problem(self):
        # one negative coefficient: compare against a dense numpy check
        coeffs = np.array([0.3, -0.1, 0.2])
        poles = np.array([0.0, 1.0, 2.0])
        roots, exhaustive = scan_secular_roots(coeffs, poles)
        assert not exhaustive
        for root in roots:
            assert abs(secular_value(root, coeffs, poles)) < 1e-8
        # every sign change between adjacent fine-grid points is matched
        grid = np.linspace(-1.0, 3.0, 200_001)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = secular_value(grid, coeffs, poles)
        sign = np.sign(vals)
        flips = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
        crossings = [
            0.5 * (grid[i] + grid[i + 1])
            for i in flips
            if np.searchsorted(poles, grid[i + 1], side="right")
            == np.searchsorted(poles, grid[i], side="left")
        ]
        assert len(crossings) == roots.size
        np.testing.assert_allclose(np.sort(crossings), roots, atol=grid[1] - grid[0])


class TestFindResonancePositions:
    def test_single_resonance(self):
        bg = Background(r=0.5)
        spec = BareSpectrum(2.0, [1.0], [0.4])
        shift = resonance_shift(0.4, 0.5)
        np.testing.assert_allclose(find_resonance_positions(spec, bg), [1.0 + shift], rtol=1e-15)

    def test_r_equal_one_returns_bare_positions_exactly(self):
        bg = Background(r=1.0)
        spec = BareSpectrum(3.0, [0.3, 1.1, 2.9], [0.5, 0.7, 0.2])
        np.testing.assert_array_equal(find_resonance_positions(spec, bg), spec.positions)

    def test_two_resonance_quadratic_case(self):
        # Delta = 0.5 with r = 0.5 gives dB = 0.1 per resonance
        bg = Background(r=0.5)
        spec = BareSpectrum(2.0, [0.0, 1.0], [0.5, 0.5])
        expected = np.array([(1.2 - math.sqrt(1.04)) / 2, (1.2 + math.sqrt(1.04)) / 2])
        np.testing.assert_allclose(find_resonance_positions(spec, bg), expected, atol=1e-12)

    def test_negative_shift_regime_uses_fallback_with_warning(self):
        bg = Background(r=1.5)  # shift factor negative
        spec = BareSpectrum(3.0, [0.5, 1.5, 2.5], [0.3, 0.3, 0.3])
        with pytest.warns(SolverGuaranteeWarning):
            roots = find_resonance_positions(spec, bg)
        shifts = spec.shifts(bg)
        for root in roots:
            assert abs(secular_value(root, shifts, spec.positions)) < 1e-8

    def test_empty_spectrum(self):
        bg = Background(r=0.5)
        assert find_resonance_positions(BareSpectrum(1.0, [], []), bg).size == 0


class TestFindScatteringZeros:
    def test_single_resonance(self):
        bg = Background(r=0.5)
        spec = BareSpectrum(2.0, [1.0], [0.4])
        shift = resonance_shift(0.4, 0.5)
        np.testing.assert_allclose(
            find_scattering_zeros(spec, bg), [1.0 + shift + 0.4], rtol=1e-15
        )

    def test_two_resonance_quadratic_case(self):
        # coefficients dB + Delta = 0.3 each: Delta = 0.25 at r = 0.5;
        # zeros solve b^2 - 1.6 b + 0.3 = 0
        bg = Background(r=0.5)
        spec = BareSpectrum(2.0, [0.0, 1.0], [0.25, 0.25])
        expected = np.array([(1.6 - math.sqrt(1.36)) / 2, (1.6 + math.sqrt(1.36)) / 2])
        np.testing.assert_allclose(find_scattering_zeros(spec, bg), expected, atol=1e-12)

    def test_zeros_annihilate_the_scattering_length(self):
        rng = np.random.default_rng(12)
        bg = Background(r=0.5)
        while True:
            pos = np.sort(rng.uniform(0.0, 8.0, 8))
            if np.min(np.diff(pos)) > 0.05:
                break
        spec = BareSpectrum(8.0, pos, rng.uniform(0.1, 1.2, 8))
        for b in find_scattering_zeros(spec, bg):
            assert abs(scattering_length(b, spec, bg)) < 1e-8 * abs(bg.a_bg)


class TestEffectiveWidths:
    def test_single_resonance_width_unchanged(self):
        bg = Background(r=0.5)
        spec = BareSpectrum(2.0, [1.0], [0.4])
        dressed = dress_spectrum(spec, bg)
        assert dressed.widths_eff[0] == pytest.approx(0.4, rel=1e-14)

    def test_two_resonance_quadratic_widths_and_sum_rule(self):
        # poles from dB = 0.1 (Delta = 0.5, r = 0.5); zeros from dB + Delta = 0.6
        bg = Background(r=0.5)
        spec = BareSpectrum(2.0, [0.0, 1.0], [0.5, 0.5])
        dressed = dress_spectrum(spec, bg)
        poles = np.array([(1.2 - math.sqrt(1.04)) / 2, (1.2 + math.sqrt(1.04)) / 2])
        zeros = np.array([(2.2 - math.sqrt(2.44)) / 2, (2.2 + math.sqrt(2.44)) / 2])
        np.testing.assert_allclose(dressed.positions_res, poles, atol=1e-12)
        np.testing.assert_allclose(dressed.widths_eff, zeros - poles, atol=1e-12)
        assert dressed.widths_eff.sum() == pytest.approx(1.0, rel=1e-12)

    def test_sum_rule_fifty_wide_resonances(self):
        rng = np.random.default_rng(13)
        bg = Background(r=0.5)
        while True:
            pos = np.sort(rng.uniform(0.0, 50.0, 50))
            if np.min(np.diff(pos)) > 0.02:
                break
        spec = BareSpectrum(50.0, pos, np.full(50, 5.0))
        dressed = dress_spectrum(spec, bg)
        assert dressed.widths_eff.sum() == pytest.approx(spec.widths.sum(), rel=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            effective_widths([0.0, 1.0], [0.5])


class TestBruteForceAgreement:
    def test_roots_match_dense_sign_scan(self):
        # small-scale version of the acceptance property; 10^6-point scans for
        # 200 spectra live in the acceptance suite
        rng = np.random.default_rng(14)
        bg = Background(r=0.5)
        for _ in range(5):
            n = int(rng.integers(2, 11))
            while True:
                pos = np.sort(rng.uniform(0.0, float(n), n))
                if n == 1 or np.min(np.diff(pos)) > 0.05:
                    break
            spec = BareSpectrum(float(n), pos, rng.uniform(0.05, 1.5, n))
            shifts = spec.shifts(bg)
            roots = find_resonance_positions(spec, bg)
            lo = pos[0] - shifts.sum() - 0.5
            hi = pos[-1] + shifts.sum() + 0.5
            grid = np.linspace(lo, hi, 200_001)
            vals = secular_value(grid, shifts, pos)
            sign = np.sign(vals)
            up = np.nonzero((sign[:-1] < 0) & (sign[1:] > 0))[0]
            assert up.size == roots.size
            step = grid[1] - grid[0]
            np.testing.assert_allclose(roots, grid[up] + step / 2, atol=step)

    def test_dress_respects_interlacing(self):
        rng = np.random.default_rng(15)
        bg = Background(r=0.5)
        while True:
            pos = np.sort(rng.uniform(0.0, 10.0, 10))
            if np.min(np.diff(pos)) > 0.05:
                break
        spec = BareSpectrum(10.0, pos, rng.uniform(0.1, 2.0, 10))
        dressed = dress_spectrum(spec, bg)
        assert np.all(dressed.positions_res > spec.positions)
        assert np.all(dressed.positions_res[:-1] < spec.positions[1:])
