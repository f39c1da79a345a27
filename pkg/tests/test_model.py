"""Scattering-length model: shifts, sum form, product form, secular function."""

import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from reschaos import (
    Background,
    BareSpectrum,
    DegeneratePositionsError,
    DressedSpectrum,
    InvalidRangeError,
    InvalidSpectrumError,
    LengthMismatchError,
    PoleProximityError,
    ShiftTable,
    dress_spectrum,
    load_bare_spectrum_csv,
    product_form_value,
    resonance_shift,
    save_bare_spectrum_csv,
    scattering_length,
    scattering_length_grid,
    secular_value,
    sum_form_denominators,
)


def random_spectrum(rng, n, width_lo=0.05, width_hi=1.5):
    b_max = float(n)
    while True:
        pos = np.sort(rng.uniform(0.0, b_max, n))
        if n == 1 or np.min(np.diff(pos)) > 0.05:
            break
    widths = rng.uniform(width_lo, width_hi, n)
    return BareSpectrum(b_max, pos, widths)


class TestResonanceShift:
    def test_vanishes_at_r_0_and_1(self):
        assert resonance_shift(1.0, 1.0) == 0.0
        assert resonance_shift(1.0, 0.0) == 0.0

    def test_direct_arithmetic(self):
        # 0.5*0.5/(1+0.25)*2 = 0.4
        assert resonance_shift(2.0, 0.5) == pytest.approx(0.4, rel=1e-15)

    def test_against_high_precision_oracle(self):
        rng = np.random.default_rng(11)
        mpmath.mp.dps = 50
        for _ in range(10):
            r = float(rng.uniform(-1.0, 2.0))
            width = float(rng.uniform(0.1, 5.0))
            rm = mpmath.mpf(r)
            expected = rm * (1 - rm) / (1 + (1 - rm) ** 2) * mpmath.mpf(width)
            assert resonance_shift(width, r) == pytest.approx(float(expected), rel=1e-14)

    def test_vectorized_over_widths(self):
        widths = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(resonance_shift(widths, 0.5), 0.2 * widths, rtol=1e-15)


class TestBackground:
    def test_a_bg_is_exactly_r_times_abar(self):
        bg = Background(abar=1.3, r=0.7)
        assert bg.a_bg == 0.7 * 1.3

    def test_rejects_nonpositive_scales(self):
        with pytest.raises(InvalidRangeError):
            Background(abar=0.0)
        with pytest.raises(InvalidRangeError):
            Background(ebar=-1.0)
        with pytest.raises(InvalidRangeError):
            Background(r=math.inf)


class TestBareSpectrum:
    def test_degenerate_positions_rejected_with_distinct_error(self):
        with pytest.raises(DegeneratePositionsError):
            BareSpectrum(2.0, [0.5, 0.5], [1.0, 1.0])

    def test_unsorted_positions_rejected(self):
        with pytest.raises(InvalidSpectrumError):
            BareSpectrum(2.0, [1.0, 0.5], [1.0, 1.0])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            BareSpectrum(2.0, [0.5], [1.0, 2.0])

    def test_delta_mu_must_be_positive(self):
        with pytest.raises(InvalidRangeError):
            BareSpectrum(2.0, [0.5, 1.0], [1.0, 1.0], [0.4, 0.0])

    def test_empty_spectrum_allowed(self):
        spec = BareSpectrum(5.0, [], [])
        assert spec.n == 0
        with pytest.raises(InvalidSpectrumError):
            spec.mean_spacing

    def test_mean_spacing_and_width_flag(self):
        spec = BareSpectrum(10.0, [1.0, 3.0], [0.5, 1.0])
        assert spec.mean_spacing == 5.0
        assert spec.all_widths_positive
        flagged = BareSpectrum(10.0, [1.0, 3.0], [0.5, -1.0])
        assert not flagged.all_widths_positive

    def test_shift_table(self):
        bg = Background(r=0.5)
        spec = BareSpectrum(10.0, [1.0, 3.0], [0.5, 1.0])
        table = ShiftTable.from_spectrum(spec, bg)
        np.testing.assert_allclose(table.shifts, 0.2 * spec.widths, rtol=1e-15)


class TestSecularValue:
    def test_far_field_limit_is_one(self):
        coeffs = [0.3, 0.2]
        poles = [0.0, 1.0]
        assert secular_value(1e12, coeffs, poles) == pytest.approx(1.0, abs=1e-11)
        assert secular_value(-1e12, coeffs, poles) == pytest.approx(1.0, abs=1e-11)

    def test_zero_coefficients(self):
        assert secular_value(0.3, [0.0, 0.0], [0.0, 1.0]) == 1.0
        assert secular_value(0.3, [], []) == 1.0

    def test_hand_arithmetic_example(self):
        # 1 - 0.1/0.5 - 0.1/(-0.5) = 1
        value = secular_value(0.5, [0.1, 0.1], [0.0, 1.0])
        mpmath.mp.dps = 40
        oracle = 1 - mpmath.mpf("0.1") / mpmath.mpf("0.5") - mpmath.mpf("0.1") / mpmath.mpf("-0.5")
        assert value == pytest.approx(float(oracle), abs=1e-15)

    def test_guard_raises_near_pole(self):
        with pytest.raises(PoleProximityError):
            secular_value(1e-14, [0.1], [0.0], guard=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            secular_value(0.5, [0.1], [0.0, 1.0])

    def test_array_input(self):
        out = secular_value(np.array([0.5, 2.0]), [0.1, 0.1], [0.0, 1.0])
        assert out.shape == (2,)
        assert out[0] == pytest.approx(1.0)


class TestScatteringLength:
    def test_empty_spectrum_gives_background(self):
        bg = Background(abar=1.0, r=0.35)
        spec = BareSpectrum(5.0, [], [])
        assert scattering_length(2.0, spec, bg) == bg.a_bg

    def test_single_resonance_zero_crossing(self):
        bg = Background(r=0.5)
        spec = BareSpectrum(2.0, [1.0], [0.4])
        shift = resonance_shift(0.4, 0.5)
        b_zero = 1.0 + shift + 0.4
        assert abs(scattering_length(b_zero, spec, bg)) < 1e-12 * abs(bg.a_bg)

    def test_exact_rational_oracle_two_resonances(self):
        # B={0,1}, Delta={1/2,1/2}, r=1/2, b=1/2, evaluated term by term in
        # exact rational arithmetic.
        r = Fraction(1, 2)
        shift_factor = r * (1 - r) / (1 + (1 - r) ** 2)
        delta = [Fraction(1, 2), Fraction(1, 2)]
        pos = [Fraction(0), Fraction(1)]
        db = [shift_factor * d for d in delta]
        b = Fraction(1, 2)
        denoms = []
        for i in range(2):
            j = 1 - i
            denoms.append(b - pos[i] - db[i] - (b - pos[i]) / (b - pos[j]) * db[j])
        a_bg = r * 1
        oracle = a_bg * (1 - sum(delta[i] / denoms[i] for i in range(2)))

        bg = Background(r=0.5)
        spec = BareSpectrum(2.0, [0.0, 1.0], [0.5, 0.5])
        value = scattering_length(0.5, spec, bg)
        assert value == pytest.approx(float(oracle), rel=1e-14)

    def test_single_resonance_reduces_to_isolated_formula(self):
        bg = Background(abar=1.2, r=0.6)
        spec = BareSpectrum(3.0, [1.3], [0.7])
        shift = resonance_shift(0.7, 0.6)
        rng = np.random.default_rng(3)
        for b in rng.uniform(-2.0, 5.0, 40):
            if abs(b - 1.3) < 1e-6 or abs(b - 1.3 - shift) < 1e-6:
                continue
            isolated = bg.a_bg * (1.0 - 0.7 / (b - 1.3 - shift))
            assert scattering_length(b, spec, bg) == pytest.approx(isolated, rel=1e-13)

    def test_pole_guard(self):
        bg = Background(r=0.5)
        spec = BareSpectrum(2.0, [1.0], [0.4])
        with pytest.raises(PoleProximityError):
            scattering_length(1.0 + 1e-15, spec, bg)
        # zero of F is the actual pole of a
        pole = 1.0 + resonance_shift(0.4, 0.5)
        with pytest.raises(PoleProximityError):
            scattering_length(pole + 1e-14, spec, bg)


class TestDenominatorIdentity:
    def test_factorization_holds_everywhere(self):
        # D_i(b) = (b - B_i) * F(b) with F = 1 - sum_j dB_j/(b - B_j)
        rng = np.random.default_rng(21)
        bg = Background(r=0.5)
        for _ in range(8):
            n = int(rng.integers(2, 21))
            spec = random_spectrum(rng, n)
            shifts = spec.shifts(bg)
            d = spec.mean_spacing
            crit = np.sort(np.concatenate([spec.positions,
                                           np.atleast_1d(dress_spectrum(spec, bg).positions_res)]))
            checked = 0
            while checked < 100:
                b = float(rng.uniform(-1.0, spec.b_max + 1.0))
                if np.min(np.abs(b - crit)) < 0.05 * d:
                    continue
                denoms = sum_form_denominators(b, spec, bg)
                factored = (b - spec.positions) * secular_value(b, shifts, spec.positions)
                np.testing.assert_allclose(denoms, factored, rtol=1e-10)
                checked += 1


class TestSumProductEquivalence:
    def test_pointwise_agreement(self):
        rng = np.random.default_rng(31)
        bg = Background(r=0.5)
        for _ in range(5):
            n = int(rng.integers(2, 13))
            spec = random_spectrum(rng, n)
            dressed = dress_spectrum(spec, bg)
            d = spec.mean_spacing
            crit = np.sort(np.concatenate(
                [spec.positions, dressed.positions_res, dressed.zeros]))
            checked = 0
            while checked < 100:
                b = float(rng.uniform(-1.0, spec.b_max + 1.0))
                if np.min(np.abs(b - crit)) < 0.05 * d:
                    continue
                a_sum = scattering_length(b, spec, bg)
                a_prod = product_form_value(b, dressed, bg)
                assert abs(a_sum - a_prod) <= 1e-8 * max(abs(a_sum), abs(a_prod))
                checked += 1


class TestProductForm:
    def test_empty_product_is_background(self):
        bg = Background(r=0.4)
        dressed = DressedSpectrum(np.empty(0), np.empty(0))
        assert product_form_value(1.0, dressed, bg) == bg.a_bg

    def test_zero_at_position_plus_width(self):
        bg = Background(r=0.5)
        dressed = DressedSpectrum(np.array([0.2, 1.4]), np.array([0.3, 0.1]))
        for k in range(2):
            b = dressed.positions_res[k] + dressed.widths_eff[k]
            assert abs(product_form_value(b, dressed, bg)) < 1e-12 * abs(bg.a_bg)

    def test_guard(self):
        bg = Background(r=0.5)
        dressed = DressedSpectrum(np.array([0.2]), np.array([0.3]))
        with pytest.raises(PoleProximityError):
            product_form_value(0.2 + 1e-16, dressed, bg)


class TestPoleBehavior:
    def test_sign_flip_across_dressed_positions(self):
        rng = np.random.default_rng(41)
        bg = Background(r=0.5)
        spec = random_spectrum(rng, 8)
        dressed = dress_spectrum(spec, bg)
        crit = np.sort(np.concatenate(
            [spec.positions, dressed.positions_res, dressed.zeros]))
        for pole in dressed.positions_res:
            others = crit[np.abs(crit - pole) > 1e-12]
            eps = 0.01 * np.min(np.abs(others - pole))
            left = scattering_length(pole - eps, spec, bg)
            right = scattering_length(pole + eps, spec, bg)
            assert left * right < 0.0


class TestGridEvaluation:
    def test_grid_matches_scalar(self):
        rng = np.random.default_rng(51)
        bg = Background(r=0.5)
        spec = random_spectrum(rng, 10)
        dressed = dress_spectrum(spec, bg)
        crit = np.sort(np.concatenate([spec.positions, dressed.positions_res]))
        grid = []
        while len(grid) < 50:
            b = float(rng.uniform(0.0, spec.b_max))
            if np.min(np.abs(b - crit)) > 0.01:
                grid.append(b)
        grid = np.array(grid)
        values, mask = scattering_length_grid(grid, spec, bg)
        assert not mask.any()
        scalars = np.array([scattering_length(b, spec, bg) for b in grid])
        np.testing.assert_allclose(values, scalars, rtol=1e-11)

    def test_pole_adjacent_points_are_masked_not_fatal(self):
        bg = Background(r=0.5)
        spec = BareSpectrum(2.0, [1.0], [0.4])
        grid = np.array([0.5, 1.0 + 1e-15, 1.5])
        values, mask = scattering_length_grid(grid, spec, bg)
        assert mask.tolist() == [False, True, False]
        assert np.isnan(values[1]) and np.isfinite(values[0])

    def test_empty_spectrum_grid(self):
        bg = Background(r=0.35)
        values, mask = scattering_length_grid(np.linspace(0, 1, 5), BareSpectrum(1.0, [], []), bg)
        assert not mask.any()
        np.testing.assert_array_equal(values, np.full(5, bg.a_bg))


class TestCsvRoundTrip:
    def test_save_load_with_sidecar(self, tmp_path):
        spec = BareSpectrum(7.5, [0.5, 2.0, 6.25], [0.1, 0.2, 0.3], [0.4, 0.5, 0.6])
        path = tmp_path / "table.csv"
        save_bare_spectrum_csv(path, spec)
        assert (tmp_path / "table.csv.manifest.json").exists()
        loaded = load_bare_spectrum_csv(path)
        assert loaded.b_max == spec.b_max
        np.testing.assert_array_equal(loaded.positions, spec.positions)
        np.testing.assert_array_equal(loaded.widths, spec.widths)
        np.testing.assert_array_equal(loaded.delta_mu, spec.delta_mu)

    def test_delta_mu_column_is_optional(self, tmp_path):
        spec = BareSpectrum(7.5, [0.5, 2.0], [0.1, 0.2])
        path = tmp_path / "table.csv"
        save_bare_spectrum_csv(path, spec)
        header = path.read_text().splitlines()[0]
        assert header == "index,B_bare,Delta"
        assert load_bare_spectrum_csv(path).delta_mu is None

    def test_manifest_comment_line(self, tmp_path):
        spec = BareSpectrum(7.5, [0.5], [0.1])
        path = tmp_path / "table.csv"
        save_bare_spectrum_csv(path, spec, manifest_comment="manifest.json")
        assert path.read_text().splitlines()[0] == "# manifest: manifest.json"

    def test_missing_sidecar_needs_explicit_b_max(self, tmp_path):
        spec = BareSpectrum(7.5, [0.5], [0.1])
        path = tmp_path / "table.csv"
        save_bare_spectrum_csv(path, spec, sidecar=False)
        with pytest.raises(InvalidSpectrumError):
            load_bare_spectrum_csv(path)
        assert load_bare_spectrum_csv(path, b_max=7.5).b_max == 7.5
