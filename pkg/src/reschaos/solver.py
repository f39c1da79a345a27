"""Root finding for secular functions F(b) = 1 - sum_j c_j / (b - p_j).

For strictly positive coefficients F is strictly increasing between
consecutive poles (F' = sum c_j/(b-p_j)^2 > 0), so there is exactly one zero
inside every inter-pole gap and one more above the last pole, no further than
sum(c) beyond it.  Those zeros are the dressed resonance positions when the
coefficients are the open-channel shifts, and the zeros of the scattering
length when the coefficients are shifts + local widths.

Mixed-sign coefficients void the guarantees; a dense sign-scan fallback keeps
the API total but reports that completeness cannot be promised.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .errors import (
    BracketFailureError,
    InvalidRangeError,
    InvalidSpectrumError,
    LengthMismatchError,
    NonPositiveCoefficientError,
    ReschaosError,
    SolverGuaranteeWarning,
)
from .model import (
    Background,
    BareSpectrum,
    DressedSpectrum,
    product_form_value,
    resonance_shift,
    scattering_length,
    secular_derivative,
    secular_value,
)

# Absolute root tolerance as a fraction of the mean spacing d.
DEFAULT_TOL_REL = 1e-12
# Bracket endpoints sit this fraction of the local gap away from each pole.
_BRACKET_GUARD_REL = 1e-13


def _edge_point(f, pole: float, gap: float, direction: int) -> float | None:
    """Point just inside a gap where f carries the sign it must have next to
    ``pole`` (f -> -inf just above a pole, +inf just below).

    Shrinks the offset geometrically when a tiny coefficient pushes the root
    closer to the pole than the first guess; returns None when the root is
    pinched within a few ulps of the pole.
    """
    eta = max(_BRACKET_GUARD_REL * gap, 8.0 * np.spacing(abs(pole)), 5e-324)
    for _ in range(100):
        x = pole + direction * eta
        if x != pole and direction * f(x) < 0.0:
            return x
        eta *= 0.125
        if eta <= np.spacing(abs(pole)):
            return None
    return None


def _refine(f, df, lo: float, hi: float, tol: float, max_iter: int = 200) -> float:
    """Newton iteration safeguarded by the bracket [lo, hi], f(lo)<0<f(hi)."""
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        fx = f(x)
        if fx == 0.0:
            return x
        if fx < 0.0:
            lo = x
        else:
            hi = x
        d = df(x)
        x_new = x - fx / d if d > 0.0 and math.isfinite(d) else 0.5 * (lo + hi)
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= tol or (hi - lo) <= tol:
            return x_new if lo < x_new < hi else 0.5 * (lo + hi)
        x = x_new
    raise BracketFailureError(
        f"root refinement did not converge in {max_iter} iterations on [{lo}, {hi}]"
    )


def solve_secular(coeffs, poles, tol: float, max_iter: int = 200) -> np.ndarray:
    """All N zeros of 1 - sum_j coeffs_j/(b - poles_j), sorted ascending.

    Requires strictly positive coefficients and strictly increasing poles;
    each root is bracketed analytically (one per inter-pole gap, one in
    (poles[-1], poles[-1] + sum(coeffs)]) and refined to absolute tolerance
    ``tol`` by bisection-guarded Newton steps.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    poles = np.asarray(poles, dtype=float)
    if coeffs.shape != poles.shape or coeffs.ndim != 1:
        raise LengthMismatchError("coeffs and poles must be 1-D of equal length")
    if coeffs.size == 0:
        return np.empty(0)
    if np.any(coeffs <= 0.0) or not np.all(np.isfinite(coeffs)):
        raise NonPositiveCoefficientError(
            "all coefficients must be positive; use scan_secular_roots otherwise"
        )
    if poles.size > 1 and np.any(np.diff(poles) <= 0.0):
        raise InvalidSpectrumError("poles must be strictly increasing")
    if not (tol > 0.0 and math.isfinite(tol)):
        raise InvalidRangeError(f"tol must be positive and finite, got {tol!r}")

    n = poles.size
    if n == 1:
        # Single-term equation solved exactly.
        return np.array([poles[0] + coeffs[0]])

    def f(x):
        return 1.0 - float(np.sum(coeffs / (x - poles)))

    def df(x):
        return float(np.sum(coeffs / (x - poles) ** 2))

    total = float(coeffs.sum())
    roots = np.empty(n)
    for k in range(n - 1):
        gap = poles[k + 1] - poles[k]
        lo = _edge_point(f, poles[k], gap, +1)
        hi = _edge_point(f, poles[k + 1], gap, -1)
        if lo is None:
            roots[k] = np.nextafter(poles[k], math.inf)
        elif hi is None:
            roots[k] = np.nextafter(poles[k + 1], -math.inf)
        elif lo >= hi:
            roots[k] = 0.5 * (poles[k] + poles[k + 1])
        else:
            roots[k] = _refine(f, df, lo, hi, tol, max_iter)

    # Last root: f(poles[-1] + total) >= 0 analytically; tiny expansions cover
    # floating-point slop when the margin is at rounding level.
    lo = _edge_point(f, poles[-1], total, +1)
    hi = poles[-1] + total
    for bump in (0.0, 1e-15, 1e-12, 1e-9, 1e-6, 1e-3):
        hi = poles[-1] + total * (1.0 + bump)
        if f(hi) >= 0.0:
            break
    else:
        raise BracketFailureError("no sign change above the last pole")
    if lo is None:
        roots[-1] = np.nextafter(poles[-1], math.inf)
    else:
        roots[-1] = _refine(f, df, lo, hi, tol, max_iter)
    return roots


def scan_secular_roots(coeffs, poles, n_points: int = 400_001, tol: float | None = None):
    """Dense sign-scan fallback for coefficient sets without the positivity
    guarantee.

    Scans [min(p) - sum|c|, max(p) + sum|c|], refines every sign change that
    does not straddle a pole by bisection, and returns ``(roots, exhaustive)``
    with ``exhaustive`` always False: roots closer together than the grid
    step, or hiding in the same cell as a pole, may be missed.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    poles = np.asarray(poles, dtype=float)
    if coeffs.shape != poles.shape or coeffs.ndim != 1:
        raise LengthMismatchError("coeffs and poles must be 1-D of equal length")
    if coeffs.size == 0:
        return np.empty(0), False
    order = np.argsort(poles)
    poles = poles[order]
    coeffs = coeffs[order]
    reach = float(np.sum(np.abs(coeffs)))
    lo_end = poles[0] - reach - 1e-9
    hi_end = poles[-1] + reach + 1e-9
    if tol is None:
        tol = 1e-12 * max(1.0, (hi_end - lo_end) / max(poles.size, 1))

    grid = np.linspace(lo_end, hi_end, n_points)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = secular_value(grid, coeffs, poles)
    sign = np.sign(values)
    flips = np.nonzero(sign[:-1] * sign[1:] < 0.0)[0]

    def f(x):
        return 1.0 - float(np.sum(coeffs / (x - poles)))

    roots = []
    for idx in flips:
        a, b = grid[idx], grid[idx + 1]
        # Skip cells whose closed interval contains a pole (including a grid
        # node landing exactly on one): the sign change there is a jump of F,
        # not a zero crossing.
        if np.searchsorted(poles, b, side="right") != np.searchsorted(poles, a, side="left"):
            continue
        fa, fb = values[idx], values[idx + 1]
        for _ in range(200):
            if b - a <= tol:
                break
            mid = 0.5 * (a + b)
            fm = f(mid)
            if fm == 0.0:
                a = b = mid
                break
            if (fm < 0.0) == (fa < 0.0):
                a, fa = mid, fm
            else:
                b, fb = mid, fm
        roots.append(0.5 * (a + b))
    return np.array(sorted(roots)), False


def _rational_zero_set(
    positions: np.ndarray,
    active_coeffs: np.ndarray,
    companion_coeffs: np.ndarray,
    tol: float,
) -> np.ndarray:
    """Zeros of the rational structure 1 - sum active/(b - p), augmented with
    the bare positions whose active coefficient vanishes while the companion
    combination keeps a pole of a(B) alive there (fully decoupled resonances,
    with both combinations zero, contribute nothing)."""
    active = active_coeffs != 0.0
    extra = positions[(~active) & (companion_coeffs != 0.0)]
    sub_c = active_coeffs[active]
    sub_p = positions[active]
    if sub_c.size == 0:
        roots = np.empty(0)
    elif np.all(sub_c > 0.0):
        roots = solve_secular(sub_c, sub_p, tol)
    else:
        warnings.warn(
            "non-positive secular coefficients: falling back to a dense scan "
            "with no completeness guarantee",
            SolverGuaranteeWarning,
            stacklevel=3,
        )
        roots, _ = scan_secular_roots(sub_c, sub_p)
    return np.sort(np.concatenate([roots, extra]))


def find_resonance_positions(spectrum: BareSpectrum, bg: Background, tol: float | None = None) -> np.ndarray:
    """Dressed resonance positions: the poles of a(B), sorted ascending."""
    if spectrum.n == 0:
        return np.empty(0)
    if tol is None:
        tol = DEFAULT_TOL_REL * spectrum.mean_spacing
    shifts = spectrum.shifts(bg)
    return _rational_zero_set(spectrum.positions, shifts, shifts + spectrum.widths, tol)


def find_scattering_zeros(spectrum: BareSpectrum, bg: Background, tol: float | None = None) -> np.ndarray:
    """Fields where a(B) = 0, sorted ascending.

    a(B) = 0 is equivalent to 1 - sum_i (dB_i + Delta_i)/(B - B_i) = 0; the
    equivalence is exercised directly by the test suite rather than assumed.
    """
    if spectrum.n == 0:
        return np.empty(0)
    if tol is None:
        tol = DEFAULT_TOL_REL * spectrum.mean_spacing
    shifts = spectrum.shifts(bg)
    return _rational_zero_set(spectrum.positions, shifts + spectrum.widths, shifts, tol)


def effective_widths(positions_res, zeros) -> np.ndarray:
    """Dtilde_i = zero_i - Bres_i under sorted index pairing."""
    pos = np.sort(np.asarray(positions_res, dtype=float))
    zer = np.sort(np.asarray(zeros, dtype=float))
    if pos.shape != zer.shape:
        raise LengthMismatchError(
            f"{pos.size} dressed positions but {zer.size} scattering zeros"
        )
    return zer - pos


def dress_spectrum(
    spectrum: BareSpectrum,
    bg: Background,
    tol: float | None = None,
    validate: bool = True,
) -> DressedSpectrum:
    """Solve for poles and zeros of a(B) and pair them into a dressed spectrum.

    When the standard guarantees apply (positive widths and shifts) the result
    is checked against the width sum rule and, via a few probe fields, against
    the sum-form evaluation; the sorted pairing of poles with zeros is thereby
    validated per spectrum instead of assumed.
    """
    positions = find_resonance_positions(spectrum, bg, tol)
    zeros = find_scattering_zeros(spectrum, bg, tol)
    if positions.size != zeros.size:
        raise ReschaosError(
            f"found {positions.size} poles but {zeros.size} zeros; "
            "cannot pair effective widths"
        )
    widths = effective_widths(positions, zeros)
    dressed = DressedSpectrum(positions, widths)
    if validate and spectrum.n > 0:
        shifts = spectrum.shifts(bg)
        guaranteed = bool(np.all(shifts > 0.0) and np.all(shifts + spectrum.widths > 0.0))
        if guaranteed:
            total_bare = float(np.sum(spectrum.widths))
            total_eff = float(np.sum(widths))
            scale = max(abs(total_bare), abs(total_eff), 1e-300)
            if abs(total_eff - total_bare) > 1e-9 * scale:
                raise ReschaosError(
                    f"width sum rule violated: sum Delta_eff={total_eff} vs "
                    f"sum Delta={total_bare}"
                )
            if np.any(positions <= spectrum.positions):
                raise ReschaosError("interlacing violated: some B_res <= B_bare")
        _validate_reconstruction(spectrum, dressed, bg)
    return dressed


def _validate_reconstruction(spectrum: BareSpectrum, dressed: DressedSpectrum, bg: Background):
    """Probe a few fields and require the product form to reproduce the sum
    form to 1e-6 on the a_bg scale (probes that land near a pole are skipped)."""
    pos = dressed.positions_res
    probes = []
    if pos.size >= 2:
        probes.extend(0.5 * (pos[:-1] + pos[1:])[: 3])
    probes.append(pos[0] - 0.5 * max(spectrum.mean_spacing, 1e-12))
    probes.append(pos[-1] + 0.5 * max(spectrum.mean_spacing, 1e-12))
    scale = abs(bg.a_bg) + abs(bg.abar)
    for b in probes:
        try:
            a_sum = scattering_length(b, spectrum, bg)
            a_prod = product_form_value(b, dressed, bg)
        except ReschaosError:
            continue
        if abs(a_sum - a_prod) > 1e-6 * (abs(a_sum) + scale):
            raise ReschaosError(
                f"product form does not reconstruct the sum form at b={b}: "
                f"{a_prod} vs {a_sum}"
            )
