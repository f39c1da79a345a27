"""Analytic model of the s-wave scattering length near many overlapping
magnetic Feshbach resonances.

The entrance channel is a van der Waals background characterized by its mean
scattering length ``abar`` and the dimensionless ratio ``r``, so that
``a_bg = r * abar``.  A set of N closed-channel bound states crossing threshold
at bare fields ``B_i`` with local widths ``Delta_i`` produces

    a(B) = a_bg * (1 - sum_i Delta_i / D_i(B)),
    D_i(B) = B - B_i - dB_i - sum_{j != i} [(B - B_i) / (B - B_j)] * dB_j,

where ``dB_i = r(1-r)/(1+(1-r)^2) * Delta_i`` is the open-channel shift.  The
same curve can be written as a product over dressed positions ``Bres_i`` and
effective widths ``Dtilde_i``,

    a(B) = a_bg * prod_i (1 - Dtilde_i / (B - Bres_i)).

Each denominator factorizes as ``D_i(B) = (B - B_i) * F(B)`` with the secular
function ``F(B) = 1 - sum_j dB_j / (B - B_j)``; the factorization is enforced
as a tested invariant (see the test suite), not assumed blindly.  Zeros of F
built from the shifts give the poles of ``a``; zeros of the analogous function
built from ``shifts + widths`` give the zeros of ``a``.

Unit conventions: fields are most convenient in units of the mean resonance
spacing ``d = b_max / N``, lengths in units of ``abar`` and energies in units
of ``ebar``; all conversions happen at the I/O boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegeneratePositionsError,
    InvalidRangeError,
    InvalidSpectrumError,
    LengthMismatchError,
    PoleProximityError,
)

# Default evaluation guard, relative to the mean spacing d.
POLE_GUARD_REL = 1e-12


def resonance_shift(width, r):
    """Open-channel shift dB = r(1-r)/(1+(1-r)^2) * width.

    Total on all finite inputs; accepts scalars or arrays of widths.
    """
    factor = r * (1.0 - r) / (1.0 + (1.0 - r) ** 2)
    return factor * width


def _readonly(values) -> np.ndarray:
    out = np.array(values, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Background:
    """Entrance-channel van der Waals parameters.

    ``a_bg`` is derived and always equals ``r * abar`` exactly.  Working in
    reduced units (abar = ebar = 1) reproduces the conventional plots.
    """

    abar: float = 1.0
    r: float = 0.5
    ebar: float = 1.0
    a_bg: float = field(init=False)

    def __post_init__(self):
        for name in ("abar", "r", "ebar"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidRangeError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.abar <= 0:
            raise InvalidRangeError(f"abar must be > 0, got {self.abar}")
        if self.ebar <= 0:
            raise InvalidRangeError(f"ebar must be > 0, got {self.ebar}")
        object.__setattr__(self, "a_bg", self.r * self.abar)

    def to_dict(self) -> dict:
        return {"abar": self.abar, "r": self.r, "ebar": self.ebar}


@dataclass(frozen=True, eq=False)
class BareSpectrum:
    """Uncoupled resonance inputs on the field range [0, b_max].

    positions : bare crossing fields B_i, strictly increasing
    widths    : local widths Delta_i, index-paired with positions
    delta_mu  : optional magnetic-moment differences (energy per field unit),
                needed only by the finite-energy extension

    N = 0 is permitted and describes the trivial constant a(B) = a_bg.
    Non-positive widths are accepted (the evaluator is agnostic) but void the
    bracketing guarantees of the root finder; see ``all_widths_positive``.
    """

    b_max: float
    positions: np.ndarray
    widths: np.ndarray
    delta_mu: np.ndarray | None = None

    def __post_init__(self):
        pos = _readonly(self.positions)
        wid = _readonly(self.widths)
        if pos.ndim != 1 or wid.ndim != 1:
            raise InvalidSpectrumError("positions and widths must be 1-D arrays")
        if pos.size != wid.size:
            raise LengthMismatchError(
                f"{pos.size} positions but {wid.size} widths"
            )
        b_max = float(self.b_max)
        if not math.isfinite(b_max) or b_max <= 0:
            raise InvalidSpectrumError(f"b_max must be positive and finite, got {b_max!r}")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(wid))):
            raise InvalidSpectrumError("positions and widths must be finite")
        if pos.size > 1:
            gaps = np.diff(pos)
            if np.any(gaps == 0.0):
                raise DegeneratePositionsError("bare positions must be pairwise distinct")
            if np.any(gaps < 0.0):
                raise InvalidSpectrumError("positions must be sorted ascending")
        dmu = self.delta_mu
        if dmu is not None:
            dmu = _readonly(dmu)
            if dmu.shape != pos.shape:
                raise LengthMismatchError("delta_mu must match positions in length")
            if not np.all(np.isfinite(dmu)) or np.any(dmu <= 0.0):
                raise InvalidRangeError("delta_mu entries must be positive and finite")
        object.__setattr__(self, "b_max", b_max)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "widths", wid)
        object.__setattr__(self, "delta_mu", dmu)

    @property
    def n(self) -> int:
        return self.positions.size

    @property
    def mean_spacing(self) -> float:
        """d = b_max / N; undefined for an empty spectrum."""
        if self.n == 0:
            raise InvalidSpectrumError("mean spacing is undefined for an empty spectrum")
        return self.b_max / self.n

    @property
    def all_widths_positive(self) -> bool:
        return bool(np.all(self.widths > 0.0))

    def shifts(self, bg: Background) -> np.ndarray:
        """Open-channel shifts dB_i for this spectrum."""
        return resonance_shift(self.widths, bg.r)

    def with_delta_mu(self, delta_mu) -> "BareSpectrum":
        return BareSpectrum(self.b_max, self.positions, self.widths, delta_mu)


@dataclass(frozen=True, eq=False)
class ShiftTable:
    """Per-resonance open-channel shifts dB_i."""

    shifts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shifts", _readonly(self.shifts))

    @classmethod
    def from_spectrum(cls, spectrum: BareSpectrum, bg: Background) -> "ShiftTable":
        return cls(spectrum.shifts(bg))


@dataclass(frozen=True, eq=False)
class DressedSpectrum:
    """Dressed resonance positions (poles of a) and effective widths."""

    positions_res: np.ndarray
    widths_eff: np.ndarray

    def __post_init__(self):
        pos = _readonly(self.positions_res)
        wid = _readonly(self.widths_eff)
        if pos.ndim != 1 or wid.ndim != 1 or pos.size != wid.size:
            raise LengthMismatchError("positions_res and widths_eff must be 1-D of equal length")
        if pos.size > 1 and np.any(np.diff(pos) <= 0.0):
            raise InvalidSpectrumError("dressed positions must be strictly increasing")
        object.__setattr__(self, "positions_res", pos)
        object.__setattr__(self, "widths_eff", wid)

    @property
    def n(self) -> int:
        return self.positions_res.size

    @property
    def zeros(self) -> np.ndarray:
        """Fields where a(B) vanishes: Bres_i + Dtilde_i."""
        return self.positions_res + self.widths_eff


def secular_value(b, coeffs, poles, guard: float = 0.0):
    """F(b) = 1 - sum_j coeffs_j / (b - poles_j) for scalar or array ``b``.

    ``guard`` > 0 raises PoleProximityError when any |b - pole| < guard.  The
    default 0 performs no check: the root finder intentionally evaluates
    closer to the poles than any sensible user-facing guard.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    poles = np.asarray(poles, dtype=float)
    if coeffs.shape != poles.shape:
        raise LengthMismatchError("coeffs and poles must have equal length")
    b_arr = np.asarray(b, dtype=float)
    if coeffs.size == 0:
        return 1.0 if b_arr.ndim == 0 else np.ones(b_arr.shape)
    diff = b_arr[..., None] - poles
    if guard > 0.0 and np.any(np.abs(diff) < guard):
        raise PoleProximityError(f"evaluation within {guard} of a pole")
    out = 1.0 - np.sum(coeffs / diff, axis=-1)
    return float(out) if b_arr.ndim == 0 else out


def secular_derivative(b, coeffs, poles):
    """dF/db = sum_j coeffs_j / (b - poles_j)^2; strictly positive between poles
    for positive coefficients."""
    coeffs = np.asarray(coeffs, dtype=float)
    poles = np.asarray(poles, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if coeffs.size == 0:
        return 0.0 if b_arr.ndim == 0 else np.zeros(b_arr.shape)
    diff = b_arr[..., None] - poles
    out = np.sum(coeffs / diff**2, axis=-1)
    return float(out) if b_arr.ndim == 0 else out


def sum_form_denominators(b, spectrum: BareSpectrum, bg: Background) -> np.ndarray:
    """All denominators D_i(b) of the sum form at scalar ``b``, each evaluated
    term by term with an explicit j != i sum (quadratic in N).

    This is the as-written route; the vectorized grid evaluator uses the
    factored form (b - B_i) * F(b), whose agreement with this routine is an
    invariant checked by the test suite.
    """
    b = float(b)
    pos = spectrum.positions
    shifts = spectrum.shifts(bg)
    diff = b - pos
    out = np.empty(pos.size)
    for i in range(pos.size):
        cross = np.delete(diff[i] / diff * shifts, i)
        out[i] = diff[i] - shifts[i] - cross.sum()
    return out


def scattering_length(b, spectrum: BareSpectrum, bg: Background, guard: float | None = None) -> float:
    """a(B) from the sum form at scalar ``b``.

    Raises PoleProximityError when ``b`` is within ``guard`` of a bare
    position or when |F(b)| < guard (then ``b`` sits essentially on a pole of
    a).  Default guard: 1e-12 * mean spacing.  For N = 0 returns a_bg.
    """
    b = float(b)
    if spectrum.n == 0:
        return bg.a_bg
    if guard is None:
        guard = POLE_GUARD_REL * spectrum.mean_spacing
    pos = spectrum.positions
    if float(np.min(np.abs(b - pos))) < guard:
        raise PoleProximityError(f"b={b} is within {guard} of a bare position")
    f_val = secular_value(b, spectrum.shifts(bg), pos)
    if abs(f_val) < guard:
        raise PoleProximityError(f"|F(b)|={abs(f_val)} < {guard}: local pole of a(B)")
    denoms = sum_form_denominators(b, spectrum, bg)
    return bg.a_bg * (1.0 - float(np.sum(spectrum.widths / denoms)))


def scattering_length_grid(
    b_values, spectrum: BareSpectrum, bg: Background, guard: float | None = None
):
    """Vectorized a(B) over an array of fields.

    Returns (values, masked): pole-proximate points carry NaN and a True mask
    entry instead of aborting the whole scan.
    """
    b = np.asarray(b_values, dtype=float)
    if spectrum.n == 0:
        return np.full(b.shape, bg.a_bg), np.zeros(b.shape, dtype=bool)
    if guard is None:
        guard = POLE_GUARD_REL * spectrum.mean_spacing
    pos = spectrum.positions
    shifts = spectrum.shifts(bg)
    diff = b[..., None] - pos
    near_bare = np.min(np.abs(diff), axis=-1) < guard
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / diff
        f_val = 1.0 - (shifts * inv).sum(axis=-1)
        t_val = (spectrum.widths * inv).sum(axis=-1)
        masked = near_bare | (np.abs(f_val) < guard)
        values = bg.a_bg * (1.0 - t_val / f_val)
    values = np.where(masked, np.nan, values)
    return values, masked


def _typical_gap(sorted_values: np.ndarray) -> float:
    if sorted_values.size >= 2:
        return float(np.mean(np.diff(sorted_values)))
    if sorted_values.size == 1:
        return max(abs(float(sorted_values[0])), 1.0)
    return 1.0


def product_form_value(b, dressed: DressedSpectrum, bg: Background, guard: float | None = None):
    """a(B) from the product form; scalar or array ``b``.

    Default guard is 1e-12 times the typical gap between dressed positions.
    """
    b_arr = np.asarray(b, dtype=float)
    if dressed.n == 0:
        return bg.a_bg if b_arr.ndim == 0 else np.full(b_arr.shape, bg.a_bg)
    if guard is None:
        guard = POLE_GUARD_REL * _typical_gap(dressed.positions_res)
    diff = b_arr[..., None] - dressed.positions_res
    if np.any(np.abs(diff) < guard):
        raise PoleProximityError(f"evaluation within {guard} of a dressed position")
    out = bg.a_bg * np.prod(1.0 - dressed.widths_eff / diff, axis=-1)
    return float(out) if b_arr.ndim == 0 else out


# ----------------------------------------------------------------------------
# CSV persistence.  Resonance tables use the header
#     index,B_bare,Delta[,delta_mu]
# with units recorded in a JSON sidecar "<file>.manifest.json" (b_max is not a
# CSV column, so the sidecar is required to reload a table).

BARE_CSV_COLUMNS = ("index", "B_bare", "Delta", "delta_mu")
DRESSED_CSV_COLUMNS = ("index", "B_res", "Delta_eff")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def save_bare_spectrum_csv(
    path,
    spectrum: BareSpectrum,
    field_unit: str = "mean_spacing_d",
    sidecar: bool = True,
    manifest_comment: str | None = None,
) -> Path:
    """Write a resonance table; returns the CSV path.

    ``manifest_comment`` adds the leading "# manifest: <relative path>" line
    used by the experiment runner; ``sidecar=False`` suppresses the per-file
    sidecar when a directory-level manifest already records the metadata.
    """
    path = Path(path)
    has_dmu = spectrum.delta_mu is not None
    cols = BARE_CSV_COLUMNS if has_dmu else BARE_CSV_COLUMNS[:3]
    lines = []
    if manifest_comment:
        lines.append(f"# manifest: {manifest_comment}")
    lines.append(",".join(cols))
    for i in range(spectrum.n):
        row = [str(i), _fmt(spectrum.positions[i]), _fmt(spectrum.widths[i])]
        if has_dmu:
            row.append(_fmt(spectrum.delta_mu[i]))
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    if sidecar:
        meta = {
            "b_max": spectrum.b_max,
            "n": spectrum.n,
            "columns": list(cols),
            "units": {
                "B_bare": field_unit,
                "Delta": field_unit,
                "delta_mu": "ebar per field unit",
            },
        }
        Path(str(path) + ".manifest.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return path


def load_bare_spectrum_csv(path, b_max: float | None = None) -> BareSpectrum:
    """Reload a resonance table written by :func:`save_bare_spectrum_csv`.

    ``b_max`` defaults to the value recorded in the sidecar manifest.
    """
    path = Path(path)
    if b_max is None:
        sidecar = Path(str(path) + ".manifest.json")
        if not sidecar.exists():
            raise InvalidSpectrumError(
                f"no sidecar manifest next to {path}; pass b_max explicitly"
            )
        b_max = float(json.loads(sidecar.read_text(encoding="utf-8"))["b_max"])
    rows = [
        line.split(",")
        for line in path.read_text(encoding="utf-8").splitlines()
        if line and not line.startswith("#")
    ]
    header, body = rows[0], rows[1:]
    has_dmu = "delta_mu" in header
    positions = np.array([float(r[1]) for r in body])
    widths = np.array([float(r[2]) for r in body])
    delta_mu = np.array([float(r[3]) for r in body]) if has_dmu else None
    return BareSpectrum(b_max, positions, widths, delta_mu)


def save_dressed_spectrum_csv(path, dressed: DressedSpectrum, manifest_comment: str | None = None) -> Path:
    """Write a dressed table with header index,B_res,Delta_eff."""
    path = Path(path)
    lines = []
    if manifest_comment:
        lines.append(f"# manifest: {manifest_comment}")
    lines.append(",".join(DRESSED_CSV_COLUMNS))
    for i in range(dressed.n):
        lines.append(
            ",".join([str(i), _fmt(dressed.positions_res[i]), _fmt(dressed.widths_eff[i])])
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
