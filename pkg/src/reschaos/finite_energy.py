"""Finite-collision-energy extension of the threshold model.

Each closed-channel state k is assumed to move linearly with field and
energy, so the field at which it crosses energy E is B_k(E) = B_k + E/dmu_k,
where dmu_k is the magnetic-moment difference of that state.  The phase shift
is then modeled as

    tan delta(E, B) = -k_wave * a_eff(E, B),
    a_eff(E, B) = a(B; bare positions translated to energy E),
    k_wave * abar = sqrt(E / ebar),

which reproduces the near-threshold phenomenology (resonance lines fanning
out in the (B, E) plane with slopes set by dmu) but omits genuine threshold
functions; outputs are labeled with this approximation.  sin^2(delta) maps
poles of a_eff to 1 and zeros to 0, and stays in [0, 1] everywhere.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import math

import numpy as np

from .errors import InvalidRangeError, MissingDeltaMuError
from .model import (
    Background,
    BareSpectrum,
    _readonly,
    scattering_length,
    scattering_length_grid,
)
from .solver import find_resonance_positions
from .stats import write_csv

MODEL_NOTE = (
    "finite-energy approximation: tan(delta) = -k*a_eff with bare crossings "
    "translated linearly in energy; valid near threshold only"
)


def energy_shifted_spectrum(spectrum: BareSpectrum, energy: float) -> tuple[BareSpectrum, np.ndarray]:
    """Spectrum whose bare positions are the fields where each bound state
    crosses the collision energy: B_k(E) = B_k + E/dmu_k; widths unchanged.

    Unequal dmu can reorder the crossings, so the output is re-sorted; the
    applied permutation is returned alongside the spectrum.
    """
    if spectrum.delta_mu is None:
        raise MissingDeltaMuError("energy shift needs delta_mu on the spectrum")
    if not (energy >= 0.0 and math.isfinite(energy)):
        raise InvalidRangeError(f"energy must be >= 0, got {energy}")
    shifted = spectrum.positions + energy / spectrum.delta_mu
    perm = np.argsort(shifted, kind="stable")
    return (
        BareSpectrum(
            spectrum.b_max,
            shifted[perm],
            spectrum.widths[perm],
            spectrum.delta_mu[perm],
        ),
        perm,
    )


def _sin2_from_ka(ka):
    """sin^2(delta) = (ka)^2 / (1 + (ka)^2), branch-stable for huge |ka|."""
    ka = np.asarray(ka, dtype=float)
    ka2 = ka * ka
    with np.errstate(divide="ignore", invalid="ignore"):
        small = ka2 / (1.0 + ka2)
        large = 1.0 / (1.0 + 1.0 / ka2)
        out = np.where(ka2 <= 1.0, small, large)
    return float(out) if out.ndim == 0 else out


def phase_shift(energy: float, b: float, spectrum: BareSpectrum, bg: Background) -> float:
    """delta(E, B) = -arctan(k a_eff) in radians; raises PoleProximityError on
    pole-adjacent fields of the shifted spectrum."""
    shifted, _ = energy_shifted_spectrum(spectrum, energy)
    a_eff = scattering_length(b, shifted, bg)
    ka = math.sqrt(energy / bg.ebar) * (a_eff / bg.abar)
    return -math.atan(ka)


def sin2_delta(energy: float, b: float, spectrum: BareSpectrum, bg: Background) -> float:
    shifted, _ = energy_shifted_spectrum(spectrum, energy)
    a_eff = scattering_length(b, shifted, bg)
    ka = math.sqrt(energy / bg.ebar) * (a_eff / bg.abar)
    return _sin2_from_ka(ka)


@dataclass(frozen=True, eq=False)
class PhaseGridSpec:
    """Cartesian (E, B) grid specification for the sin^2(delta) landscape."""

    e_values: np.ndarray
    b_values: np.ndarray
    spectrum: BareSpectrum
    bg: Background

    def __post_init__(self):
        e = _readonly(self.e_values)
        b = _readonly(self.b_values)
        if e.ndim != 1 or e.size == 0 or b.ndim != 1 or b.size == 0:
            raise InvalidRangeError("e_values and b_values must be non-empty 1-D arrays")
        if not np.all(np.isfinite(e)) or not np.all(np.isfinite(b)):
            raise InvalidRangeError("grid axes must be finite")
        if np.any(e < 0.0):
            raise InvalidRangeError("energies must be >= 0")
        if self.spectrum.delta_mu is None:
            raise MissingDeltaMuError("phase grids need delta_mu on the spectrum")
        object.__setattr__(self, "e_values", e)
        object.__setattr__(self, "b_values", b)


@dataclass(frozen=True, eq=False)
class PhaseGrid:
    """sin^2(delta) on a (E, B) grid: rows are energies, columns fields.

    Pole-proximate cells carry NaN in ``values`` and True in ``mask``; they
    are physical (the phase sweeps through resonance there), not errors.
    """

    e_values: np.ndarray
    b_values: np.ndarray
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "e_values", _readonly(self.e_values))
        object.__setattr__(self, "b_values", _readonly(self.b_values))
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        expected = (self.e_values.size, self.b_values.size)
        if values.shape != expected or mask.shape != expected:
            raise InvalidRangeError(f"grid arrays must have shape {expected}")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)


def _phase_row(task):
    energy, b_values, spectrum, bg = task
    shifted, _ = energy_shifted_spectrum(spectrum, energy)
    a_vals, mask = scattering_length_grid(b_values, shifted, bg)
    ka = math.sqrt(energy / bg.ebar) * (a_vals / bg.abar)
    return _sin2_from_ka(ka), mask


def sin2_delta_grid(spec: PhaseGridSpec, workers: int = 1) -> PhaseGrid:
    """Evaluate sin^2(delta) on the Cartesian product of the grid axes.

    Rows are independent pure computations, so any worker partition yields an
    identical matrix; results are assembled in row order.
    """
    tasks = [(float(e), spec.b_values, spec.spectrum, spec.bg) for e in spec.e_values]
    if workers <= 1:
        rows = [_phase_row(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_phase_row, tasks))
    values = np.vstack([r[0] for r in rows])
    mask = np.vstack([r[1] for r in rows])
    return PhaseGrid(spec.e_values, spec.b_values, values, mask)


def locate_ridges(energy: float, spectrum: BareSpectrum, bg: Background) -> np.ndarray:
    """Fields of the sin^2(delta) = 1 ridges at fixed energy: the poles of
    a_eff(E, .), i.e. the dressed positions of the energy-shifted spectrum."""
    shifted, _ = energy_shifted_spectrum(spectrum, energy)
    return find_resonance_positions(shifted, bg)


def save_phase_grid_csv(path, grid: PhaseGrid, manifest_comment: str | None = None) -> Path:
    """Long-form export with columns E,B,sin2_delta,masked."""
    rows = (
        (e, b, grid.values[i, j], bool(grid.mask[i, j]))
        for i, e in enumerate(grid.e_values)
        for j, b in enumerate(grid.b_values)
    )
    return write_csv(path, ("E", "B", "sin2_delta", "masked"), rows, manifest_comment)


def save_phase_grid_binary(path, grid: PhaseGrid) -> Path:
    """Compact single-file export: one JSON header line, then the row-major
    little-endian float64 matrix, then the uint8 mask; byte offsets in the
    header are relative to the end of the header line."""
    path = Path(path)
    matrix = np.ascontiguousarray(grid.values, dtype="<f8")
    mask = np.ascontiguousarray(grid.mask.astype("u1"))
    header = {
        "format": "reschaos-phase-grid",
        "version": 1,
        "rows": int(grid.e_values.size),
        "cols": int(grid.b_values.size),
        "dtype": "<f8",
        "mask_dtype": "u1",
        "e_values": [float(x) for x in grid.e_values],
        "b_values": [float(x) for x in grid.b_values],
        "matrix_offset": 0,
        "mask_offset": matrix.nbytes,
        "offsets_relative_to": "end of header line",
        "model_note": MODEL_NOTE,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(matrix.tobytes())
        fh.write(mask.tobytes())
    return path


def load_phase_grid_binary(path) -> PhaseGrid:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        payload = fh.read()
    rows, cols = header["rows"], header["cols"]
    mat_off, mask_off = header["matrix_offset"], header["mask_offset"]
    values = np.frombuffer(
        payload, dtype=header["dtype"], count=rows * cols, offset=mat_off
    ).reshape(rows, cols)
    mask = np.frombuffer(
        payload, dtype=header["mask_dtype"], count=rows * cols, offset=mask_off
    ).reshape(rows, cols).astype(bool)
    return PhaseGrid(
        np.array(header["e_values"]), np.array(header["b_values"]), values, mask
    )
