"""Declarative experiment runner wiring ensembles -> solver -> statistics.

Every experiment is described by a JSON config with a versioned schema
(unknown keys are rejected: silent misconfiguration would poison statistics)
and writes plot-ready CSV files plus a manifest that records the full config,
the master seed and the generator identity, so each output is reproducible
from its manifest alone.  Timestamps live only in the manifest; all other
output bytes are a pure function of config + seed.
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .ensembles import (
    GENERATOR_ID,
    SEED_SCHEME,
    STREAM_DELTA_MU,
    EnsembleConfig,
    WidthRule,
    derived_rng,
    generate_realization,
    sample_delta_mu,
)
from .errors import (
    ConfigError,
    EmptyTraceError,
    NumericalFailureError,
    ReschaosError,
)
from .finite_energy import (
    MODEL_NOTE,
    PhaseGrid,
    PhaseGridSpec,
    locate_ridges,
    save_phase_grid_binary,
    save_phase_grid_csv,
    sin2_delta_grid,
)
from .model import (
    Background,
    BareSpectrum,
    DressedSpectrum,
    save_dressed_spectrum_csv,
    scattering_length_grid,
)
from .solver import dress_spectrum, find_resonance_positions
from .stats import (
    BrodyFit,
    NumberVarianceCurve,
    fit_brody,
    mean_eta_over_realizations,
    number_variance,
    reference_sigma2,
    unfold_positions,
    unfold_spacings,
    write_csv,
    write_eta_csv,
    write_histogram_csv,
)

SCHEMA_VERSION = 1
EXPERIMENT_KINDS = ("brody_sweep", "a_scan", "spacing_hist", "number_variance", "phase_grid")

# Width sweeps bracket the near-Poisson regime (well below the mean spacing)
# and the strongly overlapping one (well above it).
DEFAULT_BRODY_WIDTHS = (0.1, 0.2, 0.5, 1.0, 1.5, 2.0, 2.5, 5.0, 10.0)
DEFAULT_NV_WIDTHS = (0.2, 0.5, 1.0, 1.5, 2.5)
DEFAULT_NV_LENGTHS = tuple(float(x) for x in np.linspace(0.5, 10.0, 20))

MAX_FAILURE_FRACTION = 0.1


def _check_keys(data: dict, allowed, where: str):
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")


@dataclass(frozen=True)
class BrodySweepParams:
    widths: tuple[float, ...] = DEFAULT_BRODY_WIDTHS

    @classmethod
    def from_dict(cls, data: dict) -> "BrodySweepParams":
        _check_keys(data, {"widths"}, "params")
        widths = tuple(float(w) for w in data.get("widths", DEFAULT_BRODY_WIDTHS))
        if not widths or any(w <= 0 for w in widths):
            raise ConfigError("widths must be a non-empty list of positive numbers")
        return cls(widths=widths)

    def to_dict(self) -> dict:
        return {"widths": list(self.widths)}


@dataclass(frozen=True)
class AScanParams:
    points_per_spacing: int = 40
    b_lo: float | None = None
    b_hi: float | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "AScanParams":
        _check_keys(data, {"points_per_spacing", "b_lo", "b_hi"}, "params")
        pps = int(data.get("points_per_spacing", 40))
        if pps < 1:
            raise ConfigError("points_per_spacing must be >= 1")
        return cls(
            points_per_spacing=pps,
            b_lo=None if data.get("b_lo") is None else float(data["b_lo"]),
            b_hi=None if data.get("b_hi") is None else float(data["b_hi"]),
        )

    def to_dict(self) -> dict:
        out: dict = {"points_per_spacing": self.points_per_spacing}
        if self.b_lo is not None:
            out["b_lo"] = self.b_lo
        if self.b_hi is not None:
            out["b_hi"] = self.b_hi
        return out


@dataclass(frozen=True)
class SpacingHistParams:
    bins: int = 30
    s_max: float = 4.0

    @classmethod
    def from_dict(cls, data: dict) -> "SpacingHistParams":
        _check_keys(data, {"bins", "s_max"}, "params")
        bins = int(data.get("bins", 30))
        s_max = float(data.get("s_max", 4.0))
        if bins < 1 or s_max <= 0:
            raise ConfigError("bins must be >= 1 and s_max > 0")
        return cls(bins=bins, s_max=s_max)

    def to_dict(self) -> dict:
        return {"bins": self.bins, "s_max": self.s_max}


@dataclass(frozen=True)
class NumberVarianceParams:
    widths: tuple[float, ...] = DEFAULT_NV_WIDTHS
    lengths: tuple[float, ...] = DEFAULT_NV_LENGTHS
    stride: float = 0.25

    @classmethod
    def from_dict(cls, data: dict) -> "NumberVarianceParams":
        _check_keys(data, {"widths", "lengths", "stride"}, "params")
        widths = tuple(float(w) for w in data.get("widths", DEFAULT_NV_WIDTHS))
        lengths = tuple(float(x) for x in data.get("lengths", DEFAULT_NV_LENGTHS))
        stride = float(data.get("stride", 0.25))
        if not widths or any(w <= 0 for w in widths):
            raise ConfigError("widths must be positive")
        if not lengths or any(x <= 0 for x in lengths) or list(lengths) != sorted(lengths):
            raise ConfigError("lengths must be positive and increasing")
        if stride <= 0:
            raise ConfigError("stride must be positive")
        return cls(widths=widths, lengths=lengths, stride=stride)

    def to_dict(self) -> dict:
        return {"widths": list(self.widths), "lengths": list(self.lengths), "stride": self.stride}


@dataclass(frozen=True)
class PhaseGridParams:
    e_max: float = 0.5
    e_points: int = 64
    b_points: int = 512
    b_lo: float | None = None
    b_hi: float | None = None
    delta_mu_lo: float = 0.0
    delta_mu_hi: float = 0.5

    @classmethod
    def from_dict(cls, data: dict) -> "PhaseGridParams":
        _check_keys(
            data,
            {"e_max", "e_points", "b_points", "b_lo", "b_hi", "delta_mu_lo", "delta_mu_hi"},
            "params",
        )
        out = cls(
            e_max=float(data.get("e_max", 0.5)),
            e_points=int(data.get("e_points", 64)),
            b_points=int(data.get("b_points", 512)),
            b_lo=None if data.get("b_lo") is None else float(data["b_lo"]),
            b_hi=None if data.get("b_hi") is None else float(data["b_hi"]),
            delta_mu_lo=float(data.get("delta_mu_lo", 0.0)),
            delta_mu_hi=float(data.get("delta_mu_hi", 0.5)),
        )
        if out.e_max <= 0 or out.e_points < 2 or out.b_points < 2:
            raise ConfigError("phase grid needs e_max > 0 and at least 2 points per axis")
        if not 0.0 <= out.delta_mu_lo < out.delta_mu_hi:
            raise ConfigError("need 0 <= delta_mu_lo < delta_mu_hi")
        return out

    def to_dict(self) -> dict:
        out: dict = {
            "e_max": self.e_max,
            "e_points": self.e_points,
            "b_points": self.b_points,
            "delta_mu_lo": self.delta_mu_lo,
            "delta_mu_hi": self.delta_mu_hi,
        }
        if self.b_lo is not None:
            out["b_lo"] = self.b_lo
        if self.b_hi is not None:
            out["b_hi"] = self.b_hi
        return out


_PARAM_TYPES = {
    "brody_sweep": BrodySweepParams,
    "a_scan": AScanParams,
    "spacing_hist": SpacingHistParams,
    "number_variance": NumberVarianceParams,
    "phase_grid": PhaseGridParams,
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    ensemble: EnsembleConfig
    background: Background
    params: object
    out_dir: str | None = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"kind must be one of {EXPERIMENT_KINDS}, got {self.kind!r}")
        expected = _PARAM_TYPES[self.kind]
        if not isinstance(self.params, expected):
            raise ConfigError(f"params for {self.kind} must be {expected.__name__}")

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "ensemble": self.ensemble.to_dict(),
            "background": self.background.to_dict(),
            "params": self.params.to_dict(),
        }
        if self.out_dir is not None:
            out["out_dir"] = self.out_dir
        return out


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(
        data,
        {"schema_version", "kind", "ensemble", "background", "params", "out_dir"},
        "config",
    )
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version must be {SCHEMA_VERSION}, got {data.get('schema_version')!r}"
        )
    kind = data.get("kind")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"kind must be one of {EXPERIMENT_KINDS}, got {kind!r}")
    if "ensemble" not in data:
        raise ConfigError("config needs an 'ensemble' block")
    bg_data = data.get("background", {})
    if not isinstance(bg_data, dict):
        raise ConfigError("background must be an object")
    _check_keys(bg_data, {"abar", "r", "ebar"}, "background")
    try:
        background = Background(**bg_data)
    except ReschaosError as exc:
        raise ConfigError(f"bad background: {exc}") from exc
    params_data = data.get("params", {})
    if not isinstance(params_data, dict):
        raise ConfigError("params must be an object")
    params = _PARAM_TYPES[kind].from_dict(params_data)
    out_dir = data.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("out_dir must be a string")
    return ExperimentConfig(
        kind=kind,
        ensemble=EnsembleConfig.from_dict(data["ensemble"]),
        background=background,
        params=params,
        out_dir=out_dir,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return parse_config(raw)


def save_config(path, config: ExperimentConfig) -> Path:
    path = Path(path)
    path.write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path


def with_master_seed(config: ExperimentConfig, master_seed: int) -> ExperimentConfig:
    return dataclasses.replace(
        config, ensemble=dataclasses.replace(config.ensemble, master_seed=master_seed)
    )


def _write_manifest(out_dir: Path, config: ExperimentConfig, files, extra: dict | None = None) -> Path:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "config": config.to_dict(),
        "generator": {
            "id": GENERATOR_ID,
            "numpy_version": np.__version__,
            "seed_scheme": SEED_SCHEME,
        },
        "files": sorted(str(f) for f in files),
    }
    if extra:
        payload.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _map_tasks(fn, tasks, workers: int):
    """Order-preserving map; results are identical for any worker count
    because every task derives its randomness from its own index."""
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def observed_positions(positions, b_max: float) -> np.ndarray:
    """Resonances inside the scanned field window [0, b_max].

    Strong coupling pushes the topmost pole far above the bare span; only
    resonances inside the observation window enter spacing statistics, which
    also keeps the unfolding normalization meaningful.
    """
    positions = np.asarray(positions, dtype=float)
    return positions[(positions >= 0.0) & (positions <= b_max)]


def _fit_realization(task):
    """One realization: generate, dress, window, unfold, fit.  Returns
    (index, spacings, fit, error_message)."""
    ensemble, background, index = task
    try:
        spectrum = generate_realization(ensemble, index)
        positions = observed_positions(
            find_resonance_positions(spectrum, background), ensemble.b_max
        )
        sample = unfold_spacings(positions, source_meta=f"realization {index}")
        fit = fit_brody(sample)
        return (index, sample.spacings, fit, None)
    except Exception as exc:  # per-realization failures are aggregated
        return (index, None, None, f"{type(exc).__name__}: {exc}")


def _collect_fits(ensemble, background, workers):
    tasks = [(ensemble, background, k) for k in range(ensemble.realization_count)]
    results = _map_tasks(_fit_realization, tasks, workers)
    fits: list[BrodyFit | None] = [r[2] for r in results]
    spacings = [r[1] for r in results]
    failures = [
        (r[0], r[3] if r[3] else "fit did not converge")
        for r in results
        if r[3] is not None or not r[2].converged
    ]
    return fits, spacings, failures


@dataclass(frozen=True)
class BrodySweepRow:
    width: float
    mean_eta: float
    std_eta: float
    n_ok: int
    n_failed: int


@dataclass(frozen=True, eq=False)
class BrodySweepResult:
    rows: tuple[BrodySweepRow, ...]
    fits: dict  # width -> list[BrodyFit] (converged only)
    failures: dict  # width -> list[(index, message)]


def run_brody_sweep(config: ExperimentConfig, out_dir=None, workers: int = 1) -> BrodySweepResult:
    """Fitted Brody parameter versus resonance width.

    For each width in the sweep the ensemble's width rule is replaced by the
    equal-width rule at that value; each realization is generated, dressed,
    unfolded and fitted, and the per-width mean and sample std of eta over
    realizations are reported.  The sweep fails only if more than 10% of the
    realizations of any width fail.
    """
    if config.kind != "brody_sweep":
        raise ConfigError(f"expected a brody_sweep config, got {config.kind!r}")
    rows = []
    fits_by_width = {}
    failures_by_width = {}
    for width in config.params.widths:
        ensemble = dataclasses.replace(config.ensemble, width_rule=WidthRule.equal(width))
        fits, _, failures = _collect_fits(ensemble, config.background, workers)
        n_total = ensemble.realization_count
        if len(failures) > MAX_FAILURE_FRACTION * n_total:
            raise NumericalFailureError(
                f"width {width}: {len(failures)}/{n_total} realizations failed: "
                f"{failures[:3]}"
            )
        ok_fits = [f for f in fits if f is not None and f.converged]
        mean_eta, std_eta = mean_eta_over_realizations(ok_fits)
        rows.append(
            BrodySweepRow(
                width=width,
                mean_eta=mean_eta,
                std_eta=std_eta,
                n_ok=len(ok_fits),
                n_failed=len(failures),
            )
        )
        fits_by_width[width] = ok_fits
        failures_by_width[width] = failures
    result = BrodySweepResult(tuple(rows), fits_by_width, failures_by_width)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = [
            write_csv(
                out_dir / "brody_sweep.csv",
                ("width", "mean_eta", "std_eta", "n_ok", "n_failed"),
                ((r.width, r.mean_eta, r.std_eta, r.n_ok, r.n_failed) for r in rows),
                manifest_comment="manifest.json",
            )
        ]
        for width, fits in fits_by_width.items():
            files.append(
                write_eta_csv(
                    out_dir / f"etas_w{width:g}.csv", fits, manifest_comment="manifest.json"
                )
            )
        _write_manifest(
            out_dir, config, [f.name for f in files],
            extra={"bare_kind": config.ensemble.kind},
        )
    return result


def median_scattering_length(values, mask=None, absolute: bool = True) -> float:
    """Robust typical scattering length over a scan.

    The plain mean diverges logarithmically with grid refinement near poles,
    so a robust location measure is used instead.  ``absolute=True`` (default)
    gives the median of |a|, the typical magnitude; ``absolute=False`` gives
    the signed median, the typical background level, which can be the more
    telling diagnostic when positive and negative excursions balance."""
    vals = np.asarray(values, dtype=float)
    if mask is not None:
        vals = vals[~np.asarray(mask, dtype=bool)]
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        raise EmptyTraceError("no unmasked finite points in the trace")
    if absolute:
        vals = np.abs(vals)
    return float(np.median(vals))


@dataclass(frozen=True, eq=False)
class AScanResult:
    b_values: np.ndarray
    a_values: np.ndarray
    mask: np.ndarray
    dressed: DressedSpectrum
    median_abs_a: float


def run_a_scan(
    config: ExperimentConfig, out_dir=None, spectrum: BareSpectrum | None = None
) -> AScanResult:
    """Scattering length on a uniform field grid with a pole mask, plus the
    dressed positions/effective widths and the median-|a| diagnostic.

    ``spectrum`` overrides the generated realization 0; this is how trivial
    spectra (including N = 0) are scanned without an ensemble.
    """
    if config.kind != "a_scan":
        raise ConfigError(f"expected an a_scan config, got {config.kind!r}")
    if spectrum is None:
        spectrum = generate_realization(config.ensemble, 0)
    params = config.params
    d = spectrum.mean_spacing if spectrum.n else spectrum.b_max
    b_lo = 0.0 if params.b_lo is None else params.b_lo
    b_hi = spectrum.b_max if params.b_hi is None else params.b_hi
    n_points = max(int(round(params.points_per_spacing * (b_hi - b_lo) / d)) + 1, 2)
    grid = np.linspace(b_lo, b_hi, n_points)
    a_values, mask = scattering_length_grid(grid, spectrum, config.background)
    if spectrum.n:
        dressed = dress_spectrum(spectrum, config.background)
    else:
        dressed = DressedSpectrum(np.empty(0), np.empty(0))
    median_abs = median_scattering_length(a_values, mask)
    result = AScanResult(grid, a_values, mask, dressed, median_abs)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = [
            write_csv(
                out_dir / "scan_a.csv",
                ("B", "a", "masked"),
                zip(grid, a_values, mask),
                manifest_comment="manifest.json",
            ),
            save_dressed_spectrum_csv(
                out_dir / "dressed.csv", dressed, manifest_comment="manifest.json"
            ),
        ]
        _write_manifest(
            out_dir,
            config,
            [f.name for f in files],
            extra={
                "median_abs_a": median_abs,
                "pole_count": dressed.n,
                "masked_points": int(mask.sum()),
            },
        )
    return result


@dataclass(frozen=True, eq=False)
class SpacingHistResult:
    fits: tuple
    pooled_spacings: np.ndarray
    mean_eta: float
    std_eta: float


def run_spacing_hist(config: ExperimentConfig, out_dir=None, workers: int = 1) -> SpacingHistResult:
    """Per-realization Brody fits plus a pooled spacing histogram."""
    if config.kind != "spacing_hist":
        raise ConfigError(f"expected a spacing_hist config, got {config.kind!r}")
    fits, spacings, failures = _collect_fits(config.ensemble, config.background, workers)
    n_total = config.ensemble.realization_count
    if len(failures) > MAX_FAILURE_FRACTION * n_total:
        raise NumericalFailureError(f"{len(failures)}/{n_total} realizations failed")
    ok_fits = [f for f in fits if f is not None and f.converged]
    pooled = np.concatenate([s for s in spacings if s is not None])
    mean_eta, std_eta = mean_eta_over_realizations(ok_fits)
    result = SpacingHistResult(tuple(ok_fits), pooled, mean_eta, std_eta)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = [
            write_eta_csv(out_dir / "etas.csv", ok_fits, manifest_comment="manifest.json"),
            write_histogram_csv(
                out_dir / "spacing_histogram.csv",
                pooled,
                bins=config.params.bins,
                s_max=config.params.s_max,
                manifest_comment="manifest.json",
            ),
        ]
        _write_manifest(
            out_dir,
            config,
            [f.name for f in files],
            extra={"mean_eta": mean_eta, "std_eta": std_eta, "n_failed": len(failures)},
        )
    return result


def _nv_realization(task):
    ensemble, background, lengths, stride, index = task
    try:
        spectrum = generate_realization(ensemble, index)
        positions = observed_positions(
            find_resonance_positions(spectrum, background), ensemble.b_max
        )
        curve = number_variance(unfold_positions(positions), lengths, stride)
        return (index, curve.sigma2, curve.window_count, None)
    except Exception as exc:
        return (index, None, None, f"{type(exc).__name__}: {exc}")


@dataclass(frozen=True, eq=False)
class NumberVarianceResult:
    lengths: np.ndarray
    curves: dict  # width -> mean sigma2 over realizations
    per_realization: dict  # width -> (R, len(lengths)) matrix
    references: dict  # kind -> sigma2 on the same lengths


def run_number_variance(config: ExperimentConfig, out_dir=None, workers: int = 1) -> NumberVarianceResult:
    """Sigma^2(L) per resonance width, averaged over realizations, with the
    Poisson, semi-Poisson and GOE reference curves for overlay."""
    if config.kind != "number_variance":
        raise ConfigError(f"expected a number_variance config, got {config.kind!r}")
    params = config.params
    lengths = np.asarray(params.lengths)
    curves = {}
    per_real = {}
    window_totals = {}
    for width in params.widths:
        ensemble = dataclasses.replace(config.ensemble, width_rule=WidthRule.equal(width))
        tasks = [
            (ensemble, config.background, params.lengths, params.stride, k)
            for k in range(ensemble.realization_count)
        ]
        results = _map_tasks(_nv_realization, tasks, workers)
        failures = [(r[0], r[3]) for r in results if r[3] is not None]
        if len(failures) > MAX_FAILURE_FRACTION * ensemble.realization_count:
            raise NumericalFailureError(
                f"width {width}: {len(failures)} realizations failed: {failures[:3]}"
            )
        matrix = np.vstack([r[1] for r in results if r[1] is not None])
        counts = np.vstack([r[2] for r in results if r[2] is not None])
        curves[width] = matrix.mean(axis=0)
        per_real[width] = matrix
        window_totals[width] = counts.sum(axis=0)
    references = {kind: reference_sigma2(kind, lengths) for kind in ("poisson", "semi_poisson", "goe")}
    result = NumberVarianceResult(lengths, curves, per_real, references)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = []
        for width, sigma2 in curves.items():
            files.append(
                write_csv(
                    out_dir / f"sigma2_w{width:g}.csv",
                    ("L", "sigma2", "window_count"),
                    zip(lengths, sigma2, window_totals[width]),
                    manifest_comment="manifest.json",
                )
            )
        files.append(
            write_csv(
                out_dir / "sigma2_references.csv",
                ("L", "poisson", "semi_poisson", "goe"),
                zip(lengths, references["poisson"], references["semi_poisson"], references["goe"]),
                manifest_comment="manifest.json",
            )
        )
        _write_manifest(out_dir, config, [f.name for f in files])
    return result


@dataclass(frozen=True, eq=False)
class PhaseGridResult:
    grid: PhaseGrid
    spectrum: BareSpectrum
    ridge_positions_e0: np.ndarray


def run_phase_grid(
    config: ExperimentConfig, out_dir=None, workers: int = 1, fmt: str = "csv"
) -> PhaseGridResult:
    """sin^2(delta) landscape for realization 0 of the ensemble, with
    magnetic-moment differences sampled from the configured range.

    delta_mu values are drawn in ebar per mean spacing d and converted to
    per-field-unit values; the manifest records the convention and the
    finite-energy approximation label.
    """
    if config.kind != "phase_grid":
        raise ConfigError(f"expected a phase_grid config, got {config.kind!r}")
    params = config.params
    ensemble = config.ensemble
    base = generate_realization(ensemble, 0)
    d = base.mean_spacing
    dmu_per_d = sample_delta_mu(
        base.n,
        params.delta_mu_lo,
        params.delta_mu_hi,
        seed=derived_rng(ensemble.master_seed, STREAM_DELTA_MU, 0),
    )
    spectrum = base.with_delta_mu(dmu_per_d / d)
    b_lo = 0.0 if params.b_lo is None else params.b_lo
    b_hi = base.b_max if params.b_hi is None else params.b_hi
    spec = PhaseGridSpec(
        e_values=np.linspace(0.0, params.e_max, params.e_points),
        b_values=np.linspace(b_lo, b_hi, params.b_points),
        spectrum=spectrum,
        bg=config.background,
    )
    grid = sin2_delta_grid(spec, workers=workers)
    ridges = locate_ridges(0.0, spectrum, config.background)
    result = PhaseGridResult(grid, spectrum, ridges)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = []
        if fmt == "binary":
            files.append(save_phase_grid_binary(out_dir / "phase_grid.bin", grid))
        else:
            files.append(
                save_phase_grid_csv(
                    out_dir / "phase_grid.csv", grid, manifest_comment="manifest.json"
                )
            )
        _write_manifest(
            out_dir,
            config,
            [f.name for f in files],
            extra={
                "model_note": MODEL_NOTE,
                "delta_mu_units": "sampled in ebar per mean spacing d, stored per field unit",
                "ridge_count_e0": int(ridges.size),
                "masked_cells": int(grid.mask.sum()),
            },
        )
    return result


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True, eq=False)
class ValidationReport:
    checks: tuple[ValidationCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def run_validation(config: ExperimentConfig, realizations: int = 2) -> ValidationReport:
    """Invariant suite on the configured ensemble: solver residuals,
    interlacing, the width sum rule, sum/product equivalence, unfolding
    normalization, determinism of regeneration and config round-tripping."""
    from .model import product_form_value, scattering_length, secular_value

    checks = []
    ensemble = config.ensemble
    bg = config.background
    count = min(realizations, ensemble.realization_count)
    rng = np.random.default_rng(ensemble.master_seed)
    for index in range(count):
        spectrum = generate_realization(ensemble, index)
        shifts = spectrum.shifts(bg)
        prefix = f"realization {index}"
        positions = find_resonance_positions(spectrum, bg)
        residual = max(
            abs(secular_value(b, shifts, spectrum.positions)) for b in positions
        )
        checks.append(
            ValidationCheck(
                f"{prefix}: solver residuals", residual < 1e-9, f"max |F(root)| = {residual:.3e}"
            )
        )
        interlaced = bool(
            np.all(positions > spectrum.positions)
            and np.all(positions[:-1] < spectrum.positions[1:])
        ) if np.all(shifts > 0) else True
        checks.append(ValidationCheck(f"{prefix}: interlacing", interlaced, ""))
        dressed = dress_spectrum(spectrum, bg)
        sum_bare = float(np.sum(spectrum.widths))
        sum_eff = float(np.sum(dressed.widths_eff))
        rel = abs(sum_eff - sum_bare) / max(abs(sum_bare), 1e-300)
        checks.append(
            ValidationCheck(
                f"{prefix}: width sum rule", rel < 1e-9, f"relative error {rel:.3e}"
            )
        )
        crit = np.sort(
            np.concatenate([spectrum.positions, dressed.positions_res, dressed.zeros])
        )
        probes = []
        attempts = 0
        while len(probes) < 8 and attempts < 1000:
            attempts += 1
            b = rng.uniform(spectrum.positions[0] - 1.0, spectrum.positions[-1] + 1.0)
            if np.min(np.abs(b - crit)) > 0.05 * spectrum.mean_spacing:
                probes.append(b)
        worst = 0.0
        for b in probes:
            a_sum = scattering_length(b, spectrum, bg)
            a_prod = product_form_value(b, dressed, bg)
            worst = max(worst, abs(a_sum - a_prod) / max(abs(a_sum), abs(a_prod), 1e-300))
        checks.append(
            ValidationCheck(
                f"{prefix}: sum/product equivalence", worst < 1e-8, f"max rel diff {worst:.3e}"
            )
        )
        sample = unfold_spacings(positions)
        mean_err = abs(float(sample.spacings.mean()) - 1.0)
        checks.append(
            ValidationCheck(
                f"{prefix}: unfolded mean", mean_err < 1e-12, f"|mean - 1| = {mean_err:.3e}"
            )
        )
        again = generate_realization(ensemble, index)
        same = bool(
            np.array_equal(spectrum.positions, again.positions)
            and np.array_equal(spectrum.widths, again.widths)
        )
        checks.append(ValidationCheck(f"{prefix}: deterministic regeneration", same, ""))
    roundtrip = parse_config(json.loads(json.dumps(config.to_dict()))) == config
    checks.append(ValidationCheck("config round-trip", roundtrip, ""))
    return ValidationReport(tuple(checks))
