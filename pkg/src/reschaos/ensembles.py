"""Seeded generators for bare resonance spectra and auxiliary random inputs.

Reproducibility contract: every random draw comes from numpy's PCG64 seeded
with ``SeedSequence([master_seed, stream, realization, attempt])``, where the
stream tags below separate positions, widths and magnetic-moment draws.  A
realization is therefore reproducible in isolation, identical results are
obtained regardless of how realizations are scheduled across workers, and the
generator identity is recorded in every manifest this package writes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidRangeError, LengthMismatchError, ReschaosError
from .model import BareSpectrum, save_bare_spectrum_csv

GENERATOR_ID = "numpy.random.PCG64"
SEED_SCHEME = "SeedSequence([master_seed, stream, realization, attempt])"
STREAM_POSITIONS = 1
STREAM_WIDTHS = 2
STREAM_DELTA_MU = 3

POSITION_KINDS = ("poisson", "wigner_dyson", "semi_poisson")
WIDTH_RULE_KINDS = ("equal", "explicit", "log_uniform")

# Magnetic-moment differences are floored here (in ebar per field unit): a
# literal zero makes the energy-shifted position B + E/delta_mu unusable.
DELTA_MU_FLOOR = 1e-6


def derived_seed(master_seed: int, stream: int, index: int, attempt: int = 0) -> list[int]:
    """Entropy list for the documented per-realization seeding scheme."""
    return [int(master_seed), int(stream), int(index), int(attempt)]


def derived_rng(master_seed: int, stream: int, index: int, attempt: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(derived_seed(master_seed, stream, index, attempt))
    return np.random.Generator(np.random.PCG64(seq))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def sample_poisson_positions(n: int, b_max: float, seed) -> np.ndarray:
    """n iid uniform positions on [0, b_max], sorted.

    Uniform order statistics put exactly n resonances in the window, so the
    density n/b_max is matched exactly; bulk nearest-neighbor spacings are
    asymptotically exponential with mean b_max/n.
    """
    if n < 1:
        raise InvalidRangeError(f"n must be >= 1, got {n}")
    rng = _as_rng(seed)
    for _ in range(16):  # ties are a probability-zero event; guard anyway
        pos = np.sort(rng.uniform(0.0, b_max, size=n))
        if n == 1 or np.all(np.diff(pos) > 0.0):
            return pos
    raise ReschaosError("could not draw tie-free positions")


def wigner_dyson_spacing(u) -> np.ndarray:
    """Inverse CDF of the unit-mean Wigner-Dyson spacing law,
    s = 2 sqrt(ln(1/u) / pi) for u in (0, 1]."""
    return 2.0 * np.sqrt(np.log(1.0 / np.asarray(u, dtype=float)) / math.pi)


def _positions_from_spacings(spacings: np.ndarray, n: int, b_max: float) -> np.ndarray:
    """Cumulative positions rescaled so the mean nearest-neighbor spacing is
    exactly d = b_max/n, centered with half-spacing margins inside [0, b_max]."""
    x = np.concatenate([[0.0], np.cumsum(spacings)])
    d = b_max / n
    scale = (n - 1) * d / x[-1]
    return 0.5 * d + x * scale


def sample_wd_positions(n: int, b_max: float, seed) -> np.ndarray:
    """n positions whose n-1 spacings are iid Wigner-Dyson draws."""
    if n < 2:
        raise InvalidRangeError(f"n must be >= 2 for Wigner-Dyson spacings, got {n}")
    rng = _as_rng(seed)
    for _ in range(16):
        u = 1.0 - rng.random(size=n - 1)  # u in (0, 1]: keeps log(1/u) finite
        s = wigner_dyson_spacing(u)
        if np.all(s > 0.0) and np.all(np.isfinite(s)):
            return _positions_from_spacings(s, n, b_max)
    raise ReschaosError("could not draw tie-free Wigner-Dyson spacings")


def sample_semi_poisson_spacings(count: int, seed) -> np.ndarray:
    """iid semi-Poisson spacings: sums of two exponentials of rate 2
    (Gamma shape 2, scale 1/2), unit mean and variance 1/2."""
    if count < 1:
        raise InvalidRangeError(f"count must be >= 1, got {count}")
    rng = _as_rng(seed)
    return rng.gamma(2.0, 0.5, size=count)


def sample_semi_poisson_positions(n: int, b_max: float, seed) -> np.ndarray:
    """n positions whose n-1 spacings are iid semi-Poisson draws."""
    if n < 2:
        raise InvalidRangeError(f"n must be >= 2 for semi-Poisson spacings, got {n}")
    rng = _as_rng(seed)
    for _ in range(16):
        s = rng.gamma(2.0, 0.5, size=n - 1)
        if np.all(s > 0.0):
            return _positions_from_spacings(s, n, b_max)
    raise ReschaosError("could not draw tie-free semi-Poisson spacings")


def sample_delta_mu(n: int, lo: float, hi: float, seed) -> np.ndarray:
    """Uniform magnetic-moment differences on [lo, hi] (ebar per field unit),
    floored at DELTA_MU_FLOOR so downstream energy shifts stay finite."""
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo < 0.0 or not lo < hi:
        raise InvalidRangeError(f"need 0 <= lo < hi, got lo={lo}, hi={hi}")
    if n < 1:
        raise InvalidRangeError(f"n must be >= 1, got {n}")
    rng = _as_rng(seed)
    return np.maximum(rng.uniform(lo, hi, size=n), DELTA_MU_FLOOR)


@dataclass(frozen=True)
class WidthRule:
    """How local widths are assigned; all parameters are in units of the
    ensemble mean spacing d = b_max/n."""

    kind: str
    delta: float | None = None
    values: tuple[float, ...] | None = None
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if self.kind not in WIDTH_RULE_KINDS:
            raise InvalidRangeError(f"unknown width rule {self.kind!r}")
        if self.kind == "equal":
            if self.delta is None or not (self.delta > 0 and math.isfinite(self.delta)):
                raise InvalidRangeError("equal rule needs delta > 0")
        elif self.kind == "explicit":
            if not self.values:
                raise InvalidRangeError("explicit rule needs a non-empty value list")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            if not all(math.isfinite(v) for v in self.values):
                raise InvalidRangeError("explicit widths must be finite")
        else:  # log_uniform; a degenerate range lo == hi is allowed
            if self.lo is None or self.hi is None or not (0.0 < self.lo <= self.hi):
                raise InvalidRangeError("log_uniform needs 0 < lo <= hi")

    @classmethod
    def equal(cls, delta: float) -> "WidthRule":
        return cls(kind="equal", delta=float(delta))

    @classmethod
    def explicit(cls, values) -> "WidthRule":
        return cls(kind="explicit", values=tuple(float(v) for v in values))

    @classmethod
    def log_uniform(cls, lo: float, hi: float) -> "WidthRule":
        return cls(kind="log_uniform", lo=float(lo), hi=float(hi))

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "equal":
            out["delta"] = self.delta
        elif self.kind == "explicit":
            out["values"] = list(self.values)
        else:
            out["lo"] = self.lo
            out["hi"] = self.hi
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "WidthRule":
        if not isinstance(data, dict) or "kind" not in data:
            raise ConfigError("width_rule must be an object with a 'kind' key")
        kind = data["kind"]
        allowed = {
            "equal": {"kind", "delta"},
            "explicit": {"kind", "values"},
            "log_uniform": {"kind", "lo", "hi"},
        }.get(kind)
        if allowed is None:
            raise ConfigError(f"unknown width rule kind {kind!r}")
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)} in width_rule")
        try:
            if kind == "equal":
                return cls.equal(data["delta"])
            if kind == "explicit":
                return cls.explicit(data["values"])
            return cls.log_uniform(data["lo"], data["hi"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad width_rule: {exc}") from exc


def assign_widths(rule: WidthRule, n: int, mean_spacing: float, seed=None) -> np.ndarray:
    """Width list in absolute field units (rule parameters are in units of d)."""
    if rule.kind == "equal":
        return np.full(n, rule.delta * mean_spacing)
    if rule.kind == "explicit":
        values = np.asarray(rule.values, dtype=float)
        if values.size != n:
            raise LengthMismatchError(f"explicit rule has {values.size} widths for n={n}")
        return values * mean_spacing
    if seed is None:
        raise InvalidRangeError("log_uniform width rule needs a seed")
    rng = _as_rng(seed)
    draws = rng.uniform(math.log(rule.lo), math.log(rule.hi), size=n)
    return mean_spacing * np.exp(draws)


@dataclass(frozen=True)
class EnsembleConfig:
    """Statistical recipe for a family of bare spectra."""

    n: int
    b_max: float
    kind: str
    width_rule: WidthRule
    master_seed: int
    realization_count: int

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigError(f"n must be an integer >= 1, got {self.n!r}")
        if not (isinstance(self.b_max, (int, float)) and self.b_max > 0 and math.isfinite(self.b_max)):
            raise ConfigError(f"b_max must be positive and finite, got {self.b_max!r}")
        object.__setattr__(self, "b_max", float(self.b_max))
        if self.kind not in POSITION_KINDS:
            raise ConfigError(f"kind must be one of {POSITION_KINDS}, got {self.kind!r}")
        if not isinstance(self.master_seed, int) or not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be an integer in [0, 2^64)")
        if not isinstance(self.realization_count, int) or self.realization_count < 1:
            raise ConfigError(f"realization_count must be >= 1, got {self.realization_count!r}")

    @property
    def mean_spacing(self) -> float:
        return self.b_max / self.n

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "b_max": self.b_max,
            "kind": self.kind,
            "width_rule": self.width_rule.to_dict(),
            "master_seed": self.master_seed,
            "realization_count": self.realization_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EnsembleConfig":
        if not isinstance(data, dict):
            raise ConfigError("ensemble must be an object")
        allowed = {"n", "b_max", "kind", "width_rule", "master_seed", "realization_count"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)} in ensemble")
        missing = allowed - set(data)
        if missing:
            raise ConfigError(f"missing keys {sorted(missing)} in ensemble")
        return cls(
            n=data["n"],
            b_max=data["b_max"],
            kind=data["kind"],
            width_rule=WidthRule.from_dict(data["width_rule"]),
            master_seed=data["master_seed"],
            realization_count=data["realization_count"],
        )


def generate_positions(config: EnsembleConfig, index: int) -> np.ndarray:
    rng = derived_rng(config.master_seed, STREAM_POSITIONS, index)
    if config.kind == "poisson":
        return sample_poisson_positions(config.n, config.b_max, rng)
    if config.kind == "wigner_dyson":
        return sample_wd_positions(config.n, config.b_max, rng)
    return sample_semi_poisson_positions(config.n, config.b_max, rng)


def generate_realization(config: EnsembleConfig, index: int) -> BareSpectrum:
    """Bare spectrum for realization ``index`` of the configured ensemble."""
    if not 0 <= index:
        raise InvalidRangeError(f"realization index must be >= 0, got {index}")
    positions = generate_positions(config, index)
    widths = assign_widths(
        config.width_rule,
        config.n,
        config.mean_spacing,
        seed=derived_rng(config.master_seed, STREAM_WIDTHS, index),
    )
    return BareSpectrum(config.b_max, positions, widths)


def save_ensemble(directory, config: EnsembleConfig) -> Path:
    """Persist all realizations as CSV files plus a JSON manifest; returns the
    manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    realizations = []
    for k in range(config.realization_count):
        spectrum = generate_realization(config, k)
        name = f"realization_{k:04d}.csv"
        save_bare_spectrum_csv(
            directory / name, spectrum, sidecar=False, manifest_comment="manifest.json"
        )
        realizations.append(
            {
                "index": k,
                "file": name,
                "seed_entropy": {
                    "positions": derived_seed(config.master_seed, STREAM_POSITIONS, k),
                    "widths": derived_seed(config.master_seed, STREAM_WIDTHS, k),
                },
            }
        )
    manifest = {
        "schema_version": 1,
        "type": "ensemble",
        "config": config.to_dict(),
        "generator": {
            "id": GENERATOR_ID,
            "numpy_version": np.__version__,
            "seed_scheme": SEED_SCHEME,
            "streams": {
                "positions": STREAM_POSITIONS,
                "widths": STREAM_WIDTHS,
                "delta_mu": STREAM_DELTA_MU,
            },
        },
        "units": {
            "field": "as configured (b_max units)",
            "width_rule": "units of mean spacing d = b_max/n",
        },
        "realizations": realizations,
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_ensemble(directory) -> tuple[EnsembleConfig, list[BareSpectrum]]:
    """Reload a persisted ensemble (config plus all realizations)."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    config = EnsembleConfig.from_dict(manifest["config"])
    spectra = []
    for entry in manifest["realizations"]:
        from .model import load_bare_spectrum_csv

        spectra.append(load_bare_spectrum_csv(directory / entry["file"], b_max=config.b_max))
    return config, spectra
