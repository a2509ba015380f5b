"""Change measures between consecutive features.

The base measure is the relative L1 distance |u - v|_1 / (|v|_1 + xi).
The spectrum-aware (SEA) distance applies each operand's own timestep
filter before measuring, and the ablation variants swap in alternative
gain fields or rescale the raw distance with a fitted polynomial.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .filtering import apply_filter
from .spectrum import DegenerateFilterError, FilterBank, normalize_gain

DEFAULT_XI = 1e-8
DEFAULT_CUTOFF_FRACTION = 0.30
DEFAULT_POLY_DEGREE = 4


class MetricTag(enum.Enum):
    RAW = "raw"
    SEA = "sea"
    ONE_MINUS_SEA = "one-minus-sea"
    SEA_UNNORMALIZED = "sea-unnorm"
    LPF_CUTOFF = "lpf-cutoff"
    POLY_FITTED = "poly-fitted"


@dataclass(frozen=True)
class MetricKind:
    """A distance variant plus its variant-specific parameters."""

    tag: MetricTag
    cutoff_fraction: float | None = None
    poly_coeffs: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.tag is MetricTag.LPF_CUTOFF:
            if self.cutoff_fraction is None:
                object.__setattr__(self, "cutoff_fraction", DEFAULT_CUTOFF_FRACTION)
            if not 0 < self.cutoff_fraction <= 1:
                raise ValueError(f"cutoff_fraction must be in (0, 1], got {self.cutoff_fraction}")
        elif self.cutoff_fraction is not None:
            raise ValueError(f"cutoff_fraction is only valid for LPF_CUTOFF, not {self.tag}")
        if self.tag is MetricTag.POLY_FITTED:
            if not self.poly_coeffs:
                raise ValueError("POLY_FITTED requires polynomial coefficients (low-to-high degree)")
            object.__setattr__(self, "poly_coeffs", tuple(float(c) for c in self.poly_coeffs))
        elif self.poly_coeffs is not None:
            raise ValueError(f"poly_coeffs is only valid for POLY_FITTED, not {self.tag}")

    @classmethod
    def raw(cls) -> "MetricKind":
        return cls(MetricTag.RAW)

    @classmethod
    def sea(cls) -> "MetricKind":
        return cls(MetricTag.SEA)

    @classmethod
    def one_minus_sea(cls) -> "MetricKind":
        return cls(MetricTag.ONE_MINUS_SEA)

    @classmethod
    def sea_unnormalized(cls) -> "MetricKind":
        return cls(MetricTag.SEA_UNNORMALIZED)

    @classmethod
    def lpf_cutoff(cls, cutoff_fraction: float = DEFAULT_CUTOFF_FRACTION) -> "MetricKind":
        return cls(MetricTag.LPF_CUTOFF, cutoff_fraction=cutoff_fraction)

    @classmethod
    def poly_fitted(cls, coeffs) -> "MetricKind":
        return cls(MetricTag.POLY_FITTED, poly_coeffs=tuple(coeffs))

    @property
    def name(self) -> str:
        return self.tag.value


@dataclass(frozen=True)
class DistanceSeries:
    """Distances for consecutive step transitions, in sampling order.

    `values[i]` is the distance gated at timestep `t[i]`, measured between
    the feature at t[i] and the one at the previous (higher) timestep.
    """

    values: np.ndarray
    kind: MetricKind
    t: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if self.t is None:
            object.__setattr__(self, "t", np.arange(len(values), 0, -1, dtype=np.int64))
        else:
            object.__setattr__(self, "t", np.asarray(self.t, dtype=np.int64))
        if len(self.t) != len(values):
            raise ValueError("t and values must have equal length")
        if not np.isfinite(values).all() or (values < 0).any():
            raise ValueError("distances must be finite and nonnegative")

    def __len__(self) -> int:
        return len(self.values)


def rel_l1(u: np.ndarray, v: np.ndarray, xi: float = DEFAULT_XI) -> float:
    """Relative L1 distance |u - v|_1 / (|v|_1 + xi).

    xi = 0 is allowed for nonzero v (useful for scale-invariance checks);
    the default keeps the denominator bounded away from zero.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    if xi < 0:
        raise ValueError(f"xi must be nonnegative, got {xi}")
    denom = np.abs(v).sum() + xi
    if denom == 0.0:
        raise ValueError("relative distance undefined: zero reference and xi = 0")
    return float(np.abs(u - v).sum() / denom)


def _complement_gains(bank: FilterBank, t: int) -> np.ndarray:
    """Per-timestep complement (max gain minus gain), renormalized to unit bin mean."""
    g = bank.filters[t]
    comp = g.max() - g
    try:
        _, comp_norm = normalize_gain(comp, bank.grid)
    except DegenerateFilterError:
        raise DegenerateFilterError(
            f"complement filter is all-zero at t={t} (the filter is constant there)"
        ) from None
    return comp_norm


def _lpf_gains(bank: FilterBank, cutoff_fraction: float) -> np.ndarray:
    return (bank.grid.radius <= cutoff_fraction * bank.grid.r_max).astype(np.float64)


def variant_gains(kind: MetricKind, bank: FilterBank, t: int) -> np.ndarray | None:
    """The gain field a variant applies at timestep t; None for unfiltered variants."""
    if kind.tag is MetricTag.SEA:
        return bank.filters[t]
    if kind.tag is MetricTag.SEA_UNNORMALIZED:
        return bank.gains_raw[t]
    if kind.tag is MetricTag.ONE_MINUS_SEA:
        return _complement_gains(bank, t)
    if kind.tag is MetricTag.LPF_CUTOFF:
        return _lpf_gains(bank, kind.cutoff_fraction)
    return None


def filtered_pair_distance(
    kind: MetricKind,
    cur: np.ndarray,
    t_cur: int,
    nxt: np.ndarray,
    t_next: int,
    bank: FilterBank,
    xi: float = DEFAULT_XI,
) -> float:
    """Distance between two features, each filtered with its own timestep's gains."""
    if not (0 <= t_cur <= bank.T and 0 <= t_next <= bank.T):
        raise ValueError(f"timesteps ({t_cur}, {t_next}) out of range [0, {bank.T}]")
    if kind.tag is MetricTag.RAW:
        return rel_l1(cur, nxt, xi)
    if kind.tag is MetricTag.POLY_FITTED:
        value = float(np.polynomial.polynomial.polyval(rel_l1(cur, nxt, xi), kind.poly_coeffs))
        return max(value, 0.0)
    g_cur = variant_gains(kind, bank, t_cur)
    g_next = variant_gains(kind, bank, t_next)
    return rel_l1(apply_filter(g_cur, cur), apply_filter(g_next, nxt), xi)


def sea_distance(I_cur: np.ndarray, I_next: np.ndarray, bank: FilterBank, t: int, xi: float = DEFAULT_XI) -> float:
    """SEA cache distance at the transition t+1 -> t.

    Filters I_cur with the filter of timestep t and I_next with the filter
    of timestep t + 1, then measures the relative L1 distance.
    """
    if not 0 <= t < bank.T:
        raise ValueError(f"t={t} out of range [0, {bank.T})")
    return filtered_pair_distance(MetricKind.sea(), I_cur, t, I_next, t + 1, bank, xi)


def variant_distance(
    kind: MetricKind,
    I_cur: np.ndarray,
    I_next: np.ndarray,
    bank: FilterBank,
    t: int,
    xi: float = DEFAULT_XI,
) -> float:
    """Distance under any metric variant for the transition t+1 -> t."""
    if not 0 <= t < bank.T:
        raise ValueError(f"t={t} out of range [0, {bank.T})")
    return filtered_pair_distance(kind, I_cur, t, I_next, t + 1, bank, xi)


def series_from_features(
    features: list[tuple[int, np.ndarray]],
    bank: FilterBank,
    kind: MetricKind,
    xi: float = DEFAULT_XI,
) -> DistanceSeries:
    """Consecutive-pair distances over (t, tensor) records in descending t."""
    if len(features) < 2:
        raise ValueError("need at least two features to form a distance series")
    ts = [t for t, _ in features]
    if any(hi <= lo for lo, hi in zip(ts[1:], ts[:-1])):
        raise ValueError("features must be ordered by strictly descending t")
    values = []
    for (t_next, f_next), (t_cur, f_cur) in zip(features[:-1], features[1:]):
        values.append(filtered_pair_distance(kind, f_cur, t_cur, f_next, t_next, bank, xi))
    return DistanceSeries(values=np.asarray(values), kind=kind, t=np.asarray(ts[1:]))


def fit_poly(input_deltas, output_deltas, degree: int = DEFAULT_POLY_DEGREE) -> np.ndarray:
    """Least-squares polynomial mapping input distances to output distances.

    Returns coefficients low-to-high degree.  A rank-deficient system falls
    back to the minimum-norm solution and emits a warning.
    """
    x = np.asarray(getattr(input_deltas, "values", input_deltas), dtype=np.float64)
    y = np.asarray(getattr(output_deltas, "values", output_deltas), dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("input and output series must be 1-D and of equal length")
    if degree < 1:
        raise ValueError(f"degree must be >= 1, got {degree}")
    if len(x) < degree + 1:
        raise ValueError(f"need at least {degree + 1} points for degree {degree}, got {len(x)}")
    vandermonde = np.vander(x, degree + 1, increasing=True)
    coeffs, _, rank, _ = np.linalg.lstsq(vandermonde, y, rcond=None)
    if rank < degree + 1:
        warnings.warn(f"polynomial fit is rank-deficient (rank {rank} < {degree + 1}); using minimum-norm solution")
    return coeffs
