"""Radial frequency grids, power-law priors, and timestep-dependent filters.

The chain is: a power-law prior S(f) = A * |f|^-beta on a radial DFT grid,
the optimal linear denoising response G = a*S / (a^2*S + b^2) per timestep,
and the density-normalized variant G_norm = nu * G whose radial-bin mean is
exactly 1.  G_norm is the filter used for cache distances; the raw G is the
estimator used by the synthetic testbed's denoiser.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .schedule import NoiseSchedule

# Distinguished spectrum value at the zero-frequency pole of the power law.
# wiener_response resolves it to the S -> inf limit gain 1/a.
INFINITE_POWER = np.inf

# Default spectral exponents: 2 for spatial grids, 3 for spatiotemporal.
DEFAULT_BETA_2D = 2.0
DEFAULT_BETA_3D = 3.0


class DegenerateFilterError(ValueError):
    """Raised when a gain field cannot be normalized (all zero)."""


class GridRank(enum.Enum):
    SPATIAL_2D = 2
    SPATIOTEMPORAL_3D = 3


@dataclass(frozen=True)
class RadialGrid:
    """Unshifted DFT grid with normalized radial frequency and radial bins.

    `radius[p] = sqrt(sum_i (k_i / N_i)^2)` with per-axis frequencies in
    (-0.5, 0.5], so the zero-frequency point has radius exactly 0.  Grid
    points are assigned to `L = max(shape) // 2 + 1` radial bins by nearest
    integer on the [0, r_max] range; bin 0 holds the zero-frequency point.
    """

    rank: GridRank
    shape: tuple[int, ...]
    radius: np.ndarray = field(repr=False)
    bin_index: np.ndarray = field(repr=False)
    L: int
    r_max: float

    def __post_init__(self):
        self.radius.setflags(write=False)
        self.bin_index.setflags(write=False)

    def bin_counts(self) -> np.ndarray:
        return np.bincount(self.bin_index.ravel(), minlength=self.L)

    def bin_mean(self, values: np.ndarray) -> np.ndarray:
        """Per-bin average of a grid-shaped array of values."""
        sums = np.bincount(self.bin_index.ravel(), weights=np.asarray(values, dtype=np.float64).ravel(), minlength=self.L)
        return sums / self.bin_counts()

    def bin_radius(self) -> np.ndarray:
        """Mean radius of the grid points in each bin."""
        return self.bin_mean(self.radius)


@dataclass(frozen=True)
class PowerLawPrior:
    """Isotropic power-law spectrum S(f) = A * |f|^-beta."""

    A: float = 1.0
    beta: float = DEFAULT_BETA_2D

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError(f"amplitude A must be positive, got {self.A}")
        if self.beta < 0:
            raise ValueError(f"exponent beta must be nonnegative, got {self.beta}")


def radial_grid(rank: GridRank, shape: tuple[int, ...]) -> RadialGrid:
    """Build the radial grid for a 2D (H, W) or 3D (F, H, W) spatial shape."""
    shape = tuple(int(n) for n in shape)
    if len(shape) != rank.value:
        raise ValueError(f"{rank} expects {rank.value} axes, got shape {shape}")
    if any(n < 2 for n in shape):
        raise ValueError(f"all axis sizes must be >= 2, got {shape}")
    freqs = np.meshgrid(*[np.fft.fftfreq(n) for n in shape], indexing="ij")
    radius = np.sqrt(sum(f * f for f in freqs))
    L = max(shape) // 2 + 1
    r_max = float(radius.max())
    bin_index = np.floor(radius / r_max * (L - 1) + 0.5).astype(np.int64)
    grid = RadialGrid(rank=rank, shape=shape, radius=radius, bin_index=bin_index, L=L, r_max=r_max)
    counts = grid.bin_counts()
    if (counts == 0).any():
        empty = np.flatnonzero(counts == 0).tolist()
        raise ValueError(f"radial binning left empty bins {empty} for shape {shape}")
    return grid


def prior_spectrum(grid: RadialGrid, prior: PowerLawPrior) -> np.ndarray:
    """Evaluate S(f) = A * radius^-beta on the grid.

    For beta > 0 the zero-frequency point carries INFINITE_POWER (the pole
    of the power law); for beta = 0 the spectrum is flat, A everywhere.
    """
    S = np.empty(grid.shape, dtype=np.float64)
    off = grid.radius > 0
    S[off] = prior.A * grid.radius[off] ** (-prior.beta)
    S[~off] = INFINITE_POWER if prior.beta > 0 else prior.A
    return S


def wiener_response(S: np.ndarray, a: float, b: float) -> np.ndarray:
    """Optimal linear denoising gain G = a*S / (a^2*S + b^2), pointwise.

    Points with S = INFINITE_POWER take the limit gain 1/a, and b = 0
    yields G = 1/a everywhere (the noiseless limit).
    """
    if not a > 0:
        raise ValueError(f"mixture coefficient a must be positive, got {a}")
    S = np.asarray(S, dtype=np.float64)
    if b == 0.0:
        return np.full(S.shape, 1.0 / a)
    G = np.empty(S.shape, dtype=np.float64)
    finite = np.isfinite(S)
    Sf = S[finite]
    G[finite] = a * Sf / (a * a * Sf + b * b)
    G[~finite] = 1.0 / a
    return G


def normalize_gain(G: np.ndarray, grid: RadialGrid) -> tuple[float, np.ndarray]:
    """Rescale gains so the mean of their radial-bin averages is exactly 1.

    Returns (nu, nu * G) where nu = 1 / mean_l(binned G).  The bin mean
    weights every radial bin equally regardless of its population.
    """
    G = np.asarray(G, dtype=np.float64)
    if G.shape != grid.shape:
        raise ValueError(f"gain shape {G.shape} does not match grid {grid.shape}")
    if not np.isfinite(G).all() or (G < 0).any():
        raise ValueError("gains must be finite and nonnegative")
    mean_of_bins = grid.bin_mean(G).mean()
    if mean_of_bins <= 0.0:
        raise DegenerateFilterError("cannot normalize an all-zero gain field")
    nu = 1.0 / mean_of_bins
    return nu, nu * G


@dataclass(frozen=True)
class FilterBank:
    """Per-timestep gains over a radial grid, shared read-only.

    `filters[t]` is the normalized gain field (unit radial-bin mean),
    `gains_raw[t]` the unnormalized response, and `nu[t]` the normalizer
    relating them: filters[t] = nu[t] * gains_raw[t].
    """

    schedule: NoiseSchedule
    grid: RadialGrid
    filters: np.ndarray = field(repr=False)     # (T+1, *grid.shape)
    gains_raw: np.ndarray = field(repr=False)   # (T+1, *grid.shape)
    nu: np.ndarray = field(repr=False)          # (T+1,)
    prior: PowerLawPrior = PowerLawPrior()

    def __post_init__(self):
        for arr in (self.filters, self.gains_raw, self.nu):
            arr.setflags(write=False)

    @property
    def T(self) -> int:
        return self.schedule.T


def build_filter_bank(schedule: NoiseSchedule, grid: RadialGrid, prior: PowerLawPrior | None = None) -> FilterBank:
    """Construct normalized filters for every timestep of a schedule.

    The pure-noise endpoint uses the schedule's floored a_t so the response
    stays defined; that filter is extreme (it passes almost only the lowest
    bin) but the first sampling step is always a forced refresh, so it never
    gates a decision on its own.
    """
    if prior is None:
        beta = DEFAULT_BETA_2D if grid.rank is GridRank.SPATIAL_2D else DEFAULT_BETA_3D
        prior = PowerLawPrior(A=1.0, beta=beta)
    S = prior_spectrum(grid, prior)
    T = schedule.T
    filters = np.empty((T + 1,) + grid.shape, dtype=np.float64)
    gains_raw = np.empty_like(filters)
    nu = np.empty(T + 1, dtype=np.float64)
    for t in range(T + 1):
        G = wiener_response(S, schedule.a_safe(t), float(schedule.b[t]))
        nu_t, G_norm = normalize_gain(G, grid)
        gains_raw[t] = G
        filters[t] = G_norm
        nu[t] = nu_t
    return FilterBank(schedule=schedule, grid=grid, filters=filters, gains_raw=gains_raw, nu=nu, prior=prior)
