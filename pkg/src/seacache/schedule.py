"""Discrete noise schedules supplying the mixture coefficients (a_t, b_t).

A schedule describes the forward mixture x_t = a_t * x0 + b_t * eps at
discrete solver steps t = 0..T, where t indexes the noise level: t = 0 is
clean data and t = T is (almost) pure noise.  Every other module consumes
schedules read-only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

# Variance-preserving diffusion presets are defined on this base grid and
# subsampled to the requested solver step count.
_DPM_BASE_STEPS = 1000
_DPM_BETA_START = 1e-4
_DPM_BETA_END = 2e-2
_DPM_COSINE_OFFSET = 0.008

# a_t values below this floor are clamped when queried via `a_safe`, so
# that Wiener gains stay defined at the pure-noise endpoint.
A_FLOOR = 1e-6


class ScheduleKind(enum.Enum):
    DPM_LINEAR = "dpm-linear"
    DPM_COSINE = "dpm-cosine"
    RECTIFIED_FLOW = "rf"

    @property
    def is_dpm(self) -> bool:
        return self in (ScheduleKind.DPM_LINEAR, ScheduleKind.DPM_COSINE)


@dataclass(frozen=True)
class NoiseSchedule:
    """Timestep-indexed mixture coefficients, immutable after construction.

    `a` and `b` have length T + 1.  `a` is strictly decreasing, `b` strictly
    increasing; rectified flow satisfies a + b = 1 exactly, DPM kinds satisfy
    a^2 + b^2 = 1 to float precision.
    """

    kind: ScheduleKind
    T: int
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=np.float64))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=np.float64))
        self.a.setflags(write=False)
        self.b.setflags(write=False)

    def a_safe(self, t: int) -> float:
        """a[t] floored at A_FLOOR; used where a division by a_t must stay finite."""
        return max(float(self.a[t]), A_FLOOR)

    def validate(self, mixture_atol: float = 1e-9, endpoint_atol: float = 1e-12) -> None:
        """Raise ValueError if the schedule violates its invariants.

        `mixture_atol` / `endpoint_atol` are loosened by callers that load
        coefficients from 32-bit storage.
        """
        a, b = self.a, self.b
        if len(a) != self.T + 1 or len(b) != self.T + 1:
            raise ValueError("coefficient arrays must have length T + 1")
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError("coefficients must be finite")
        if a.min() < -endpoint_atol or a.max() > 1 + endpoint_atol:
            raise ValueError("a out of [0, 1]")
        if b.min() < -endpoint_atol or b.max() > 1 + endpoint_atol:
            raise ValueError("b out of [0, 1]")
        if not (np.diff(a) < 0).all():
            raise ValueError("a must be strictly decreasing in t")
        if not (np.diff(b) > 0).all():
            raise ValueError("b must be strictly increasing in t")
        if abs(a[0] - 1.0) > endpoint_atol:
            raise ValueError("a[0] must equal 1")
        if self.kind is ScheduleKind.RECTIFIED_FLOW:
            if abs(a[self.T]) > endpoint_atol:
                raise ValueError("rectified flow requires a[T] = 0")
            if np.abs(a + b - 1.0).max() > max(mixture_atol, endpoint_atol):
                raise ValueError("rectified flow requires a + b = 1")
        else:
            # the linear-beta preset bottoms out near 6.4e-3, so the
            # pure-noise endpoint is only approximately zero
            if a[self.T] > 1e-2:
                raise ValueError("DPM schedule requires a[T] ~ 0 (<= 1e-2)")
            if np.abs(a * a + b * b - 1.0).max() > mixture_atol:
                raise ValueError("DPM schedule requires a^2 + b^2 = 1")


def make_rf_schedule(T: int) -> NoiseSchedule:
    """Rectified-flow schedule: a_t = 1 - t/T, b_t = t/T."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    t = np.arange(T + 1, dtype=np.float64)
    return NoiseSchedule(kind=ScheduleKind.RECTIFIED_FLOW, T=T, a=1.0 - t / T, b=t / T)


def make_dpm_schedule(kind: ScheduleKind, T: int) -> NoiseSchedule:
    """Variance-preserving schedule: a_t = sqrt(abar_t), b_t = sqrt(1 - abar_t).

    DPM_LINEAR uses betas linearly spaced on a 1000-step base grid with
    abar = cumprod(1 - beta), evaluated at T + 1 evenly spaced positions.
    DPM_COSINE uses the squared-cosine abar with offset 0.008.
    """
    if not kind.is_dpm:
        raise ValueError(f"expected a DPM schedule kind, got {kind}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if kind is ScheduleKind.DPM_LINEAR:
        betas = np.linspace(_DPM_BETA_START, _DPM_BETA_END, _DPM_BASE_STEPS)
        abar_base = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        positions = np.arange(T + 1, dtype=np.float64) * (_DPM_BASE_STEPS / T)
        abar = np.interp(positions, np.arange(_DPM_BASE_STEPS + 1), abar_base)
    else:
        s = _DPM_COSINE_OFFSET
        u = np.arange(T + 1, dtype=np.float64) / T
        f = np.cos((u + s) / (1.0 + s) * (math.pi / 2.0)) ** 2
        abar = f / f[0]
    abar[0] = 1.0
    a = np.sqrt(abar)
    b = np.sqrt(1.0 - abar)
    return NoiseSchedule(kind=kind, T=T, a=a, b=b)


def snr(schedule: NoiseSchedule, t: int) -> float:
    """Signal-to-noise proxy a_t^2 / b_t^2; returns math.inf when b_t = 0."""
    if not 0 <= t <= schedule.T:
        raise IndexError(f"t={t} out of range [0, {schedule.T}]")
    a = float(schedule.a[t])
    b = float(schedule.b[t])
    if b == 0.0:
        return math.inf
    return (a * a) / (b * b)
