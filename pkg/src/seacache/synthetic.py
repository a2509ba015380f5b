"""Desk-scale linear-diffusion testbed.

Gaussian random fields with exact power-law spectra play the role of clean
latents, the optimal linear (Wiener) filter plays the role of the denoiser,
and a deterministic reverse sampler ties them together.  Because the
denoiser is exactly the minimum-MSE estimator for these fields, every
quality difference between cached runs is attributable to the cache
schedule alone, which makes the scheduling claims checkable in seconds on
one CPU core.

Conventions: fields are zero-mean (the zero-frequency coefficient is
dropped), and a field's power spectrum is its mean periodogram
|FFT(x)|^2 / Npix, so that white unit-variance noise has flat spectrum 1
and the sampled fields hit A * |f|^-beta exactly in expectation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .filtering import apply_filter
from .gate import CacheGate, Decision, GateTrace, delta_for_target_ratio, gate_step, simulate_gate
from .metric import DEFAULT_XI, DistanceSeries, MetricKind, filtered_pair_distance, series_from_features
from .schedule import NoiseSchedule
from .spectrum import FilterBank, PowerLawPrior, RadialGrid, prior_spectrum

PSNR_CAP_DB = 99.0


@dataclass(frozen=True)
class FieldSampler:
    """Seeded generator of power-law Gaussian random fields."""

    shape: tuple[int, ...]
    channels: int
    prior: PowerLawPrior
    seed: int


def sample_field(sampler: FieldSampler, grid: RadialGrid) -> np.ndarray:
    """Draw a (C, *shape) real field whose spectrum follows the prior.

    Per channel: unit complex Gaussian coefficients with conjugate symmetry
    enforced, scaled by sqrt(Npix * S) so the periodogram matches S in
    expectation, zeroed at the zero-frequency point, then inverse
    transformed.  Identical sampler fields give bitwise identical output.
    """
    if grid.shape != tuple(sampler.shape):
        raise ValueError(f"sampler shape {sampler.shape} does not match grid {grid.shape}")
    rng = np.random.default_rng(np.uint64(sampler.seed))
    S = prior_spectrum(grid, sampler.prior)
    S = np.where(grid.radius > 0, S, 0.0)
    npix = math.prod(grid.shape)
    amplitude = np.sqrt(npix * S)
    conj_index = np.ix_(*[(-np.arange(n)) % n for n in grid.shape])
    out = np.empty((sampler.channels,) + grid.shape, dtype=np.float64)
    for c in range(sampler.channels):
        g = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * np.sqrt(0.5)
        u = (g + np.conj(g[conj_index])) / np.sqrt(2.0)
        out[c] = np.fft.ifftn(amplitude * u).real
    return out


def radial_power_spectrum(tensor: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Per-bin mean periodogram |FFT|^2 / Npix, averaged over channels."""
    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.shape[-len(grid.shape):] != grid.shape:
        raise ValueError(f"tensor shape {tensor.shape} does not match grid {grid.shape}")
    if tensor.ndim == len(grid.shape):
        tensor = tensor[None]
    axes = tuple(range(1, tensor.ndim))
    power = np.abs(np.fft.fftn(tensor, axes=axes)) ** 2 / math.prod(grid.shape)
    return grid.bin_mean(power.mean(axis=0))


def forward_noise(x0: np.ndarray, t: int, schedule: NoiseSchedule, noise: np.ndarray) -> np.ndarray:
    """x_t = a_t * x0 + b_t * noise with caller-supplied noise."""
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ValueError(f"shape mismatch {x0.shape} vs {noise.shape}")
    if not 0 <= t <= schedule.T:
        raise IndexError(f"t={t} out of range [0, {schedule.T}]")
    return schedule.a[t] * x0 + schedule.b[t] * noise


def denoise_mmse(x_t: np.ndarray, t: int, bank: FilterBank) -> np.ndarray:
    """Estimate the clean field with the unnormalized Wiener response at t."""
    if not 0 <= t <= bank.T:
        raise IndexError(f"t={t} out of range [0, {bank.T}]")
    return apply_filter(bank.gains_raw[t], x_t)


def analytic_mmse(bank: FilterBank, t: int) -> float:
    """Closed-form per-pixel MSE of the Wiener estimator at timestep t.

    (1/Npix) * sum over grid points of S*b^2 / (a^2*S + b^2), with the
    zero-frequency pole contributing its limit value b^2 / a^2.
    """
    S = prior_spectrum(bank.grid, bank.prior)
    a = bank.schedule.a_safe(t)
    b = float(bank.schedule.b[t])
    finite = np.isfinite(S)
    term = np.empty(S.shape, dtype=np.float64)
    term[finite] = S[finite] * b * b / (a * a * S[finite] + b * b)
    term[~finite] = b * b / (a * a)
    return float(term.sum() / math.prod(bank.grid.shape))


def reverse_step(x_t: np.ndarray, x0_hat: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """One deterministic reverse update in the x0 parameterization.

    Recovers the implied noise eps_hat = (x_t - a_t * x0_hat) / b_t and
    remixes it at the next-lower noise level.
    """
    if t < 1:
        raise ValueError(f"reverse step requires t >= 1, got {t}")
    if t > schedule.T:
        raise IndexError(f"t={t} out of range [1, {schedule.T}]")
    b_t = float(schedule.b[t])
    if b_t == 0.0:
        raise ValueError(f"reverse step undefined where b[t] = 0 (t={t})")
    eps_hat = (x_t - schedule.a[t] * x0_hat) / b_t
    return schedule.a[t - 1] * x0_hat + schedule.b[t - 1] * eps_hat


def psnr(x: np.ndarray, ref: np.ndarray, cap_db: float = PSNR_CAP_DB) -> float:
    """Peak signal-to-noise ratio of x against ref, capped at cap_db."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {ref.shape}")
    peak = float(ref.max() - ref.min())
    if peak == 0.0:
        raise ValueError("reference tensor is constant; PSNR undefined")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return cap_db
    return min(10.0 * math.log10(peak * peak / mse), cap_db)


# --------------------------------------------------------------------------
# policies and the sampler


@dataclass(frozen=True)
class FullCompute:
    """Run the denoiser at every step; the reference trajectory."""

    name = "full"


@dataclass(frozen=True)
class MetricPolicy:
    """Gate live on an input-side distance; exactly one of delta or
    target_ratio must be given.  A target ratio resolves to the threshold
    inverted from the full-compute proxy series of the same metric."""

    kind: MetricKind
    delta: Optional[float] = None
    target_ratio: Optional[float] = None

    def __post_init__(self):
        if (self.delta is None) == (self.target_ratio is None):
            raise ValueError("exactly one of delta or target_ratio must be set")

    @property
    def name(self) -> str:
        return self.kind.name


@dataclass(frozen=True)
class OraclePolicy:
    """Schedule derived offline from full-compute output distances (raw or
    SEA-filtered), then replayed as a fixed refresh pattern."""

    filtered: bool
    target_ratio: float

    @property
    def name(self) -> str:
        return "oracle-sea" if self.filtered else "oracle-raw"


Policy = Union[FullCompute, MetricPolicy, OraclePolicy]


@dataclass(frozen=True)
class SamplerConfig:
    schedule: NoiseSchedule
    bank: FilterBank
    policy: Policy
    xi: float = DEFAULT_XI
    seed: int = 0

    def __post_init__(self):
        if self.bank.schedule is not self.schedule and not (
            np.array_equal(self.bank.schedule.a, self.schedule.a)
            and np.array_equal(self.bank.schedule.b, self.schedule.b)
        ):
            raise ValueError("filter bank was built for a different schedule")


@dataclass(frozen=True)
class RunResult:
    final: np.ndarray
    trace: GateTrace
    distances: DistanceSeries
    inputs: list            # (t, x_t) in sampling order, t = T .. 1
    outputs: list           # (t, x0_hat) at steps where the denoiser ran
    delta: Optional[float]  # resolved threshold, None for full compute
    policy_name: str


def _run_full(config: SamplerConfig, x0: np.ndarray, init_noise: np.ndarray) -> RunResult:
    schedule, bank = config.schedule, config.bank
    T = schedule.T
    x = forward_noise(x0, T, schedule, init_noise)
    inputs, outputs = [], []
    for t in range(T, 0, -1):
        inputs.append((t, x))
        x0_hat = denoise_mmse(x, t, bank)
        outputs.append((t, x0_hat))
        x = reverse_step(x, x0_hat, t, schedule)
    trace = GateTrace(
        decisions=tuple(Decision.REFRESH for _ in range(T)),
        accumulator_after=np.zeros(T),
        forced_first=True,
    )
    distances = series_from_features(inputs, bank, MetricKind.raw(), config.xi)
    return RunResult(final=x, trace=trace, distances=distances, inputs=inputs,
                     outputs=outputs, delta=None, policy_name=FullCompute.name)


def _run_gated(config: SamplerConfig, x0: np.ndarray, init_noise: np.ndarray, delta: float) -> RunResult:
    schedule, bank = config.schedule, config.bank
    kind = config.policy.kind
    T = schedule.T
    x = forward_noise(x0, T, schedule, init_noise)
    gate = CacheGate(delta=delta)
    inputs, outputs = [], []
    decisions, accs, dists = [], [], []
    x0_hat = None
    prev = None
    for t in range(T, 0, -1):
        inputs.append((t, x))
        if t == T:
            decision = Decision.REFRESH  # nothing cached yet; consumes no distance
        else:
            d = filtered_pair_distance(kind, x, t, prev, t + 1, bank, config.xi)
            dists.append(d)
            decision = gate_step(gate, d)
        decisions.append(decision)
        accs.append(gate.accumulator)
        if decision is Decision.REFRESH:
            gate.last_refresh_t = t
            x0_hat = denoise_mmse(x, t, bank)
            outputs.append((t, x0_hat))
        prev = x
        x = reverse_step(x, x0_hat, t, schedule)
    trace = GateTrace(decisions=tuple(decisions), accumulator_after=np.asarray(accs), forced_first=True)
    distances = DistanceSeries(values=np.asarray(dists), kind=kind, t=np.arange(T - 1, 0, -1))
    return RunResult(final=x, trace=trace, distances=distances, inputs=inputs,
                     outputs=outputs, delta=delta, policy_name=config.policy.name)


def _run_scheduled(config: SamplerConfig, x0: np.ndarray, init_noise: np.ndarray,
                   trace: GateTrace, distances: DistanceSeries, delta: float) -> RunResult:
    schedule, bank = config.schedule, config.bank
    T = schedule.T
    if len(trace) != T:
        raise ValueError(f"schedule trace has {len(trace)} decisions, expected {T}")
    if trace.decisions[0] is not Decision.REFRESH:
        raise ValueError("the first decision must refresh: there is no cached output yet")
    x = forward_noise(x0, T, schedule, init_noise)
    inputs, outputs = [], []
    x0_hat = None
    for i, t in enumerate(range(T, 0, -1)):
        inputs.append((t, x))
        if trace.decisions[i] is Decision.REFRESH:
            x0_hat = denoise_mmse(x, t, bank)
            outputs.append((t, x0_hat))
        x = reverse_step(x, x0_hat, t, schedule)
    return RunResult(final=x, trace=trace, distances=distances, inputs=inputs,
                     outputs=outputs, delta=delta, policy_name=config.policy.name)


def run_sampler(config: SamplerConfig, x0: np.ndarray, init_noise: np.ndarray) -> RunResult:
    """Run one sampling trajectory under the configured cache policy.

    The input proxy at each step is the current noisy latent x_t, available
    whether or not the denoiser runs.  Oracle policies first run full
    compute, derive a fixed refresh schedule from output-side distances at
    the requested refresh ratio, then rerun with that schedule.
    """
    policy = config.policy
    if isinstance(policy, FullCompute):
        return _run_full(config, x0, init_noise)
    if isinstance(policy, MetricPolicy):
        if policy.delta is not None:
            return _run_gated(config, x0, init_noise, policy.delta)
        full = _run_full(config, x0, init_noise)
        proxy = series_from_features(full.inputs, config.bank, policy.kind, config.xi)
        inv = delta_for_target_ratio(proxy, policy.target_ratio)
        return _run_gated(config, x0, init_noise, inv.delta)
    if isinstance(policy, OraclePolicy):
        full = _run_full(config, x0, init_noise)
        kind = MetricKind.sea() if policy.filtered else MetricKind.raw()
        out_series = series_from_features(full.outputs, config.bank, kind, config.xi)
        inv = delta_for_target_ratio(out_series, policy.target_ratio)
        trace = simulate_gate(out_series, inv.delta, force_first=True)
        return _run_scheduled(config, x0, init_noise, trace, out_series, inv.delta)
    raise TypeError(f"unknown policy {policy!r}")


def make_run_inputs(seed: int, grid: RadialGrid, channels: int, prior: PowerLawPrior) -> tuple[np.ndarray, np.ndarray]:
    """Seeded (x0, init_noise) pair for testbed experiments.

    The initial noise is white with its per-channel spatial mean removed:
    sampled fields are zero-mean by construction, and keeping trajectories
    in that zero-mean space avoids injecting a constant offset through the
    pure-noise endpoint's large zero-frequency gain.
    """
    sampler = FieldSampler(shape=grid.shape, channels=channels, prior=prior, seed=seed)
    x0 = sample_field(sampler, grid)
    rng = np.random.default_rng([np.uint64(seed), np.uint64(0x5EAC)])
    noise = rng.standard_normal(x0.shape)
    noise -= noise.mean(axis=tuple(range(1, noise.ndim)), keepdims=True)
    return x0, noise
