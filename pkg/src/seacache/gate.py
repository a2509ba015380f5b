"""The cache decision state machine.

Per-step distances accumulate; once the running sum exceeds the threshold
delta, the step refreshes (runs the full denoiser) and the accumulator
resets, otherwise the step reuses the cached output.  Ties reuse: the
refresh fires strictly above delta.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .metric import DistanceSeries


class Decision(enum.Enum):
    REFRESH = "refresh"
    REUSE = "reuse"


@dataclass
class CacheGate:
    """Mutable accumulator state for one sampling run."""

    delta: float
    accumulator: float = 0.0
    last_refresh_t: int | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")


def gate_step(gate: CacheGate, distance: float) -> Decision:
    """Accumulate one distance and decide; mutates the gate."""
    distance = float(distance)
    if not math.isfinite(distance) or distance < 0:
        raise ValueError(f"distance must be finite and nonnegative, got {distance}")
    gate.accumulator += distance
    if gate.accumulator > gate.delta:
        gate.accumulator = 0.0
        return Decision.REFRESH
    return Decision.REUSE


@dataclass(frozen=True)
class GateTrace:
    """Decisions in sampling order (t = high to low) plus the accumulator after each."""

    decisions: tuple[Decision, ...]
    accumulator_after: np.ndarray
    forced_first: bool

    def __post_init__(self):
        object.__setattr__(self, "accumulator_after", np.asarray(self.accumulator_after, dtype=np.float64))
        if len(self.accumulator_after) != len(self.decisions):
            raise ValueError("accumulator trace must match decision count")

    def __len__(self) -> int:
        return len(self.decisions)

    @property
    def refresh_count(self) -> int:
        return sum(d is Decision.REFRESH for d in self.decisions)

    @property
    def refresh_ratio(self) -> float:
        return self.refresh_count / len(self.decisions)

    def refresh_positions(self) -> np.ndarray:
        return np.asarray([i for i, d in enumerate(self.decisions) if d is Decision.REFRESH], dtype=np.int64)


def simulate_gate(distances, delta: float, force_first: bool = True) -> GateTrace:
    """Run the gate over a distance series in sampling order.

    With force_first, the first decision is an unconditional refresh (there
    is no cached output yet) that consumes no distance, so the trace has
    len(distances) + 1 decisions; otherwise every decision is gated and the
    trace has len(distances) decisions.
    """
    values = np.asarray(getattr(distances, "values", distances), dtype=np.float64)
    gate = CacheGate(delta=delta)
    decisions: list[Decision] = []
    accs: list[float] = []
    if force_first:
        decisions.append(Decision.REFRESH)
        accs.append(0.0)
    for v in values:
        decisions.append(gate_step(gate, v))
        accs.append(gate.accumulator)
    return GateTrace(decisions=tuple(decisions), accumulator_after=np.asarray(accs), forced_first=force_first)


def verify_accumulation_brackets(distances, delta: float, trace: GateTrace) -> None:
    """Replay a trace and check the threshold bracketing at every refresh.

    Between consecutive refreshes the accumulated distance stays <= delta,
    and adding the refresh step's own distance exceeds delta.  Raises
    AssertionError on any violation.
    """
    values = np.asarray(getattr(distances, "values", distances), dtype=np.float64)
    offset = 1 if trace.forced_first else 0
    if len(trace) != len(values) + offset:
        raise ValueError("trace length does not match the distance series")
    acc = 0.0
    for i, v in enumerate(values):
        decision = trace.decisions[i + offset]
        acc += v
        if decision is Decision.REFRESH:
            assert acc > delta, f"refresh at index {i + offset} with accumulated {acc} <= delta {delta}"
            acc = 0.0
        else:
            assert acc <= delta, f"reuse at index {i + offset} with accumulated {acc} > delta {delta}"


@dataclass(frozen=True)
class DeltaForRatio:
    """Result of inverting the refresh-ratio map: the plateau midpoint delta,
    the ratio it achieves, and whether that ratio equals the requested one."""

    delta: float
    achieved_ratio: float
    exact: bool


def delta_for_target_ratio(distances, target_ratio: float, force_first: bool = True) -> DeltaForRatio:
    """Find the threshold whose simulated refresh ratio best matches a target.

    The refresh ratio is a non-increasing step function of delta, so the
    attainable ratios form a finite set.  This picks the attainable ratio
    closest to the target (preferring the one >= target on ties), locates
    the plateau of deltas achieving it by bisection, and returns the
    plateau midpoint.  Unattainable targets never error; `exact` is False.
    """
    values = np.asarray(getattr(distances, "values", distances), dtype=np.float64)
    if len(values) == 0:
        raise ValueError("distance series must be nonempty")
    n_decisions = len(values) + (1 if force_first else 0)
    if not 0 < target_ratio <= 1:
        raise ValueError(f"target_ratio must be in (0, 1], got {target_ratio}")
    if target_ratio < 1.0 / n_decisions:
        raise ValueError(f"target_ratio {target_ratio} below the attainable minimum 1/{n_decisions}")

    hi_cap = float(values.sum()) + 1.0

    def ratio(delta: float) -> float:
        if delta <= 0:
            # delta must be positive; 0 behaves as the limit where any
            # positive distance refreshes
            delta = np.nextafter(0.0, 1.0)
        return simulate_gate(values, delta, force_first).refresh_ratio

    def boundary(pred) -> tuple[float, float]:
        # pred is True on the low side; returns (largest True, smallest False)
        lo, hi = 0.0, hi_cap
        if not pred(lo):
            return 0.0, 0.0
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if pred(mid):
                lo = mid
            else:
                hi = mid
        return lo, hi

    at_least_lo, at_least_hi = boundary(lambda d: ratio(d) >= target_ratio)
    ratio_above = ratio(at_least_lo)
    ratio_below = ratio(at_least_hi) if at_least_hi > at_least_lo else ratio(hi_cap)
    if abs(ratio_above - target_ratio) <= abs(target_ratio - ratio_below):
        chosen = ratio_above
    else:
        chosen = ratio_below

    upper_lo, _ = boundary(lambda d: ratio(d) > chosen)
    plateau_lo = upper_lo
    plateau_hi, _ = boundary(lambda d: ratio(d) >= chosen)
    if plateau_hi <= plateau_lo:
        plateau_hi = hi_cap
    delta = 0.5 * (plateau_lo + plateau_hi)
    achieved = ratio(delta)
    return DeltaForRatio(delta=delta, achieved_ratio=achieved, exact=achieved == target_ratio)


def refresh_heatmap(traces: list[GateTrace]) -> np.ndarray:
    """Per-position refresh frequency across runs of equal length."""
    if not traces:
        raise ValueError("need at least one trace")
    n = len(traces[0])
    if any(len(tr) != n for tr in traces):
        raise ValueError("all traces must have equal length")
    counts = np.zeros(n, dtype=np.float64)
    for tr in traces:
        for i, d in enumerate(tr.decisions):
            if d is Decision.REFRESH:
                counts[i] += 1
    return counts / len(traces)


def trace_timesteps(trace: GateTrace, distances: DistanceSeries | None = None) -> np.ndarray:
    """Timesteps for each decision, high to low.

    When the distance series carries explicit timesteps, the forced first
    decision sits one step above the first gated one; otherwise decisions
    count down from len(trace).
    """
    n = len(trace)
    if distances is not None and distances.t is not None and len(distances.t):
        ts = list(distances.t)
        if trace.forced_first:
            ts = [ts[0] + 1] + ts
        return np.asarray(ts, dtype=np.int64)
    return np.arange(n, 0, -1, dtype=np.int64)
