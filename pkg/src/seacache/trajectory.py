"""Recorded feature trajectories: the SEATRAJ binary format and replay analyses.

SEATRAJ v1 layout, all integers and floats little-endian:

    magic        4 bytes  "SEAT"
    version      u32      1
    rank         u8       2 (spatial) or 3 (spatiotemporal)
    dims         4 x u32  C, F, H, W   (F = 1 for rank 2)
    T            u32      solver step count
    schedule     u8       0 = dpm-linear, 1 = dpm-cosine, 2 = rectified flow
    a            (T+1) x f32
    b            (T+1) x f32
    steps        repeated records, t strictly descending:
                   t      u32
                   flags  u8   bit0 = has input, bit1 = has output
                   tensors f32, row-major, channel-major [C, (F), H, W],
                           input first when both present

Tensors are stored grid-shaped; token-sequence captures must be reshaped
before writing.  Readers validate everything and never return partial data.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

from .metric import DEFAULT_XI, DistanceSeries, MetricKind, series_from_features
from .schedule import NoiseSchedule, ScheduleKind
from .spectrum import FilterBank

MAGIC = b"SEAT"
VERSION = 1
_HEADER = struct.Struct("<4sIB4I I B")  # magic, version, rank, C F H W, T, schedule kind
_STEP_HEADER = struct.Struct("<IB")

_KIND_TO_BYTE = {
    ScheduleKind.DPM_LINEAR: 0,
    ScheduleKind.DPM_COSINE: 1,
    ScheduleKind.RECTIFIED_FLOW: 2,
}
_BYTE_TO_KIND = {v: k for k, v in _KIND_TO_BYTE.items()}

FLAG_INPUT = 0x01
FLAG_OUTPUT = 0x02

# Guard against absurd per-tensor byte counts from corrupt headers.
_MAX_TENSOR_BYTES = 2**32


class TrajectoryFormatError(ValueError):
    """A SEATRAJ file or in-memory trajectory violates the format."""

    def __init__(self, message: str, offset: int | None = None, record: int | None = None):
        where = []
        if record is not None:
            where.append(f"record {record}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
        self.offset = offset
        self.record = record


class CapabilityError(RuntimeError):
    """The requested analysis needs data the trajectory does not carry."""


class FeatureSide(enum.Enum):
    INPUT = "input"
    OUTPUT = "output"


@dataclass
class TrajectoryStep:
    t: int
    input: np.ndarray | None = None
    output: np.ndarray | None = None

    @property
    def flags(self) -> int:
        return (FLAG_INPUT if self.input is not None else 0) | (FLAG_OUTPUT if self.output is not None else 0)


@dataclass
class Trajectory:
    """In-memory trajectory; arrays keep whatever float precision they came with.

    Writing casts tensors and coefficients to float32, so a trajectory that
    originated from float64 computation round-trips through disk with f32
    precision.  Trajectories built by `read_trajectory` are already f32 and
    round-trip bitwise.
    """

    schedule: NoiseSchedule
    rank: int
    channels: int
    frames: int
    height: int
    width: int
    steps: list[TrajectoryStep] = field(default_factory=list)

    @property
    def grid_shape(self) -> tuple[int, ...]:
        if self.rank == 2:
            return (self.height, self.width)
        return (self.frames, self.height, self.width)

    @property
    def tensor_shape(self) -> tuple[int, ...]:
        return (self.channels,) + self.grid_shape

    def validate(self) -> None:
        if self.rank not in (2, 3):
            raise TrajectoryFormatError(f"rank must be 2 or 3, got {self.rank}")
        if self.rank == 2 and self.frames != 1:
            raise TrajectoryFormatError(f"rank 2 requires frames = 1, got {self.frames}")
        if min(self.channels, self.frames, self.height, self.width) < 1:
            raise TrajectoryFormatError("all dims must be positive")
        for d in (self.channels, self.frames, self.height, self.width, self.schedule.T):
            if d > 0xFFFFFFFF:
                raise TrajectoryFormatError(f"dimension {d} overflows 32 bits")
        if 4 * self.channels * self.frames * self.height * self.width > _MAX_TENSOR_BYTES:
            raise TrajectoryFormatError("tensor payload exceeds the format's size bound")
        if len(self.schedule.a) != self.schedule.T + 1:
            raise TrajectoryFormatError("schedule arrays must have length T + 1")
        prev_t = None
        for i, step in enumerate(self.steps):
            if not 0 <= step.t <= self.schedule.T:
                raise TrajectoryFormatError(f"step t={step.t} outside [0, T]", record=i)
            if prev_t is not None and step.t >= prev_t:
                raise TrajectoryFormatError(f"step t values must be strictly descending, got {prev_t} then {step.t}", record=i)
            prev_t = step.t
            if step.input is None and step.output is None:
                raise TrajectoryFormatError("step carries neither input nor output", record=i)
            for name, arr in (("input", step.input), ("output", step.output)):
                if arr is None:
                    continue
                if tuple(arr.shape) != self.tensor_shape:
                    raise TrajectoryFormatError(
                        f"step {name} shape {tuple(arr.shape)} != {self.tensor_shape}", record=i)
                if not np.isfinite(arr).all():
                    raise TrajectoryFormatError(f"step {name} contains non-finite values", record=i)


def trajectory_to_bytes(traj: Trajectory) -> bytes:
    """Serialize; deterministic bytes for identical input."""
    traj.validate()
    out = bytearray()
    out += _HEADER.pack(
        MAGIC, VERSION, traj.rank,
        traj.channels, traj.frames, traj.height, traj.width,
        traj.schedule.T, _KIND_TO_BYTE[traj.schedule.kind],
    )
    out += np.asarray(traj.schedule.a, dtype="<f4").tobytes()
    out += np.asarray(traj.schedule.b, dtype="<f4").tobytes()
    for step in traj.steps:
        out += _STEP_HEADER.pack(step.t, step.flags)
        if step.input is not None:
            out += np.ascontiguousarray(step.input, dtype="<f4").tobytes()
        if step.output is not None:
            out += np.ascontiguousarray(step.output, dtype="<f4").tobytes()
    return bytes(out)


def write_trajectory(traj: Trajectory, path) -> None:
    data = trajectory_to_bytes(traj)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(f"failed writing trajectory to {path}: {exc}") from exc


def trajectory_from_bytes(data: bytes) -> Trajectory:
    """Parse and fully validate; raises TrajectoryFormatError, never misreads."""
    if len(data) < _HEADER.size:
        raise TrajectoryFormatError(f"file too short for header ({len(data)} bytes)", offset=0)
    magic, version, rank, C, F, H, W, T, kind_byte = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise TrajectoryFormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise TrajectoryFormatError(f"unsupported version {version}", offset=4)
    if rank not in (2, 3):
        raise TrajectoryFormatError(f"rank must be 2 or 3, got {rank}", offset=8)
    if min(C, F, H, W) < 1:
        raise TrajectoryFormatError(f"dims must be positive, got C={C} F={F} H={H} W={W}", offset=9)
    if rank == 2 and F != 1:
        raise TrajectoryFormatError(f"rank 2 requires F = 1, got {F}", offset=13)
    if T < 1:
        raise TrajectoryFormatError(f"T must be >= 1, got {T}", offset=25)
    if kind_byte not in _BYTE_TO_KIND:
        raise TrajectoryFormatError(f"unknown schedule kind byte {kind_byte}", offset=29)
    tensor_elems = C * F * H * W
    tensor_bytes = 4 * tensor_elems
    if tensor_bytes > _MAX_TENSOR_BYTES:
        raise TrajectoryFormatError(f"dims overflow: tensor payload of {tensor_bytes} bytes", offset=9)

    offset = _HEADER.size
    coeff_bytes = 4 * (T + 1)
    if len(data) < offset + 2 * coeff_bytes:
        raise TrajectoryFormatError("file truncated inside schedule coefficients", offset=offset)
    a_raw = np.frombuffer(data, dtype="<f4", count=T + 1, offset=offset)
    offset += coeff_bytes
    b_raw = np.frombuffer(data, dtype="<f4", count=T + 1, offset=offset)
    offset += coeff_bytes
    if not (np.isfinite(a_raw).all() and np.isfinite(b_raw).all()):
        raise TrajectoryFormatError("non-finite schedule coefficients", offset=_HEADER.size)
    schedule = NoiseSchedule(kind=_BYTE_TO_KIND[kind_byte], T=T,
                             a=a_raw.astype(np.float64), b=b_raw.astype(np.float64))

    grid_shape = (H, W) if rank == 2 else (F, H, W)
    tensor_shape = (C,) + grid_shape
    steps: list[TrajectoryStep] = []
    prev_t = None
    record = 0
    while offset < len(data):
        if len(data) - offset < _STEP_HEADER.size:
            raise TrajectoryFormatError("file truncated inside step header", offset=offset, record=record)
        t, flags = _STEP_HEADER.unpack_from(data, offset)
        offset += _STEP_HEADER.size
        if flags == 0 or flags & ~(FLAG_INPUT | FLAG_OUTPUT):
            raise TrajectoryFormatError(f"invalid flags byte 0x{flags:02x}", offset=offset - 1, record=record)
        if t > T:
            raise TrajectoryFormatError(f"step t={t} exceeds T={T}", offset=offset - _STEP_HEADER.size, record=record)
        if prev_t is not None and t >= prev_t:
            raise TrajectoryFormatError(f"step t values must be strictly descending, got {prev_t} then {t}",
                                        offset=offset - _STEP_HEADER.size, record=record)
        prev_t = t
        tensors = {}
        for flag, name in ((FLAG_INPUT, "input"), (FLAG_OUTPUT, "output")):
            if not flags & flag:
                continue
            if len(data) - offset < tensor_bytes:
                raise TrajectoryFormatError(
                    f"file truncated inside {name} tensor (need {tensor_bytes} bytes, have {len(data) - offset})",
                    offset=offset, record=record)
            tensors[name] = np.frombuffer(data, dtype="<f4", count=tensor_elems, offset=offset).reshape(tensor_shape).copy()
            offset += tensor_bytes
        steps.append(TrajectoryStep(t=t, input=tensors.get("input"), output=tensors.get("output")))
        record += 1
    traj = Trajectory(schedule=schedule, rank=rank, channels=C, frames=F, height=H, width=W, steps=steps)
    traj.validate()
    return traj


def read_trajectory(path) -> Trajectory:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise OSError(f"failed reading trajectory from {path}: {exc}") from exc
    return trajectory_from_bytes(data)


def replay_distances(
    traj: Trajectory,
    bank: FilterBank,
    kinds: list[MetricKind],
    feature: FeatureSide = FeatureSide.INPUT,
    xi: float = DEFAULT_XI,
) -> dict[MetricKind, DistanceSeries]:
    """Consecutive-step distance series over a recorded trajectory.

    Each record pairs with the previous (higher-t) one; features are
    filtered with their own timesteps' filters, so gaps in the recorded
    steps are handled naturally.
    """
    if bank.grid.shape != traj.grid_shape:
        raise ValueError(f"bank grid {bank.grid.shape} does not match trajectory dims {traj.grid_shape}")
    if bank.T != traj.schedule.T:
        raise ValueError(f"bank T={bank.T} does not match trajectory T={traj.schedule.T}")
    missing = [s.t for s in traj.steps if (s.input if feature is FeatureSide.INPUT else s.output) is None]
    if missing:
        raise CapabilityError(f"trajectory has no {feature.value} features at steps {missing}")
    if len(traj.steps) < 2:
        raise CapabilityError("need at least two recorded steps to form distances")
    features = [
        (s.t, np.asarray(s.input if feature is FeatureSide.INPUT else s.output, dtype=np.float64))
        for s in traj.steps
    ]
    return {kind: series_from_features(features, bank, kind, xi) for kind in kinds}


def trajectory_from_run(result, schedule: NoiseSchedule, grid_shape: tuple[int, ...]) -> Trajectory:
    """Package a synthetic RunResult as a trajectory (float64, not yet quantized)."""
    rank = len(grid_shape)
    if rank == 2:
        frames, (height, width) = 1, grid_shape
    else:
        frames, height, width = grid_shape
    outputs = dict(result.outputs)
    steps = [
        TrajectoryStep(t=t, input=np.asarray(x), output=outputs.get(t))
        for t, x in result.inputs
    ]
    channels = steps[0].input.shape[0]
    return Trajectory(schedule=schedule, rank=rank, channels=channels,
                      frames=frames, height=height, width=width, steps=steps)
