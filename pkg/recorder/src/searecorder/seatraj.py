"""SEATRAJ v1 writer.

Implements the interchange format independently of the consumer library so
that the recorder's only coupling to it is the byte layout itself:

    "SEAT" | u32 version=1 | u8 rank | u32 C,F,H,W | u32 T | u8 schedule |
    (T+1) f32 a | (T+1) f32 b | records { u32 t, u8 flags, f32 tensors },
    t strictly descending, flags bit0 = input present, bit1 = output present,
    tensors row-major channel-major [C,(F),H,W], input before output.

All multi-byte values are little-endian.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SEAT"
VERSION = 1
FLAG_INPUT = 0x01
FLAG_OUTPUT = 0x02

_HEADER = struct.Struct("<4sIB4I I B")
_STEP = struct.Struct("<IB")


def encode(rank: int, dims: tuple[int, int, int, int], schedule_kind: int,
           a: np.ndarray, b: np.ndarray,
           steps: list[tuple[int, np.ndarray | None, np.ndarray | None]]) -> bytes:
    """Serialize one trajectory; steps are (t, input, output) descending in t."""
    C, F, H, W = dims
    if rank not in (2, 3):
        raise ValueError(f"rank must be 2 or 3, got {rank}")
    if rank == 2 and F != 1:
        raise ValueError("rank 2 requires F = 1")
    if min(C, F, H, W) < 1:
        raise ValueError(f"dims must be positive, got {dims}")
    a = np.asarray(a, dtype="<f4")
    b = np.asarray(b, dtype="<f4")
    T = len(a) - 1
    if len(b) != T + 1 or T < 1:
        raise ValueError("schedule arrays must share a length of T + 1 with T >= 1")

    tensor_shape = (C, H, W) if rank == 2 else (C, F, H, W)
    out = bytearray()
    out += _HEADER.pack(MAGIC, VERSION, rank, C, F, H, W, T, schedule_kind)
    out += a.tobytes()
    out += b.tobytes()
    prev_t = None
    for t, inp, outp in steps:
        if not 0 <= t <= T:
            raise ValueError(f"step t={t} outside [0, {T}]")
        if prev_t is not None and t >= prev_t:
            raise ValueError(f"steps must be strictly descending in t, got {prev_t} then {t}")
        prev_t = t
        flags = (FLAG_INPUT if inp is not None else 0) | (FLAG_OUTPUT if outp is not None else 0)
        if flags == 0:
            raise ValueError(f"step t={t} carries neither input nor output")
        out += _STEP.pack(t, flags)
        for tensor in (inp, outp):
            if tensor is None:
                continue
            tensor = np.ascontiguousarray(tensor, dtype="<f4")
            if tensor.shape != tensor_shape:
                raise ValueError(f"tensor shape {tensor.shape} != {tensor_shape}")
            if not np.isfinite(tensor).all():
                raise ValueError(f"non-finite tensor at t={t}")
            out += tensor.tobytes()
    return bytes(out)
