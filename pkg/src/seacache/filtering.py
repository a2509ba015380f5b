"""Frequency-domain filtering of feature tensors.

A feature tensor is a real ndarray of shape (C, H, W) or (C, F, H, W):
channel-major, with the trailing axes matching a RadialGrid.  Filtering is
FFT -> pointwise gain -> iFFT, applied to each channel independently.
"""

from __future__ import annotations

import numpy as np

from .spectrum import RadialGrid


def validate_feature(tensor: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Check a (C, *spatial) tensor against a grid; returns it as float64."""
    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.ndim != len(grid.shape) + 1:
        raise ValueError(f"expected a (C, {', '.join(map(str, grid.shape))}) tensor, got shape {tensor.shape}")
    if tensor.shape[1:] != grid.shape:
        raise ValueError(f"spatial shape {tensor.shape[1:]} does not match grid {grid.shape}")
    if not np.isfinite(tensor).all():
        raise ValueError("feature values must be finite")
    return tensor


def apply_filter(gains: np.ndarray, tensor: np.ndarray) -> np.ndarray:
    """Multiply a tensor's spectrum by real gains, channel by channel.

    Forward transform is unnormalized and the inverse carries the 1/N
    factor (numpy's default), so gains of 1 reproduce the input exactly up
    to float noise.  Radially symmetric gains guarantee a real result; the
    residual imaginary part is discarded.
    """
    gains = np.asarray(gains, dtype=np.float64)
    tensor = np.asarray(tensor, dtype=np.float64)
    rank = gains.ndim
    if tensor.ndim != rank + 1 or tensor.shape[1:] != gains.shape:
        raise ValueError(f"tensor shape {tensor.shape} does not match gains {gains.shape} plus a channel axis")
    if not np.isfinite(gains).all():
        raise ValueError("gains must be finite")
    axes = tuple(range(1, rank + 1))
    spectrum = np.fft.fftn(tensor, axes=axes)
    return np.fft.ifftn(spectrum * gains, axes=axes).real
