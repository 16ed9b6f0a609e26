"""Multichannel WAV I/O on top of scipy.io.wavfile."""
from __future__ import annotations

import numpy as np
from scipy.io import wavfile


def write_wav(path, samples: np.ndarray, sample_rate: int, fmt: str = "float32"):
    """Write (M, T) samples; ``fmt`` is "float32" or "pcm16" (clipped to [-1, 1))."""
    data = np.asarray(samples).T
    if fmt == "float32":
        data = data.astype(np.float32)
    elif fmt == "pcm16":
        data = np.clip(np.round(data * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    wavfile.write(path, sample_rate, np.ascontiguousarray(data))


def read_wav(path):
    """Return ((M, T) float64 samples, sample rate)."""
    rate, data = wavfile.read(path)
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    else:
        x = data.astype(np.float64)
    return x.T.copy(), int(rate)
