"""Mono WAV reading and writing (PCM16 and IEEE float32)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import Signal
from .errors import UnsupportedFormatError

FORMATS = ("float32", "pcm16")


def read_wav(path: str | Path) -> Signal:
    """Read a mono WAV file into a float64 Signal.

    PCM16 samples are scaled to [-1, 1) by 1/32768; float32 samples are
    taken as-is. Anything else (multi-channel, other codecs) is rejected.
    """
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise UnsupportedFormatError(
            f"{path}: expected mono audio, got {data.ndim} dimensions"
        )
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedFormatError(
            f"{path}: unsupported sample format {data.dtype}, expected int16 or float32"
        )
    return Signal(samples, rate)


def write_wav(path: str | Path, signal: Signal, fmt: str = "float32") -> None:
    """Write a Signal to a mono WAV file.

    float32 round-trips exactly through read_wav; pcm16 clips to [-1, 1]
    and quantizes, so the round-trip error is bounded by 1/32768.
    """
    if fmt not in FORMATS:
        raise UnsupportedFormatError(f"unsupported write format {fmt!r}, expected {FORMATS}")
    if fmt == "float32":
        data = signal.samples.astype("<f4")
    else:
        quantized = np.round(np.clip(signal.samples, -1.0, 1.0) * 32768.0)
        data = np.clip(quantized, -32768, 32767).astype("<i2")
    wavfile.write(str(path), signal.sample_rate, data)
