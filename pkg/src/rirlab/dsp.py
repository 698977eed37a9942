"""Deterministic signal-processing kernels.

STFT framing, octave-band partitioning of FFT bins, FFT convolution and
regularized spectral-division deconvolution. Everything here is a pure
function of its inputs and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError, InvalidInputError

WINDOW_KINDS = ("rectangular", "hann")


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def next_pow2(n: int) -> int:
    """Smallest power of two >= n."""
    p = 1
    while p < n:
        p <<= 1
    return p


@dataclass(frozen=True, eq=False)
class Signal:
    """A mono waveform with its sample rate.

    Samples are stored as float64; NaN/Inf samples and non-positive sample
    rates are rejected on construction.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidInputError(f"signal must be 1-D, got shape {samples.shape}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise InvalidInputError("signal contains NaN or Inf samples")
        if int(self.sample_rate) <= 0:
            raise InvalidInputError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    """Framing parameters for the short-time transform.

    window_size must be a power of two; hop in (0, window_size].
    """

    window_size: int
    hop: int
    window: str = "hann"

    def __post_init__(self):
        if not _is_power_of_two(self.window_size):
            raise InvalidConfigError(f"window_size must be a power of two, got {self.window_size}")
        if not 0 < self.hop <= self.window_size:
            raise InvalidConfigError(f"hop must be in (0, window_size], got {self.hop}")
        if self.window not in WINDOW_KINDS:
            raise InvalidConfigError(f"unknown window {self.window!r}, expected one of {WINDOW_KINDS}")

    @property
    def n_bins(self) -> int:
        return self.window_size // 2 + 1

    def frame_count(self, n_samples: int) -> int:
        if n_samples < self.window_size:
            raise InvalidInputError(
                f"signal of {n_samples} samples is shorter than one window ({self.window_size})"
            )
        return (n_samples - self.window_size) // self.hop + 1

    def frame_times(self, n_frames: int, sample_rate: int) -> np.ndarray:
        """Window-center time in seconds for each frame."""
        starts = np.arange(n_frames) * self.hop
        return (starts + self.window_size / 2.0) / sample_rate


def make_window(kind: str, size: int) -> np.ndarray:
    """Analysis window of the given kind; hann is the periodic variant."""
    if kind == "rectangular":
        return np.ones(size)
    if kind == "hann":
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(size) / size)
    raise InvalidConfigError(f"unknown window {kind!r}")


def frame_signal(samples: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Slice a waveform into [frames x window_size] with the config's hop."""
    n_frames = cfg.frame_count(samples.size)
    view = np.lib.stride_tricks.sliding_window_view(samples, cfg.window_size)
    return view[:: cfg.hop][:n_frames]


def stft(signal: Signal, cfg: StftConfig) -> np.ndarray:
    """One-sided short-time Fourier transform.

    Parameters
    ----------
    signal : Signal
        Input waveform; must be at least one window long.
    cfg : StftConfig
        Framing and window parameters.

    Returns
    -------
    ndarray, complex, shape (frames, window_size // 2 + 1)
        Frame count is floor((len - window_size) / hop) + 1; no padding is
        applied at either end.
    """
    frames = frame_signal(signal.samples, cfg)
    win = make_window(cfg.window, cfg.window_size)
    return np.fft.rfft(frames * win, axis=-1)


@dataclass(frozen=True)
class BandPartition:
    """Assignment of one-sided FFT bins to octave bands.

    Each kept band owns a contiguous, non-empty range of bin indices;
    ranges are disjoint and ordered by frequency. Requested centers whose
    band ended up owning no bin are recorded in ``merged`` as
    (dropped_center, absorbed_into_center) pairs.
    """

    centers: tuple[float, ...]
    bin_ranges: tuple[tuple[int, int], ...]  # half-open [start, stop) index pairs
    sample_rate: int
    fft_size: int
    merged: tuple[tuple[float, float], ...] = field(default=())

    @property
    def n_bands(self) -> int:
        return len(self.centers)

    @property
    def covered_bins(self) -> int:
        return self.bin_ranges[-1][1] if self.bin_ranges else 0

    def band_matrix(self, n_bins: int) -> np.ndarray:
        """0/1 matrix [bands x n_bins] summing bins into their band."""
        m = np.zeros((self.n_bands, n_bins))
        for b, (start, stop) in enumerate(self.bin_ranges):
            m[b, start:stop] = 1.0
        return m


def octave_bands(sample_rate: int, fft_size: int, centers: list[float]) -> BandPartition:
    """Partition one-sided FFT bins into octave bands around the given centers.

    Every bin whose frequency lies below the top band's upper edge
    (top_center * sqrt(2)) is assigned to the band with the nearest
    log-frequency center; the DC bin always goes to the lowest band. Bands
    that end up empty are dropped and recorded as merged into the nearest
    surviving band above them (below, for an empty top band).
    """
    centers = [float(c) for c in centers]
    if not centers:
        raise InvalidInputError("at least one band center is required")
    if any(c2 <= c1 for c1, c2 in zip(centers, centers[1:])):
        raise InvalidInputError(f"band centers must be strictly increasing, got {centers}")
    if centers[0] <= 0:
        raise InvalidInputError("band centers must be positive")
    nyquist = sample_rate / 2.0
    if centers[-1] >= nyquist:
        raise InvalidInputError(
            f"top band center {centers[-1]} Hz must lie below Nyquist ({nyquist} Hz)"
        )

    n_bins = fft_size // 2 + 1
    freqs = np.arange(n_bins) * (sample_rate / fft_size)
    top_edge = centers[-1] * np.sqrt(2.0)
    covered = int(np.count_nonzero(freqs < top_edge))

    log_centers = np.log(centers)
    assignment = np.zeros(covered, dtype=int)
    if covered > 1:
        dist = np.abs(np.log(freqs[1:covered])[:, None] - log_centers[None, :])
        assignment[1:] = np.argmin(dist, axis=1)

    kept_centers: list[float] = []
    ranges: list[tuple[int, int]] = []
    empty: list[float] = []
    for b, center in enumerate(centers):
        idx = np.nonzero(assignment == b)[0]
        if idx.size == 0:
            empty.append(center)
            continue
        kept_centers.append(center)
        ranges.append((int(idx[0]), int(idx[-1]) + 1))

    if not kept_centers:
        raise InvalidInputError("no FFT bin falls inside any requested band")

    merged = []
    for center in empty:
        above = [c for c in kept_centers if c > center]
        target = min(above) if above else max(c for c in kept_centers if c < center)
        merged.append((center, target))

    return BandPartition(
        centers=tuple(kept_centers),
        bin_ranges=tuple(ranges),
        sample_rate=int(sample_rate),
        fft_size=int(fft_size),
        merged=tuple(merged),
    )


def fft_convolve(clean: Signal, rir: Signal) -> Signal:
    """Full linear convolution of two signals via the FFT.

    Output length is len(clean) + len(rir) - 1; sample rates must match.
    """
    if clean.sample_rate != rir.sample_rate:
        raise InvalidInputError(
            f"sample-rate mismatch: {clean.sample_rate} vs {rir.sample_rate}"
        )
    if len(clean) == 0 or len(rir) == 0:
        raise InvalidInputError("cannot convolve empty signals")
    n_out = len(clean) + len(rir) - 1
    n_fft = next_pow2(n_out)
    spec = np.fft.rfft(clean.samples, n_fft) * np.fft.rfft(rir.samples, n_fft)
    out = np.fft.irfft(spec, n_fft)[:n_out]
    return Signal(out, clean.sample_rate)


def spectral_deconvolve(reverberant: Signal, clean: Signal, eps: float, out_len: int) -> Signal:
    """Recover an impulse response by regularized spectral division.

    Both signals are zero-padded to a common power-of-two FFT length and the
    quotient is formed as F(reverberant) * conj(F(clean)) / (|F(clean)|^2 + eps)
    bin-wise, so the result stays finite for eps > 0 even at spectral zeros
    of the clean signal.

    Parameters
    ----------
    reverberant, clean : Signal
        The observed convolution product and the known dry input.
    eps : float
        Tikhonov regularizer added to the clean power spectrum; must be >= 0.
    out_len : int
        Number of leading samples of the inverse transform to return.
    """
    if reverberant.sample_rate != clean.sample_rate:
        raise InvalidInputError(
            f"sample-rate mismatch: {reverberant.sample_rate} vs {clean.sample_rate}"
        )
    if len(reverberant) == 0 or len(clean) == 0:
        raise InvalidInputError("cannot deconvolve empty signals")
    if eps < 0:
        raise InvalidInputError(f"eps must be >= 0, got {eps}")
    n_fft = next_pow2(max(len(reverberant), len(clean)))
    if not 0 < out_len <= n_fft:
        raise InvalidInputError(f"out_len must be in [1, {n_fft}], got {out_len}")
    clean_spec = np.fft.rfft(clean.samples, n_fft)
    denom = np.abs(clean_spec) ** 2 + eps
    if eps == 0.0 and np.any(denom == 0.0):
        raise ZeroDivisionError(
            "clean spectrum has zero-magnitude bins; eps=0 division is undefined"
        )
    quotient = np.fft.rfft(reverberant.samples, n_fft) * np.conj(clean_spec) / denom
    out = np.fft.irfft(quotient, n_fft)[:out_len]
    return Signal(out, reverberant.sample_rate)
