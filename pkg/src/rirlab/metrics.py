"""Room-acoustic metrics and losses on impulse-response pairs.

Energy decay relief (per-band remaining energy over time), its squared-error
loss, early reflection energy, direct-to-reverberant ratio, waveform MSE,
backward-integration T60, and an aggregate report matching the evaluation
CSV emitted by the CLI.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .dsp import BandPartition, Signal, StftConfig, stft
from .errors import EstimationFailedError, InvalidConfigError, InvalidInputError

ENERGY_FLOOR = 1e-12  # applied before every log10; bounds dB outputs at -120
EARLY_WINDOW_S = 0.080
DIRECT_WINDOW_S = 0.0025


def _check_pair(a: Signal, b: Signal) -> None:
    if a.sample_rate != b.sample_rate:
        raise InvalidInputError(f"sample-rate mismatch: {a.sample_rate} vs {b.sample_rate}")
    if len(a) != len(b):
        raise InvalidInputError(f"length mismatch: {len(a)} vs {len(b)}")


def _check_partition(signal: Signal, cfg: StftConfig, partition: BandPartition) -> None:
    if partition.fft_size != cfg.window_size:
        raise InvalidConfigError(
            f"partition built for fft_size {partition.fft_size}, config window is {cfg.window_size}"
        )
    if partition.sample_rate != signal.sample_rate:
        raise InvalidConfigError(
            f"partition built for {partition.sample_rate} Hz, signal is {signal.sample_rate} Hz"
        )


@dataclass(frozen=True)
class EdrMatrix:
    """Remaining energy per (band, frame) for one impulse response.

    values[b][t] is the energy still present from frame t onward in band b,
    so every row is non-increasing and row heads hold total band energy.
    """

    values: np.ndarray  # [bands x frames]
    partition: BandPartition
    frame_times: np.ndarray  # seconds, window centers

    def in_db(self, floor: float = ENERGY_FLOOR) -> np.ndarray:
        return 10.0 * np.log10(np.maximum(self.values, floor))


def edr(rir: Signal, cfg: StftConfig, partition: BandPartition) -> EdrMatrix:
    """Energy decay relief of an impulse response.

    Per band and frame: sum of |STFT|^2 over the band's bins and over all
    frames from that frame to the end (a per-band Schroeder curve).
    """
    _check_partition(rir, cfg, partition)
    spec = stft(rir, cfg)  # [frames x bins]
    power = np.abs(spec) ** 2
    band_energy = partition.band_matrix(cfg.n_bins) @ power.T  # [bands x frames]
    values = np.flip(np.cumsum(np.flip(band_energy, axis=1), axis=1), axis=1)
    times = cfg.frame_times(values.shape[1], rir.sample_rate)
    return EdrMatrix(values=values, partition=partition, frame_times=times)


def edr_loss(
    estimated: Signal, truth: Signal, cfg: StftConfig, partition: BandPartition
) -> tuple[float, np.ndarray]:
    """Mean squared difference of the two decay-relief surfaces.

    Returns (mean over bands and frames, per-band frame-means). Symmetric in
    its arguments and exactly zero for identical inputs.
    """
    _check_pair(estimated, truth)
    diff = edr(estimated, cfg, partition).values - edr(truth, cfg, partition).values
    per_band = np.mean(diff**2, axis=1)
    return float(np.mean(per_band)), per_band


def ere(rir: Signal) -> float:
    """Early reflection energy: dB energy in the first 80 ms."""
    if len(rir) < 1:
        raise InvalidInputError("empty signal")
    n_early = int(np.floor(EARLY_WINDOW_S * rir.sample_rate)) + 1
    energy = float(np.sum(rir.samples[:n_early] ** 2))
    return 10.0 * np.log10(max(energy, ENERGY_FLOOR))


def drr(rir: Signal) -> float:
    """Direct-to-reverberant ratio in dB.

    Direct sound is the +-2.5 ms window around the absolute peak sample
    (clamped to the signal); everything else counts as reverberant.
    """
    if len(rir) < 1 or not np.any(rir.samples):
        raise InvalidInputError("cannot locate a peak in an all-zero signal")
    peak = int(np.argmax(np.abs(rir.samples)))
    half = int(round(DIRECT_WINDOW_S * rir.sample_rate))
    lo = max(0, peak - half)
    hi = min(len(rir), peak + half + 1)
    direct = float(np.sum(rir.samples[lo:hi] ** 2))
    rest = float(np.sum(rir.samples**2)) - direct
    return 10.0 * np.log10(direct / max(rest, ENERGY_FLOOR))


def mse(estimated: Signal, truth: Signal, peak_normalize: bool = False) -> float:
    """Mean squared sample difference.

    With peak_normalize both signals are scaled to unit peak first; the
    default compares raw amplitudes.
    """
    _check_pair(estimated, truth)
    est, tru = estimated.samples, truth.samples
    if peak_normalize:
        est_peak, tru_peak = np.max(np.abs(est)), np.max(np.abs(tru))
        if est_peak == 0 or tru_peak == 0:
            raise InvalidInputError("cannot peak-normalize an all-zero signal")
        est, tru = est / est_peak, tru / tru_peak
    return float(np.mean((tru - est) ** 2))


def schroeder_t60(rir: Signal) -> float:
    """Reverberation time from the backward-integrated energy decay curve.

    Fits a least-squares line to the -5 dB..-25 dB segment of the decay and
    extrapolates the time to fall 60 dB. Scale-invariant by construction.
    """
    energy = rir.samples**2
    total = float(np.sum(energy))
    if total <= 0:
        raise InvalidInputError("signal has no energy")
    edc = np.flip(np.cumsum(np.flip(energy)))
    valid = edc > 0
    db = np.full(edc.shape, -np.inf)
    db[valid] = 10.0 * np.log10(edc[valid] / edc[0])
    seg = np.nonzero((db <= -5.0) & (db >= -25.0))[0]
    if seg.size < 3:
        raise EstimationFailedError(
            f"decay segment between -5 and -25 dB has only {seg.size} points"
        )
    t = seg / rir.sample_rate
    slope, _ = np.polyfit(t, db[seg], 1)
    if slope >= 0:
        raise EstimationFailedError("energy decay curve is not decreasing over the fit segment")
    return float(-60.0 / slope)


def banded_early_energy_db(
    signal: Signal, cfg: StftConfig, partition: BandPartition
) -> np.ndarray:
    """Per-band dB energy over frames whose window centers fall in [0, 80 ms]."""
    _check_partition(signal, cfg, partition)
    spec = stft(signal, cfg)
    power = np.abs(spec) ** 2
    times = cfg.frame_times(power.shape[0], signal.sample_rate)
    early = times <= EARLY_WINDOW_S
    band_energy = partition.band_matrix(cfg.n_bins) @ power[early].sum(axis=0)
    return 10.0 * np.log10(np.maximum(band_energy, ENERGY_FLOOR))


@dataclass(frozen=True)
class MetricReport:
    """Aggregate metrics over a set of (estimated, truth) pairs."""

    centers: tuple[float, ...]
    per_band_log_edr_loss: np.ndarray
    per_band_ere_mae: np.ndarray
    drr_mae: float
    mse: float
    n_pairs: int
    merged: tuple[tuple[float, float], ...] = ()


def metric_report(
    pairs: list[tuple[Signal, Signal]], cfg: StftConfig, partition: BandPartition
) -> MetricReport:
    """Evaluate a batch of estimates against their ground truths.

    Per band: log10 of the mean decay-relief loss across pairs, and the mean
    absolute error of band-restricted early energy in dB. Plus broadband
    DRR mean absolute error and mean waveform MSE.
    """
    if not pairs:
        raise InvalidInputError("metric_report needs at least one pair")
    band_losses = []
    ere_errors = []
    drr_errors = []
    mses = []
    for estimated, truth in pairs:
        _check_pair(estimated, truth)
        _, per_band = edr_loss(estimated, truth, cfg, partition)
        band_losses.append(per_band)
        ere_errors.append(
            np.abs(
                banded_early_energy_db(estimated, cfg, partition)
                - banded_early_energy_db(truth, cfg, partition)
            )
        )
        drr_errors.append(abs(drr(estimated) - drr(truth)))
        mses.append(mse(estimated, truth))
    mean_band_loss = np.mean(band_losses, axis=0)
    return MetricReport(
        centers=partition.centers,
        per_band_log_edr_loss=np.log10(np.maximum(mean_band_loss, ENERGY_FLOOR)),
        per_band_ere_mae=np.mean(ere_errors, axis=0),
        drr_mae=float(np.mean(drr_errors)),
        mse=float(np.mean(mses)),
        n_pairs=len(pairs),
        merged=partition.merged,
    )


def report_to_csv(report: MetricReport) -> str:
    """Render a report as CSV: one (center_hz, log_edr_loss, ere_mae_db) row
    per band, then a summary row carrying (drr_mae_db, mse).

    Bands that were merged away by the partition are noted on a leading
    comment line.
    """
    out = io.StringIO()
    if report.merged:
        notes = ";".join(f"{int(src)}Hz->{int(dst)}Hz" for src, dst in report.merged)
        out.write(f"# merged_bands: {notes}\n")
    out.write("center_hz,log_edr_loss,ere_mae_db\n")
    for center, log_loss, ere_mae in zip(
        report.centers, report.per_band_log_edr_loss, report.per_band_ere_mae
    ):
        out.write(f"{center:g},{float(log_loss)!r},{float(ere_mae)!r}\n")
    out.write(f"summary,{float(report.drr_mae)!r},{float(report.mse)!r}\n")
    return out.getvalue()
