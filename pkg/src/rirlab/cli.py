"""Command-line entry point.

    rirlab synth     --out DIR --n N [--profile P] [--seed S] [--clean-dir DIR]
    rirlab train     --manifest M --out DIR [--profile P] [--set key=value ...]
    rirlab estimate  --ckpt C --in WAV --out WAV
    rirlab evaluate  --manifest M [--split S] --method {model:CKPT|baseline|identity} --out CSV
    rirlab plot-data --ckpt C --manifest M --example I --out DIR

Exit codes: 0 success, 2 argument/validation problems, 3 I/O failures,
4 numerical divergence. RIRLAB_THREADS caps evaluate's worker pool.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import metrics
from .dsp import Signal, StftConfig, octave_bands, spectral_deconvolve
from .errors import (
    InvalidConfigError,
    InvalidInputError,
    ShapeMismatchError,
    TrainingDivergedError,
    UnsupportedFormatError,
)
from .models import Estimator, estimate, load_checkpoint
from .profiles import get_profile, profile_for_sample_rate
from .synth import DatasetManifest, build_dataset, load_manifest
from .training import TrainConfig, train
from .wavio import read_wav, write_wav

USAGE_ERRORS = (InvalidInputError, InvalidConfigError, UnsupportedFormatError, ShapeMismatchError)


def _worker_count() -> int:
    env = os.environ.get("RIRLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise InvalidInputError(f"RIRLAB_THREADS={env!r} is not an integer") from exc
    return os.cpu_count() or 1


def _fit_length(signal: Signal, n: int) -> Signal:
    if len(signal) >= n:
        return Signal(signal.samples[:n], signal.sample_rate)
    padded = np.zeros(n)
    padded[: len(signal)] = signal.samples
    return Signal(padded, signal.sample_rate)


def _load_estimator(path: str) -> Estimator:
    net = load_checkpoint(path)
    if not isinstance(net, Estimator):
        raise InvalidInputError(f"{path} holds a {net.kind}, expected an estimator checkpoint")
    return net


def _eval_setup(manifest: DatasetManifest, profile_name: str):
    profile = (
        profile_for_sample_rate(manifest.sample_rate)
        if profile_name == "auto"
        else get_profile(profile_name)
    )
    stft_cfg = StftConfig(profile.stft_window, profile.stft_hop, "hann")
    partition = octave_bands(manifest.sample_rate, profile.stft_window, list(profile.band_centers))
    return stft_cfg, partition


def _apply_overrides(cfg: TrainConfig, pairs: list[str]) -> TrainConfig:
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    updates = {}
    for raw in pairs:
        if "=" not in raw:
            raise InvalidInputError(f"override {raw!r} is not of the form key=value")
        key, value = raw.split("=", 1)
        if key not in fields:
            raise InvalidInputError(f"unknown train config key {key!r}")
        current = getattr(cfg, key)
        if isinstance(current, bool):
            updates[key] = value.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            updates[key] = int(value)
        elif isinstance(current, float) or current is None:
            updates[key] = float(value)
        elif isinstance(current, str):
            updates[key] = value
        else:
            raise InvalidInputError(f"key {key!r} cannot be overridden from the command line")
    return dataclasses.replace(cfg, **updates)


def cmd_synth(args: argparse.Namespace) -> int:
    profile = get_profile(args.profile)
    clean_signals = None
    if args.clean_dir:
        wavs = sorted(Path(args.clean_dir).glob("*.wav"))
        if not wavs:
            raise InvalidInputError(f"clean directory {args.clean_dir} contains no WAV files")
        clean_signals = []
        for wav in wavs:
            sig = read_wav(wav)
            if sig.sample_rate != profile.sample_rate:
                raise InvalidInputError(
                    f"{wav} is {sig.sample_rate} Hz, profile {profile.name} expects "
                    f"{profile.sample_rate} Hz (resampling is unsupported)"
                )
            clean_signals.append(sig)
    splits = tuple(float(x) for x in args.splits.split(","))
    if len(splits) != 3:
        raise InvalidInputError(f"--splits needs three comma-separated fractions, got {args.splits}")
    manifest = build_dataset(
        out_dir=args.out,
        n_examples=args.n,
        ranges=profile.ranges,
        sample_rate=profile.sample_rate,
        example_len=profile.example_len,
        splits=splits,
        seed=args.seed,
        clean_signals=clean_signals,
    )
    counts = {s: len(manifest.split_entries(s)) for s in ("train", "val", "test")}
    print(f"manifest: {Path(args.out) / 'manifest.json'}")
    print(f"splits: train={counts['train']} val={counts['val']} test={counts['test']}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    profile = get_profile(args.profile)
    manifest = load_manifest(args.manifest)
    cfg = _apply_overrides(profile.train, args.set or [])
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = {
        "profile": profile.name,
        "manifest": str(Path(args.manifest).resolve()),
        "train": dataclasses.asdict(cfg),
        "estimator": profile.estimator.to_dict(),
        "discriminator": profile.discriminator.to_dict(),
    }
    (out_dir / "config.json").write_text(json.dumps(echo, indent=2) + "\n")
    result = train(manifest, profile.estimator, profile.discriminator, cfg, out_dir)
    print(f"best epoch: {result.best_epoch}")
    print(f"best validation edr loss: {result.best_val_edr!r}")
    print(f"run dir: {out_dir}")
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    net = _load_estimator(args.ckpt)
    sig = read_wav(args.input)
    if sig.sample_rate != net.config.sample_rate:
        raise InvalidInputError(
            f"{args.input} is {sig.sample_rate} Hz, the model expects {net.config.sample_rate} Hz"
        )
    rir = estimate(net, _fit_length(sig, net.config.input_len))
    write_wav(args.out, rir, fmt="float32")
    print(f"wrote {args.out} ({len(rir)} samples)")
    return 0


def _estimate_for_entry(method: str, net, manifest: DatasetManifest, entry, eps: float) -> Signal:
    truth_path = manifest.path(entry.rir)
    if method == "identity":
        return read_wav(truth_path)
    if method == "baseline":
        reverberant = read_wav(manifest.path(entry.reverberant))
        clean = read_wav(manifest.clean_path(entry))
        return spectral_deconvolve(reverberant, clean, eps, entry.params.rir_len)
    reverberant = read_wav(manifest.path(entry.reverberant))
    return estimate(net, _fit_length(reverberant, net.config.input_len))


def cmd_evaluate(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    entries = manifest.split_entries(args.split)
    if not entries:
        raise InvalidInputError(f"split {args.split!r} is empty")
    if args.method.startswith("model:"):
        method, net = "model", _load_estimator(args.method.split(":", 1)[1])
    elif args.method in ("baseline", "identity"):
        method, net = args.method, None
    else:
        raise InvalidInputError(
            f"unknown method {args.method!r}, expected model:CKPT, baseline, or identity"
        )
    stft_cfg, partition = _eval_setup(manifest, args.profile)

    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        estimates = list(
            pool.map(
                lambda e: _estimate_for_entry(method, net, manifest, e, args.eps), entries
            )
        )
    truths = [read_wav(manifest.path(e.rir)) for e in entries]
    pairs = list(zip(estimates, truths))
    report = metrics.metric_report(pairs, stft_cfg, partition)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(metrics.report_to_csv(report))

    per_example = out.with_name(out.stem + "_examples.csv")
    with open(per_example, "w") as fh:
        fh.write("example,reverberant,edr_loss,ere_err_db,drr_err_db,mse\n")
        for i, (entry, (est, truth)) in enumerate(zip(entries, pairs)):
            loss, _ = metrics.edr_loss(est, truth, stft_cfg, partition)
            ere_err = float(abs(metrics.ere(est) - metrics.ere(truth)))
            drr_err = float(abs(metrics.drr(est) - metrics.drr(truth)))
            fh.write(
                f"{i},{entry.reverberant},{loss!r},{ere_err!r},{drr_err!r},"
                f"{metrics.mse(est, truth)!r}\n"
            )
    print(f"report: {out}")
    print(f"per-example: {per_example}")
    return 0


def cmd_plot_data(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    if not 0 <= args.example < len(manifest.entries):
        raise InvalidInputError(
            f"example index {args.example} out of range [0, {len(manifest.entries) - 1}]"
        )
    entry = manifest.entries[args.example]
    net = _load_estimator(args.ckpt)
    truth = read_wav(manifest.path(entry.rir))
    reverberant = read_wav(manifest.path(entry.reverberant))
    est = estimate(net, _fit_length(reverberant, net.config.input_len))
    stft_cfg, partition = _eval_setup(manifest, args.profile)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    truth_edr = metrics.edr(truth, stft_cfg, partition)
    est_edr = metrics.edr(est, stft_cfg, partition)
    truth_db, est_db = truth_edr.in_db(), est_edr.in_db()
    for b, center in enumerate(partition.centers):
        path = out_dir / f"edr_{int(center)}.csv"
        with open(path, "w") as fh:
            fh.write("time_s,edr_db_truth,edr_db_estimated\n")
            for t in range(truth_db.shape[1]):
                fh.write(
                    f"{float(truth_edr.frame_times[t])!r},{float(truth_db[b, t])!r},"
                    f"{float(est_db[b, t])!r}\n"
                )

    with open(out_dir / "waveform.csv", "w") as fh:
        fh.write("time_s,truth,estimated\n")
        for i in range(len(truth)):
            fh.write(
                f"{i / truth.sample_rate!r},{float(truth.samples[i])!r},"
                f"{float(est.samples[i])!r}\n"
            )
    print(f"plot data: {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rirlab", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, required=True, help="number of examples")
    p.add_argument("--profile", default="toy", choices=["full", "toy"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clean-dir", dest="clean_dir", help="directory of clean WAV excitations")
    p.add_argument("--splits", default="0.8,0.1,0.1", help="train,val,test fractions")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the estimator on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--profile", default="toy", choices=["full", "toy"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="train config override")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("estimate", help="estimate a response from a reverberant WAV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="score a method over a manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--method", required=True, help="model:CKPT, baseline, or identity")
    p.add_argument("--out", required=True, help="summary CSV path")
    p.add_argument("--eps", type=float, default=1e-12, help="baseline deconvolution regularizer")
    p.add_argument("--profile", default="auto", choices=["auto", "full", "toy"])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot-data", help="export decay curves and waveforms as CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--example", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--profile", default="auto", choices=["auto", "full", "toy"])
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
