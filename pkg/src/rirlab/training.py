"""Alternating adversarial training with decay-relief model selection.

Each step updates the discriminator on (real, fake) pairs conditioned on the
reverberant speech, then updates the estimator on the composite loss
adversarial + lambda_edr * decay-relief + lambda_mse * waveform-MSE. After
every epoch the estimator is scored by its validation decay-relief loss in
eval mode; the best-scoring epoch's checkpoint is kept.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import metrics
from .autodiff import Tensor
from .dsp import Signal, StftConfig, octave_bands
from .errors import InvalidInputError, TrainingDivergedError
from .models import (
    Discriminator,
    DiscriminatorConfig,
    Estimator,
    EstimatorConfig,
    build_discriminator,
    build_estimator,
    make_condition,
    save_checkpoint,
)
from .synth import DatasetManifest
from .wavio import read_wav

GENERATOR_LOSS_FORMS = ("non_saturating", "saturating")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; the full-scale defaults are batch 128, 200 epochs,
    initial rate 8e-5 decayed by 0.7 every 40 epochs."""

    lambda_edr: float = 1.0
    lambda_mse: float = 50.0
    batch_size: int = 128
    epochs: int = 200
    lr_init: float = 8e-5
    lr_decay: float = 0.7
    lr_every: int = 40
    seed: int = 0
    generator_loss_form: str = "non_saturating"
    scale: str = "full"
    stft_window: int = 256
    stft_hop: int = 128
    band_centers: tuple[float, ...] = (16, 32, 63, 125, 250, 500, 1000, 2000, 4000)
    grad_clip: float | None = None

    def __post_init__(self):
        if self.lambda_edr < 0 or self.lambda_mse < 0:
            raise InvalidInputError("loss weights must be >= 0")
        if self.batch_size < 2:
            raise InvalidInputError("batch_size must be >= 2 (batchnorm constraint)")
        if self.generator_loss_form not in GENERATOR_LOSS_FORMS:
            raise InvalidInputError(
                f"generator_loss_form must be one of {GENERATOR_LOSS_FORMS}"
            )

    def lr_at(self, epoch: int) -> float:
        return self.lr_init * self.lr_decay ** (epoch // self.lr_every)

    def stft(self) -> StftConfig:
        return StftConfig(self.stft_window, self.stft_hop, "hann")


@dataclass(frozen=True)
class StepLosses:
    l_edr: float
    l_mse: float
    l_cgan: float
    l_e_total: float
    l_d: float


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    l_edr: float
    l_mse: float
    l_cgan: float
    l_d: float
    val_edr: float
    lr: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    initial_val_edr: float | None = None

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("epoch,l_edr,l_mse,l_cgan,l_d,val_edr,lr\n")
        for r in self.records:
            out.write(
                f"{r.epoch},{r.l_edr!r},{r.l_mse!r},{r.l_cgan!r},{r.l_d!r},"
                f"{r.val_edr!r},{r.lr!r}\n"
            )
        return out.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


@dataclass(frozen=True)
class TrainResult:
    log: TrainLog
    best_epoch: int
    best_val_edr: float
    best_path: Path
    last_path: Path
    run_dir: Path


def _check_finite(losses: dict[str, float], context: str) -> None:
    bad = [name for name, value in losses.items() if not np.isfinite(value)]
    if bad:
        raise TrainingDivergedError(f"non-finite loss ({', '.join(bad)}) at {context}")


def _clip_grads(grads: list[np.ndarray | None], max_norm: float) -> list[np.ndarray | None]:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads if g is not None))
    if total <= max_norm or total == 0.0:
        return grads
    scale = max_norm / total
    return [None if g is None else g * scale for g in grads]


def train_step(
    estimator: Estimator,
    discriminator: Discriminator,
    batch: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
    est_opt: ad.RmspropState,
    disc_opt: ad.RmspropState,
    basis: ad.DftBasis,
    partition,
    context: str = "step",
) -> StepLosses:
    """One alternation: a discriminator update on real/fake pairs with the
    fake detached, then an estimator update on the composite loss."""
    rev, rir = batch
    cond = make_condition(
        rev, discriminator.config.condition_len, discriminator.config.rir_len
    )
    rev_t = Tensor(rev[:, None, :])
    rir_t = Tensor(rir[:, None, :])

    # Discriminator half-step: descend the negation of its objective.
    with ad.no_grad():
        fake_detached = estimator.forward(rev_t, train=True, update_stats=False).detach()
    real_logits = discriminator.forward(rir_t, Tensor(cond), train=True)
    fake_logits = discriminator.forward(fake_detached, Tensor(cond), train=True)
    ones = np.ones(real_logits.shape)
    zeros = np.zeros(fake_logits.shape)
    l_d = ad.bce_logit_loss(real_logits, ones) + ad.bce_logit_loss(fake_logits, zeros)
    _check_finite({"l_d": l_d.item()}, context)
    discriminator.zero_grad()
    ad.backward(l_d)
    d_grads = [p.grad for p in discriminator.parameters()]
    if cfg.grad_clip is not None:
        d_grads = _clip_grads(d_grads, cfg.grad_clip)
    ad.rmsprop_step(discriminator.parameters(), d_grads, disc_opt)

    # Estimator half-step.
    fake = estimator.forward(rev_t, train=True, update_stats=True)
    adv_logits = discriminator.forward(fake, Tensor(cond), train=True)
    if cfg.generator_loss_form == "non_saturating":
        l_cgan = ad.bce_logit_loss(adv_logits, np.ones(adv_logits.shape))
    else:
        l_cgan = -1.0 * ad.bce_logit_loss(adv_logits, np.zeros(adv_logits.shape))
    l_edr = ad.mse_loss(
        ad.framed_band_energy(fake, basis, partition),
        ad.framed_band_energy(rir_t, basis, partition),
    )
    l_mse = ad.mse_loss(fake, rir_t)
    total = l_cgan + cfg.lambda_edr * l_edr + cfg.lambda_mse * l_mse
    losses = StepLosses(
        l_edr=l_edr.item(),
        l_mse=l_mse.item(),
        l_cgan=l_cgan.item(),
        l_e_total=total.item(),
        l_d=l_d.item(),
    )
    _check_finite(
        {"l_edr": losses.l_edr, "l_mse": losses.l_mse, "l_cgan": losses.l_cgan}, context
    )
    estimator.zero_grad()
    discriminator.zero_grad()
    ad.backward(total)
    e_grads = [p.grad for p in estimator.parameters()]
    if cfg.grad_clip is not None:
        e_grads = _clip_grads(e_grads, cfg.grad_clip)
    ad.rmsprop_step(estimator.parameters(), e_grads, est_opt)
    return losses


def validation_edr(
    estimator: Estimator,
    rev: np.ndarray,
    rir: np.ndarray,
    stft_cfg: StftConfig,
    partition,
    batch_size: int,
) -> float:
    """Mean decay-relief loss over a split, eval-mode forward."""
    sr = partition.sample_rate
    losses = []
    with ad.no_grad():
        for start in range(0, rev.shape[0], batch_size):
            chunk = rev[start : start + batch_size]
            est = estimator.forward(Tensor(chunk[:, None, :]), train=False).data[:, 0, :]
            for i in range(chunk.shape[0]):
                total, _ = metrics.edr_loss(
                    Signal(est[i], sr), Signal(rir[start + i], sr), stft_cfg, partition
                )
                losses.append(total)
    return float(np.mean(losses))


def _load_split(manifest: DatasetManifest, split: str) -> tuple[np.ndarray, np.ndarray]:
    entries = manifest.split_entries(split)
    if not entries:
        raise InvalidInputError(f"manifest has no entries in split {split!r}")
    rev = np.stack([read_wav(manifest.path(e.reverberant)).samples for e in entries])
    rir = np.stack([read_wav(manifest.path(e.rir)).samples for e in entries])
    return rev, rir


def train(
    manifest: DatasetManifest,
    est_cfg: EstimatorConfig,
    disc_cfg: DiscriminatorConfig,
    cfg: TrainConfig,
    out_dir: str | Path,
) -> TrainResult:
    """Full training run over a manifest's train split.

    Writes log.csv, best.ckpt (argmin validation decay-relief loss) and
    last.ckpt into out_dir; epoch shuffling, initialization and the
    learning-rate schedule are all pure functions of the config and seed.
    On divergence the log is flushed before the error propagates.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_rev, train_rir = _load_split(manifest, "train")
    val_rev, val_rir = _load_split(manifest, "val")

    estimator = build_estimator(est_cfg, seed=cfg.seed)
    discriminator = build_discriminator(disc_cfg, seed=cfg.seed + 1)
    est_opt = ad.RmspropState.for_params(estimator.parameters(), lr=cfg.lr_init)
    disc_opt = ad.RmspropState.for_params(discriminator.parameters(), lr=cfg.lr_init)
    stft_cfg = cfg.stft()
    basis = ad.make_dft_basis(stft_cfg)
    partition = octave_bands(manifest.sample_rate, cfg.stft_window, list(cfg.band_centers))

    log = TrainLog()
    log.initial_val_edr = validation_edr(
        estimator, val_rev, val_rir, stft_cfg, partition, cfg.batch_size
    )
    best_epoch, best_val = -1, np.inf
    best_path = out_dir / "best.ckpt"
    last_path = out_dir / "last.ckpt"
    n_train = train_rev.shape[0]

    try:
        for epoch in range(cfg.epochs):
            lr = cfg.lr_at(epoch)
            est_opt.lr = lr
            disc_opt.lr = lr
            order = np.random.default_rng(
                np.random.SeedSequence(entropy=cfg.seed, spawn_key=(epoch,))
            ).permutation(n_train)
            sums = np.zeros(4)  # l_edr, l_mse, l_cgan, l_d
            n_steps = 0
            for step, start in enumerate(range(0, n_train, cfg.batch_size)):
                idx = order[start : start + cfg.batch_size]
                if idx.size < 2:
                    continue
                losses = train_step(
                    estimator,
                    discriminator,
                    (train_rev[idx], train_rir[idx]),
                    cfg,
                    est_opt,
                    disc_opt,
                    basis,
                    partition,
                    context=f"epoch {epoch} step {step}",
                )
                sums += (losses.l_edr, losses.l_mse, losses.l_cgan, losses.l_d)
                n_steps += 1
            val_edr = validation_edr(
                estimator, val_rev, val_rir, stft_cfg, partition, cfg.batch_size
            )
            means = sums / max(n_steps, 1)
            log.records.append(
                EpochRecord(
                    epoch=epoch,
                    l_edr=float(means[0]),
                    l_mse=float(means[1]),
                    l_cgan=float(means[2]),
                    l_d=float(means[3]),
                    val_edr=val_edr,
                    lr=lr,
                )
            )
            log.save(out_dir / "log.csv")
            if val_edr < best_val:
                best_val = val_edr
                best_epoch = epoch
                save_checkpoint(estimator, best_path)
    except TrainingDivergedError:
        log.save(out_dir / "log.csv")
        raise

    save_checkpoint(estimator, last_path)
    return TrainResult(
        log=log,
        best_epoch=best_epoch,
        best_val_edr=float(best_val),
        best_path=best_path,
        last_path=last_path,
        run_dir=out_dir,
    )
