"""Estimator and discriminator networks assembled from autodiff operators.

The estimator is an encoder-decoder: a long first convolution extracts
response features from reverberant speech, strided convolutions compress
them, and transposed-convolution blocks (with batchnorm and PReLU) expand
back to an impulse response, ending in a single-channel collapse and tanh.
The discriminator scores a candidate response conditioned on the opening
samples of the reverberant speech, concatenated channel-wise.

Layer schedules live in the config objects, not in code, so alternative
architectures are data changes. Checkpoints embed the config echo and
round-trip parameters bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dsp import Signal
from .errors import InvalidConfigError, InvalidInputError

CHECKPOINT_MAGIC = "rirlab-checkpoint"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


def _uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv1dLayer:
    def __init__(self, rng, in_ch: int, out_ch: int, kernel: int, stride: int, padding: int):
        self.stride, self.padding = stride, padding
        self.weight = Tensor(
            _uniform_init(rng, (out_ch, in_ch, kernel), in_ch * kernel), requires_grad=True
        )
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True)

    def forward(self, x, train, update_stats):
        return ad.conv1d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def out_shape(self, channels: int, length: int) -> tuple[int, int]:
        out_ch, in_ch, k = self.weight.shape
        if channels != in_ch:
            raise InvalidConfigError(f"expected {in_ch} input channels, got {channels}")
        padded = length + 2 * self.padding
        if k > padded:
            raise InvalidConfigError(f"kernel {k} longer than padded input {padded}")
        return out_ch, (padded - k) // self.stride + 1

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def buffers(self):
        return []


class ConvTranspose1dLayer:
    def __init__(
        self, rng, in_ch, out_ch, kernel, stride, padding, output_padding=0
    ):
        self.stride, self.padding, self.output_padding = stride, padding, output_padding
        self.weight = Tensor(
            _uniform_init(rng, (in_ch, out_ch, kernel), in_ch * kernel), requires_grad=True
        )
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True)

    def forward(self, x, train, update_stats):
        return ad.conv_transpose1d(
            x,
            self.weight,
            self.bias,
            stride=self.stride,
            padding=self.padding,
            output_padding=self.output_padding,
        )

    def out_shape(self, channels, length):
        in_ch, out_ch, k = self.weight.shape
        if channels != in_ch:
            raise InvalidConfigError(f"expected {in_ch} input channels, got {channels}")
        out_len = (length - 1) * self.stride - 2 * self.padding + k + self.output_padding
        if out_len < 1:
            raise InvalidConfigError(f"transposed conv collapses length {length} to {out_len}")
        return out_ch, out_len

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def buffers(self):
        return []


class BatchNorm1dLayer:
    def __init__(self, channels: int):
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.state = ad.BatchNormState.for_channels(channels)

    def forward(self, x, train, update_stats):
        return ad.batchnorm1d(x, self.gamma, self.beta, self.state, train, update_stats)

    def out_shape(self, channels, length):
        if channels != self.gamma.shape[0]:
            raise InvalidConfigError(f"batchnorm over {self.gamma.shape[0]} channels got {channels}")
        return channels, length

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.state, "running_mean"), ("running_var", self.state, "running_var")]


class PReLULayer:
    def __init__(self, channels: int):
        self.slope = Tensor(np.full(channels, 0.25), requires_grad=True)

    def forward(self, x, train, update_stats):
        return ad.prelu(x, self.slope)

    def out_shape(self, channels, length):
        return channels, length

    def params(self):
        return [("slope", self.slope)]

    def buffers(self):
        return []


class LeakyReLULayer:
    def __init__(self, slope: float = 0.2):
        self.negative_slope = slope

    def forward(self, x, train, update_stats):
        return ad.leaky_relu(x, self.negative_slope)

    def out_shape(self, channels, length):
        return channels, length

    def params(self):
        return []

    def buffers(self):
        return []


class TanhLayer:
    def forward(self, x, train, update_stats):
        return ad.tanh(x)

    def out_shape(self, channels, length):
        return channels, length

    def params(self):
        return []

    def buffers(self):
        return []


# ---------------------------------------------------------------------------
# Configs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimatorConfig:
    """Declarative encoder-decoder schedule; validated at build time."""

    sample_rate: int
    input_len: int
    rir_len: int
    first_channels: int
    first_kernel: int
    first_stride: int
    first_padding: int
    encoder: tuple[dict, ...]
    decoder: tuple[dict, ...]
    collapse: dict
    scale: str = "full"

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, doc: dict) -> "EstimatorConfig":
        doc = dict(doc)
        doc["encoder"] = tuple(doc["encoder"])
        doc["decoder"] = tuple(doc["decoder"])
        return cls(**doc)


@dataclass(frozen=True)
class DiscriminatorConfig:
    """Conditional conv-stack schedule ending in one logit per example."""

    rir_len: int
    condition_len: int
    blocks: tuple[dict, ...]
    scale: str = "full"

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, doc: dict) -> "DiscriminatorConfig":
        doc = dict(doc)
        doc["blocks"] = tuple(doc["blocks"])
        return cls(**doc)


def full_estimator_config() -> EstimatorConfig:
    return EstimatorConfig(
        sample_rate=16000,
        input_len=16000,
        rir_len=4096,
        first_channels=512,
        first_kernel=8193,
        first_stride=250,
        first_padding=4096,
        encoder=(
            {"out_channels": 1024, "kernel": 5, "stride": 2, "padding": 2},
            {"out_channels": 1024, "kernel": 5, "stride": 2, "padding": 2},
        ),
        decoder=(
            {"out_channels": 512, "kernel": 8, "stride": 4, "padding": 2, "output_padding": 0},
            {"out_channels": 256, "kernel": 8, "stride": 4, "padding": 2, "output_padding": 0},
            {"out_channels": 128, "kernel": 8, "stride": 4, "padding": 2, "output_padding": 0},
            {"out_channels": 64, "kernel": 8, "stride": 4, "padding": 2, "output_padding": 0},
            {"out_channels": 64, "kernel": 5, "stride": 1, "padding": 2, "output_padding": 0},
        ),
        collapse={"kernel": 5, "stride": 1, "padding": 2, "output_padding": 0},
        scale="full",
    )


def toy_estimator_config() -> EstimatorConfig:
    return EstimatorConfig(
        sample_rate=8000,
        input_len=8000,
        rir_len=256,
        first_channels=32,
        first_kernel=513,
        first_stride=500,
        first_padding=256,
        encoder=(
            {"out_channels": 64, "kernel": 5, "stride": 2, "padding": 2},
            {"out_channels": 64, "kernel": 5, "stride": 2, "padding": 2},
        ),
        decoder=(
            {"out_channels": 32, "kernel": 8, "stride": 4, "padding": 2, "output_padding": 0},
            {"out_channels": 16, "kernel": 8, "stride": 4, "padding": 2, "output_padding": 0},
            {"out_channels": 8, "kernel": 8, "stride": 4, "padding": 2, "output_padding": 0},
            {"out_channels": 8, "kernel": 5, "stride": 1, "padding": 2, "output_padding": 0},
        ),
        collapse={"kernel": 5, "stride": 1, "padding": 2, "output_padding": 0},
        scale="toy",
    )


def full_discriminator_config() -> DiscriminatorConfig:
    return DiscriminatorConfig(
        rir_len=4096,
        condition_len=512,
        blocks=(
            {"out_channels": 16, "kernel": 16, "stride": 4, "padding": 6},
            {"out_channels": 32, "kernel": 16, "stride": 4, "padding": 6},
            {"out_channels": 64, "kernel": 16, "stride": 4, "padding": 6},
            {"out_channels": 64, "kernel": 16, "stride": 4, "padding": 6},
        ),
        scale="full",
    )


def toy_discriminator_config() -> DiscriminatorConfig:
    return DiscriminatorConfig(
        rir_len=256,
        condition_len=512,
        blocks=(
            {"out_channels": 8, "kernel": 8, "stride": 4, "padding": 2},
            {"out_channels": 16, "kernel": 8, "stride": 4, "padding": 2},
            {"out_channels": 32, "kernel": 8, "stride": 4, "padding": 2},
            {"out_channels": 32, "kernel": 4, "stride": 2, "padding": 1},
        ),
        scale="toy",
    )


# ---------------------------------------------------------------------------
# Networks
# ---------------------------------------------------------------------------


class Network:
    """An ordered stack of named layers with parameter bookkeeping."""

    kind = "network"

    def __init__(self, config, seed: int):
        self.config = config
        self.seed = int(seed)
        self.layers: list[tuple[str, object]] = []

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for name, layer in self.layers:
            for pname, tensor in layer.params():
                out.append((f"{name}.{pname}", tensor))
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def named_buffers(self) -> list[tuple[str, object, str]]:
        out = []
        for name, layer in self.layers:
            for bname, holder, attr in layer.buffers():
                out.append((f"{name}.{bname}", holder, attr))
        return out

    def parameter_count(self) -> int:
        return sum(t.size for t in self.parameters())

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.zero_grad()

    def _run(self, x: Tensor, train: bool, update_stats: bool) -> Tensor:
        for _, layer in self.layers:
            x = layer.forward(x, train, update_stats)
        return x

    def _trace(self, channels: int, length: int) -> tuple[int, int]:
        for name, layer in self.layers:
            try:
                channels, length = layer.out_shape(channels, length)
            except InvalidConfigError as exc:
                raise InvalidConfigError(f"layer {name}: {exc}") from exc
        return channels, length


class Estimator(Network):
    kind = "estimator"

    def __init__(self, config: EstimatorConfig, seed: int):
        super().__init__(config, seed)
        rng = np.random.default_rng(seed)
        c = config
        self.layers.append(
            (
                "enc0_conv",
                Conv1dLayer(rng, 1, c.first_channels, c.first_kernel, c.first_stride, c.first_padding),
            )
        )
        self.layers.append(("enc0_act", LeakyReLULayer(0.2)))
        in_ch = c.first_channels
        for i, blk in enumerate(c.encoder, start=1):
            self.layers.append(
                (
                    f"enc{i}_conv",
                    Conv1dLayer(rng, in_ch, blk["out_channels"], blk["kernel"], blk["stride"], blk["padding"]),
                )
            )
            self.layers.append((f"enc{i}_act", LeakyReLULayer(0.2)))
            in_ch = blk["out_channels"]
        for i, blk in enumerate(c.decoder, start=1):
            self.layers.append(
                (
                    f"dec{i}_tconv",
                    ConvTranspose1dLayer(
                        rng,
                        in_ch,
                        blk["out_channels"],
                        blk["kernel"],
                        blk["stride"],
                        blk["padding"],
                        blk["output_padding"],
                    ),
                )
            )
            self.layers.append((f"dec{i}_bn", BatchNorm1dLayer(blk["out_channels"])))
            self.layers.append((f"dec{i}_act", PReLULayer(blk["out_channels"])))
            in_ch = blk["out_channels"]
        col = c.collapse
        self.layers.append(
            (
                "out_tconv",
                ConvTranspose1dLayer(
                    rng, in_ch, 1, col["kernel"], col["stride"], col["padding"], col["output_padding"]
                ),
            )
        )
        self.layers.append(("out_act", TanhLayer()))

        channels, length = self._trace(1, c.input_len)
        if (channels, length) != (1, c.rir_len):
            raise InvalidConfigError(
                f"estimator schedule maps [1, {c.input_len}] to [{channels}, {length}], "
                f"expected [1, {c.rir_len}]"
            )

    def forward(self, x: Tensor, train: bool, update_stats: bool = True) -> Tensor:
        if x.data.ndim != 3 or x.shape[1] != 1 or x.shape[2] != self.config.input_len:
            raise InvalidInputError(
                f"estimator expects [B, 1, {self.config.input_len}], got {x.shape}"
            )
        return self._run(x, train, update_stats)


class Discriminator(Network):
    kind = "discriminator"

    def __init__(self, config: DiscriminatorConfig, seed: int):
        super().__init__(config, seed)
        rng = np.random.default_rng(seed)
        in_ch = 2  # candidate response + conditioning channel
        for i, blk in enumerate(config.blocks):
            self.layers.append(
                (
                    f"blk{i}_conv",
                    Conv1dLayer(rng, in_ch, blk["out_channels"], blk["kernel"], blk["stride"], blk["padding"]),
                )
            )
            self.layers.append((f"blk{i}_act", LeakyReLULayer(0.2)))
            in_ch = blk["out_channels"]
        channels, length = self._trace(2, config.rir_len)
        features = channels * length
        self._head_weight = Tensor(_uniform_init(rng, (features, 1), features), requires_grad=True)
        self._head_bias = Tensor(np.zeros(1), requires_grad=True)

    def named_parameters(self):
        out = super().named_parameters()
        out.append(("head.weight", self._head_weight))
        out.append(("head.bias", self._head_bias))
        return out

    def forward(self, rir: Tensor, condition: Tensor, train: bool) -> Tensor:
        if rir.shape != condition.shape:
            raise InvalidInputError(
                f"candidate {rir.shape} and condition {condition.shape} must match"
            )
        if rir.shape[2] != self.config.rir_len:
            raise InvalidInputError(
                f"discriminator expects length {self.config.rir_len}, got {rir.shape[2]}"
            )
        x = ad.concat_channels(rir, condition)
        x = self._run(x, train, update_stats=True)
        return ad.linear(ad.flatten(x), self._head_weight, self._head_bias)


def build_estimator(cfg: EstimatorConfig, seed: int) -> Estimator:
    """Construct and shape-validate the estimator network."""
    return Estimator(cfg, seed)


def build_discriminator(cfg: DiscriminatorConfig, seed: int) -> Discriminator:
    """Construct and shape-validate the conditional discriminator."""
    return Discriminator(cfg, seed)


def make_condition(reverberant: np.ndarray, condition_len: int, rir_len: int) -> np.ndarray:
    """Conditioning input: the opening condition_len samples of each
    reverberant waveform, zero-padded or cropped to rir_len -> [B,1,rir_len]."""
    rev = np.atleast_2d(np.asarray(reverberant, dtype=np.float64))
    if rev.shape[1] < condition_len:
        raise InvalidInputError(
            f"reverberant input of {rev.shape[1]} samples is shorter than the "
            f"{condition_len}-sample condition"
        )
    cond = np.zeros((rev.shape[0], 1, rir_len))
    n = min(condition_len, rir_len)
    cond[:, 0, :n] = rev[:, :n]
    return cond


def estimate(net: Estimator, reverberant: Signal) -> Signal:
    """Eval-mode inference on one waveform of exactly input_len samples."""
    if len(reverberant) != net.config.input_len:
        raise InvalidInputError(
            f"input must have {net.config.input_len} samples, got {len(reverberant)}; "
            "pad or crop upstream"
        )
    if reverberant.sample_rate != net.config.sample_rate:
        raise InvalidInputError(
            f"input sample rate {reverberant.sample_rate} != model rate {net.config.sample_rate}"
        )
    with ad.no_grad():
        out = net.forward(Tensor(reverberant.samples[None, None, :]), train=False)
    return Signal(out.data[0, 0], net.config.sample_rate)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def _state_records(net: Network) -> list[tuple[str, np.ndarray]]:
    records = [(name, t.data) for name, t in net.named_parameters()]
    records += [(name, getattr(holder, attr)) for name, holder, attr in net.named_buffers()]
    return records


def save_checkpoint(net: Network, path: str | Path) -> Path:
    """Single-file checkpoint: JSON header line (version, kind, config echo,
    record names/shapes) followed by raw little-endian float64 blobs."""
    records = _state_records(net)
    header = {
        "format": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "kind": net.kind,
        "seed": net.seed,
        "config": net.config.to_dict(),
        "records": [{"name": name, "shape": list(arr.shape)} for name, arr in records],
    }
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for _, arr in records:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def load_checkpoint(path: str | Path) -> Network:
    """Rebuild the network from its embedded config and restore parameters
    bit-exactly."""
    path = Path(path)
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != CHECKPOINT_MAGIC:
            raise InvalidConfigError(f"{path} is not a checkpoint file")
        if header.get("version") != CHECKPOINT_VERSION:
            raise InvalidConfigError(f"unsupported checkpoint version {header.get('version')}")
        if header["kind"] == "estimator":
            net: Network = Estimator(EstimatorConfig.from_dict(header["config"]), header["seed"])
        elif header["kind"] == "discriminator":
            net = Discriminator(DiscriminatorConfig.from_dict(header["config"]), header["seed"])
        else:
            raise InvalidConfigError(f"unknown network kind {header['kind']!r}")
        loaded = {}
        for rec in header["records"]:
            shape = tuple(rec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise InvalidConfigError(f"{path} is truncated at record {rec['name']}")
            loaded[rec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()

    for name, tensor in net.named_parameters():
        if name not in loaded:
            raise InvalidConfigError(f"checkpoint missing parameter {name}")
        if loaded[name].shape != tensor.data.shape:
            raise InvalidConfigError(
                f"checkpoint parameter {name} has shape {loaded[name].shape}, "
                f"expected {tensor.data.shape}"
            )
        tensor.data = loaded[name]
    for name, holder, attr in net.named_buffers():
        if name not in loaded:
            raise InvalidConfigError(f"checkpoint missing buffer {name}")
        setattr(holder, attr, loaded[name])
    return net
