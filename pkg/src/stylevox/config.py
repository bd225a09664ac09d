"""Flat key=value configuration for the whole model and trainer.

Every architectural dimension is a config key; `desk_config()` is the
small CPU-friendly default and `full_scale_config()` mirrors a full-size
setup for parameter-count reporting.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path


def _ints(*xs: int) -> tuple[int, ...]:
    return tuple(xs)


@dataclass
class Config:
    # token encoder
    d_model: int = 192            # per-token embedding width (d1)
    n_layers: int = 4
    n_heads: int = 2
    conv_kernel_size: int = 3
    conv_hidden_dim: int = 768
    dropout: float = 0.1

    # paralinguistic prompt
    prompt_dim: int = 768         # sentence-embedding width (d2)
    global_dim: int = 192         # sentence-level projection width (d_g)

    # latent model
    latent_channels: int = 192    # N
    posterior_hidden: int = 192
    posterior_layers: int = 8
    flow_layers: int = 4
    flow_hidden: int = 192
    flow_wn_layers: int = 4
    sigma_floor: float = 1e-4

    # duration
    duration_hidden: int = 192
    duration_kernel: int = 3
    duration_epsilon: float = 1e-9
    stochastic_duration: bool = True

    # audio / mel
    sample_rate: int = 22050
    n_mels: int = 80
    n_fft: int = 1024
    win_length: int = 1024
    hop_length: int = 256
    mel_floor: float = 1e-5

    # waveform decoder + discriminator
    upsample_rates: tuple[int, ...] = field(default_factory=lambda: _ints(8, 8, 4))
    upsample_kernel_sizes: tuple[int, ...] = field(default_factory=lambda: _ints(16, 16, 8))
    upsample_initial_channels: int = 128
    resblock_kernel_sizes: tuple[int, ...] = field(default_factory=lambda: _ints(3, 7))
    mpd_periods: tuple[int, ...] = field(default_factory=lambda: _ints(2, 3, 5, 7, 11))
    mpd_base_channels: int = 8
    segment_frames: int = 32      # latent window decoded per GAN step

    # loss weights (unit weights reproduce the plain unweighted sum)
    w_recon: float = 45.0
    w_kl: float = 1.0
    w_dur: float = 1.0
    w_adv: float = 1.0
    w_fm: float = 1.0

    # training
    batch_size: int = 8
    total_steps: int = 5000
    learning_rate: float = 2e-4
    adam_beta1: float = 0.8
    adam_beta2: float = 0.99
    weight_decay: float = 0.01
    lr_decay: float = 0.999875
    warmup_steps: int = 0
    seed: int = 1234
    checkpoint_interval: int = 1000
    log_interval: int = 10

    # inference
    noise_scale: float = 0.667
    duration_scale: float = 1.0

    def validate(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.conv_kernel_size % 2 != 1:
            raise ValueError("conv_kernel_size must be odd")
        if self.d_model % 2 != 0:
            raise ValueError("d_model must be even (sinusoidal encoding)")
        upsample = 1
        for r in self.upsample_rates:
            upsample *= r
        if upsample != self.hop_length:
            raise ValueError(
                f"product of upsample_rates ({upsample}) must equal hop_length "
                f"({self.hop_length})"
            )
        for name in ("batch_size", "total_steps", "learning_rate", "hop_length",
                     "latent_channels", "segment_frames"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def schema_hash(self) -> str:
        names = ",".join(f.name for f in fields(self))
        return hashlib.sha256(names.encode()).hexdigest()[:16]

    def config_hash(self) -> str:
        return hashlib.sha256(to_text(self).encode()).hexdigest()[:16]


_DESCRIPTIONS = {
    "d_model": "token embedding / encoder width",
    "n_layers": "feed-forward transformer blocks per stream",
    "n_heads": "self-attention heads",
    "conv_kernel_size": "kernel of the conv feed-forward sublayer (odd)",
    "conv_hidden_dim": "hidden width of the conv feed-forward sublayer",
    "dropout": "dropout rate in encoder blocks",
    "prompt_dim": "sentence-embedding dimension of the prompt backend",
    "global_dim": "sentence-level style projection width",
    "latent_channels": "latent channels of the variational model",
    "posterior_hidden": "hidden channels of the posterior encoder",
    "posterior_layers": "dilated conv layers of the posterior encoder",
    "flow_layers": "affine coupling layers in the normalizing flow",
    "flow_hidden": "hidden channels of each coupling net",
    "flow_wn_layers": "conv layers inside each coupling net",
    "sigma_floor": "minimum predicted standard deviation",
    "duration_hidden": "hidden channels of the duration predictor",
    "duration_kernel": "conv kernel of the duration predictor",
    "duration_epsilon": "epsilon inside the log-domain duration loss",
    "stochastic_duration": "draw duration noise (true) or use the mean path",
    "sample_rate": "waveform sample rate in Hz",
    "n_mels": "mel bins of the reconstruction spectrogram",
    "n_fft": "FFT size",
    "win_length": "analysis window length in samples",
    "hop_length": "frame hop in samples",
    "mel_floor": "clamp applied before the log of the mel spectrogram",
    "upsample_rates": "decoder transposed-conv rates (product == hop_length)",
    "upsample_kernel_sizes": "decoder transposed-conv kernel sizes",
    "upsample_initial_channels": "decoder channels before the first upsample",
    "resblock_kernel_sizes": "decoder residual block kernel sizes",
    "mpd_periods": "periods of the multi-period discriminator branches",
    "mpd_base_channels": "base channel count of discriminator conv stacks",
    "segment_frames": "latent frames decoded per adversarial training step",
    "w_recon": "mel reconstruction loss weight",
    "w_kl": "KL loss weight",
    "w_dur": "duration loss weight",
    "w_adv": "adversarial loss weight",
    "w_fm": "feature matching loss weight",
    "batch_size": "training batch size",
    "total_steps": "number of optimizer steps",
    "learning_rate": "initial learning rate",
    "adam_beta1": "AdamW beta1",
    "adam_beta2": "AdamW beta2",
    "weight_decay": "AdamW decoupled weight decay",
    "lr_decay": "per-epoch exponential learning-rate decay factor",
    "warmup_steps": "linear learning-rate warmup steps (0 disables)",
    "seed": "global RNG seed",
    "checkpoint_interval": "steps between checkpoints",
    "log_interval": "steps between metric rows",
    "noise_scale": "prior sampling temperature at inference",
    "duration_scale": "global duration multiplier at inference",
}


def _parse_value(raw: str, target):
    if target is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if target is int:
        return int(raw)
    if target is float:
        return float(raw)
    if target is str:
        return raw
    # tuple[int, ...] encoded as comma-separated values
    return tuple(int(x) for x in raw.split(",") if x.strip())


def from_text(text: str, base: Config | None = None) -> Config:
    cfg = dataclasses.replace(base) if base else Config()
    types = {f.name: f.type for f in fields(Config)}
    defaults = Config()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not hasattr(cfg, key):
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        target = type(getattr(defaults, key))
        setattr(cfg, key, _parse_value(value, target))
    cfg.validate()
    return cfg


def load(path) -> Config:
    return from_text(Path(path).read_text(encoding="utf-8"))


def to_text(cfg: Config) -> str:
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def print_schema() -> str:
    defaults = Config()
    lines = []
    for f in fields(Config):
        value = getattr(defaults, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        desc = _DESCRIPTIONS.get(f.name, "")
        lines.append(f"{f.name:28s} default={value!s:<12} {desc}")
    return "\n".join(lines)


def desk_config() -> Config:
    """Small configuration suitable for CPU training and tests."""
    cfg = Config()
    cfg.validate()
    return cfg


def toy_config() -> Config:
    """Minimal configuration for the bundled mini-corpus overfit run."""
    cfg = Config(
        d_model=96,
        n_layers=2,
        conv_hidden_dim=256,
        global_dim=96,
        latent_channels=96,
        posterior_hidden=96,
        posterior_layers=4,
        flow_layers=2,
        flow_hidden=96,
        flow_wn_layers=2,
        duration_hidden=96,
        upsample_initial_channels=96,
        batch_size=8,
        total_steps=2000,
        prompt_dim=64,
        learning_rate=5e-4,
        warmup_steps=400,
        dropout=0.0,
    )
    cfg.validate()
    return cfg


def full_scale_config() -> Config:
    """Full-size configuration used only for parameter-count reporting."""
    cfg = Config(
        d_model=192,
        n_layers=6,
        n_heads=2,
        conv_hidden_dim=768,
        latent_channels=192,
        posterior_hidden=192,
        posterior_layers=16,
        flow_layers=4,
        flow_hidden=192,
        flow_wn_layers=4,
        upsample_rates=_ints(8, 8, 2, 2),
        upsample_kernel_sizes=_ints(16, 16, 4, 4),
        upsample_initial_channels=512,
        resblock_kernel_sizes=_ints(3, 7, 11),
    )
    cfg.validate()
    return cfg
