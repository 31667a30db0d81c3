"""Pipeline configuration: one YAML file with a section per stage.

Defaults follow the full-scale training recipe (wide network, batch 512,
base lr 0.1).  ``desk_profile`` returns the same schema shrunk to sizes
that train in seconds on one CPU; the two differ only in widths, batch
geometry, learning rate, and synthetic-corpus sizing.

``load_config`` -> ``dump_config`` -> ``load_config`` round-trips to an
equal object; unknown keys and type mismatches raise ConfigError rather
than being silently dropped.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ctsforge.errors import ConfigError


@dataclass
class SynthSection:
    """Synthetic corpus sizing.

    Sessions [0, train_sessions) of each speaker get train_speech_seconds
    of speech and feed training; the rest get eval_speech_seconds and feed
    the trial lists.
    """

    n_speakers: int = 50
    sessions_per_speaker: int = 5
    train_sessions: int = 3
    train_speech_seconds: float = 90.0
    eval_speech_seconds: float = 120.0


@dataclass
class SegmenterSection:
    min_duration_s: float = 10.0
    max_duration_s: float = 60.0


@dataclass
class SadSection:
    margin_db: float = 6.0
    headroom_db: float = 12.0
    absolute_floor_db: float = -60.0
    smooth_frames: int = 5


@dataclass
class FeatureSection:
    sample_rate: int = 8000
    n_mels: int = 64
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    fmin_hz: float = 80.0
    fmax_hz: float = 3800.0
    preemphasis: float = 0.97
    cms_window_s: float = 3.0
    # True: drop non-speech frames, then mean-normalize what remains.
    # False: mean-normalize the full sequence, then drop.
    cms_after_sad: bool = True
    sad: SadSection = field(default_factory=SadSection)


@dataclass
class AugmentSection:
    noise_copies: int = 1
    snr_choices_db: list[float] = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0])
    # Masking runs on the fly during training: none | mild | strong.
    mask_policy: str = "mild"


@dataclass
class NetworkSection:
    channels: int = 512
    pool_channels: int = 1500
    embed_dim: int = 512


@dataclass
class TrainingSection:
    chunk_len: int = 400
    batch_size: int = 512
    base_lr: float = 0.1
    momentum: float = 0.9
    n_epochs: int = 10
    margin: float = 0.2
    scale: float = 40.0


@dataclass
class BackendSection:
    lda_dim: int = 250
    plda_iters: int = 20
    # Cosine scoring consumes centered/whitened/length-normalized vectors;
    # set True to score the LDA-projected vectors instead.
    cosine_post_lda: bool = False


@dataclass
class TrialsSection:
    """Trial-list construction: every cross-session same-speaker eval pair
    is a target; nontargets are a seeded sample of nontarget_ratio per
    target."""

    nontarget_ratio: int = 10


@dataclass
class CostSection:
    target_priors: list[float] = field(default_factory=lambda: [0.01, 0.005])
    c_miss: float = 1.0
    c_fa: float = 1.0


@dataclass
class PipelineConfig:
    workdir: str = "runs/default"
    seed: int = 0
    synth: SynthSection = field(default_factory=SynthSection)
    segmenter: SegmenterSection = field(default_factory=SegmenterSection)
    features: FeatureSection = field(default_factory=FeatureSection)
    augment: AugmentSection = field(default_factory=AugmentSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    backend: BackendSection = field(default_factory=BackendSection)
    trials: TrialsSection = field(default_factory=TrialsSection)
    cost: CostSection = field(default_factory=CostSection)


def desk_profile(workdir: str = "runs/desk", seed: int = 0) -> PipelineConfig:
    """Configuration sized for single-CPU runs (minutes, not days)."""
    cfg = PipelineConfig(workdir=workdir, seed=seed)
    cfg.network = NetworkSection(channels=64, pool_channels=128, embed_dim=64)
    cfg.training = TrainingSection(chunk_len=100, batch_size=32, base_lr=0.002)
    cfg.backend = BackendSection(lda_dim=32, plda_iters=20)
    return cfg


_SCALAR_TYPES = {int: "int", float: "float", str: "str", bool: "bool"}


def _coerce_scalar(value, target, where: str):
    if target is float:
        # YAML parses "5" as int even where a float is meant.
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if target is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if not isinstance(value, target):
        raise ConfigError(f"{where}: expected {_SCALAR_TYPES[target]}, got {value!r}")
    return value


def _build_dataclass(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    field_map = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(field_map))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, f in field_map.items():
        if name not in data:
            continue
        value = data[name]
        spot = f"{where}.{name}" if where else name
        if dataclasses.is_dataclass(f.type) or (
            isinstance(f.type, str) and f.type.endswith("Section")
        ):
            sub_cls = f.type if dataclasses.is_dataclass(f.type) else _SECTION_CLASSES[f.type]
            kwargs[name] = _build_dataclass(sub_cls, value, spot)
        elif isinstance(f.type, str) and f.type.startswith("list[float]"):
            if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
            ):
                raise ConfigError(f"{spot}: expected a list of numbers, got {value!r}")
            kwargs[name] = [float(v) for v in value]
        else:
            target = {"int": int, "float": float, "str": str, "bool": bool}[f.type]
            kwargs[name] = _coerce_scalar(value, target, spot)
    return cls(**kwargs)


_SECTION_CLASSES = {
    c.__name__: c
    for c in (
        SynthSection,
        SegmenterSection,
        SadSection,
        FeatureSection,
        AugmentSection,
        NetworkSection,
        TrainingSection,
        BackendSection,
        TrialsSection,
        CostSection,
    )
}


def load_config(path: str | Path) -> PipelineConfig:
    """Parse a YAML configuration file; absent keys keep their defaults."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if data is None:
        data = {}
    cfg = _build_dataclass(PipelineConfig, data, "")
    _validate(cfg)
    return cfg


def dump_config(cfg: PipelineConfig) -> str:
    """Serialize so that load(dump(cfg)) == cfg."""
    return yaml.safe_dump(dataclasses.asdict(cfg), sort_keys=False)


def save_config(cfg: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(dump_config(cfg))


def _validate(cfg: PipelineConfig) -> None:
    syn = cfg.synth
    if syn.n_speakers < 2:
        raise ConfigError("synth.n_speakers: need at least 2 speakers")
    if not 0 < syn.train_sessions < syn.sessions_per_speaker:
        raise ConfigError(
            "synth.train_sessions must leave at least one held-out session "
            f"(got {syn.train_sessions} of {syn.sessions_per_speaker})"
        )
    if not 0 < cfg.segmenter.min_duration_s < cfg.segmenter.max_duration_s:
        raise ConfigError("segmenter: need 0 < min_duration_s < max_duration_s")
    f = cfg.features
    if not 0 < f.fmin_hz < f.fmax_hz <= f.sample_rate / 2:
        raise ConfigError("features: need 0 < fmin_hz < fmax_hz <= sample_rate / 2")
    if cfg.augment.mask_policy not in ("none", "mild", "strong"):
        raise ConfigError(
            "augment.mask_policy: expected 'none', 'mild' or 'strong', "
            f"got {cfg.augment.mask_policy!r}"
        )
    if cfg.augment.noise_copies < 0:
        raise ConfigError("augment.noise_copies: must be >= 0")
    t = cfg.training
    if t.batch_size < 1 or t.chunk_len < 1 or t.n_epochs < 1:
        raise ConfigError("training: batch_size, chunk_len, n_epochs must be >= 1")
    if t.base_lr <= 0:
        raise ConfigError("training.base_lr: must be > 0")
    if not 0 <= t.momentum < 1:
        raise ConfigError("training.momentum: must be in [0, 1)")
    if t.margin < 0 or t.scale <= 0:
        raise ConfigError("training: margin must be >= 0 and scale > 0")
    if cfg.backend.lda_dim < 1 or cfg.backend.plda_iters < 1:
        raise ConfigError("backend: lda_dim and plda_iters must be >= 1")
    if cfg.trials.nontarget_ratio < 1:
        raise ConfigError("trials.nontarget_ratio: must be >= 1")
    if not cfg.cost.target_priors or not all(0 < p < 1 for p in cfg.cost.target_priors):
        raise ConfigError("cost.target_priors: need priors strictly between 0 and 1")
