"""Pipeline configuration: typed sections read from a flat ``section.key = value`` file."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Unknown key or unparsable value in a configuration file or override."""


@dataclass
class DataSection:
    vocab_size: int = 50
    sentences: int = 5000
    test_sentences: int = 500
    min_len: int = 5
    max_len: int = 15
    reorder_window: int = 2
    split_prob: float = 0.1
    seed: int = 1


@dataclass
class ModelSection:
    embedding_size: int = 64
    hidden_units: int = 256
    encoder_layers: int = 2
    decoder_layers: int = 1
    heads: int = 4
    align_hidden: int = 32
    dropout: float = 0.1
    max_len: int = 256
    context_position_scale: float = 4.0


@dataclass
class TrainSection:
    # reference budgets are multiplied by a scale factor; alignment layers train on
    # cached features, so their stages get a larger share
    translation_updates: int = 90000
    align_updates: int = 10000
    guided_updates: int = 10000
    scale: float = 0.01
    layer_scale: float = 0.1
    batch_tokens: int = 4000
    translation_lr: float = 5e-3
    translation_warmup: int = 100
    align_lr: float = 3e-3
    guided_lr: float = 1e-2
    layer_warmup: int = 200

    def steps(self, stage: str) -> int:
        if stage == "translation":
            return round(self.translation_updates * self.scale)
        budget = self.align_updates if stage == "align" else self.guided_updates
        return round(budget * self.layer_scale)


@dataclass
class ContiguitySection:
    weight: float = 1.0
    kernel_size: int = 2
    logit_dropout: float = 0.1


@dataclass
class AttOptSection:
    steps: int = 3
    learning_rate: float = 1.0
    weight: float = 0.0
    include_eos: bool = True


@dataclass
class BidirSection:
    steps: int = 10
    learning_rate: float = 1.0
    weight: float = 5.0
    contiguity: str = "forward"


@dataclass
class PipelineConfig:
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    contiguity: ContiguitySection = field(default_factory=ContiguitySection)
    attopt: AttOptSection = field(default_factory=AttOptSection)
    bidir: BidirSection = field(default_factory=BidirSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def set(self, key: str, raw: str) -> None:
        """Assign ``section.key`` from its text form."""
        section_name, _, name = key.partition(".")
        section = getattr(self, section_name, None) if name else None
        if section is None or name not in {f.name for f in fields(section)}:
            raise ConfigError(f"unknown configuration key {key!r}")
        kind = type(getattr(section, name))
        setattr(section, name, _parse_value(key, raw, kind))

    def validate(self) -> None:
        t = self.train
        for name in ("translation_updates", "align_updates", "guided_updates", "batch_tokens"):
            if getattr(t, name) < 0:
                raise ConfigError(f"train.{name} must be non-negative")
        if t.scale < 0 or t.layer_scale < 0:
            raise ConfigError("scale factors must be non-negative")
        if self.attopt.steps < 0 or self.bidir.steps < 0:
            raise ConfigError("optimization steps must be non-negative")
        if self.bidir.contiguity not in ("forward", "both"):
            raise ConfigError("bidir.contiguity must be 'forward' or 'both'")

    def dumps(self) -> str:
        lines = []
        for section, values in self.to_dict().items():
            for key, value in values.items():
                text = str(value).lower() if isinstance(value, bool) else str(value)
                lines.append(f"{section}.{key} = {text}")
        return "\n".join(lines) + "\n"


def _parse_value(key: str, raw: str, kind: type):
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind.__name__}") from None


def parse_config(text: str, origin: str = "<config>") -> PipelineConfig:
    cfg = PipelineConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{origin}:{lineno}: expected 'section.key = value'")
        try:
            cfg.set(key.strip(), value)
        except ConfigError as exc:
            raise ConfigError(f"{origin}:{lineno}: {exc}") from None
    cfg.validate()
    return cfg


def load_config(path=None, overrides: list[str] | tuple = ()) -> PipelineConfig:
    """Defaults, then the file at ``path``, then ``key=value`` overrides."""
    if path is None:
        cfg = PipelineConfig()
    else:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"configuration file {path} does not exist")
        cfg = parse_config(path.read_text(encoding="utf-8"), str(path))
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        cfg.set(key.strip(), value)
    cfg.validate()
    return cfg
