"""Model and optimizer configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

from ..features import SEGMENT_WIDTH


class ShapeError(ValueError):
    pass


@dataclass
class ModelConfig:
    vocab_size: int
    max_seq_len: int = 512
    hidden_size: int = 128
    layers: int = 2
    heads: int = 4
    intermediate_size: Optional[int] = None  # defaults to 2x hidden
    directed: bool = False
    feature_embed_size: int = 64
    feature_heads: int = 2
    feature_layers: int = 2
    fc_width: int = 256
    temperature: float = 0.8
    # per-position corpus maxima for feature normalisation (segmented layout)
    feature_norms: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.intermediate_size is None:
            self.intermediate_size = 2 * self.hidden_size
        for name in ("vocab_size", "max_seq_len", "hidden_size", "layers", "heads",
                     "intermediate_size", "feature_embed_size", "feature_heads",
                     "feature_layers", "fc_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.feature_norms is not None:
            self.feature_norms = tuple(float(v) for v in self.feature_norms)
            if len(self.feature_norms) != SEGMENT_WIDTH:
                raise ShapeError(
                    f"feature_norms must have {SEGMENT_WIDTH} entries"
                )

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["feature_norms"] is not None:
            d["feature_norms"] = list(d["feature_norms"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if d.get("feature_norms") is not None:
            d["feature_norms"] = tuple(d["feature_norms"])
        return cls(**d)


@dataclass
class OptimizerConfig:
    """Adam with linear warmup then linear decay to zero."""
    max_lr: float = 3e-4
    warmup_steps: int = 200
    total_steps: int = 4000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def lr_at(self, step: int) -> float:
        if step < self.warmup_steps:
            return self.max_lr * (step + 1) / self.warmup_steps
        span = max(1, self.total_steps - self.warmup_steps)
        return self.max_lr * max(0.0, (self.total_steps - step) / span)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        return cls(**d)
