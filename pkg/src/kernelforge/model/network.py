"""The infilling network: a bidirectional token encoder with an optional
feature-conditioned branch.

Directed mode encodes a 39-position segmented feature input (one feature
space active per example, the rest padded). Padded positions are masked
out of attention and pooling, so changing their values cannot influence
the logits and no gradient reaches their parameters.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from ..features import SEGMENT_WIDTH
from ..tokenizer import PAD_ID
from .config import ModelConfig, ShapeError


def _encoder_stack(d_model: int, heads: int, layers: int, ff: int) -> nn.TransformerEncoder:
    layer = nn.TransformerEncoderLayer(
        d_model=d_model, nhead=heads, dim_feedforward=ff,
        dropout=0.0, activation="gelu", batch_first=True,
    )
    return nn.TransformerEncoder(layer, num_layers=layers, enable_nested_tensor=False)


class InfillNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        h = cfg.hidden_size
        self.token_embed = nn.Embedding(cfg.vocab_size, h)
        self.pos_embed = nn.Parameter(torch.zeros(cfg.max_seq_len, h))
        self.encoder = _encoder_stack(h, cfg.heads, cfg.layers, cfg.intermediate_size)
        if cfg.directed:
            e = cfg.feature_embed_size
            self.value_proj = nn.Parameter(torch.zeros(SEGMENT_WIDTH, e))
            self.feature_pos = nn.Parameter(torch.zeros(SEGMENT_WIDTH, e))
            self.feature_encoder = _encoder_stack(
                e, cfg.feature_heads, cfg.feature_layers, 2 * e
            )
            self.reduce = nn.Linear(e, h)
            joint_in = 2 * h
        else:
            joint_in = h
        self.joint = nn.Linear(joint_in, cfg.fc_width)
        self.decode = nn.Linear(cfg.fc_width, cfg.vocab_size)
        norms = torch.ones(SEGMENT_WIDTH)
        if cfg.feature_norms is not None:
            norms = torch.tensor(cfg.feature_norms, dtype=torch.float32).clamp(min=1.0)
        self.register_buffer("feature_norms", norms)
        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module):
        if isinstance(module, (nn.Linear, nn.Embedding)):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)
            if isinstance(module, nn.Linear) and module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.LayerNorm):
            nn.init.ones_(module.weight)
            nn.init.zeros_(module.bias)

    def forward(
        self,
        input_ids: torch.Tensor,
        feature_values: torch.Tensor | None = None,
        feature_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Per-position vocabulary logits, shape (batch, seq, vocab)."""
        if input_ids.dim() != 2:
            raise ShapeError(f"input_ids must be 2-D, got {tuple(input_ids.shape)}")
        bsz, seq = input_ids.shape
        if seq > self.cfg.max_seq_len:
            raise ShapeError(f"sequence length {seq} exceeds {self.cfg.max_seq_len}")
        pad_mask = input_ids == PAD_ID
        x = self.token_embed(input_ids) + self.pos_embed[:seq]
        x = self.encoder(x, src_key_padding_mask=pad_mask)
        if self.cfg.directed:
            if feature_values is None or feature_mask is None:
                raise ShapeError("directed model requires feature_values and feature_mask")
            if feature_values.shape != (bsz, SEGMENT_WIDTH):
                raise ShapeError(
                    f"feature_values must be ({bsz}, {SEGMENT_WIDTH}), "
                    f"got {tuple(feature_values.shape)}"
                )
            fmask = feature_mask.to(dtype=x.dtype)
            v = feature_values.to(dtype=x.dtype) / self.feature_norms.to(dtype=x.dtype)
            embedded = (fmask * v).unsqueeze(-1) * self.value_proj + self.feature_pos
            f = self.feature_encoder(embedded, src_key_padding_mask=~feature_mask.bool())
            pooled = (f * fmask.unsqueeze(-1)).sum(1) / fmask.sum(1, keepdim=True)
            hf = self.reduce(pooled)
            x = torch.cat([x, hf.unsqueeze(1).expand(-1, seq, -1)], dim=-1)
        elif feature_values is not None:
            raise ShapeError("undirected model takes no feature input")
        return self.decode(F.gelu(self.joint(x)))
