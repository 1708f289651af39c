from __future__ import annotations

from dataclasses import asdict, dataclass

from ..errors import InvalidInputError


@dataclass(frozen=True)
class ModelConfig:
    """Encoder-decoder shape.

    The encoder attends locally (``local_radius`` positions either side) plus
    to one transient summary token per ``global_block`` positions.  With
    ``relative_bias`` every self-attention adds a learned per-head scalar
    for the query-key offset, clipped to ``rel_radius``; in the encoder all
    summary tokens share one extra bucket.
    """

    vocab_size: int
    d_model: int = 128
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    ffn_dim: int = 512
    local_radius: int = 16
    global_block: int = 16
    global_tokens: bool = True
    relative_bias: bool = True
    rel_radius: int = 8
    max_len: int = 512
    dropout: float = 0.0
    init_std: float | None = None
    embed_std: float = 1.0
    pad_id: int = 0

    def __post_init__(self):
        for name in ("vocab_size", "d_model", "n_heads", "n_enc_layers", "n_dec_layers",
                     "ffn_dim", "local_radius", "global_block", "max_len", "rel_radius"):
            if int(getattr(self, name)) < 1:
                raise InvalidInputError(f"{name} must be a positive integer")
        if self.d_model % self.n_heads:
            raise InvalidInputError("d_model must be divisible by n_heads")
        if self.max_len < 8:
            raise InvalidInputError("max_len must be >= 8")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidInputError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 5
    length_penalty_alpha: float = 2.0
    max_new_tokens: int = 64

    def __post_init__(self):
        if self.beam_size < 1:
            raise InvalidInputError("beam_size must be >= 1")
        if self.max_new_tokens < 1:
            raise InvalidInputError("max_new_tokens must be >= 1")
