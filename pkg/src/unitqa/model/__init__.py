"""Encoder-decoder transformer with hand-written backpropagation."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import DecodeConfig, ModelConfig
from .decode import beam_decode, greedy_decode
from .optim import AdamW, train_step
from .transformer import Seq2SeqModel

__all__ = ["AdamW", "DecodeConfig", "ModelConfig", "Seq2SeqModel", "beam_decode", "greedy_decode",
           "load_checkpoint", "save_checkpoint", "train_step"]
