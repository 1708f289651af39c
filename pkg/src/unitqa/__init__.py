"""Textless spoken question answering on discrete speech units, in numpy.

Frame features are quantised into k-means units and run-length encoded; an
encoder-decoder transformer pretrained on text QA is fine-tuned to map
question and passage units to answer units.  Evaluation scores transcribed
answers, and a cascade baseline is stress-tested under controlled WER.
"""

from .codec import (Codebook, DurationModel, FrameFeatures, UnitSequence, assign_units,
                    fit_duration_model, rle_decode, rle_encode, train_codebook)
from .errors import (ChecksumError, FormatVersionError, InvalidInputError, InvalidStateError,
                     StageDependencyError, TrainingDivergedError, UnitQAError)
from .metrics import EvalReport, bleu1, evaluate_dataset, exact_match, rouge_l, token_f1, wer
from .model import DecodeConfig, ModelConfig, Seq2SeqModel
from .vocab import Vocabulary, build_vocabulary

__version__ = "0.1.0"

__all__ = [
    "ChecksumError", "Codebook", "DecodeConfig", "DurationModel", "EvalReport", "FormatVersionError",
    "FrameFeatures", "InvalidInputError", "InvalidStateError", "ModelConfig", "Seq2SeqModel",
    "StageDependencyError", "TrainingDivergedError", "UnitQAError", "UnitSequence", "Vocabulary",
    "assign_units", "bleu1", "build_vocabulary", "evaluate_dataset", "exact_match",
    "fit_duration_model", "rle_decode", "rle_encode", "rouge_l", "token_f1", "train_codebook", "wer",
]
