"""Unit -> word transcription through the generator's known phoneme table.

Stands in for running an ASR model over vocoded answers: each cluster is
labelled with the gold phoneme it most often captures on training frames,
repeats are collapsed and the phoneme stream is spelled back into words.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import Codebook, assign_units
from .synth import GoldMap


def _streams(examples):
    for ex in examples:
        yield ex.question_features, ex.question_phonemes
        yield ex.passage_features, ex.passage_phonemes


@dataclass(frozen=True)
class UnitTranscriber:
    cluster_to_phoneme: tuple
    goldmap: GoldMap

    @classmethod
    def fit(cls, codebook: Codebook, goldmap: GoldMap, examples) -> "UnitTranscriber":
        """Majority gold phoneme per cluster over the examples' frames.

        Clusters that never win a frame fall back to the nearest prototype.
        """
        votes = np.zeros((codebook.k, goldmap.prototypes.shape[0]), dtype=np.int64)
        for feats, phones in _streams(examples):
            labels = assign_units(feats, codebook)
            np.add.at(votes, (labels, np.asarray(phones, dtype=np.int64)), 1)
        nearest = ((codebook.centroids[:, None] - goldmap.prototypes[None]) ** 2).sum(-1).argmin(1)
        mapping = np.where(votes.sum(1) > 0, votes.argmax(1), nearest)
        return cls(tuple(int(m) for m in mapping), goldmap)

    def phonemes(self, units) -> list[int]:
        out = []
        for u in units:
            ph = self.cluster_to_phoneme[int(u)]
            if not out or out[-1] != ph:
                out.append(ph)
        return out

    def words(self, units) -> list[str]:
        return self.goldmap.words(self.phonemes(units))

    def text(self, units) -> str:
        return " ".join(self.words(units))

    def to_json(self) -> dict:
        return {"cluster_to_phoneme": list(self.cluster_to_phoneme)}


def frame_purity(codebook: Codebook, examples) -> float:
    """Best-relabelling frame accuracy: each cluster credited with its majority phoneme."""
    votes: dict = {}
    total = 0
    for feats, phones in _streams(examples):
        labels = assign_units(feats, codebook)
        for u, ph in zip(labels.tolist(), phones):
            votes[(u, ph)] = votes.get((u, ph), 0) + 1
        total += len(phones)
    best: dict = {}
    for (u, _), n in votes.items():
        best[u] = max(best.get(u, 0), n)
    return sum(best.values()) / max(total, 1)
