"""Frame features to discrete units and back.

Frames are quantized against a k-means codebook (squared Euclidean distance,
k-means++ seeding, Lloyd iterations), adjacent repeats are collapsed by a
run-length codec, and a per-unit duration table restores frame counts when a
deduplicated unit stream has to be expanded again.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import InvalidInputError

FEATURE_MAGIC = b"UQFT"
CODEBOOK_MAGIC = b"UQCB"
_HEADER = struct.Struct("<4sII")


@dataclass(frozen=True)
class FrameFeatures:
    """``T x D`` matrix of per-frame feature vectors."""

    frames: np.ndarray
    frame_duration_ms: float = 20.0

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise InvalidInputError(f"frames must be 2-D, got shape {frames.shape}")
        if frames.shape[1] < 1:
            raise InvalidInputError("feature dimension must be >= 1")
        if not np.all(np.isfinite(frames)):
            raise InvalidInputError("frames contain non-finite values")
        if not self.frame_duration_ms > 0:
            raise InvalidInputError("frame_duration_ms must be positive")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray
    train_inertia: float | None = None
    inertia_history: tuple = ()

    def __post_init__(self):
        c = np.ascontiguousarray(self.centroids, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise InvalidInputError(f"centroids must be a non-empty K x D matrix, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("centroids contain non-finite values")
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class UnitSequence:
    """Unit IDs with parallel frame counts."""

    units: tuple
    durations: tuple
    deduplicated: bool = True

    def __post_init__(self):
        units = tuple(int(u) for u in self.units)
        durations = tuple(int(d) for d in self.durations)
        if len(units) != len(durations):
            raise InvalidInputError(
                f"units ({len(units)}) and durations ({len(durations)}) differ in length")
        if any(u < 0 for u in units):
            raise InvalidInputError("unit IDs must be non-negative")
        if any(d < 1 for d in durations):
            raise InvalidInputError("durations must be >= 1")
        if self.deduplicated and any(a == b for a, b in zip(units, units[1:])):
            raise InvalidInputError("deduplicated sequence has equal adjacent units")
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "durations", durations)

    def __len__(self):
        return len(self.units)

    @property
    def n_frames(self) -> int:
        return sum(self.durations)

    def to_json(self) -> dict:
        return {"units": list(self.units), "durations": list(self.durations)}

    @classmethod
    def from_json(cls, obj: dict) -> "UnitSequence":
        return cls(obj["units"], obj["durations"])


# ---------------------------------------------------------------- k-means


def _stack_features(features) -> np.ndarray:
    if isinstance(features, FrameFeatures):
        features = [features]
    mats = []
    for f in features:
        if not isinstance(f, FrameFeatures):
            f = FrameFeatures(np.asarray(f))
        mats.append(f.frames)
    if not mats:
        raise InvalidInputError("no feature matrices given")
    dims = {m.shape[1] for m in mats}
    if len(dims) != 1:
        raise InvalidInputError(f"feature dimensions differ: {sorted(dims)}")
    return np.ascontiguousarray(np.concatenate(mats, axis=0))


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++: of ``2 + ln k`` D^2-sampled candidates, keep the one
    that lowers the potential most."""
    n = x.shape[0]
    trials = 2 + int(np.log(k))
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # every point already coincides with a centroid
            cand = rng.integers(n, size=trials)
        else:
            cand = np.searchsorted(np.cumsum(d2), rng.random(trials) * total, side="right")
            cand = np.minimum(cand, n - 1)
        best_idx, best_d2, best_pot = -1, None, np.inf
        for c in cand:
            new = np.minimum(d2, ((x - x[c]) ** 2).sum(axis=1))
            pot = new.sum()
            if pot < best_pot:
                best_idx, best_d2, best_pot = int(c), new, pot
        centroids[j] = x[best_idx]
        d2 = best_d2
    return centroids


def _repair_empty(x, labels, d2, centroids, counts):
    """Give each empty cluster the farthest point of the currently largest one."""
    taken = np.zeros(x.shape[0], dtype=bool)
    for j in np.flatnonzero(counts == 0):
        big = int(np.argmax(counts))
        members = np.flatnonzero((labels == big) & ~taken)
        if members.size == 0:
            continue
        far = members[np.argmax(d2[members])]
        taken[far] = True
        centroids[j] = x[far]
        counts[big] -= 1
        counts[j] = 1
        labels[far] = j
    return centroids


def _lloyd(x, k, max_iters, rng):
    centroids = _kmeans_pp(x, k, rng)
    history = []
    prev = None
    converged = False
    for _ in range(max_iters):
        labels, d2 = kernels.nearest_centroid(x, centroids)
        history.append(float(d2.sum()))
        if prev is not None and np.array_equal(labels, prev):
            converged = True
            break
        sums, counts = kernels.centroid_sums(x, labels, k)
        nonempty = counts > 0
        centroids = centroids.copy()
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            labels = labels.copy()
            centroids = _repair_empty(x, labels, d2, centroids, counts)
        prev = labels
    if not converged:
        _, d2 = kernels.nearest_centroid(x, centroids)
        history.append(float(d2.sum()))
    return centroids, history


def train_codebook(features, k: int = 100, max_iters: int = 100, seed: int = 0,
                   n_init: int = 1) -> Codebook:
    """Fit ``k`` centroids with greedy k-means++ seeding and Lloyd iterations.

    Each run stops when no assignment changes or after ``max_iters`` updates;
    with ``n_init > 1`` the run with the lowest final inertia wins.  The
    codebook records the inertia measured at every assignment pass.
    """
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    if n_init < 1:
        raise InvalidInputError("n_init must be >= 1")
    x = _stack_features(features)
    if x.shape[0] < k:
        raise InvalidInputError(f"{x.shape[0]} frames cannot support k={k} clusters")
    best = None
    for child in np.random.SeedSequence(seed).spawn(n_init):
        centroids, history = _lloyd(x, k, max_iters, np.random.default_rng(child))
        if best is None or history[-1] < best[1][-1]:
            best = (centroids, history)
    centroids, history = best
    return Codebook(centroids, train_inertia=history[-1], inertia_history=tuple(history))


def assign_units(features: FrameFeatures, codebook: Codebook) -> np.ndarray:
    """Nearest-centroid unit ID per frame; ties go to the lowest index."""
    if not isinstance(features, FrameFeatures):
        features = FrameFeatures(np.asarray(features))
    if features.dim != codebook.feature_dim:
        raise InvalidInputError(
            f"feature dim {features.dim} does not match codebook dim {codebook.feature_dim}")
    if features.n_frames == 0:
        return np.empty(0, dtype=np.int64)
    labels, _ = kernels.nearest_centroid(np.ascontiguousarray(features.frames), codebook.centroids)
    return labels


# ---------------------------------------------------------------- run-length


def rle_encode(raw: Sequence[int], k: int | None = None) -> UnitSequence:
    arr = np.asarray(raw, dtype=np.int64).reshape(-1)
    if arr.size and arr.min() < 0:
        raise InvalidInputError("unit IDs must be non-negative")
    if k is not None and arr.size and arr.max() >= k:
        raise InvalidInputError(f"unit ID {int(arr.max())} outside [0, {k})")
    units, durations = kernels.rle_runs(np.ascontiguousarray(arr))
    return UnitSequence(units.tolist(), durations.tolist(), deduplicated=True)


def rle_decode(seq: UnitSequence) -> list[int]:
    if any(d < 1 for d in seq.durations):
        raise InvalidInputError("durations must be >= 1")
    return np.repeat(np.asarray(seq.units, dtype=np.int64),
                     np.asarray(seq.durations, dtype=np.int64)).tolist()


# ---------------------------------------------------------------- durations


def _round_half_up(total: int, count: int) -> int:
    # exact integer form of floor(total / count + 1/2)
    return (2 * total + count) // (2 * count)


@dataclass(frozen=True)
class DurationModel:
    """Mean frame count per unit, rounded half up and floored at 1."""

    table: dict = field(default_factory=dict)
    global_mean: int = 1

    def predict_one(self, unit: int) -> int:
        return self.table.get(int(unit), self.global_mean)

    def predict(self, units: Iterable[int]) -> list[int]:
        return [self.predict_one(u) for u in units]

    def expand(self, units: Sequence[int]) -> UnitSequence:
        """Attach predicted durations to a unit stream (runs merged first)."""
        dedup = [int(u) for i, u in enumerate(units) if i == 0 or u != units[i - 1]]
        return UnitSequence(dedup, self.predict(dedup))

    def to_json(self) -> dict:
        return {"table": {str(k): v for k, v in sorted(self.table.items())},
                "global_mean": self.global_mean}

    @classmethod
    def from_json(cls, obj: dict) -> "DurationModel":
        return cls({int(k): int(v) for k, v in obj["table"].items()}, int(obj["global_mean"]))


def fit_duration_model(corpus: Iterable[UnitSequence]) -> DurationModel:
    totals: dict[int, int] = {}
    counts: dict[int, int] = {}
    for seq in corpus:
        for u, d in zip(seq.units, seq.durations):
            totals[u] = totals.get(u, 0) + d
            counts[u] = counts.get(u, 0) + 1
    if not counts:
        raise InvalidInputError("duration corpus is empty")
    table = {u: max(1, _round_half_up(totals[u], counts[u])) for u in sorted(counts)}
    glob = max(1, _round_half_up(sum(totals.values()), sum(counts.values())))
    return DurationModel(table, glob)


# ---------------------------------------------------------------- file formats


def _write_matrix(path, magic: bytes, mat: np.ndarray) -> None:
    mat = np.ascontiguousarray(mat, dtype="<f4")
    rows, cols = mat.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, rows, cols))
        fh.write(mat.tobytes())


def _read_matrix(path, magic: bytes) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise InvalidInputError(f"{path}: truncated header")
    got, rows, cols = _HEADER.unpack_from(blob)
    if got != magic:
        raise InvalidInputError(f"{path}: bad magic {got!r}, expected {magic!r}")
    expected = _HEADER.size + 4 * rows * cols
    if len(blob) != expected:
        raise InvalidInputError(f"{path}: expected {expected} bytes, found {len(blob)}")
    return np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(rows, cols)


def write_features(path, features: FrameFeatures) -> None:
    _write_matrix(path, FEATURE_MAGIC, features.frames)


def read_features(path, frame_duration_ms: float = 20.0) -> FrameFeatures:
    mat = _read_matrix(path, FEATURE_MAGIC)
    if mat.shape[1] == 0:
        raise InvalidInputError(f"{path}: zero feature dimension")
    return FrameFeatures(mat.astype(np.float64), frame_duration_ms)


def write_codebook(path, codebook: Codebook) -> None:
    _write_matrix(path, CODEBOOK_MAGIC, codebook.centroids)


def read_codebook(path) -> Codebook:
    return Codebook(_read_matrix(path, CODEBOOK_MAGIC).astype(np.float64))
