"""Stage orchestration behind the command line.

A run lives in one output directory::

    data/        goldmap.json, <split>.jsonl, <split>.uqft (spoken splits)
    units/       codebook.uqcb, durations.json, transcriber.json, vocab.json,
                 <split>.jsonl unit manifests
    models/      text_tqa.uqck, unit_tqa.uqck, unit_no-tqa.uqck
    predictions/ <arm>/<split>.jsonl
    reports/     <arm>/<split>.json, summary.csv
    sweep/       sweep.csv, sweep.json
    manifests/   <stage>.json

Every stage hashes the config blocks it reads together with the hashes of
the stages it consumes, so a hash names the whole upstream recipe.  A stage
refuses to run on top of an upstream manifest whose hash differs from the
one the current config implies, unless forced.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .codec import (FrameFeatures, fit_duration_model, read_features, train_codebook,
                    write_codebook, write_features)
from .errors import InvalidInputError, InvalidStateError, StageDependencyError
from .metrics import EvalReport, evaluate_dataset, reports_csv
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.config import DecodeConfig, ModelConfig
from .model.transformer import Seq2SeqModel
from .pipeline import (FINETUNE_UNIT, PRETRAIN_TQA, TextQAExample, TrainSpec, UnitQAExample,
                       convert_extractive_to_unit_labels, finetune_unit, manifest_record,
                       predict_unit_answers, prepare_unit_model, pretrain_tqa, quantize, read_jsonl,
                       text_example_from_record, unit_example_from_record, write_jsonl)
from .robustness import DEFAULT_LEVELS, CorruptionSpec, cascade_predictions, wer_sweep
from .synth import GeneratorSpec, GoldMap, SpokenExample, generate_corpus, goldmap_json
from .transcribe import UnitTranscriber
from .vocab import Vocabulary, build_vocabulary

log = logging.getLogger(__name__)

ARMS = ("tqa", "no-tqa", "cascade")
ARM_LABELS = {"no-tqa": "Unit-Seq2Seq", "tqa": "Unit-Seq2Seq-TQA", "cascade": "Cascade-Text"}
SPOKEN_SPLITS = ("unit_train", "unit_dev", "unit_test", "unit_abstractive_test")
EVAL_SPLITS = {"dev": ("unit_dev", "extractive"), "test": ("unit_test", "extractive"),
               "abstractive": ("unit_abstractive_test", "abstractive")}
DATASET_LABELS = {"dev": "extractive dev", "test": "extractive test", "abstractive": "abstractive test"}

# Desk-scale defaults, calibrated so the full acceptance run (three seeds)
# fits a CPU budget.  The paper-scale stage defaults live on TrainSpec.
DESK_GENERATOR = dict(tokens_per_passage=(10, 16), n_pretrain=40000, n_train=4000,
                      n_dev=200, n_test=200, n_abstractive_test=200)
DESK_MODEL = dict(d_model=64, n_heads=4, n_enc_layers=2, n_dec_layers=2, ffn_dim=256)
DESK_PRETRAIN = dict(epochs=3, lr=1e-3, batch_size=16)
DESK_FINETUNE = dict(epochs=5, lr=1e-3, batch_size=16)
DESK_DECODE = dict(beam_size=5, length_penalty_alpha=2.0, max_new_tokens=48)


def sub_seed(root: int, name: str) -> int:
    """Named child seed, so stages draw independent streams from one root."""
    digest = hashlib.sha256(f"{int(root)}/{name}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunConfig:
    """Every knob of a run, one block per module plus the root seed."""

    seed: int = 0
    generator: dict = field(default_factory=lambda: dict(DESK_GENERATOR))
    codebook: dict = field(default_factory=lambda: {"k": 100, "max_iters": 100, "n_init": 3,
                                                    "fit_examples": 500})
    model: dict = field(default_factory=lambda: dict(DESK_MODEL))
    pretrain: dict = field(default_factory=lambda: dict(DESK_PRETRAIN))
    finetune: dict = field(default_factory=lambda: dict(DESK_FINETUNE))
    decode: dict = field(default_factory=lambda: dict(DESK_DECODE))
    sweep: dict = field(default_factory=lambda: {"levels": list(DEFAULT_LEVELS),
                                                 "op_mix": [0.6, 0.2, 0.2],
                                                 "cascade_wer": 0.1})

    def __post_init__(self):
        # building each typed spec once surfaces bad values before any work starts
        self.generator_spec()
        self.model_config(8)
        self.decode_config()
        self.pretrain_spec()
        self.finetune_spec()
        self.corruption(0.0)
        cb = self.codebook
        unknown = set(cb) - {"k", "max_iters", "n_init", "fit_examples"}
        if unknown:
            raise InvalidInputError(f"unknown codebook keys {sorted(unknown)}")
        if cb.get("k", 100) < 1 or cb.get("fit_examples", 1) < 1:
            raise InvalidInputError("codebook k and fit_examples must be positive")
        levels = [float(v) for v in self.sweep.get("levels", DEFAULT_LEVELS)]
        if not levels or levels != sorted(levels):
            raise InvalidInputError("sweep levels must be a non-empty ascending list")
        if "vocab_size" in self.model:
            raise InvalidInputError("vocab_size is derived from the data; drop it from the model block")

    # -------------------------------------------------------------- io

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys {sorted(unknown)}")
        base = cls()
        merged = {}
        for name in known:
            default = getattr(base, name)
            given = obj.get(name)
            if isinstance(default, dict):
                if given is not None and not isinstance(given, dict):
                    raise InvalidInputError(f"config block {name!r} must be an object")
                merged[name] = {**default, **(given or {})}
            else:
                merged[name] = default if given is None else given
        return cls(**merged)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise InvalidInputError(f"config file {path} not found") from exc
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise InvalidInputError("config file must hold a JSON object")
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def with_overrides(self, seed: int | None = None, levels=None) -> "RunConfig":
        out = self
        if seed is not None:
            out = replace(out, seed=int(seed))
        if levels is not None:
            out = replace(out, sweep={**out.sweep, "levels": [float(v) for v in levels]})
        return out

    # -------------------------------------------------------------- typed views

    def generator_spec(self) -> GeneratorSpec:
        try:
            return GeneratorSpec(**{**self.generator, "seed": sub_seed(self.seed, "synth")})
        except TypeError as exc:
            raise InvalidInputError(f"generator block: {exc}") from exc

    def model_config(self, vocab_size: int) -> ModelConfig:
        try:
            return ModelConfig(vocab_size=vocab_size, **self.model)
        except TypeError as exc:
            raise InvalidInputError(f"model block: {exc}") from exc

    def _train_spec(self, stage: str, block: dict) -> TrainSpec:
        try:
            return TrainSpec.for_stage(stage, **{**block, "seed": sub_seed(self.seed, stage)})
        except TypeError as exc:
            raise InvalidInputError(f"{stage} block: {exc}") from exc

    def pretrain_spec(self) -> TrainSpec:
        return self._train_spec(PRETRAIN_TQA, self.pretrain)

    def finetune_spec(self) -> TrainSpec:
        return self._train_spec(FINETUNE_UNIT, self.finetune)

    def decode_config(self) -> DecodeConfig:
        try:
            return DecodeConfig(**self.decode)
        except TypeError as exc:
            raise InvalidInputError(f"decode block: {exc}") from exc

    def corruption(self, level: float) -> CorruptionSpec:
        return CorruptionSpec(float(level), tuple(self.sweep.get("op_mix", (0.6, 0.2, 0.2))),
                              sub_seed(self.seed, "corrupt"))

    # -------------------------------------------------------------- hashes

    def stage_blocks(self, stage: str) -> dict:
        blocks = {
            "synth": {"generator": self.generator},
            "codebook": {"codebook": self.codebook},
            "pretrain": {"model": self.model, "pretrain": self.pretrain},
            "finetune-tqa": {"finetune": self.finetune},
            "finetune-no-tqa": {"model": self.model, "finetune": self.finetune},
            "sweep": {"sweep": self.sweep, "decode": self.decode},
        }
        if stage in blocks:
            return blocks[stage]
        if stage == "infer-cascade":
            return {"decode": self.decode, "op_mix": self.sweep.get("op_mix"),
                    "cascade_wer": self.sweep.get("cascade_wer")}
        if stage.startswith("infer-"):
            return {"decode": self.decode}
        if stage.startswith("eval-"):
            return {}
        raise InvalidInputError(f"unknown stage {stage!r}")

    def stage_hash(self, stage: str) -> str:
        upstream = {dep: self.stage_hash(dep) for dep in stage_dependencies(stage)}
        return _digest({"stage": stage, "seed": self.seed, "blocks": self.stage_blocks(stage),
                        "upstream": upstream})


def stage_dependencies(stage: str) -> tuple:
    deps = {"synth": (), "codebook": ("synth",), "pretrain": ("codebook",),
            "finetune-tqa": ("codebook", "pretrain"), "finetune-no-tqa": ("codebook",),
            "infer-tqa": ("codebook", "finetune-tqa"),
            "infer-no-tqa": ("codebook", "finetune-no-tqa"),
            "infer-cascade": ("codebook", "pretrain"),
            "sweep": ("codebook", "pretrain", "eval-tqa")}
    if stage in deps:
        return deps[stage]
    if stage.startswith("eval-") and stage[5:] in ARMS:
        return (f"infer-{stage[5:]}",)
    raise InvalidInputError(f"unknown stage {stage!r}")


# ---------------------------------------------------------------- workspace


class Workspace:
    """Paths, manifests and dependency checks for one output directory."""

    def __init__(self, root, config: RunConfig, force: bool = False):
        self.root = Path(root)
        self.config = config
        self.force = force

    def path(self, rel: str) -> Path:
        return self.root / rel

    def manifest_path(self, stage: str) -> Path:
        return self.root / "manifests" / f"{stage}.json"

    def require(self, stage: str) -> None:
        """Check every upstream manifest exists, names its outputs and matches the config."""
        for dep in stage_dependencies(stage):
            mpath = self.manifest_path(dep)
            if not mpath.exists():
                raise StageDependencyError(
                    f"stage {stage!r} needs the {dep!r} stage output; missing {mpath}")
            manifest = json.loads(mpath.read_text(encoding="utf-8"))
            for rel in manifest.get("outputs", {}):
                if not self.path(rel).exists():
                    raise StageDependencyError(f"stage {stage!r} needs {self.path(rel)}, which is missing")
            expected = self.config.stage_hash(dep)
            if manifest.get("config_hash") != expected and not self.force:
                raise InvalidStateError(
                    f"upstream {dep!r} was built from config {manifest.get('config_hash', '?')[:12]}, "
                    f"current config implies {expected[:12]}; rerun it or pass --force")

    def write_manifest(self, stage: str, outputs, metrics: dict | None = None) -> Path:
        manifest = {
            "stage": stage,
            "seed": self.config.seed,
            "config_hash": self.config.stage_hash(stage),
            "blocks": self.config.stage_blocks(stage),
            "upstream": {dep: self.config.stage_hash(dep) for dep in stage_dependencies(stage)},
            "outputs": {str(Path(p).relative_to(self.root)): _file_digest(Path(p))
                        for p in sorted(map(str, outputs))},
            "metrics": metrics or {},
        }
        mpath = self.manifest_path(stage)
        mpath.parent.mkdir(parents=True, exist_ok=True)
        mpath.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return mpath


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------- loaders


def load_goldmap(ws: Workspace) -> GoldMap:
    return GoldMap.from_json(_read_json(ws.path("data/goldmap.json")))


def load_spoken(ws: Workspace, split: str) -> list[SpokenExample]:
    """Rebuild spoken examples from a split's JSONL and concatenated frame file."""
    frames = read_features(ws.path(f"data/{split}.uqft")).frames
    out = []
    for rec in read_jsonl(ws.path(f"data/{split}.jsonl")):
        qs, qe = rec["question_frames"]
        ps, pe = rec["passage_frames"]
        out.append(SpokenExample(
            rec["id"], rec["kind"], rec["question_text"].split(), rec["passage_text"].split(),
            rec["answer_text"].split(),
            question_features=FrameFeatures(frames[qs:qe]), passage_features=FrameFeatures(frames[ps:pe]),
            question_phonemes=rec["question_phonemes"], passage_phonemes=rec["passage_phonemes"],
            answer_span_frames=tuple(rec["answer_span_frames"])))
    return out


def load_vocab(ws: Workspace) -> Vocabulary:
    return Vocabulary.from_json(_read_json(ws.path("units/vocab.json")))


def load_transcriber(ws: Workspace) -> UnitTranscriber:
    obj = _read_json(ws.path("units/transcriber.json"))
    return UnitTranscriber(tuple(obj["cluster_to_phoneme"]), load_goldmap(ws))


def load_unit_split(ws: Workspace, split: str):
    return [unit_example_from_record(r) for r in read_jsonl(ws.path(f"units/{split}.jsonl"))]


def load_text_split(ws: Workspace, split: str) -> list[TextQAExample]:
    return [text_example_from_record(r) for r in read_jsonl(ws.path(f"data/{split}.jsonl"))]


def checkpoint_path(ws: Workspace, arm: str) -> Path:
    return ws.path("models/text_tqa.uqck" if arm == "cascade" else f"models/unit_{arm}.uqck")


# ---------------------------------------------------------------- stages


def stage_synth(ws: Workspace) -> dict:
    spec = ws.config.generator_spec()
    corpus = generate_corpus(spec)
    data = ws.path("data")
    data.mkdir(parents=True, exist_ok=True)
    outputs = [data / "goldmap.json"]
    (data / "goldmap.json").write_text(goldmap_json(corpus.goldmap) + "\n", encoding="utf-8")
    write_jsonl(data / "text_pretrain.jsonl",
                [manifest_record(e.id, e.kind, e.question, e.passage, e.answer)
                 for e in corpus.text_pretrain])
    outputs.append(data / "text_pretrain.jsonl")
    for split in SPOKEN_SPLITS:
        records, mats, offset = [], [], 0
        for ex in getattr(corpus, split):
            q, p = ex.question_features.frames, ex.passage_features.frames
            rec = manifest_record(ex.id, ex.kind, ex.question, ex.passage, ex.answer,
                                  span=ex.answer_span_frames,
                                  question_frames=[offset, offset + len(q)],
                                  passage_frames=[offset + len(q), offset + len(q) + len(p)],
                                  question_phonemes=list(ex.question_phonemes),
                                  passage_phonemes=list(ex.passage_phonemes))
            offset += len(q) + len(p)
            mats.extend([q, p])
            records.append(rec)
        write_jsonl(data / f"{split}.jsonl", records)
        write_features(data / f"{split}.uqft", FrameFeatures(np.concatenate(mats, axis=0)))
        outputs += [data / f"{split}.jsonl", data / f"{split}.uqft"]
    counts = {name: len(rows) for name, rows in corpus.splits().items()}
    ws.write_manifest("synth", outputs, {"counts": counts})
    return counts


def stage_codebook(ws: Workspace) -> dict:
    ws.require("codebook")
    cfg = ws.config.codebook
    goldmap = load_goldmap(ws)
    train = load_spoken(ws, "unit_train")
    fit_set = train[:cfg.get("fit_examples", 500)]
    frames = [f for ex in fit_set for f in (ex.question_features, ex.passage_features)]
    codebook = train_codebook(frames, k=cfg.get("k", 100), max_iters=cfg.get("max_iters", 100),
                              seed=sub_seed(ws.config.seed, "codebook"), n_init=cfg.get("n_init", 1))
    units = ws.path("units")
    units.mkdir(parents=True, exist_ok=True)
    write_codebook(units / "codebook.uqcb", codebook)
    transcriber = UnitTranscriber.fit(codebook, goldmap, fit_set)
    outputs = [units / "codebook.uqcb",
               _write_json(units / "transcriber.json", transcriber.to_json())]
    seqs = []
    for split in SPOKEN_SPLITS:
        examples = train if split == "unit_train" else load_spoken(ws, split)
        records = []
        for ex in examples:
            _, q = quantize(ex.question_features, codebook)
            p_raw, p = quantize(ex.passage_features, codebook)
            extra = {}
            if split == "unit_train":
                ans = convert_extractive_to_unit_labels(
                    UnitQAExample(ex.id, q, p, span=ex.answer_span_frames), p_raw).answer
                extra = {"answer_units": list(ans.units), "answer_durations": list(ans.durations)}
                seqs += [q, p]
            records.append(manifest_record(ex.id, ex.kind, ex.question, ex.passage, ex.answer,
                                           q, p, ex.answer_span_frames, **extra))
        write_jsonl(units / f"{split}.jsonl", records)
        outputs.append(units / f"{split}.jsonl")
    outputs.append(_write_json(units / "durations.json", fit_duration_model(seqs).to_json()))
    texts = [" ".join(r["question_text"].split() + r["passage_text"].split() + r["answer_text"].split())
             for r in read_jsonl(ws.path("data/text_pretrain.jsonl"))]
    vocab = build_vocabulary(texts + [" ".join(sorted(goldmap.spellings))], codebook.k)
    outputs.append(_write_json(units / "vocab.json", vocab.to_json()))
    metrics = {"train_inertia": codebook.train_inertia, "vocab_size": vocab.total_size,
               "vocab_digest": vocab.digest()}
    ws.write_manifest("codebook", outputs, metrics)
    return metrics


def initial_model(ws: Workspace, vocab: Vocabulary) -> Seq2SeqModel:
    """Shared starting point of both unit arms (and of text pretraining)."""
    return Seq2SeqModel.initialize(ws.config.model_config(vocab.total_size),
                                   sub_seed(ws.config.seed, "init"))


def _save_model(ws: Workspace, model: Seq2SeqModel, path: Path, stage: str, vocab: Vocabulary) -> Path:
    model.meta["config_hash"] = ws.config.stage_hash(stage)
    path.parent.mkdir(parents=True, exist_ok=True)
    return save_checkpoint(model, path, vocab.digest())


def stage_pretrain(ws: Workspace) -> dict:
    ws.require("pretrain")
    vocab = load_vocab(ws)
    data = load_text_split(ws, "text_pretrain")
    model = initial_model(ws, vocab)
    result = pretrain_tqa(model, data, ws.config.pretrain_spec(), vocab)
    path = _save_model(ws, model, checkpoint_path(ws, "cascade"), "pretrain", vocab)
    metrics = {"epoch_losses": result.epoch_losses}
    ws.write_manifest("pretrain", [path], metrics)
    return metrics


def stage_finetune(ws: Workspace, arm: str) -> dict:
    if arm not in ("tqa", "no-tqa"):
        raise InvalidInputError(f"finetune takes --arm tqa or no-tqa, not {arm!r}")
    stage = f"finetune-{arm}"
    ws.require(stage)
    vocab = load_vocab(ws)
    if arm == "tqa":
        start = load_checkpoint(checkpoint_path(ws, "cascade"), vocab.digest())
    else:
        start = initial_model(ws, vocab)
    # same unit-row seed and batch order in both arms, so only pretraining differs
    model = prepare_unit_model(start, vocab, sub_seed(ws.config.seed, "unit_embed"))
    result = finetune_unit(model, load_unit_split(ws, "unit_train"), ws.config.finetune_spec(), vocab)
    path = _save_model(ws, model, checkpoint_path(ws, arm), stage, vocab)
    metrics = {"epoch_losses": result.epoch_losses}
    ws.write_manifest(stage, [path], metrics)
    return metrics


def _golds(ws: Workspace, split: str) -> dict:
    return {r["id"]: r["answer_text"] for r in read_jsonl(ws.path(f"data/{split}.jsonl"))}


def stage_infer(ws: Workspace, arm: str) -> dict:
    if arm not in ARMS:
        raise InvalidInputError(f"unknown arm {arm!r}")
    stage = f"infer-{arm}"
    ws.require(stage)
    vocab = load_vocab(ws)
    model = load_checkpoint(checkpoint_path(ws, arm), vocab.digest())
    dc = ws.config.decode_config()
    outputs, metrics = [], {}
    for name, (split, _) in EVAL_SPLITS.items():
        if arm == "cascade":
            preds, measured = cascade_predictions(model, load_text_split(ws, split),
                                                  ws.config.corruption(ws.config.sweep.get("cascade_wer", 0.0)),
                                                  vocab, dc)
            metrics[f"{name}_measured_wer"] = measured
        else:
            preds = predict_unit_answers(model, load_unit_split(ws, split), vocab,
                                         load_transcriber(ws), dc)
        golds = _golds(ws, split)
        path = ws.path(f"predictions/{arm}/{name}.jsonl")
        path.parent.mkdir(parents=True, exist_ok=True)
        write_jsonl(path, [{"id": i, "prediction": preds[i], "gold": golds[i]} for i in sorted(golds)])
        outputs.append(path)
    ws.write_manifest(stage, outputs, metrics)
    return metrics


def evaluate_predictions(path, mode: str, dataset_name: str) -> EvalReport:
    rows = read_jsonl(path)
    return evaluate_dataset({r["id"]: r["prediction"] for r in rows},
                            {r["id"]: r["gold"] for r in rows}, mode, dataset_name)


def _report_from_json(obj: dict) -> EvalReport:
    return EvalReport(**obj)


def write_summary(ws: Workspace) -> Path:
    """Arms x splits grid from whichever arm reports exist."""
    reports, lead = [], []
    for arm in ("no-tqa", "tqa", "cascade"):
        for name in EVAL_SPLITS:
            path = ws.path(f"reports/{arm}/{name}.json")
            if path.exists():
                reports.append(_report_from_json(_read_json(path)))
                lead.append({"arm": ARM_LABELS[arm]})
    out = ws.path("reports/summary.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(reports_csv(reports, lead) if reports else "", encoding="utf-8")
    return out


def stage_eval(ws: Workspace, arm: str) -> dict:
    if arm not in ARMS:
        raise InvalidInputError(f"unknown arm {arm!r}")
    stage = f"eval-{arm}"
    ws.require(stage)
    outputs, metrics = [], {}
    for name, (_, mode) in EVAL_SPLITS.items():
        report = evaluate_predictions(ws.path(f"predictions/{arm}/{name}.jsonl"), mode,
                                      DATASET_LABELS[name])
        outputs.append(_write_json(ws.path(f"reports/{arm}/{name}.json"),
                                   json.loads(report.to_json(with_rows=True))))
        metrics[name] = report.summary()
    ws.write_manifest(stage, outputs, metrics)
    write_summary(ws)
    return metrics


def stage_sweep(ws: Workspace) -> dict:
    ws.require("sweep")
    vocab = load_vocab(ws)
    model = load_checkpoint(checkpoint_path(ws, "cascade"), vocab.digest())
    e2e = _report_from_json(_read_json(ws.path("reports/tqa/dev.json")))
    sweep_cfg = ws.config.sweep
    result = wer_sweep(model, e2e, load_text_split(ws, "unit_dev"), vocab,
                       sweep_cfg.get("levels", DEFAULT_LEVELS), ws.config.decode_config(),
                       tuple(sweep_cfg.get("op_mix", (0.6, 0.2, 0.2))),
                       sub_seed(ws.config.seed, "corrupt"))
    out = ws.path("sweep")
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(result.to_csv(), encoding="utf-8")
    (out / "sweep.json").write_text(result.to_json() + "\n", encoding="utf-8")
    summary = result.summary()
    ws.write_manifest("sweep", [out / "sweep.csv", out / "sweep.json"],
                      {"spearman": summary["spearman"], "cascade_drop": summary["cascade_drop"]})
    return summary


def stage_repro(ws: Workspace) -> dict:
    """Every stage in order; equal to running the individual commands."""
    stage_synth(ws)
    stage_codebook(ws)
    stage_pretrain(ws)
    for arm in ("tqa", "no-tqa"):
        stage_finetune(ws, arm)
    results = {}
    for arm in ARMS:
        stage_infer(ws, arm)
        results[arm] = stage_eval(ws, arm)
    results["sweep"] = stage_sweep(ws)
    return results
