"""Experiment configuration: one JSON document, every value defaulted.

The corpus seed pins data generation; training and decoding seeds are derived
from it (+1, +2) so a single --seed flag repins the whole pipeline.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace


@dataclass(frozen=True)
class CorpusSection:
    schemas_path: str = "schema.json"
    n_train: int = 4000
    n_eval: int = 200
    null_pad_fraction: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class ModelSection:
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    ff_dim: int = 512
    max_len: int = 256
    lr: float = 3e-4
    batch_size: int = 64
    steps: int = 5000
    warmup_steps: int = 100
    t_floor: float = 0.01


@dataclass(frozen=True)
class SweepSection:
    methods: tuple[str, ...] = ("baseline", "scaffold", "adaptive")
    step_counts: tuple[int, ...] = (2, 4, 8, 16, 32)
    baseline_response_len: int = 64
    fuzzy_threshold: float = 0.8


@dataclass(frozen=True)
class PathsSection:
    out_dir: str = "runs/default"
    train_file: str = "corpus_train.jsonl"
    eval_file: str = "corpus_eval.jsonl"
    vocab_file: str = "vocab.txt"
    checkpoint: str = "checkpoint.bin"
    loss_trace: str = "loss_trace.csv"
    predictions: str = "predictions.jsonl"
    report: str = "report.csv"
    timings: str = "timings.csv"
    details: str = "eval_details.jsonl"
    tables_dir: str = "tables"
    charts_dir: str = "charts"


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: CorpusSection = field(default_factory=CorpusSection)
    model: ModelSection = field(default_factory=ModelSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    paths: PathsSection = field(default_factory=PathsSection)

    def __post_init__(self) -> None:
        c, m, s = self.corpus, self.model, self.sweep
        if c.n_train < 1:
            raise ValueError("corpus.n_train must be >= 1")
        if c.n_eval < 1:
            raise ValueError("corpus.n_eval must be >= 1")
        if not 0.0 <= c.null_pad_fraction <= 1.0:
            raise ValueError("corpus.null_pad_fraction must lie in [0, 1]")
        if m.steps < 1 or m.batch_size < 1 or m.warmup_steps < 0:
            raise ValueError("model.steps and model.batch_size must be positive")
        if m.lr <= 0 or not 0.0 < m.t_floor <= 1.0:
            raise ValueError("model.lr must be positive and model.t_floor must lie in (0, 1]")
        if not s.methods or len(set(s.methods)) != len(s.methods):
            raise ValueError("sweep.methods must be nonempty and unique")
        for method in s.methods:
            if method not in ("baseline", "scaffold", "adaptive"):
                raise ValueError(f"unknown sweep method {method!r}")
        if not s.step_counts or len(set(s.step_counts)) != len(s.step_counts):
            raise ValueError("sweep.step_counts must be nonempty and unique")
        if any(k < 1 for k in s.step_counts):
            raise ValueError("sweep.step_counts must be positive")
        if not 0.0 < s.fuzzy_threshold <= 1.0:
            raise ValueError("sweep.fuzzy_threshold must lie in (0, 1]")
        if s.baseline_response_len < 1:
            raise ValueError("sweep.baseline_response_len must be >= 1")

    @property
    def train_seed(self) -> int:
        return self.corpus.seed + 1

    @property
    def decode_seed(self) -> int:
        return self.corpus.seed + 2

    def path(self, name: str) -> str:
        return os.path.join(self.paths.out_dir, getattr(self.paths, name))


_SECTIONS = {"corpus": CorpusSection, "model": ModelSection, "sweep": SweepSection, "paths": PathsSection}


def _section_from_dict(cls, raw: dict):
    known = {f.name: f for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ValueError(f"unknown config key {key!r} in section {cls.__name__}")
    coerced = {}
    for key, value in raw.items():
        coerced[key] = tuple(value) if isinstance(value, list) else value
    return cls(**coerced)


def config_from_dict(raw: dict) -> ExperimentConfig:
    for key in raw:
        if key not in _SECTIONS:
            raise ValueError(f"unknown config section {key!r}")
    parts = {name: _section_from_dict(cls, raw.get(name, {})) for name, cls in _SECTIONS.items()}
    return ExperimentConfig(**parts)


def load_config(path: str | None = None, seed: int | None = None, out_dir: str | None = None) -> ExperimentConfig:
    raw = {}
    if path is not None:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        if not isinstance(raw, dict):
            raise ValueError("config document must be a JSON object")
    cfg = config_from_dict(raw)
    if seed is not None:
        cfg = replace(cfg, corpus=replace(cfg.corpus, seed=seed))
    if out_dir is not None:
        cfg = replace(cfg, paths=replace(cfg.paths, out_dir=out_dir))
    return cfg


def config_fingerprint(cfg: ExperimentConfig) -> str:
    doc = asdict(cfg)
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()
