"""Command-line pipeline: gen-data -> train -> sweep -> report.

Every subcommand takes --config PATH (JSON, all keys optional), --seed N and
--out DIR. Artifacts land under the out directory with fixed names so a fixed
config plus seed reproduces every file byte for byte (wall-clock timings are
kept out of the deterministic report on purpose).
"""

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict

import torch

from . import corpus as corpus_mod
from . import tokenization as tok
from .config import ExperimentConfig, load_config
from .decode import DecodeConfig, generate
from .evalkit import EvalReport, evaluate_cell, parse_output
from .model import (
    EncodedExample,
    MaskedDiffusionModel,
    ModelConfig,
    TrainConfig,
    build_model,
    load_checkpoint,
    load_model_arrays,
    load_training_checkpoint,
    moving_average,
    save_training_checkpoint,
    train,
)
from .scaffold import augment_prompt, build_prompt_context

REPORT_COLUMNS = (
    "method", "steps", "sv", "fc", "sc", "precision", "recall",
    "f1_exact", "f1_fuzzy", "hr", "n", "forward_passes",
)


def _schemas_by_id(schemas: list[corpus_mod.Schema]) -> dict[str, corpus_mod.Schema]:
    return {s.schema_id: s for s in schemas}


def _load_schemas_or_default(cfg: ExperimentConfig) -> list[corpus_mod.Schema]:
    path = os.path.join(cfg.paths.out_dir, cfg.corpus.schemas_path)
    if os.path.exists(path):
        return corpus_mod.load_schemas(path)
    schemas = [corpus_mod.DEFAULT_SCHEMA]
    corpus_mod.save_schemas(path, schemas)
    return schemas


def cmd_gen_data(cfg: ExperimentConfig) -> None:
    os.makedirs(cfg.paths.out_dir, exist_ok=True)
    schemas = _load_schemas_or_default(cfg)
    c = cfg.corpus
    train_set = corpus_mod.make_training_set(
        schemas, c.n_train, c.null_pad_fraction, c.seed, corpus_mod.name_pair_pool("train")
    )
    eval_set = corpus_mod.make_training_set(
        schemas, c.n_eval, 0.0, c.seed + c.n_train, corpus_mod.name_pair_pool("eval")
    )

    def pair_of(ex: corpus_mod.Example) -> tuple[str, str]:
        raw = json.loads(ex.gold_json)
        return str(raw.get("name")), str(raw.get("occupation"))

    train_pairs = {pair_of(ex) for ex in train_set}
    eval_pairs = {pair_of(ex) for ex in eval_set}
    overlap = train_pairs & eval_pairs
    if overlap:
        raise RuntimeError(f"held-out split leaks {len(overlap)} (name, occupation) pairs into training")
    for ex in train_set + eval_set:
        if not corpus_mod.grounding_holds(ex):
            raise RuntimeError("generated example has a gold value missing from its source text")

    schemas_by_id = _schemas_by_id(schemas)
    texts: list[str] = []
    for ex in train_set + eval_set:
        record = corpus_mod.record_from_gold(ex.gold_json, schemas_by_id[ex.schema_id])
        texts.extend((ex.prompt, ex.gold_json, corpus_mod.padded_target_json(record)))
    texts.append(corpus_mod.NULL_DIRECTIVE)
    vocab = tok.build_vocab(texts)

    corpus_mod.write_examples(cfg.path("train_file"), train_set)
    corpus_mod.write_examples(cfg.path("eval_file"), eval_set)
    tok.save_vocab(cfg.path("vocab_file"), vocab)
    padded = sum(ex.padded for ex in train_set)
    print(
        f"[gen-data] train={len(train_set)} ({padded} null-padded) eval={len(eval_set)} "
        f"vocab={vocab.size} disjoint (name, occupation) pairs verified "
        f"(train {len(train_pairs)}, eval {len(eval_pairs)}, overlap 0)"
    )


def _encode_training_rows(
    examples: list[corpus_mod.Example],
    schemas_by_id: dict[str, corpus_mod.Schema],
    vocab: tok.Vocabulary,
    max_len: int,
) -> list[EncodedExample]:
    rows = []
    for ex in examples:
        schema = schemas_by_id[ex.schema_id]
        if ex.padded:
            target = corpus_mod.padded_target_json(corpus_mod.record_from_gold(ex.gold_json, schema))
        else:
            target = ex.gold_json
        prompt_ids = tok.encode(vocab, ex.prompt)
        target_ids = tok.encode(vocab, target)
        ids = [tok.BOS_ID, *prompt_ids, tok.SEP_ID, *target_ids, tok.EOS_ID]
        if len(ids) > max_len:
            raise ValueError(f"encoded example has {len(ids)} tokens, exceeding max_len {max_len}")
        rows.append(EncodedExample(ids, prompt_len=len(prompt_ids) + 2))
    return rows


def _model_config(cfg: ExperimentConfig, vocab_size: int) -> ModelConfig:
    m = cfg.model
    return ModelConfig(vocab_size, m.d_model, m.n_layers, m.n_heads, m.ff_dim, m.max_len)


def cmd_train(cfg: ExperimentConfig) -> None:
    vocab = tok.load_vocab(cfg.path("vocab_file"))
    schemas = _load_schemas_or_default(cfg)
    examples = corpus_mod.read_examples(cfg.path("train_file"))
    rows = _encode_training_rows(examples, _schemas_by_id(schemas), vocab, cfg.model.max_len)

    mcfg = _model_config(cfg, vocab.size)
    tcfg = TrainConfig(
        steps=cfg.model.steps,
        batch_size=cfg.model.batch_size,
        lr=cfg.model.lr,
        warmup_steps=cfg.model.warmup_steps,
        t_floor=cfg.model.t_floor,
        seed=cfg.train_seed,
    )
    start_step = 0
    checkpoint_path = cfg.path("checkpoint")
    if os.path.exists(checkpoint_path):
        _, meta = load_checkpoint(checkpoint_path)
        start_step = int(meta["step"])
        if start_step >= tcfg.steps:
            print(f"[train] checkpoint already at step {start_step}, nothing to do")
            return
        model = MaskedDiffusionModel(ModelConfig(**meta["model"]))
        optimizer = torch.optim.Adam(model.parameters(), lr=tcfg.lr)
        load_training_checkpoint(checkpoint_path, model, optimizer)
        print(f"[train] resuming from step {start_step}")
    else:
        model = build_model(mcfg, cfg.train_seed)
        optimizer = torch.optim.Adam(model.parameters(), lr=tcfg.lr)
    trace = train(
        model, rows, tcfg,
        optimizer=optimizer,
        start_step=start_step,
        trace_path=cfg.path("loss_trace"),
        log_every=200,
    )
    save_training_checkpoint(checkpoint_path, model, tcfg.steps, optimizer, {"train_seed": cfg.train_seed})
    print(f"[train] finished at step {tcfg.steps}, trailing loss {moving_average(trace, tcfg.steps):.4f}")


def _prediction_groups(rows: list[dict]) -> dict[tuple[str, int], list[dict]]:
    groups: dict[tuple[str, int], list[dict]] = {}
    for row in rows:
        groups.setdefault((row["mode"], int(row["steps"])), []).append(row)
    return groups


def read_predictions(path: str) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ValueError(f"malformed predictions line {lineno}: {e}") from e
    return rows


def evaluate_prediction_file(
    predictions_path: str,
    corpus_path: str,
    schemas: list[corpus_mod.Schema],
    fuzzy_threshold: float,
) -> list[tuple[EvalReport, float]]:
    """One (report, mean forward passes) per (method, steps) cell, sorted."""
    examples = corpus_mod.read_examples(corpus_path)
    schema_ids = {ex.schema_id for ex in examples}
    if len(schema_ids) != 1:
        raise ValueError("evaluation expects a single-schema corpus")
    schema = _schemas_by_id(schemas)[schema_ids.pop()]
    expected_ids = [f"eval-{i:05d}" for i in range(len(examples))]
    rows = read_predictions(predictions_path)
    out = []
    for (mode, steps), group in sorted(_prediction_groups(rows).items()):
        by_id = {row["example_id"]: row for row in group}
        if sorted(by_id) != sorted(expected_ids) or len(group) != len(examples):
            raise ValueError(f"predictions for {mode} steps={steps} do not align with the corpus example ids")
        ordered = [by_id[i] for i in expected_ids]
        report = evaluate_cell(
            mode, steps,
            [r["output_json"] for r in ordered],
            [ex.gold_json for ex in examples],
            [ex.source_text for ex in examples],
            schema,
            fuzzy_threshold,
        )
        mean_fwd = sum(r["forward_passes"] for r in ordered) / len(ordered)
        out.append((report, mean_fwd))
    return out


def write_report(path: str, rows: list[tuple[EvalReport, float]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for report, mean_fwd in rows:
            d = asdict(report)
            writer.writerow([d[c] if c != "forward_passes" else mean_fwd for c in REPORT_COLUMNS])


def read_report(path: str) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for raw in csv.DictReader(f):
            row: dict = {"method": raw["method"], "steps": int(raw["steps"]), "n": int(raw["n"])}
            for key in REPORT_COLUMNS:
                if key not in ("method", "steps", "n"):
                    row[key] = float(raw[key])
            rows.append(row)
    return rows


def cmd_sweep(cfg: ExperimentConfig) -> None:
    vocab = tok.load_vocab(cfg.path("vocab_file"))
    schemas = _load_schemas_or_default(cfg)
    schemas_by_id = _schemas_by_id(schemas)
    examples = corpus_mod.read_examples(cfg.path("eval_file"))
    arrays, meta = load_checkpoint(cfg.path("checkpoint"))
    model = MaskedDiffusionModel(ModelConfig(**meta["model"]))
    load_model_arrays(model, {k: v for k, v in arrays.items() if not k.startswith("optim.")})
    model.eval()

    methods = sorted(cfg.sweep.methods)
    step_counts = sorted(cfg.sweep.step_counts)
    timings = []
    with open(cfg.path("predictions"), "w", encoding="utf-8") as pred_file:
        for method in methods:
            for steps in step_counts:
                dcfg = DecodeConfig(method, steps, cfg.sweep.baseline_response_len, seed=cfg.decode_seed)
                started = time.perf_counter()
                for i, ex in enumerate(examples):
                    schema = schemas_by_id[ex.schema_id]
                    ctx = build_prompt_context(ex.prompt, vocab)
                    if method == "adaptive":
                        ctx = augment_prompt(ctx, vocab)
                    result = generate(model, vocab, ctx, dcfg, schema)
                    row = {
                        "example_id": f"eval-{i:05d}",
                        "mode": method,
                        "steps": steps,
                        "output_text": result.output_text,
                        "output_json": result.output_json,
                        "confidences": [round(c, 9) for c in result.confidences],
                        "forward_passes": result.forward_passes,
                    }
                    pred_file.write(json.dumps(row, sort_keys=True) + "\n")
                wall = time.perf_counter() - started
                timings.append((method, steps, wall, len(examples)))
                print(f"[sweep] {method} steps={steps} done in {wall:.1f}s", flush=True)

    reports = evaluate_prediction_file(
        cfg.path("predictions"), cfg.path("eval_file"), schemas, cfg.sweep.fuzzy_threshold
    )
    write_report(cfg.path("report"), reports)
    with open(cfg.path("timings"), "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("method", "steps", "wall_clock_s", "n"))
        writer.writerows(timings)

    schema = schemas_by_id[examples[0].schema_id]
    with open(cfg.path("details"), "w", encoding="utf-8") as f:
        for row in read_predictions(cfg.path("predictions")):
            parsed = parse_output(row["output_json"], schema)
            detail = {
                "example_id": row["example_id"],
                "mode": row["mode"],
                "steps": row["steps"],
                "ok": parsed.ok,
                "fields": parsed.fields,
                "extras": list(parsed.extras),
            }
            f.write(json.dumps(detail, sort_keys=True) + "\n")
    print(f"[sweep] wrote {len(reports)} report rows to {cfg.path('report')}")


METRIC_COLUMNS = ("sv", "fc", "sc", "precision", "recall", "f1_exact", "f1_fuzzy", "hr")


def cmd_report(cfg: ExperimentConfig, plots: bool = False) -> None:
    rows = read_report(cfg.path("report"))
    if not rows:
        raise ValueError("report is empty")
    methods = sorted({r["method"] for r in rows})
    steps = sorted({r["steps"] for r in rows})
    cell = {(r["method"], r["steps"]): r for r in rows}
    tables_dir = cfg.path("tables_dir")
    os.makedirs(tables_dir, exist_ok=True)
    for metric in METRIC_COLUMNS:
        with open(os.path.join(tables_dir, f"{metric}.csv"), "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["steps", *methods])
            for s in steps:
                writer.writerow([s, *(cell[(m, s)][metric] for m in methods)])
    if plots:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        charts_dir = cfg.path("charts_dir")
        os.makedirs(charts_dir, exist_ok=True)
        for metric in METRIC_COLUMNS:
            fig, ax = plt.subplots(figsize=(5, 3.5))
            for m in methods:
                ax.plot(steps, [cell[(m, s)][metric] for s in steps], marker="o", label=m)
            ax.set_xscale("log", base=2)
            ax.set_xticks(steps)
            ax.set_xticklabels([str(s) for s in steps])
            ax.set_xlabel("denoising steps")
            ax.set_ylabel(metric)
            ax.set_ylim(-0.02, 1.02)
            ax.legend()
            fig.tight_layout()
            fig.savefig(os.path.join(charts_dir, f"{metric}.png"), dpi=120)
            plt.close(fig)
    print(f"[report] wrote per-metric tables to {tables_dir}" + (" and charts" if plots else ""))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="maskfill", description="schema-scaffolded masked-diffusion experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-data", "train", "sweep", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config; every key is optional")
        p.add_argument("--seed", type=int, default=None, help="override the corpus seed")
        p.add_argument("--out", default=None, help="output directory for all artifacts")
        if name == "report":
            p.add_argument("--plots", action="store_true", help="also render a chart image per metric")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out)
        if args.command == "gen-data":
            cmd_gen_data(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "sweep":
            cmd_sweep(cfg)
        else:
            cmd_report(cfg, plots=args.plots)
    except Exception as e:  # CLI contract: nonzero exit with a message on stderr
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
