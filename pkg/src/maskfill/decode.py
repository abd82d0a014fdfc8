"""Low-confidence remasking decoder with three modes.

baseline: the response region is a fixed-length block of MASK tokens and the
model produces the entire answer, structure included. scaffold: the response
is a compiled schema scaffold and only value slots are masked. adaptive:
scaffold plus the null-fill directive appended to the prompt, with surplus
null cells stripped in post.

Each denoising step runs one model forward, takes the argmax token and its
probability at every masked position, and commits the k most confident
(ties break toward the lowest index). Temperature is zero throughout.
"""

import math
from dataclasses import dataclass, field

import torch

from . import tokenization as tok
from .corpus import Schema, render_canonical_json
from .model import MaskedDiffusionModel
from .scaffold import LiteralCell, PromptContext, Scaffold, compile_scaffold

RESERVED_IDS = frozenset((tok.MASK_ID, tok.PAD_ID, tok.BOS_ID, tok.EOS_ID, tok.SEP_ID))

MODES = ("baseline", "scaffold", "adaptive")


@dataclass(frozen=True)
class DecodeConfig:
    mode: str
    steps: int
    baseline_response_len: int = 64
    seed: int = 0  # decoding is argmax; kept so configs pin a full rng story

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.mode == "baseline" and self.baseline_response_len < 1:
            raise ValueError("baseline mode needs a positive response length")


@dataclass(frozen=True)
class DenoiseState:
    seq: tuple[int, ...]
    masked: frozenset[int]
    frozen: frozenset[int]
    step_index: int
    total_steps: int

    def __post_init__(self) -> None:
        if self.masked & self.frozen:
            raise ValueError("masked and frozen positions overlap")
        for i in self.masked:
            if self.seq[i] != tok.MASK_ID:
                raise ValueError(f"masked position {i} does not hold MASK")


def unmask_schedule(num_masked: int, steps: int) -> list[int]:
    """k per step: ceil(remaining / steps remaining). Sums to num_masked."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if num_masked < 0:
        raise ValueError("num_masked must be >= 0")
    counts = []
    remaining = num_masked
    for left in range(steps, 0, -1):
        k = math.ceil(remaining / left)
        counts.append(k)
        remaining -= k
    return counts


def _prefix_ids(ctx: PromptContext) -> list[int]:
    return [tok.BOS_ID, *ctx.token_ids, tok.SEP_ID]


def scaffold_to_initial_state(ctx: PromptContext, scaffold: Scaffold, total_steps: int, max_len: int) -> DenoiseState:
    """BOS + prompt + SEP + scaffold cells, slots masked, everything else frozen."""
    prefix = _prefix_ids(ctx)
    seq = list(prefix)
    masked = set()
    frozen = set(range(len(prefix)))
    for cell in scaffold.cells:
        pos = len(seq)
        if isinstance(cell, LiteralCell):
            seq.append(cell.token_id)
            frozen.add(pos)
        else:
            seq.append(tok.MASK_ID)
            masked.add(pos)
    if len(seq) > max_len:
        raise ValueError(f"prompt plus scaffold is {len(seq)} tokens, exceeding max_len {max_len}")
    return DenoiseState(tuple(seq), frozenset(masked), frozenset(frozen), 0, total_steps)


def baseline_initial_state(ctx: PromptContext, response_len: int, total_steps: int, max_len: int) -> DenoiseState:
    prefix = _prefix_ids(ctx)
    seq = list(prefix) + [tok.MASK_ID] * response_len
    if len(seq) > max_len:
        raise ValueError(f"prompt plus response block is {len(seq)} tokens, exceeding max_len {max_len}")
    masked = frozenset(range(len(prefix), len(seq)))
    return DenoiseState(tuple(seq), masked, frozenset(range(len(prefix))), 0, total_steps)


@dataclass
class StepResult:
    state: DenoiseState
    committed: dict[int, tuple[int, float]] = field(default_factory=dict)  # pos -> (token, confidence)


def denoise_step(
    model: MaskedDiffusionModel,
    state: DenoiseState,
    k: int,
    banned_ids: frozenset[int],
) -> StepResult:
    """One forward pass; commit the k most confident argmax predictions."""
    ids = torch.tensor([state.seq], dtype=torch.long)
    with torch.no_grad():
        logits = model(ids)[0]
    logits[:, sorted(banned_ids)] = float("-inf")
    probs = logits.softmax(dim=-1)
    candidates = []
    for pos in sorted(state.masked):
        conf, token = probs[pos].max(dim=-1)
        candidates.append((-float(conf), pos, int(token), float(conf)))
    candidates.sort()
    chosen = candidates[: max(0, k)]
    seq = list(state.seq)
    committed = {}
    for _, pos, token, conf in chosen:
        seq[pos] = token
        committed[pos] = (token, conf)
    new_state = DenoiseState(
        tuple(seq),
        state.masked - set(committed),
        state.frozen,
        state.step_index + 1,
        state.total_steps,
    )
    return StepResult(new_state, committed)


@dataclass(frozen=True)
class GenerationResult:
    response_ids: tuple[int, ...]
    output_text: str
    output_json: str
    confidences: tuple[float, ...]
    forward_passes: int


def trim_at_eos(ids: list[int]) -> list[int]:
    """Baseline responses are cut at the first EOS (reserved ids are banned
    from the argmax, so in practice this is a defensive no-op)."""
    if tok.EOS_ID in ids:
        return ids[: ids.index(tok.EOS_ID)]
    return list(ids)


def postprocess_nulls(response_ids: list[int], schema: Schema, vocab: tok.Vocabulary, scaffolded: bool = True) -> str:
    """Scaffold modes: pull each field's slot tokens, strip trailing null words,
    turn all-null values into JSON null, re-render canonically. Baseline output
    passes through unchanged."""
    if not scaffolded:
        return tok.decode(vocab, list(response_ids))
    scaffold = compile_scaffold(schema, vocab)
    if len(response_ids) != len(scaffold.cells):
        raise ValueError("response does not line up with the schema scaffold")
    values: dict[str, str | None] = {}
    for name, (start, stop) in scaffold.slot_spans().items():
        words = [vocab.tokens[response_ids[i]] for i in range(start, stop)]
        while words and words[-1] == "null":
            words.pop()
        values[name] = " ".join(words) if words else None
    return render_canonical_json(values, schema)


def generate(
    model: MaskedDiffusionModel,
    vocab: tok.Vocabulary,
    ctx: PromptContext,
    cfg: DecodeConfig,
    schema: Schema | None = None,
) -> GenerationResult:
    """Run exactly cfg.steps denoising steps and package the response."""
    if cfg.mode in ("scaffold", "adaptive") and schema is None:
        raise ValueError(f"{cfg.mode} mode needs a schema")
    if cfg.mode == "adaptive" and not ctx.adaptive:
        raise ValueError("adaptive mode requires the augmented prompt")
    if cfg.mode in ("baseline", "scaffold") and ctx.adaptive:
        raise ValueError(f"{cfg.mode} mode must not use the augmented prompt")

    banned = set(RESERVED_IDS)
    if cfg.mode == "baseline":
        state = baseline_initial_state(ctx, cfg.baseline_response_len, cfg.steps, model.cfg.max_len)
    else:
        scaffold = compile_scaffold(schema, vocab)
        state = scaffold_to_initial_state(ctx, scaffold, cfg.steps, model.cfg.max_len)
        banned |= vocab.structural_ids()

    response_start = len(_prefix_ids(ctx))
    confidence: dict[int, float] = {i: 1.0 for i in range(response_start, len(state.seq))}
    schedule = unmask_schedule(len(state.masked), cfg.steps)
    was_training = model.training
    model.eval()
    forwards = 0
    for k in schedule:
        result = denoise_step(model, state, k, frozenset(banned))
        forwards += 1
        state = result.state
        for pos, (_, conf) in result.committed.items():
            confidence[pos] = conf
    if was_training:
        model.train()
    if state.masked:
        raise RuntimeError("generation finished with masked positions left over")

    response_ids = list(state.seq[response_start:])
    if cfg.mode == "baseline":
        response_ids = trim_at_eos(response_ids)
        output_text = tok.decode(vocab, response_ids)
        output_json = output_text
    else:
        output_text = tok.decode(vocab, response_ids)
        output_json = postprocess_nulls(response_ids, schema, vocab)
    confs = tuple(confidence[i] for i in range(response_start, response_start + len(response_ids)))
    return GenerationResult(tuple(response_ids), output_text, output_json, confs, forwards)
