"""Response scaffolds: frozen JSON structure with masked value slots.

A scaffold compiles a schema into a cell sequence where braces, quotes, keys
and separators are frozen literal tokens and each field contributes
slot_width value cells. Filling every slot with the word "null" already
decodes to parseable JSON, which is what makes structure-by-construction
work regardless of model quality.
"""

from dataclasses import dataclass

from . import tokenization as tok
from .corpus import NULL_DIRECTIVE, Schema


@dataclass(frozen=True)
class LiteralCell:
    token_id: int


@dataclass(frozen=True)
class SlotCell:
    field: str
    offset: int


Cell = LiteralCell | SlotCell


@dataclass(frozen=True)
class Scaffold:
    schema: Schema
    cells: tuple[Cell, ...]

    def __post_init__(self) -> None:
        for cell in self.cells:
            if isinstance(cell, LiteralCell) and cell.token_id == tok.MASK_ID:
                raise ValueError("scaffold literals must not contain MASK")
        spans = self.slot_spans()
        seen: set[int] = set()
        for name, (start, stop) in spans.items():
            width = self.schema.spec_for(name).slot_width
            if stop - start != width:
                raise ValueError(f"slot span for {name!r} has wrong width")
            if seen & set(range(start, stop)):
                raise ValueError("slot spans overlap")
            seen.update(range(start, stop))

    def slot_spans(self) -> dict[str, tuple[int, int]]:
        """Cell index ranges (start, stop) covered by each field's slots."""
        spans: dict[str, tuple[int, int]] = {}
        for i, cell in enumerate(self.cells):
            if isinstance(cell, SlotCell):
                start, stop = spans.get(cell.field, (i, i))
                spans[cell.field] = (min(start, i), max(stop, i + 1))
        return spans

    def slot_count(self) -> int:
        return sum(1 for c in self.cells if isinstance(c, SlotCell))

    def __len__(self) -> int:
        return len(self.cells)


def _punct_id(vocab: tok.Vocabulary, ch: str) -> int:
    if ch not in vocab.word_to_id:
        raise ValueError(f"vocabulary is missing JSON punctuation token {ch!r}")
    return vocab.word_to_id[ch]


def compile_scaffold(schema: Schema, vocab: tok.Vocabulary) -> Scaffold:
    """Canonical layout: string slots sit inside quotes, year/enum slots are bare."""
    brace_l = _punct_id(vocab, "{")
    brace_r = _punct_id(vocab, "}")
    quote = _punct_id(vocab, '"')
    colon = _punct_id(vocab, ":")
    comma = _punct_id(vocab, ",")

    cells: list[Cell] = [LiteralCell(brace_l)]
    for i, spec in enumerate(schema.fields):
        if i:
            cells.append(LiteralCell(comma))
        if spec.name not in vocab.word_to_id:
            raise ValueError(f"schema field name {spec.name!r} not in vocabulary")
        cells.extend((LiteralCell(quote), LiteralCell(vocab.word_to_id[spec.name]), LiteralCell(quote), LiteralCell(colon)))
        slots = [SlotCell(spec.name, k) for k in range(spec.slot_width)]
        if spec.kind == "string":
            cells.extend([LiteralCell(quote), *slots, LiteralCell(quote)])
        else:
            cells.extend(slots)
    cells.append(LiteralCell(brace_r))
    return Scaffold(schema, tuple(cells))


def scaffold_token_ids(scaffold: Scaffold, vocab: tok.Vocabulary, fill: dict[str, list[int]] | None = None) -> list[int]:
    """Token ids with slots taken from fill (default: every slot is "null")."""
    ids = []
    for cell in scaffold.cells:
        if isinstance(cell, LiteralCell):
            ids.append(cell.token_id)
        else:
            ids.append(fill[cell.field][cell.offset] if fill else vocab.null_id)
    return ids


@dataclass(frozen=True)
class PromptContext:
    token_ids: tuple[int, ...]
    adaptive: bool = False


def build_prompt_context(prompt_text: str, vocab: tok.Vocabulary) -> PromptContext:
    ids = tuple(tok.encode(vocab, prompt_text))
    adaptive = prompt_text.rstrip().endswith(NULL_DIRECTIVE)
    return PromptContext(ids, adaptive)


def augment_prompt(ctx: PromptContext, vocab: tok.Vocabulary) -> PromptContext:
    """Append the fixed null-fill directive; augmenting twice is an error."""
    if ctx.adaptive:
        raise ValueError("prompt is already augmented with the null-fill directive")
    return PromptContext(ctx.token_ids + tuple(tok.encode(vocab, NULL_DIRECTIVE)), True)
