"""Structural and content metrics for structured-extraction outputs.

Parsing failures are data, not exceptions: an unparseable output contributes
zero field coverage and zero predictions but still counts in every
denominator it belongs to.
"""

import json
from dataclasses import dataclass, field

from .corpus import Schema
from .tokenization import normalize_words


def norm_string(s: str) -> str:
    """Lowercase, trim, collapse internal whitespace."""
    return " ".join(s.lower().split())


@dataclass(frozen=True)
class ParsedOutput:
    ok: bool
    fields: dict[str, str | None] = field(default_factory=dict)
    extras: tuple[str, ...] = ()


def _first_balanced_span(text: str) -> str | None:
    start = text.find("{")
    if start < 0:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def parse_output(text: str, schema: Schema) -> ParsedOutput:
    """Strict JSON parse of the first balanced {...} span, normalized values."""
    span = _first_balanced_span(text)
    if span is None:
        return ParsedOutput(False)
    try:
        raw = json.loads(span)
    except json.JSONDecodeError:
        return ParsedOutput(False)
    if not isinstance(raw, dict):
        return ParsedOutput(False)
    known = set(schema.field_names())
    fields: dict[str, str | None] = {}
    extras = []
    for key, value in raw.items():
        name = norm_string(str(key))
        if name not in known:
            extras.append(name)
            continue
        if value is None:
            fields[name] = None
        else:
            fields[name] = norm_string(str(value))
    return ParsedOutput(True, fields, tuple(extras))


def _populated(value: str | None) -> bool:
    return value is not None and value != ""


def _type_checks(schema: Schema, name: str, value: str) -> bool:
    spec = schema.spec_for(name)
    if spec.kind == "year":
        if not value.isdigit():
            return False
        return spec.year_range[0] <= int(value) <= spec.year_range[1]
    if spec.kind == "enum":
        return value in spec.values
    return value != ""


def structural_metrics(outputs: list[ParsedOutput], schema: Schema) -> tuple[float, float, float]:
    """(SV, FC, SC): parse rate, mean required-field coverage, strict compliance."""
    if not outputs:
        raise ValueError("no outputs to score")
    required = schema.required_names()
    sv_hits = 0
    fc_total = 0.0
    sc_hits = 0
    for out in outputs:
        if not out.ok:
            continue
        sv_hits += 1
        covered = sum(1 for name in required if _populated(out.fields.get(name)))
        fc_total += covered / len(required)
        strict = (
            not out.extras
            and covered == len(required)
            and all(_type_checks(schema, n, v) for n, v in out.fields.items() if v is not None)
        )
        sc_hits += int(strict)
    n = len(outputs)
    return sv_hits / n, fc_total / n, sc_hits / n


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[len(b)]


def similarity(a: str, b: str) -> float:
    """1 - edit_distance / max length; two empty strings are identical."""
    if not a and not b:
        return 1.0
    return 1.0 - levenshtein(a, b) / max(len(a), len(b))


def _matches(schema: Schema, name: str, pred: str, gold: str, fuzzy: bool, threshold: float) -> bool:
    if schema.spec_for(name).kind != "string" or not fuzzy:
        return pred == gold
    return similarity(pred, gold) >= threshold


def content_metrics(
    outputs: list[ParsedOutput],
    golds: list[dict[str, str | None]],
    schema: Schema,
    fuzzy_threshold: float,
) -> tuple[float, float, float, float]:
    """(precision, recall, f1_exact, f1_fuzzy) over (example, field) pairs.

    Precision and recall are reported under the fuzzy criterion; non-string
    kinds always compare exactly. Null predictions do not count as predictions.
    """
    if len(outputs) != len(golds):
        raise ValueError("outputs and golds are misaligned")
    n_pred = 0
    n_gold = 0
    correct_exact = 0
    correct_fuzzy = 0
    for out, gold in zip(outputs, golds):
        for name in schema.field_names():
            gold_value = gold.get(name)
            if gold_value is not None:
                n_gold += 1
            pred = out.fields.get(name) if out.ok else None
            if not _populated(pred):
                continue
            n_pred += 1
            if gold_value is None:
                continue
            gold_norm = norm_string(gold_value)
            if _matches(schema, name, pred, gold_norm, False, fuzzy_threshold):
                correct_exact += 1
            if _matches(schema, name, pred, gold_norm, True, fuzzy_threshold):
                correct_fuzzy += 1

    def prf(correct: int) -> tuple[float, float, float]:
        p = correct / n_pred if n_pred else 0.0
        r = correct / n_gold if n_gold else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return p, r, f1

    _, _, f1_exact = prf(correct_exact)
    precision, recall, f1_fuzzy = prf(correct_fuzzy)
    return precision, recall, f1_exact, f1_fuzzy


def is_grounded(value: str, source_text: str, fuzzy_threshold: float) -> bool:
    """Grounded iff a contiguous token subsequence of the normalized source
    equals the value, or some source window of the value's length +/- 1 clears
    the similarity threshold."""
    value_words = value.split()
    source_words = normalize_words(source_text)
    if not value_words:
        return True
    if not source_words:
        return False
    m = len(value_words)
    for start in range(len(source_words) - m + 1):
        if source_words[start : start + m] == value_words:
            return True
    for width in (m - 1, m, m + 1):
        if width < 1 or width > len(source_words):
            continue
        for start in range(len(source_words) - width + 1):
            window = " ".join(source_words[start : start + width])
            if similarity(window, value) >= fuzzy_threshold:
                return True
    return False


def hallucination_rate(
    outputs: list[ParsedOutput],
    source_texts: list[str],
    fuzzy_threshold: float,
) -> float:
    """Share of non-null predicted values with no support in the source text."""
    if len(outputs) != len(source_texts):
        raise ValueError("outputs and sources are misaligned")
    total = 0
    ungrounded = 0
    for out, source in zip(outputs, source_texts):
        if not out.ok:
            continue
        for value in out.fields.values():
            if not _populated(value):
                continue
            total += 1
            if not is_grounded(value, source, fuzzy_threshold):
                ungrounded += 1
    return ungrounded / total if total else 0.0


@dataclass(frozen=True)
class EvalReport:
    method: str
    steps: int
    sv: float
    fc: float
    sc: float
    precision: float
    recall: float
    f1_exact: float
    f1_fuzzy: float
    hr: float
    n: int

    def __post_init__(self) -> None:
        for name in ("sv", "fc", "sc", "precision", "recall", "f1_exact", "f1_fuzzy", "hr"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"metric {name} out of range: {v}")


def evaluate_cell(
    method: str,
    steps: int,
    output_texts: list[str],
    gold_jsons: list[str],
    source_texts: list[str],
    schema: Schema,
    fuzzy_threshold: float,
) -> EvalReport:
    parsed = [parse_output(t, schema) for t in output_texts]
    golds = []
    for g in gold_jsons:
        raw = json.loads(g)
        golds.append({k: None if v is None else str(v) for k, v in raw.items()})
    sv, fc, sc = structural_metrics(parsed, schema)
    precision, recall, f1_exact, f1_fuzzy = content_metrics(parsed, golds, schema, fuzzy_threshold)
    hr = hallucination_rate(parsed, source_texts, fuzzy_threshold)
    return EvalReport(method, steps, sv, fc, sc, precision, recall, f1_exact, f1_fuzzy, hr, len(parsed))
