"""Synthetic structured-extraction corpus.

Each example is a short biography rendered from a sampled record, paired with
an instruction prompt and a canonical gold JSON answer. Every gold value
appears verbatim in the source text, so an extractor that only copies can be
perfect and grounding checks have a floor at zero hallucination.
"""

import json
import random
from dataclasses import dataclass, field

from .tokenization import normalize_text

NULL_DIRECTIVE = "fill unused value positions with null"

FIRST_NAMES = (
    "ada", "alan", "marie", "carl", "emmy", "kurt", "rosa", "niels",
    "enrico", "lise", "paul", "erwin", "max", "hannah", "sofia", "david",
    "grace", "john", "mary", "james", "clara", "henri", "emil", "anna",
    "otto", "jean", "pierre", "laura", "hugo", "ivan", "nora", "felix",
    "oscar", "ruth", "leo", "edith", "victor", "alice", "hans", "greta",
)

LAST_NAMES = (
    "lovelace", "turing", "curie", "gauss", "noether", "godel", "luxemburg",
    "bohr", "fermi", "meitner", "dirac", "planck", "arendt", "cohen",
    "hopper", "neumann", "shelley", "maxwell", "schumann", "poincare",
    "weyl", "freud", "hahn", "fourier", "laplace", "bell", "hardy",
    "pavlov", "joyce", "klein", "wilde", "sachs", "tolstoy", "lagrange",
    "babbage", "herschel", "faraday", "somerville", "riemann", "euler",
)

OCCUPATIONS = (
    "mathematician", "poet", "physicist", "chemist", "painter", "composer",
    "architect", "novelist", "astronomer", "philosopher", "engineer",
    "biologist",
)

NATIONALITIES = (
    "english", "french", "german", "italian", "spanish", "polish",
    "dutch", "swedish", "russian", "greek",
)

WORK_TITLES = (
    "hamlet", "frankenstein", "persuasion", "emma", "micrographia",
    "the tempest", "paradise lost", "silent spring", "wuthering heights",
    "principia mathematica", "madame bovary", "the prince",
    "the great gatsby", "a modest proposal", "the starry night",
    "songs of innocence", "on the nature of things",
    "the wealth of nations", "the interpretation of dreams",
    "an essay on criticism", "the decline of the west",
    "notes from a dead house", "a treatise of human nature",
    "the book of the courtier",
)

YEAR_RANGE = (1700, 2000)


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str  # "string" | "year" | "enum"
    required: bool
    slot_width: int
    values: tuple[str, ...] = ()
    year_range: tuple[int, int] = YEAR_RANGE

    def __post_init__(self) -> None:
        if self.kind not in ("string", "year", "enum"):
            raise ValueError(f"unknown field kind: {self.kind!r}")
        if self.slot_width < 1:
            raise ValueError(f"field {self.name!r} has slot_width < 1")
        if self.kind == "enum":
            if not self.values:
                raise ValueError(f"enum field {self.name!r} has no values")
            if len(set(self.values)) != len(self.values):
                raise ValueError(f"enum field {self.name!r} has duplicate values")


@dataclass(frozen=True)
class Schema:
    schema_id: str
    fields: tuple[FieldSpec, ...]

    def __post_init__(self) -> None:
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise ValueError("schema has duplicate field names")
        if not any(f.required for f in self.fields):
            raise ValueError("schema needs at least one required field")

    def field_names(self) -> list[str]:
        return [f.name for f in self.fields]

    def required_names(self) -> list[str]:
        return [f.name for f in self.fields if f.required]

    def spec_for(self, name: str) -> FieldSpec:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(name)


DEFAULT_SCHEMA = Schema(
    "person_v1",
    (
        FieldSpec("name", "string", True, 3),
        FieldSpec("birth_year", "year", True, 1),
        FieldSpec("occupation", "enum", True, 1, values=OCCUPATIONS),
        FieldSpec("nationality", "enum", False, 1, values=NATIONALITIES),
        FieldSpec("death_year", "year", False, 1),
        FieldSpec("notable_work", "string", False, 4),
    ),
)


@dataclass(frozen=True)
class Record:
    schema: Schema
    values: dict[str, str | None]  # absent optional fields map to None


@dataclass(frozen=True)
class Example:
    source_text: str
    prompt: str
    gold_json: str
    schema_id: str
    padded: bool
    record: Record | None = field(default=None, compare=False)


def name_pair_pool(split: str = "all") -> list[tuple[str, str]]:
    """Deterministic partition of (first, last) pairs; every 8th pair is eval-only."""
    pairs = [(f, l) for f in FIRST_NAMES for l in LAST_NAMES]
    if split == "all":
        return pairs
    if split == "train":
        return [p for i, p in enumerate(pairs) if i % 8 != 7]
    if split == "eval":
        return [p for i, p in enumerate(pairs) if i % 8 == 7]
    raise ValueError(f"unknown split: {split!r}")


def _string_pool(spec: FieldSpec, name_pairs: list[tuple[str, str]]) -> list[str]:
    if spec.name == "name":
        pool = [f"{a} {b}" for a, b in name_pairs]
    else:
        pool = list(WORK_TITLES)
    pool = [v for v in pool if len(v.split()) <= spec.slot_width]
    if not pool:
        raise ValueError(f"no generator values fit slot_width for field {spec.name!r}")
    return pool


def sample_record(schema: Schema, rng_seed: int, name_pairs: list[tuple[str, str]] | None = None) -> Record:
    """Required fields always populated, optional fields present with p=0.5."""
    rng = random.Random(rng_seed)
    pairs = name_pairs if name_pairs is not None else name_pair_pool()
    values: dict[str, str | None] = {}
    for spec in schema.fields:
        if not spec.required and rng.random() >= 0.5:
            values[spec.name] = None
            continue
        if spec.kind == "string":
            values[spec.name] = rng.choice(_string_pool(spec, pairs))
        elif spec.kind == "year":
            values[spec.name] = str(rng.randint(spec.year_range[0], spec.year_range[1]))
        else:
            values[spec.name] = rng.choice(spec.values)
    return Record(schema, values)


_TEMPLATES: dict[str, tuple[str, ...]] = {
    "name": (
        "{v} was a person of wide renown .",
        "this record describes the life of {v} .",
        "among the figures of the age {v} stands out .",
        "few remember how {v} first came to notice .",
        "the story of {v} begins quietly .",
        "{v} left a lasting mark on the period .",
    ),
    "birth_year": (
        "born in {v} into modest circumstances .",
        "the birth came in {v} after a hard winter .",
        "{v} was the year of birth .",
        "records place the birth in {v} .",
        "life began in {v} in a small town .",
    ),
    "occupation": (
        "work as a {v} filled most of the working years .",
        "trained early and practiced long as a {v} .",
        "contemporaries knew a dedicated {v} .",
        "the career of a {v} brought both struggle and praise .",
        "peers admitted no finer {v} in the region .",
    ),
    "nationality": (
        "the family was {v} by origin .",
        "raised in a {v} household far from the capital .",
        "being {v} shaped both manner and outlook .",
        "a {v} upbringing left its trace .",
        "neighbors described the household as thoroughly {v} .",
    ),
    "death_year": (
        "death came in {v} after a short illness .",
        "the end arrived quietly in {v} .",
        "{v} marked the final year .",
        "obituaries appeared in {v} across the country .",
        "the life closed in {v} .",
    ),
    "notable_work": (
        "the piece called {v} earned wide attention .",
        "critics still cite {v} as the high point .",
        "nothing drew more praise than {v} .",
        "fame rests chiefly on {v} .",
        "the work titled {v} circulated widely .",
    ),
}

_GENERIC_TEMPLATES = (
    "the {f} was recorded as {v} .",
    "records list the {f} as {v} .",
    "one entry gives the {f} as {v} .",
    "the stated {f} remains {v} .",
    "papers confirm the {f} as {v} .",
)


def render_text(record: Record, rng_seed: int) -> str:
    """One sentence per present field, field order fixed, template choice seeded."""
    rng = random.Random(rng_seed)
    sentences = []
    for spec in record.schema.fields:
        value = record.values[spec.name]
        if value is None:
            continue
        templates = _TEMPLATES.get(spec.name, _GENERIC_TEMPLATES)
        tpl = templates[rng.randrange(len(templates))]
        sentences.append(tpl.format(v=value, f=spec.name))
    return " ".join(sentences)


def _canonical_atom(spec: FieldSpec, value: str | None) -> str:
    if value is None:
        return "null"
    if spec.kind == "year" and value.isdigit():
        return value
    return f'"{value}"'


def render_canonical_json(values: dict[str, str | None], schema: Schema) -> str:
    """Canonical answer text: schema order, quoted keys, absent fields as null."""
    atoms = ["{"]
    for i, spec in enumerate(schema.fields):
        if i:
            atoms.append(",")
        atoms.extend((f'"{spec.name}"', ":", _canonical_atom(spec, values.get(spec.name))))
    atoms.append("}")
    return " ".join(atoms)


def render_gold_json(record: Record) -> str:
    return render_canonical_json(record.values, record.schema)


def padded_target_json(record: Record) -> str:
    """Training-only render where every value region is right-padded with null
    to its slot width and absent fields are all null. Year and enum cells stay
    unquoted to mirror the scaffold layout; this string is never parsed."""
    atoms = ["{"]
    for i, spec in enumerate(record.schema.fields):
        if i:
            atoms.append(",")
        value = record.values[spec.name]
        words = [] if value is None else value.split()
        cells = words + ["null"] * (spec.slot_width - len(words))
        body = " ".join(cells)
        atoms.extend((f'"{spec.name}"', ":", f'"{body}"' if spec.kind == "string" else body))
    atoms.append("}")
    return " ".join(atoms)


def build_prompt(schema: Schema, source_text: str) -> str:
    return f"extract fields {' '.join(schema.field_names())} from : {source_text}"


def make_training_set(
    schemas: list[Schema],
    n: int,
    null_pad_fraction: float,
    rng_seed: int,
    name_pairs: list[tuple[str, str]] | None = None,
) -> list[Example]:
    """n examples with per-example seeds rng_seed + index. A null_pad_fraction
    share gets the augmented prompt; its padded training target is re-derived
    from the canonical gold at training time."""
    if n < 1:
        raise ValueError("need at least one example")
    if not 0.0 <= null_pad_fraction <= 1.0:
        raise ValueError("null_pad_fraction must lie in [0, 1]")
    examples = []
    for i in range(n):
        seed = rng_seed + i
        schema = schemas[i % len(schemas)]
        record = sample_record(schema, seed, name_pairs)
        text = render_text(record, seed)
        padded = random.Random(seed).random() < null_pad_fraction
        prompt = build_prompt(schema, text)
        if padded:
            prompt = f"{prompt} {NULL_DIRECTIVE}"
        examples.append(Example(text, prompt, render_gold_json(record), schema.schema_id, padded, record))
    return examples


def record_from_gold(gold_json: str, schema: Schema) -> Record:
    """Rebuild a record from canonical gold text (used to derive padded targets)."""
    raw = json.loads(gold_json)
    values: dict[str, str | None] = {}
    for spec in schema.fields:
        v = raw.get(spec.name)
        values[spec.name] = None if v is None else str(v)
    return Record(schema, values)


def grounding_holds(example: Example) -> bool:
    """Every non-null gold value appears verbatim in the normalized source."""
    source = f" {normalize_text(example.source_text)} "
    for v in json.loads(example.gold_json).values():
        if v is None:
            continue
        if f" {normalize_text(str(v))} " not in source:
            return False
    return True


def write_examples(path: str, examples: list[Example]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            row = {
                "source_text": ex.source_text,
                "prompt": ex.prompt,
                "gold_json": ex.gold_json,
                "schema_id": ex.schema_id,
                "padded": ex.padded,
            }
            f.write(json.dumps(row, sort_keys=True) + "\n")


def read_examples(path: str) -> list[Example]:
    keys = {"source_text", "prompt", "gold_json", "schema_id", "padded"}
    examples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                if not keys.issubset(row):
                    raise ValueError(f"missing keys {sorted(keys - set(row))}")
            except ValueError as e:
                raise ValueError(f"malformed corpus line {lineno}: {e}") from e
            examples.append(
                Example(row["source_text"], row["prompt"], row["gold_json"], row["schema_id"], bool(row["padded"]))
            )
    return examples


def schema_to_dict(schema: Schema) -> dict:
    fields = []
    for f in schema.fields:
        d: dict = {"name": f.name, "kind": f.kind, "required": f.required, "slot_width": f.slot_width}
        if f.kind == "enum":
            d["values"] = list(f.values)
        if f.kind == "year":
            d["year_range"] = list(f.year_range)
        fields.append(d)
    return {"schema_id": schema.schema_id, "fields": fields}


def save_schemas(path: str, schemas: list[Schema]) -> None:
    doc = {"schemas": [schema_to_dict(s) for s in schemas]}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_schemas(path: str) -> list[Schema]:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    schemas = []
    for s in doc["schemas"]:
        fields = tuple(
            FieldSpec(
                f["name"],
                f["kind"],
                bool(f["required"]),
                int(f["slot_width"]),
                values=tuple(f.get("values", ())),
                year_range=tuple(f.get("year_range", YEAR_RANGE)),
            )
            for f in s["fields"]
        )
        schemas.append(Schema(s["schema_id"], fields))
    return schemas
