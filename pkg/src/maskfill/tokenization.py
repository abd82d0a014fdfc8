"""Word-level tokenizer with reserved control tokens.

Text is lowercased, JSON punctuation is split into standalone tokens, and
everything else splits on whitespace. Numbers stay whole tokens. The first
five vocabulary ids are reserved control tokens; the word "null" is always
present because the decoding pipeline leans on it.
"""

from dataclasses import dataclass, field

MASK_ID = 0
PAD_ID = 1
BOS_ID = 2
EOS_ID = 3
SEP_ID = 4

RESERVED_TOKENS = ("<mask>", "<pad>", "<bos>", "<eos>", "<sep>")
MASK_RENDER = "⟨M⟩"  # MASK decodes visibly, other reserved ids decode empty

JSON_PUNCT = ("{", "}", "[", "]", ":", ",", '"')


def normalize_words(text: str) -> list[str]:
    """Lowercase, split JSON punctuation into standalone tokens, split on whitespace."""
    out = text.lower()
    for ch in JSON_PUNCT:
        out = out.replace(ch, f" {ch} ")
    return out.split()


def normalize_text(text: str) -> str:
    return " ".join(normalize_words(text))


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    word_to_id: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if tuple(self.tokens[: len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise ValueError(f"vocabulary must start with reserved tokens {RESERVED_TOKENS}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary contains duplicate tokens")
        if "null" not in self.tokens:
            raise ValueError('vocabulary must contain "null"')
        lookup = {w: i for i, w in enumerate(self.tokens) if i >= len(RESERVED_TOKENS)}
        object.__setattr__(self, "word_to_id", lookup)

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def null_id(self) -> int:
        return self.word_to_id["null"]

    def structural_ids(self) -> frozenset[int]:
        """Ids of JSON punctuation tokens present in the vocabulary."""
        return frozenset(self.word_to_id[p] for p in JSON_PUNCT if p in self.word_to_id)


def build_vocab(corpus_texts: list[str]) -> Vocabulary:
    """Dense vocabulary over a text corpus, first-occurrence order after the reserved block."""
    if not corpus_texts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    tokens: list[str] = list(RESERVED_TOKENS)
    seen = set(tokens)
    for text in corpus_texts:
        for word in normalize_words(text):
            if word not in seen:
                seen.add(word)
                tokens.append(word)
    if "null" not in seen:
        tokens.append("null")
    return Vocabulary(tuple(tokens))


def encode(vocab: Vocabulary, text: str) -> list[int]:
    """Token ids for normalized text. Reserved ids are never produced."""
    ids = []
    for word in normalize_words(text):
        if word not in vocab.word_to_id:
            raise ValueError(f"out-of-vocabulary word: {word!r}")
        ids.append(vocab.word_to_id[word])
    return ids


def decode(vocab: Vocabulary, ids: list[int]) -> str:
    """Words joined by single spaces; MASK renders visibly, other reserved ids render empty."""
    words = []
    for i in ids:
        if i < 0 or i >= len(vocab.tokens):
            raise ValueError(f"token id {i} out of range for vocabulary of size {len(vocab.tokens)}")
        if i == MASK_ID:
            words.append(MASK_RENDER)
        elif i in (PAD_ID, BOS_ID, EOS_ID, SEP_ID):
            continue
        else:
            words.append(vocab.tokens[i])
    return " ".join(words)


def save_vocab(path: str, vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for tok in vocab.tokens:
            f.write(tok + "\n")


def load_vocab(path: str) -> Vocabulary:
    with open(path, encoding="utf-8") as f:
        tokens = tuple(line.rstrip("\n") for line in f)
    return Vocabulary(tokens)
