import pytest

from maskfill import corpus as co
from maskfill import tokenization as tok


def build_corpus_and_vocab(n: int, fraction: float, seed: int, split: str = "train"):
    """Small corpus plus a vocabulary covering prompts, gold and padded targets."""
    examples = co.make_training_set([co.DEFAULT_SCHEMA], n, fraction, seed, co.name_pair_pool(split))
    texts = []
    for ex in examples:
        record = co.record_from_gold(ex.gold_json, co.DEFAULT_SCHEMA)
        texts.extend((ex.prompt, ex.gold_json, co.padded_target_json(record)))
    texts.append(co.NULL_DIRECTIVE)
    return examples, tok.build_vocab(texts)


@pytest.fixture(scope="session")
def tiny_world():
    examples, vocab = build_corpus_and_vocab(12, 0.25, 7)
    return examples, vocab
