import pytest
from hypothesis import given, strategies as st

from maskfill import tokenization as tok


def ref_split(text: str) -> list[str]:
    """Independent normalization oracle: character walk instead of replace."""
    words = []
    current = []
    for ch in text.lower():
        if ch in '{}[]:,"':
            if current:
                words.append("".join(current))
                current = []
            words.append(ch)
        elif ch.isspace():
            if current:
                words.append("".join(current))
                current = []
        else:
            current.append(ch)
    if current:
        words.append("".join(current))
    return words


def test_reserved_ids_are_first_five():
    v = tok.build_vocab(["a b a"])
    assert (tok.MASK_ID, tok.PAD_ID, tok.BOS_ID, tok.EOS_ID, tok.SEP_ID) == (0, 1, 2, 3, 4)
    assert v.tokens[:5] == tok.RESERVED_TOKENS


def test_build_vocab_dense_first_occurrence_and_null():
    v = tok.build_vocab(["a b a"])
    assert v.tokens[5:] == ("a", "b", "null")
    assert v.word_to_id["a"] == 5 and v.word_to_id["b"] == 6
    assert v.null_id == 7


def test_build_vocab_first_occurrence_matches_scan_oracle():
    texts = ["the cat { sat }", 'cat "mat" : 1912', "null the zebra , cat"]
    expected = []
    seen = set()
    for t in texts:
        for w in ref_split(t):
            if w not in seen:
                seen.add(w)
                expected.append(w)
    if "null" not in seen:
        expected.append("null")
    v = tok.build_vocab(texts)
    assert list(v.tokens[5:]) == expected


def test_build_vocab_empty_corpus_is_error():
    with pytest.raises(ValueError, match="empty"):
        tok.build_vocab([])


def test_normalize_splits_json_punctuation():
    text = '{ "name": "Ada Lovelace", "year": 1815 }'
    assert tok.normalize_words(text) == ref_split(text)
    assert tok.normalize_words('a{b')== ["a", "{", "b"]
    assert tok.normalize_words("x[1],y") == ["x", "[", "1", "]", ",", "y"]


def test_numbers_stay_whole_tokens():
    assert tok.normalize_words("born 1815 died 1852") == ["born", "1815", "died", "1852"]


def test_encode_decode_round_trip_equals_normalized_text():
    text = 'The cat { "sat" : 1912 } on null'
    v = tok.build_vocab([text])
    assert tok.decode(v, tok.encode(v, text)) == tok.normalize_text(text)


def test_encode_oov_names_the_word():
    v = tok.build_vocab(["a b"])
    with pytest.raises(ValueError, match="'zzz'"):
        tok.encode(v, "a zzz")


def test_encode_never_emits_reserved_ids():
    v = tok.build_vocab(["a b"])
    with pytest.raises(ValueError):
        tok.encode(v, "<mask>")


def test_decode_renders_mask_and_hides_other_reserved():
    v = tok.build_vocab(["a"])
    ids = [tok.BOS_ID, tok.MASK_ID, v.word_to_id["a"], tok.EOS_ID, tok.PAD_ID, tok.SEP_ID]
    assert tok.decode(v, ids) == f"{tok.MASK_RENDER} a"


def test_decode_rejects_out_of_range_ids():
    v = tok.build_vocab(["a"])
    with pytest.raises(ValueError, match="out of range"):
        tok.decode(v, [v.size])
    with pytest.raises(ValueError, match="out of range"):
        tok.decode(v, [-1])


def test_vocab_requires_reserved_prefix_and_null():
    with pytest.raises(ValueError, match="reserved"):
        tok.Vocabulary(("a", "b", "c", "d", "e", "f"))
    with pytest.raises(ValueError, match="null"):
        tok.Vocabulary(tok.RESERVED_TOKENS + ("a",))
    with pytest.raises(ValueError, match="duplicate"):
        tok.Vocabulary(tok.RESERVED_TOKENS + ("null", "null"))


def test_vocab_file_round_trip(tmp_path):
    v = tok.build_vocab(['{ "name" : "ada" } 1815'])
    path = tmp_path / "vocab.txt"
    tok.save_vocab(str(path), v)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "<mask>" and lines[tok.SEP_ID] == "<sep>"
    assert lines.index("ada") == v.word_to_id["ada"]
    assert tok.load_vocab(str(path)).tokens == v.tokens


words_st = st.text(alphabet="abcxyz0123456789", min_size=1, max_size=6)
texts_st = st.lists(
    st.one_of(words_st, st.sampled_from(list(tok.JSON_PUNCT))), min_size=1, max_size=30
).map(" ".join)


@given(texts_st)
def test_round_trip_property(text):
    v = tok.build_vocab([text])
    assert tok.decode(v, tok.encode(v, text)) == tok.normalize_text(text)


@given(st.lists(texts_st, min_size=1, max_size=5))
def test_vocab_ids_dense_and_deterministic(texts):
    a = tok.build_vocab(texts)
    b = tok.build_vocab(texts)
    assert a.tokens == b.tokens
    assert sorted(a.word_to_id.values()) == list(range(5, a.size))
