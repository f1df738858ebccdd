import random

import pytest
from hypothesis import given, strategies as st

from stanceflip.linguistics import (
    CueVector,
    aggregate_agent,
    count_syllables,
    extract_cues,
    load_linguistic_lexicon,
    parse_lexicon,
    reading_difficulty,
    reading_difficulty_from_counts,
    tokenize,
)

LEX = load_linguistic_lexicon()


def test_tokenize_examples():
    sents, toks = tokenize("Go now. Go!")
    assert len(sents) == 2 and len(toks) == 3
    assert tokenize("") == ([], [])
    assert tokenize("#VaccinesWork!!")[1] == ["vaccineswork"]
    assert tokenize("@Alice hi")[1] == ["alice", "hi"]


@pytest.mark.parametrize("word, n", [("cat", 1), ("vaccine", 2), ("a", 1), ("the", 1), ("banana", 3), ("rhythm", 1)])
def test_syllables(word, n):
    assert count_syllables(word) == n


def test_reading_difficulty_examples():
    assert reading_difficulty_from_counts(20, 2, 30) == pytest.approx(6.01, abs=1e-12)
    assert reading_difficulty("cat") == pytest.approx(-3.40, abs=1e-12)
    assert reading_difficulty("") == 0.0
    assert extract_cues("", LEX).empty


def test_reading_difficulty_linear_in_words_per_sentence():
    base = reading_difficulty_from_counts(10, 2, 15)
    doubled = reading_difficulty_from_counts(20, 2, 30)
    # same syllables per word, twice the words per sentence
    assert doubled - base == pytest.approx(0.39 * 5, abs=1e-12)


def test_cue_examples():
    lex = parse_lexicon("[positive]\nproud\n[second_person]\nyou\n")
    assert extract_cues("go! go!", lex).num_exclamations == 2
    assert extract_cues("I was proud", lex).positive_sentiment == 1
    cv = extract_cues("thank you", lex)
    assert cv.second_person == 1 and cv.num_pronouns >= 1
    assert extract_cues("ab abcd", lex).avg_word_length == 3.0


def test_bundled_lexicon_person_sets_inside_pronouns():
    t = LEX.terms
    assert (t["first_person"] | t["second_person"] | t["third_person"]) <= t["pronoun"]
    assert all(w == w.lower() for ws in t.values() for w in ws)


def test_lexicon_rejects_unknown_category():
    with pytest.raises(ValueError):
        parse_lexicon("[colour]\nred\n")


def test_aggregate_examples():
    a = CueVector(positive_sentiment=1.0)
    b = CueVector(positive_sentiment=3.0)
    assert aggregate_agent("x", [a, b]).mean.positive_sentiment == 2.0
    assert aggregate_agent("x", [a]).mean == a
    assert aggregate_agent("x", [a] * 5).tweet_count == 5
    with pytest.raises(ValueError):
        aggregate_agent("x", [])


COUNT_FIELDS = [f for f in CueVector.value_fields() if f not in ("avg_word_length", "reading_difficulty")]
vocab = sorted(set().union(*LEX.terms.values()))[:40] + ["vaccine", "today", "shot", "great"]
words = st.lists(st.sampled_from(vocab), min_size=1, max_size=25)


@given(words, st.randoms(use_true_random=False))
def test_counts_permutation_invariant(ws, rnd):
    shuffled = list(ws)
    rnd.shuffle(shuffled)
    a = extract_cues(" ".join(ws), LEX)
    b = extract_cues(" ".join(shuffled), LEX)
    for f in COUNT_FIELDS:
        assert getattr(a, f) == getattr(b, f)
    assert a.first_person + a.second_person + a.third_person <= a.num_pronouns


@given(words, st.integers(1, 8))
def test_k_copies_mean_is_identity(ws, k):
    cv = extract_cues(" ".join(ws) + "!", LEX)
    prof = aggregate_agent("x", [cv] * k)
    for f in CueVector.value_fields():
        assert getattr(prof.mean, f) == pytest.approx(getattr(cv, f), rel=1e-12, abs=1e-12)


def test_reading_difficulty_on_random_texts_matches_counts():
    rng = random.Random(7)
    table = {"cat": 1, "dog": 1, "lemon": 2, "banana": 3, "elephant": 3}
    for _ in range(50):
        n_sent = rng.randint(1, 5)
        sents = [[rng.choice(list(table)) for _ in range(rng.randint(1, 9))] for _ in range(n_sent)]
        text = " ".join(" ".join(s) + rng.choice([".", "!", "?", "..."]) for s in sents)
        w = sum(len(s) for s in sents)
        syl = sum(table[x] for s in sents for x in s)
        assert reading_difficulty(text) == pytest.approx(0.39 * w / n_sent + 11.8 * syl / w - 15.59, abs=1e-9)
