"""Per-tweet linguistic cue counts and per-agent mean profiles."""

from __future__ import annotations

import re
from dataclasses import dataclass, fields
from importlib import resources
from typing import Iterable, Mapping, Sequence

CATEGORIES = (
    "positive",
    "negative",
    "identity",
    "pronoun",
    "first_person",
    "second_person",
    "third_person",
    "family",
    "exclusive",
    "abusive",
)

_SENTENCE_SPLIT = re.compile(r"[.?!]+")
_VOWEL_GROUP = re.compile(r"[aeiouy]+")
_STRIP = "\"'`“”‘’()[]{}<>.,;:!?*~…-\u2013\u2014_/\\|"


@dataclass(frozen=True)
class LinguisticLexicon:
    terms: Mapping[str, frozenset[str]]

    def __post_init__(self):
        missing = [c for c in CATEGORIES if c not in self.terms]
        if missing:
            raise ValueError(f"lexicon missing categories {missing}")
        persons = self.terms["first_person"] | self.terms["second_person"] | self.terms["third_person"]
        merged = dict(self.terms)
        merged["pronoun"] = frozenset(self.terms["pronoun"] | persons)
        object.__setattr__(self, "terms", merged)


def parse_lexicon(text: str) -> LinguisticLexicon:
    terms: dict[str, set[str]] = {c: set() for c in CATEGORIES}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in terms:
                raise ValueError(f"unknown lexicon category {current!r}")
            continue
        if current is None:
            raise ValueError(f"term {line!r} appears before any [category] header")
        terms[current].add(line.lower())
    return LinguisticLexicon({c: frozenset(v) for c, v in terms.items()})


def load_linguistic_lexicon(path=None) -> LinguisticLexicon:
    if path is None:
        text = resources.files("stanceflip.data").joinpath("linguistic_lexicon.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_lexicon(text)


def _clean_token(raw: str) -> str:
    tok = raw.strip(_STRIP).lstrip("#@").strip(_STRIP)
    return tok.lower()


def tokenize(text: str) -> tuple[list[list[str]], list[str]]:
    """Return (sentences as token lists, flat token list).

    Sentences break on runs of . ? !; a sentence with no tokens is dropped.
    """
    sentences = []
    for chunk in _SENTENCE_SPLIT.split(text):
        toks = [t for t in (_clean_token(w) for w in chunk.split()) if t]
        if toks:
            sentences.append(toks)
    tokens = [t for s in sentences for t in s]
    return sentences, tokens


def count_syllables(word: str) -> int:
    w = word.lower()
    groups = _VOWEL_GROUP.findall(w)
    n = len(groups)
    # silent terminal 'e': single e after a consonant, with another vowel group before it
    if n > 1 and w.endswith("e") and len(w) >= 2 and w[-2] not in "aeiouy":
        n -= 1
    return max(n, 1)


def reading_difficulty_from_counts(words: int, sentences: int, syllables: int) -> float:
    return 0.39 * (words / sentences) + 11.8 * (syllables / words) - 15.59


def reading_difficulty(text: str) -> float:
    """Reading difficulty of ``text``; 0.0 when it has no tokens."""
    sentences, tokens = tokenize(text)
    if not tokens:
        return 0.0
    syllables = sum(count_syllables(t) for t in tokens)
    return reading_difficulty_from_counts(len(tokens), len(sentences), syllables)


@dataclass(frozen=True)
class CueVector:
    positive_sentiment: float = 0.0
    negative_sentiment: float = 0.0
    num_identities: float = 0.0
    num_pronouns: float = 0.0
    first_person: float = 0.0
    second_person: float = 0.0
    third_person: float = 0.0
    num_exclamations: float = 0.0
    num_family: float = 0.0
    num_exclusive: float = 0.0
    num_abusive: float = 0.0
    avg_word_length: float = 0.0
    reading_difficulty: float = 0.0
    empty: bool = False

    @classmethod
    def value_fields(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name != "empty"]

    def values(self) -> list[float]:
        return [getattr(self, name) for name in self.value_fields()]


_CATEGORY_FIELD = {
    "positive": "positive_sentiment",
    "negative": "negative_sentiment",
    "identity": "num_identities",
    "pronoun": "num_pronouns",
    "first_person": "first_person",
    "second_person": "second_person",
    "third_person": "third_person",
    "family": "num_family",
    "exclusive": "num_exclusive",
    "abusive": "num_abusive",
}


def extract_cues(text: str, lexicon: LinguisticLexicon) -> CueVector:
    sentences, tokens = tokenize(text)
    counts = {name: 0 for name in _CATEGORY_FIELD.values()}
    for tok in tokens:
        for cat, name in _CATEGORY_FIELD.items():
            if tok in lexicon.terms[cat]:
                counts[name] += 1
    if not tokens:
        return CueVector(num_exclamations=float(text.count("!")), empty=True)
    syllables = sum(count_syllables(t) for t in tokens)
    return CueVector(
        **{k: float(v) for k, v in counts.items()},
        num_exclamations=float(text.count("!")),
        avg_word_length=sum(len(t) for t in tokens) / len(tokens),
        reading_difficulty=reading_difficulty_from_counts(len(tokens), len(sentences), syllables),
    )


@dataclass(frozen=True)
class AgentLinguisticProfile:
    agent_id: str
    mean: CueVector
    tweet_count: int


def aggregate_agent(agent_id: str, cues: Sequence[CueVector]) -> AgentLinguisticProfile:
    if not cues:
        raise ValueError(f"agent {agent_id!r} has no tweets to aggregate")
    n = len(cues)
    means = {name: sum(getattr(c, name) for c in cues) / n for name in CueVector.value_fields()}
    return AgentLinguisticProfile(agent_id, CueVector(**means), n)


def agent_profiles(
    texts_by_agent: Mapping[str, Iterable[str]], lexicon: LinguisticLexicon
) -> dict[str, AgentLinguisticProfile]:
    return {
        agent: aggregate_agent(agent, [extract_cues(t, lexicon) for t in texts])
        for agent, texts in texts_by_agent.items()
    }
