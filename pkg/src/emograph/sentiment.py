"""Rule-based lexicon sentiment scoring with a normalized compound score."""

from __future__ import annotations

import math
import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Mapping, Protocol

from .graph import Emotion

NEGATION_WINDOW = 3
NEGATION_SCALAR = -1.0
INTENSIFIER_SCALAR = 1.293
CAPS_SCALAR = 1.5
EXCLAMATION_BOOST = 0.292
MAX_EXCLAMATIONS = 3
NORMALIZATION_ALPHA = 15.0
POSITIVE_THRESHOLD = 0.05
NEGATIVE_THRESHOLD = -0.05

NEGATIONS = frozenset(
    """not no never none nobody nothing neither nor nowhere cannot without
    aint isnt arent wasnt werent dont doesnt didnt wont wouldnt couldnt shouldnt
    hasnt havent hadnt""".split()
)
INTENSIFIERS = frozenset(
    """absolutely amazingly completely deeply enormously entirely especially
    exceptionally extremely fully greatly highly hugely incredibly intensely
    particularly purely quite really remarkably so substantially thoroughly
    totally tremendously truly unbelievably utterly very""".split()
)

_STRIP = string.punctuation + "“”‘’"


@dataclass(frozen=True)
class SentimentScore:
    compound: float
    label: Emotion
    token_hits: int

    def to_dict(self) -> dict:
        return {"compound": self.compound, "label": self.label.value, "token_hits": self.token_hits}


class Classifier(Protocol):
    def __call__(self, text: str) -> SentimentScore: ...


def label_from_compound(compound: float) -> Emotion:
    if compound >= POSITIVE_THRESHOLD:
        return Emotion.POSITIVE
    if compound <= NEGATIVE_THRESHOLD:
        return Emotion.NEGATIVE
    return Emotion.NEUTRAL


def normalize_score(total: float, alpha: float = NORMALIZATION_ALPHA) -> float:
    """Squash an unbounded valence sum into (-1, 1)."""
    return total / math.sqrt(total * total + alpha)


def load_lexicon(text: str) -> dict[str, float]:
    lexicon = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            word, value = line.split("\t")
            lexicon[word.lower()] = float(value)
        except ValueError:
            raise ValueError(f"lexicon line {lineno}: expected 'word<TAB>score', got {line!r}") from None
    return lexicon


@lru_cache(maxsize=1)
def bundled_lexicon() -> Mapping[str, float]:
    return load_lexicon(resources.files("emograph").joinpath("data/lexicon.tsv").read_text("utf-8"))


def _is_negation(token: str) -> bool:
    return token in NEGATIONS or token.endswith(("n't", "n’t"))


class LexiconClassifier:
    def __init__(self, lexicon: Mapping[str, float] | None = None):
        self.lexicon = dict(bundled_lexicon() if lexicon is None else lexicon)

    def __call__(self, text: str) -> SentimentScore:
        raw = [t.strip(_STRIP) for t in text.split()]
        tokens = [t for t in raw if t]
        lowered = [t.lower() for t in tokens]
        words = [t for t in tokens if any(c.isalpha() for c in t)]
        # caps only emphasise when the rest of the text is not shouting too
        shouting = bool(words) and all(t.isupper() for t in words)

        total = 0.0
        hits = 0
        for i, (tok, low) in enumerate(zip(tokens, lowered)):
            valence = self.lexicon.get(low)
            if valence is None:
                continue
            hits += 1
            if not shouting and len(tok) > 1 and tok.isupper():
                valence *= CAPS_SCALAR
            if i > 0 and lowered[i - 1] in INTENSIFIERS:
                valence *= INTENSIFIER_SCALAR
            if any(_is_negation(w) for w in lowered[max(0, i - NEGATION_WINDOW):i]):
                valence *= NEGATION_SCALAR
            total += valence

        bangs = min(text.count("!"), MAX_EXCLAMATIONS)
        if total > 0:
            total += EXCLAMATION_BOOST * bangs
        elif total < 0:
            total -= EXCLAMATION_BOOST * bangs

        compound = normalize_score(total) if total else 0.0
        return SentimentScore(compound=compound, label=label_from_compound(compound), token_hits=hits)


_default: LexiconClassifier | None = None


def classify_sentiment(text: str) -> SentimentScore:
    global _default
    if _default is None:
        _default = LexiconClassifier()
    return _default(text)
