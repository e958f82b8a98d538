import json
import math
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from emograph.graph import Emotion
from emograph.sentiment import (
    LexiconClassifier,
    bundled_lexicon,
    classify_sentiment,
    label_from_compound,
    load_lexicon,
    normalize_score,
)

DATA = Path(__file__).parent / "data"


def compound(total):
    return total / math.sqrt(total * total + 15)


def test_empty_and_unknown_text_is_neutral():
    for text in ("", "   ", "the meeting is at noon"):
        s = classify_sentiment(text)
        assert s.compound == 0.0 and s.label is Emotion.NEUTRAL and s.token_hits == 0


def test_negation_flips_sign():
    good = bundled_lexicon()["good"]
    assert classify_sentiment("good").compound == compound(good)
    assert classify_sentiment("not good").compound == compound(-good)
    assert classify_sentiment("not good").label is Emotion.NEGATIVE
    assert classify_sentiment("don't think it good").compound == compound(-good)
    # outside the three-token window
    assert classify_sentiment("not that it was ever good").compound == compound(good)


def test_intensifier_caps_and_exclamations():
    good = bundled_lexicon()["good"]
    assert classify_sentiment("very good").compound == compound(good * 1.293)
    assert classify_sentiment("it is GOOD").compound == compound(good * 1.5)
    # all-caps text gets no extra emphasis
    assert classify_sentiment("IT IS GOOD").compound == compound(good)
    assert classify_sentiment("good!!").compound == compound(good + 2 * 0.292)
    assert classify_sentiment("good!!!!!").compound == compound(good + 3 * 0.292)
    bad = bundled_lexicon()["bad"]
    assert classify_sentiment("bad!").compound == compound(bad - 0.292)
    assert classify_sentiment("!!!").compound == 0.0


def test_thresholds_are_inclusive():
    assert label_from_compound(0.05) is Emotion.POSITIVE
    assert label_from_compound(-0.05) is Emotion.NEGATIVE
    assert label_from_compound(0.0499999) is Emotion.NEUTRAL
    assert label_from_compound(-0.0499999) is Emotion.NEUTRAL


def test_threshold_reached_through_lexicon():
    # a word whose valence normalizes to exactly 0.05 lands positive
    total = 0.05 * math.sqrt(15) / math.sqrt(1 - 0.05**2)
    clf = LexiconClassifier({"meh": total})
    s = clf("meh")
    assert s.compound == pytest.approx(0.05, abs=1e-15)
    assert s.label is label_from_compound(s.compound)


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_normalization_is_bounded_and_odd(x):
    y = normalize_score(x)
    assert -1.0 <= y <= 1.0
    assert normalize_score(-x) == -y


@given(st.text(max_size=80))
def test_classifier_is_total_and_deterministic(text):
    a, b = classify_sentiment(text), classify_sentiment(text)
    assert a == b
    assert -1.0 <= a.compound <= 1.0
    assert a.label is label_from_compound(a.compound)


def test_lexicon_file():
    lex = bundled_lexicon()
    assert len(lex) >= 200
    assert all(-4.0 <= v <= 4.0 for v in lex.values())
    with pytest.raises(ValueError, match="line 2"):
        load_lexicon("good\t1.0\nbroken line\n")


def test_golden_corpus():
    lines = (DATA / "sentiment_corpus.txt").read_text("utf-8").split("\n")[:-1]
    golden = (DATA / "sentiment_golden.jsonl").read_text("utf-8")
    assert len(lines) == 200
    out = "".join(
        json.dumps({"text": t, **classify_sentiment(t).to_dict()}, ensure_ascii=False) + "\n" for t in lines
    )
    assert out == golden
