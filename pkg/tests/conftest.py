import json

import pytest

from talkgrade.corpus import NUM_CATEGORIES, RATING_CATEGORIES, Talk, split_sentences


def make_talk(
    talk_id="t0",
    transcript="hello world. goodbye now.",
    counts=None,
    views=1000,
    age_days=400,
    keywords=(),
    sentences=None,
):
    """Small Talk factory; sentences override skips tokenization entirely."""
    if counts is None:
        counts = [1] * NUM_CATEGORIES
    if sentences is None:
        sentences = split_sentences(transcript)
    return Talk(
        id=talk_id,
        title=f"title {talk_id}",
        transcript=transcript,
        sentences=sentences,
        rating_counts=list(counts),
        total_views=views,
        age_days=age_days,
        keywords=list(keywords),
    )


def talk_json_line(
    talk_id="t0",
    transcript="hello world. goodbye now.",
    counts=None,
    views=1000,
    age_days=400,
    keywords=(),
    **extra,
):
    if counts is None:
        counts = [1] * NUM_CATEGORIES
    record = {
        "id": talk_id,
        "title": f"title {talk_id}",
        "transcript": transcript,
        "ratings": dict(zip(RATING_CATEGORIES, counts)),
        "views": views,
        "age_days": age_days,
        "keywords": list(keywords),
    }
    record.update(extra)
    return json.dumps(record)


@pytest.fixture(scope="session")
def demo_paths(tmp_path_factory):
    """A small deterministic demo corpus shared across CLI tests."""
    from talkgrade.demo import generate_demo_corpus

    out = tmp_path_factory.mktemp("demo-data")
    return generate_demo_corpus(out, n_talks=8, sentences_per_talk=8, seed=11)


def random_counts(rng, low=0, high=500):
    counts = rng.integers(low, high, size=NUM_CATEGORIES)
    if counts.sum() == 0:
        counts[0] = 1
    return counts.tolist()
