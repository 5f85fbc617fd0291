"""Deterministic synthetic demo corpus.

Generates a small talk dataset with toy 50-dim word vectors, one dependency
tree per sentence, and a sample lexicon, so the whole pipeline (and the test
suite) runs without any external data. Rating counts are drawn as
per-category fractions of a log-normally distributed view count, which gives
the raw counts a strong popularity correlation that scaling removes; the
debias stage's audit demonstrates exactly that on this corpus.

The same seed always produces byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import RATING_CATEGORIES, split_sentences

_WORDS = (
    "ability able accept across action actually against agree almost always amount "
    "animal answer anyone appear around attention become begin behind believe benefit "
    "better between björk bring build business carry cause century certain challenge chance change "
    "child choose city claim clear close common community company consider continue "
    "country course create culture data decade decide deep design detail develop "
    "difference discover discuss earth easy effect effort energy engage enough entire "
    "evidence exactly example expect experience explain explore fact familiar family "
    "feel field figure finally focus follow force forward future gather give global "
    "ground group grow happen health history hope human idea imagine impact important "
    "improve include increase inside instead interest invent issue journey keep knowledge "
    "language large learn level life light listen little local machine matter maybe "
    "measure memory message method might million mind moment money move nature nearly "
    "network notice number object ocean offer often order others outside particular "
    "pattern people perhaps period person picture piece place planet point power practice "
    "present pretty probably problem process produce project prove provide public purpose "
    "question quite raise rather reach real reason recent remember research respond result "
    "reveal school science second sense serious serve share simple single situation social "
    "society solve source space speak special spend start story strong student study "
    "subject succeed suggest support surface surprise system teach team technology thing "
    "think thought through today together toward travel trust truth understand value "
    "various voice wonder world zeitgeist"
).split()

# These two appear in transcripts but are left out of the vector file, so
# the out-of-vocabulary zero-vector path gets exercised by the demo data.
OOV_WORDS = ("björk", "zeitgeist")

_POS_POOL = ("ADJ", "ADP", "ADV", "DET", "NOUN", "PRON", "VERB")
_DEP_POOL = ("advmod", "amod", "case", "conj", "det", "nmod", "nsubj", "obj", "xcomp")
_KEYWORD_POOL = (
    "science",
    "technology",
    "education",
    "health",
    "design",
    "history",
    "innovation",
    "climate",
    "storytelling",
    "community",
)

VECTOR_DIM = 50


def _random_tree(rng, n_tokens: int):
    """Random parse over 1-based token ids: (root_id, heads, deprels).

    The last token is the sentence's '.' and always attaches to the root
    with deprel 'punct'; the remaining nodes form a random recursive tree.
    """
    word_ids = list(range(1, n_tokens))  # excludes the final '.'
    root = int(rng.choice(word_ids))
    heads = {root: 0}
    deprels = {root: "root"}
    placed = [root]
    for tid in rng.permutation([i for i in word_ids if i != root]).tolist():
        heads[tid] = int(rng.choice(placed))
        deprels[tid] = str(rng.choice(_DEP_POOL))
        placed.append(tid)
    punct = n_tokens
    heads[punct] = root
    deprels[punct] = "punct"
    return root, heads, deprels


def generate_demo_corpus(
    out_dir,
    n_talks: int = 20,
    sentences_per_talk: int = 50,
    seed: int = 7,
) -> dict[str, Path]:
    """Write talks.jsonl, vectors.txt, trees.conllu, and lexicon.txt.

    Returns the path of each file. Talks are long and old enough to pass
    the default corpus filters.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    pos_of = {w: str(rng.choice(_POS_POOL)) for w in _WORDS}

    talk_lines = []
    tree_blocks = []
    for t in range(n_talks):
        talk_id = f"talk_{t:03d}"
        sentences = []
        for s in range(sentences_per_talk):
            k = int(rng.integers(6, 13))
            words = [str(w) for w in rng.choice(_WORDS, size=k)]
            tokens = words + ["."]
            sentences.append(tokens)
            root, heads, deprels = _random_tree(rng, len(tokens))
            lines = [f"# talk_id = {talk_id}", f"# sent_id = {s}"]
            for i, tok in enumerate(tokens, start=1):
                upos = "PUNCT" if tok == "." else pos_of[tok]
                lines.append(
                    "\t".join([str(i), tok, "_", upos, "_", "_", str(heads[i]), deprels[i], "_", "_"])
                )
            tree_blocks.append("\n".join(lines))
        transcript = " ".join(" ".join(sent) for sent in sentences)
        assert split_sentences(transcript) == sentences  # generator/tokenizer alignment

        profile = rng.dirichlet(np.full(len(RATING_CATEGORIES), 2.0))
        views = int(round(float(rng.lognormal(mean=9.0, sigma=1.0))))
        counts = [int(round(f * views * 0.08)) for f in profile]
        if sum(counts) == 0:
            counts[int(rng.integers(0, len(counts)))] = 1
        record = {
            "id": talk_id,
            "title": f"Demo talk {t}: " + " ".join(str(w) for w in rng.choice(_WORDS, size=3)),
            "transcript": transcript,
            "ratings": dict(zip(RATING_CATEGORIES, counts)),
            "views": views,
            "age_days": int(rng.integers(200, 2800)),
            "keywords": [str(w) for w in rng.choice(_KEYWORD_POOL, size=2, replace=False)],
        }
        talk_lines.append(json.dumps(record, sort_keys=True))

    vector_lines = []
    for word in sorted(set(_WORDS) - set(OOV_WORDS)) + ["."]:
        vec = rng.uniform(-0.5, 0.5, size=VECTOR_DIM)
        vector_lines.append(word + " " + " ".join(f"{v:.6f}" for v in vec))

    lexicon_text = "\n".join(
        [
            "# sample lexicon for the demo corpus (category: literal and prefix patterns)",
            "cognition: think thought idea mind believe imagine consider wonder know*",
            "social: people community society family together group team public",
            "science: science data research evidence measure* discover* prove",
            "motion: move travel journey reach forward toward bring carry",
            "time: today future century decade moment period recent* always",
            "affect: hope trust surprise interest feel* wonder",
            "work: business company project effort practice serve* produce*",
            "scale: million large little deep entire global amount increase*",
        ]
    ) + "\n"

    paths = {
        "talks": out_dir / "talks.jsonl",
        "vectors": out_dir / "vectors.txt",
        "trees": out_dir / "trees.conllu",
        "lexicon": out_dir / "lexicon.txt",
    }
    paths["talks"].write_text("\n".join(talk_lines) + "\n", encoding="utf-8")
    paths["vectors"].write_text("\n".join(vector_lines) + "\n", encoding="utf-8")
    paths["trees"].write_text("\n\n".join(tree_blocks) + "\n", encoding="utf-8")
    paths["lexicon"].write_text(lexicon_text, encoding="utf-8")
    return paths
