"""Loading, validation, and tokenization for the talk corpus.

The corpus arrives as three plain files: a JSONL file of talk records, a
text file of word vectors, and a CoNLL-U file of pre-parsed dependency
trees keyed by talk id and sentence index.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field

import numpy as np

from .errors import TalkgradeError

RATING_CATEGORIES = (
    "Beautiful",
    "Confusing",
    "Courageous",
    "Fascinating",
    "Funny",
    "Informative",
    "Ingenious",
    "Inspiring",
    "Jaw-Dropping",
    "Long-winded",
    "Obnoxious",
    "OK",
    "Persuasive",
    "Unconvincing",
)
NUM_CATEGORIES = len(RATING_CATEGORIES)

DEFAULT_BANNED_KEYWORDS = ("live music", "dance", "music", "performance", "entertainment")

_TALK_FIELDS = ("id", "title", "transcript", "ratings", "views", "age_days", "keywords")


class CorpusError(TalkgradeError):
    """Malformed or inconsistent corpus input."""


@dataclass
class Talk:
    id: str
    title: str
    transcript: str
    sentences: list[list[str]]
    rating_counts: list[int]
    total_views: int
    age_days: int
    keywords: list[str]

    @property
    def word_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    @property
    def total_ratings(self) -> int:
        return sum(self.rating_counts)

    def tokens(self) -> list[str]:
        return [tok for sent in self.sentences for tok in sent]


_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+")
_PUNCT = set(string.punctuation)


def split_sentences(transcript: str) -> list[list[str]]:
    """Segment a transcript into lowercase token lists.

    A sentence ends at '.', '!' or '?' followed by whitespace. Within a
    sentence, tokens are whitespace-separated; leading and trailing
    punctuation marks split off as single-character tokens, so "end."
    becomes ["end", "."]. Interior punctuation ("don't", "3.5") stays put.
    The rule is deliberately simple and deterministic; its quirks (e.g.
    "Dr. who" becoming two sentences) are pinned by a golden test.
    """
    sentences = []
    for chunk in _SENTENCE_BREAK.split(transcript.strip()):
        tokens = _tokenize(chunk)
        if tokens:
            sentences.append(tokens)
    if not sentences:
        raise CorpusError("empty transcript")
    return sentences


def _tokenize(chunk: str) -> list[str]:
    tokens: list[str] = []
    for raw in chunk.split():
        head: list[str] = []
        tail: list[str] = []
        while raw and raw[0] in _PUNCT:
            head.append(raw[0])
            raw = raw[1:]
        while raw and raw[-1] in _PUNCT:
            tail.append(raw[-1])
            raw = raw[:-1]
        tokens.extend(head)
        if raw:
            tokens.append(raw.lower())
        tokens.extend(reversed(tail))
    return tokens


def load_talks(path) -> list[Talk]:
    """Load talk records from a JSONL file, one JSON object per line.

    Required fields per record: id, title, transcript, ratings (object with
    one non-negative count per rating category), views, age_days, keywords.
    Errors name the offending 1-based line. Blank lines are skipped; an
    empty file yields an empty list.
    """
    talks = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            talks.append(_parse_talk(record, lineno))
    return talks


def _parse_talk(record, lineno: int) -> Talk:
    if not isinstance(record, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object")
    for name in _TALK_FIELDS:
        if name not in record:
            raise CorpusError(f"line {lineno}: missing field '{name}'")
    ratings = record["ratings"]
    if not isinstance(ratings, dict) or set(ratings) != set(RATING_CATEGORIES):
        raise CorpusError(f"line {lineno}: expected 14 rating counts")
    counts = []
    for name in RATING_CATEGORIES:
        value = ratings[name]
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise CorpusError(
                f"line {lineno}: rating count '{name}' must be a non-negative integer"
            )
        counts.append(value)
    for label in ("views", "age_days"):
        value = record[label]
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise CorpusError(f"line {lineno}: field '{label}' must be a non-negative integer")
    keywords = record["keywords"]
    if not isinstance(keywords, list) or not all(isinstance(k, str) for k in keywords):
        raise CorpusError(f"line {lineno}: field 'keywords' must be a list of strings")
    transcript = record["transcript"]
    if not isinstance(transcript, str):
        raise CorpusError(f"line {lineno}: field 'transcript' must be a string")
    try:
        sentences = split_sentences(transcript)
    except CorpusError as exc:
        raise CorpusError(f"line {lineno}: {exc}") from exc
    return Talk(
        id=str(record["id"]),
        title=str(record["title"]),
        transcript=transcript,
        sentences=sentences,
        rating_counts=counts,
        total_views=record["views"],
        age_days=record["age_days"],
        keywords=list(keywords),
    )


def talk_to_record(talk: Talk) -> dict:
    """Inverse of the JSONL parsing: a plain dict in the external format."""
    return {
        "id": talk.id,
        "title": talk.title,
        "transcript": talk.transcript,
        "ratings": dict(zip(RATING_CATEGORIES, talk.rating_counts)),
        "views": talk.total_views,
        "age_days": talk.age_days,
        "keywords": list(talk.keywords),
    }


def filter_talks(
    talks: list[Talk],
    min_words: int = 450,
    min_age_days: int = 183,
    banned_keywords=DEFAULT_BANNED_KEYWORDS,
) -> list[Talk]:
    """Keep talks that are long enough, old enough, and free of banned keywords.

    Keyword matching is case-insensitive on the whole keyword string.
    Order is preserved; an empty result is legal.
    """
    if min_words < 0 or min_age_days < 0:
        raise CorpusError("min_words and min_age_days must be non-negative")
    banned = {k.lower() for k in banned_keywords}
    kept = []
    for talk in talks:
        if talk.word_count < min_words or talk.age_days < min_age_days:
            continue
        if any(k.lower() in banned for k in talk.keywords):
            continue
        kept.append(talk)
    return kept


class WordVectors:
    """Token-to-vector table; absent tokens map to the zero vector."""

    def __init__(self, dim: int, table: dict[str, np.ndarray]):
        self.dim = dim
        self.table = table
        self._zero = np.zeros(dim)
        self._zero.flags.writeable = False

    def lookup(self, token: str) -> np.ndarray:
        return self.table.get(token, self._zero)

    def __contains__(self, token: str) -> bool:
        return token in self.table

    def __len__(self) -> int:
        return len(self.table)


def load_word_vectors(path, dim: int) -> WordVectors:
    """Read a plain-text vector file: one token and `dim` numbers per line."""
    if dim <= 0:
        raise CorpusError("vector dimension must be positive")
    table: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise CorpusError(f"line {lineno}: expected {dim} values, got {len(values)}")
            if token in table:
                raise CorpusError(f"line {lineno}: duplicate token '{token}'")
            try:
                table[token] = np.array([float(v) for v in values])
            except ValueError as exc:
                raise CorpusError(f"line {lineno}: non-numeric vector entry") from exc
    return WordVectors(dim, table)


def infer_vector_dim(path) -> int:
    """Dimension implied by the first entry of a vector file."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if parts:
                return len(parts) - 1
    raise CorpusError("empty vector file")


@dataclass
class DepNode:
    token: str
    pos_tag: str
    dep_type: str
    parent: int | None  # None marks the root
    children: list[int] = field(default_factory=list)


@dataclass
class DepTree:
    nodes: list[DepNode]
    root: int

    def __len__(self) -> int:
        return len(self.nodes)

    def postorder(self) -> list[int]:
        """Node indices with every child before its parent."""
        order, stack = [], [self.root]
        while stack:
            idx = stack.pop()
            order.append(idx)
            stack.extend(self.nodes[idx].children)
        order.reverse()
        return order

    def validate(self) -> None:
        roots = [i for i, n in enumerate(self.nodes) if n.parent is None]
        if roots != [self.root]:
            raise CorpusError("root count != 1")
        for i, node in enumerate(self.nodes):
            if node.parent is not None and i not in self.nodes[node.parent].children:
                raise CorpusError(f"node {i} missing from its parent's child list")
            for c in node.children:
                if self.nodes[c].parent != i:
                    raise CorpusError(f"child link {i}->{c} not mirrored")
        if len(self.postorder()) != len(self.nodes):
            raise CorpusError("cyclic dependency")


def load_dep_trees(path) -> dict[tuple[str, int], DepTree]:
    """Read CoNLL-U sentence blocks keyed by '# talk_id' / '# sent_id' comments.

    Token rows may be full 10-column CoNLL-U (ID FORM LEMMA UPOS XPOS FEATS
    HEAD DEPREL DEPS MISC) or the compact 5-column form ID FORM UPOS HEAD
    DEPREL. Every block must declare both key comments and must form a
    single-rooted tree. The sent_id is the 0-based sentence index produced
    by this package's tokenizer.
    """
    trees: dict[tuple[str, int], DepTree] = {}
    talk_id: str | None = None
    sent_id: int | None = None
    rows: list[tuple[int, str, str, int, str]] = []
    block_line = 0

    def flush(lineno: int) -> None:
        nonlocal talk_id, sent_id, rows
        if not rows:
            if talk_id is not None or sent_id is not None:
                raise CorpusError(f"line {block_line}: sentence block has no token rows")
            return
        if talk_id is None or sent_id is None:
            raise CorpusError(f"line {block_line}: sentence block missing talk_id/sent_id comment")
        key = (talk_id, sent_id)
        if key in trees:
            raise CorpusError(f"line {block_line}: duplicate tree for {talk_id}/{sent_id}")
        trees[key] = _build_tree(rows, f"tree {talk_id}/{sent_id}")
        talk_id = sent_id = None
        rows = []

    with open(path, encoding="utf-8") as fh:
        lineno = 0
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                flush(lineno)
                continue
            if not rows and talk_id is None and sent_id is None:
                block_line = lineno
            if stripped.startswith("#"):
                key, _, value = stripped.lstrip("#").partition("=")
                key, value = key.strip(), value.strip()
                if key == "talk_id":
                    talk_id = value
                elif key == "sent_id":
                    try:
                        sent_id = int(value)
                    except ValueError as exc:
                        raise CorpusError(f"line {lineno}: sent_id must be an integer") from exc
                continue
            parts = stripped.split()
            if len(parts) == 10:
                raw_id, form, upos, head, deprel = (
                    parts[0],
                    parts[1],
                    parts[3],
                    parts[6],
                    parts[7],
                )
            elif len(parts) == 5:
                raw_id, form, upos, head, deprel = parts
            else:
                raise CorpusError(f"line {lineno}: expected 5 or 10 columns, got {len(parts)}")
            try:
                rows.append((int(raw_id), form, upos, int(head), deprel))
            except ValueError as exc:
                raise CorpusError(f"line {lineno}: non-integer token id or head") from exc
        flush(lineno + 1)
    return trees


def _build_tree(rows, context: str) -> DepTree:
    n = len(rows)
    if [r[0] for r in rows] != list(range(1, n + 1)):
        raise CorpusError(f"{context}: token ids must run 1..n in order")
    nodes = []
    for _, form, upos, head, deprel in rows:
        if head < 0 or head > n:
            raise CorpusError(f"{context}: head index {head} out of range")
        nodes.append(DepNode(form, upos, deprel, None if head == 0 else head - 1))
    roots = [i for i, node in enumerate(nodes) if node.parent is None]
    if len(roots) != 1:
        raise CorpusError(f"{context}: root count != 1")
    for i, node in enumerate(nodes):
        if node.parent is not None:
            nodes[node.parent].children.append(i)
    tree = DepTree(nodes=nodes, root=roots[0])
    if len(tree.postorder()) != n:
        raise CorpusError(f"{context}: cyclic dependency")
    return tree


def write_dep_trees(trees: dict[tuple[str, int], DepTree]) -> str:
    """Serialize trees back to canonical 10-column CoNLL-U, sorted by key."""
    blocks = []
    for (talk_id, sent_id), tree in sorted(trees.items()):
        lines = [f"# talk_id = {talk_id}", f"# sent_id = {sent_id}"]
        for i, node in enumerate(tree.nodes):
            head = 0 if node.parent is None else node.parent + 1
            lines.append(
                "\t".join(
                    [str(i + 1), node.token, "_", node.pos_tag, "_", "_", str(head), node.dep_type, "_", "_"]
                )
            )
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


class Vocab:
    """Dense 0-based indices for the POS tags and dependency types of a tree set."""

    def __init__(self, pos_tags, dep_types):
        self.pos_tags = tuple(pos_tags)
        self.dep_types = tuple(dep_types)
        self.pos_index = {t: i for i, t in enumerate(self.pos_tags)}
        self.dep_index = {t: i for i, t in enumerate(self.dep_types)}

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocab)
            and self.pos_tags == other.pos_tags
            and self.dep_types == other.dep_types
        )

    def to_json(self) -> str:
        return json.dumps({"pos_tags": list(self.pos_tags), "dep_types": list(self.dep_types)})

    @classmethod
    def from_json(cls, text: str) -> "Vocab":
        data = json.loads(text)
        return cls(data["pos_tags"], data["dep_types"])


def build_vocab(trees) -> Vocab:
    """Collect the distinct tags across trees, sorted for stable indexing."""
    trees = list(trees)
    if not trees:
        raise CorpusError("no trees to build a vocab from")
    pos = {node.pos_tag for tree in trees for node in tree.nodes}
    dep = {node.dep_type for tree in trees for node in tree.nodes}
    return Vocab(sorted(pos), sorted(dep))
