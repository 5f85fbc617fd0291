"""Sentence encoders and the shared prediction head.

Two encoders map a sentence to a fixed-width embedding: a gated recurrence
over the word sequence, and a child-sum tree recurrence over the sentence's
dependency parse (optionally concatenating learned POS-tag and dependency-
type embeddings onto each word vector). A talk's sentence embeddings are
averaged, so sentence order never matters, and the pooled vector goes
through one affine layer plus element-wise sigmoid to produce the
14 per-category probabilities.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .autodiff import (
    Tensor,
    concat,
    hadamard,
    matvec,
    mean_of_vectors,
    sigmoid,
    sum_of_vectors,
    take_row,
    tanh,
)
from .corpus import DepTree, NUM_CATEGORIES, Vocab, WordVectors
from .errors import TalkgradeError


class ModelError(TalkgradeError):
    pass


class CheckpointError(TalkgradeError):
    pass


def _uniform(rng, rows: int, cols: int) -> Tensor:
    bound = 1.0 / math.sqrt(cols)  # fan_in = cols
    return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True)


def _zeros(n: int) -> Tensor:
    return Tensor(np.zeros(n), requires_grad=True)


@dataclass
class LstmParams:
    """Gate weights for the word-sequence encoder plus the output head.

    U matrices act on the 300-dim word vector, V matrices on the previous
    hidden state, and W maps the pooled 128-dim talk embedding to the 14
    category logits (stored output-major, 14 x hidden).
    """

    hidden: int
    input_dim: int
    U_i: Tensor
    U_f: Tensor
    U_u: Tensor
    U_o: Tensor
    V_i: Tensor
    V_f: Tensor
    V_u: Tensor
    V_o: Tensor
    b_i: Tensor
    b_f: Tensor
    b_u: Tensor
    b_o: Tensor
    W: Tensor
    b_r: Tensor

    @classmethod
    def init(cls, seed: int, hidden: int = 128, input_dim: int = 300) -> "LstmParams":
        """Seeded init: weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), zero biases."""
        rng = np.random.default_rng(seed)
        return cls(
            hidden=hidden,
            input_dim=input_dim,
            U_i=_uniform(rng, hidden, input_dim),
            U_f=_uniform(rng, hidden, input_dim),
            U_u=_uniform(rng, hidden, input_dim),
            U_o=_uniform(rng, hidden, input_dim),
            V_i=_uniform(rng, hidden, hidden),
            V_f=_uniform(rng, hidden, hidden),
            V_u=_uniform(rng, hidden, hidden),
            V_o=_uniform(rng, hidden, hidden),
            b_i=_zeros(hidden),
            b_f=_zeros(hidden),
            b_u=_zeros(hidden),
            b_o=_zeros(hidden),
            W=_uniform(rng, NUM_CATEGORIES, hidden),
            b_r=_zeros(NUM_CATEGORIES),
        )

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)
                if isinstance(getattr(self, f.name), Tensor)]

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named_tensors()]

    def copy(self) -> "LstmParams":
        return replace(self, **{n: Tensor(t.data.copy(), requires_grad=True)
                                for n, t in self.named_tensors()})

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        h, d = self.hidden, self.input_dim
        shapes = {}
        for gate in "ifuo":
            shapes[f"U_{gate}"] = (h, d)
            shapes[f"V_{gate}"] = (h, h)
            shapes[f"b_{gate}"] = (h,)
        shapes["W"] = (NUM_CATEGORIES, h)
        shapes["b_r"] = (NUM_CATEGORIES,)
        return shapes

    def validate(self) -> None:
        for name, want in self.expected_shapes().items():
            got = getattr(self, name).shape
            if got != want:
                raise ModelError(f"parameter {name} has shape {got}, expected {want}")
        for name, t in self.named_tensors():
            if not np.all(np.isfinite(t.data)):
                raise ModelError(f"parameter {name} contains non-finite values")


@dataclass
class TreeLstmParams:
    """Gate weights for the tree encoder, plus tag embedding tables.

    Node inputs are word vectors with a POS embedding and a dependency-type
    embedding appended (either width may be zero, dropping that table), so
    the U matrices act on word_dim + pos_dim + dep_dim columns.
    """

    hidden: int
    word_dim: int
    pos_dim: int
    dep_dim: int
    vocab: Vocab
    U_i: Tensor
    U_f: Tensor
    U_u: Tensor
    U_o: Tensor
    V_i: Tensor
    V_f: Tensor
    V_u: Tensor
    V_o: Tensor
    b_i: Tensor
    b_f: Tensor
    b_u: Tensor
    b_o: Tensor
    W: Tensor
    b_r: Tensor
    pos_emb: Tensor | None
    dep_emb: Tensor | None

    @classmethod
    def init(
        cls,
        seed: int,
        vocab: Vocab,
        hidden: int = 128,
        word_dim: int = 300,
        pos_dim: int = 32,
        dep_dim: int = 32,
    ) -> "TreeLstmParams":
        rng = np.random.default_rng(seed)
        input_dim = word_dim + pos_dim + dep_dim
        pos_emb = None
        dep_emb = None
        if pos_dim:
            pos_emb = Tensor(
                rng.uniform(-0.05, 0.05, size=(len(vocab.pos_tags), pos_dim)),
                requires_grad=True,
            )
        if dep_dim:
            dep_emb = Tensor(
                rng.uniform(-0.05, 0.05, size=(len(vocab.dep_types), dep_dim)),
                requires_grad=True,
            )
        return cls(
            hidden=hidden,
            word_dim=word_dim,
            pos_dim=pos_dim,
            dep_dim=dep_dim,
            vocab=vocab,
            U_i=_uniform(rng, hidden, input_dim),
            U_f=_uniform(rng, hidden, input_dim),
            U_u=_uniform(rng, hidden, input_dim),
            U_o=_uniform(rng, hidden, input_dim),
            V_i=_uniform(rng, hidden, hidden),
            V_f=_uniform(rng, hidden, hidden),
            V_u=_uniform(rng, hidden, hidden),
            V_o=_uniform(rng, hidden, hidden),
            b_i=_zeros(hidden),
            b_f=_zeros(hidden),
            b_u=_zeros(hidden),
            b_o=_zeros(hidden),
            W=_uniform(rng, NUM_CATEGORIES, hidden),
            b_r=_zeros(NUM_CATEGORIES),
            pos_emb=pos_emb,
            dep_emb=dep_emb,
        )

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)
                if isinstance(getattr(self, f.name), Tensor)]

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named_tensors()]

    def copy(self) -> "TreeLstmParams":
        return replace(self, **{n: Tensor(t.data.copy(), requires_grad=True)
                                for n, t in self.named_tensors()})

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        h = self.hidden
        d = self.word_dim + self.pos_dim + self.dep_dim
        shapes = {}
        for gate in "ifuo":
            shapes[f"U_{gate}"] = (h, d)
            shapes[f"V_{gate}"] = (h, h)
            shapes[f"b_{gate}"] = (h,)
        shapes["W"] = (NUM_CATEGORIES, h)
        shapes["b_r"] = (NUM_CATEGORIES,)
        if self.pos_dim:
            shapes["pos_emb"] = (len(self.vocab.pos_tags), self.pos_dim)
        if self.dep_dim:
            shapes["dep_emb"] = (len(self.vocab.dep_types), self.dep_dim)
        return shapes

    def validate(self) -> None:
        for name, want in self.expected_shapes().items():
            tensor = getattr(self, name)
            if tensor is None or tensor.shape != want:
                got = None if tensor is None else tensor.shape
                raise ModelError(f"parameter {name} has shape {got}, expected {want}")
        for name, t in self.named_tensors():
            if not np.all(np.isfinite(t.data)):
                raise ModelError(f"parameter {name} contains non-finite values")


def lstm_sentence(params: LstmParams, word_vectors) -> Tensor:
    """Run the gated recurrence over a sentence and return the final hidden state.

    Per position t:
        i = sigma(U_i w + V_i h + b_i)      input gate
        f = sigma(U_f w + V_f h + b_f)      forget gate
        u = tanh (U_u w + V_u h + b_u)      candidate
        o = sigma(U_o w + V_o h + b_o)      output gate
        c = f * c_prev + i * u
        h = o * tanh(c)
    with h and c starting at zero.
    """
    word_vectors = list(word_vectors)
    if not word_vectors:
        raise ModelError("empty sentence")
    h = Tensor(np.zeros(params.hidden))
    c = Tensor(np.zeros(params.hidden))
    for w in word_vectors:
        x = w if isinstance(w, Tensor) else Tensor(w)
        i = sigmoid(matvec(params.U_i, x) + matvec(params.V_i, h) + params.b_i)
        f = sigmoid(matvec(params.U_f, x) + matvec(params.V_f, h) + params.b_f)
        u = tanh(matvec(params.U_u, x) + matvec(params.V_u, h) + params.b_u)
        o = sigmoid(matvec(params.U_o, x) + matvec(params.V_o, h) + params.b_o)
        c = hadamard(f, c) + hadamard(i, u)
        h = hadamard(o, tanh(c))
    return h


def _node_input(params: TreeLstmParams, node, wordvecs: WordVectors) -> Tensor:
    parts = [Tensor(wordvecs.lookup(node.token))]
    pos_idx = params.vocab.pos_index.get(node.pos_tag)
    dep_idx = params.vocab.dep_index.get(node.dep_type)
    if pos_idx is None:
        raise ModelError(f"unknown tag: {node.pos_tag!r}")
    if dep_idx is None:
        raise ModelError(f"unknown tag: {node.dep_type!r}")
    if params.pos_dim:
        parts.append(take_row(params.pos_emb, pos_idx))
    if params.dep_dim:
        parts.append(take_row(params.dep_emb, dep_idx))
    return parts[0] if len(parts) == 1 else concat(*parts)


def treelstm_sentence(params: TreeLstmParams, tree: DepTree, wordvecs: WordVectors) -> Tensor:
    """Bottom-up tree recurrence; returns the root's hidden state.

    A node sums its children's hidden states for the input, candidate, and
    output gates, but each child's memory cell is gated by its own forget
    gate before summing. Leaves behave as if they had a single zero child,
    so their summed hidden state is zero and the forget term vanishes.
    """
    hidden_states: dict[int, Tensor] = {}
    cells: dict[int, Tensor] = {}
    for idx in tree.postorder():
        node = tree.nodes[idx]
        x = _node_input(params, node, wordvecs)
        if node.children:
            h_sum = sum_of_vectors([hidden_states[k] for k in node.children])
        else:
            h_sum = Tensor(np.zeros(params.hidden))
        i = sigmoid(matvec(params.U_i, x) + matvec(params.V_i, h_sum) + params.b_i)
        u = tanh(matvec(params.U_u, x) + matvec(params.V_u, h_sum) + params.b_u)
        o = sigmoid(matvec(params.U_o, x) + matvec(params.V_o, h_sum) + params.b_o)
        if node.children:
            fx = matvec(params.U_f, x)
            gated = None
            for k in node.children:
                f_k = sigmoid(fx + matvec(params.V_f, hidden_states[k]) + params.b_f)
                term = hadamard(f_k, cells[k])
                gated = term if gated is None else gated + term
            c = gated + hadamard(i, u)
        else:
            c = hadamard(i, u)
        cells[idx] = c
        hidden_states[idx] = hadamard(o, tanh(c))
    return hidden_states[tree.root]


def predict(params, sentences, wordvecs: WordVectors, fc_mask: np.ndarray | None = None) -> Tensor:
    """Mean-pool sentence embeddings and apply the sigmoid output head.

    `sentences` holds token lists for LstmParams or DepTree objects for
    TreeLstmParams. `fc_mask`, when given, multiplies the pooled vector
    element-wise (dropout during training). Output entries stay strictly
    inside (0, 1) unless the logits saturate double precision.
    """
    sentences = list(sentences)
    if not sentences:
        raise ModelError("at least one sentence required")
    if isinstance(params, LstmParams):
        embeddings = [
            lstm_sentence(params, [wordvecs.lookup(tok) for tok in sent]) for sent in sentences
        ]
    elif isinstance(params, TreeLstmParams):
        embeddings = [treelstm_sentence(params, tree, wordvecs) for tree in sentences]
    else:
        raise ModelError(f"unsupported params type {type(params).__name__}")
    pooled = mean_of_vectors(embeddings)
    if fc_mask is not None:
        pooled = hadamard(pooled, Tensor(fc_mask))
    return sigmoid(matvec(params.W, pooled) + params.b_r)


CHECKPOINT_VERSION = 1


def save_container(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write named float arrays plus a JSON meta record into one .npz file."""
    if "__meta__" in arrays:
        raise CheckpointError("array name '__meta__' is reserved")
    np.savez(path, __meta__=json.dumps(meta, sort_keys=True), **arrays)


def load_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        with np.load(path) as z:
            meta = json.loads(str(z["__meta__"]))
            arrays = {k: z[k] for k in z.files if k != "__meta__"}
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    return meta, arrays


def save_checkpoint(path, params, extra_meta: dict | None = None) -> None:
    """Persist model parameters with enough meta to rebuild the architecture."""
    if isinstance(params, LstmParams):
        meta = {
            "version": CHECKPOINT_VERSION,
            "kind": "word-seq",
            "hidden": params.hidden,
            "input_dim": params.input_dim,
        }
    elif isinstance(params, TreeLstmParams):
        meta = {
            "version": CHECKPOINT_VERSION,
            "kind": "dep-tree",
            "hidden": params.hidden,
            "word_dim": params.word_dim,
            "pos_dim": params.pos_dim,
            "dep_dim": params.dep_dim,
            "pos_tags": list(params.vocab.pos_tags),
            "dep_types": list(params.vocab.dep_types),
        }
    else:
        raise CheckpointError(f"unsupported params type {type(params).__name__}")
    if extra_meta:
        meta.update(extra_meta)
    save_container(path, meta, {name: t.data for name, t in params.named_tensors()})


def load_checkpoint(path, expect_kind: str | None = None):
    """Rebuild parameters from a checkpoint, rejecting shape mismatches.

    Returns (params, meta). The stored meta describes the architecture;
    every stored tensor must match the shape that architecture implies.
    """
    meta, arrays = load_container(path)
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('version')!r}")
    kind = meta.get("kind")
    if expect_kind is not None and kind != expect_kind:
        raise CheckpointError(f"checkpoint is '{kind}', expected '{expect_kind}'")
    if kind == "word-seq":
        params = LstmParams.init(seed=0, hidden=int(meta["hidden"]), input_dim=int(meta["input_dim"]))
    elif kind == "dep-tree":
        vocab = Vocab(meta["pos_tags"], meta["dep_types"])
        params = TreeLstmParams.init(
            seed=0,
            vocab=vocab,
            hidden=int(meta["hidden"]),
            word_dim=int(meta["word_dim"]),
            pos_dim=int(meta["pos_dim"]),
            dep_dim=int(meta["dep_dim"]),
        )
    else:
        raise CheckpointError(f"unknown checkpoint kind {kind!r}")
    expected = params.expected_shapes()
    for name, want in expected.items():
        if name not in arrays:
            raise CheckpointError(f"checkpoint missing tensor '{name}'")
        got = arrays[name].shape
        if got != want:
            raise CheckpointError(
                f"checkpoint shape mismatch for {name}: expected {want}, got {got}"
            )
        setattr(params, name, Tensor(arrays[name].astype(np.float64), requires_grad=True))
    extras = set(arrays) - set(expected)
    if extras:
        raise CheckpointError(f"checkpoint has unexpected tensors: {sorted(extras)}")
    params.validate()
    return params, meta
