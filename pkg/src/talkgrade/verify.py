"""Gradient verification fixtures: tiny models checked against finite differences."""

from __future__ import annotations

import numpy as np

from .autodiff import gradcheck_params
from .corpus import DepNode, DepTree, NUM_CATEGORIES, Vocab, WordVectors
from .errors import TalkgradeError
from .models import LstmParams, TreeLstmParams, predict
from .training import bce_loss


def toy_wordvecs(seed: int, dim: int = 6, n_tokens: int = 10) -> WordVectors:
    rng = np.random.default_rng(seed)
    table = {f"tok{i}": rng.uniform(-1.0, 1.0, size=dim) for i in range(n_tokens)}
    return WordVectors(dim, table)


def toy_vocab() -> Vocab:
    return Vocab(pos_tags=("N", "V"), dep_types=("dep", "mod", "root"))


def chain_tree(tokens, pos_tags=None, dep_types=None) -> DepTree:
    """Left-to-right chain: the root is the last token, each node's single
    child is the previous token."""
    n = len(tokens)
    pos_tags = pos_tags or ["N"] * n
    dep_types = dep_types or (["dep"] * (n - 1) + ["root"])
    nodes = []
    for i, tok in enumerate(tokens):
        parent = i + 1 if i + 1 < n else None
        nodes.append(DepNode(tok, pos_tags[i], dep_types[i], parent))
    for i in range(n - 1):
        nodes[i + 1].children.append(i)
    return DepTree(nodes=nodes, root=n - 1)


def star_tree(tokens) -> DepTree:
    """First token is the root; every other token hangs directly off it."""
    nodes = [DepNode(tokens[0], "V", "root", None)]
    for i, tok in enumerate(tokens[1:], start=1):
        nodes.append(DepNode(tok, "N", "mod", 0))
        nodes[0].children.append(i)
    return DepTree(nodes=nodes, root=0)


def toy_example(kind: str, seed: int, hidden: int = 4):
    """A tiny two-sentence talk plus freshly initialized parameters.

    Returns (params, sentences, wordvecs, labels) sized so a full
    finite-difference sweep over every parameter runs in seconds.
    """
    wordvecs = toy_wordvecs(seed)
    rng = np.random.default_rng(seed + 1)
    labels = rng.integers(0, 2, size=NUM_CATEGORIES).astype(float)
    tokens_a = ["tok0", "tok1", "tok2", "tok3"]
    tokens_b = ["tok4", "tok5", "tok6"]
    if kind == "word-seq":
        params = LstmParams.init(seed, hidden=hidden, input_dim=wordvecs.dim)
        sentences = [tokens_a, tokens_b]
    elif kind == "dep-tree":
        params = TreeLstmParams.init(
            seed, toy_vocab(), hidden=hidden, word_dim=wordvecs.dim, pos_dim=2, dep_dim=2
        )
        sentences = [chain_tree(tokens_a), star_tree(tokens_b)]
    else:
        raise TalkgradeError(f"unknown model kind '{kind}'")
    return params, sentences, wordvecs, labels


def toy_gradcheck(kind: str, seed: int, hidden: int = 4, eps: float = 1e-5, tol: float = 1e-5):
    """Check analytic BCE gradients of a toy model against central differences.

    Returns (reports, max_rel_err) where reports maps parameter names to
    per-tensor gradcheck results.
    """
    params, sentences, wordvecs, labels = toy_example(kind, seed, hidden=hidden)

    def loss_fn():
        return bce_loss(predict(params, sentences, wordvecs), labels)

    reports = gradcheck_params(loss_fn, params.named_tensors(), eps=eps, tol=tol)
    max_err = max(r.max_rel_err for r in reports.values())
    return reports, max_err
