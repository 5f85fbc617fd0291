import math

import numpy as np
import pytest

from talkgrade.corpus import NUM_CATEGORIES
from talkgrade.models import (
    CheckpointError,
    LstmParams,
    ModelError,
    TreeLstmParams,
    load_checkpoint,
    load_container,
    lstm_sentence,
    predict,
    save_checkpoint,
    save_container,
    treelstm_sentence,
)
from talkgrade.verify import chain_tree, star_tree, toy_vocab, toy_wordvecs


def zeroed(params):
    for _, t in params.named_tensors():
        t.data[...] = 0.0
    return params


def tiny_lstm(seed=0, hidden=4, input_dim=5):
    return LstmParams.init(seed, hidden=hidden, input_dim=input_dim)


def tiny_tree_params(seed=0, hidden=4, word_dim=5, pos_dim=2, dep_dim=2, vocab=None):
    return TreeLstmParams.init(
        seed, vocab or toy_vocab(), hidden=hidden, word_dim=word_dim, pos_dim=pos_dim, dep_dim=dep_dim
    )


class TestLstmSentence:
    def test_zero_parameters_give_zero_output(self):
        params = zeroed(tiny_lstm())
        out = lstm_sentence(params, [np.ones(5), -np.ones(5)])
        np.testing.assert_array_equal(out.data, np.zeros(4))

    def test_hand_traced_one_dim_two_steps(self):
        params = tiny_lstm(hidden=1, input_dim=1)
        weights = {
            "U_i": 0.6, "U_f": 0.7, "U_u": 0.8, "U_o": 0.9,
            "V_i": 0.1, "V_f": 0.2, "V_u": 0.3, "V_o": 0.4,
            "b_i": 0.1, "b_f": 0.2, "b_u": 0.3, "b_o": 0.4,
        }
        for name, value in weights.items():
            getattr(params, name).data[...] = value

        def sig(z):
            return 1.0 / (1.0 + math.exp(-z))

        h = c = 0.0
        for w in (1.0, -0.5):
            i = sig(0.6 * w + 0.1 * h + 0.1)
            f = sig(0.7 * w + 0.2 * h + 0.2)
            u = math.tanh(0.8 * w + 0.3 * h + 0.3)
            o = sig(0.9 * w + 0.4 * h + 0.4)
            c = f * c + i * u
            h = o * math.tanh(c)
        out = lstm_sentence(params, [np.array([1.0]), np.array([-0.5])])
        assert out.data[0] == pytest.approx(h, abs=1e-15)

    def test_word_order_matters(self):
        params = tiny_lstm(seed=3)
        rng = np.random.default_rng(3)
        a, b, c = (rng.normal(size=5) for _ in range(3))
        h1 = lstm_sentence(params, [a, b, c]).data
        h2 = lstm_sentence(params, [b, a, c]).data
        assert not np.array_equal(h1, h2)

    def test_empty_sentence_rejected(self):
        with pytest.raises(ModelError, match="empty sentence"):
            lstm_sentence(tiny_lstm(), [])


class TestTreeLstmSentence:
    def test_zero_parameters_give_zero_output(self):
        params = zeroed(tiny_tree_params())
        wv = toy_wordvecs(0, dim=5)
        out = treelstm_sentence(params, star_tree(["tok0", "tok1", "tok2"]), wv)
        np.testing.assert_array_equal(out.data, np.zeros(4))

    def test_single_node_tree_matches_single_step_recurrence(self):
        vocab = toy_vocab()
        wv = toy_wordvecs(1, dim=5)
        tree_params = tiny_tree_params(seed=5, pos_dim=0, dep_dim=0, vocab=vocab)
        lstm = tiny_lstm(seed=9)
        for name, t in lstm.named_tensors():
            getattr(tree_params, name).data[...] = t.data
        tree = chain_tree(["tok0"])
        out_tree = treelstm_sentence(tree_params, tree, wv)
        out_seq = lstm_sentence(lstm, [wv.lookup("tok0")])
        np.testing.assert_array_equal(out_tree.data, out_seq.data)

    def test_chain_equivalence_small(self):
        for seed in range(5):
            wv = toy_wordvecs(seed, dim=5, n_tokens=6)
            tokens = [f"tok{i}" for i in range(6)]
            lstm = tiny_lstm(seed=seed)
            tree_params = tiny_tree_params(seed=seed + 50, pos_dim=0, dep_dim=0)
            for name, t in lstm.named_tensors():
                getattr(tree_params, name).data[...] = t.data
            h_seq = lstm_sentence(lstm, [wv.lookup(t) for t in tokens])
            h_tree = treelstm_sentence(tree_params, chain_tree(tokens), wv)
            np.testing.assert_allclose(h_tree.data, h_seq.data, rtol=0, atol=1e-12)

    def test_unknown_tag_rejected(self):
        params = tiny_tree_params()
        wv = toy_wordvecs(0, dim=5)
        tree = chain_tree(["tok0", "tok1"], pos_tags=["N", "MYSTERY"])
        with pytest.raises(ModelError, match="unknown tag: 'MYSTERY'"):
            treelstm_sentence(params, tree, wv)

    def test_multi_child_gradients_flow_to_embeddings(self):
        from talkgrade.autodiff import backward

        params = tiny_tree_params(seed=2)
        wv = toy_wordvecs(2, dim=5)
        tree = star_tree(["tok0", "tok1", "tok2", "tok3"])
        out = treelstm_sentence(params, tree, wv).sum()
        backward(out)
        assert params.pos_emb.grad is not None
        assert np.any(params.pos_emb.grad != 0)


class TestPredict:
    def test_zero_parameters_give_half_everywhere(self):
        params = zeroed(tiny_lstm())
        wv = toy_wordvecs(0, dim=5)
        out = predict(params, [["tok0", "tok1"], ["tok2"]], wv)
        np.testing.assert_array_equal(out.data, np.full(NUM_CATEGORIES, 0.5))

    def test_duplicating_sentences_leaves_output_unchanged(self):
        params = tiny_lstm(seed=4)
        wv = toy_wordvecs(4, dim=5)
        sentences = [["tok0", "tok1"], ["tok2", "tok3"]]
        once = predict(params, sentences, wv).data
        twice = predict(params, sentences + sentences, wv).data
        np.testing.assert_allclose(once, twice, atol=1e-15)

    def test_sentence_order_irrelevant(self):
        params = tiny_lstm(seed=4)
        wv = toy_wordvecs(4, dim=5)
        s = [["tok0", "tok1"], ["tok2"], ["tok3", "tok4"]]
        np.testing.assert_allclose(
            predict(params, s, wv).data, predict(params, s[::-1], wv).data, atol=1e-15
        )

    def test_output_strictly_inside_unit_interval(self):
        params = tiny_lstm(seed=6)
        wv = toy_wordvecs(6, dim=5)
        out = predict(params, [["tok0", "tok1", "tok2"]], wv).data
        assert np.all(out > 0.0) and np.all(out < 1.0)

    def test_no_sentences_rejected(self):
        with pytest.raises(ModelError, match="at least one sentence"):
            predict(tiny_lstm(), [], toy_wordvecs(0, dim=5))

    def test_oov_words_hit_zero_vector_path(self):
        params = tiny_lstm(seed=8)
        wv = toy_wordvecs(8, dim=5)
        out = predict(params, [["definitely-unseen", "tok0"]], wv)
        assert out.data.shape == (NUM_CATEGORIES,)


class TestInitParams:
    def test_same_seed_bitwise_identical(self):
        a = LstmParams.init(12, hidden=8, input_dim=20)
        b = LstmParams.init(12, hidden=8, input_dim=20)
        for (name, ta), (_, tb) in zip(a.named_tensors(), b.named_tensors()):
            np.testing.assert_array_equal(ta.data, tb.data, err_msg=name)

    def test_fan_in_bound(self):
        params = LstmParams.init(0, hidden=4, input_dim=300)
        bound = 1.0 / math.sqrt(300)
        assert np.max(np.abs(params.U_i.data)) <= bound
        assert np.max(np.abs(params.V_i.data)) <= 1.0 / math.sqrt(4)
        assert np.all(params.b_i.data == 0.0)

    def test_different_seeds_differ(self):
        a = LstmParams.init(1, hidden=4, input_dim=5)
        b = LstmParams.init(2, hidden=4, input_dim=5)
        assert not np.array_equal(a.U_i.data, b.U_i.data)

    def test_embedding_init_range(self):
        params = tiny_tree_params(seed=3)
        assert np.max(np.abs(params.pos_emb.data)) <= 0.05
        assert params.pos_emb.shape == (len(toy_vocab().pos_tags), 2)

    def test_default_shapes_match_contract(self):
        params = LstmParams.init(0)
        assert params.U_i.shape == (128, 300)
        assert params.V_o.shape == (128, 128)
        assert params.W.shape == (14, 128)
        params.validate()


class TestCheckpoints:
    def test_word_seq_roundtrip(self, tmp_path):
        params = tiny_lstm(seed=21)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, params, extra_meta={"unscaled": False})
        loaded, meta = load_checkpoint(path)
        assert meta["kind"] == "word-seq" and meta["unscaled"] is False
        for (name, t), (_, u) in zip(params.named_tensors(), loaded.named_tensors()):
            np.testing.assert_array_equal(t.data, u.data, err_msg=name)

    def test_dep_tree_roundtrip_preserves_vocab(self, tmp_path):
        params = tiny_tree_params(seed=22)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, params)
        loaded, meta = load_checkpoint(path)
        assert loaded.vocab == toy_vocab()
        np.testing.assert_array_equal(loaded.dep_emb.data, params.dep_emb.data)

    def test_shape_mismatch_rejected(self, tmp_path):
        params = tiny_lstm(seed=23)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, params)
        meta, arrays = load_container(path)
        arrays["U_i"] = arrays["U_i"][:, :-1]
        bad = tmp_path / "bad.npz"
        save_container(bad, meta, arrays)
        with pytest.raises(CheckpointError, match="shape mismatch for U_i"):
            load_checkpoint(bad)

    def test_wrong_kind_rejected(self, tmp_path):
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, tiny_lstm())
        with pytest.raises(CheckpointError, match="expected 'dep-tree'"):
            load_checkpoint(path, expect_kind="dep-tree")

    def test_missing_tensor_rejected(self, tmp_path):
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, tiny_lstm())
        meta, arrays = load_container(path)
        del arrays["b_r"]
        bad = tmp_path / "bad.npz"
        save_container(bad, meta, arrays)
        with pytest.raises(CheckpointError, match="missing tensor 'b_r'"):
            load_checkpoint(bad)


class TestFullModelGradcheck:
    def test_both_architectures_match_finite_differences(self):
        from talkgrade.verify import toy_gradcheck

        for kind in ("word-seq", "dep-tree"):
            reports, max_err = toy_gradcheck(kind, seed=1)
            assert max_err < 1e-5, f"{kind}: {max_err}"
            assert all(r.passed for r in reports.values())
