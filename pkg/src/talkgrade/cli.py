"""Batch command line: ingest -> debias -> train -> eval -> report.

Each stage reads the previous stage's files from the shared --out directory,
so expensive steps are cached and independently rerunnable. Given identical
inputs and seeds, every command rewrites byte-identical outputs (manifest
timestamps aside).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, baselines, debias, demo, evaluation, manifest, models, training
from .corpus import (
    NUM_CATEGORIES,
    RATING_CATEGORIES,
    CorpusError,
    Vocab,
    WordVectors,
    build_vocab,
    filter_talks,
    infer_vector_dim,
    load_dep_trees,
    load_talks,
    load_word_vectors,
    talk_to_record,
    write_dep_trees,
)
from .errors import TalkgradeError
from .verify import toy_gradcheck

NEURAL_MODELS = ("word-seq", "dep-tree")
ALL_MODELS = ("word-seq", "dep-tree", "svm", "lasso")


def _bundle_dir(out: Path) -> Path:
    return out / "bundle"


def _debias_dir(out: Path) -> Path:
    return out / "debias"


def _train_dir(out: Path, model: str, unscaled: bool) -> Path:
    return out / ("train-" + model + ("-unscaled" if unscaled else ""))


def cmd_demo(args) -> int:
    paths = demo.generate_demo_corpus(
        args.out, n_talks=args.n_talks, sentences_per_talk=args.sentences_per_talk, seed=args.seed
    )
    for name, path in paths.items():
        print(f"wrote {name}: {path}")
    return 0


def _summary(talks, wordvecs, trees) -> dict:
    per_category = {
        name: int(sum(t.rating_counts[i] for t in talks))
        for i, name in enumerate(RATING_CATEGORIES)
    }
    return {
        "talks": len(talks),
        "total_ratings": int(sum(t.total_ratings for t in talks)),
        "total_words": int(sum(t.word_count for t in talks)),
        "total_sentences": int(sum(len(t.sentences) for t in talks)),
        "word_vectors": len(wordvecs),
        "vector_dim": wordvecs.dim,
        "dependency_trees": len(trees) if trees is not None else 0,
        "rating_category_counts": per_category,
    }


def _summary_text(info: dict) -> str:
    lines = [
        "Corpus summary",
        "==============",
        f"talks:             {info['talks']}",
        f"total ratings:     {info['total_ratings']}",
        f"total words:       {info['total_words']}",
        f"total sentences:   {info['total_sentences']}",
        f"word vectors:      {info['word_vectors']} (dim {info['vector_dim']})",
        f"dependency trees:  {info['dependency_trees']}",
        "",
        "Rating category counts",
    ]
    for name in RATING_CATEGORIES:
        lines.append(f"  {name:<14}{info['rating_category_counts'][name]:>12}")
    return "\n".join(lines) + "\n"


def cmd_ingest(args) -> int:
    out = Path(args.out)
    talks = load_talks(args.talks)
    talks = filter_talks(talks, min_words=args.min_words, min_age_days=args.min_age_days)
    if not talks:
        raise CorpusError("no talks left after filtering")
    for talk in talks:
        if talk.total_ratings < 1:
            raise CorpusError(f"talk '{talk.id}' has no ratings after filtering")
    dim = infer_vector_dim(args.vectors)
    wordvecs = load_word_vectors(args.vectors, dim)
    trees = vocab = None
    if args.trees:
        trees = load_dep_trees(args.trees)
        vocab = build_vocab(trees.values())

    bdir = _bundle_dir(out)
    bdir.mkdir(parents=True, exist_ok=True)
    talks_text = "\n".join(json.dumps(talk_to_record(t), sort_keys=True) for t in talks) + "\n"
    (bdir / "talks.jsonl").write_text(talks_text, encoding="utf-8")
    tokens = sorted(wordvecs.table)
    matrix = np.array([wordvecs.table[t] for t in tokens])
    np.savez(bdir / "vectors.npz", tokens=np.array(tokens), vectors=matrix)
    outputs = [bdir / "talks.jsonl", bdir / "vectors.npz"]
    if trees is not None:
        (bdir / "trees.conllu").write_text(write_dep_trees(trees), encoding="utf-8")
        (bdir / "vocab.json").write_text(vocab.to_json() + "\n", encoding="utf-8")
        outputs += [bdir / "trees.conllu", bdir / "vocab.json"]
    info = _summary(talks, wordvecs, trees)
    (bdir / "summary.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    text = _summary_text(info)
    (bdir / "summary.txt").write_text(text, encoding="utf-8")
    manifest.write_manifest(
        bdir / "manifest.json",
        command="ingest",
        config={
            "min_words": args.min_words,
            "min_age_days": args.min_age_days,
            "talks": str(args.talks),
            "vectors": str(args.vectors),
            "trees": str(args.trees) if args.trees else None,
        },
        inputs=[p for p in (args.talks, args.vectors, args.trees) if p],
        outputs=outputs,
        seed=None,
    )
    print(text, end="")
    return 0


def load_bundle(out: Path):
    """Read back the ingest outputs: (talks, wordvecs, trees-or-None, vocab-or-None)."""
    bdir = _bundle_dir(out)
    if not (bdir / "talks.jsonl").exists():
        raise TalkgradeError(f"no bundle under {out}; run ingest first")
    talks = load_talks(bdir / "talks.jsonl")
    with np.load(bdir / "vectors.npz") as z:
        tokens = [str(t) for t in z["tokens"]]
        matrix = z["vectors"]
    wordvecs = WordVectors(matrix.shape[1], {t: matrix[i] for i, t in enumerate(tokens)})
    trees = vocab = None
    if (bdir / "trees.conllu").exists():
        trees = load_dep_trees(bdir / "trees.conllu")
        vocab = Vocab.from_json((bdir / "vocab.json").read_text(encoding="utf-8"))
    return talks, wordvecs, trees, vocab


def cmd_debias(args) -> int:
    out = Path(args.out)
    talks, _, _, _ = load_bundle(out)
    raw = debias.raw_matrix(talks)
    scaled = debias.scaled_matrix(talks)
    train_idx, dev_idx, test_idx = training.split_indices(
        len(talks), args.test_n, args.dev_fraction, args.seed
    )
    labels, thresholds = debias.median_binarize(scaled, train_idx)
    raw_labels, raw_thresholds = debias.median_binarize(raw, train_idx)
    report = debias.correlation_report(talks)

    ddir = _debias_dir(out)
    ddir.mkdir(parents=True, exist_ok=True)
    np.savez(
        ddir / "labels.npz",
        talk_ids=np.array([t.id for t in talks]),
        scaled=scaled,
        labels=labels,
        thresholds=thresholds,
        raw_labels=raw_labels,
        raw_thresholds=raw_thresholds,
        train_idx=train_idx,
        dev_idx=dev_idx,
        test_idx=test_idx,
        split_params=json.dumps(
            {"seed": args.seed, "test_n": args.test_n, "dev_fraction": args.dev_fraction}
        ),
    )
    (ddir / "correlation.txt").write_text(report.to_text(), encoding="utf-8")
    (ddir / "correlation.csv").write_text(report.to_csv(), encoding="utf-8")
    manifest.write_manifest(
        ddir / "manifest.json",
        command="debias",
        config={"test_n": args.test_n, "dev_fraction": args.dev_fraction},
        inputs=[_bundle_dir(out) / "talks.jsonl"],
        outputs=[ddir / "labels.npz", ddir / "correlation.txt", ddir / "correlation.csv"],
        seed=args.seed,
    )
    print(report.to_text(), end="")
    return 0


def _load_labels(out: Path):
    path = _debias_dir(out) / "labels.npz"
    if not path.exists():
        raise TalkgradeError(f"no debias output under {out}; run debias first")
    with np.load(path) as z:
        return {k: z[k] for k in z.files}


def _tree_sentences(talk, trees):
    if trees is None:
        raise TalkgradeError("trees required: ingest ran without --trees")
    sentences = []
    for i in range(len(talk.sentences)):
        key = (talk.id, i)
        if key not in trees:
            raise TalkgradeError(f"missing dependency tree for {talk.id} sentence {i}")
        sentences.append(trees[key])
    return sentences


def _examples(talks, indices, label_matrix, model: str, trees):
    out = []
    for i in indices:
        talk = talks[int(i)]
        sentences = talk.sentences if model == "word-seq" else _tree_sentences(talk, trees)
        out.append((sentences, label_matrix[int(i)]))
    return out


def _train_config(args) -> training.TrainConfig:
    overrides = {
        "optimizer": args.optimizer,
        "learning_rate": args.lr,
        "batch_size": args.batch_size,
        "epochs": args.epochs,
        "weight_drop_p": args.weight_drop,
        "fc_dropout_p": args.fc_dropout,
        "seed": args.seed,
        "dev_fraction": args.dev_fraction,
    }
    if args.config:
        return training.TrainConfig.from_file(args.config, **overrides)
    defaults = training.TrainConfig()
    values = {k: (v if v is not None else getattr(defaults, k)) for k, v in overrides.items()}
    return training.TrainConfig(**values)


def cmd_train(args) -> int:
    out = Path(args.out)
    talks, wordvecs, trees, vocab = load_bundle(out)
    labels_data = _load_labels(out)
    label_matrix = labels_data["raw_labels"] if args.unscaled else labels_data["labels"]
    train_idx = labels_data["train_idx"]
    dev_idx = labels_data["dev_idx"]
    config = _train_config(args)

    tdir = _train_dir(out, args.model, args.unscaled)
    tdir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = tdir / "checkpoint.npz"
    bundle_inputs = [_bundle_dir(out) / "talks.jsonl", _debias_dir(out) / "labels.npz"]
    manifest.write_manifest(
        tdir / "manifest.json",
        command="train",
        config={"model": args.model, "unscaled": args.unscaled, "hidden": args.hidden,
                "pos_dim": args.pos_dim, "dep_dim": args.dep_dim, "C": args.c,
                **{f"train.{k}": v for k, v in vars(config).items()}},
        inputs=bundle_inputs,
        outputs=[checkpoint_path],
        seed=config.seed,
    )

    extra_meta = {"unscaled": bool(args.unscaled), "train_config": vars(config)}
    if args.model in NEURAL_MODELS:
        if args.model == "dep-tree" and trees is None:
            raise TalkgradeError("trees required: ingest ran without --trees")
        train_set = _examples(talks, train_idx, label_matrix, args.model, trees)
        dev_set = _examples(talks, dev_idx, label_matrix, args.model, trees)
        if args.model == "word-seq":
            params = models.LstmParams.init(config.seed, hidden=args.hidden, input_dim=wordvecs.dim)
        else:
            params = models.TreeLstmParams.init(
                config.seed,
                vocab,
                hidden=args.hidden,
                word_dim=wordvecs.dim,
                pos_dim=args.pos_dim,
                dep_dim=args.dep_dim,
            )

        def on_save(p, epoch):
            models.save_checkpoint(checkpoint_path, p, extra_meta=extra_meta)
            print(f"epoch {epoch}: checkpoint saved")

        result = training.train(params, train_set, dev_set, wordvecs, config, on_save=on_save)
        if result.best_epoch == 0:
            models.save_checkpoint(checkpoint_path, result.params, extra_meta=extra_meta)
        (tdir / "curves.csv").write_text(training.curves_to_csv(result.curves), encoding="utf-8")
        for rec in result.curves:
            print(
                f"epoch {rec.epoch}: train {rec.train_loss:.4f} dev {rec.dev_loss:.4f}"
                + (" *" if rec.saved else "")
            )
        print(f"best dev loss {result.best_dev_loss:.6f} at epoch {result.best_epoch}")
    else:
        if not args.lexicon:
            raise TalkgradeError(f"--lexicon required for --model {args.model}")
        lexicon = baselines.Lexicon.load(args.lexicon)
        X = baselines.extract_matrix(talks, lexicon)
        if args.c is not None:
            chosen_c = args.c
        else:
            chosen_c = _grid_select_c(args.model, X, label_matrix, train_idx, dev_idx)
        linear = baselines.train_per_category(
            X[train_idx], label_matrix[train_idx], args.model, chosen_c
        )
        meta = {
            "version": models.CHECKPOINT_VERSION,
            "kind": args.model,
            "C": chosen_c,
            "lexicon": {"categories": list(lexicon.categories),
                        "patterns": {c: list(lexicon.patterns[c]) for c in lexicon.categories}},
            **extra_meta,
        }
        arrays = {
            "w": np.array([m.w for m in linear]),
            "b": np.array([m.b for m in linear]),
        }
        models.save_container(checkpoint_path, meta, arrays)
        print(f"trained {args.model} per category with C={chosen_c}; checkpoint saved")
    return 0


def _grid_select_c(kind, X, label_matrix, train_idx, dev_idx, grid=(0.01, 0.1, 1.0, 10.0)):
    """Mean dev accuracy over categories decides C; ties prefer smaller C."""
    best = None
    for C in grid:
        linear = baselines.train_per_category(X[train_idx], label_matrix[train_idx], kind, C)
        preds = baselines.predict_matrix(linear, X[dev_idx])
        acc = float(np.mean(preds == label_matrix[dev_idx]))
        if best is None or acc > best[0]:
            best = (acc, C)
    return best[1]


def _neural_predictions(params, talks, indices, wordvecs, trees, kind) -> np.ndarray:
    preds = np.zeros((len(indices), NUM_CATEGORIES), dtype=np.int64)
    for row, i in enumerate(indices):
        talk = talks[int(i)]
        sentences = talk.sentences if kind == "word-seq" else _tree_sentences(talk, trees)
        r = models.predict(params, sentences, wordvecs)
        preds[row] = (r.data >= 0.5).astype(np.int64)
    return preds


def cmd_eval(args) -> int:
    out = Path(args.out)
    talks, wordvecs, trees, _ = load_bundle(out)
    labels_data = _load_labels(out)
    test_idx = labels_data["test_idx"]
    checkpoints = [Path(p) for p in args.checkpoints] if args.checkpoints else sorted(
        out.glob("train-*/checkpoint.npz")
    )
    if not checkpoints:
        raise TalkgradeError("no checkpoints to evaluate")
    edir = out / "eval"
    edir.mkdir(parents=True, exist_ok=True)
    tables = {}
    outputs = []
    for path in checkpoints:
        meta, arrays = models.load_container(path)
        kind = meta.get("kind")
        unscaled = bool(meta.get("unscaled", False))
        label_matrix = labels_data["raw_labels"] if unscaled else labels_data["labels"]
        if kind in NEURAL_MODELS:
            params, meta = models.load_checkpoint(path)
            preds = _neural_predictions(params, talks, test_idx, wordvecs, trees, kind)
        elif kind in ("svm", "lasso"):
            lexicon = baselines.Lexicon(
                {c: list(meta["lexicon"]["patterns"][c]) for c in meta["lexicon"]["categories"]}
            )
            X = baselines.extract_matrix([talks[int(i)] for i in test_idx], lexicon)
            linear = [
                baselines.LinearModel(w=arrays["w"][j], b=float(arrays["b"][j]), kind=kind,
                                      objective=np.nan)
                for j in range(NUM_CATEGORIES)
            ]
            preds = baselines.predict_matrix(linear, X)
        else:
            raise TalkgradeError(f"checkpoint {path} has unknown kind {kind!r}")
        report_kind = kind + ("-unscaled" if unscaled else "")
        table = evaluation.metrics(evaluation.confusion(preds, label_matrix[test_idx]))
        tables[report_kind] = table
        csv_path = edir / f"metrics-{report_kind}.csv"
        csv_path.write_text(evaluation.table_csv(report_kind, table), encoding="utf-8")
        outputs.append(csv_path)
    text = evaluation.report(tables)
    (edir / "report.txt").write_text(text, encoding="utf-8")
    (edir / "report.csv").write_text(evaluation.report_csv(tables), encoding="utf-8")
    outputs += [edir / "report.txt", edir / "report.csv"]
    manifest.write_manifest(
        edir / "manifest.json",
        command="eval",
        config={"checkpoints": [str(p) for p in checkpoints]},
        inputs=[_debias_dir(out) / "labels.npz"],
        outputs=outputs,
        seed=None,
    )
    print(text, end="")
    return 0


def cmd_report(args) -> int:
    out = Path(args.out)
    paths = [Path(p) for p in args.metrics] if args.metrics else sorted(
        (out / "eval").glob("metrics-*.csv")
    )
    if not paths:
        raise TalkgradeError("no metrics CSV files to merge")
    tables = {}
    for path in paths:
        tables.update(evaluation.parse_metrics_csv(path.read_text(encoding="utf-8")))
    print(evaluation.report(tables), end="")
    return 0


def cmd_gradcheck(args) -> int:
    kinds = [args.model] if args.model else list(NEURAL_MODELS)
    ok = True
    for kind in kinds:
        reports, max_err = toy_gradcheck(kind, args.seed)
        for name in sorted(reports):
            rep = reports[name]
            status = "ok" if rep.passed else "FAIL"
            print(f"{kind} {name:<8} max rel err {rep.max_rel_err:.3e}  {status}")
        passed = all(r.passed for r in reports.values())
        ok = ok and passed
        print(f"{kind}: {'PASS' if passed else 'FAIL'}, max rel err {max_err:.3e}")
    return 0 if ok else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="talkgrade",
        description="Predict viewer-rating categories of speech transcripts.",
    )
    parser.add_argument("--version", action="version", version=f"talkgrade {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demo", help="write the bundled synthetic demo corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-talks", type=int, default=20)
    p.add_argument("--sentences-per-talk", type=int, default=50)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("ingest", help="validate and bundle a talk corpus")
    p.add_argument("--talks", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--trees")
    p.add_argument("--out", required=True)
    p.add_argument("--min-words", type=int, default=450)
    p.add_argument("--min-age-days", type=int, default=183)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("debias", help="scale ratings, binarize at training medians, audit")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-n", type=int, default=150)
    p.add_argument("--dev-fraction", type=float, default=0.1)
    p.set_defaults(func=cmd_debias)

    p = sub.add_parser("train", help="train one model against the debiased labels")
    p.add_argument("--out", required=True)
    p.add_argument("--model", required=True, choices=ALL_MODELS)
    p.add_argument("--config", help="flat key=value training config file")
    p.add_argument("--unscaled", action="store_true",
                   help="use labels binarized from raw counts (ablation)")
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--pos-dim", type=int, default=32)
    p.add_argument("--dep-dim", type=int, default=32)
    p.add_argument("--lexicon", help="lexicon file (baseline models)")
    p.add_argument("--c", type=float, help="fixed C for baselines (default: dev grid search)")
    p.add_argument("--optimizer", choices=("adagrad", "adam"))
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--weight-drop", type=float)
    p.add_argument("--fc-dropout", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--dev-fraction", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints on the reserved test split")
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoints", nargs="*")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="merge metrics CSVs into the combined report")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", nargs="*")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck", help="verify model gradients against finite differences")
    p.add_argument("--model", choices=NEURAL_MODELS)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TalkgradeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
