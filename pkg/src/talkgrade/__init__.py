"""Rating-category prediction for public-speech transcripts.

Pipeline stages: ingest a talk corpus, debias the rating counts, train a
sentence-sequence or dependency-tree model (or a lexicon baseline), and
evaluate per-category metrics on a held-out test split.
"""

__version__ = "0.1.0"
