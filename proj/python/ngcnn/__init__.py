"""NgramCNN sentiment classification, affect-lexicon labeling and tag annotation."""

import json

from ._core import (
    AffectLexicon,
    ArgumentError,
    CheckpointError,
    Config,
    EmbeddingTable,
    InputError,
    Model,
    ShapeError,
    annotate_4q,
    annotate_pn,
    clean,
    cosine,
    count_tags,
    derive_seed,
    gradcheck,
    read_corpus,
    split,
)

__version__ = "0.1.0"


def purity_audit(rule="4q", max_total=40):
    """Exhaustive purity audit of an annotation rule, as a dict."""
    return json.loads(_core._purity_audit_json(rule, max_total))


from . import _core  # noqa: E402

__all__ = [
    "AffectLexicon",
    "ArgumentError",
    "CheckpointError",
    "Config",
    "EmbeddingTable",
    "InputError",
    "Model",
    "ShapeError",
    "annotate_4q",
    "annotate_pn",
    "clean",
    "cosine",
    "count_tags",
    "derive_seed",
    "gradcheck",
    "purity_audit",
    "read_corpus",
    "split",
]
