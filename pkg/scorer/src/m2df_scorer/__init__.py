"""Deterministic score-file producer for the m2df scheduler."""

from .backends import (
    BackendSpec,
    embed_text_stub,
    extract_aspect_candidates,
    extract_objects_stub,
    make_backend,
)
from .scoring import score_corpus, score_instance

__version__ = "0.1.0"
