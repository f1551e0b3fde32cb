"""Embedding and extraction backends.

The stub backend is fully deterministic and self-contained: text and image
references are embedded by seeding a generator from a SHA-256 digest of each
token, so identical inputs give identical vectors on any machine, with no
model downloads. Aspect candidates are approximated by runs of capitalized
tokens; pseudo visual objects are derived from the opaque image reference.

The external backend loads user-supplied callables for real encoders and
extractors (text-image encoder, object detector, phrase extractor) behind the
same interface.
"""

from __future__ import annotations

import hashlib
import importlib
import sys
from dataclasses import dataclass, field

import numpy as np

DEFAULT_DIM = 64
MAX_STUB_OBJECTS = 3


@dataclass(frozen=True)
class BackendSpec:
    """Which backend to use, and where to find the external callables.

    External callables:
      text_embed(text: str, dim: int) -> sequence of floats
      image_embed(image_ref: str | None, dim: int) -> sequence of floats
      aspect_extract(text: str) -> list of phrase strings
      object_extract(image_ref: str | None) -> list of object label strings
    """

    name: str = "stub"
    dim: int = DEFAULT_DIM
    seed: int = 0
    module: str | None = None
    callables: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in ("stub", "external"):
            raise ValueError(f"backend must be 'stub' or 'external', got {self.name!r}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.name == "external" and not self.module:
            raise ValueError("external backend needs a module path")


def _token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}:{token}".encode("utf-8")).digest()
    gen = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    return gen.standard_normal(dim)


def embed_text_stub(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Unit-norm vector from the hashed token multiset; identical text, identical vector."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    tokens = [t.lower() for t in text.split()] or ["\x00empty"]
    acc = np.zeros(dim)
    for token in tokens:
        acc += _token_vector(token, dim, seed)
    norm = float(np.linalg.norm(acc))
    if norm == 0.0:  # cancellation is possible in principle; re-seed off the whole text
        acc = _token_vector("\x00sum:" + text, dim, seed)
        norm = float(np.linalg.norm(acc))
    return acc / norm


def extract_aspect_candidates(text: str) -> list[str]:
    """Capitalized token runs as noun-phrase proxies; empty for lowercase text.

    Trailing punctuation ends a run, so "Hello, World" yields two candidates.
    """
    phrases: list[str] = []
    current: list[str] = []
    for raw in text.split():
        word = raw.strip(".,;:!?()[]\"'")
        if word and word[0].isupper():
            current.append(word)
            if raw != word and not raw.endswith(word):
                phrases.append(" ".join(current))
                current = []
        else:
            if current:
                phrases.append(" ".join(current))
            current = []
    if current:
        phrases.append(" ".join(current))
    return phrases


def extract_objects_stub(image_ref: str | None) -> list[str]:
    """Pseudo object labels derived from the opaque reference (0 to 3 of them)."""
    if not image_ref:
        return []
    digest = hashlib.sha256(image_ref.encode("utf-8")).digest()
    count = digest[0] % (MAX_STUB_OBJECTS + 1)
    return [f"{image_ref}#obj{i}" for i in range(count)]


class StubBackend:
    """Deterministic hash-based embeddings; no network, no model files."""

    def __init__(self, spec: BackendSpec):
        self.dim = spec.dim
        self.seed = spec.seed

    def text_embed(self, text: str) -> np.ndarray:
        return embed_text_stub(text, self.dim, self.seed)

    def image_embed(self, image_ref: str | None) -> np.ndarray:
        return embed_text_stub(image_ref or "", self.dim, self.seed)

    def aspects(self, text: str) -> list[str]:
        return extract_aspect_candidates(text)

    def objects(self, image_ref: str | None) -> list[str]:
        return extract_objects_stub(image_ref)


class ExternalBackend:
    """Adapter around user-supplied encoder/extractor callables.

    Extractor failures degrade to an empty candidate list (the instance then
    takes the scorer's no-evidence form) with a warning on stderr; embedding
    failures are fatal since no similarity can be produced without them.
    """

    def __init__(self, spec: BackendSpec):
        self.dim = spec.dim
        mod = importlib.import_module(spec.module)
        names = spec.callables
        self._text = getattr(mod, names.get("text_embed", "text_embed"))
        self._image = getattr(mod, names.get("image_embed", "image_embed"))
        self._aspects = getattr(mod, names.get("aspect_extract", "aspect_extract"))
        self._objects = getattr(mod, names.get("object_extract", "object_extract"))

    def text_embed(self, text: str) -> np.ndarray:
        return np.asarray(self._text(text, self.dim), dtype=np.float64)

    def image_embed(self, image_ref: str | None) -> np.ndarray:
        return np.asarray(self._image(image_ref, self.dim), dtype=np.float64)

    def aspects(self, text: str) -> list[str]:
        try:
            return list(self._aspects(text))
        except Exception as exc:
            print(f"m2df-score: warning: aspect extraction failed: {exc}", file=sys.stderr)
            return []

    def objects(self, image_ref: str | None) -> list[str]:
        try:
            return list(self._objects(image_ref))
        except Exception as exc:
            print(f"m2df-score: warning: object extraction failed: {exc}", file=sys.stderr)
            return []


def make_backend(spec: BackendSpec):
    if spec.name == "stub":
        return StubBackend(spec)
    return ExternalBackend(spec)
