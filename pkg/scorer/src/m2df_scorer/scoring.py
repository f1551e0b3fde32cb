"""Corpus scoring: manifest.jsonl in, scores.jsonl out.

Emitted records follow the scheduler's score-file contract: every line has
id and coarse_sim; lines for instances with at least one aspect candidate
and one visual object also carry the two embedding lists, and instances
missing either side are written in the bare form that triggers the
scheduler's fine-metric fallback.
"""

from __future__ import annotations

import json

import numpy as np

from .backends import BackendSpec, make_backend


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for zero-norm vectors")
    return float(np.clip(float(u @ v) / (nu * nv), -1.0, 1.0))


def load_manifest(path: str) -> list[dict]:
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON: {exc.msg}") from exc
            if "id" not in obj:
                raise ValueError(f"{path}:{line_no}: record has no id")
            if obj["id"] in seen:
                raise ValueError(f"{path}:{line_no}: duplicate id {obj['id']!r}")
            seen.add(obj["id"])
            records.append(obj)
    return records


def score_instance(record: dict, backend) -> dict:
    text = record.get("text") or ""
    image_ref = record.get("image_ref")
    text_vec = backend.text_embed(text)
    image_vec = backend.image_embed(image_ref)
    out: dict = {"id": record["id"], "coarse_sim": cosine(text_vec, image_vec)}

    aspects = backend.aspects(text)
    objects = backend.objects(image_ref)
    if aspects and objects:
        out["aspect_vectors"] = [[float(x) for x in backend.text_embed(a)] for a in aspects]
        out["object_vectors"] = [[float(x) for x in backend.text_embed(o)] for o in objects]
    return out


def score_corpus(manifest_path: str, spec: BackendSpec, out_path: str) -> int:
    """Score every manifest instance; returns the number of records written."""
    records = load_manifest(manifest_path)
    backend = make_backend(spec)
    with open(out_path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(score_instance(record, backend)) + "\n")
    return len(records)
