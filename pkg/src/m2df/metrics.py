"""Coarse- and fine-grained noise metrics.

Both metrics share one normalization: a raw similarity list is mapped to
``d = 1 - sim / max(sim)`` and clamped to [0, 1], so the most similar
(cleanest-looking) instance gets d = 0 and lower similarity means higher d.
Cosine similarity can be negative, which would make the ratio blow up or
exceed 1; when the maximum is not positive, all similarities are first
shifted by ``1 - max`` (making the maximum exactly 1), which preserves
ordering and keeps the output range.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .dataset_io import RawScoreRecord
from .errors import DegenerateNormalizationError, DomainError

FALLBACK_DC = "dc"
FALLBACK_ONE = "one"


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    """Cosine similarity of two same-dimension vectors, clamped to [-1, 1]."""
    ua = np.asarray(u, dtype=np.float64)
    va = np.asarray(v, dtype=np.float64)
    if ua.ndim != 1 or va.ndim != 1 or ua.shape != va.shape or ua.size == 0:
        raise DomainError(f"cosine needs two equal-dimension vectors, got {ua.shape} and {va.shape}")
    nu = float(np.linalg.norm(ua))
    nv = float(np.linalg.norm(va))
    if nu == 0.0:
        raise DomainError("cosine undefined: first argument has zero norm")
    if nv == 0.0:
        raise DomainError("cosine undefined: second argument has zero norm")
    return float(np.clip(float(ua @ va) / (nu * nv), -1.0, 1.0))


def aggregate_mean(vectors: Sequence[Sequence[float]]) -> np.ndarray:
    """Componentwise arithmetic mean of a non-empty list of same-dimension vectors."""
    if len(vectors) == 0:
        raise DomainError("aggregate_mean needs at least one vector")
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim != 2:
        raise DomainError("aggregate_mean needs vectors of one common dimension")
    return arr.mean(axis=0)


def normalize_similarities(
    sims: Sequence[float], shift_nonpositive: bool = True
) -> list[float]:
    """Map raw similarities to noise values ``1 - sim/max``, clamped to [0, 1].

    When ``max(sims) <= 0`` the ratio is degenerate; with ``shift_nonpositive``
    (the default) all values are shifted by ``1 - max`` first, otherwise a
    DegenerateNormalizationError explains the shift rule.
    """
    if len(sims) == 0:
        raise DomainError("cannot normalize an empty similarity list")
    arr = np.asarray(sims, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError("similarities must be finite")
    mx = float(arr.max())
    if mx <= 0.0:
        if not shift_nonpositive:
            raise DegenerateNormalizationError(
                f"max similarity is {mx}; shift all similarities by 1 - max "
                "(the shift rule) before normalizing"
            )
        arr = arr + (1.0 - mx)
        mx = float(arr.max())  # exactly the shifted maximum, so its d is exactly 0
    d = np.clip(1.0 - arr / mx, 0.0, 1.0)
    return [float(x) for x in d]


def coarse_noise(sims: Sequence[float], shift_nonpositive: bool = True) -> list[float]:
    """Coarse-grained noise values from whole-sentence/whole-image similarities."""
    return normalize_similarities(sims, shift_nonpositive=shift_nonpositive)


def fine_noise(
    records: Sequence[RawScoreRecord],
    fallback_dc: Sequence[float],
    fallback: str = FALLBACK_DC,
) -> list[tuple[float, bool]]:
    """Fine-grained noise values with the missing-aspects/objects fallback.

    Per record the raw similarity is ``fine_sim`` when given, else the cosine
    of the two aggregated vector means. Records with no usable fine evidence
    (no fine_sim, a missing or empty vector list, or a zero-norm mean) are
    flagged and get d_f from the fallback rule instead: the record's d_c
    (``fallback="dc"``), or 1.0 (``fallback="one"``). The normalization max is
    taken over non-fallback records only, so substituted values cannot distort
    it, and fallback values pass through normalization unchanged.
    """
    if fallback not in (FALLBACK_DC, FALLBACK_ONE):
        raise DomainError(f"unknown fallback mode {fallback!r}")
    if len(records) != len(fallback_dc):
        raise DomainError("records and fallback_dc must align by index")

    sims: list[float | None] = []
    for rec in records:
        if rec.fine_sim is not None:
            sims.append(float(rec.fine_sim))
            continue
        if rec.aspect_vectors and rec.object_vectors:
            a_mean = aggregate_mean(rec.aspect_vectors)
            o_mean = aggregate_mean(rec.object_vectors)
            if np.linalg.norm(a_mean) == 0.0 or np.linalg.norm(o_mean) == 0.0:
                sims.append(None)  # aggregation cancelled out: fallback, not a crash
            else:
                sims.append(cosine(a_mean, o_mean))
            continue
        sims.append(None)

    present = [s for s in sims if s is not None]
    normalized = iter(normalize_similarities(present)) if present else iter(())

    out: list[tuple[float, bool]] = []
    for i, s in enumerate(sims):
        if s is None:
            sub = 1.0 if fallback == FALLBACK_ONE else float(fallback_dc[i])
            out.append((min(1.0, max(0.0, sub)), True))
        else:
            out.append((next(normalized), False))
    return out


def score_records(
    records: Sequence[RawScoreRecord], fallback: str = FALLBACK_DC
) -> list[tuple[str, float, float, bool]]:
    """Full pipeline: raw score records -> (id, d_c, d_f, d_f_fallback) rows."""
    d_c = coarse_noise([r.coarse_sim for r in records])
    d_f = fine_noise(records, d_c, fallback=fallback)
    return [(r.id, d_c[i], d_f[i][0], d_f[i][1]) for i, r in enumerate(records)]
