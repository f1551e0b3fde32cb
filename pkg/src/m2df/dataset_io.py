"""Loading, validation and persistence of instance manifests, raw similarity
scores and normalized noise scores.

All three on-disk formats are line-delimited JSON, one record per line:

* ``manifest.jsonl`` -- id, text, image_ref, split
* ``scores.jsonl``   -- id, coarse_sim, and one of fine_sim | (aspect_vectors,
  object_vectors) | neither
* ``noise.jsonl``    -- id, d_c, d_f, d_f_fallback
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .errors import ParseError, ValidationError

SPLITS = ("train", "dev", "test")
METRICS = ("coarse", "fine", "merged")


@dataclass(frozen=True)
class InstanceRecord:
    id: str
    text: str
    image_ref: str | None
    split: str


@dataclass(frozen=True)
class RawScoreRecord:
    """Raw similarity inputs for one instance.

    Exactly one of these shapes holds: ``fine_sim`` given, both vector lists
    given, or neither (the instance is then subject to the fine-metric
    fallback rule).
    """

    id: str
    coarse_sim: float
    aspect_vectors: tuple[tuple[float, ...], ...] | None = None
    object_vectors: tuple[tuple[float, ...], ...] | None = None
    fine_sim: float | None = None


@dataclass(frozen=True)
class NoiseScores:
    id: str
    d_c: float
    d_f: float
    d_f_fallback: bool = False


@dataclass(frozen=True)
class ScoredDataset:
    """Immutable training set paired with noise scores and sort permutations.

    ``sorted_by_dc`` / ``sorted_by_df`` are permutations of record indices,
    ascending by the metric value with ties broken by ascending id.
    """

    records: tuple[tuple[InstanceRecord, NoiseScores], ...]
    sorted_by_dc: tuple[int, ...]
    sorted_by_df: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.records)

    @cached_property
    def merged_values(self) -> tuple[float, ...]:
        # (d_c + d_f) / 2, re-clamped so pacing thresholds keep their [0,1] meaning
        return tuple(
            min(1.0, max(0.0, (s.d_c + s.d_f) / 2.0)) for _, s in self.records
        )

    @cached_property
    def sorted_by_dm(self) -> tuple[int, ...]:
        vals = self.merged_values
        return tuple(
            sorted(range(len(self.records)), key=lambda i: (vals[i], self.records[i][0].id))
        )

    @cached_property
    def coarse_values(self) -> tuple[float, ...]:
        return tuple(s.d_c for _, s in self.records)

    @cached_property
    def fine_values(self) -> tuple[float, ...]:
        return tuple(s.d_f for _, s in self.records)

    def values(self, metric: str) -> tuple[float, ...]:
        """Per-record noise values for a metric, in record order."""
        if metric == "coarse":
            return self.coarse_values
        if metric == "fine":
            return self.fine_values
        if metric == "merged":
            return self.merged_values
        raise ValueError(f"unknown metric {metric!r}")

    @cached_property
    def _sorted_values(self) -> dict[str, list[float]]:
        out = {}
        for metric in METRICS:
            vals = self.values(metric)
            out[metric] = [vals[i] for i in self.permutation(metric)]
        return out

    def sorted_values(self, metric: str) -> list[float]:
        """Metric values along the metric's own permutation (nondecreasing)."""
        return self._sorted_values[metric]

    def permutation(self, metric: str) -> tuple[int, ...]:
        if metric == "coarse":
            return self.sorted_by_dc
        if metric == "fine":
            return self.sorted_by_df
        if metric == "merged":
            return self.sorted_by_dm
        raise ValueError(f"unknown metric {metric!r}")

    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r, _ in self.records)


def _read_jsonl(path: str) -> Iterable[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise ParseError(path, line_no, "expected a JSON object")
            yield line_no, obj


def load_manifest(path: str) -> list[InstanceRecord]:
    """Load instance records in file order; duplicate ids are rejected."""
    records: list[InstanceRecord] = []
    seen: set[str] = set()
    for line_no, obj in _read_jsonl(path):
        try:
            rid = obj["id"]
            text = obj.get("text", "")
            image_ref = obj.get("image_ref")
            split = obj["split"]
        except KeyError as exc:
            raise ParseError(path, line_no, f"missing field {exc.args[0]!r}") from exc
        if not isinstance(rid, str) or not rid:
            raise ParseError(path, line_no, "id must be a non-empty string")
        if rid in seen:
            raise ValidationError(f"duplicate id {rid!r} at {path}:{line_no}")
        if split not in SPLITS:
            raise ValidationError(
                f"instance {rid!r}: split must be one of {SPLITS}, got {split!r}"
            )
        if image_ref is not None and not isinstance(image_ref, str):
            raise ParseError(path, line_no, "image_ref must be a string or null")
        seen.add(rid)
        records.append(InstanceRecord(id=rid, text=str(text), image_ref=image_ref, split=split))
    return records


def _as_vectors(raw, rid: str, field: str) -> tuple[tuple[float, ...], ...]:
    if not isinstance(raw, list):
        raise ValidationError(f"instance {rid!r}: {field} must be a list of vectors")
    vecs = []
    for vec in raw:
        if not isinstance(vec, list) or not vec:
            raise ValidationError(f"instance {rid!r}: {field} entries must be non-empty lists")
        vecs.append(tuple(float(x) for x in vec))
    return tuple(vecs)


def load_scores(path: str, manifest: Sequence[InstanceRecord]) -> list[RawScoreRecord]:
    """Load raw score records; every id must reference a manifest instance."""
    known = {r.id for r in manifest}
    records: list[RawScoreRecord] = []
    seen: set[str] = set()
    for line_no, obj in _read_jsonl(path):
        if "id" not in obj or "coarse_sim" not in obj:
            raise ParseError(path, line_no, "record needs 'id' and 'coarse_sim'")
        rid = obj["id"]
        if rid not in known:
            raise ValidationError(f"score references unknown id {rid!r} at {path}:{line_no}")
        if rid in seen:
            raise ValidationError(f"duplicate score for id {rid!r} at {path}:{line_no}")
        seen.add(rid)
        coarse = float(obj["coarse_sim"])
        if not -1.0 <= coarse <= 1.0:
            raise ValidationError(f"instance {rid!r}: coarse_sim {coarse} outside [-1,1]")

        fine = obj.get("fine_sim")
        aspects = obj.get("aspect_vectors")
        objects = obj.get("object_vectors")
        if fine is not None and (aspects is not None or objects is not None):
            raise ValidationError(
                f"instance {rid!r}: fine_sim and vector lists are mutually exclusive"
            )
        if (aspects is None) != (objects is None):
            raise ValidationError(
                f"instance {rid!r}: aspect_vectors and object_vectors must be given together"
            )

        if fine is not None:
            fine = float(fine)
            if not -1.0 <= fine <= 1.0:
                raise ValidationError(f"instance {rid!r}: fine_sim {fine} outside [-1,1]")
            records.append(RawScoreRecord(id=rid, coarse_sim=coarse, fine_sim=fine))
            continue

        if aspects is not None:
            avecs = _as_vectors(aspects, rid, "aspect_vectors")
            ovecs = _as_vectors(objects, rid, "object_vectors")
            dims = {len(v) for v in avecs} | {len(v) for v in ovecs}
            if len(dims) > 1:
                raise ValidationError(
                    f"instance {rid!r}: mixed vector dimensions {sorted(dims)}"
                )
            if not avecs and not ovecs:
                # extractor found nothing on either side: fallback form
                records.append(RawScoreRecord(id=rid, coarse_sim=coarse))
            else:
                records.append(
                    RawScoreRecord(
                        id=rid, coarse_sim=coarse, aspect_vectors=avecs, object_vectors=ovecs
                    )
                )
            continue

        records.append(RawScoreRecord(id=rid, coarse_sim=coarse))
    return records


def load_noise(path: str) -> list[NoiseScores]:
    records: list[NoiseScores] = []
    seen: set[str] = set()
    for line_no, obj in _read_jsonl(path):
        try:
            rid = obj["id"]
            d_c = float(obj["d_c"])
            d_f = float(obj["d_f"])
        except KeyError as exc:
            raise ParseError(path, line_no, f"missing field {exc.args[0]!r}") from exc
        if rid in seen:
            raise ValidationError(f"duplicate noise record for id {rid!r} at {path}:{line_no}")
        seen.add(rid)
        for name, val in (("d_c", d_c), ("d_f", d_f)):
            if not 0.0 <= val <= 1.0:
                raise ValidationError(f"instance {rid!r}: {name} {val} outside [0,1]")
        records.append(
            NoiseScores(id=rid, d_c=d_c, d_f=d_f, d_f_fallback=bool(obj.get("d_f_fallback", False)))
        )
    return records


def write_manifest(path: str, records: Iterable[InstanceRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {"id": r.id, "text": r.text, "image_ref": r.image_ref, "split": r.split}
                )
                + "\n"
            )


def write_scores(path: str, records: Iterable[RawScoreRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj: dict = {"id": r.id, "coarse_sim": r.coarse_sim}
            if r.fine_sim is not None:
                obj["fine_sim"] = r.fine_sim
            elif r.aspect_vectors is not None:
                obj["aspect_vectors"] = [list(v) for v in r.aspect_vectors]
                obj["object_vectors"] = [list(v) for v in r.object_vectors or ()]
            fh.write(json.dumps(obj) + "\n")


def write_noise(path: str, records: Iterable[NoiseScores]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {"id": r.id, "d_c": r.d_c, "d_f": r.d_f, "d_f_fallback": r.d_f_fallback}
                )
                + "\n"
            )


def build_scored_dataset(
    records: Sequence[InstanceRecord], scores: Mapping[str, NoiseScores]
) -> ScoredDataset:
    """Pair train-split records with their noise scores and sort both ways.

    Ties on equal noise values are broken by ascending id so that two builds
    from the same inputs always produce identical permutations.
    """
    train = [r for r in records if r.split == "train"]
    paired: list[tuple[InstanceRecord, NoiseScores]] = []
    for r in train:
        if r.id not in scores:
            raise ValidationError(f"missing noise score for train instance {r.id!r}")
        paired.append((r, scores[r.id]))
    by_dc = sorted(range(len(paired)), key=lambda i: (paired[i][1].d_c, paired[i][0].id))
    by_df = sorted(range(len(paired)), key=lambda i: (paired[i][1].d_f, paired[i][0].id))
    return ScoredDataset(
        records=tuple(paired), sorted_by_dc=tuple(by_dc), sorted_by_df=tuple(by_df)
    )
