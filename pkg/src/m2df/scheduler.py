"""Single and multiple denoising curricula.

A run drives a learner through batches drawn from the noise-sorted training
set under a pacing schedule. The multiple-curriculum run keeps one step
counter and pacing schedule per noise metric, warms both up, then at every
step trains the curriculum whose validation-F1 progress ratio is currently
largest. Ablation strategies (merge, random, sequential) replace the dynamic
selection with fixed rules.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .dataset_io import ScoredDataset
from .errors import DomainError, M2dfError, StateError
from .pacing import PacingSchedule, eligible, pace, sample_batch

COARSE = "coarse"
FINE = "fine"
MERGED = "merged"
BASELINE = "baseline"

STRATEGIES = (
    "single_coarse",
    "single_fine",
    "multiple_dynamic",
    "merge",
    "random",
    "sequential",
)


class LearnerError(M2dfError):
    """A learner callback failed; carries the step context."""


@dataclass(frozen=True)
class ValidationReport:
    precision: float
    recall: float
    f1: float

    def __post_init__(self):
        if abs(self.f1 - f1(self.precision, self.recall)) > 1e-9:
            raise DomainError(
                f"inconsistent report: f1={self.f1} does not match "
                f"precision={self.precision}, recall={self.recall}"
            )

    @classmethod
    def from_precision_recall(cls, precision: float, recall: float) -> "ValidationReport":
        return cls(precision=precision, recall=recall, f1=f1(precision, recall))


class LearnerPort(Protocol):
    """The abstraction through which any base model consumes the schedule."""

    def train_on(self, batch: Sequence[int]) -> None: ...

    def validate(self) -> ValidationReport: ...


@dataclass
class CurriculumState:
    """Per-curriculum step counter, pacing schedule and progress ratio."""

    metric: str
    schedule: PacingSchedule
    t: int = 0
    s: float | None = None
    last_f1: float | None = None


@dataclass(frozen=True)
class RunConfig:
    batch_size: int
    max_steps: int
    validate_every: int
    strategy: str
    seed: int
    T: int
    p0: float = 0.01
    warmup_steps_per_curriculum: int = 2  # used by multiple_dynamic only
    patience: int = 10

    def __post_init__(self):
        if self.strategy not in STRATEGIES and self.strategy != BASELINE:
            raise DomainError(f"unknown strategy {self.strategy!r}")
        if self.batch_size < 1 or self.max_steps < 1 or self.T < 1:
            raise DomainError("batch_size, max_steps and T must be positive")
        if not 1 <= self.validate_every <= self.max_steps:
            raise DomainError("validate_every must be in [1, max_steps]")
        if self.warmup_steps_per_curriculum < 1:
            raise DomainError("warmup_steps_per_curriculum must be positive")

    def schedule(self) -> PacingSchedule:
        return PacingSchedule(p0=self.p0, T=self.T)


@dataclass(frozen=True)
class StepRecord:
    step: int  # global step index across the whole run
    curriculum: str
    t: int  # the trained curriculum's own counter, as used for pacing
    p: float
    prefix_len: int
    batch: tuple[str, ...]


@dataclass(frozen=True)
class ValidationRecord:
    step: int  # number of steps completed when this validation ran
    precision: float
    recall: float
    f1: float
    s_coarse: float | None = None
    s_fine: float | None = None


@dataclass(frozen=True)
class RunTrace:
    strategy: str
    seed: int
    n_train: int
    events: tuple[StepRecord | ValidationRecord, ...]

    @property
    def steps(self) -> list[StepRecord]:
        return [e for e in self.events if isinstance(e, StepRecord)]

    @property
    def validations(self) -> list[ValidationRecord]:
        return [e for e in self.events if isinstance(e, ValidationRecord)]

    def curriculum_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for s in self.steps:
            counts[s.curriculum] = counts.get(s.curriculum, 0) + 1
        return counts

    def to_jsonl(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(
                json.dumps(
                    {
                        "kind": "header",
                        "strategy": self.strategy,
                        "seed": self.seed,
                        "n_train": self.n_train,
                    }
                )
                + "\n"
            )
            for e in self.events:
                if isinstance(e, StepRecord):
                    obj = {
                        "kind": "step",
                        "step": e.step,
                        "curriculum": e.curriculum,
                        "t": e.t,
                        "p": e.p,
                        "prefix_len": e.prefix_len,
                        "batch": list(e.batch),
                    }
                else:
                    obj = {
                        "kind": "validation",
                        "step": e.step,
                        "precision": e.precision,
                        "recall": e.recall,
                        "f1": e.f1,
                        "s_coarse": e.s_coarse,
                        "s_fine": e.s_fine,
                    }
                fh.write(json.dumps(obj) + "\n")

    @classmethod
    def from_jsonl(cls, path: str) -> "RunTrace":
        header = None
        events: list[StepRecord | ValidationRecord] = []
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise M2dfError(f"{path}:{line_no}: invalid trace line") from exc
                kind = obj.get("kind")
                if kind == "header":
                    header = obj
                elif kind == "step":
                    events.append(
                        StepRecord(
                            step=int(obj["step"]),
                            curriculum=obj["curriculum"],
                            t=int(obj["t"]),
                            p=float(obj["p"]),
                            prefix_len=int(obj["prefix_len"]),
                            batch=tuple(obj["batch"]),
                        )
                    )
                elif kind == "validation":
                    events.append(
                        ValidationRecord(
                            step=int(obj["step"]),
                            precision=float(obj["precision"]),
                            recall=float(obj["recall"]),
                            f1=float(obj["f1"]),
                            s_coarse=obj.get("s_coarse"),
                            s_fine=obj.get("s_fine"),
                        )
                    )
                else:
                    raise M2dfError(f"{path}:{line_no}: unknown trace record kind {kind!r}")
        if header is None:
            raise M2dfError(f"{path}: trace has no header line")
        return cls(
            strategy=header["strategy"],
            seed=int(header["seed"]),
            n_train=int(header["n_train"]),
            events=tuple(events),
        )


def f1(precision: float, recall: float) -> float:
    """2PR/(P+R); 0 when precision + recall is 0."""
    if not (0.0 <= precision <= 1.0) or not (0.0 <= recall <= 1.0):
        raise DomainError(
            f"precision and recall must be in [0,1], got {precision}, {recall}"
        )
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def progress_ratio(current_f1: float, previous_f1: float) -> float:
    """Ratio of two consecutive validation F1 values; +inf when climbing off 0."""
    if current_f1 < 0.0 or previous_f1 < 0.0:
        raise DomainError("F1 values cannot be negative")
    if previous_f1 == 0.0:
        return math.inf if current_f1 > 0.0 else 1.0
    return current_f1 / previous_f1


def select_curriculum(states: Sequence[CurriculumState]) -> int:
    """Argmax over progress ratios; ties go to the earliest state (coarse first)."""
    best = -1
    for i, st in enumerate(states):
        if st.s is None:
            raise StateError(
                f"curriculum {st.metric!r} has no progress ratio yet; complete warmup first"
            )
        if best < 0 or st.s > states[best].s:
            best = i
    return best


def _train(learner: LearnerPort, batch: Sequence[int], step: int, curriculum: str, t: int):
    try:
        learner.train_on(batch)
    except Exception as exc:
        raise LearnerError(
            f"learner failed at step {step} (curriculum {curriculum}, t={t})"
        ) from exc


def _validate(learner: LearnerPort, step: int) -> ValidationReport:
    try:
        return learner.validate()
    except Exception as exc:
        raise LearnerError(f"validation failed after step {step}") from exc


def _batch_ids(dataset: ScoredDataset, batch: Sequence[int]) -> tuple[str, ...]:
    return tuple(dataset.records[i][0].id for i in batch)


def _check_dataset(dataset: ScoredDataset):
    if len(dataset) == 0:
        raise DomainError("cannot run a curriculum on an empty training set")


def _single_loop(
    dataset: ScoredDataset,
    metric: str | None,
    label: str,
    learner: LearnerPort,
    config: RunConfig,
    rng: np.random.Generator,
    track_s: bool = False,
    pick=None,
) -> RunTrace:
    """Shared loop for single-metric, merged, baseline, random and sequential runs.

    ``pick(step) -> metric name`` switches per-step curricula for the
    random/sequential strategies, each paced by its own counter advanced
    after sampling; otherwise one implicit curriculum is paced by the global
    step index. The baseline ignores pacing entirely (p = 1).
    """
    _check_dataset(dataset)
    schedule = config.schedule()
    events: list[StepRecord | ValidationRecord] = []
    states = {
        COARSE: CurriculumState(COARSE, schedule),
        FINE: CurriculumState(FINE, schedule),
    }
    trained_since_validation: set[str] = set()
    prev_f1: float | None = None
    for step in range(config.max_steps):
        if pick is not None:
            st = states[pick(step)]
            t = st.t
            p = pace(t, st.schedule)
            cur = st.metric
            view = eligible(dataset, st.metric, p, min_eligible=config.batch_size)
            st.t += 1
        elif label == BASELINE:
            t = step
            p = 1.0
            cur = BASELINE
            view = eligible(dataset, COARSE, 1.0, min_eligible=config.batch_size)
        else:
            t = step
            p = pace(t, schedule)
            cur = label
            view = eligible(dataset, metric, p, min_eligible=config.batch_size)
        batch = sample_batch(view, config.batch_size, rng)
        _train(learner, batch, step, cur, t)
        events.append(
            StepRecord(
                step=step,
                curriculum=cur,
                t=t,
                p=p,
                prefix_len=view.prefix_len,
                batch=_batch_ids(dataset, batch),
            )
        )
        trained_since_validation.add(cur)
        done = step + 1
        if done % config.validate_every == 0 or done == config.max_steps:
            rep = _validate(learner, done)
            if track_s and prev_f1 is not None:
                for name in trained_since_validation:
                    if name in states:
                        states[name].s = progress_ratio(rep.f1, prev_f1)
                        states[name].last_f1 = rep.f1
            prev_f1 = rep.f1
            trained_since_validation.clear()
            events.append(
                ValidationRecord(
                    step=done,
                    precision=rep.precision,
                    recall=rep.recall,
                    f1=rep.f1,
                    s_coarse=states[COARSE].s,
                    s_fine=states[FINE].s,
                )
            )
    return RunTrace(
        strategy=config.strategy, seed=config.seed, n_train=len(dataset), events=tuple(events)
    )


def run_single(
    dataset: ScoredDataset,
    metric: str,
    learner: LearnerPort,
    config: RunConfig,
    rng: np.random.Generator | None = None,
) -> RunTrace:
    """Single denoising curriculum over one noise metric."""
    if config.strategy not in ("single_coarse", "single_fine"):
        raise DomainError(f"run_single expects a single_* strategy, got {config.strategy!r}")
    if metric not in (COARSE, FINE):
        raise DomainError(f"run_single metric must be coarse or fine, got {metric!r}")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    return _single_loop(dataset, metric, metric, learner, config, rng)


def run_baseline(
    dataset: ScoredDataset,
    learner: LearnerPort,
    config: RunConfig,
    rng: np.random.Generator | None = None,
) -> RunTrace:
    """No curriculum: batches sampled uniformly from the full training set."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    return _single_loop(dataset, None, BASELINE, learner, config, rng)


def run_multiple(
    dataset: ScoredDataset,
    learner: LearnerPort,
    config: RunConfig,
    rng: np.random.Generator | None = None,
) -> RunTrace:
    """Dynamic selection between the coarse and fine denoising curricula.

    Phase 1 warms up each curriculum in order (coarse, then fine) under its
    own counter, validating before and after each block to initialize the
    progress ratios. Phase 2 repeatedly trains the argmax-ratio curriculum,
    incrementing its counter before sampling, and refreshes the trained
    curriculum's ratio at every validation turn. Stops at max_steps (warmup
    included) or when validation F1 has not improved for ``patience`` turns.
    """
    if config.strategy != "multiple_dynamic":
        raise DomainError(f"run_multiple expects multiple_dynamic, got {config.strategy!r}")
    _check_dataset(dataset)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    schedule = config.schedule()
    states = [CurriculumState(COARSE, schedule), CurriculumState(FINE, schedule)]
    events: list[StepRecord | ValidationRecord] = []
    total = 0

    rep = _validate(learner, total)
    prev_f1 = rep.f1
    best_f1 = rep.f1
    events.append(
        ValidationRecord(
            step=0, precision=rep.precision, recall=rep.recall, f1=rep.f1,
            s_coarse=None, s_fine=None,
        )
    )

    # Phase 1: warmup, one block per curriculum, each under its own counter.
    for st in states:
        for _ in range(config.warmup_steps_per_curriculum):
            if total >= config.max_steps:
                break
            p = pace(st.t, st.schedule)
            view = eligible(dataset, st.metric, p, min_eligible=config.batch_size)
            batch = sample_batch(view, config.batch_size, rng)
            _train(learner, batch, total, st.metric, st.t)
            events.append(
                StepRecord(
                    step=total, curriculum=st.metric, t=st.t, p=p,
                    prefix_len=view.prefix_len, batch=_batch_ids(dataset, batch),
                )
            )
            st.t += 1
            total += 1
        rep = _validate(learner, total)
        st.s = progress_ratio(rep.f1, prev_f1)
        st.last_f1 = rep.f1
        prev_f1 = rep.f1
        best_f1 = max(best_f1, rep.f1)
        events.append(
            ValidationRecord(
                step=total, precision=rep.precision, recall=rep.recall, f1=rep.f1,
                s_coarse=states[0].s, s_fine=states[1].s,
            )
        )

    # Phase 2: dynamically select the curriculum with the largest ratio.
    trained: set[int] = set()
    since_validation = 0
    stale = 0
    while total < config.max_steps:
        j = select_curriculum(states)
        st = states[j]
        st.t += 1  # counter advances before sampling
        p = pace(st.t, st.schedule)
        view = eligible(dataset, st.metric, p, min_eligible=config.batch_size)
        batch = sample_batch(view, config.batch_size, rng)
        _train(learner, batch, total, st.metric, st.t)
        events.append(
            StepRecord(
                step=total, curriculum=st.metric, t=st.t, p=p,
                prefix_len=view.prefix_len, batch=_batch_ids(dataset, batch),
            )
        )
        trained.add(j)
        total += 1
        since_validation += 1
        if since_validation >= config.validate_every or total >= config.max_steps:
            rep = _validate(learner, total)
            for k in trained:
                states[k].s = progress_ratio(rep.f1, prev_f1)
                states[k].last_f1 = rep.f1
            prev_f1 = rep.f1
            trained.clear()
            since_validation = 0
            events.append(
                ValidationRecord(
                    step=total, precision=rep.precision, recall=rep.recall, f1=rep.f1,
                    s_coarse=states[0].s, s_fine=states[1].s,
                )
            )
            if rep.f1 > best_f1:
                best_f1 = rep.f1
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    return RunTrace(
        strategy=config.strategy, seed=config.seed, n_train=len(dataset), events=tuple(events)
    )


def run_ablation(
    dataset: ScoredDataset,
    learner: LearnerPort,
    config: RunConfig,
    rng: np.random.Generator | None = None,
) -> RunTrace:
    """Merge, random and sequential multi-curriculum strategies.

    merge runs the single-curriculum loop on (d_c + d_f)/2; random picks a
    curriculum uniformly at each step; sequential alternates coarse, fine.
    Random and sequential pace each curriculum by its own counter, advanced
    after sampling.
    """
    if config.strategy not in ("merge", "random", "sequential"):
        raise DomainError(f"run_ablation expects merge/random/sequential, got {config.strategy!r}")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if config.strategy == "merge":
        return _single_loop(dataset, MERGED, MERGED, learner, config, rng)

    if config.strategy == "random":
        def pick(step: int) -> str:
            return COARSE if int(rng.integers(0, 2)) == 0 else FINE
    else:
        def pick(step: int) -> str:
            return COARSE if step % 2 == 0 else FINE

    return _single_loop(dataset, None, config.strategy, learner, config, rng,
                        track_s=True, pick=pick)


def run_strategy(
    dataset: ScoredDataset,
    learner: LearnerPort,
    config: RunConfig,
    rng: np.random.Generator | None = None,
) -> RunTrace:
    """Dispatch a run by config.strategy (including the no-curriculum baseline)."""
    if config.strategy == "single_coarse":
        return run_single(dataset, COARSE, learner, config, rng)
    if config.strategy == "single_fine":
        return run_single(dataset, FINE, learner, config, rng)
    if config.strategy == "multiple_dynamic":
        return run_multiple(dataset, learner, config, rng)
    if config.strategy == BASELINE:
        return run_baseline(dataset, learner, config, rng)
    return run_ablation(dataset, learner, config, rng)
