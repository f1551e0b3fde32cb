"""Synthetic noisy-corpus generator, toy online learner and experiment harness.

The toy task is binary classification with a known per-instance noise level.
Each instance has a "text" feature block that always carries the label signal
and an "image" block whose signal fades linearly with the noise level; the
training label is flipped with probability noise_strength * level. Emitted
coarse/fine similarities are 1 - level plus independent bounded jitter, so
the two noise metrics are informative but imperfect in independent ways.

Dev instances are always clean; test instances carry noise levels (and the
feature fade) but keep their true labels, so test F1 stratified by noise
level measures real model quality per noise band.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import metrics, scheduler
from .dataset_io import (
    InstanceRecord,
    NoiseScores,
    RawScoreRecord,
    ScoredDataset,
    build_scored_dataset,
)
from .errors import DomainError
from .scheduler import (
    BASELINE,
    STRATEGIES,
    RunConfig,
    RunTrace,
    ValidationReport,
    run_strategy,
)

ALL_STRATEGIES = STRATEGIES + (BASELINE,)
NOISE_BINS = ("level-1", "level-2", "level-3")


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator knobs; split sizes default to the reference corpus statistics."""

    n_train: int = 3179
    n_dev: int = 1122
    n_test: int = 1037
    feature_dim: int = 16
    noise_fraction: float = 0.3
    noise_strength: float = 1.0
    seed: int = 0
    jitter: float = 0.05

    def __post_init__(self):
        if min(self.n_train, self.n_dev, self.n_test) < 1:
            raise DomainError("split sizes must be >= 1")
        if self.feature_dim < 2:
            raise DomainError("feature_dim must be >= 2")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise DomainError("noise_fraction must be in [0,1]")
        if self.noise_strength < 0.0:
            raise DomainError("noise_strength must be >= 0")


@dataclass(frozen=True)
class SyntheticInstance:
    id: str
    split: str
    features: tuple[float, ...]
    label: int  # observed label (train labels may be flipped)
    true_label: int
    true_noise_level: float
    coarse_sim: float
    fine_sim: float


@dataclass(frozen=True)
class GroundTruth:
    instances: tuple[SyntheticInstance, ...]

    def split(self, name: str) -> list[SyntheticInstance]:
        return [inst for inst in self.instances if inst.split == name]


# class-signal magnitudes relative to unit feature noise; the combined margin
# keeps clean instances nearly separable, where label flips drag a logistic
# learner hardest, while faded-image instances stay genuinely hard
TEXT_MARGIN = 1.2
IMAGE_MARGIN = 1.4


def _emit_similarity(level: np.ndarray, rng: np.random.Generator, cfg: SyntheticConfig) -> np.ndarray:
    """1 - level + uniform jitter, clamped to [-1, 1]."""
    jitter = rng.uniform(-cfg.jitter, cfg.jitter, size=level.shape[0])
    return np.clip(1.0 - level + jitter, -1.0, 1.0)


def generate(config: SyntheticConfig):
    """Draw a synthetic corpus; returns (manifest, scores, ground_truth).

    Fully determined by config.seed: identical configs give byte-identical
    manifest/score files.
    """
    rng = np.random.default_rng(config.seed)
    d = config.feature_dim
    d_text = d // 2

    mu_text = rng.normal(size=d_text)
    mu_text /= np.linalg.norm(mu_text)
    mu_image = rng.normal(size=d - d_text)
    mu_image /= np.linalg.norm(mu_image)

    manifest: list[InstanceRecord] = []
    scores: list[RawScoreRecord] = []
    instances: list[SyntheticInstance] = []

    for split, count, noisy_split in (
        ("train", config.n_train, True),
        ("dev", config.n_dev, False),
        ("test", config.n_test, True),
    ):
        n = count
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        if noisy_split:
            noisy = rng.random(n) < config.noise_fraction
            level = np.where(noisy, rng.uniform(0.0, 1.0, size=n), 0.0)
            # uniform over (0,1]: remap any exact zeros drawn for noisy rows
            level[noisy & (level == 0.0)] = 1.0
        else:
            level = np.zeros(n)

        noise = rng.normal(size=(n, d))
        feats = noise.copy()
        feats[:, :d_text] += TEXT_MARGIN * sign[:, None] * mu_text[None, :]
        feats[:, d_text:] += (
            IMAGE_MARGIN * ((1.0 - level) * sign)[:, None] * mu_image[None, :]
        )

        true_label = (sign > 0).astype(int)
        observed = true_label.copy()
        if split == "train" and config.noise_strength > 0.0:
            flip = rng.random(n) < config.noise_strength * level
            observed = np.where(flip, 1 - observed, observed)

        coarse_sim = _emit_similarity(level, rng, config)
        fine_sim = _emit_similarity(level, rng, config)

        for i in range(n):
            rid = f"{split}-{i:05d}"
            manifest.append(InstanceRecord(id=rid, text="", image_ref=None, split=split))
            scores.append(
                RawScoreRecord(
                    id=rid,
                    coarse_sim=float(coarse_sim[i]),
                    fine_sim=float(fine_sim[i]),
                )
            )
            instances.append(
                SyntheticInstance(
                    id=rid,
                    split=split,
                    features=tuple(float(x) for x in feats[i]),
                    label=int(observed[i]),
                    true_label=int(true_label[i]),
                    true_noise_level=float(level[i]),
                    coarse_sim=float(coarse_sim[i]),
                    fine_sim=float(fine_sim[i]),
                )
            )

    return manifest, scores, GroundTruth(instances=tuple(instances))


def precision_recall_f1(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float, float]:
    """Positive-class precision/recall/F1 for binary predictions."""
    tp = float(np.sum((pred == 1) & (truth == 1)))
    fp = float(np.sum((pred == 1) & (truth == 0)))
    fn = float(np.sum((pred == 0) & (truth == 1)))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return precision, recall, scheduler.f1(precision, recall)


class ToyLearner:
    """Online logistic classifier with a decaying step size.

    Deterministic: given the same batch sequence it reproduces the same
    weights exactly. The decaying step size makes early (curriculum-ordered)
    batches weigh more in the final model, as in real annealed training.
    """

    def __init__(
        self,
        train_features: np.ndarray,
        train_labels: np.ndarray,
        dev_features: np.ndarray,
        dev_labels: np.ndarray,
        lr0: float = 0.5,
        lr_decay_steps: float = 25.0,
    ):
        self.train_features = np.asarray(train_features, dtype=np.float64)
        self.train_labels = np.asarray(train_labels, dtype=np.float64)
        self.dev_features = np.asarray(dev_features, dtype=np.float64)
        self.dev_labels = np.asarray(dev_labels, dtype=np.int64)
        self.lr0 = lr0
        self.lr_decay_steps = lr_decay_steps
        self.weights = np.zeros(self.train_features.shape[1], dtype=np.float64)
        self.bias = 0.0
        self.steps_taken = 0

    def train_on(self, batch: Sequence[int]) -> None:
        idx = np.asarray(batch, dtype=np.int64)
        x = self.train_features[idx]
        y = self.train_labels[idx]
        z = x @ self.weights + self.bias
        prob = 1.0 / (1.0 + np.exp(-z))
        err = prob - y
        lr = self.lr0 / (1.0 + self.steps_taken / self.lr_decay_steps)
        self.weights -= lr * (x.T @ err) / len(idx)
        self.bias -= lr * float(err.mean())
        self.steps_taken += 1

    def predict(self, features: np.ndarray) -> np.ndarray:
        return (features @ self.weights + self.bias >= 0.0).astype(int)

    def validate(self) -> ValidationReport:
        p, r, _ = precision_recall_f1(self.predict(self.dev_features), self.dev_labels)
        return ValidationReport.from_precision_recall(p, r)


@dataclass(frozen=True)
class RunResult:
    strategy: str
    replicate: int
    final_dev_f1: float
    test_f1: float
    bin_f1: tuple[float, float, float]
    steps_taken: int
    curve: tuple[tuple[int, float], ...]  # (step, dev F1) validation series


@dataclass(frozen=True)
class ExperimentReport:
    config: SyntheticConfig
    run_config: RunConfig
    strategies: tuple[str, ...]
    replicates: int
    bin_metric: str
    runs: tuple[RunResult, ...]

    def results_for(self, strategy: str) -> list[RunResult]:
        return sorted(
            (r for r in self.runs if r.strategy == strategy), key=lambda r: r.replicate
        )

    def mean_dev_f1(self, strategy: str) -> float:
        return float(np.mean([r.final_dev_f1 for r in self.results_for(strategy)]))

    def paired_deltas(self, strategy: str, base: str = BASELINE) -> list[float]:
        ours = self.results_for(strategy)
        theirs = self.results_for(base)
        return [a.final_dev_f1 - b.final_dev_f1 for a, b in zip(ours, theirs)]

    def bin_deltas(self, strategy: str, base: str = BASELINE) -> list[float]:
        """Mean test-F1 improvement over the baseline per noise bin."""
        ours = self.results_for(strategy)
        theirs = self.results_for(base)
        deltas = np.array([a.bin_f1 for a in ours]) - np.array([b.bin_f1 for b in theirs])
        return [float(x) for x in deltas.mean(axis=0)]

    def to_rows(self) -> list[dict]:
        """One row per strategy x replicate x bin, stable-ordered."""
        rows = []
        for strategy in sorted(set(r.strategy for r in self.runs)):
            for res in self.results_for(strategy):
                rows.append(
                    {
                        "strategy": strategy,
                        "replicate": res.replicate,
                        "bin": "dev",
                        "f1": res.final_dev_f1,
                    }
                )
                rows.append(
                    {
                        "strategy": strategy,
                        "replicate": res.replicate,
                        "bin": "test-all",
                        "f1": res.test_f1,
                    }
                )
                for name, val in zip(NOISE_BINS, res.bin_f1):
                    rows.append(
                        {
                            "strategy": strategy,
                            "replicate": res.replicate,
                            "bin": name,
                            "f1": val,
                        }
                    )
        return rows

    def to_json(self) -> str:
        obj = {
            "synthetic_config": self.config.__dict__ | {},
            "run_config": self.run_config.__dict__ | {},
            "strategies": list(self.strategies),
            "replicates": self.replicates,
            "bin_metric": self.bin_metric,
            "runs": [
                {
                    "strategy": r.strategy,
                    "replicate": r.replicate,
                    "final_dev_f1": r.final_dev_f1,
                    "test_f1": r.test_f1,
                    "bin_f1": list(r.bin_f1),
                    "steps_taken": r.steps_taken,
                    "curve": [list(point) for point in r.curve],
                }
                for r in sorted(self.runs, key=lambda r: (r.strategy, r.replicate))
            ],
        }
        return json.dumps(obj, indent=2)

    def to_text(self) -> str:
        lines = []
        lines.append("strategy means (final dev F1 / test F1), stddev over replicates")
        lines.append(f"  replicates: {self.replicates}   bin metric: {self.bin_metric}")
        lines.append("")
        lines.append(f"  {'strategy':<18} {'dev F1':>8} {'+/-':>7} {'test F1':>8} {'+/-':>7}")
        names = sorted(set(r.strategy for r in self.runs))
        for name in names:
            res = self.results_for(name)
            dev = np.array([r.final_dev_f1 for r in res])
            test = np.array([r.test_f1 for r in res])
            dev_sd = float(dev.std(ddof=1)) if len(dev) > 1 else 0.0
            test_sd = float(test.std(ddof=1)) if len(test) > 1 else 0.0
            lines.append(
                f"  {name:<18} {dev.mean():>8.4f} {dev_sd:>7.4f} {test.mean():>8.4f} {test_sd:>7.4f}"
            )
        if BASELINE in names:
            others = [n for n in names if n != BASELINE]
            if others:
                lines.append("")
                lines.append("paired deltas vs baseline (final dev F1)")
                lines.append(
                    f"  {'strategy':<18} {'mean':>8} {'wins':>6}  per-bin test-F1 delta "
                    + "/".join(NOISE_BINS)
                )
                for name in others:
                    deltas = self.paired_deltas(name)
                    wins = sum(1 for x in deltas if x > 0)
                    bins = self.bin_deltas(name)
                    bins_txt = " ".join(f"{b:+.4f}" for b in bins)
                    lines.append(
                        f"  {name:<18} {float(np.mean(deltas)):>+8.4f} "
                        f"{wins:>3}/{len(deltas):<2}  {bins_txt}"
                    )
        lines.append("")
        return "\n".join(lines)


def default_run_config(strategy: str, seed: int) -> RunConfig:
    """Run parameters used by the experiment harness unless overridden.

    T equals max_steps: a single curriculum finishes its pacing exactly at the
    end of training, while multi-curriculum runs, whose per-curriculum
    counters advance only when selected, keep training on a cleaner prefix
    throughout.
    """
    return RunConfig(
        batch_size=32,
        max_steps=600,
        validate_every=10,
        strategy=strategy,
        seed=seed,
        T=600,
        p0=0.01,
        warmup_steps_per_curriculum=2,
        patience=10,
    )


def _dataset_from_truth(
    manifest: Sequence[InstanceRecord],
    scores: Sequence[RawScoreRecord],
    fallback: str = metrics.FALLBACK_DC,
) -> ScoredDataset:
    """Run the real metric pipeline over the train split and sort."""
    by_id = {s.id: s for s in scores}
    train_records = [r for r in manifest if r.split == "train"]
    train_scores = [by_id[r.id] for r in train_records]
    rows = metrics.score_records(train_scores, fallback=fallback)
    noise = {
        rid: NoiseScores(id=rid, d_c=d_c, d_f=d_f, d_f_fallback=fb)
        for rid, d_c, d_f, fb in rows
    }
    return build_scored_dataset(train_records, noise)


def _noise_bins(test_sims: np.ndarray, n_bins: int = 3) -> list[np.ndarray]:
    """Equal-size index bins of the test set, sorted by noise value ascending."""
    d = metrics.coarse_noise([float(x) for x in test_sims])
    order = np.argsort(np.asarray(d), kind="stable")
    return [np.sort(part) for part in np.array_split(order, n_bins)]


def run_experiment(
    config: SyntheticConfig,
    strategies: Sequence[str],
    replicates: int,
    run_config: RunConfig | None = None,
    bin_metric: str = "coarse",
    keep_traces: bool = False,
) -> ExperimentReport | tuple[ExperimentReport, dict]:
    """Paired strategy comparison over seeded replicates.

    Each replicate draws one corpus (shared by all strategies) and trains one
    fresh learner per strategy. Results carry final dev F1, overall test F1
    and test F1 per noise bin (test set split into three equal-size bins by
    the chosen emitted noise metric, cleanest to noisiest).
    """
    if replicates < 1:
        raise DomainError("replicates must be >= 1")
    if bin_metric not in ("coarse", "fine"):
        raise DomainError(f"bin_metric must be coarse or fine, got {bin_metric!r}")
    for s in strategies:
        if s not in ALL_STRATEGIES:
            raise DomainError(f"unknown strategy {s!r}; choose from {ALL_STRATEGIES}")
    if len(set(strategies)) != len(strategies):
        raise DomainError("strategies must be unique")

    runs: list[RunResult] = []
    traces: dict[tuple[str, int], RunTrace] = {}
    for rep in range(replicates):
        data_cfg = replace(config, seed=config.seed + rep)
        manifest, scores, truth = generate(data_cfg)
        dataset = _dataset_from_truth(manifest, scores)

        train = truth.split("train")
        dev = truth.split("dev")
        test = truth.split("test")
        assert dataset.ids() == tuple(inst.id for inst in train)
        train_x = np.array([inst.features for inst in train])
        train_y = np.array([inst.label for inst in train], dtype=np.float64)
        dev_x = np.array([inst.features for inst in dev])
        dev_y = np.array([inst.true_label for inst in dev])
        test_x = np.array([inst.features for inst in test])
        test_y = np.array([inst.true_label for inst in test])
        sims = np.array(
            [inst.coarse_sim if bin_metric == "coarse" else inst.fine_sim for inst in test]
        )
        bins = _noise_bins(sims)

        for si, strategy in enumerate(strategies):
            base_cfg = run_config if run_config is not None else default_run_config(
                strategy, config.seed
            )
            cfg = replace(base_cfg, strategy=strategy)
            rng = np.random.default_rng([abs(cfg.seed), rep, si])
            learner = ToyLearner(train_x, train_y, dev_x, dev_y)
            try:
                trace = run_strategy(dataset, learner, cfg, rng)
            except Exception as exc:
                raise RuntimeError(
                    f"strategy {strategy!r} failed on replicate {rep}"
                ) from exc
            pred = learner.predict(test_x)
            _, _, test_f1 = precision_recall_f1(pred, test_y)
            bin_f1 = tuple(
                precision_recall_f1(pred[b], test_y[b])[2] for b in bins
            )
            final_dev = trace.validations[-1].f1
            runs.append(
                RunResult(
                    strategy=strategy,
                    replicate=rep,
                    final_dev_f1=final_dev,
                    test_f1=test_f1,
                    bin_f1=bin_f1,  # type: ignore[arg-type]
                    steps_taken=len(trace.steps),
                    curve=tuple((v.step, v.f1) for v in trace.validations),
                )
            )
            if keep_traces:
                traces[(strategy, rep)] = trace

    report = ExperimentReport(
        config=config,
        run_config=run_config if run_config is not None else default_run_config(
            strategies[0], config.seed
        ),
        strategies=tuple(strategies),
        replicates=replicates,
        bin_metric=bin_metric,
        runs=tuple(runs),
    )
    if keep_traces:
        return report, traces
    return report
