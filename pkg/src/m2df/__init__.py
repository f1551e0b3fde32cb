"""Curriculum-based denoising scheduler for noisy multimodal training data."""

from .dataset_io import (
    InstanceRecord,
    NoiseScores,
    RawScoreRecord,
    ScoredDataset,
    build_scored_dataset,
    load_manifest,
    load_noise,
    load_scores,
    write_manifest,
    write_noise,
    write_scores,
)
from .errors import (
    DegenerateNormalizationError,
    DomainError,
    M2dfError,
    ParseError,
    StateError,
    ValidationError,
)
from .metrics import aggregate_mean, coarse_noise, cosine, fine_noise, score_records
from .pacing import EligibleView, PacingSchedule, eligible, pace, sample_batch
from .scheduler import (
    CurriculumState,
    LearnerPort,
    RunConfig,
    RunTrace,
    ValidationReport,
    f1,
    progress_ratio,
    run_ablation,
    run_baseline,
    run_multiple,
    run_single,
    run_strategy,
    select_curriculum,
)
from .simulator import (
    ExperimentReport,
    GroundTruth,
    SyntheticConfig,
    SyntheticInstance,
    ToyLearner,
    generate,
    run_experiment,
)

__version__ = "0.1.0"
