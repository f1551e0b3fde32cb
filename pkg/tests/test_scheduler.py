import math

import numpy as np
import pytest

from m2df import (
    CurriculumState,
    DomainError,
    InstanceRecord,
    NoiseScores,
    PacingSchedule,
    RunConfig,
    RunTrace,
    StateError,
    ValidationReport,
    build_scored_dataset,
    f1,
    progress_ratio,
    run_ablation,
    run_baseline,
    run_multiple,
    run_single,
    select_curriculum,
)
from m2df.scheduler import LearnerError, StepRecord


def dataset_from_values(dc, df=None):
    df = df if df is not None else dc
    records = [InstanceRecord(id=f"i{k}", text="", image_ref=None, split="train")
               for k in range(len(dc))]
    noise = {f"i{k}": NoiseScores(id=f"i{k}", d_c=dc[k], d_f=df[k]) for k in range(len(dc))}
    return build_scored_dataset(records, noise)


class ScriptedLearner:
    """Learner whose validation metrics follow a fixed script, ignoring batches."""

    def __init__(self, reports):
        self.reports = list(reports)
        self.batches = []
        self.turn = 0

    def train_on(self, batch):
        self.batches.append(list(batch))

    def validate(self):
        rep = self.reports[self.turn]
        self.turn += 1
        if isinstance(rep, tuple):
            return ValidationReport.from_precision_recall(*rep)
        return ValidationReport.from_precision_recall(rep, rep)


class RandomLearner:
    """Deterministic pseudo-random validation sequence for fuzzing."""

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)

    def train_on(self, batch):
        pass

    def validate(self):
        v = float(self.rng.uniform(0.05, 0.95))
        return ValidationReport.from_precision_recall(v, v)


def test_f1_values():
    assert f1(0.7, 0.7) == pytest.approx(0.7, abs=1e-12)
    assert f1(0.0, 0.9) == 0.0
    assert f1(0.6, 0.4) == pytest.approx(0.48, abs=1e-12)


def test_f1_domain():
    with pytest.raises(DomainError):
        f1(-0.1, 0.5)
    with pytest.raises(DomainError):
        f1(0.5, 1.2)


def test_progress_ratio():
    assert progress_ratio(0.5, 0.5) == pytest.approx(1.0, abs=1e-12)
    assert progress_ratio(0.6, 0.5) == pytest.approx(1.2, abs=1e-12)
    assert progress_ratio(0.0, 0.0) == 1.0
    assert progress_ratio(0.3, 0.0) == math.inf
    with pytest.raises(DomainError):
        progress_ratio(-0.1, 0.5)


def make_states(s_coarse, s_fine):
    sched = PacingSchedule(p0=0.25, T=4)
    a = CurriculumState("coarse", sched, s=s_coarse)
    b = CurriculumState("fine", sched, s=s_fine)
    return [a, b]


def test_select_curriculum_argmax():
    assert select_curriculum(make_states(1.1, 1.3)) == 1
    assert select_curriculum(make_states(1.2, 1.2)) == 0  # tie -> coarse
    assert select_curriculum(make_states(2.2, 2.6)) == 1  # scaled, same argmax


def test_select_curriculum_requires_warmup():
    states = make_states(1.1, 1.3)
    states[1].s = None
    with pytest.raises(StateError):
        select_curriculum(states)


def config(**kw):
    base = dict(batch_size=2, max_steps=6, validate_every=1, strategy="single_coarse",
                seed=0, T=4, p0=0.25, warmup_steps_per_curriculum=2, patience=10)
    base.update(kw)
    return RunConfig(**base)


def test_run_single_pace_reaches_one_and_stays():
    ds = dataset_from_values([0.0, 0.2, 0.5, 0.8])
    learner = ScriptedLearner([0.5] * 20)
    trace = run_single(ds, "coarse", learner, config(max_steps=8, validate_every=8))
    ps = [s.p for s in trace.steps]
    assert ps[4] == 1.0 and all(p == 1.0 for p in ps[4:])
    assert trace.steps[4].prefix_len == 4


def test_run_single_singleton_dataset():
    ds = dataset_from_values([0.4])
    learner = ScriptedLearner([0.5] * 10)
    trace = run_single(ds, "coarse", learner, config(max_steps=5, validate_every=5))
    for s in trace.steps:
        assert s.batch == ("i0",)


def test_run_single_deterministic():
    ds = dataset_from_values([0.0, 0.1, 0.4, 0.6, 0.9])
    t1 = run_single(ds, "coarse", ScriptedLearner([0.5] * 10), config())
    t2 = run_single(ds, "coarse", ScriptedLearner([0.5] * 10), config())
    assert t1 == t2


def test_run_single_validates_strategy():
    ds = dataset_from_values([0.1])
    with pytest.raises(DomainError):
        run_single(ds, "coarse", ScriptedLearner([0.5]), config(strategy="merge"))


def test_run_single_learner_failure_has_step_context():
    class Boom:
        def __init__(self):
            self.calls = 0

        def train_on(self, batch):
            self.calls += 1
            if self.calls == 4:
                raise ValueError("numerics blew up")

        def validate(self):
            return ValidationReport.from_precision_recall(0.5, 0.5)

    ds = dataset_from_values([0.0, 0.5])
    with pytest.raises(LearnerError, match="step 3"):
        run_single(ds, "coarse", Boom(), config())


def test_run_baseline_ignores_pacing():
    ds = dataset_from_values([0.0, 0.3, 0.6, 1.0])
    trace = run_baseline(ds, ScriptedLearner([0.5] * 10), config(strategy="baseline"))
    assert all(s.p == 1.0 and s.prefix_len == 4 for s in trace.steps)


# ---------------------------------------------------------------------------
# the multiple-curriculum procedure, checked against an independent desk
# simulation: 4 instances, 6 steps, validate_every=1, warmup=2
# ---------------------------------------------------------------------------

DESK_D_C = [0.0, 0.4, 0.7, 1.0]
DESK_D_F = [0.0, 0.9, 0.3, 0.6]
DESK_F1 = [0.5, 0.6, 0.55, 0.66, 0.6]

# hand-executed trace: (step, curriculum, t, p, prefix_len)
DESK_TRACE = [
    (0, "coarse", 0, 0.25, 1),
    (1, "coarse", 1, 0.5448623679425842, 2),
    (2, "fine", 0, 0.25, 1),
    (3, "fine", 1, 0.5448623679425842, 2),
    (4, "coarse", 3, 0.875, 3),
    (5, "coarse", 4, 1.0, 4),
]


def desk_simulation(d_by_metric, p0, T, warmup, max_steps, f1_script, batch_size):
    """Literal step-by-step execution of the multiple-curriculum procedure.

    Independent of the production code: pace evaluated inline, eligibility by
    linear scan, counters and ratios tracked by hand.
    """
    it = iter(f1_script)
    t = {"coarse": 0, "fine": 0}
    s = {}
    events = []
    prev = next(it)

    def pace_at(tt):
        return 1.0 if tt >= T else math.sqrt(tt * (1.0 - p0 * p0) / T + p0 * p0)

    def prefix(metric, p):
        n = sum(1 for v in d_by_metric[metric] if v <= p)
        return n if n else min(batch_size, len(d_by_metric[metric]))

    def ratio(cur, prv):
        if prv == 0.0:
            return math.inf if cur > 0 else 1.0
        return cur / prv

    step = 0
    for metric in ("coarse", "fine"):
        for _ in range(warmup):
            p = pace_at(t[metric])
            events.append((step, metric, t[metric], p, prefix(metric, p)))
            t[metric] += 1
            step += 1
        cur = next(it)
        s[metric] = ratio(cur, prev)
        prev = cur
    while step < max_steps:
        metric = "coarse" if s["coarse"] >= s["fine"] else "fine"
        t[metric] += 1
        p = pace_at(t[metric])
        events.append((step, metric, t[metric], p, prefix(metric, p)))
        step += 1
        cur = next(it)
        s[metric] = ratio(cur, prev)
        prev = cur
    return events


def test_run_multiple_matches_desk_simulation():
    ds = dataset_from_values(DESK_D_C, DESK_D_F)
    learner = ScriptedLearner(DESK_F1)
    trace = run_multiple(ds, learner, config(strategy="multiple_dynamic"))
    got = [(s.step, s.curriculum, s.t, s.p, s.prefix_len) for s in trace.steps]

    oracle = desk_simulation(
        {"coarse": DESK_D_C, "fine": DESK_D_F}, p0=0.25, T=4, warmup=2,
        max_steps=6, f1_script=DESK_F1, batch_size=2,
    )
    assert got == oracle
    assert got == DESK_TRACE  # frozen hand execution


def test_run_multiple_warmup_order():
    ds = dataset_from_values(DESK_D_C, DESK_D_F)
    trace = run_multiple(ds, ScriptedLearner([0.5] * 20), config(strategy="multiple_dynamic"))
    curricula = [s.curriculum for s in trace.steps[:4]]
    assert curricula == ["coarse", "coarse", "fine", "fine"]


def test_run_multiple_sticks_with_better_curriculum():
    # fine's ratio stays strictly larger for the whole main loop
    script = [0.5, 0.4, 0.5] + [0.5 * 1.05 ** k for k in range(1, 10)]
    ds = dataset_from_values(DESK_D_C, DESK_D_F)
    trace = run_multiple(ds, ScriptedLearner(script), config(strategy="multiple_dynamic", max_steps=10))
    main = trace.steps[4:]
    assert main and all(s.curriculum == "fine" for s in main)


def test_run_multiple_counter_conservation_and_consistency_fuzz():
    rng = np.random.default_rng(1234)
    for trial in range(40):
        n = int(rng.integers(1, 30))
        ds = dataset_from_values([float(x) for x in rng.random(n)],
                                 [float(x) for x in rng.random(n)])
        max_steps = int(rng.integers(2, 40))
        cfg = config(
            strategy="multiple_dynamic",
            max_steps=max_steps,
            validate_every=int(rng.integers(1, max_steps + 1)),
            warmup_steps_per_curriculum=int(rng.integers(1, 4)),
            batch_size=int(rng.integers(1, 6)),
            T=int(rng.integers(1, 50)),
            p0=float(rng.uniform(0.01, 1.0)),
            seed=trial,
            patience=int(rng.integers(1, 12)),
        )
        trace = run_multiple(ds, RandomLearner(trial), cfg)
        check_multiple_trace_invariants(trace, cfg)


def check_multiple_trace_invariants(trace, cfg):
    steps = trace.steps
    warmup_total = min(2 * cfg.warmup_steps_per_curriculum, cfg.max_steps)

    # counter conservation: each step advances exactly one curriculum counter,
    # warmup records t pre-increment and main-loop steps post-increment
    own = {"coarse": 0, "fine": 0}
    for s in steps:
        if s.step < warmup_total:
            assert s.t == own[s.curriculum]
        else:
            assert s.t == own[s.curriculum] + 1
        own[s.curriculum] += 1
    assert own["coarse"] + own["fine"] == len(steps)
    assert len(steps) <= cfg.max_steps

    # selection consistency: the trained curriculum's s at selection time is
    # >= the other's (ties go to coarse)
    s_at = {"coarse": None, "fine": None}
    events = list(trace.events)
    for e in events:
        if isinstance(e, StepRecord):
            if e.step >= warmup_total:
                mine = s_at[e.curriculum]
                other = s_at["fine" if e.curriculum == "coarse" else "coarse"]
                assert mine is not None and other is not None
                if e.curriculum == "coarse":
                    assert mine >= other
                else:
                    assert mine > other
        else:
            s_at = {"coarse": e.s_coarse, "fine": e.s_fine}


def test_run_multiple_s_update_locality():
    ds = dataset_from_values(DESK_D_C, DESK_D_F)
    learner = RandomLearner(5)
    cfg = config(strategy="multiple_dynamic", max_steps=20, validate_every=2)
    trace = run_multiple(ds, learner, cfg)
    vals = trace.validations
    steps = trace.steps
    for prev, cur in zip(vals, vals[1:]):
        trained = {s.curriculum for s in steps if prev.step <= s.step < cur.step}
        if prev.step < 4:
            continue  # warmup turns initialize s one curriculum at a time
        if "coarse" not in trained:
            assert cur.s_coarse == prev.s_coarse
        if "fine" not in trained:
            assert cur.s_fine == prev.s_fine


def test_run_multiple_deterministic():
    ds = dataset_from_values(DESK_D_C, DESK_D_F)
    t1 = run_multiple(ds, RandomLearner(3), config(strategy="multiple_dynamic"))
    t2 = run_multiple(ds, RandomLearner(3), config(strategy="multiple_dynamic"))
    assert t1 == t2


def test_selection_scale_invariance():
    # scaling every precision/recall by c <= 1 scales F1 by c and leaves
    # ratios, hence the selected sequence, unchanged
    base = [(0.5, 0.6), (0.55, 0.5), (0.6, 0.62), (0.5, 0.66), (0.58, 0.6),
            (0.61, 0.55), (0.5, 0.52), (0.63, 0.6), (0.59, 0.61), (0.64, 0.58)]
    ds = dataset_from_values(DESK_D_C, DESK_D_F)
    cfg = config(strategy="multiple_dynamic", max_steps=8)
    t_base = run_multiple(ds, ScriptedLearner(base), cfg)
    c = 0.5
    scaled = [(p * c, r * c) for p, r in base]
    t_scaled = run_multiple(ds, ScriptedLearner(scaled), cfg)
    assert [s.curriculum for s in t_base.steps] == [s.curriculum for s in t_scaled.steps]


def test_run_multiple_patience_stops_early():
    ds = dataset_from_values(DESK_D_C, DESK_D_F)
    script = [0.9] + [0.5] * 50  # never improves on the initial validation
    cfg = config(strategy="multiple_dynamic", max_steps=40, validate_every=1, patience=3)
    trace = run_multiple(ds, ScriptedLearner(script), cfg)
    # 4 warmup steps, then 3 stale main-loop validation turns
    assert len(trace.steps) == 4 + 3


def test_full_data_exposure_after_T():
    ds = dataset_from_values([0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    for strategy, runner in (
        ("single_coarse", lambda cfg: run_single(ds, "coarse", ScriptedLearner([0.5] * 99), cfg)),
        ("single_fine", lambda cfg: run_single(ds, "fine", ScriptedLearner([0.5] * 99), cfg)),
        ("merge", lambda cfg: run_ablation(ds, ScriptedLearner([0.5] * 99), cfg)),
        ("sequential", lambda cfg: run_ablation(ds, ScriptedLearner([0.5] * 99), cfg)),
        ("random", lambda cfg: run_ablation(ds, ScriptedLearner([0.5] * 99), cfg)),
        ("multiple_dynamic", lambda cfg: run_multiple(ds, ScriptedLearner([0.5] * 99), cfg)),
    ):
        cfg = config(strategy=strategy, max_steps=16, T=4, validate_every=4)
        trace = runner(cfg)
        assert trace.steps[-1].prefix_len == len(ds), strategy


def test_merge_equals_single_coarse_when_metrics_agree():
    vals = [0.0, 0.3, 0.55, 0.9]
    ds = dataset_from_values(vals, vals)
    cfg_m = config(strategy="merge")
    cfg_c = config(strategy="single_coarse")
    tm = run_ablation(ds, ScriptedLearner([0.5] * 10), cfg_m)
    tc = run_single(ds, "coarse", ScriptedLearner([0.5] * 10), cfg_c)
    assert [(s.t, s.p, s.prefix_len, s.batch) for s in tm.steps] == [
        (s.t, s.p, s.prefix_len, s.batch) for s in tc.steps
    ]


def test_sequential_alternates():
    ds = dataset_from_values(DESK_D_C, DESK_D_F)
    cfg = config(strategy="sequential", max_steps=4)
    trace = run_ablation(ds, ScriptedLearner([0.5] * 10), cfg)
    assert [s.curriculum for s in trace.steps] == ["coarse", "fine", "coarse", "fine"]
    assert [s.t for s in trace.steps] == [0, 0, 1, 1]


def test_random_strategy_deterministic():
    ds = dataset_from_values(DESK_D_C, DESK_D_F)
    cfg = config(strategy="random", max_steps=12)
    t1 = run_ablation(ds, ScriptedLearner([0.5] * 20), cfg)
    t2 = run_ablation(ds, ScriptedLearner([0.5] * 20), cfg)
    assert t1 == t2
    assert {s.curriculum for s in t1.steps} <= {"coarse", "fine"}


def test_trace_jsonl_roundtrip(tmp_path):
    ds = dataset_from_values(DESK_D_C, DESK_D_F)
    trace = run_multiple(ds, RandomLearner(8), config(strategy="multiple_dynamic"))
    path = tmp_path / "trace.jsonl"
    trace.to_jsonl(str(path))
    assert RunTrace.from_jsonl(str(path)) == trace


def test_trace_roundtrip_keeps_infinite_ratio(tmp_path):
    # a curriculum climbing off F1 = 0 gets the +inf sentinel ratio
    ds = dataset_from_values(DESK_D_C, DESK_D_F)
    script = [0.0, 0.5, 0.6, 0.7, 0.7, 0.7, 0.7]
    trace = run_multiple(ds, ScriptedLearner(script), config(strategy="multiple_dynamic"))
    assert any(v.s_coarse == math.inf for v in trace.validations)
    path = tmp_path / "trace.jsonl"
    trace.to_jsonl(str(path))
    assert RunTrace.from_jsonl(str(path)) == trace


def test_run_config_validation():
    with pytest.raises(DomainError):
        config(validate_every=99)  # > max_steps
    with pytest.raises(DomainError):
        config(strategy="nope")
    with pytest.raises(DomainError):
        config(batch_size=0)


def test_validation_report_consistency():
    with pytest.raises(DomainError):
        ValidationReport(precision=0.5, recall=0.5, f1=0.9)
