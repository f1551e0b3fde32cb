import math

import numpy as np
import pytest

from m2df import (
    DomainError,
    InstanceRecord,
    NoiseScores,
    PacingSchedule,
    build_scored_dataset,
    eligible,
    pace,
    sample_batch,
)


def test_pace_at_zero_is_p0():
    for p0 in (0.01, 0.2, 1.0):
        assert pace(0, PacingSchedule(p0=p0, T=50)) == pytest.approx(p0, abs=1e-12)


def test_pace_at_T_and_beyond_is_one():
    sched = PacingSchedule(p0=0.01, T=37)
    assert pace(37, sched) == 1.0
    assert pace(38, sched) == 1.0
    assert pace(5000, sched) == 1.0


def test_pace_midpoint_hand_value():
    # oracle: sqrt(0.5*(1 - 0.01^2) + 0.01^2) = sqrt(0.50005)
    expect = math.sqrt(0.50005)
    assert expect == pytest.approx(0.7071421356417675, abs=1e-12)
    for T in (2, 10, 100, 1000):
        assert pace(T // 2, PacingSchedule(p0=0.01, T=T)) == pytest.approx(expect, abs=1e-8)


def test_pace_monotone_random_schedules():
    rng = np.random.default_rng(17)
    for _ in range(200):
        sched = PacingSchedule(p0=float(rng.uniform(0.001, 1.0)), T=int(rng.integers(1, 500)))
        ts = sorted(int(x) for x in rng.integers(0, 1000, size=10))
        vals = [pace(t, sched) for t in ts]
        assert all(a <= b for a, b in zip(vals, vals[1:]))
        assert all(sched.p0 <= v <= 1.0 for v in vals)


def test_pace_rejects_negative_t():
    with pytest.raises(DomainError):
        pace(-1, PacingSchedule(p0=0.5, T=10))


def test_schedule_validation():
    with pytest.raises(DomainError):
        PacingSchedule(p0=0.0, T=10)
    with pytest.raises(DomainError):
        PacingSchedule(p0=0.5, T=0)


def dataset_from_values(dc, df=None):
    df = df if df is not None else dc
    records = [InstanceRecord(id=f"i{k}", text="", image_ref=None, split="train")
               for k in range(len(dc))]
    noise = {f"i{k}": NoiseScores(id=f"i{k}", d_c=dc[k], d_f=df[k]) for k in range(len(dc))}
    return build_scored_dataset(records, noise)


def test_eligible_inclusive_threshold():
    ds = dataset_from_values([0.0, 0.3, 0.9])
    assert eligible(ds, "coarse", 0.3).prefix_len == 2


def test_eligible_threshold_one_covers_all():
    ds = dataset_from_values([0.1, 0.5, 0.99, 1.0])
    assert eligible(ds, "coarse", 1.0).prefix_len == 4


def test_eligible_empty_prefix_fallback():
    ds = dataset_from_values([0.5, 0.6])
    view = eligible(ds, "coarse", 0.01, min_eligible=1)
    assert view.prefix_len == 1
    assert view.fallback_fired


def test_eligible_fallback_capped_at_n():
    ds = dataset_from_values([0.5, 0.6])
    view = eligible(ds, "coarse", 0.01, min_eligible=10)
    assert view.prefix_len == 2


def test_eligible_monotone_in_threshold():
    rng = np.random.default_rng(23)
    for _ in range(100):
        n = int(rng.integers(1, 60))
        ds = dataset_from_values([float(x) for x in rng.random(n)],
                                 [float(x) for x in rng.random(n)])
        a, b = sorted((float(rng.random()), float(rng.random())))
        for metric in ("coarse", "fine", "merged"):
            assert (eligible(ds, metric, a).prefix_len
                    <= eligible(ds, metric, b).prefix_len)


def test_eligible_rejects_bad_threshold():
    ds = dataset_from_values([0.5])
    with pytest.raises(DomainError):
        eligible(ds, "coarse", 1.5)


def test_sample_batch_exact_prefix():
    ds = dataset_from_values([0.0, 0.1, 0.2, 0.9])
    view = eligible(ds, "coarse", 0.5)
    batch = sample_batch(view, 3, np.random.default_rng(0))
    assert sorted(batch) == [0, 1, 2]


def test_sample_batch_short_batch():
    ds = dataset_from_values([0.0, 0.9])
    view = eligible(ds, "coarse", 0.5)
    assert sample_batch(view, 4, np.random.default_rng(0)) == [0]


def test_sample_batch_deterministic():
    ds = dataset_from_values([float(x) for x in np.random.default_rng(1).random(100)])
    view = eligible(ds, "coarse", 0.8)
    a = sample_batch(view, 10, np.random.default_rng(99))
    b = sample_batch(view, 10, np.random.default_rng(99))
    assert a == b


def test_sample_batch_zero_batch_size():
    ds = dataset_from_values([0.5])
    view = eligible(ds, "coarse", 1.0)
    with pytest.raises(DomainError):
        sample_batch(view, 0, np.random.default_rng(0))


def test_sample_batch_within_prefix_only():
    rng = np.random.default_rng(31)
    ds = dataset_from_values([float(x) for x in rng.random(50)])
    for _ in range(50):
        thr = float(rng.random())
        view = eligible(ds, "coarse", thr, min_eligible=4)
        batch = sample_batch(view, 4, rng)
        allowed = set(view.order[: view.prefix_len])
        assert set(batch) <= allowed
        assert len(set(batch)) == len(batch)  # without replacement


def test_sample_batch_uniformity():
    # 100k single-instance draws from a 10-element prefix: each frequency
    # within 3 standard errors of 0.1
    ds = dataset_from_values([k / 10.0 for k in range(10)])
    view = eligible(ds, "coarse", 1.0)
    rng = np.random.default_rng(7)
    counts = np.zeros(10)
    draws = 100_000
    for _ in range(draws):
        counts[sample_batch(view, 1, rng)[0]] += 1
    freq = counts / draws
    se = math.sqrt(0.1 * 0.9 / draws)
    assert np.all(np.abs(freq - 0.1) <= 3 * se)
