import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adstrain.errors import InvalidArgument
from adstrain.fdp import ProfileDB, ProfileRecord, maybe_profile, query, update
from adstrain.rng import make_rng
from adstrain.workload import batch_from_lists


def rec(feature="f", valency=10.0, unique=5, batch=4, step=0):
    return ProfileRecord(feature, valency, unique, batch, step)


BATCH = batch_from_lists({"f": [[1, 2], [2], [3, 3, 3], []]})


def test_rate_one_always_profiles():
    rng = make_rng(0)
    assert all(maybe_profile(BATCH, "f", 1.0, rng) is not None for _ in range(100))


def test_rate_zero_never_profiles():
    rng = make_rng(0)
    assert all(maybe_profile(BATCH, "f", 0.0, rng) is None for _ in range(100))


def test_record_fields_exact():
    r = maybe_profile(BATCH, "f", 1.0, make_rng(0), shard_of=lambda rows: rows % 2)
    assert r.values_per_example == 6 / 4
    assert r.unique_values_per_batch == 3
    assert r.batch_size == 4
    # unique rows 1, 2, 3 -> shards 1, 0, 1
    assert r.per_shard_load == (1.0, 2.0)


def test_sampling_fraction_binomial_ci():
    rng = make_rng(1, "fdp")
    n, p = 100_000, 0.03
    hits = sum(maybe_profile(BATCH, "f", p, rng) is not None for _ in range(n))
    sigma = math.sqrt(p * (1 - p) / n)
    assert abs(hits / n - p) <= 3 * sigma


def test_bad_rate():
    with pytest.raises(InvalidArgument):
        maybe_profile(BATCH, "f", 1.5, make_rng(0))


def test_record_invariant():
    with pytest.raises(InvalidArgument):
        ProfileRecord("f", 1.0, 10, 4, 0)


def test_first_and_second_update():
    db = ProfileDB()
    update(db, rec(valency=10, step=3))
    s = query(db, "f")
    assert (s.mean_valency, s.sample_count, s.last_updated) == (10, 1, 3)
    assert s.mean_unique_fraction == rec().unique_fraction
    update(db, rec(valency=20, unique=1, step=4))
    s = query(db, "f")
    assert s.mean_valency == 15 and s.sample_count == 2 and s.last_updated == 4


def test_unknown_feature_absent():
    assert query(ProfileDB(), "nope") is None


def test_running_mean_matches_recompute():
    rng = make_rng(2)
    db = ProfileDB(keep_samples=True)
    vals = rng.uniform(0, 100, 1000)
    for i, v in enumerate(vals):
        db.update(ProfileRecord("f", float(v), 0, 8, i))
    s = db.query("f")
    assert s.mean_valency == pytest.approx(math.fsum(vals) / len(vals), rel=1e-12)
    kept = [r.values_per_example for r in db.samples("f")]
    assert s.mean_valency == pytest.approx(math.fsum(kept) / len(kept), rel=1e-12)


def test_two_models_share_one_entry():
    rng = make_rng(3)
    db = ProfileDB()
    a = rng.uniform(1, 5, 50)
    b = rng.uniform(10, 20, 70)
    # model identity is never part of the key: both write feature "q"
    for i, (x, y) in enumerate(zip(a, b)):
        db.update(ProfileRecord("q", float(x), 0, 1, i))
        db.update(ProfileRecord("q", float(y), 0, 1, i))
    for y in b[len(a):]:
        db.update(ProfileRecord("q", float(y), 0, 1, 99))
    assert db.features() == ["q"]
    pooled = np.concatenate([a, b])
    assert db.query("q").mean_valency == pytest.approx(pooled.mean(), rel=1e-12)
    assert db.query("q").sample_count == 120


def test_decay_mode():
    db = ProfileDB(decay=0.5)
    for v in (0.0, 8.0, 8.0):
        db.update(ProfileRecord("f", v, 0, 1, 0))
    assert db.query("f").mean_valency == 6.0


def test_concurrent_writers_lose_nothing():
    db = ProfileDB()

    def worker(k):
        for i in range(500):
            db.update(ProfileRecord("f", float(k), 0, 1, i))

    threads = [threading.Thread(target=worker, args=(k,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    s = db.query("f")
    assert s.sample_count == 2000
    assert s.mean_valency == pytest.approx(1.5, rel=1e-9)


def test_save_load_roundtrip(tmp_path):
    db = ProfileDB()
    db.update(rec("a", 3.0))
    db.update(ProfileRecord("b", 2.0, 1, 2, 5, (1.0, 3.0)))
    p = tmp_path / "stats.json"
    db.save(str(p))
    again = ProfileDB.load(str(p))
    assert again.to_dict() == db.to_dict()


@given(st.lists(st.floats(0, 1e4), min_size=1, max_size=100))
@settings(max_examples=100, deadline=None)
def test_mean_consistency_property(xs):
    db = ProfileDB(keep_samples=True)
    for x in xs:
        db.update(ProfileRecord("f", x, 0, 1, 0))
    assert db.query("f").mean_valency == pytest.approx(math.fsum(xs) / len(xs), rel=1e-9, abs=1e-9)
