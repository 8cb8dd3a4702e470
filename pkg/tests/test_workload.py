import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adstrain.errors import InvalidArgument, NotFound
from adstrain.rng import make_rng
from adstrain.workload import (
    EmbeddingTableSpec,
    ModelSpec,
    ValencyDist,
    batch_from_lists,
    dedup,
    dedup_rows,
    generate_batch,
    sample_zipf,
    sample_zipf_many,
    zipf_probabilities,
)


def test_zipf_uniform_when_s_zero():
    draws = sample_zipf_many(0.0, 4, 100_000, make_rng(1, "z"))
    freq = np.bincount(draws, minlength=4) / draws.size
    assert np.all(np.abs(freq - 0.25) <= 0.01)


def test_zipf_single_outcome():
    rng = make_rng(2)
    assert all(sample_zipf(s, 1, rng) == 0 for s in (0.0, 0.5, 1.0, 3.0))


def test_zipf_rank0_matches_harmonic_sum():
    H = math.fsum(1.0 / k for k in range(1, 101))
    assert zipf_probabilities(1.0, 100)[0] == pytest.approx(1.0 / H, rel=1e-12)
    draws = sample_zipf_many(1.0, 100, 1_000_000, make_rng(3, "h"))
    assert abs(np.mean(draws == 0) - 1.0 / H) <= 0.005


def test_zipf_probabilities_match_direct_formula():
    for s, n in ((0.8, 50), (1.5, 7), (2.0, 1000)):
        w = [1.0 / (r + 1) ** s for r in range(n)]
        tot = math.fsum(w)
        np.testing.assert_allclose(zipf_probabilities(s, n), [x / tot for x in w], rtol=1e-12, atol=1e-15)


def test_zipf_frequencies_non_increasing():
    draws = sample_zipf_many(1.2, 10, 500_000, make_rng(4))
    counts = np.bincount(draws, minlength=10)
    assert np.all(np.diff(counts) <= 0)


def test_zipf_rejects_empty_support():
    with pytest.raises(InvalidArgument):
        sample_zipf(1.0, 0, make_rng(0))


def _model(**kw):
    return ModelSpec("m", [EmbeddingTableSpec("a", 100, 8, **kw), EmbeddingTableSpec("b", 20, 4, zipf_s=0.5)])


def test_empty_batch():
    b = generate_batch(_model(), 0, 10, make_rng(0))
    assert b.batch_size == 0 and b.event_ids.size == 0
    assert all(r.values.size == 0 for r in b.lookups.values())


def test_constant_valency_one_lookup_each():
    b = generate_batch(_model(), 64, 0, make_rng(5))
    for rows in b.lookups.values():
        assert np.all(rows.valencies == 1)


def test_poisson_valency_mean():
    m = ModelSpec("m", [EmbeddingTableSpec("a", 1000, 8, mean_valency=10, valency_dist=ValencyDist("poisson", max=1000))])
    b = generate_batch(m, 10_000, 0, make_rng(6))
    assert abs(b.lookups["a"].valencies.mean() - 10) <= 0.2


def test_poisson_valency_truncated():
    dist = ValencyDist("poisson", max=12)
    m = ModelSpec("m", [EmbeddingTableSpec("a", 50, 8, mean_valency=10, valency_dist=dist)])
    v = generate_batch(m, 5000, 0, make_rng(7)).lookups["a"].valencies
    assert v.min() >= 0 and v.max() <= 12


def test_batch_is_deterministic_and_well_formed():
    m = _model(mean_valency=3, valency_dist=ValencyDist("poisson"))
    a = generate_batch(m, 128, 1000, make_rng(9, "b"))
    b = generate_batch(m, 128, 1000, make_rng(9, "b"))
    for name in a.lookups:
        assert np.array_equal(a.lookups[name].values, b.lookups[name].values)
        assert np.array_equal(a.lookups[name].offsets, b.lookups[name].offsets)
        assert a.lookups[name].values.max() < m.table(name).vocab_size
    assert np.array_equal(a.event_ids, np.arange(1000, 1128))


def test_dedup_examples():
    d = dedup_rows([7, 7, 7])
    assert d.unique_rows.tolist() == [7] and d.inverse.tolist() == [0, 0, 0]
    d = dedup_rows([3, 1, 2])
    assert d.unique_rows.tolist() == [3, 1, 2] and d.inverse.tolist() == [0, 1, 2]


def test_dedup_reconstructs_large_batch():
    rows = make_rng(10).integers(0, 100, 10_000)
    d = dedup_rows(rows)
    assert np.array_equal(d.reconstruct(), rows)
    assert d.unique_rows.tolist() == list(dict.fromkeys(rows.tolist()))


@given(st.lists(st.integers(0, 50), max_size=200))
@settings(max_examples=200, deadline=None)
def test_dedup_roundtrip_property(rows):
    d = dedup_rows(rows)
    assert d.reconstruct().tolist() == rows
    assert d.unique_rows.tolist() == list(dict.fromkeys(rows))


def test_dedup_unknown_table():
    b = batch_from_lists({"a": [[1], [2, 3]]})
    with pytest.raises(NotFound):
        dedup(b, "zzz")
    assert dedup(b, "a").unique_rows.tolist() == [1, 2, 3]


def test_table_spec_validation():
    with pytest.raises(InvalidArgument):
        EmbeddingTableSpec("x", 0, 8)
    with pytest.raises(InvalidArgument):
        ModelSpec("m", [EmbeddingTableSpec("x", 4, 8), EmbeddingTableSpec("x", 4, 8)])


def test_table_spec_roundtrip():
    t = EmbeddingTableSpec("q", 64, 16, 2.5, ValencyDist("empirical", values=(1, 2, 5), weights=(3, 2, 1)), 1.1)
    assert EmbeddingTableSpec.from_dict(t.to_dict()) == t
