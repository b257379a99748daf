import json
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from inventor_linker.errors import (
    EmptyCandidates,
    InvalidParams,
    InvalidVerdict,
    MissingStageArtifact,
    UnknownClusterId,
)
from inventor_linker.match import CorpusStats
from inventor_linker.qualify import (
    QualificationSample,
    SamplingParams,
    Verdict,
    build_report,
    draw_sample,
    margin_of_error,
    record_verdict,
    required_sample_size,
)


def test_sample_size_values():
    # n0 = 1.96^2 * 0.25 / 0.0025 = 384.16; 384.16 / (1 + 383.16/2501) = 333.12...
    assert required_sample_size(2501, 0.05) == 334
    assert required_sample_size(10, 0.5) == 3
    assert required_sample_size(1, 0.05) == 1


def test_margin_values():
    assert margin_of_error(390, 2501) == pytest.approx(0.045600, abs=5e-6)
    assert margin_of_error(1, 1) == 0.0
    assert margin_of_error(50, 50) == 0.0
    with pytest.raises(InvalidParams):
        margin_of_error(0, 10)
    with pytest.raises(InvalidParams):
        margin_of_error(11, 10)


@given(st.integers(2, 10**6), st.integers(1, 1000))
def test_margin_scales_with_inverse_root(N, n):
    if 4 * n > N:
        return
    # without the correction term the ratio is exactly sqrt(2)
    ratio = (margin_of_error(n, N) / math.sqrt((N - n) / (N - 1))) / (
        margin_of_error(2 * n, N) / math.sqrt((N - 2 * n) / (N - 1)))
    assert ratio == pytest.approx(math.sqrt(2), rel=1e-9)


@given(st.integers(1, 100_000), st.floats(0.01, 0.5))
def test_required_size_achieves_margin(N, e):
    n = required_sample_size(N, e)
    assert 1 <= n <= N
    assert margin_of_error(n, N) <= e + 1e-12
    if n > 1:
        assert margin_of_error(n - 1, N) > e - 1e-9 or n == N


def test_fraction_draw():
    ids = [f"c{i:04d}" for i in range(1209)]
    s = draw_sample(ids, SamplingParams(fraction=0.10, seed=1))
    assert s.size == 121 and len(set(s.sampled_cluster_ids)) == 121
    assert set(s.sampled_cluster_ids) <= set(ids)
    assert s.counts()[Verdict.PENDING] == 121


def test_target_margin_small_population():
    # uncorrected n0 = 385 exceeds 27, but the corrected size is
    # ceil(384.16 / (1 + 383.16 / 27)) = ceil(25.29) = 26
    ids = [f"c{i}" for i in range(27)]
    s = draw_sample(ids, SamplingParams(mode="target-margin", e_target=0.05))
    assert s.size == 26
    tiny = draw_sample(ids[:3], SamplingParams(mode="target-margin", e_target=0.05))
    assert sorted(tiny.sampled_cluster_ids) == ids[:3]


def test_draw_errors():
    with pytest.raises(EmptyCandidates):
        draw_sample([], SamplingParams())
    with pytest.raises(InvalidParams):
        SamplingParams(fraction=0)
    with pytest.raises(InvalidParams):
        SamplingParams(seed=-1)
    with pytest.raises(ValueError):
        SamplingParams(mode="stratified")


def test_verdicts_and_audit():
    s = draw_sample(["a", "b", "c"], SamplingParams(fraction=1.0))
    s = record_verdict(s, "a", "verified")
    s = record_verdict(s, "a", "doubt")
    s = record_verdict(s, "b", Verdict.ERROR)
    assert s.verdicts["a"] is Verdict.DOUBT
    assert [(e.cluster_id, e.previous, e.new) for e in s.audit] == [
        ("a", "pending", "verified"), ("a", "verified", "doubt"), ("b", "pending", "error")]
    with pytest.raises(UnknownClusterId):
        record_verdict(s, "zz", "verified")
    with pytest.raises(InvalidVerdict):
        record_verdict(s, "a", "maybe")
    with pytest.raises(InvalidVerdict):
        record_verdict(s, "a", "pending")
    assert QualificationSample.from_json(json.loads(json.dumps(s.to_json()))) == s


def _sample(corpus, n, verified, doubt, error):
    ids = [f"{corpus}{i}" for i in range(n)]
    s = draw_sample(ids, SamplingParams(fraction=1.0), corpus)
    labels = ["verified"] * verified + ["doubt"] * doubt + ["error"] * error
    for cid, v in zip(ids, labels):
        s = record_verdict(s, cid, v)
    return s


def test_report_sums_and_text():
    stats = [CorpusStats.from_counts("A", 10, 50, 20, 10), CorpusStats.from_counts("B", 5, 30, 8, 4)]
    samples = {"A": _sample("A", 10, 8, 1, 1), "B": _sample("B", 4, 4, 0, 0)}
    report = build_report(stats, samples)
    t = report.totals
    assert (t.inventors, t.candidates, t.sample_size, t.verified, t.doubt, t.error) == (80, 14, 14, 12, 1, 1)
    assert str(t.verified_pct) == "86" and str(t.error_pct) == "7.14"
    text = report.to_text()
    assert "Total" in text and "86 %" in text and "50.00" in text
    data = json.loads(report.to_structured())
    assert data["table1"]["total"]["sample_size"] == 14
    assert data["margin_of_error"]["A"] == 0.0


def test_report_needs_samples():
    stats = [CorpusStats.from_counts("A", 10, 50, 20, 10)]
    with pytest.raises(MissingStageArtifact):
        build_report(stats, {})
    empty = build_report([CorpusStats.from_counts("Z", 1, 1, 0, 0)], {})
    assert empty.totals.verified_pct is None and "—" in empty.to_text()


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 500), st.floats(0.01, 1.0), st.integers(0, 2**64 - 1),
       st.sampled_from(["fraction", "target-margin"]))
def test_sampling_invariants(population, fraction, seed, mode):
    ids = [f"id{i}" for i in range(population)]
    params = SamplingParams(mode=mode, fraction=fraction, seed=seed)
    s = draw_sample(ids, params)
    assert len(set(s.sampled_cluster_ids)) == s.size
    if mode == "fraction":
        assert s.size == min(population, max(1, math.floor(fraction * population + 0.5)))
    else:
        assert s.size == required_sample_size(population, params.e_target)
    shuffled = ids[:]
    random.Random(seed).shuffle(shuffled)
    assert draw_sample(shuffled, params) == s


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 60), st.lists(st.tuples(st.integers(0, 59), st.sampled_from(["verified", "doubt", "error"])),
                                   max_size=80))
def test_verdict_conservation(n, moves):
    s = draw_sample([f"c{i}" for i in range(n)], SamplingParams(fraction=1.0))
    for idx, verdict in moves:
        if idx < n:
            s = record_verdict(s, s.sampled_cluster_ids[idx], verdict)
            assert sum(s.counts().values()) == s.size
    assert len(s.audit) == sum(1 for idx, _ in moves if idx < n)
