import csv
import io
import math

import pytest
from hypothesis import given, strategies as st

from mcnet_sim.metrics import (
    SAMPLES_HEADER, SUMMARY_HEADER, DuplicateSampleError, LatencyRecorder, LatencySample,
    MetricStats, compare_runs, describe, histogram, match_samples, samples_csv, summarize,
    summary_csv,
)
from mcnet_sim.packet import Frame, TrafficClass

from oracles import two_pass_stats


def stats(var, mx=1.0, med=1.0):
    return MetricStats(10, 0.0, mx, med, var)


def test_describe_small_example():
    d = describe([1000, 2000, 3000])
    assert (d.min, d.median, d.max) == (1.0, 2.0, 3.0)
    assert d.variance == pytest.approx(2 / 3, rel=1e-12)


def test_constant_samples_have_zero_variance():
    assert describe([123456] * 50).variance == 0.0


def test_even_count_median_is_lower_middle():
    assert describe([4000, 1000, 3000, 2000]).median == 2.0


def test_describe_rejects_empty():
    with pytest.raises(ValueError):
        describe([])


@given(st.lists(st.integers(0, 10**10), min_size=1, max_size=300))
def test_describe_matches_two_pass_oracle(values):
    got, want = describe(values), two_pass_stats(values)
    assert got.min == want["min"] and got.max == want["max"] and got.median == want["median"]
    assert math.isclose(got.variance, want["variance"], rel_tol=1e-9, abs_tol=1e-9)


def sample(seq, rtt):
    half = rtt // 2
    return LatencySample(seq, 0, half, half, rtt)


def test_histogram_bin_boundaries():
    h = histogram([sample(0, 0), sample(1, 9_999), sample(2, 10_000)])
    assert h.bins == {0: 2, 1: 1}


def test_histogram_overflow_and_total():
    h = histogram([sample(i, i * 7000) for i in range(20)], upper_ns=50_000)
    assert h.total == 20
    assert h.overflow == sum(1 for i in range(20) if i * 7000 >= 50_000)


@given(st.lists(st.integers(0, 10**7), max_size=100))
def test_histogram_conserves_samples(rtts):
    assert histogram([sample(i, r) for i, r in enumerate(rtts)]).total == len(rtts)


def test_csv_headers():
    s = summarize([sample(1, 5000)], payload=64, interference=True)
    rows = list(csv.reader(io.StringIO(summary_csv([s]))))
    assert rows[0] == SUMMARY_HEADER
    assert rows[1][0] == "64" and rows[1][-1] == "on"
    assert samples_csv([sample(1, 5000)]).splitlines()[0] == ",".join(SAMPLES_HEADER)


def test_compare_runs_variance_ratio_from_table_values():
    rep = compare_runs(stats(148494.1), stats(50.03))
    assert rep.variance_ratio == pytest.approx(2968.1, rel=1e-4)


def test_compare_identical_runs_is_unity():
    a = stats(12.5, 40.0, 30.0)
    rep = compare_runs(a, a)
    assert (rep.variance_ratio, rep.max_ratio, rep.median_ratio) == (1.0, 1.0, 1.0)


def test_compare_against_zero_variance():
    assert math.isinf(compare_runs(stats(1.0), stats(0.0)).variance_ratio)
    assert compare_runs(stats(0.0), stats(0.0)).variance_ratio == 1.0


def test_compare_thresholds():
    rep = compare_runs(stats(100.0), stats(5.0), {"variance_ratio": 10.0, "max_ratio": 2.0})
    assert rep.verdicts == {"variance_ratio": True, "max_ratio": False}


def ping(seq, topic, t_send=None, t_recv=None):
    f = Frame(1, seq, TrafficClass.REAL_TIME, 5, 64, is_rtps=True, topic=topic)
    f.ts_app_send, f.ts_app_recv = t_send, t_recv
    return f


def test_match_joins_and_counts_lost_pong():
    rec = LatencyRecorder("ping", "pong")
    for seq in (0, 1):
        rec.sent("A", ping(seq, "ping", t_send=seq * 100))
        rec.received("B", ping(seq, "ping", t_recv=seq * 100 + 40))
    rec.sent("B", ping(0, "pong", t_send=45))
    rec.received("A", ping(0, "pong", t_recv=90))
    m = match_samples(rec)
    assert m.incomplete == 1 and m.sent == 2
    (s,) = m.samples
    assert (s.owd_fwd, s.turnaround, s.owd_ret, s.rtt) == (40, 5, 45, 90)


def test_duplicate_sequence_number_raises():
    rec = LatencyRecorder("ping", "pong")
    rec.sent("A", ping(3, "ping", t_send=0))
    rec.sent("A", ping(3, "ping", t_send=10))
    with pytest.raises(DuplicateSampleError):
        match_samples(rec)


def test_unknown_topic_is_ignored_by_recorder():
    rec = LatencyRecorder("ping", "pong")
    rec.sent("A", ping(0, "other", t_send=0))
    assert match_samples(rec).sent == 0


def test_empty_summary_row():
    s = summarize([], payload=512, interference=False, incomplete=4)
    assert s.empty
    assert summary_csv([s]).splitlines()[1].startswith("512,no data")
