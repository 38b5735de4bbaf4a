import random
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amatal.ensemble import (
    PredictionGroup,
    ensemble,
    fuse_mean,
    fuse_weighted,
    select_top_per_source,
)
from amatal.errors import ConfigError
from amatal.postprocess import Detection


def det(ts, te, label, score, vid="v"):
    return Detection(ts, te, label, score, vid)


def test_select_top_per_source():
    a, b = det(0, 5, 1, 0.7), det(10, 15, 1, 0.9)
    assert select_top_per_source([[a, b]]) == [(0, b)]
    c = det(0, 5, 2, 0.1)
    assert {d for _, d in select_top_per_source([[a, c]])} == {a, c}
    assert select_top_per_source([]) == []
    assert select_top_per_source([[], []]) == []


def test_select_tie_goes_to_earlier_start():
    late, early = det(10, 15, 1, 0.8), det(2, 6, 1, 0.8)
    assert select_top_per_source([[late, early]]) == [(0, early)]


def test_fuse_mean_examples():
    g = PredictionGroup("v", 1, ((2, 10, 0.5), (4, 14, 0.5)))
    assert fuse_mean(g) == (3.0, 12.0)
    assert fuse_mean(PredictionGroup("v", 1, ((1.5, 7.25, 0.3),))) == (1.5, 7.25)
    assert fuse_mean(PredictionGroup("v", 1, ((3, 9, 0.1),) * 4)) == (3.0, 9.0)


def test_fuse_weighted_examples():
    g = PredictionGroup("v", 1, ((2, 10, 1.0), (4, 14, 3.0)))
    assert fuse_weighted(g) == (3.5, 13.0, 3.0)
    eq = PredictionGroup("v", 1, ((2, 10, 0.4), (4, 14, 0.4)))
    assert fuse_weighted(eq)[:2] == pytest.approx(fuse_mean(eq), abs=1e-12)
    one = PredictionGroup("v", 1, ((2, 10, 0.0), (4, 14, 0.6)))
    assert fuse_weighted(one)[:2] == pytest.approx((4.0, 14.0), abs=1e-12)


def test_fuse_weighted_zero_scores_falls_back():
    g = PredictionGroup("v", 1, ((2, 10, 0.0), (4, 14, 0.0)))
    with pytest.warns(RuntimeWarning):
        assert fuse_weighted(g) == (3.0, 12.0, 0.0)


def test_empty_group_rejected():
    with pytest.raises(ConfigError):
        PredictionGroup("v", 1, ())


@settings(max_examples=200)
@given(
    st.lists(
        st.tuples(st.floats(0, 1000), st.floats(0, 100), st.floats(0.01, 1.0)),
        min_size=1,
        max_size=8,
    )
)
def test_fusion_inside_hull(members):
    members = tuple((s, s + d, p) for s, d, p in members)
    g = PredictionGroup("v", 1, members)
    starts = [m[0] for m in members]
    ends = [m[1] for m in members]
    for ts, te in (fuse_mean(g), fuse_weighted(g)[:2]):
        assert min(starts) - 1e-9 <= ts <= max(starts) + 1e-9
        assert min(ends) - 1e-9 <= te <= max(ends) + 1e-9


def test_ensemble_one_per_video_label():
    rnd = random.Random(0)
    sources = [
        [det(rnd.uniform(0, 50), 60, rnd.randint(1, 3), rnd.random(), f"v{rnd.randint(0, 2)}") for _ in range(30)]
        for _ in range(3)
    ]
    fused = ensemble(sources, "weighted")
    keys = [(d.video_id, d.label) for d in fused]
    assert len(keys) == len(set(keys))
    assert fused == sorted(fused, key=lambda d: (d.video_id, d.t_start, d.label))
    with pytest.raises(ConfigError):
        ensemble(sources, "median")


def test_ensemble_two_sources():
    a = [det(2, 10, 1, 1.0), det(0, 1, 1, 0.2)]
    b = [det(4, 14, 1, 3.0 / 4)]
    (mean,) = ensemble([a, b], "mean")
    assert (mean.t_start, mean.t_end, mean.score) == (3.0, 12.0, 1.0)
    (w,) = ensemble([a, b], "weighted")
    assert w.t_start == pytest.approx((2 * 1.0 + 4 * 0.75) / 1.75)


@given(st.lists(st.tuples(st.floats(0, 1e4), st.floats(0.01, 100), st.floats(0.01, 1)), min_size=1, max_size=6))
def test_fused_boundaries_stay_in_member_hull(raw):
    members = tuple((s, s + d, w) for s, d, w in raw)
    starts, ends = [m[0] for m in members], [m[1] for m in members]
    for ts, te in (fuse_mean(PredictionGroup("v", 1, members)), fuse_weighted(PredictionGroup("v", 1, members))[:2]):
        assert min(starts) <= ts <= max(starts)
        assert min(ends) <= te <= max(ends)


def test_single_member_is_identity():
    m = ((12.761009898428577, 13.32904380943946, 0.3),)
    assert fuse_weighted(PredictionGroup("v", 1, m)) == m[0]
