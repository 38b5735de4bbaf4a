import numpy as np
import pytest

from amatal.errors import ConfigError
from amatal.formats import dumps_features
from amatal.synth import Plant, SynthSpec, diagnostic_config, diagnostic_weights, gen_dataset, plant_profile


def test_same_seed_same_bytes():
    spec = SynthSpec(seed=42, n_videos=3, n_chunks=64, dim=32, plants_per_video=2)
    a, ann_a, _ = gen_dataset(spec)
    b, ann_b, _ = gen_dataset(spec)
    assert [dumps_features(s) for s in a] == [dumps_features(s) for s in b]
    assert ann_a == ann_b
    c, _, _ = gen_dataset(SynthSpec(seed=43, n_videos=3, n_chunks=64, dim=32, plants_per_video=2))
    assert dumps_features(a[0]) != dumps_features(c[0])


def test_zero_plants_empty_annotations():
    _, ann, _ = gen_dataset(SynthSpec(n_videos=2, n_chunks=32, dim=16, plants_per_video=0))
    assert all(v.segments == [] for v in ann)


def test_explicit_plant_time_conversion():
    spec = SynthSpec(n_videos=1, n_chunks=64, dim=16, plants=((Plant(5, 10, 8),),))
    _, (video,), _ = gen_dataset(spec)
    ((label, start, end),) = video.segments
    assert label == 5
    assert start == pytest.approx(10 * 16 / 30) and f"{start:.4f}" == "5.3333"
    assert end == pytest.approx(9.6)
    assert video.duration_s == pytest.approx(64 * 16 / 30)


def test_overlapping_plants_rejected():
    spec = SynthSpec(n_videos=1, n_chunks=64, dim=16, plants=((Plant(1, 10, 8), Plant(2, 15, 8)),))
    with pytest.raises(ConfigError, match="overlapping"):
        gen_dataset(spec)


def test_random_plants_valid():
    spec = SynthSpec(seed=7, n_videos=10, n_chunks=256, dim=16, plants_per_video=6)
    _, _, plants = gen_dataset(spec)
    for per_video in plants:
        spans = sorted((p.start_chunk, p.end_chunk) for p in per_video)
        assert all(e0 + spec.min_gap <= s1 for (_, e0), (s1, _) in zip(spans, spans[1:]))
        assert spans[0][0] >= spec.min_gap and spans[-1][1] <= 256 - spec.min_gap
        assert len({p.label for p in per_video}) == 6


def test_too_many_plants():
    with pytest.raises(ConfigError):
        gen_dataset(SynthSpec(n_chunks=32, dim=16, plants_per_video=5))


def test_triangular_profile_unique_peak():
    sig = plant_profile(Plant(1, 10, 8), 40, 4.0, "triangular")
    assert np.argmax(sig) == 14 and sig[14] == 4.0
    assert (np.delete(sig, 14) < 4.0).all()
    assert sig[:10].sum() == 0 and sig[18:].sum() == 0
    box = plant_profile(Plant(1, 10, 8), 40, 4.0, "boxcar")
    assert box.sum() == 32.0


def test_diagnostic_requires_enough_channels():
    spec = SynthSpec(dim=16)
    with pytest.raises(ConfigError):
        diagnostic_weights(diagnostic_config(spec, channels=16), spec)
    with pytest.raises(ConfigError):
        diagnostic_weights(diagnostic_config(spec, channels=20, neck="sppf"), spec)


def test_diagnostic_background_stays_below_half():
    from amatal.model import forward
    from amatal.numerics import sigmoid

    spec = SynthSpec(seed=5, n_videos=3, n_chunks=128, plants_per_video=0)
    seqs, _, _ = gen_dataset(spec)
    cfg = diagnostic_config(spec)
    w = diagnostic_weights(cfg, spec)
    for s in seqs:
        raw = forward(s, cfg, w)
        assert max(sigmoid(lg).max() for lg in raw.cls_logits) < 0.5
