import json
import struct

import numpy as np
import pytest

from amatal.errors import ConfigError, DataError
from amatal.formats import (
    FeatureSequence,
    VideoAnnotation,
    dumps_features,
    dumps_predictions,
    dumps_weights,
    ground_truth,
    loads_features,
    loads_predictions,
    loads_weights,
    read_annotations,
    read_features,
    read_predictions,
    read_weights,
    write_annotations,
    write_features,
    write_predictions,
    write_weights,
)
from amatal.model import AmaConfig, WeightBundle, expected_shapes
from amatal.postprocess import Detection
from amatal.synth import init_weights


def amaf(header, payload):
    head = json.dumps(header).encode()
    return b"AMAF" + struct.pack("<BI", 1, len(head)) + head + payload


HEADER = {"video_id": "v", "n_chunks": 4, "dim": 3, "fps": 30.0, "frames_per_chunk": 16}


def test_features_round_trip_bit_exact(tmp_path, rng):
    data = rng.standard_normal((7, 768)).astype(np.float32)
    data[0, 0] = -0.0
    seq = FeatureSequence("clip_01", data, 29.97, 16)
    path = tmp_path / "a.amaf"
    write_features(path, seq)
    back = read_features(path)
    assert back.data.tobytes() == data.tobytes()
    assert (back.video_id, back.fps, back.frames_per_chunk, back.n_chunks, back.dim) == ("clip_01", 29.97, 16, 7, 768)
    assert dumps_features(back) == path.read_bytes()


def test_features_layout():
    buf = dumps_features(FeatureSequence("v", np.arange(6, dtype=np.float32).reshape(2, 3)))
    assert buf[:4] == b"AMAF" and buf[4] == 1
    (hlen,) = struct.unpack_from("<I", buf, 5)
    header = json.loads(buf[9:9 + hlen])
    assert header == {"video_id": "v", "n_chunks": 2, "dim": 3, "fps": 30.0, "frames_per_chunk": 16}
    np.testing.assert_array_equal(np.frombuffer(buf[9 + hlen:], "<f4"), np.arange(6))


def test_features_bad_magic():
    buf = b"XXXX" + dumps_features(FeatureSequence("v", np.zeros((1, 3))))[4:]
    with pytest.raises(DataError, match="bad magic"):
        loads_features(buf)


def test_features_payload_size_mismatch():
    with pytest.raises(DataError, match="payload size mismatch"):
        loads_features(amaf(HEADER, np.zeros(10, "<f4").tobytes()))


def test_features_truncated():
    with pytest.raises(DataError, match="truncated payload"):
        loads_features(amaf(HEADER, b"\x00" * 47))
    with pytest.raises(DataError, match="truncated header"):
        loads_features(b"AMAF\x01")
    with pytest.raises(DataError, match="truncated header"):
        loads_features(b"AMAF\x01" + struct.pack("<I", 500) + b"{}")


def test_features_non_finite_names_offset():
    payload = np.zeros(12, "<f4")
    payload[5] = np.nan
    buf = amaf(HEADER, payload.tobytes())
    offset = len(buf) - 48 + 20
    with pytest.raises(DataError, match=f"byte offset {offset}"):
        loads_features(buf)


def test_features_bad_version_and_header():
    buf = bytearray(amaf(HEADER, np.zeros(12, "<f4").tobytes()))
    buf[4] = 2
    with pytest.raises(DataError, match="version"):
        loads_features(bytes(buf))
    with pytest.raises(DataError, match="header"):
        loads_features(amaf({"video_id": "v"}, b""))


def test_missing_file_is_data_error(tmp_path):
    with pytest.raises(DataError):
        read_features(tmp_path / "nope.amaf")


def small_cfg():
    return AmaConfig(input_dim=16, channels=8, num_levels=2, allow_any_dim=True)


def test_weights_round_trip(tmp_path):
    cfg = small_cfg()
    w = init_weights(cfg, seed=9)
    path = tmp_path / "w.amaw"
    write_weights(path, w)
    back = read_weights(path, cfg)
    assert back.names() == w.names()
    for name in w.names():
        assert back[name].tobytes() == w[name].tobytes()
    assert dumps_weights(back) == path.read_bytes()


def test_weights_missing_tensor():
    cfg = small_cfg()
    w = init_weights(cfg)
    del w.tensors["cls_head.0.w"]
    with pytest.raises(ConfigError, match="cls_head.0.w"):
        loads_weights(dumps_weights(w), cfg)


def test_weights_shape_mismatch_names_both_shapes():
    cfg = AmaConfig(input_dim=16, channels=256, num_levels=1, allow_any_dim=True)
    t = {n: np.zeros(s, np.float32) for n, s in expected_shapes(cfg).items()}
    t["cls_head.0.w"] = np.zeros(16, np.float32)
    with pytest.raises(ConfigError, match=r"\[16\].*\[256, 256, 1\]"):
        loads_weights(dumps_weights(WeightBundle(t)), cfg)


def _amaw(manifest, blob):
    head = json.dumps(manifest).encode()
    return b"AMAW" + struct.pack("<BI", 1, len(head)) + head + blob


def test_weights_overlapping_offsets():
    buf = _amaw(
        [{"name": "a", "shape": [2], "byte_offset": 0}, {"name": "b", "shape": [2], "byte_offset": 4}],
        np.zeros(3, "<f4").tobytes(),
    )
    with pytest.raises(DataError, match="overlapping"):
        loads_weights(buf)


def test_weights_out_of_range_and_bad_magic():
    with pytest.raises(DataError, match="past the end"):
        loads_weights(_amaw([{"name": "a", "shape": [4], "byte_offset": 0}], b"\x00" * 8))
    with pytest.raises(DataError, match="bad magic"):
        loads_weights(b"AMAF" + _amaw([], b"")[4:])


ANN = {
    "videos": [
        {
            "video_id": "v1",
            "fps": 30.0,
            "duration_s": 60.0,
            "segments": [{"label": 3, "start_s": 1.5, "end_s": 4.0}, {"label": 16, "start_s": 10.0, "end_s": 20.0}],
        }
    ]
}


def test_annotations_read(tmp_path):
    p = tmp_path / "a.json"
    p.write_text(json.dumps(ANN))
    (video,) = read_annotations(p)
    assert video.segments == [(3, 1.5, 4.0), (16, 10.0, 20.0)]
    gts = ground_truth([video])
    assert [(g.video_id, g.label, g.g_s, g.g_e) for g in gts] == [("v1", 3, 1.5, 4.0), ("v1", 16, 10.0, 20.0)]


def test_annotations_round_trip(tmp_path):
    videos = [VideoAnnotation("v1", 30.0, 60.0, [(3, 1.5, 4.0)])]
    p = tmp_path / "a.json"
    write_annotations(p, videos)
    assert read_annotations(p) == videos


@pytest.mark.parametrize(
    "seg, msg",
    [
        ({"label": 3, "start_s": -1.0, "end_s": 4.0}, "negative"),
        ({"label": 17, "start_s": 1.0, "end_s": 4.0}, "unknown label"),
        ({"label": 3, "start_s": 5.0, "end_s": 4.0}, "start_s < end_s"),
        ({"label": 3, "start_s": 1.0}, "missing"),
    ],
)
def test_annotations_errors(tmp_path, seg, msg):
    bad = {"videos": [dict(ANN["videos"][0], segments=[seg])]}
    p = tmp_path / "a.json"
    p.write_text(json.dumps(bad))
    with pytest.raises(DataError, match=msg):
        read_annotations(p)


def test_annotations_duplicate_warns(tmp_path):
    seg = {"label": 3, "start_s": 1.0, "end_s": 4.0}
    p = tmp_path / "a.json"
    p.write_text(json.dumps({"videos": [dict(ANN["videos"][0], segments=[seg, seg])]}))
    with pytest.warns(UserWarning, match="duplicate"):
        read_annotations(p)


DETS = [
    Detection(5.6, 9.6, 2, 0.912345678, "b"),
    Detection(0.2666666, 3.0, 15, 0.75, "a"),
    Detection(0.2666666, 3.0, 4, 0.5, "a"),
]


def test_predictions_jsonl_format_and_order():
    text = dumps_predictions(DETS)
    lines = text.splitlines()
    assert lines[0] == '{"video_id": "a", "label": 4, "t_start": 0.266667, "t_end": 3.000000, "score": 0.500000}'
    assert [json.loads(x)["video_id"] for x in lines] == ["a", "a", "b"]
    assert json.loads(lines[2])["score"] == 0.912346


@pytest.mark.parametrize("suffix", [".jsonl", ".csv"])
def test_predictions_round_trip(tmp_path, suffix):
    p = tmp_path / f"p{suffix}"
    write_predictions(p, DETS)
    first = p.read_bytes()
    back = read_predictions(p)
    assert len(back) == 3
    write_predictions(p, back)
    assert p.read_bytes() == first


def test_predictions_csv_header(tmp_path):
    p = tmp_path / "p.csv"
    write_predictions(p, DETS)
    assert p.read_text().splitlines()[0] == "video_id,label,t_start,t_end,score"


def test_predictions_empty(tmp_path):
    p = tmp_path / "p.jsonl"
    p.write_text("")
    assert read_predictions(p) == []
    assert loads_predictions("", "csv") == []


def test_predictions_malformed_line_number():
    good = dumps_predictions(DETS[:2])
    with pytest.raises(DataError, match="line 3"):
        loads_predictions(good + "{not json\n")
    with pytest.raises(DataError, match="line 1"):
        loads_predictions('{"video_id": "a", "label": 1}\n')


@pytest.mark.parametrize(
    "line, msg",
    [
        ('{"video_id": "a", "label": 1, "t_start": -1.0, "t_end": 2.0, "score": 0.5}', "negative"),
        ('{"video_id": "a", "label": 99, "t_start": 1.0, "t_end": 2.0, "score": 0.5}', "unknown label"),
        ('{"video_id": "a", "label": 1, "t_start": NaN, "t_end": 2.0, "score": 0.5}', "non-finite"),
    ],
)
def test_predictions_value_errors(line, msg):
    with pytest.raises(DataError, match=msg):
        loads_predictions(line + "\n")
