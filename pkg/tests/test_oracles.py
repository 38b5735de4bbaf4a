"""The reference implementations are checked against hand-worked values."""
import random

import numpy as np
import pytest

from amatal.oracles import oracle_ap, oracle_conv, oracle_dense_attention, oracle_max_pool, oracle_nms
from amatal.postprocess import GridSegment, nms_multiclass


def test_oracle_ap_hand_values():
    gts = [("v", 0, 10), ("v", 20, 30)]
    assert oracle_ap([("v", 0, 10, 1.0), ("v", 20, 30, 0.9)], gts, 0.5) == 1.0
    # hit, miss, hit: 0.5 * 1 + 0.5 * 2/3
    dets = [("v", 0, 10, 0.9), ("v", 50, 60, 0.8), ("v", 20, 30, 0.7)]
    assert oracle_ap(dets, gts, 0.5) == pytest.approx(5 / 6, abs=1e-15)
    assert oracle_ap([], gts, 0.5) == 0.0
    assert oracle_ap(dets, [], 0.5) is None
    assert oracle_ap([("w", 0, 10, 1.0)], [("v", 0, 10)], 0.1) == 0.0


def test_oracle_ap_each_gt_used_once():
    assert oracle_ap([("v", 0, 10, 0.9), ("v", 0, 10, 0.8)], [("v", 0, 10)], 0.5) == 1.0
    assert oracle_ap([("v", 0, 9, 0.9), ("v", 0, 10, 0.8)], [("v", 0, 10)], 0.95) == 0.5


def test_oracle_dense_attention_single_step_returns_value():
    q, k, v = np.array([[0.3, -2.0]]), np.array([[5.0, 1.0]]), np.array([[7.0, -1.5, 2.0]])
    np.testing.assert_array_equal(oracle_dense_attention(q, k, v), v)


def test_oracle_dense_attention_uniform_when_keys_equal():
    k = np.ones((4, 2))
    v = np.arange(8.0).reshape(4, 2)
    out = oracle_dense_attention(np.ones((3, 2)), k, v)
    np.testing.assert_allclose(out, np.tile(v.mean(0), (3, 1)))


def test_oracle_conv_and_pool_hand_values():
    out, mask = oracle_conv([[1, 2, 3, 4]], [True, True, False, True], [[[1, 1, 1]]], [0.5], stride=2)
    np.testing.assert_array_equal(out, [[3.5, 0.0]])
    np.testing.assert_array_equal(mask, [True, False])
    np.testing.assert_array_equal(oracle_max_pool([[3, 1, 4, 1, 5]], 3), [[3, 4, 4, 5, 5]])


def test_oracle_nms_hand_values():
    segs = [(0, 10, 1, 0.9), (1, 10, 1, 0.8), (1, 10, 2, 0.7), (20, 30, 1, 0.6)]
    assert oracle_nms(segs, 0.5) == [(0, 10, 1, 0.9), (1, 10, 2, 0.7), (20, 30, 1, 0.6)]
    # tIoU exactly at the threshold survives
    assert len(oracle_nms([(0, 2, 1, 0.9), (1, 2, 1, 0.8)], 0.5)) == 2


@pytest.mark.parametrize("block", range(10))
def test_oracle_nms_agrees_with_production(backend, block):
    rnd = random.Random(block)
    for _ in range(100):
        segs = []
        for _ in range(rnd.randint(0, 50)):
            left = rnd.randint(0, 60) / 2
            segs.append(GridSegment(left, left + rnd.randint(1, 30) / 2, rnd.randint(1, 4), rnd.randint(1, 20) / 20))
        thresh = rnd.choice([0.3, 0.5, 0.7])
        got = [(s.left, s.right, s.label, s.score) for s in nms_multiclass(segs, thresh)]
        assert got == oracle_nms([(s.left, s.right, s.label, s.score) for s in segs], thresh)
