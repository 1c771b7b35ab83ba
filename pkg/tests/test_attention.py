import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocogb.attention import (AttentionError, AttentionRecord, AttentionScore, aggregate_attention,
                              attention_sum, load_attention, pointing_game, score_all, upsample_bilinear)
from cocogb.coco import SegMask
from cocogb.lexicon import GenderLabel

W, M = GenderLabel.WOMEN, GenderLabel.MEN


def rec(grid):
    return AttentionRecord(1, "man", grid)


def mask_of(bits):
    bits = np.asarray(bits, dtype=bool)
    return SegMask(bits.shape[1], bits.shape[0], bits)


def test_two_by_two_to_four_by_four_by_hand():
    # corner-aligned samples at 0, 1/3, 2/3, 1 of the bilinear patch f(y, x) = 1 + x + 2y
    raw = [[1 + c / 3 + 2 * r / 3 for c in range(4)] for r in range(4)]
    g = [[1.0, 2.0], [3.0, 4.0]]
    assert np.allclose(upsample_bilinear(g, 4, 4, renormalize=False), raw, rtol=0, atol=1e-14)
    assert np.allclose(upsample_bilinear(g, 4, 4), np.array(raw) * 10 / 40, rtol=0, atol=1e-14)


def test_constant_and_single_cell_grids():
    assert np.allclose(upsample_bilinear(np.full((3, 5), 2.0), 7, 4, renormalize=False), 2.0)
    out = upsample_bilinear([[5.0]], 3, 2)
    assert np.allclose(out, out[0, 0]) and out.sum() == pytest.approx(5.0)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 20), st.integers(1, 20), st.integers(0, 2**31))
def test_upsample_preserves_mass_and_sign(gh, gw, th, tw, seed):
    g = np.random.default_rng(seed).uniform(0, 1, (gh, gw))
    out = upsample_bilinear(g, tw, th)
    assert out.shape == (th, tw) and (out >= 0).all()
    assert out.sum() == pytest.approx(g.sum(), rel=1e-12)


def test_pointing_spike_inside_and_outside():
    m = mask_of([[0, 0, 0], [0, 1, 1], [0, 1, 1]])
    spike_in = np.zeros((3, 3))
    spike_in[2, 2] = 1
    spike_out = np.zeros((3, 3))
    spike_out[0, 0] = 1
    assert pointing_game(rec(spike_in), m)
    assert not pointing_game(rec(spike_out), m)
    assert not pointing_game(rec(spike_in), mask_of(np.zeros((3, 3))))


def test_pointing_tie_goes_to_first_row_major():
    g = np.ones((2, 2))
    assert pointing_game(rec(g), mask_of([[1, 0], [0, 0]]))
    assert not pointing_game(rec(g), mask_of([[0, 1], [1, 1]]))


def test_pointing_matches_exhaustive_argmax():
    rng = np.random.default_rng(4)
    for _ in range(60):
        g = rng.uniform(0, 1, (int(rng.integers(2, 6)), int(rng.integers(2, 6))))
        h, w = int(rng.integers(4, 16)), int(rng.integers(4, 16))
        bits = rng.uniform(size=(h, w)) < 0.4
        up = upsample_bilinear(g, w, h)
        best, where = -1.0, None
        for r in range(h):
            for c in range(w):
                if up[r, c] > best:
                    best, where = up[r, c], (r, c)
        assert pointing_game(rec(g), mask_of(bits)) == bool(bits[where])
        assert pointing_game(rec(g * 7.5), mask_of(bits)) == pointing_game(rec(g), mask_of(bits))


def test_attention_sum_examples():
    half = mask_of([[1, 1, 0, 0]] * 4)
    assert attention_sum(rec(np.ones((4, 4))), half) == pytest.approx(0.5, abs=1e-9)
    g = np.zeros((4, 4))
    g[1, 1] = 3
    assert attention_sum(rec(g), half) == pytest.approx(1.0, abs=1e-12)


def test_attention_sum_matches_double_loop():
    rng = np.random.default_rng(8)
    for _ in range(30):
        g = rng.uniform(0, 1, (3, 4))
        bits = rng.uniform(size=(9, 11)) < 0.5
        up = upsample_bilinear(g, 11, 9)
        inside = total = 0.0
        for r in range(9):
            for c in range(11):
                total += up[r, c]
                if bits[r, c]:
                    inside += up[r, c]
        assert attention_sum(rec(g), mask_of(bits)) == pytest.approx(inside / total, abs=1e-9)


@settings(max_examples=40)
@given(st.integers(0, 2**31))
def test_attention_sum_bounds_and_monotone(seed):
    rng = np.random.default_rng(seed)
    g = rng.uniform(0, 1, (4, 4)) + 1e-3
    small = rng.uniform(size=(8, 8)) < 0.3
    big = small | (rng.uniform(size=(8, 8)) < 0.3)
    assert attention_sum(rec(g), mask_of(np.ones((8, 8)))) == pytest.approx(1.0)
    assert attention_sum(rec(g), mask_of(np.zeros((8, 8)))) == 0.0
    assert attention_sum(rec(g), mask_of(small)) <= attention_sum(rec(g), mask_of(big)) + 1e-12


def test_invalid_grids():
    for bad in ([[0.0, 0.0]], [[-1.0, 2.0]], [1.0, 2.0], [[float("nan")]]):
        with pytest.raises(AttentionError):
            rec(bad)


def test_aggregate_four_records():
    scores = [(W, AttentionScore(True, 0.8)), (W, AttentionScore(False, 0.4)),
              (M, AttentionScore(True, 0.5)), (M, AttentionScore(True, 0.7))]
    t = aggregate_attention(scores)
    assert t.pointing == pytest.approx({"women": 50.0, "men": 100.0, "average": 75.0, "pooled": 75.0})
    assert t.attention_sum["women"] == pytest.approx(60.0)
    assert t.attention_sum["men"] == pytest.approx(60.0)
    assert "Pointing Game" in t.to_text()


def test_aggregate_all_hits():
    t = aggregate_attention([(M, AttentionScore(True, 1.0))] * 3)
    assert t.pointing["men"] == 100.0 and t.pointing["women"] is None


def test_load_and_parallel_scoring(tmp_path, monkeypatch):
    rng = np.random.default_rng(1)
    rows = [{"image_id": i, "token": "woman", "grid": rng.uniform(0.1, 1, (3, 3)).tolist()} for i in range(12)]
    p = tmp_path / "a.jsonl"
    p.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    records = load_attention(p)
    masks = {i: mask_of(rng.uniform(size=(6, 6)) < 0.5) for i in range(12)}
    serial = score_all(records, masks.__getitem__, max_workers=1)
    monkeypatch.setenv("COCOGB_THREADS", "4")
    assert score_all(records, masks.__getitem__) == serial
    p.write_text('{"image_id": 1}\n')
    with pytest.raises(AttentionError, match=":1:"):
        load_attention(p)
