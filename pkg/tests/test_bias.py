import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cocogb.bias import (CooccurrenceTable, EmptyReportError, bias_ratio, build_report, cooccurrence, dump_report,
                         image_categories)
from cocogb.coco import InstanceAnnotation
from cocogb.lexicon import GenderLabel

W, M, D = GenderLabel.WOMEN, GenderLabel.MEN, GenderLabel.DISCARD


def test_presence_not_instance_count():
    insts = [InstanceAnnotation(1, 4, [], False), InstanceAnnotation(1, 4, [], False)]
    table = cooccurrence({1: W}, image_categories(insts))
    assert table.cell(4) == (1, 0)


def test_discard_contributes_nothing():
    table = cooccurrence({1: D}, {1: {4}})
    assert table.cell(4) == (0, 0)
    assert table.images == [0, 0]


def test_ten_image_fixture_hand_count():
    # surfboard=1, oven=2, kite=3
    labels = {1: M, 2: M, 3: M, 4: W, 5: W, 6: M, 7: D, 8: W, 9: M, 10: W}
    cats = {1: {1}, 2: {1, 3}, 3: {1}, 4: {2}, 5: {2, 3}, 6: {3}, 7: {1, 2, 3}, 8: {2}, 9: {1}, 10: {1}}
    table = cooccurrence(labels, cats)
    assert table.cell(1) == (1, 4)
    assert table.cell(2) == (3, 0)
    assert table.cell(3) == (1, 2)
    assert table.images == [4, 5]


@pytest.mark.parametrize("w, m, r", [(5, 5, 0.5), (1, 9, 0.9), (0, 7, 1.0)])
def test_bias_ratio_examples(w, m, r):
    assert bias_ratio(w, m) == r


def test_bias_ratio_support_threshold():
    assert bias_ratio(3, 4, min_support=10) is None
    assert bias_ratio(0, 0) is None


@given(st.integers(0, 500), st.integers(0, 500), st.integers(1, 50))
def test_antisymmetry_and_scaling(w, m, k):
    if w + m == 0:
        return
    assert bias_ratio(w, m) + bias_ratio(m, w) == pytest.approx(1.0, abs=1e-15)
    assert bias_ratio(k * w, k * m) == pytest.approx(bias_ratio(w, m), abs=1e-15)


def test_symmetric_corpus_report():
    table = CooccurrenceTable({c: [k, k] for c, k in zip(range(1, 6), (10, 20, 30, 40, 50))}, [100, 100])
    rep = build_report(table)
    assert rep.average_bias_ratio == 0.5
    assert rep.pct_male_skewed == 0.0


def test_report_excludes_unsupported_categories():
    table = CooccurrenceTable({1: [1, 9], 2: [0, 3], 3: [6, 4]}, [7, 16])
    rep = build_report(table, min_support=10)
    assert rep.ratios[2] is None
    assert rep.average_bias_ratio == pytest.approx((0.9 + 0.4) / 2)
    assert rep.pct_male_skewed == 0.5
    assert rep.women_to_men == pytest.approx(16 / 7)


def test_top_k_view_uses_most_supported():
    table = CooccurrenceTable({1: [10, 90], 2: [5, 5], 3: [20, 20]}, [1, 1])
    rep = build_report(table, min_support=1, top_k=2)
    assert rep.top_k_average_bias_ratio == pytest.approx((0.9 + 0.5) / 2)


def test_empty_report():
    with pytest.raises(EmptyReportError):
        build_report(CooccurrenceTable())
    with pytest.raises(EmptyReportError):
        build_report(CooccurrenceTable({1: [1, 1]}), min_support=10)


@given(st.dictionaries(st.integers(1, 30), st.sampled_from([W, M, D]), max_size=40),
       st.integers(0, 2**31))
def test_merge_of_shards_equals_whole(labels, seed):
    import random
    rnd = random.Random(seed)
    cats = {i: {rnd.randint(1, 5) for _ in range(rnd.randint(0, 3))} for i in labels}
    ids = sorted(labels)
    cut = len(ids) // 2
    a = cooccurrence({i: labels[i] for i in ids[:cut]}, cats)
    b = cooccurrence({i: labels[i] for i in ids[cut:]}, cats)
    assert a.merge(b) == cooccurrence(labels, cats)
    assert b.merge(a) == a.merge(b)


@given(st.dictionaries(st.integers(1, 80), st.tuples(st.integers(0, 40), st.integers(0, 40)), min_size=1))
def test_average_in_unit_interval(cells):
    table = CooccurrenceTable({c: list(v) for c, v in cells.items()})
    try:
        rep = build_report(table, min_support=1)
    except EmptyReportError:
        return
    assert 0.0 <= rep.average_bias_ratio <= 1.0


def test_text_sorted_by_ratio_and_json(tmp_path):
    table = CooccurrenceTable({1: [9, 1], 2: [1, 9], 3: [5, 5], 4: [0, 1]}, [3, 3])
    rep = build_report(table, min_support=2, names={1: "oven", 2: "surfboard", 3: "kite", 4: "tie"})
    body = rep.to_text().splitlines()[1:5]
    assert [line.split()[0] for line in body] == ["surfboard", "kite", "oven", "tie"]
    dump_report(rep, tmp_path / "r.json", tmp_path / "r.txt")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["categories"][3]["bias_ratio"] is None
