import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocogb.bias import bias_ratio
from cocogb.lexicon import GenderLabel
from cocogb.splits import (CapacityError, ConstraintError, LabeledImage, SplitSpec, balance_deviation,
                           build_v1_secret, build_v2, verify_split)
from cocogb.synthetic import mixed_corpus, skewed_pool
from oracles import brute_force_optimum, deviation_exact

W, M, D = GenderLabel.WOMEN, GenderLabel.MEN, GenderLabel.DISCARD


def _selected(pool, spec):
    by_id = {im.image_id: im for im in pool}
    chosen = [by_id[i] for i in spec.test]
    return [im for im in chosen if im.label is W], [im for im in chosen if im.label is M]


# ---------------------------------------------------------------- V1

def test_flat_objective_falls_back_to_id_order():
    pool = [LabeledImage(i, W if i % 2 else M) for i in range(30, 0, -1)]
    spec = build_v1_secret(pool, per_gender=4)
    assert spec.test == sorted([1, 3, 5, 7] + [2, 4, 6, 8])


def test_v1_quota_and_label_filter():
    pool = skewed_pool(60, 5, seed=2) + [LabeledImage(1000 + k, D, frozenset({1})) for k in range(10)]
    spec = build_v1_secret(pool, per_gender=8)
    women, men = _selected(pool, spec)
    assert len(women) == len(men) == 8
    assert all(i < 1000 for i in spec.test)


def test_v1_capacity_error_reports_shortfall():
    pool = [LabeledImage(i, W) for i in range(5)] + [LabeledImage(10 + i, M) for i in range(2)]
    with pytest.raises(CapacityError, match="men"):
        build_v1_secret(pool, per_gender=3)


def test_balance_deviation_matches_exact_oracle():
    pool = skewed_pool(30, 6, seed=4)
    women = [im for im in pool if im.label is W][:7]
    men = [im for im in pool if im.label is M][:7]
    cats = sorted({c for im in pool for c in im.categories})
    cw = [sum(c in im.categories for im in women) for c in cats]
    cm = [sum(c in im.categories for im in men) for c in cats]
    assert balance_deviation(cw, cm) == pytest.approx(float(deviation_exact(women, men)), abs=1e-12)


@pytest.mark.parametrize("seed", [0, 3, 7])
def test_v1_close_to_exhaustive_optimum(seed):
    pool = skewed_pool(40, 6, skew=0.75, seed=seed)
    spec = build_v1_secret(pool, per_gender=5)
    got = float(deviation_exact(*_selected(pool, spec)))
    assert got <= 1.1 * brute_force_optimum(pool, 5) + 1e-12


def test_refinement_never_hurts():
    for seed in range(6):
        pool = skewed_pool(50, 7, seed=seed)
        plain = deviation_exact(*_selected(pool, build_v1_secret(pool, 6, refine=False)))
        refined = deviation_exact(*_selected(pool, build_v1_secret(pool, 6)))
        assert refined <= plain


def test_greedy_steps_are_locally_optimal():
    pool = skewed_pool(40, 6, seed=5)
    spec = build_v1_secret(pool, per_gender=6, refine=False)
    by_id = {im.image_id: im for im in pool}
    chosen = {W: [], M: []}
    for entry in spec.construction_log:
        im = by_id[entry.image_id]
        taken = {x.image_id for x in chosen[W] + chosen[M]}
        others = chosen[M] if im.label is W else chosen[W]

        def after(cand):
            mine = chosen[im.label] + [cand]
            return deviation_exact(mine, others) if im.label is W else deviation_exact(others, mine)

        best = min(after(c) for c in pool if c.label is im.label and c.image_id not in taken)
        assert after(im) == best
        # ties go to the smallest id
        assert im.image_id == min(c.image_id for c in pool if c.label is im.label
                                  and c.image_id not in taken and after(c) == best)
        chosen[im.label].append(im)


def test_v1_deterministic():
    pool = skewed_pool(80, 8, seed=9)
    assert build_v1_secret(pool, 10).dumps() == build_v1_secret(list(reversed(pool)), 10).dumps()


# ---------------------------------------------------------------- V2

def test_single_category_all_men():
    data = [LabeledImage(i, M, frozenset({1})) for i in range(1, 21)]
    spec = build_v2(data, val_size=3, test_size=6, min_train_per_category=0, seed=1)
    assert len(spec.test) == 6 and len(spec.val) == 3 and len(spec.train) == 11
    assert spec.test == list(range(1, 7))


def _three_category_fixture():
    data, next_id = [], 1
    for cat, n_men, n_women in ((1, 16, 4), (2, 4, 16), (3, 12, 8)):
        for label, n in ((M, n_men), (W, n_women)):
            for _ in range(n):
                data.append(LabeledImage(next_id, label, frozenset({cat})))
                next_id += 1
    for _ in range(10):
        data.append(LabeledImage(next_id, D, frozenset()))
        next_id += 1
    return data


def test_three_category_anti_correlation():
    data = _three_category_fixture()
    spec = build_v2(data, val_size=5, test_size=12, min_train_per_category=0, seed=0)
    by_id = {im.image_id: im for im in data}

    def ratio(ids, cat):
        ims = [by_id[i] for i in ids if cat in by_id[i].categories]
        return bias_ratio(sum(im.label is W for im in ims), sum(im.label is M for im in ims))

    # hand count: cat 1 gives its 4 women, cat 2 its 4 men, cat 3 four of its 8 women
    assert ratio(spec.test, 1) == 0.0 and ratio(spec.test, 2) == 1.0 and ratio(spec.test, 3) == 0.0
    remaining = spec.train + spec.val
    assert ratio(remaining, 1) == 1.0 and ratio(remaining, 2) == 0.0 and ratio(remaining, 3) == 0.75
    for cat in (1, 2, 3):
        assert (ratio(spec.test, cat) - 0.5) * (ratio(spec.train, cat) - 0.5) < 0


def test_min_train_constraint_names_category():
    data = [LabeledImage(i, W if i % 4 == 0 else M, frozenset({7})) for i in range(1, 11)]
    with pytest.raises(ConstraintError) as exc:
        build_v2(data, val_size=1, test_size=5, min_train_per_category=8, seed=0)
    assert exc.value.category_id == 7


def test_quota_larger_than_dataset():
    with pytest.raises(ConstraintError):
        build_v2([LabeledImage(1, W)], val_size=1, test_size=1, min_train_per_category=0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 30))
def test_v2_quotas_and_coverage(seed, min_train):
    data = mixed_corpus(400, n_categories=8, seed=seed)
    spec = build_v2(data, val_size=40, test_size=80, min_train_per_category=min_train, seed=seed)
    check = verify_split(spec, data, val_size=40, test_size=80, min_train_per_category=min_train)
    assert check.passed, check.failures
    assert len(spec.train) + len(spec.val) + len(spec.test) == len(data)


def test_v2_byte_identical_and_seed_sensitive():
    data = mixed_corpus(500, seed=3)
    a = build_v2(data, 50, 100, 10, seed=42).dumps()
    assert a == build_v2(list(reversed(data)), 50, 100, 10, seed=42).dumps()
    assert a != build_v2(data, 50, 100, 10, seed=43).dumps()


# ---------------------------------------------------------------- verification and persistence

def test_verify_v1_per_gender_counts():
    pool = skewed_pool(100, 6, seed=1)
    spec = build_v1_secret(pool, 20)
    check = verify_split(spec, pool, per_gender=20)
    assert check.passed
    assert check.gender_counts["test"]["women"] == check.gender_counts["test"]["men"] == 20


def test_verify_flags_overlap_and_unknown_ids():
    data = [LabeledImage(i, W) for i in range(1, 6)]
    spec = SplitSpec("x", 0, [1, 2, 3], [], [3, 4, 99])
    check = verify_split(spec, data)
    assert not check.passed
    assert any("overlap" in f for f in check.failures)
    assert any("unknown" in f for f in check.failures)


def test_verify_reports_ratio_gaps():
    data = _three_category_fixture()
    spec = build_v2(data, val_size=5, test_size=12, min_train_per_category=0, seed=0)
    gaps = verify_split(spec, data).ratio_gaps
    assert gaps[1] == pytest.approx(1.0) and gaps[3] == pytest.approx(0.75)


def test_split_json_round_trip(tmp_path):
    spec = build_v2(mixed_corpus(200, seed=1), 10, 20, 2, seed=5)
    spec.save(tmp_path / "s.json")
    again = SplitSpec.load(tmp_path / "s.json")
    assert again.dumps() == spec.dumps()
    assert set(json.loads(spec.dumps())) >= {"name", "seed", "train", "val", "test"}
