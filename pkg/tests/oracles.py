"""Reference computations kept separate from the package under test."""
from fractions import Fraction
from itertools import combinations

import numpy as np

from cocogb.lexicon import GenderLabel


def deviation_exact(women_images, men_images):
    """Sum over present categories of |m - w| / (2 (m + w)), in exact arithmetic."""
    cats = {c for im in list(women_images) + list(men_images) for c in im.categories}
    total = Fraction(0)
    for c in cats:
        w = sum(c in im.categories for im in women_images)
        m = sum(c in im.categories for im in men_images)
        total += Fraction(abs(m - w), 2 * (m + w))
    return total


def brute_force_optimum(pool, per_gender):
    """Exhaustive minimum over every per_gender x per_gender selection.

    Selections with identical per-category counts are interchangeable, so
    each gender is reduced to its distinct count vectors before pairing.
    """
    cats = sorted({c for im in pool for c in im.categories})
    vectors = []
    for g in (GenderLabel.WOMEN, GenderLabel.MEN):
        ims = [im for im in pool if im.label is g]
        inc = np.array([[c in im.categories for c in cats] for im in ims], dtype=np.int64)
        seen = {tuple(inc[list(s)].sum(axis=0)) for s in combinations(range(len(ims)), per_gender)}
        vectors.append(np.array(sorted(seen), dtype=float))
    w = vectors[0][:, None, :]
    m = vectors[1][None, :, :]
    t = w + m
    terms = np.divide(np.abs(m - w), 2 * t, out=np.zeros(np.broadcast(w, m).shape), where=t > 0)
    return float(terms.sum(axis=-1).min())
