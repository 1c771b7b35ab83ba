"""Seeded synthetic corpora with controllable gender/context skew."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .lexicon import GenderLabel
from .splits import LabeledImage

_CATEGORY_NAMES = ["bicycle", "car", "motorcycle", "surfboard", "skateboard", "laptop", "tie", "handbag",
                   "umbrella", "kite", "oven", "knife", "bed", "couch", "dog", "cat", "horse", "frisbee",
                   "snowboard", "tennis racket"]


def skewed_pool(n_images: int, n_categories: int, skew: float = 0.75, density: float = 0.3,
                seed: int = 0, start_id: int = 1) -> list[LabeledImage]:
    """Half women, half men; men images carry each category ``skew/(1-skew)`` times as often.

    ``density`` is the mean per-image inclusion probability of a category.
    """
    rng = np.random.default_rng(seed)
    p_men = 2 * density * skew
    p_women = 2 * density * (1 - skew)
    out = []
    for k in range(n_images):
        label = GenderLabel.WOMEN if k % 2 == 0 else GenderLabel.MEN
        p = p_women if label is GenderLabel.WOMEN else p_men
        cats = frozenset(int(c) + 1 for c in np.flatnonzero(rng.uniform(size=n_categories) < p))
        out.append(LabeledImage(start_id + k, label, cats))
    return out


def mixed_corpus(n_images: int, n_categories: int = 12, discard_fraction: float = 0.5,
                 women_fraction: float = 0.25, seed: int = 0) -> list[LabeledImage]:
    """Corpus with unlabeled images and category-dependent gender skew."""
    rng = np.random.default_rng(seed)
    lean = rng.uniform(0.15, 0.9, n_categories)  # P(men | category drawn on a labeled image)
    out = []
    for k in range(n_images):
        u = rng.uniform()
        if u < discard_fraction:
            label = GenderLabel.DISCARD
        elif rng.uniform() < women_fraction:
            label = GenderLabel.WOMEN
        else:
            label = GenderLabel.MEN
        base = rng.uniform(size=n_categories) < 0.2
        if label is GenderLabel.MEN:
            base &= rng.uniform(size=n_categories) < lean
        elif label is GenderLabel.WOMEN:
            base &= rng.uniform(size=n_categories) < 1 - lean
        out.append(LabeledImage(k + 1, label, frozenset(int(c) + 1 for c in np.flatnonzero(base))))
    return out


_FEMALE_CAPS = ["A woman riding a {obj}.", "A girl standing next to a {obj}.", "The woman holds a {obj}."]
_MALE_CAPS = ["A man riding a {obj}.", "A boy standing next to a {obj}.", "The man holds a {obj}."]
_NEUTRAL_CAPS = ["A person near a {obj}.", "Someone with a {obj} outside.", "A {obj} in the street."]


def write_coco_fixture(directory, n_images: int = 24, seed: int = 0, n_categories: int = 6) -> tuple[Path, Path]:
    """Write a small caption file and instance file in COCO layout.

    Returns ``(captions_path, instances_path)``.  Each image has five
    captions and one or two person instances with polygon or RLE geometry.
    """
    rng = np.random.default_rng(seed)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = _CATEGORY_NAMES[:n_categories]
    categories = [{"id": 1, "name": "person"}] + [{"id": i + 2, "name": n} for i, n in enumerate(names)]
    images, caps, insts = [], [], []
    ann_id = 1
    for k in range(n_images):
        image_id = 100 + k
        width, height = 40, 30
        images.append({"id": image_id, "file_name": f"{image_id:012d}.jpg", "width": width, "height": height})
        obj_ids = [int(c) + 2 for c in np.flatnonzero(rng.uniform(size=n_categories) < 0.4)]
        gender = k % 3  # 0 women, 1 men, 2 neutral-only captions
        pool = (_FEMALE_CAPS, _MALE_CAPS, _NEUTRAL_CAPS)[gender]
        obj = names[obj_ids[0] - 2] if obj_ids else "bench"
        for j in range(5):
            tmpl = pool[j % len(pool)] if j < 2 else _NEUTRAL_CAPS[j % 3]
            caps.append({"id": ann_id, "image_id": image_id, "caption": tmpl.format(obj=obj)})
            ann_id += 1
        n_people = 2 if k % 5 == 4 else 1
        for p in range(n_people):
            x0 = 4 + 16 * p
            poly = [x0, 4, x0 + 10, 4, x0 + 10, 26, x0, 26]
            insts.append({"id": ann_id, "image_id": image_id, "category_id": 1, "iscrowd": 0,
                          "segmentation": [poly], "area": 220.0, "bbox": [x0, 4, 10, 22]})
            ann_id += 1
        for c in obj_ids:
            counts = [height * 30, height * 5, height * 5]
            insts.append({"id": ann_id, "image_id": image_id, "category_id": c, "iscrowd": 1,
                          "segmentation": {"size": [height, width], "counts": counts}, "area": 150.0,
                          "bbox": [30, 0, 5, height]})
            ann_id += 1
    cap_path = directory / "captions.json"
    inst_path = directory / "instances.json"
    cap_path.write_text(json.dumps({"images": images, "annotations": caps}))
    inst_path.write_text(json.dumps({"images": images, "annotations": insts, "categories": categories}))
    return cap_path, inst_path


_FILLER = ["a", "the", "two", "on", "with", "near", "riding", "holding", "street", "kitchen", "manager",
           "human", "baby", "mankind", "woman's", "Men's", "skateboarding", "dog", "sonar", "boyish"]


def fuzz_captions(n: int, seed: int = 0, lexicon=None) -> list[str]:
    """Random captions mixing lexicon words (in varied case) with filler and punctuation.

    Filler includes near-miss tokens such as ``manager`` and ``sonar`` that
    contain gendered substrings.
    """
    from .lexicon import DEFAULT_LEXICON
    lexicon = lexicon or DEFAULT_LEXICON
    vocab = sorted(lexicon.female | lexicon.male | lexicon.neutral) + _FILLER
    seps = [" ", " ", " ", ", ", "-", ". ", "  ", "!"]
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        words = []
        for w in rng.choice(vocab, size=int(rng.integers(1, 12))):
            style = rng.integers(0, 4)
            words.append(w.upper() if style == 0 else w.capitalize() if style == 1 else str(w))
            words.append(str(rng.choice(seps)))
        out.append("".join(words).strip())
    return out
