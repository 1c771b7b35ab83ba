"""Audit a captioned corpus for gender/context co-occurrence.

Writes a small COCO-layout corpus to a temp directory, labels every image
from its human captions, then reports how each object category leans
toward images of women or men.  Point the two paths at real COCO files to
audit the real thing.
"""
import tempfile
from collections import Counter
from pathlib import Path

from cocogb.bias import build_report, cooccurrence
from cocogb.coco import load_captions, load_instances
from cocogb.lexicon import GenderLabel, classify_caption, label_image
from cocogb.synthetic import write_coco_fixture

work = Path(tempfile.mkdtemp(prefix="cocogb-audit-"))
captions_path, instances_path = write_coco_fixture(work, n_images=90, seed=1)

# Captions are classified one by one; an image gets a label only when it
# shows exactly one person and its captions agree on a gender.
records = load_captions(captions_path)
image, caps = records[0]
print(f"image {image.image_id}:")
for c in caps:
    print(f"  {classify_caption(c.caption).value:>7}  {c.caption}")

instances = load_instances(instances_path)
person = instances.category_id("person")
people = Counter(a.image_id for a in instances.instances if a.category_id == person)
labels = {im.image_id: label_image([c.caption for c in cs], people[im.image_id]) for im, cs in records}
tally = Counter(l.value for l in labels.values())
print(f"\nlabels: {dict(tally)}")

# Presence counts per category, then the share of each category's
# gendered images that show men.
objects = {}
for a in instances.instances:
    if a.category_id != person:
        objects.setdefault(a.image_id, set()).add(a.category_id)
table = cooccurrence(labels, objects)
names = {c.category_id: c.name for c in instances.categories.values()}
report = build_report(table, min_support=3, names=names)
print()
print(report.to_text())
print(f"men per woman among labeled images: {report.women_to_men:.2f}")
assert set(labels.values()) <= set(GenderLabel)
