"""Build a gender-balanced test set and an anti-stereotypical split.

Both builders work on ``LabeledImage`` records (id, gender label, object
categories), so any corpus labeled by the audit step can be fed in.
"""
from cocogb.bias import build_report, cooccurrence
from cocogb.lexicon import GenderLabel
from cocogb.splits import build_v1_secret, build_v2, verify_split
from cocogb.synthetic import mixed_corpus, skewed_pool


def average_ratio(images):
    table = cooccurrence({im.image_id: im.label for im in images}, {im.image_id: im.categories for im in images})
    return build_report(table, min_support=1).average_bias_ratio


# A pool where men co-occur with every object three times as often as women.
pool = skewed_pool(400, 10, skew=0.75, seed=3)
print(f"pool average bias ratio: {average_ratio(pool):.3f}")

secret = build_v1_secret(pool, per_gender=40)
chosen = [im for im in pool if im.image_id in set(secret.test)]
print(f"balanced subset ({len(chosen)} images): {average_ratio(chosen):.3f}")
print("first construction steps:")
for entry in secret.construction_log[:4]:
    delta = "" if entry.objective_delta is None else f"delta={entry.objective_delta:+.4f}"
    print(f"  step {entry.step}: image {entry.image_id:>4}  {delta:<14} {entry.note}")

# The plain per-step greedy, without the swap refinement, for comparison.
plain = build_v1_secret(pool, per_gender=40, refine=False)
plain_imgs = [im for im in pool if im.image_id in set(plain.test)]
print(f"plain greedy subset: {average_ratio(plain_imgs):.3f}")

# Anti-stereotypical split: test receives the minority gender of the most
# biased categories, so test-time context contradicts training.
corpus = mixed_corpus(3000, n_categories=12, seed=4)
split = build_v2(corpus, val_size=150, test_size=300, min_train_per_category=20, seed=0)
check = verify_split(split, corpus, val_size=150, test_size=300, min_train_per_category=20)
print(f"\nV2 sizes train/val/test: {check.sizes}, verification passed: {check.passed}")
train_r, test_r = check.reports["train"].ratios, check.reports["test"].ratios
print(f"{'category':>8} {'train':>6} {'test':>6}")
for c in sorted(test_r)[:8]:
    if train_r.get(c) is not None and test_r[c] is not None:
        print(f"{c:>8} {train_r[c]:6.2f} {test_r[c]:6.2f}")
women = check.gender_counts["test"][GenderLabel.WOMEN.value]
print(f"test images labeled women: {women} of {len(split.test)}")
