"""Construction and verification of the COCO-GB V1 and V2 splits."""
from __future__ import annotations

import json
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bias import BiasReport, EmptyReportError, bias_ratio, build_report, cooccurrence
from .lexicon import GenderLabel

DEFAULT_MIN_TRAIN = 50
DEFAULT_VAL_SIZE = 5000
DEFAULT_TEST_SIZE = 10000
DEFAULT_PER_GENDER = 500
_TIE_TOL = 1e-12


class CapacityError(ValueError):
    pass


class ConstraintError(ValueError):
    def __init__(self, msg: str, category_id: int | None = None):
        self.category_id = category_id
        super().__init__(msg)


@dataclass(frozen=True)
class LabeledImage:
    image_id: int
    label: GenderLabel
    categories: frozenset[int] = frozenset()


@dataclass(frozen=True)
class LogEntry:
    step: int
    image_id: int
    objective_delta: float | None = None
    note: str = ""


@dataclass
class SplitSpec:
    name: str
    seed: int | None
    train: list[int]
    val: list[int]
    test: list[int]
    construction_log: list[LogEntry] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "train": list(self.train),
            "val": list(self.val),
            "test": list(self.test),
            "construction_log": [asdict(e) for e in self.construction_log],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_json(cls, data: Mapping) -> "SplitSpec":
        log = [LogEntry(**e) for e in data.get("construction_log", [])]
        return cls(str(data.get("name", "")), data.get("seed"), [int(i) for i in data.get("train", [])],
                   [int(i) for i in data.get("val", [])], [int(i) for i in data.get("test", [])], log)

    @classmethod
    def load(cls, path) -> "SplitSpec":
        return cls.from_json(json.loads(Path(path).read_text()))


def balance_deviation(count_women: Sequence[int], count_men: Sequence[int]) -> float:
    """Sum over categories present in a selection of ``|ratio - 0.5|``."""
    w = np.asarray(count_women, dtype=float)
    m = np.asarray(count_men, dtype=float)
    total = w + m
    present = total > 0
    return float(np.sum(np.abs(m[present] - w[present]) / (2.0 * total[present])))


def _dev_terms(w: np.ndarray, m: np.ndarray) -> np.ndarray:
    total = w + m
    out = np.zeros(np.broadcast(w, m).shape, dtype=float)
    np.divide(np.abs(m - w), 2.0 * total, out=out, where=total > 0)
    return out


# Largest (women moves) x (men moves) product searched for simultaneous swaps.
PAIR_MOVE_CAP = 4_000_000


def _alternating(A: np.ndarray, B: np.ndarray, k: int, first: int):
    """Per-step greedy: genders alternate, each step takes the argmin candidate."""
    counts = [np.zeros(A.shape[1]), np.zeros(A.shape[1])]
    free = [np.ones(len(A), dtype=bool), np.ones(len(B), dtype=bool)]
    picks: list[list[int]] = [[], []]
    steps = []
    for step in range(2 * k):
        g = (step + first) % 2
        inc = (A, B)[g]
        before = _dev_terms(*counts)
        bumped = [c.copy() for c in counts]
        bumped[g] += 1
        scores = np.where(free[g], inc @ (_dev_terms(*bumped) - before), np.inf)
        pick = int(np.flatnonzero(scores <= scores.min() + _TIE_TOL)[0])
        free[g][pick] = False
        counts[g] += inc[pick]
        picks[g].append(pick)
        steps.append((g, pick, float(scores[pick])))
    return picks, steps


def _paired(A: np.ndarray, B: np.ndarray, k: int):
    """Each step adds the (woman, man) pair with the smallest resulting deviation."""
    w, m = np.zeros(A.shape[1]), np.zeros(A.shape[1])
    free_a, free_b = np.ones(len(A), dtype=bool), np.ones(len(B), dtype=bool)
    picks: list[list[int]] = [[], []]
    steps = []
    for _ in range(k):
        base = _dev_terms(w, m)
        d10 = _dev_terms(w + 1, m) - base
        d01 = _dev_terms(w, m + 1) - base
        d11 = _dev_terms(w + 1, m + 1) - base
        scores = (A @ d10)[:, None] + (B @ d01)[None, :] + (A * (d11 - d10 - d01)) @ B.T
        scores[~free_a, :] = np.inf
        scores[:, ~free_b] = np.inf
        flat = np.flatnonzero(scores.ravel() <= scores.min() + _TIE_TOL)[0]
        i, j = divmod(int(flat), len(B))
        free_a[i] = free_b[j] = False
        w += A[i]
        m += B[j]
        picks[0].append(i)
        picks[1].append(j)
        # the pair's deviation change is logged once, on the woman's entry
        steps += [(0, i, float(scores[i, j])), (1, j, None)]
    return picks, steps


def _swap_scores(X_in: np.ndarray, X_out: np.ndarray, t_minus, t0, t_plus) -> np.ndarray:
    """Deviation after swapping selected row i for unselected row j, as a matrix [i, j]."""
    return (t0.sum() + (X_in @ (t_minus - t0))[:, None] + (X_out @ (t_plus - t0))[None, :]
            + (X_in * (2 * t0 - t_minus - t_plus)) @ X_out.T)


def _refine(A: np.ndarray, B: np.ndarray, picks: list[list[int]]):
    """Best-improvement local search over same-gender swaps.

    Simultaneous (woman, man) swaps are also tried while the neighborhood
    stays under PAIR_MOVE_CAP.  Every accepted move strictly lowers the
    deviation, so the search terminates.
    """
    sel = [np.zeros(len(A), dtype=bool), np.zeros(len(B), dtype=bool)]
    sel[0][picks[0]] = True
    sel[1][picks[1]] = True
    moves = []
    while True:
        w, m = A[sel[0]].sum(axis=0), B[sel[1]].sum(axis=0)
        current = float(_dev_terms(w, m).sum())
        best = (current - _TIE_TOL, None)
        for g, (X, shift) in enumerate(((A, (1, 0)), (B, (0, 1)))):
            ins, outs = np.flatnonzero(sel[g]), np.flatnonzero(~sel[g])
            if not len(outs):
                continue
            t_minus = _dev_terms(w - shift[0], m - shift[1])
            t_plus = _dev_terms(w + shift[0], m + shift[1])
            scores = _swap_scores(X[ins], X[outs], t_minus, _dev_terms(w, m), t_plus)
            low = float(scores.min())
            if low < best[0] - _TIE_TOL or (best[1] is None and low < best[0]):
                i, j = divmod(int(np.flatnonzero(scores.ravel() <= low + _TIE_TOL)[0]), len(outs))
                best = (low, [(g, int(ins[i]), int(outs[j]))])
        if best[1] is None:
            best = _best_pair_swap(A, B, sel, w, m, best)
        if best[1] is None:
            return [list(np.flatnonzero(s)) for s in sel], moves
        for g, out_idx, in_idx in best[1]:
            sel[g][out_idx] = False
            sel[g][in_idx] = True
        moves.append((best[1], best[0] - current))


def _best_pair_swap(A, B, sel, w, m, best):
    def deltas(X, s):
        ins, outs = np.flatnonzero(s), np.flatnonzero(~s)
        pairs = [(i, j) for i in ins for j in outs]
        if not pairs:
            return np.zeros((0, X.shape[1]), dtype=int), []
        d = np.array([X[j] - X[i] for i, j in pairs], dtype=int)
        uniq, first = np.unique(d, axis=0, return_index=True)
        return uniq, [pairs[f] for f in first]

    n_a = int(sel[0].sum()) * int((~sel[0]).sum())
    n_b = int(sel[1].sum()) * int((~sel[1]).sum())
    if n_a * n_b == 0 or n_a * n_b > PAIR_MOVE_CAP:
        return best
    da, pa = deltas(A, sel[0])
    db, pb = deltas(B, sel[1])
    shifts = np.array([-1, 0, 1])
    # table[c, i, j]: deviation term of category c when women shift by shifts[i], men by shifts[j]
    table = _dev_terms(w[:, None, None] + shifts[None, :, None], m[:, None, None] + shifts[None, None, :])
    onehot_a = (da[:, :, None] == shifts).astype(float)
    onehot_b = (db[:, :, None] == shifts).astype(float)
    scores = np.einsum("pci,cij,qcj->pq", onehot_a, table, onehot_b, optimize=True)
    if scores.min() < best[0]:
        cands = np.argwhere(scores <= scores.min() + _TIE_TOL)
        p, q = min(cands.tolist(), key=lambda pq: (pa[pq[0]], pb[pq[1]]))
        best = (float(scores[p, q]), [(0, int(pa[p][0]), int(pa[p][1])), (1, int(pb[q][0]), int(pb[q][1]))])
    return best


def build_v1_secret(pool: Iterable[LabeledImage], per_gender: int = DEFAULT_PER_GENDER,
                    name: str = "coco-gb-v1", refine: bool = True) -> SplitSpec:
    """Pick a gender-balanced secret test set of ``per_gender`` images per gender.

    The base construction alternates genders (women first), each step adding
    the candidate that leaves the smallest balance deviation, ties going to
    the lowest id.  With ``refine`` two more constructions (men first, and
    best woman/man pair per step) are also run, each is improved by swap
    local search, and the lowest-deviation result wins (earliest on ties).
    """
    labeled = sorted((im for im in pool if im.label in (GenderLabel.WOMEN, GenderLabel.MEN)),
                     key=lambda im: im.image_id)
    groups = [[im for im in labeled if im.label is g] for g in (GenderLabel.WOMEN, GenderLabel.MEN)]
    short = {g.value: per_gender - len(ims) for g, ims in zip((GenderLabel.WOMEN, GenderLabel.MEN), groups)
             if len(ims) < per_gender}
    if short:
        raise CapacityError(f"pool too small for {per_gender} images per gender; shortfall {short}")

    cats = sorted({c for im in labeled for c in im.categories})
    col = {c: j for j, c in enumerate(cats)}
    A, B = (np.zeros((len(ims), len(cats))) for ims in groups)
    for X, ims in ((A, groups[0]), (B, groups[1])):
        for i, im in enumerate(ims):
            X[i, [col[c] for c in im.categories]] = 1.0

    def deviation(picks) -> float:
        return float(_dev_terms(A[picks[0]].sum(axis=0), B[picks[1]].sum(axis=0)).sum())

    builders = [("alternate-women-first", lambda: _alternating(A, B, per_gender, 0))]
    if refine:
        builders += [("alternate-men-first", lambda: _alternating(A, B, per_gender, 1)),
                     ("paired", lambda: _paired(A, B, per_gender))]
    best = None
    for label, build in builders:
        picks, steps = build()
        moves = []
        if refine:
            picks, moves = _refine(A, B, picks)
        dev = deviation(picks)
        if best is None or dev < best[0] - _TIE_TOL:
            best = (dev, label, picks, steps, moves)

    dev, label, picks, steps, moves = best
    log = [LogEntry(s, groups[g][i].image_id, delta, f"{label}:{('women', 'men')[g]}")
           for s, (g, i, delta) in enumerate(steps)]
    for swaps, delta in moves:
        for g, out_idx, in_idx in swaps:
            log.append(LogEntry(len(log), groups[g][in_idx].image_id, delta,
                                f"swap:{('women', 'men')[g]}:out={groups[g][out_idx].image_id}"))
    selected = [groups[g][i].image_id for g in (0, 1) for i in picks[g]]
    return SplitSpec(name, None, [], [], sorted(selected), log)


def _ratios(dataset: Sequence[LabeledImage]) -> dict[int, float | None]:
    table = cooccurrence({im.image_id: im.label for im in dataset},
                         {im.image_id: im.categories for im in dataset})
    return {c: bias_ratio(w, m) for c, (w, m) in table.counts.items()}


def build_v2(dataset: Sequence[LabeledImage], val_size: int = DEFAULT_VAL_SIZE,
             test_size: int = DEFAULT_TEST_SIZE, min_train_per_category: int = DEFAULT_MIN_TRAIN,
             seed: int = 0, name: str = "coco-gb-v2") -> SplitSpec:
    """Anti-stereotypical train/val/test split.

    Categories are visited from most to least biased; for each, images of
    the under-represented gender move into test until the quota fills.  If
    minority images run out, the same walk is repeated with any labeled
    image, then with the remaining images in id order.  Moves that would
    leave a category with fewer than ``min_train_per_category`` training
    images are skipped.  Val is a seeded uniform sample of what is left.
    """
    if len(dataset) < val_size + test_size:
        raise ConstraintError(f"dataset has {len(dataset)} images, quotas need {val_size + test_size}")
    images = {im.image_id: im for im in dataset}
    if len(images) != len(dataset):
        raise ValueError("duplicate image ids in dataset")
    ordered_ids = sorted(images)

    train_count = Counter(c for im in dataset for c in im.categories)
    blocked: Counter = Counter()
    in_train = set(ordered_ids)
    log: list[LogEntry] = []

    def try_move(image_id: int) -> bool:
        cats = images[image_id].categories
        binding = [c for c in cats if train_count[c] - 1 < min_train_per_category]
        if binding:
            blocked.update(binding)
            return False
        for c in cats:
            train_count[c] -= 1
        in_train.discard(image_id)
        return True

    ratios = _ratios(dataset)
    order = sorted((c for c, r in ratios.items() if r is not None), key=lambda c: (-abs(ratios[c] - 0.5), c))
    members: dict[int, list[int]] = defaultdict(list)
    for image_id in ordered_ids:
        for c in images[image_id].categories:
            members[c].append(image_id)

    test: list[int] = []
    labeled = (GenderLabel.WOMEN, GenderLabel.MEN)

    def take(candidates: Iterable[int], note: str) -> None:
        for image_id in candidates:
            if len(test) >= test_size:
                return
            if image_id in in_train and try_move(image_id):
                test.append(image_id)
                log.append(LogEntry(len(log), image_id, None, note))

    for c in order:
        if ratios[c] == 0.5:
            continue
        minority = GenderLabel.WOMEN if ratios[c] > 0.5 else GenderLabel.MEN
        take((i for i in members[c] if images[i].label is minority), f"test:minority:{c}")
    for c in order:
        take((i for i in members[c] if images[i].label in labeled), f"test:fill:{c}")
    take(ordered_ids, "test:rest")
    if len(test) < test_size:
        binding = blocked.most_common(1)[0][0] if blocked else None
        raise ConstraintError(f"test quota {test_size} unsatisfiable (filled {len(test)}) with "
                              f"min_train_per_category={min_train_per_category}; binding category {binding}",
                              binding)

    rng = np.random.default_rng(seed)
    remainder = [i for i in ordered_ids if i in in_train]
    val: list[int] = []
    for k in rng.permutation(len(remainder)):
        if len(val) >= val_size:
            break
        image_id = remainder[int(k)]
        if try_move(image_id):
            val.append(image_id)
            log.append(LogEntry(len(log), image_id, None, "val"))
    if len(val) < val_size:
        binding = blocked.most_common(1)[0][0] if blocked else None
        raise ConstraintError(f"val quota {val_size} unsatisfiable (filled {len(val)}); binding category {binding}",
                              binding)

    train = [i for i in ordered_ids if i in in_train]
    return SplitSpec(name, seed, train, sorted(val), sorted(test), log)


@dataclass
class SplitVerification:
    passed: bool
    failures: list[str]
    sizes: dict[str, int]
    gender_counts: dict[str, dict[str, int]]
    reports: dict[str, BiasReport | None]
    ratio_gaps: dict[int, float]

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "failures": self.failures,
            "sizes": self.sizes,
            "gender_counts": self.gender_counts,
            "average_bias_ratio": {k: (r.average_bias_ratio if r else None) for k, r in self.reports.items()},
            "test_train_ratio_gap": {str(c): g for c, g in sorted(self.ratio_gaps.items())},
        }


def verify_split(spec: SplitSpec, dataset: Sequence[LabeledImage], *, val_size: int | None = None,
                 test_size: int | None = None, per_gender: int | None = None,
                 min_train_per_category: int | None = None, min_support: int = 1) -> SplitVerification:
    """Recompute partition statistics and check the split's structural promises."""
    images = {im.image_id: im for im in dataset}
    parts = {"train": spec.train, "val": spec.val, "test": spec.test}
    failures = []

    for name, ids in parts.items():
        if len(set(ids)) != len(ids):
            failures.append(f"{name} contains duplicate ids")
        unknown = sorted(set(ids) - set(images))
        if unknown:
            failures.append(f"{name} references unknown ids {unknown[:10]}")
    for a, b in (("train", "val"), ("train", "test"), ("val", "test")):
        both = set(parts[a]) & set(parts[b])
        if both:
            failures.append(f"{a}/{b} overlap on {len(both)} ids, e.g. {sorted(both)[:10]}")
    if val_size is not None and len(spec.val) != val_size:
        failures.append(f"val size {len(spec.val)} != {val_size}")
    if test_size is not None and len(spec.test) != test_size:
        failures.append(f"test size {len(spec.test)} != {test_size}")

    gender_counts = {}
    reports: dict[str, BiasReport | None] = {}
    tables = {}
    for name, ids in parts.items():
        known = [images[i] for i in ids if i in images]
        gc = Counter(im.label.value for im in known)
        gender_counts[name] = {g.value: gc.get(g.value, 0) for g in GenderLabel}
        table = cooccurrence({im.image_id: im.label for im in known}, {im.image_id: im.categories for im in known})
        tables[name] = table
        try:
            reports[name] = build_report(table, min_support=min_support)
        except EmptyReportError:
            reports[name] = None

    if per_gender is not None:
        for g in (GenderLabel.WOMEN, GenderLabel.MEN):
            n = gender_counts["test"][g.value]
            if n != per_gender:
                failures.append(f"test has {n} {g.value} images, expected {per_gender}")

    if min_train_per_category is not None:
        total = Counter(c for im in dataset for c in im.categories)
        in_train = Counter(c for i in spec.train if i in images for c in images[i].categories)
        for c in sorted(total):
            need = min(min_train_per_category, total[c])
            if in_train[c] < need:
                failures.append(f"category {c} keeps {in_train[c]} train images < {need}")

    gaps = {}
    if reports["train"] is not None and reports["test"] is not None:
        for c, r in reports["test"].ratios.items():
            tr = reports["train"].ratios.get(c)
            if r is not None and tr is not None:
                gaps[c] = abs(r - tr)

    sizes = {name: len(ids) for name, ids in parts.items()}
    return SplitVerification(not failures, failures, sizes, gender_counts, reports, gaps)
