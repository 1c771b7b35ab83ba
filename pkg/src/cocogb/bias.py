"""Gender/context co-occurrence counting and per-category bias ratios."""
from __future__ import annotations

import json
from collections import defaultdict
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

from .lexicon import GenderLabel

DEFAULT_MIN_SUPPORT = 10
# Number of categories in the filtered "representative objects" view.
DEFAULT_TOP_K = 63


class EmptyReportError(ValueError):
    pass


@dataclass
class CooccurrenceTable:
    """Image-presence counts per category.

    ``counts[c] == [women, men]``; ``images`` holds the number of labeled
    images of each gender that went into the table.
    """

    counts: dict[int, list[int]] = field(default_factory=dict)
    images: list[int] = field(default_factory=lambda: [0, 0])

    def cell(self, category_id: int) -> tuple[int, int]:
        w, m = self.counts.get(category_id, (0, 0))
        return w, m

    def merge(self, other: "CooccurrenceTable") -> "CooccurrenceTable":
        out = CooccurrenceTable({c: list(v) for c, v in self.counts.items()}, list(self.images))
        for c, (w, m) in other.counts.items():
            cell = out.counts.setdefault(c, [0, 0])
            cell[0] += w
            cell[1] += m
        out.images[0] += other.images[0]
        out.images[1] += other.images[1]
        return out

    def __eq__(self, other):
        if not isinstance(other, CooccurrenceTable):
            return NotImplemented
        nz = lambda t: {c: tuple(v) for c, v in t.counts.items() if any(v)}
        return nz(self) == nz(other) and list(self.images) == list(other.images)


def cooccurrence(labels: Mapping[int, GenderLabel],
                 image_categories: Mapping[int, Iterable[int]]) -> CooccurrenceTable:
    """Count, per category, the women- and men-labeled images containing it.

    ``image_categories`` maps image id to the category ids of its instances;
    repeated instances of a category count once.  Discarded and unlabeled
    images contribute nothing.
    """
    table = CooccurrenceTable()
    for image_id, label in labels.items():
        if label is GenderLabel.WOMEN:
            slot = 0
        elif label is GenderLabel.MEN:
            slot = 1
        else:
            continue
        table.images[slot] += 1
        for c in set(image_categories.get(image_id, ())):
            table.counts.setdefault(c, [0, 0])[slot] += 1
    return table


def image_categories(instances) -> dict[int, set[int]]:
    """Collapse instance annotations (anything with image_id/category_id) to category sets."""
    out: dict[int, set[int]] = defaultdict(set)
    for ann in instances:
        out[ann.image_id].add(ann.category_id)
    return dict(out)


def bias_ratio(count_women: int, count_men: int, min_support: int = 1) -> float | None:
    """Fraction of co-occurrences that are with men; None below ``min_support``."""
    total = count_women + count_men
    if total < max(min_support, 1):
        return None
    return count_men / total


@dataclass
class BiasReport:
    ratios: dict[int, float | None]
    support: dict[int, int]
    min_support: int
    average_bias_ratio: float
    pct_male_skewed: float
    gender_image_counts: tuple[int, int]
    top_k: int
    top_k_average_bias_ratio: float | None
    top_k_pct_male_skewed: float | None
    names: dict[int, str] = field(default_factory=dict)

    @property
    def women_to_men(self) -> float | None:
        w, m = self.gender_image_counts
        return m / w if w else None

    def defined(self) -> dict[int, float]:
        return {c: r for c, r in self.ratios.items() if r is not None}

    def to_json(self) -> dict:
        w, m = self.gender_image_counts
        cats = []
        for c in sorted(self.ratios):
            cats.append({"category_id": c, "name": self.names.get(c, str(c)),
                         "support": self.support[c], "bias_ratio": self.ratios[c]})
        return {
            "min_support": self.min_support,
            "average_bias_ratio": self.average_bias_ratio,
            "pct_male_skewed": self.pct_male_skewed,
            "gender_image_counts": {"women": w, "men": m},
            "men_per_woman": self.women_to_men,
            "top_k": self.top_k,
            "top_k_average_bias_ratio": self.top_k_average_bias_ratio,
            "top_k_pct_male_skewed": self.top_k_pct_male_skewed,
            "categories": cats,
        }

    def to_text(self) -> str:
        """Aligned table, categories in descending bias ratio (undefined last)."""
        rows = sorted(self.ratios, key=lambda c: (self.ratios[c] is None, -(self.ratios[c] or 0.0), c))
        width = max([len("category")] + [len(self.names.get(c, str(c))) for c in rows])
        lines = [f"{'category':<{width}}  {'support':>7}  {'ratio':>6}"]
        for c in rows:
            r = self.ratios[c]
            shown = "-" if r is None else f"{r:.3f}"
            lines.append(f"{self.names.get(c, str(c)):<{width}}  {self.support[c]:>7}  {shown:>6}")
        w, m = self.gender_image_counts
        lines.append("")
        lines.append(f"images women/men: {w}/{m}")
        lines.append(f"average bias ratio: {self.average_bias_ratio:.3f}")
        lines.append(f"male-skewed categories: {100 * self.pct_male_skewed:.1f}%")
        if self.top_k_average_bias_ratio is not None:
            lines.append(f"average bias ratio (top {self.top_k} by support): {self.top_k_average_bias_ratio:.3f}")
        return "\n".join(lines) + "\n"


def _aggregate(ratios: list[float]) -> tuple[float, float]:
    return sum(ratios) / len(ratios), sum(r > 0.5 for r in ratios) / len(ratios)


def build_report(table: CooccurrenceTable, min_support: int = DEFAULT_MIN_SUPPORT,
                 names: Mapping[int, str] | None = None, top_k: int = DEFAULT_TOP_K) -> BiasReport:
    if not table.counts:
        raise EmptyReportError("co-occurrence table is empty")
    ratios = {c: bias_ratio(w, m, min_support) for c, (w, m) in table.counts.items()}
    support = {c: w + m for c, (w, m) in table.counts.items()}
    defined = [r for r in ratios.values() if r is not None]
    if not defined:
        raise EmptyReportError(f"no category reaches min_support={min_support}")
    avg, skew = _aggregate(defined)

    ranked = sorted((c for c in ratios if ratios[c] is not None), key=lambda c: (-support[c], c))[:top_k]
    top_avg, top_skew = _aggregate([ratios[c] for c in ranked]) if ranked else (None, None)
    return BiasReport(ratios, support, min_support, avg, skew, (table.images[0], table.images[1]),
                      top_k, top_avg, top_skew, dict(names or {}))


def dump_report(report: BiasReport, json_path, text_path=None) -> None:
    with open(json_path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if text_path is not None:
        with open(text_path, "w") as fh:
            fh.write(report.to_text())
