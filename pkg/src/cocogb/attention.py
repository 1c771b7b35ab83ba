"""Attention correctness: Pointing Game and Attention Sum against person masks."""
from __future__ import annotations

import json
import os
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coco import SegMask
from .lexicon import GenderLabel


class AttentionError(ValueError):
    pass


@dataclass
class AttentionRecord:
    image_id: int
    token: str
    grid: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim != 2 or self.grid.size == 0:
            raise AttentionError(f"image {self.image_id}: attention grid must be a non-empty 2-D matrix")
        if (self.grid < 0).any() or not np.isfinite(self.grid).all():
            raise AttentionError(f"image {self.image_id}: attention grid must be finite and nonnegative")
        if not (self.grid > 0).any():
            raise AttentionError(f"image {self.image_id}: attention grid is all zero")


@dataclass(frozen=True)
class AttentionScore:
    pointing_hit: bool
    attention_sum: float


def load_attention(path) -> list[AttentionRecord]:
    """Read JSON lines of ``{"image_id", "token", "grid"}``."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                out.append(AttentionRecord(int(row["image_id"]), str(row["token"]), row["grid"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise AttentionError(f"{path}:{lineno}: {exc}") from None
    return out


def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row i holds the corner-aligned linear interpolation weights for output i."""
    w = np.zeros((n_out, n_in))
    if n_in == 1:
        w[:, 0] = 1.0
        return w
    if n_out == 1:
        pos = np.array([(n_in - 1) / 2.0])
    else:
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
    frac = pos - lo
    rows = np.arange(n_out)
    w[rows, lo] += 1.0 - frac
    w[rows, lo + 1] += frac
    return w


def upsample_bilinear(grid, target_w: int, target_h: int, renormalize: bool = True) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling.

    With ``renormalize`` the output is rescaled to carry the same total mass
    as the input.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2 or grid.size == 0:
        raise AttentionError("grid must be a non-empty 2-D matrix")
    if target_w <= 0 or target_h <= 0:
        raise AttentionError("target size must be positive")
    out = _interp_matrix(grid.shape[0], target_h) @ grid @ _interp_matrix(grid.shape[1], target_w).T
    np.maximum(out, 0.0, out=out)
    if renormalize:
        total = out.sum()
        if total > 0:
            out *= grid.sum() / total
    return out


def _grid(att) -> np.ndarray:
    return att.grid if isinstance(att, AttentionRecord) else np.asarray(att, dtype=float)


def pointing_game(att: AttentionRecord, mask: SegMask) -> bool:
    """True iff the attention peak (first in row-major order) lands on the mask."""
    if not mask.bits.any():
        return False
    up = upsample_bilinear(_grid(att), mask.width, mask.height)
    return bool(mask.bits.flat[int(np.argmax(up))])


def attention_sum(att: AttentionRecord, mask: SegMask) -> float:
    up = upsample_bilinear(_grid(att), mask.width, mask.height)
    total = up.sum()
    if total <= 0:
        raise AttentionError("attention sum undefined for an all-zero grid")
    return float(up[mask.bits].sum() / total)


def score(att: AttentionRecord, mask: SegMask) -> AttentionScore:
    return AttentionScore(pointing_game(att, mask), attention_sum(att, mask))


def score_all(records: Sequence[AttentionRecord], mask_for: Callable[[int], SegMask],
              max_workers: int | None = None) -> list[AttentionScore]:
    """Score records in parallel; worker count defaults to ``$COCOGB_THREADS`` (or 1)."""
    if max_workers is None:
        max_workers = max(1, int(os.environ.get("COCOGB_THREADS", "1")))
    job = lambda rec: score(rec, mask_for(rec.image_id))
    if max_workers == 1:
        return [job(r) for r in records]
    with ThreadPoolExecutor(max_workers) as pool:
        return list(pool.map(job, records))


@dataclass
class AttentionTable:
    pointing: dict[str, float]
    attention_sum: dict[str, float]
    counts: dict[str, int]

    def to_json(self) -> dict:
        return {"pointing_game": self.pointing, "attention_sum": self.attention_sum, "counts": self.counts}

    def to_text(self) -> str:
        cols = ("women", "men", "average", "pooled")
        lines = [f"{'metric':<15}" + "".join(f"{c:>9}" for c in cols)]
        for name, row in (("Attention Sum", self.attention_sum), ("Pointing Game", self.pointing)):
            lines.append(f"{name:<15}" + "".join(f"{row[c]:>9.1f}" if row.get(c) is not None else f"{'-':>9}"
                                                 for c in cols))
        return "\n".join(lines) + "\n"


def aggregate_attention(scores: Iterable[tuple[GenderLabel, AttentionScore]]) -> AttentionTable:
    """Percent accuracies per gender.

    ``average`` is the mean of the two gender columns; ``pooled`` averages
    over all records.
    """
    groups: dict[str, list[AttentionScore]] = {"women": [], "men": []}
    for gold, s in scores:
        if gold is GenderLabel.WOMEN:
            groups["women"].append(s)
        elif gold is GenderLabel.MEN:
            groups["men"].append(s)
        else:
            raise AttentionError(f"gold label must be women or men, got {gold}")

    def column(values: Callable[[AttentionScore], float]) -> dict[str, float | None]:
        row: dict[str, float | None] = {}
        for g, ss in groups.items():
            row[g] = 100.0 * float(np.mean([values(s) for s in ss])) if ss else None
        present = [row[g] for g in groups if row[g] is not None]
        row["average"] = sum(present) / len(present) if present else None
        pooled = [values(s) for ss in groups.values() for s in ss]
        row["pooled"] = 100.0 * float(np.mean(pooled)) if pooled else None
        return row

    return AttentionTable(column(lambda s: float(s.pointing_hit)), column(lambda s: s.attention_sum),
                          {g: len(ss) for g, ss in groups.items()})
