"""Gender outcome scoring and caption quality metrics for generated captions."""
from __future__ import annotations

import enum
import json
import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lexicon import DEFAULT_LEXICON, CaptionGender, GenderLabel, GenderLexicon, classify_caption, tokenize

GENDERS = (GenderLabel.WOMEN, GenderLabel.MEN)
BLEU_EPSILON = 1e-9
MAX_N = 4


class EvaluationInputError(ValueError):
    pass


class Outcome(enum.Enum):
    CORRECT = "correct"
    WRONG = "wrong"
    NEUTRAL = "neutral"


OUTCOMES = (Outcome.CORRECT, Outcome.WRONG, Outcome.NEUTRAL)


@dataclass(frozen=True)
class GeneratedCaption:
    image_id: int
    caption: str


def load_results(path) -> list[GeneratedCaption]:
    """Read ``[{"image_id": int, "caption": str}, ...]``."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise EvaluationInputError(f"{path}: invalid JSON at char {exc.pos}: {exc.msg}") from None
    if not isinstance(data, list):
        raise EvaluationInputError(f"{path}: expected a JSON array of results")
    out, seen = [], set()
    for row in data:
        try:
            item = GeneratedCaption(int(row["image_id"]), str(row["caption"]))
        except (KeyError, TypeError, ValueError):
            raise EvaluationInputError(f"{path}: malformed result entry {row!r}") from None
        if item.image_id in seen:
            raise EvaluationInputError(f"{path}: duplicate caption for image {item.image_id}")
        seen.add(item.image_id)
        out.append(item)
    return out


# --------------------------------------------------------------------------
# Gender outcomes


def outcome(caption: GeneratedCaption | str, gold: GenderLabel,
            lexicon: GenderLexicon = DEFAULT_LEXICON) -> Outcome:
    """Classify a generated caption against the image's gold gender.

    A caption mentioning both genders counts as wrong.
    """
    if gold not in GENDERS:
        raise EvaluationInputError(f"gold label must be women or men, got {gold}")
    text = caption.caption if isinstance(caption, GeneratedCaption) else caption
    kind = classify_caption(text, lexicon)
    if kind is CaptionGender.NONE:
        return Outcome.NEUTRAL
    if kind is CaptionGender.BOTH:
        return Outcome.WRONG
    hit = (kind is CaptionGender.FEMALE) == (gold is GenderLabel.WOMEN)
    return Outcome.CORRECT if hit else Outcome.WRONG


def divergence(w: Sequence[float], m: Sequence[float]) -> float:
    """Cosine distance between two outcome-rate vectors."""
    w = np.asarray(w, dtype=float)
    m = np.asarray(m, dtype=float)
    if (w < 0).any() or (m < 0).any():
        raise ValueError("outcome rates must be nonnegative")
    nw, nm = np.linalg.norm(w), np.linalg.norm(m)
    if nw == 0 or nm == 0:
        raise ValueError("divergence undefined for an all-zero outcome vector")
    return float(1.0 - np.dot(w, m) / (nw * nm))


@dataclass
class OutcomeTable:
    """Per-gender outcome rates in percent, ordered (correct, wrong, neutral)."""

    rates: dict[GenderLabel, tuple[float, float, float]]
    counts: dict[GenderLabel, dict[Outcome, int]] = field(default_factory=dict)
    partial: bool = False

    @classmethod
    def from_rates(cls, women: Sequence[float], men: Sequence[float]) -> "OutcomeTable":
        return cls({GenderLabel.WOMEN: tuple(map(float, women)), GenderLabel.MEN: tuple(map(float, men))})

    @property
    def gender_error(self) -> float | None:
        """Mean of the per-gender wrong rates (headline figure)."""
        if self.partial:
            return None
        return (self.rates[GenderLabel.WOMEN][1] + self.rates[GenderLabel.MEN][1]) / 2

    @property
    def gender_error_pooled(self) -> float | None:
        if not self.counts or self.partial:
            return None
        wrong = sum(self.counts[g][Outcome.WRONG] for g in GENDERS)
        total = sum(sum(self.counts[g].values()) for g in GENDERS)
        return 100.0 * wrong / total

    @property
    def divergence(self) -> float | None:
        if self.partial:
            return None
        return divergence(self.rates[GenderLabel.WOMEN], self.rates[GenderLabel.MEN])

    def to_json(self) -> dict:
        out = {"partial": self.partial, "gender_error": self.gender_error,
               "gender_error_pooled": self.gender_error_pooled, "divergence": self.divergence}
        for g in GENDERS:
            if g in self.rates:
                out[g.value] = dict(zip(("correct", "wrong", "neutral"), self.rates[g]))
                if g in self.counts:
                    out[g.value]["counts"] = {o.value: self.counts[g][o] for o in OUTCOMES}
        return out


def aggregate(results: Iterable[tuple[GenderLabel, Outcome]]) -> OutcomeTable:
    counts = {g: {o: 0 for o in OUTCOMES} for g in GENDERS}
    for gold, out in results:
        if gold not in counts:
            raise EvaluationInputError(f"gold label must be women or men, got {gold}")
        counts[gold][out] += 1
    rates = {}
    for g in GENDERS:
        n = sum(counts[g].values())
        if n:
            rates[g] = tuple(100.0 * counts[g][o] / n for o in OUTCOMES)
    partial = len(rates) < 2
    return OutcomeTable(rates, {g: counts[g] for g in rates}, partial)


# --------------------------------------------------------------------------
# BLEU-4


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _bleu_stats(cand: list[str], refs: list[list[str]]):
    clipped, totals = [], []
    for n in range(1, MAX_N + 1):
        c = _ngrams(cand, n)
        max_ref: Counter = Counter()
        for r in refs:
            for g, k in _ngrams(r, n).items():
                if k > max_ref[g]:
                    max_ref[g] = k
        clipped.append(sum(min(k, max_ref[g]) for g, k in c.items()))
        totals.append(max(len(cand) - n + 1, 0))
    ref_len = min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
    return clipped, totals, len(cand), ref_len


def _bleu_from_stats(clipped, totals, c: int, r: int) -> float:
    if c == 0:
        return 0.0
    logs = []
    for k, t in zip(clipped, totals):
        p = (k if k > 0 else BLEU_EPSILON) / max(t, 1)
        logs.append(math.log(p))
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(sum(logs) / len(logs))


def bleu4(candidate: str, references: Sequence[str]) -> float:
    refs = [tokenize(r) for r in references]
    refs = [r for r in refs if r]
    if not refs:
        raise EvaluationInputError("bleu4 needs at least one non-empty reference")
    return _bleu_from_stats(*_bleu_stats(tokenize(candidate), refs))


def corpus_bleu4(candidates: Sequence[str], references: Sequence[Sequence[str]]) -> float:
    clipped, totals, c, r = [0] * MAX_N, [0] * MAX_N, 0, 0
    for cand, refs in zip(candidates, references, strict=True):
        refs = [t for t in (tokenize(x) for x in refs) if t]
        if not refs:
            raise EvaluationInputError("every candidate needs a non-empty reference")
        k, t, cl, rl = _bleu_stats(tokenize(cand), refs)
        clipped = [a + b for a, b in zip(clipped, k)]
        totals = [a + b for a, b in zip(totals, t)]
        c += cl
        r += rl
    return _bleu_from_stats(clipped, totals, c, r)


# --------------------------------------------------------------------------
# CIDEr


@dataclass
class CorpusStats:
    """Document frequencies of reference n-grams; one document per image."""

    document_frequency: Counter
    num_documents: int

    @classmethod
    def from_references(cls, references: Iterable[Sequence[str]]) -> "CorpusStats":
        df: Counter = Counter()
        n_docs = 0
        for refs in references:
            n_docs += 1
            seen = set()
            for r in refs:
                toks = tokenize(r)
                for n in range(1, MAX_N + 1):
                    seen.update(_ngrams(toks, n))
            df.update(seen)
        return cls(df, n_docs)

    def idf(self, gram: tuple[str, ...]) -> float:
        return math.log((self.num_documents + 1) / max(1, self.document_frequency.get(gram, 0)))


def _tfidf(tokens: list[str], n: int, stats: CorpusStats) -> dict:
    return {g: k * stats.idf(g) for g, k in _ngrams(tokens, n).items()}


def _cosine(a: Mapping, b: Mapping) -> float:
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0 or nb == 0:
        return 0.0
    return sum(v * b.get(g, 0.0) for g, v in a.items()) / (na * nb)


def cider(candidate: str, references: Sequence[str], corpus_stats: CorpusStats) -> float:
    """Plain CIDEr (no length penalty or count clipping), scaled by 10."""
    if corpus_stats is None or corpus_stats.num_documents == 0:
        raise EvaluationInputError("cider needs document frequencies from a non-empty reference corpus")
    if not references:
        raise EvaluationInputError("cider needs at least one reference")
    cand = tokenize(candidate)
    refs = [tokenize(r) for r in references]
    per_n = []
    for n in range(1, MAX_N + 1):
        cv = _tfidf(cand, n, corpus_stats)
        per_n.append(sum(_cosine(cv, _tfidf(r, n, corpus_stats)) for r in refs) / len(refs))
    return 10.0 * sum(per_n) / MAX_N


def corpus_cider(candidates: Sequence[str], references: Sequence[Sequence[str]],
                 corpus_stats: CorpusStats | None = None) -> float:
    stats = corpus_stats or CorpusStats.from_references(references)
    scores = [cider(c, r, stats) for c, r in zip(candidates, references, strict=True)]
    return sum(scores) / len(scores) if scores else 0.0


@dataclass
class QualityScores:
    bleu4: float
    cider: float

    def to_json(self) -> dict:
        return {"bleu4": self.bleu4, "cider": self.cider, "cider_variant": "plain (not CIDEr-D)"}


def format_table(rows: Mapping[str, tuple[OutcomeTable, QualityScores | None]]) -> str:
    """Plain-text report with one row per model, in the benchmark table's column order."""
    head = (f"{'model':<14}{'B-4':>7}{'C':>7}  {'GErr':>6}  "
            f"{'W-cor':>6}{'W-wrg':>6}{'W-neu':>6}  {'M-cor':>6}{'M-wrg':>6}{'M-neu':>6}  {'Div':>6}")
    lines = [head]
    fmt = lambda x, spec: "-" if x is None else format(x, spec)
    for name, (table, q) in rows.items():
        w = table.rates.get(GenderLabel.WOMEN, (None,) * 3)
        m = table.rates.get(GenderLabel.MEN, (None,) * 3)
        b = fmt(None if q is None else 100 * q.bleu4, ".1f")
        c = fmt(None if q is None else 100 * q.cider, ".1f")
        cells = "".join(f"{fmt(x, '.1f'):>6}" for x in w) + "  " + "".join(f"{fmt(x, '.1f'):>6}" for x in m)
        lines.append(f"{name:<14}{b:>7}{c:>7}  {fmt(table.gender_error, '.1f'):>6}  {cells}  "
                     f"{fmt(table.divergence, '.3f'):>6}")
    return "\n".join(lines) + "\n"
