"""Gender word lexicon, caption/image gender labeling and caption neutralization."""
from __future__ import annotations

import enum
import json
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

_TOKEN = re.compile(r"[A-Za-z0-9]+")


class LexiconError(ValueError):
    pass


class CaptionGender(enum.Enum):
    FEMALE = "female"
    MALE = "male"
    BOTH = "both"
    NONE = "none"


class GenderLabel(enum.Enum):
    WOMEN = "women"
    MEN = "men"
    DISCARD = "discard"


def tokenize(text: str) -> list[str]:
    return [t.lower() for t in _TOKEN.findall(text)]


_FEMALE = ("woman", "women", "girl", "sister", "daughter", "wife", "girlfriend")
_MALE = ("man", "men", "boy", "brother", "son", "husband", "boyfriend")
_NEUTRAL = ("people", "person", "human", "baby")
_FEMALE_PLURALS = ("girls", "sisters", "daughters", "wives", "girlfriends")
_MALE_PLURALS = ("boys", "brothers", "sons", "husbands", "boyfriends")


def _default_replacements() -> dict[str, str]:
    rep = {w: "person" for w in ("woman", "man", "sister", "brother", "daughter", "son",
                                 "wife", "husband", "girlfriend", "boyfriend")}
    rep.update({w: "people" for w in ("women", "men") + _FEMALE_PLURALS[1:] + _MALE_PLURALS[1:]})
    rep.update(girl="child", boy="child", girls="children", boys="children")
    return rep


@dataclass(frozen=True)
class GenderLexicon:
    female: frozenset[str]
    male: frozenset[str]
    neutral: frozenset[str]
    replace: Mapping[str, str] = field(hash=False)

    def __post_init__(self):
        object.__setattr__(self, "female", frozenset(w.lower() for w in self.female))
        object.__setattr__(self, "male", frozenset(w.lower() for w in self.male))
        object.__setattr__(self, "neutral", frozenset(w.lower() for w in self.neutral))
        object.__setattr__(self, "replace", {k.lower(): v.lower() for k, v in self.replace.items()})
        for a, b, name in ((self.female, self.male, "female/male"),
                           (self.female, self.neutral, "female/neutral"),
                           (self.male, self.neutral, "male/neutral")):
            if a & b:
                raise LexiconError(f"{name} word sets overlap: {sorted(a & b)}")
        gendered = self.female | self.male
        missing = sorted(gendered - set(self.replace))
        if missing:
            raise LexiconError(f"gender words without a replacement: {missing}")
        bad = sorted(v for v in self.replace.values() if v in gendered)
        if bad:
            raise LexiconError(f"replacements must be gender-neutral, got {bad}")

    @classmethod
    def default(cls) -> "GenderLexicon":
        return cls(frozenset(_FEMALE + _FEMALE_PLURALS), frozenset(_MALE + _MALE_PLURALS),
                   frozenset(_NEUTRAL), _default_replacements())

    @classmethod
    def from_json(cls, path) -> "GenderLexicon":
        """Load an override file ``{"female", "male", "neutral", "replace"}``."""
        data = json.loads(Path(path).read_text())
        try:
            return cls(frozenset(data["female"]), frozenset(data["male"]),
                       frozenset(data.get("neutral", ())), dict(data["replace"]))
        except KeyError as exc:
            raise LexiconError(f"{path}: missing key {exc}") from None

    def to_json(self) -> dict:
        return {"female": sorted(self.female), "male": sorted(self.male),
                "neutral": sorted(self.neutral), "replace": dict(sorted(self.replace.items()))}

    @property
    def gendered(self) -> frozenset[str]:
        return self.female | self.male


DEFAULT_LEXICON = GenderLexicon.default()


def classify_caption(caption: str, lexicon: GenderLexicon = DEFAULT_LEXICON) -> CaptionGender:
    tokens = set(tokenize(caption))
    has_f = bool(tokens & lexicon.female)
    has_m = bool(tokens & lexicon.male)
    if has_f and has_m:
        return CaptionGender.BOTH
    if has_f:
        return CaptionGender.FEMALE
    if has_m:
        return CaptionGender.MALE
    return CaptionGender.NONE


def label_image(captions: Sequence[str], person_instance_count: int,
                lexicon: GenderLexicon = DEFAULT_LEXICON) -> GenderLabel:
    """Derive the image gender label from its human captions.

    Only single-person images are labeled.  Any caption naming both genders,
    or a mix of female-only and male-only captions, discards the image.
    """
    if len(captions) < 1:
        raise ValueError("label_image needs at least one caption")
    if person_instance_count != 1:
        return GenderLabel.DISCARD
    kinds = {classify_caption(c, lexicon) for c in captions}
    if CaptionGender.BOTH in kinds:
        return GenderLabel.DISCARD
    female = CaptionGender.FEMALE in kinds
    male = CaptionGender.MALE in kinds
    if female and not male:
        return GenderLabel.WOMEN
    if male and not female:
        return GenderLabel.MEN
    return GenderLabel.DISCARD


def neutralize(caption: str, lexicon: GenderLexicon = DEFAULT_LEXICON) -> str:
    """Swap gendered words for neutral ones, leaving everything else in place."""

    def sub(m: re.Match) -> str:
        word = m.group(0)
        rep = lexicon.replace.get(word.lower())
        if rep is None:
            return word
        if word.isupper() and len(word) > 1:
            return rep.upper()
        if word[0].isupper():
            return rep[0].upper() + rep[1:]
        return rep

    return _TOKEN.sub(sub, caption)
