"""COCO annotation parsing and segmentation mask decoding.

Masks are held as boolean numpy arrays of shape ``(height, width)``.  COCO
run-length encodings walk the image in column-major order, starting with a
background run, so encode/decode transpose through Fortran order.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PERSON_CATEGORY = "person"


class CocoFormatError(ValueError):
    """Malformed annotation file or geometry."""


class CocoParseError(CocoFormatError):
    def __init__(self, path, byte_offset: int, msg: str):
        self.path = str(path)
        self.byte_offset = byte_offset
        super().__init__(f"{path}: invalid JSON at byte {byte_offset}: {msg}")


class ReferentialIntegrityError(CocoFormatError):
    def __init__(self, missing_ids: Sequence[int]):
        self.missing_ids = sorted(set(missing_ids))
        shown = ", ".join(str(i) for i in self.missing_ids[:20])
        more = "" if len(self.missing_ids) <= 20 else f" (+{len(self.missing_ids) - 20} more)"
        super().__init__(f"annotations reference unknown image ids: {shown}{more}")


class MaskSizeError(CocoFormatError):
    pass


class GeometryError(CocoFormatError):
    pass


@dataclass(frozen=True)
class ImageRecord:
    image_id: int
    file_name: str
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise CocoFormatError(f"image {self.image_id}: non-positive size {self.width}x{self.height}")


@dataclass(frozen=True)
class CaptionAnnotation:
    annotation_id: int
    image_id: int
    caption: str

    def __post_init__(self):
        if not self.caption.strip():
            raise CocoFormatError(f"caption annotation {self.annotation_id} is empty")


@dataclass(frozen=True)
class InstanceAnnotation:
    image_id: int
    category_id: int
    segmentation: object
    iscrowd: bool = False


@dataclass(frozen=True)
class Category:
    category_id: int
    name: str


@dataclass
class SegMask:
    """Binary mask; ``bits`` is a row-major ``(height, width)`` bool array."""

    width: int
    height: int
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.shape != (self.height, self.width):
            raise MaskSizeError(f"mask bits shape {self.bits.shape} != ({self.height}, {self.width})")

    @classmethod
    def empty(cls, width: int, height: int) -> "SegMask":
        return cls(width, height, np.zeros((height, width), dtype=bool))

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def __or__(self, other: "SegMask") -> "SegMask":
        if (self.width, self.height) != (other.width, other.height):
            raise MaskSizeError("cannot union masks of different sizes")
        return SegMask(self.width, self.height, self.bits | other.bits)


@dataclass
class InstanceDataset:
    images: dict[int, ImageRecord]
    categories: dict[int, Category]
    instances: list[InstanceAnnotation]

    def category_id(self, name: str) -> int:
        for cat in self.categories.values():
            if cat.name == name:
                return cat.category_id
        raise KeyError(name)

    def by_image(self) -> dict[int, list[InstanceAnnotation]]:
        out: dict[int, list[InstanceAnnotation]] = defaultdict(list)
        for ann in self.instances:
            out[ann.image_id].append(ann)
        return out


# --------------------------------------------------------------------------
# JSON loading


def _read_json(path) -> dict:
    raw = Path(path).read_bytes()
    text = raw.decode("utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise CocoParseError(path, offset, exc.msg) from None
    if not isinstance(data, dict):
        raise CocoFormatError(f"{path}: top-level JSON value must be an object")
    return data


def _parse_images(data: dict, path) -> dict[int, ImageRecord]:
    if not isinstance(data.get("images"), list):
        raise CocoFormatError(f"{path}: missing 'images' array")
    images = {}
    for im in data["images"]:
        rec = ImageRecord(int(im["id"]), str(im.get("file_name", "")), int(im["width"]), int(im["height"]))
        if rec.image_id in images:
            raise CocoFormatError(f"{path}: duplicate image id {rec.image_id}")
        images[rec.image_id] = rec
    return images


def load_captions(path) -> list[tuple[ImageRecord, list[CaptionAnnotation]]]:
    """Load a COCO caption file, grouping captions under their image.

    Records come back in image-id order; images without captions are kept
    with an empty list.
    """
    data = _read_json(path)
    images = _parse_images(data, path)
    if not isinstance(data.get("annotations"), list):
        raise CocoFormatError(f"{path}: missing 'annotations' array")

    grouped: dict[int, list[CaptionAnnotation]] = defaultdict(list)
    missing = []
    for ann in data["annotations"]:
        image_id = int(ann["image_id"])
        if image_id not in images:
            missing.append(image_id)
            continue
        grouped[image_id].append(CaptionAnnotation(int(ann.get("id", -1)), image_id, str(ann["caption"])))
    if missing:
        raise ReferentialIntegrityError(missing)
    return [(images[i], grouped.get(i, [])) for i in sorted(images)]


def load_instances(path) -> InstanceDataset:
    data = _read_json(path)
    images = _parse_images(data, path)
    categories = {}
    names = set()
    for cat in data.get("categories", []):
        c = Category(int(cat["id"]), str(cat["name"]))
        if c.category_id in categories or c.name in names:
            raise CocoFormatError(f"{path}: duplicate category {c}")
        categories[c.category_id] = c
        names.add(c.name)
    if not isinstance(data.get("annotations"), list):
        raise CocoFormatError(f"{path}: missing 'annotations' array")

    instances = []
    missing = []
    for ann in data["annotations"]:
        image_id = int(ann["image_id"])
        if image_id not in images:
            missing.append(image_id)
            continue
        instances.append(
            InstanceAnnotation(image_id, int(ann["category_id"]), ann.get("segmentation"), bool(ann.get("iscrowd", 0)))
        )
    if missing:
        raise ReferentialIntegrityError(missing)
    return InstanceDataset(images, categories, instances)


# --------------------------------------------------------------------------
# RLE


def decode_rle(counts: Sequence[int], width: int, height: int) -> SegMask:
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size and counts.min() < 0:
        raise MaskSizeError("negative run length")
    total = int(counts.sum())
    if total != width * height:
        raise MaskSizeError(f"RLE counts sum to {total}, expected {width}x{height}={width * height}")
    values = np.zeros(counts.size, dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    return SegMask(width, height, flat.reshape((width, height)).T)


def encode_rle(mask: SegMask) -> list[int]:
    """Column-major run lengths, first run is background (possibly 0)."""
    flat = mask.bits.T.reshape(-1)
    if flat.size == 0:
        return []
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return runs


def rle_from_string(s: str) -> list[int]:
    """Decode the compact LEB128-like string form used by pycocotools."""
    counts: list[int] = []
    p = 0
    data = s.encode("ascii")
    while p < len(data):
        x = 0
        k = 0
        more = True
        while more:
            c = data[p] - 48
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            p += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


def rle_to_string(counts: Sequence[int]) -> str:
    out = []
    for i, x in enumerate(counts):
        x = int(x)
        if i > 2:
            x -= int(counts[i - 2])
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = (x != -1) if (c & 0x10) else (x != 0)
            if more:
                c |= 0x20
            out.append(chr(c + 48))
    return "".join(out)


# --------------------------------------------------------------------------
# Polygons


def _fill_polygon(bits: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> None:
    """Even-odd scanline fill sampled at pixel centers, ORed into ``bits``."""
    height, width = bits.shape
    n = len(xs)
    xj, yj = xs[np.arange(n) - 1], ys[np.arange(n) - 1]
    row_lo = max(int(np.floor(ys.min() - 0.5)), 0)
    row_hi = min(int(np.ceil(ys.max() - 0.5)), height - 1)
    for row in range(row_lo, row_hi + 1):
        yc = row + 0.5
        crosses = (ys > yc) != (yj > yc)
        if not crosses.any():
            continue
        x0, y0, x1, y1 = xs[crosses], ys[crosses], xj[crosses], yj[crosses]
        xint = np.sort((x1 - x0) * (yc - y0) / (y1 - y0) + x0)
        for a, b in zip(xint[0::2], xint[1::2]):
            # a center c is inside iff a <= c < b: an odd count of crossings lies strictly right of it
            lo = max(_first_center_at_or_above(a), 0)
            hi = min(_first_center_at_or_above(b), width)
            if hi > lo:
                bits[row, lo:hi] = True


def _first_center_at_or_above(x: float) -> int:
    col = int(np.ceil(x - 0.5))
    if col - 0.5 >= x:
        col -= 1
    elif col + 0.5 < x:
        col += 1
    return col


def rasterize_polygon(polygons: Iterable[Sequence[float]], width: int, height: int) -> SegMask:
    """Rasterize COCO flat ``[x0, y0, x1, y1, ...]`` polygons into one mask.

    Vertices outside the image are clamped to its rectangle.
    """
    bits = np.zeros((height, width), dtype=bool)
    for poly in polygons:
        coords = np.asarray(poly, dtype=float)
        if coords.size % 2 or coords.size < 6:
            raise GeometryError(f"polygon needs >= 3 (x, y) vertices, got {coords.size} values")
        xs = np.clip(coords[0::2], 0.0, float(width))
        ys = np.clip(coords[1::2], 0.0, float(height))
        _fill_polygon(bits, xs, ys)
    return SegMask(width, height, bits)


def segmentation_mask(segmentation, width: int, height: int) -> SegMask:
    """Normalize any COCO segmentation payload (polygons or RLE) to a SegMask."""
    if isinstance(segmentation, dict):
        counts = segmentation["counts"]
        if isinstance(counts, str):
            counts = rle_from_string(counts)
        size = segmentation.get("size")
        if size is not None and (int(size[0]), int(size[1])) != (height, width):
            raise MaskSizeError(f"RLE size {size} does not match image {height}x{width}")
        return decode_rle(counts, width, height)
    if isinstance(segmentation, list):
        return rasterize_polygon(segmentation, width, height)
    raise GeometryError(f"unsupported segmentation payload: {type(segmentation).__name__}")


def person_mask(image: ImageRecord, instances: Iterable[InstanceAnnotation]) -> SegMask:
    # Crowd regions are included alongside individual instances.
    mask = SegMask.empty(image.width, image.height)
    for ann in instances:
        if ann.image_id != image.image_id:
            continue
        mask.bits |= segmentation_mask(ann.segmentation, image.width, image.height).bits
    return mask
