"""``cocogb`` command line: label, bias-report, build-split, eval, check-kernel.

Exit codes: 0 success, 1 evaluation or constraint failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from . import attention as att
from . import bias, caption_eval, coco, conformance, splits
from .lexicon import DEFAULT_LEXICON, GenderLabel, GenderLexicon, LexiconError, label_image

log = logging.getLogger("cocogb")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    captions_ann: Path | None = None
    instances_ann: Path | None = None
    labels: Path | None = None
    split: Path | None = None
    lexicon: Path | None = None
    results: Path | None = None
    attention: Path | None = None
    vectors: Path | None = None
    variant: str = "v1"
    per_gender: int = splits.DEFAULT_PER_GENDER
    min_train: int = splits.DEFAULT_MIN_TRAIN
    val_size: int = splits.DEFAULT_VAL_SIZE
    test_size: int = splits.DEFAULT_TEST_SIZE
    min_support: int = bias.DEFAULT_MIN_SUPPORT
    seed: int = 0
    out_dir: Path = field(default_factory=lambda: Path("."))

    _PATHS = ("captions_ann", "instances_ann", "labels", "split", "lexicon", "results", "attention", "vectors")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        merged = {}
        if getattr(args, "config", None):
            path = Path(args.config)
            if not path.exists():
                raise UsageError(f"config file not found: {path}")
            merged.update({k.replace("-", "_"): v for k, v in json.loads(path.read_text()).items()})
        merged.update({k: v for k, v in vars(args).items() if v is not None and k in cls.__dataclass_fields__})
        unknown = set(merged) - set(cls.__dataclass_fields__)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**merged)
        for name in cls._PATHS:
            value = getattr(cfg, name)
            if value is not None:
                setattr(cfg, name, Path(value))
                if not Path(value).exists():
                    raise UsageError(f"--{name.replace('_', '-')}: file not found: {value}")
        cfg.out_dir = Path(cfg.out_dir)
        return cfg

    def require(self, *names: str) -> None:
        missing = [f"--{n.replace('_', '-')}" for n in names if getattr(self, n) is None]
        if missing:
            raise UsageError(f"missing required input(s): {', '.join(missing)}")

    def lexicon_obj(self) -> GenderLexicon:
        return GenderLexicon.from_json(self.lexicon) if self.lexicon else DEFAULT_LEXICON


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _read_labels(path: Path) -> dict[int, GenderLabel]:
    try:
        raw = json.loads(path.read_text())
        return {int(k): GenderLabel(v) for k, v in raw.items()}
    except (json.JSONDecodeError, ValueError, AttributeError) as exc:
        raise UsageError(f"{path}: not a labels file ({exc})") from None


def _dataset(cfg: RunConfig) -> tuple[list[splits.LabeledImage], coco.InstanceDataset]:
    labels = _read_labels(cfg.labels)
    inst = coco.load_instances(cfg.instances_ann)
    person = {c.category_id for c in inst.categories.values() if c.name == coco.PERSON_CATEGORY}
    cats = bias.image_categories(a for a in inst.instances if a.category_id not in person)
    data = [splits.LabeledImage(i, labels.get(i, GenderLabel.DISCARD), frozenset(cats.get(i, ())))
            for i in sorted(inst.images)]
    return data, inst


# --------------------------------------------------------------------------
# commands


def cmd_label(cfg: RunConfig) -> int:
    cfg.require("captions_ann", "instances_ann")
    lexicon = cfg.lexicon_obj()
    records = coco.load_captions(cfg.captions_ann)
    inst = coco.load_instances(cfg.instances_ann)
    if not records or not any(caps for _, caps in records):
        raise UsageError(f"{cfg.captions_ann}: no captioned images")
    try:
        person_id = inst.category_id(coco.PERSON_CATEGORY)
    except KeyError:
        raise UsageError(f"{cfg.instances_ann}: no 'person' category") from None
    people: Counter = Counter()
    for a in inst.instances:
        if a.category_id == person_id:
            # a crowd region stands for several people
            people[a.image_id] += 2 if a.iscrowd else 1

    labels = {}
    for image, caps in records:
        if caps:
            labels[image.image_id] = label_image([c.caption for c in caps], people[image.image_id], lexicon)
    counts = Counter(l.value for l in labels.values())
    summary = {g.value: counts.get(g.value, 0) for g in GenderLabel}
    summary["men_per_woman"] = summary["men"] / summary["women"] if summary["women"] else None
    summary["seed"] = cfg.seed
    _write_json(cfg.out_dir / "labels.json", {str(k): labels[k].value for k in sorted(labels)})
    _write_json(cfg.out_dir / "labels_summary.json", summary)
    print(f"labeled {len(labels)} images: women={summary['women']} men={summary['men']} "
          f"discard={summary['discard']}")
    return EXIT_OK


def cmd_bias_report(cfg: RunConfig) -> int:
    cfg.require("labels", "instances_ann")
    data, inst = _dataset(cfg)
    names = {c.category_id: c.name for c in inst.categories.values()}
    parts = {"all": [im.image_id for im in data]}
    if cfg.split:
        spec = splits.SplitSpec.load(cfg.split)
        parts = {k: v for k, v in (("train", spec.train), ("val", spec.val), ("test", spec.test)) if v}
    by_id = {im.image_id: im for im in data}
    for name, ids in parts.items():
        ims = [by_id[i] for i in ids if i in by_id]
        table = bias.cooccurrence({im.image_id: im.label for im in ims}, {im.image_id: im.categories for im in ims})
        report = bias.build_report(table, cfg.min_support, names)
        payload = report.to_json()
        payload["seed"] = cfg.seed
        payload["partition"] = name
        _write_json(cfg.out_dir / f"bias_report_{name}.json", payload)
        (cfg.out_dir / f"bias_report_{name}.txt").write_text(report.to_text())
        print(f"[{name}] average bias ratio {report.average_bias_ratio:.3f}, "
              f"{100 * report.pct_male_skewed:.1f}% male-skewed")
    return EXIT_OK


def cmd_build_split(cfg: RunConfig) -> int:
    cfg.require("labels", "instances_ann")
    data, _ = _dataset(cfg)
    if cfg.variant == "v1":
        pool = data
        if cfg.split:
            keep = set(splits.SplitSpec.load(cfg.split).test)
            pool = [im for im in data if im.image_id in keep]
        spec = splits.build_v1_secret(pool, cfg.per_gender)
        spec.seed = cfg.seed
        check = splits.verify_split(spec, data, per_gender=cfg.per_gender)
    elif cfg.variant == "v2":
        spec = splits.build_v2(data, cfg.val_size, cfg.test_size, cfg.min_train, cfg.seed)
        check = splits.verify_split(spec, data, val_size=cfg.val_size, test_size=cfg.test_size,
                                    min_train_per_category=cfg.min_train)
    else:
        raise UsageError(f"--variant must be v1 or v2, got {cfg.variant!r}")
    spec.save(cfg.out_dir / f"split_{cfg.variant}.json")
    report = check.to_json()
    report["seed"] = cfg.seed
    _write_json(cfg.out_dir / f"split_{cfg.variant}_verify.json", report)
    print(f"{spec.name}: train={len(spec.train)} val={len(spec.val)} test={len(spec.test)} "
          f"verify={'pass' if check.passed else 'FAIL'}")
    for f in check.failures:
        print(f"  {f}", file=sys.stderr)
    return EXIT_OK if check.passed else EXIT_FAIL


def cmd_eval(cfg: RunConfig) -> int:
    cfg.require("results")
    lexicon = cfg.lexicon_obj()
    out: dict = {"seed": cfg.seed}
    try:
        raw = json.loads(cfg.results.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{cfg.results}: invalid JSON at char {exc.pos}: {exc.msg}") from None

    quality = None
    if isinstance(raw, dict) and {"women", "men"} <= set(raw):
        table = caption_eval.OutcomeTable.from_rates(raw["women"], raw["men"])
    else:
        cfg.require("labels")
        results = {r.image_id: r for r in caption_eval.load_results(cfg.results)}
        labels = _read_labels(cfg.labels)
        ids = sorted(labels)
        if cfg.split:
            ids = sorted(splits.SplitSpec.load(cfg.split).test)
        gold = {i: labels[i] for i in ids if labels.get(i) in caption_eval.GENDERS}
        missing = sorted(i for i in gold if i not in results)
        if missing:
            log.warning("%d evaluated images have no generated caption", len(missing))
        out["missing_image_ids"] = missing
        table = caption_eval.aggregate((g, caption_eval.outcome(results[i], g, lexicon))
                                       for i, g in gold.items() if i in results)
        if cfg.captions_ann:
            refs = {im.image_id: [c.caption for c in caps] for im, caps in coco.load_captions(cfg.captions_ann)}
            scored = sorted(i for i in results if refs.get(i))
            if scored:
                cands = [results[i].caption for i in scored]
                rlist = [refs[i] for i in scored]
                quality = caption_eval.QualityScores(caption_eval.corpus_bleu4(cands, rlist),
                                                     caption_eval.corpus_cider(cands, rlist))
                out["quality"] = quality.to_json()

    out["outcomes"] = table.to_json()
    text = caption_eval.format_table({"model": (table, quality)})

    if cfg.attention:
        cfg.require("labels", "instances_ann")
        labels = _read_labels(cfg.labels)
        inst = coco.load_instances(cfg.instances_ann)
        person_id = inst.category_id(coco.PERSON_CATEGORY)
        per_image = inst.by_image()
        records = [r for r in att.load_attention(cfg.attention) if labels.get(r.image_id) in caption_eval.GENDERS]
        mask_for = lambda i: coco.person_mask(inst.images[i], [a for a in per_image.get(i, [])
                                                                if a.category_id == person_id])
        scores = att.score_all(records, mask_for)
        atable = att.aggregate_attention((labels[r.image_id], s) for r, s in zip(records, scores))
        out["attention"] = atable.to_json()
        text += "\n" + atable.to_text()

    _write_json(cfg.out_dir / "eval.json", out)
    (cfg.out_dir / "eval.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if not table.partial else EXIT_FAIL


def cmd_check_kernel(cfg: RunConfig) -> int:
    path = cfg.vectors or conformance.shipped_vectors_path()
    try:
        vectors = conformance.read_vectors(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"{path}: cannot read vectors ({exc})") from None
    verdicts = conformance.check_vectors(vectors)
    for v in verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'} [{v.index}] {v.op}: {v.detail}")
    failed = sum(not v.passed for v in verdicts)
    print(f"{len(verdicts) - failed}/{len(verdicts)} vectors passed")
    return EXIT_OK if failed == 0 else EXIT_FAIL


COMMANDS = {
    "label": cmd_label,
    "bias-report": cmd_bias_report,
    "build-split": cmd_build_split,
    "eval": cmd_eval,
    "check-kernel": cmd_check_kernel,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option values; flags take precedence")
    common.add_argument("--captions-ann", dest="captions_ann")
    common.add_argument("--instances-ann", dest="instances_ann")
    common.add_argument("--labels")
    common.add_argument("--split")
    common.add_argument("--lexicon")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cocogb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("label", parents=[common], help="derive per-image gender labels from captions")
    p = sub.add_parser("bias-report", parents=[common], help="per-category gender bias ratios")
    p.add_argument("--min-support", dest="min_support", type=int)
    p = sub.add_parser("build-split", parents=[common], help="build the V1 secret test or the V2 split")
    p.add_argument("--variant", choices=("v1", "v2"))
    p.add_argument("--per-gender", dest="per_gender", type=int)
    p.add_argument("--min-train", dest="min_train", type=int)
    p.add_argument("--val-size", dest="val_size", type=int)
    p.add_argument("--test-size", dest="test_size", type=int)
    p = sub.add_parser("eval", parents=[common], help="score generated captions and attention maps")
    p.add_argument("--results")
    p.add_argument("--attention")
    p = sub.add_parser("check-kernel", parents=[common], help="run loss-kernel conformance vectors")
    p.add_argument("--vectors")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = RunConfig.from_args(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"cocogb {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (coco.CocoFormatError, caption_eval.EvaluationInputError, att.AttentionError, LexiconError) as exc:
        print(f"cocogb {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (splits.CapacityError, splits.ConstraintError, bias.EmptyReportError) as exc:
        print(f"cocogb {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
