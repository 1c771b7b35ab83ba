"""Gender-bias auditing for image captioning corpora and models.

Modules
-------
coco          COCO annotation loading, RLE and polygon masks
lexicon       gender word lists, caption/image labels, neutralization
bias          co-occurrence tables and bias ratio reports
splits        balanced (V1) and anti-stereotypical (V2) split builders
caption_eval  gender outcomes, divergence, BLEU-4, CIDEr
attention     Pointing Game and Attention Sum
kernel        guided-attention loss terms and their gradients
conformance   kernel test vectors and a checker
"""
from .bias import BiasReport, CooccurrenceTable, bias_ratio, build_report, cooccurrence
from .caption_eval import Outcome, OutcomeTable, aggregate, bleu4, cider, divergence, outcome
from .coco import SegMask, decode_rle, encode_rle, load_captions, load_instances, person_mask, rasterize_polygon
from .lexicon import DEFAULT_LEXICON, CaptionGender, GenderLabel, GenderLexicon, classify_caption, label_image, neutralize
from .splits import LabeledImage, SplitSpec, build_v1_secret, build_v2, verify_split

__version__ = "0.1.0"
