"""Score a captioning model's gender predictions, caption quality and attention.

Model outputs here are simulated; in practice read them with
``load_results`` (captions) and ``load_attention`` (gender-word maps).
"""
import numpy as np

from cocogb.attention import AttentionRecord, aggregate_attention, score
from cocogb.caption_eval import (CorpusStats, GeneratedCaption, OutcomeTable, QualityScores, aggregate,
                                 corpus_bleu4, corpus_cider, format_table, outcome)
from cocogb.coco import ImageRecord, InstanceAnnotation, person_mask
from cocogb.lexicon import GenderLabel

W, M = GenderLabel.WOMEN, GenderLabel.MEN

# Published outcome rows can be checked directly: correct / wrong / neutral
# percentages per gender go in, divergence comes out.
published = {
    "Att": OutcomeTable.from_rates((53.2, 25.1, 22.7), (62.7, 4.4, 32.9)),
    "GAIC_es": OutcomeTable.from_rates((64.1, 13.1, 22.8), (75.3, 4.0, 20.7)),
}
print(format_table({k: (t, None) for k, t in published.items()}))

# A toy model that over-predicts "man".
gold = [W, W, W, M, M, M]
generated = ["a woman holding an umbrella", "a man riding a skateboard", "a person with a dog",
             "a man on a surfboard", "a man and a woman at a table", "a man riding a horse"]
refs = [["a woman with an umbrella in the rain", "a lady holding an umbrella"],
        ["a girl riding a skateboard", "a young woman on a skateboard"],
        ["a woman walking her dog", "a person with a dog on a leash"],
        ["a man surfing a wave", "a surfer on a surfboard"],
        ["a man sitting at a table", "a man eating dinner"],
        ["a man riding a brown horse", "a rider on a horse"]]
results = [outcome(GeneratedCaption(i, c), g) for i, (c, g) in enumerate(zip(generated, gold))]
table = aggregate(zip(gold, results))
quality = QualityScores(corpus_bleu4(generated, refs), corpus_cider(generated, refs, CorpusStats.from_references(refs)))
print(format_table({"toy": (table, quality)}))
print(f"pooled gender error: {table.gender_error_pooled:.1f}%")

# Attention correctness: does the gender word's attention land on the person?
image = ImageRecord(1, "x.jpg", 32, 24)
person = InstanceAnnotation(1, 1, [[8, 4, 20, 4, 20, 24, 8, 24]], False)
mask = person_mask(image, [person])
rng = np.random.default_rng(0)
focused = np.full((6, 8), 0.05)
focused[2:5, 3:5] = 1.0
diffuse = rng.uniform(0.0, 1.0, (6, 8))
scores = [(W, score(AttentionRecord(1, "woman", focused), mask)),
          (M, score(AttentionRecord(1, "man", diffuse), mask))]
for g, s in scores:
    print(f"{g.value:>5}: pointing hit={s.pointing_hit}, attention inside person={s.attention_sum:.2f}")
print(aggregate_attention(scores).to_text())
