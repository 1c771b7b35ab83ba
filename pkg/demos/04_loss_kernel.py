"""Walk through the guided-attention loss terms on one toy example.

Shows the soft mask, the masked image, the three loss terms and their
combination, and checks the analytic gradients against finite differences.
"""
import numpy as np

from cocogb import conformance, kernel
from cocogb.coco import SegMask
from cocogb.lexicon import neutralize

rng = np.random.default_rng(5)

# Attention of the word "man" over a 7x7 grid, peaked on the person.
alpha = rng.uniform(0.0, 0.2, (7, 7))
alpha[2:6, 3:5] += 1.0
alpha = kernel.normalize(alpha)

# Threshold the max-normalized grid with a sigmoid, then remove the
# attended region from the image.
t = kernel.soft_mask(kernel.max_normalize(alpha))
image = rng.uniform(0.0, 1.0, (3, 28, 28))
erased = kernel.masked_image(image, alpha)
print(f"soft mask: {np.round(t[3], 2)}")
print(f"image energy kept after masking: {np.abs(erased).sum() / np.abs(image).sum():.2f}")

# The caption loss on original targets, and the gender-evidence loss on
# neutralized targets scored from the erased image.
vocab = ["a", "man", "person", "riding", "horse"]
caption = "a man riding a horse"
targets = [vocab.index(w) for w in caption.split()]
neutral = kernel.neutral_targets(targets, vocab)
print(f"targets {caption!r} -> {' '.join(vocab[i] for i in neutral)!r} ({neutralize(caption)!r})")
probs_full = rng.dirichlet(np.ones(len(vocab)) * 0.3, size=len(targets))
probs_erased = rng.dirichlet(np.ones(len(vocab)), size=len(targets))
l_lq = kernel.token_nll(kernel.TokenProbSeq(probs_full, targets))
l_ge = kernel.token_nll(kernel.TokenProbSeq(probs_erased, neutral))

# Person mask at pixel resolution, reduced to the grid by majority vote.
bits = np.zeros((28, 28), dtype=bool)
bits[8:24, 12:20] = True
l_ga = kernel.gender_attention_loss(alpha, SegMask(28, 28, bits))
losses = kernel.combine_losses(l_lq, l_ge, l_ga)
print(f"L_lq={losses.l_lq:.3f} L_ge={losses.l_ge:.3f} L_ga={losses.l_ga:.3f} "
      f"L_self={losses.l_self:.3f} L_es={losses.l_es:.3f}")

# Gradient of the attention loss w.r.t. the raw grid, against finite differences.
grid_mask = kernel.downsample_mask(bits, 7, 7)
g = kernel.grad_gender_attention_loss(alpha, grid_mask)
fd = conformance.central_difference(lambda x: kernel.attention_outside(x, grid_mask), alpha)
print(f"max relative gradient error: {conformance.max_relative_error(g, fd):.1e}")

# Shipped conformance vectors, as an external trainer would use them.
verdicts = conformance.check_vectors(conformance.read_vectors(conformance.shipped_vectors_path()))
print(f"conformance vectors passed: {sum(v.passed for v in verdicts)}/{len(verdicts)}")
