"""Kernel test vectors and a checker for external loss implementations.

A vector file is JSON lines, each ``{"op", "inputs", "expected"}`` with an
optional ``"rtol"``.  Expected values are produced independently of the
kernel: scalar re-evaluation of the formulas for values, central finite
differences for gradients.
"""
from __future__ import annotations

import json
import math
from collections.abc import Callable, Iterable
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import kernel
from .attention import upsample_bilinear

FD_STEP = 1e-5
GRAD_RTOL = 1e-4
VALUE_RTOL = 1e-9
_ABS_FLOOR = 1e-12


def central_difference(f: Callable[[np.ndarray], float], x, h: float = FD_STEP) -> np.ndarray:
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def max_relative_error(actual, expected, floor: float = _ABS_FLOOR) -> float:
    a = np.asarray(actual, dtype=float)
    e = np.asarray(expected, dtype=float)
    if a.shape != e.shape:
        return math.inf
    denom = np.maximum(np.maximum(np.abs(a), np.abs(e)), floor)
    return float(np.max(np.abs(a - e) / denom)) if a.size else 0.0


def _params(inputs) -> kernel.MaskParams:
    return kernel.MaskParams(inputs.get("threshold", 0.5), inputs.get("sharpness", 10.0))


OPS: dict[str, Callable[[dict], object]] = {
    "soft_mask": lambda i: kernel.soft_mask(i["alpha"], _params(i)),
    "grad_soft_mask": lambda i: kernel.grad_soft_mask(i["alpha"], _params(i)),
    "masked_image": lambda i: kernel.masked_image(i["image"], i["alpha"], _params(i),
                                                  i.get("normalize_peak", True)),
    "token_nll": lambda i: kernel.token_nll(kernel.TokenProbSeq(i["probs"], i["targets"])),
    "gender_attention_loss": lambda i: kernel.gender_attention_loss(i["alpha"], i["mask"]),
    "grad_gender_attention_loss": lambda i: kernel.grad_gender_attention_loss(i["alpha"], i["mask"]),
    "combine_losses": lambda i: asdict(kernel.combine_losses(i["l_lq"], i["l_ge"], i["l_ga"], i["mu"], i["eta"])),
    "downsample_mask": lambda i: kernel.downsample_mask(i["mask"], i["grid_h"], i["grid_w"]).astype(float),
    "upsample_bilinear": lambda i: upsample_bilinear(i["grid"], i["target_w"], i["target_h"]),
}


@dataclass
class Verdict:
    index: int
    op: str
    passed: bool
    detail: str


def _compare(actual, expected, rtol: float) -> tuple[bool, str]:
    if isinstance(expected, dict):
        if not isinstance(actual, dict):
            return False, "expected an object result"
        worst = 0.0
        for k, v in expected.items():
            if k not in actual:
                return False, f"missing field {k!r}"
            worst = max(worst, max_relative_error(actual[k], v))
    else:
        worst = max_relative_error(actual, expected)
    return worst <= rtol, f"max relative error {worst:.3g} (rtol {rtol:g})"


def check_vector(index: int, vector: dict) -> Verdict:
    op = vector.get("op", "<missing>")
    fn = OPS.get(op)
    if fn is None:
        return Verdict(index, op, False, f"unknown op {op!r}")
    try:
        actual = fn(vector["inputs"])
        passed, detail = _compare(actual, vector["expected"], float(vector.get("rtol", VALUE_RTOL)))
    except Exception as exc:  # a broken vector must not stop the suite
        return Verdict(index, op, False, f"{type(exc).__name__}: {exc}")
    return Verdict(index, op, passed, detail)


def read_vectors(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def check_vectors(vectors: Iterable[dict]) -> list[Verdict]:
    return [check_vector(i, v) for i, v in enumerate(vectors)]


def shipped_vectors_path() -> Path:
    return Path(str(resources.files("cocogb") / "data" / "kernel_vectors.jsonl"))


# --------------------------------------------------------------------------
# Vector generation (independent scalar formulas and finite differences)


def _sig(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))


def _scalar_soft_mask(alpha, thr, w):
    return [[_sig(w * (a - thr)) for a in row] for row in alpha]


def _outside_raw(alpha, mask) -> float:
    total = sum(sum(r) for r in alpha)
    return sum(a * (1 - m) for ra, rm in zip(alpha, mask) for a, m in zip(ra, rm)) / total


def generate_vectors(seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    out: list[dict] = []

    for thr, w in ((0.5, 10.0), (0.3, 4.0), (10.0, 1.0)):
        alpha = rng.uniform(0, 1, (4, 5)).round(6)
        if thr == 10.0:
            alpha = alpha * 20
        alpha_l = alpha.tolist()
        inputs = {"alpha": alpha_l, "threshold": thr, "sharpness": w}
        out.append({"op": "soft_mask", "inputs": inputs, "expected": _scalar_soft_mask(alpha_l, thr, w)})
        f = lambda x, thr=thr, w=w: float(sum(_sig(w * (v - thr)) for v in x.ravel()))
        out.append({"op": "grad_soft_mask", "inputs": inputs,
                    "expected": central_difference(f, alpha).tolist(), "rtol": GRAD_RTOL})

    for shape in ((3, 3), (7, 7), (14, 14)):
        alpha = rng.uniform(0.01, 1, shape)
        mask = (rng.uniform(0, 1, shape) < 0.4).astype(int)
        alpha_n = (alpha / alpha.sum()).tolist()
        mask_l = mask.tolist()
        out.append({"op": "gender_attention_loss", "inputs": {"alpha": alpha_n, "mask": mask_l},
                    "expected": _outside_raw(alpha_n, mask_l)})
        f = lambda x, m=mask_l: _outside_raw(x.tolist(), m)
        out.append({"op": "grad_gender_attention_loss", "inputs": {"alpha": alpha.tolist(), "mask": mask_l},
                    "expected": central_difference(f, alpha).tolist(), "rtol": GRAD_RTOL})

    # image already at attention resolution, so no resampling enters the expected value
    image = rng.normal(size=(3, 4, 4))
    alpha = rng.uniform(0.05, 1, (4, 4))
    peak = float(alpha.max())
    t = _scalar_soft_mask((alpha / peak).tolist(), 0.5, 10.0)
    expected = [[[v - v * t[r][c] for c, v in enumerate(row)] for r, row in enumerate(ch)] for ch in image.tolist()]
    out.append({"op": "masked_image", "inputs": {"image": image.tolist(), "alpha": alpha.tolist()},
                "expected": expected})

    probs = rng.dirichlet(np.ones(6), size=5)
    targets = rng.integers(0, 6, size=5)
    out.append({"op": "token_nll", "inputs": {"probs": probs.tolist(), "targets": targets.tolist()},
                "expected": -sum(math.log(probs[t][y]) for t, y in enumerate(targets.tolist()))})
    out.append({"op": "token_nll", "inputs": {"probs": np.full((3, 8), 1 / 8).tolist(), "targets": [0, 3, 7]},
                "expected": 3 * math.log(8)})

    for l_lq, l_ge, l_ga, mu, eta in ((2.5, 3.0, 0.4, 0.1, 0.05), (1.0, 0.0, 1.0, 0.0, 0.0)):
        l_self = l_lq + mu * l_ge
        out.append({"op": "combine_losses",
                    "inputs": {"l_lq": l_lq, "l_ge": l_ge, "l_ga": l_ga, "mu": mu, "eta": eta},
                    "expected": {"l_self": l_self, "l_es": l_self + eta * l_ga}})

    # 4x4 pixels onto 2x2 cells: each cell is one 2x2 block, majority needs 3 of 4 pixels
    block = [[1, 1, 0, 0], [1, 0, 0, 1], [0, 0, 1, 1], [0, 1, 1, 1]]
    out.append({"op": "downsample_mask", "inputs": {"mask": block, "grid_h": 2, "grid_w": 2},
                "expected": [[1.0, 0.0], [0.0, 1.0]]})

    # corner-aligned 2x2 -> 3x3 keeps corners and averages edges/center; mass rescaled afterwards
    g = [[1.0, 2.0], [3.0, 4.0]]
    raw = [[1.0, 1.5, 2.0], [2.0, 2.5, 3.0], [3.0, 3.5, 4.0]]
    scale = 10.0 / sum(map(sum, raw))
    out.append({"op": "upsample_bilinear", "inputs": {"grid": g, "target_w": 3, "target_h": 3},
                "expected": [[v * scale for v in row] for row in raw]})
    return out


def write_vectors(path, vectors: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for v in vectors:
            fh.write(json.dumps(v, sort_keys=True) + "\n")
