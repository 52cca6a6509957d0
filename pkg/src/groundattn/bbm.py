"""Bimodal Bias Merging.

Combines the text-conditioned activation map with the model's image bias
(start-token attention from the ground-truth-noised run) and text bias
(attention from a pure-noise run).  The two biases are multiplied into a
bias-interaction map; a clipped SSIM score between them weights a Bezier
interpolation against the original map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .attnstore import AttentionDump, TokenMeta
from .extraction import ActivationMap, ExtractionSpec, extract_comb, extract_img_bias, minmax


class MergeError(ValueError):
    pass


VARIANTS = ("linear", "quadratic", "mixture")


@dataclass
class MergeResult:
    s: float
    p_comb: ActivationMap
    p_img: ActivationMap
    p_txt: ActivationMap
    p_mult: ActivationMap
    p_bbm: ActivationMap
    variant: str


def ssim(a: np.ndarray, b: np.ndarray, window: int = 7,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local SSIM over all fully interior sliding windows, clipped to [0,1].

    Inputs are expected min-max normalized, so the dynamic range is 1.
    Uniform (box) windows, population statistics.
    """
    if a.shape != b.shape:
        raise MergeError(f"shape mismatch {a.shape} vs {b.shape}")
    if window > min(a.shape):
        raise MergeError(f"window {window} exceeds map side {min(a.shape)}")
    c1 = (k1 * 1.0) ** 2
    c2 = (k2 * 1.0) ** 2
    a = a.astype(np.float64)
    b = b.astype(np.float64)

    def box(x: np.ndarray) -> np.ndarray:
        full = uniform_filter(x, size=window, mode="constant")
        r = window // 2
        h, w = x.shape
        # keep only windows fully inside the map
        return full[r : h - (window - 1 - r), r : w - (window - 1 - r)]

    mu_a = box(a)
    mu_b = box(b)
    var_a = box(a * a) - mu_a**2
    var_b = box(b * b) - mu_b**2
    cov = box(a * b) - mu_a * mu_b
    local = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    return float(np.clip(local.mean(), 0.0, 1.0))


def bias_interaction(p_img: ActivationMap, p_txt: ActivationMap) -> ActivationMap:
    """Matrix product of the two bias maps, min-max normalized."""
    a = p_img.grid
    b = p_txt.grid
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape != b.shape:
        raise MergeError(f"bias maps must be same-size square, got {a.shape}, {b.shape}")
    prod = a.astype(np.float64) @ b.astype(np.float64)
    return ActivationMap(minmax(prod), "mult")


def merge(
    p_comb: ActivationMap,
    p_mult: ActivationMap,
    s: float,
    variant: str = "mixture",
    renormalize: bool = True,
) -> ActivationMap:
    """Bezier interpolation between the combined map and the bias product.

    linear:     s*M + (1-s)*C
    quadratic:  2(1-s)s*(M o C) + (1-s)^2*C + s^2*M
    mixture:    2(1-s)s*((M + C + M o C)/2) + (1-s)^2*C + s^2*M
    with o the elementwise product; s weights the bias product.
    """
    if not 0.0 <= s <= 1.0:
        raise MergeError(f"s={s} outside [0, 1]")
    if variant not in VARIANTS:
        raise MergeError(f"unknown variant {variant!r}")
    c = p_comb.grid.astype(np.float64)
    m = p_mult.grid.astype(np.float64)
    if c.shape != m.shape:
        raise MergeError(f"shape mismatch {c.shape} vs {m.shape}")
    if variant == "linear":
        out = s * m + (1.0 - s) * c
    elif variant == "quadratic":
        out = 2 * (1 - s) * s * (m * c) + (1 - s) ** 2 * c + s**2 * m
    else:
        out = 2 * (1 - s) * s * ((m + c + m * c) / 2.0) + (1 - s) ** 2 * c + s**2 * m
    if renormalize:
        out = minmax(out)
    return ActivationMap(out, "bbm", meta={"variant": variant, "s": s})


def run_bbm(
    dump_gt: AttentionDump,
    dump_noise: AttentionDump,
    tokens: list[TokenMeta],
    spec: ExtractionSpec,
    sample: int = 0,
    variant: str = "mixture",
    window: int = 7,
) -> MergeResult:
    """Full BBM on one sample from a ground-truth run and a noise run.

    The text bias uses the same token filtering as the combined map; SSIM
    is computed on the normalized bias maps.
    """
    p_comb = extract_comb(dump_gt, tokens, spec, sample)
    p_img = extract_img_bias(dump_gt, spec, sample)
    p_txt = extract_comb(dump_noise, tokens, spec, sample)
    p_txt = ActivationMap(p_txt.grid, "txt", token_fallback=p_txt.token_fallback)
    s = ssim(minmax(p_txt.grid), minmax(p_img.grid), window=window)
    p_mult = bias_interaction(p_img.normalized(), p_txt.normalized())
    p_bbm = merge(p_comb.normalized(), p_mult, s, variant)
    return MergeResult(s, p_comb, p_img, p_txt, p_mult, p_bbm, variant)
