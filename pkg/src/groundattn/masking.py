"""Binary masks from activation maps via a 2-component Gaussian mixture.

The pixel-value histogram is fit with EM; foreground is the higher-mean
component, cut at the posterior-0.5 boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .extraction import ActivationMap

VAR_FLOOR = 1e-6


class DegenerateMapError(ValueError):
    """Map has fewer than two distinct values; no mask can be derived."""


@dataclass
class GmmFit:
    weights: np.ndarray  # (2,)
    means: np.ndarray  # (2,)
    variances: np.ndarray  # (2,)
    log_likelihood: list[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    tie: bool = False  # equal component means

    @property
    def foreground(self) -> int:
        """Index of the higher-mean component (ties toward component 0)."""
        return 0 if self.means[0] >= self.means[1] else 1


def _log_gauss(x: np.ndarray, mean: float, var: float) -> np.ndarray:
    return -0.5 * (np.log(2 * np.pi * var) + (x - mean) ** 2 / var)


def fit_gmm(
    values: np.ndarray,
    max_iters: int = 200,
    tol: float = 1e-7,
    seed: int | None = None,
) -> GmmFit:
    """EM for a 1-D two-component GMM over map pixel values.

    Initialization is deterministic: means at the 25th/75th percentiles,
    pooled variance, equal weights.  ``seed`` is accepted for interface
    stability but unused (no random restarts).
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in map")
    if np.unique(x).size < 2:
        raise DegenerateMapError("constant map: cannot fit a 2-component GMM")

    means = np.percentile(x, [25.0, 75.0]).astype(np.float64)
    if means[0] == means[1]:
        # heavily skewed histogram; spread initial means to the data range
        means = np.array([x.min(), x.max()], dtype=np.float64)
    pooled = max(float(np.var(x)), VAR_FLOOR)
    variances = np.array([pooled, pooled])
    weights = np.array([0.5, 0.5])

    fit = GmmFit(weights, means, variances)
    prev_ll = -np.inf
    for it in range(max_iters):
        log_p = np.stack(
            [
                np.log(weights[k]) + _log_gauss(x, means[k], variances[k])
                for k in range(2)
            ]
        )
        log_norm = np.logaddexp(log_p[0], log_p[1])
        ll = float(log_norm.mean())
        fit.log_likelihood.append(ll)
        resp = np.exp(log_p - log_norm)

        nk = resp.sum(axis=1)
        nk = np.maximum(nk, 1e-12)
        weights = nk / x.size
        means = (resp @ x) / nk
        variances = np.maximum(
            (resp @ (x**2)) / nk - means**2, VAR_FLOOR
        )
        fit.weights, fit.means, fit.variances = weights, means, variances
        fit.n_iter = it + 1
        if ll - prev_ll < tol and it > 0:
            fit.converged = True
            break
        prev_ll = ll
    fit.tie = bool(fit.means[0] == fit.means[1])
    return fit


def posterior_threshold(fit: GmmFit) -> float:
    """Value at which the foreground posterior crosses 0.5.

    Solves the quadratic equality of the two weighted log-densities and
    picks the root between the component means (fallback: the midpoint).
    """
    fg = fit.foreground
    bg = 1 - fg
    w0, m0, v0 = fit.weights[bg], fit.means[bg], fit.variances[bg]
    w1, m1, v1 = fit.weights[fg], fit.means[fg], fit.variances[fg]
    lo, hi = sorted((m0, m1))
    mid = 0.5 * (m0 + m1)
    # log(w1 N1(x)) = log(w0 N0(x))
    a = 0.5 / v0 - 0.5 / v1
    b = m1 / v1 - m0 / v0
    c = (
        math.log(w1 / w0)
        + 0.5 * math.log(v0 / v1)
        + m0**2 / (2 * v0)
        - m1**2 / (2 * v1)
    )
    if abs(a) < 1e-300:
        if abs(b) < 1e-300:
            return mid
        return -c / b
    disc = b * b - 4 * a * c
    if disc < 0:
        return mid
    roots = [(-b + s * math.sqrt(disc)) / (2 * a) for s in (1.0, -1.0)]
    inside = [r for r in roots if lo <= r <= hi]
    if inside:
        return inside[0]
    return min(roots, key=lambda r: abs(r - mid))


@dataclass
class BinaryMask:
    grid: np.ndarray  # uint8 {0,1}
    threshold: float
    degenerate: bool = False

    @property
    def boolean(self) -> np.ndarray:
        return self.grid.astype(bool)


def binarize(amap: ActivationMap, fit: GmmFit) -> BinaryMask:
    """Foreground = pixels with >= 0.5 posterior under the higher-mean component."""
    x = amap.grid.astype(np.float64)
    fg = fit.foreground
    log_p = np.stack(
        [
            np.log(fit.weights[k]) + _log_gauss(x, fit.means[k], fit.variances[k])
            for k in range(2)
        ]
    )
    post_fg = np.exp(log_p[fg] - np.logaddexp(log_p[0], log_p[1]))
    mask = (post_fg >= 0.5).astype(np.uint8)
    thr = float(np.clip(posterior_threshold(fit), x.min(), x.max()))
    return BinaryMask(mask, thr)


def mask_from_map(amap: ActivationMap, max_iters: int = 200, tol: float = 1e-7) -> BinaryMask:
    """Fit + binarize; a constant map yields an all-zero mask (no detection)."""
    try:
        fit = fit_gmm(amap.grid, max_iters=max_iters, tol=tol)
    except DegenerateMapError:
        return BinaryMask(
            np.zeros_like(amap.grid, dtype=np.uint8),
            float(amap.grid.flat[0]),
            degenerate=True,
        )
    return binarize(amap, fit)
