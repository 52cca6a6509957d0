"""From attention dumps to 2D activation maps.

Selects timesteps, layers and token columns, upsamples each layer to the
common latent grid and averages, yielding the combined activation map.
The start-token slice is extracted separately as the image-bias map.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .attnstore import AttentionDump, TokenMeta
from .tokenfilter import TokenMode, TokenSelection, select_tokens


class ExtractionError(ValueError):
    pass


@dataclass
class ExtractionSpec:
    """Timestep/layer/token selection and upsampling policy.

    timestep_policy: "all", "last" (last_n most-denoised steps) or "set".
    layer_policy: "all", "set" (explicit layer_ids) or "level"
    (resolution_level tag match).
    token_combine: "mean" averages the selected token columns; "product"
    multiplies their individually normalized maps, so a region must be
    supported by every selected token (e.g. concept AND position word).
    contrast_exponent: raises the normalized map to a power > 1 to
    concentrate mass at the peaks before downstream thresholding.
    """

    timestep_policy: str = "all"
    last_n: int | None = None
    timestep_set: tuple[int, ...] = ()
    layer_policy: str = "all"
    layer_set: tuple[int, ...] = ()
    resolution_level: str = ""
    token_mode: TokenMode = TokenMode.LEXICAL
    token_combine: str = "mean"
    contrast_exponent: float = 1.0
    upsample_target: int = 64
    upsample_mode: str = "bilinear"
    normalize: bool = True


@dataclass
class ActivationMap:
    grid: np.ndarray
    provenance: str = "comb"  # comb | img | txt | mult | bbm
    token_fallback: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def side(self) -> int:
        return int(self.grid.shape[0])

    def normalized(self) -> "ActivationMap":
        return replace(self, grid=minmax(self.grid))


def minmax(grid: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant grid maps to all zeros."""
    lo = float(grid.min())
    hi = float(grid.max())
    if hi - lo <= 0.0:
        return np.zeros_like(grid, dtype=np.float64)
    return (grid.astype(np.float64) - lo) / (hi - lo)


def upsample(grid: np.ndarray, target: int, mode: str = "bilinear") -> np.ndarray:
    """Upsample a native map to target x target.

    nearest: each target pixel copies the native pixel containing its
    center.  bilinear: half-pixel-center convention with clamped edges.
    """
    h, w = grid.shape
    if target < h or target < w:
        raise ExtractionError(f"target {target} below native {h}x{w} (no downsampling)")
    if mode == "nearest":
        rows = np.floor((np.arange(target) + 0.5) * h / target).astype(int)
        cols = np.floor((np.arange(target) + 0.5) * w / target).astype(int)
        return grid[np.ix_(rows, cols)].astype(np.float64)
    if mode != "bilinear":
        raise ExtractionError(f"unknown upsample mode {mode!r}")

    def axis_coords(native: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        src = (np.arange(target) + 0.5) * native / target - 0.5
        src = np.clip(src, 0.0, native - 1.0)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, native - 1)
        frac = src - lo
        return lo, hi, frac

    r0, r1, fr = axis_coords(h)
    c0, c1, fc = axis_coords(w)
    g = grid.astype(np.float64)
    top = g[np.ix_(r0, c0)] * (1 - fc) + g[np.ix_(r0, c1)] * fc
    bot = g[np.ix_(r1, c0)] * (1 - fc) + g[np.ix_(r1, c1)] * fc
    return top * (1 - fr[:, None]) + bot * fr[:, None]


def _select_timesteps(dump: AttentionDump, spec: ExtractionSpec) -> list[int]:
    t = len(dump.timesteps)
    if spec.timestep_policy == "all":
        return list(range(t))
    if spec.timestep_policy == "last":
        n = spec.last_n
        if n is None or n < 1 or n > t:
            raise ExtractionError(f"last_n={n} invalid for T={t}")
        return list(range(t - n, t))
    if spec.timestep_policy == "set":
        if not spec.timestep_set:
            raise ExtractionError("empty explicit timestep set")
        idx = [dump.timesteps.index(ts) for ts in spec.timestep_set]
        return sorted(idx)
    raise ExtractionError(f"unknown timestep policy {spec.timestep_policy!r}")


def _select_layers(dump: AttentionDump, spec: ExtractionSpec) -> list[int]:
    if spec.layer_policy == "all":
        return list(range(len(dump.layers)))
    if spec.layer_policy == "set":
        if not spec.layer_set:
            raise ExtractionError("empty explicit layer set")
        ids = {info.layer_id: i for i, info in enumerate(dump.layers)}
        try:
            return [ids[l] for l in spec.layer_set]
        except KeyError as e:
            raise ExtractionError(f"unknown layer_id {e.args[0]}") from None
    if spec.layer_policy == "level":
        picked = [
            i
            for i, info in enumerate(dump.layers)
            if info.resolution_level == spec.resolution_level
        ]
        if not picked:
            raise ExtractionError(
                f"no layers at resolution level {spec.resolution_level!r}"
            )
        return picked
    raise ExtractionError(f"unknown layer policy {spec.layer_policy!r}")


def _mean_map(
    dump: AttentionDump,
    sample: int,
    t_idx: list[int],
    l_idx: list[int],
    token_idx: list[int],
    spec: ExtractionSpec,
) -> np.ndarray:
    """Mean over all selected (timestep, layer, token) slices, upsampled.

    Upsampling is linear, so per-layer averaging before upsampling equals
    slice-by-slice upsampling; each layer contributes the same number of
    slices, so the cross-layer mean stays a plain mean.
    """
    if not t_idx or not l_idx or not token_idx:
        raise ExtractionError("empty selection on some axis")
    acc = np.zeros((spec.upsample_target, spec.upsample_target), dtype=np.float64)
    for li in l_idx:
        native = dump.values[li][sample][np.ix_(t_idx, token_idx)]
        native_mean = native.astype(np.float64).mean(axis=(0, 1))
        acc += upsample(native_mean, spec.upsample_target, spec.upsample_mode)
    return acc / len(l_idx)


def extract_comb(
    dump: AttentionDump,
    tokens: list[TokenMeta],
    spec: ExtractionSpec,
    sample: int = 0,
) -> ActivationMap:
    """Combined activation map: attention pooled over selected slices."""
    if spec.contrast_exponent < 1.0:
        raise ExtractionError(f"contrast_exponent {spec.contrast_exponent} < 1")
    selection: TokenSelection = select_tokens(tokens, spec.token_mode)
    t_idx = _select_timesteps(dump, spec)
    l_idx = _select_layers(dump, spec)
    if spec.token_combine == "mean":
        grid = _mean_map(dump, sample, t_idx, l_idx, selection.indices, spec)
    elif spec.token_combine == "product":
        # each token map is normalized on its own so no single token's
        # scale dominates; epsilon keeps fully-flat maps from zeroing out
        grid = np.ones((spec.upsample_target, spec.upsample_target))
        for token in selection.indices:
            grid *= minmax(_mean_map(dump, sample, t_idx, l_idx, [token], spec)) + 1e-6
    else:
        raise ExtractionError(f"unknown token combine {spec.token_combine!r}")
    if spec.normalize:
        grid = minmax(grid)
    if spec.contrast_exponent != 1.0:
        grid = grid**spec.contrast_exponent
        if spec.normalize:
            grid = minmax(grid)
    return ActivationMap(grid, "comb", token_fallback=selection.fallback)


def extract_img_bias(
    dump: AttentionDump,
    spec: ExtractionSpec,
    sample: int = 0,
) -> ActivationMap:
    """Image-bias map: the start-token column averaged over steps/layers."""
    grid = _mean_map(
        dump,
        sample,
        _select_timesteps(dump, spec),
        _select_layers(dump, spec),
        [0],
        spec,
    )
    if spec.normalize:
        grid = minmax(grid)
    return ActivationMap(grid, "img")
