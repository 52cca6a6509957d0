"""Ancestral sampling in four regimes, with cross-attention capture.

Modes: "text" (conditional only), "cfg" (classifier-free guidance),
"gt1_cfg" (CFG, initial latent = ground truth noised to the first
selected step) and "gt_cfg" (CFG, latent replaced by freshly noised
ground truth before every step).  Captured attention comes from the
conditional pass only.
"""

from __future__ import annotations

import numpy as np
import torch

from ..attnstore import AttentionDump, LayerInfo
from .model import ToyUNet
from .schedule import NoiseSchedule
from .vocab import EncoderTable, encode_caption

MODES = ("text", "cfg", "gt1_cfg", "gt_cfg")


def sample(
    model: ToyUNet,
    enc: EncoderTable,
    caption,
    mode: str = "gt_cfg",
    gt_image: np.ndarray | None = None,
    steps: int = 50,
    guidance_scale: float = 3.0,
    seed: int = 0,
    capture: bool = False,
) -> tuple[np.ndarray, AttentionDump | None]:
    """Generate one image; optionally capture the attention dump.

    ``caption`` is a list of TokenMeta.  GT modes require ``gt_image``
    (img_side x img_side floats).
    """
    if mode not in MODES:
        raise ValueError(f"unknown sampling mode {mode!r}")
    if guidance_scale < 0:
        raise ValueError("guidance scale must be >= 0")
    if mode in ("gt1_cfg", "gt_cfg") and gt_image is None:
        raise ValueError(f"mode {mode!r} requires a ground-truth image")
    cfg = model.cfg
    schedule = NoiseSchedule(t_train=cfg.t_train)
    t_list = schedule.inference_steps(steps)
    acp = schedule.alpha_cumprod

    ctx = torch.tensor(encode_caption(enc, caption), dtype=torch.float32)[None]
    gen = torch.Generator().manual_seed(seed)
    side = cfg.img_side
    gt = (
        torch.tensor(gt_image, dtype=torch.float32)[None, None]
        if gt_image is not None
        else None
    )

    def noised_gt(t: int) -> torch.Tensor:
        eps = torch.randn((1, 1, side, side), generator=gen)
        a = float(acp[t])
        return np.sqrt(a) * gt + np.sqrt(1.0 - a) * eps

    if mode in ("gt1_cfg", "gt_cfg"):
        x = noised_gt(t_list[0]) if mode == "gt1_cfg" else None
    else:
        x = torch.randn((1, 1, side, side), generator=gen)

    captured: list[list[torch.Tensor]] = []  # per step, per layer
    model.eval()
    with torch.no_grad():
        for i, t in enumerate(t_list):
            if mode == "gt_cfg":
                x = noised_gt(t)
            tt = torch.tensor([t])
            model.set_capture(capture)
            eps_cond = model(x, tt, ctx)
            if capture:
                captured.append([a.captured for a in model.attention_layers])
            model.set_capture(False)
            if mode == "text":
                eps = eps_cond
            else:
                eps_uncond = model(x, tt, None)
                eps = eps_uncond + guidance_scale * (eps_cond - eps_uncond)

            a_t = float(acp[t])
            x0 = (x - np.sqrt(1 - a_t) * eps) / np.sqrt(a_t)
            x0 = x0.clamp(-1.5, 1.5)
            if i + 1 < len(t_list):
                a_next = float(acp[t_list[i + 1]])
                # DDPM-style ancestral step on the subsampled schedule
                var = (1 - a_next) / (1 - a_t) * (1 - a_t / a_next)
                var = max(var, 0.0)
                mean_coeff = np.sqrt(max(1 - a_next - var, 0.0))
                z = torch.randn(x.shape, generator=gen)
                x = np.sqrt(a_next) * x0 + mean_coeff * eps + np.sqrt(var) * z
            else:
                x = x0

    dump = None
    if capture:
        sides = [side, side // 2, side // 4]
        layers = [
            LayerInfo(li, s, s, resolution_level=str(s)) for li, s in enumerate(sides)
        ]
        values = []
        for li, s in enumerate(sides):
            v = np.empty((1, len(t_list), cfg.n_max, s, s), dtype=np.float32)
            for ti in range(len(t_list)):
                attn = captured[ti][li][0].numpy()  # (HW, N)
                v[0, ti] = attn.T.reshape(cfg.n_max, s, s)
            values.append(v)
        dump = AttentionDump(
            timesteps=list(t_list),
            layers=layers,
            n_tokens=cfg.n_max,
            values=values,
            meta={
                "source": "toydiff",
                "mode": mode,
                "steps": steps,
                "guidance_scale": guidance_scale,
                "seed": seed,
                "encoder_variant": enc.variant,
            },
        )
    return x[0, 0].numpy(), dump
