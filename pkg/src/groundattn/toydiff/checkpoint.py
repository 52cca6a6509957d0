"""Self-describing checkpoint files for the toy denoiser."""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .model import DenoiserConfig, ToyUNet
from .vocab import EncoderTable

CKPT_FORMAT = 1


def save_checkpoint(path, model: ToyUNet, ema: dict, enc: EncoderTable,
                    extra: dict | None = None) -> None:
    torch.save(
        {
            "format": CKPT_FORMAT,
            "config": asdict(model.cfg),
            "state_dict": model.state_dict(),
            "ema_state_dict": ema,
            "encoder": {
                "words": enc.words,
                "embeddings": enc.embeddings,
                "variant": enc.variant,
                "d_e": enc.d_e,
            },
            "extra": extra or {},
        },
        path,
    )


def load_checkpoint(path, use_ema: bool = True) -> tuple[ToyUNet, EncoderTable, dict]:
    blob = torch.load(path, weights_only=False)
    if blob.get("format") != CKPT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {blob.get('format')!r}")
    cfg = DenoiserConfig(**blob["config"])
    model = ToyUNet(cfg)
    model.load_state_dict(blob["ema_state_dict"] if use_ema else blob["state_dict"])
    e = blob["encoder"]
    enc = EncoderTable(
        list(e["words"]), np.asarray(e["embeddings"], dtype=np.float32),
        e["variant"], int(e["d_e"]),
    )
    return model, enc, blob.get("extra", {})
