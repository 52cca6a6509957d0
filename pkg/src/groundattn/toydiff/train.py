"""Epsilon-prediction training with conditioning dropout and EMA."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import torch

from ..synthoracle import SceneSpec
from .model import DenoiserConfig, ToyUNet
from .render import render
from .schedule import NoiseSchedule
from .vocab import EncoderTable, encode_caption


class TrainingDiverged(RuntimeError):
    def __init__(self, trace):
        super().__init__("non-finite training loss")
        self.trace = trace


@dataclass
class TrainResult:
    model: ToyUNet
    ema: dict  # EMA weights (state-dict tensors)
    loss_trace: list[float] = field(default_factory=list)
    initial_loss: float = 0.0
    final_loss: float = 0.0


def ema_update(shadow: dict, model: ToyUNet, decay: float) -> None:
    with torch.no_grad():
        for name, p in model.state_dict().items():
            if p.dtype.is_floating_point:
                shadow[name].mul_(decay).add_(p, alpha=1.0 - decay)
            else:
                shadow[name].copy_(p)


def train(
    corpus: list[SceneSpec],
    cfg: DenoiserConfig,
    enc: EncoderTable,
    deterministic: bool = True,
) -> TrainResult:
    """Train the denoiser on rendered scenes; encoder stays frozen.

    With deterministic=True, runs single-threaded with a fixed torch seed
    so two trainings with the same config are bit-reproducible.
    """
    if len(corpus) < 1:
        raise ValueError("empty corpus")
    if deterministic:
        torch.set_num_threads(1)
    torch.manual_seed(cfg.seed)

    schedule = NoiseSchedule(t_train=cfg.t_train)
    acp = torch.tensor(schedule.alpha_cumprod, dtype=torch.float32)

    images = torch.tensor(
        np.stack([render(s, cfg.img_side) for s in corpus]), dtype=torch.float32
    ).unsqueeze(1)
    ctxs = torch.tensor(
        np.stack([encode_caption(enc, s.tokens) for s in corpus]),
        dtype=torch.float32,
    )

    model = ToyUNet(cfg)
    shadow = {k: v.clone().float() for k, v in model.state_dict().items()}
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    n = len(corpus)
    gen = torch.Generator().manual_seed(cfg.seed + 1)
    trace: list[float] = []
    initial = None
    for _epoch in range(cfg.epochs):
        perm = torch.randperm(n, generator=gen)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            x0 = images[idx]
            ctx = ctxs[idx].clone()
            t = torch.randint(0, cfg.t_train, (len(idx),), generator=gen)
            eps = torch.randn(x0.shape, generator=gen)
            a = acp[t][:, None, None, None]
            xt = a.sqrt() * x0 + (1 - a).sqrt() * eps
            drop = torch.rand(len(idx), generator=gen) < cfg.cond_dropout
            # dropped rows route through the learned null sequence (with grad)
            ctx = torch.where(
                drop[:, None, None], model.null_ctx.expand(len(idx), -1, -1), ctx
            )
            pred = model(xt, t, ctx)
            loss = torch.mean((pred - eps) ** 2)
            if not torch.isfinite(loss):
                raise TrainingDiverged(trace)
            opt.zero_grad()
            loss.backward()
            opt.step()
            ema_update(shadow, model, cfg.ema_decay)
            trace.append(loss.item())
            if initial is None:
                initial = trace[0]

    tail = trace[-20:]
    return TrainResult(
        model=model,
        ema=shadow,
        loss_trace=trace,
        initial_loss=initial,
        final_loss=float(np.mean(tail)),
    )
