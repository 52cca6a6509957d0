"""Small conditional U-Net denoiser with capturable cross-attention.

Three resolution levels (16/8/4) each carry one single-head cross-attention
block over the frozen token embeddings; the per-pixel softmax over tokens
is what the pipeline analyses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class DenoiserConfig:
    img_side: int = 16
    channels: tuple[int, int, int] = (32, 64, 64)
    d_e: int = 32
    d_k: int = 32
    n_max: int = 16
    time_dim: int = 64
    cond_dropout: float = 0.3
    ema_decay: float = 0.999
    lr: float = 2e-3
    # small batches mean more optimizer steps per epoch, which localizes
    # cross-attention far better than larger batches at equal epochs
    batch_size: int = 16
    epochs: int = 8
    seed: int = 0
    t_train: int = 100

    def __post_init__(self):
        if not 0.0 <= self.cond_dropout < 1.0:
            raise ValueError("cond_dropout must lie in [0, 1)")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in (0, 1)")


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float32, device=t.device) / half
    )
    args = t.float()[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class ResBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, time_dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.temb = nn.Linear(time_dim, c_out)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()
        self.norm1 = nn.GroupNorm(8, c_out)
        self.norm2 = nn.GroupNorm(8, c_out)

    def forward(self, x, temb):
        h = F.silu(self.norm1(self.conv1(x)))
        h = h + self.temb(temb)[:, :, None, None]
        h = F.silu(self.norm2(self.conv2(h)))
        return h + self.skip(x)


class CrossAttention(nn.Module):
    """Single-head image-to-text attention; stores P when capture is on."""

    def __init__(self, channels: int, d_e: int, d_k: int):
        super().__init__()
        self.scale = d_k**-0.5
        self.to_q = nn.Conv2d(channels, d_k, 1)
        self.to_k = nn.Linear(d_e, d_k, bias=False)
        self.to_v = nn.Linear(d_e, d_k, bias=False)
        self.proj = nn.Conv2d(d_k, channels, 1)
        self.norm = nn.GroupNorm(8, channels)
        self.captured: torch.Tensor | None = None
        self.capture = False

    def forward(self, x: torch.Tensor, ctx: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        q = self.to_q(self.norm(x)).reshape(b, -1, h * w).transpose(1, 2)  # (B, HW, dk)
        k = self.to_k(ctx)  # (B, N, dk)
        v = self.to_v(ctx)
        attn = torch.softmax(q @ k.transpose(1, 2) * self.scale, dim=-1)  # (B, HW, N)
        if self.capture:
            self.captured = attn.detach().clone()
        out = (attn @ v).transpose(1, 2).reshape(b, -1, h, w)
        return x + self.proj(out)


class ToyUNet(nn.Module):
    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        c1, c2, c3 = cfg.channels
        td = cfg.time_dim * 2
        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.time_dim, td), nn.SiLU(), nn.Linear(td, td)
        )
        # coordinate channels give queries an absolute position signal, which
        # the convolutional features otherwise lack; without it the attention
        # cannot become position-selective
        ys, xs = torch.meshgrid(
            torch.linspace(-1.0, 1.0, cfg.img_side),
            torch.linspace(-1.0, 1.0, cfg.img_side),
            indexing="ij",
        )
        self.register_buffer("coords", torch.stack([ys, xs])[None])
        self.stem = nn.Conv2d(3, c1, 3, padding=1)
        self.down1 = ResBlock(c1, c1, td)
        self.attn1 = CrossAttention(c1, cfg.d_e, cfg.d_k)
        self.pool1 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.down2 = ResBlock(c2, c2, td)
        self.attn2 = CrossAttention(c2, cfg.d_e, cfg.d_k)
        self.pool2 = nn.Conv2d(c2, c3, 3, stride=2, padding=1)
        self.mid = ResBlock(c3, c3, td)
        self.attn3 = CrossAttention(c3, cfg.d_e, cfg.d_k)
        self.up2 = nn.ConvTranspose2d(c3, c2, 2, stride=2)
        self.dec2 = ResBlock(c2 * 2, c2, td)
        self.up1 = nn.ConvTranspose2d(c2, c1, 2, stride=2)
        self.dec1 = ResBlock(c1 * 2, c1, td)
        self.head = nn.Conv2d(c1, 1, 3, padding=1)
        # learned stand-in conditioning for classifier-free guidance
        self.null_ctx = nn.Parameter(torch.zeros(1, cfg.n_max, cfg.d_e))

    @property
    def attention_layers(self) -> list[CrossAttention]:
        # ordered outermost (16x16) to innermost (4x4)
        return [self.attn1, self.attn2, self.attn3]

    def set_capture(self, on: bool) -> None:
        for a in self.attention_layers:
            a.capture = on
            a.captured = None

    def forward(self, x: torch.Tensor, t: torch.Tensor,
                ctx: torch.Tensor | None) -> torch.Tensor:
        if ctx is None:
            ctx = self.null_ctx.expand(x.shape[0], -1, -1)
        temb = self.time_mlp(timestep_embedding(t, self.cfg.time_dim))
        x = torch.cat([x, self.coords.expand(x.shape[0], -1, -1, -1)], dim=1)
        h1 = self.attn1(self.down1(self.stem(x), temb), ctx)
        h2 = self.attn2(self.down2(self.pool1(h1), temb), ctx)
        h3 = self.attn3(self.mid(self.pool2(h2), temb), ctx)
        u2 = self.dec2(torch.cat([self.up2(h3), h2], dim=1), temb)
        u1 = self.dec1(torch.cat([self.up1(u2), h1], dim=1), temb)
        return self.head(u1)
