"""Desk-scale text-conditioned diffusion model with cross-attention capture."""

from .schedule import NoiseSchedule
from .vocab import EncoderTable, build_encoder, encode_caption
from .render import render
from .model import DenoiserConfig, ToyUNet
from .train import train
from .sample import sample
from .scenes import gen_train_scene, gen_eval_scene
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "NoiseSchedule",
    "EncoderTable",
    "build_encoder",
    "encode_caption",
    "render",
    "DenoiserConfig",
    "ToyUNet",
    "train",
    "sample",
    "gen_train_scene",
    "gen_eval_scene",
    "save_checkpoint",
    "load_checkpoint",
]
