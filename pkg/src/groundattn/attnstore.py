"""Binary storage for per-sample/timestep/layer/token attention tensors.

The on-disk format ("GAMD") is the contract between the toy denoiser, the
external exporter bridge and the analysis pipeline.  Layout (little-endian):

    magic       4 bytes  b"GAMD"
    version     uint32   currently 1
    B           uint32   batch size
    T           uint32   number of timesteps
    timesteps   T * int32, strictly decreasing (denoising order)
    L           uint32   number of attention layers
    per layer:  layer_id int32, H uint32, W uint32,
                res-level tag: uint16 length + utf-8 bytes
    N_max       uint32   token axis length
    dtype code  uint8    0 = float32
    values      for b in range(B): for t in range(T): for l in range(L):
                    N_max * H_l * W_l float32, row-major
                i.e. nested index order [sample][timestep][layer][token][row][col]

Token metadata and ground-truth boxes travel in a JSON sidecar at
``<path>.json`` (one document per dump).  Attention is stored at each
layer's native resolution; upsampling is an extraction-time concern.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

MAGIC = b"GAMD"
VERSION = 1
DTYPE_F32 = 0
SOFTMAX_TOL = 1e-3


class DumpValidationError(ValueError):
    """A dump violates a structural invariant (names the failing axis)."""


class DumpFormatError(ValueError):
    """The file is not a readable GAMD dump (bad magic/version/size)."""


@dataclass(frozen=True)
class LayerInfo:
    layer_id: int
    height: int
    width: int
    resolution_level: str = ""


@dataclass
class TokenMeta:
    text: str
    is_start: bool = False
    is_end: bool = False
    is_pad: bool = False
    is_lexical: bool = False
    is_disease: bool = False


@dataclass
class GroundTruthRegion:
    """Boxes as (x, y, w, h) in map-grid coordinates at the upsample target."""

    boxes: list[tuple[int, int, int, int]]
    category: str = ""

    def mask(self, side: int) -> np.ndarray:
        """Boolean interior mask (union of boxes) on a side x side grid."""
        m = np.zeros((side, side), dtype=bool)
        for (x, y, w, h) in self.boxes:
            if w < 1 or h < 1:
                raise DumpValidationError(f"ground-truth box with w={w}, h={h}")
            if x < 0 or y < 0 or x + w > side or y + h > side:
                raise DumpValidationError(
                    f"ground-truth box ({x},{y},{w},{h}) outside {side}x{side} grid"
                )
            m[y : y + h, x : x + w] = True
        return m


@dataclass
class AttentionDump:
    """Attention values per [sample][timestep][layer][token][row][col].

    ``values[l]`` has shape (B, T, N_max, H_l, W_l) float32; layers may use
    different native resolutions, hence the per-layer list.
    """

    timesteps: list[int]
    layers: list[LayerInfo]
    n_tokens: int
    values: list[np.ndarray] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def batch_size(self) -> int:
        return int(self.values[0].shape[0])

    def validate(self) -> None:
        ts = list(self.timesteps)
        if len(ts) == 0:
            raise DumpValidationError("timestep axis is empty")
        if any(a <= b for a, b in zip(ts, ts[1:])):
            raise DumpValidationError("timesteps not strictly decreasing")
        ids = [l.layer_id for l in self.layers]
        if len(set(ids)) != len(ids):
            raise DumpValidationError("layer_ids not unique")
        if len(self.layers) != len(self.values):
            raise DumpValidationError("layer table and value blocks disagree")
        if self.n_tokens < 1:
            raise DumpValidationError("token axis is empty")
        b = self.batch_size
        for info, v in zip(self.layers, self.values):
            if info.height < 1 or info.width < 1:
                raise DumpValidationError(f"layer {info.layer_id}: empty grid")
            expect = (b, len(ts), self.n_tokens, info.height, info.width)
            if v.shape != expect:
                raise DumpValidationError(
                    f"layer {info.layer_id}: shape {v.shape} != {expect}"
                )
            if v.dtype != np.float32:
                raise DumpValidationError(f"layer {info.layer_id}: dtype {v.dtype}")
            if not np.all(np.isfinite(v)):
                raise DumpValidationError(f"layer {info.layer_id}: non-finite values")
            if np.any(v < 0):
                raise DumpValidationError(f"layer {info.layer_id}: negative values")
            sums = v.sum(axis=2)
            if np.any(np.abs(sums - 1.0) > SOFTMAX_TOL):
                worst = float(np.max(np.abs(sums - 1.0)))
                raise DumpValidationError(
                    f"layer {info.layer_id}: token softmax sum off by {worst:.2e}"
                )


def _validate_tokens(tokens: list[TokenMeta]) -> None:
    starts = [i for i, t in enumerate(tokens) if t.is_start]
    ends = [i for i, t in enumerate(tokens) if t.is_end]
    if starts != [0]:
        raise DumpValidationError("exactly one start token at index 0 required")
    if len(ends) != 1:
        raise DumpValidationError("exactly one end token required")
    end = ends[0]
    for i, t in enumerate(tokens):
        if t.is_pad and i <= end:
            raise DumpValidationError("pad token before end token")
        if not t.is_pad and i > end:
            raise DumpValidationError("non-pad token after end token")
        if (t.is_start or t.is_end or t.is_pad) and (t.is_lexical or t.is_disease):
            raise DumpValidationError(
                f"token {i}: special token flagged lexical/disease"
            )


def _sidecar_path(path: Path) -> Path:
    return Path(str(path) + ".json")


def write_dump(
    dump: AttentionDump,
    tokens: list[list[TokenMeta]],
    gt: list[GroundTruthRegion | None] | None,
    path: str | Path,
) -> None:
    """Write a validated dump plus its JSON sidecar.

    ``tokens`` is one list of length N_max per sample; ``gt`` is one
    optional region per sample (or None for no ground truth at all).
    """
    path = Path(path)
    dump.validate()
    b = dump.batch_size
    if len(tokens) != b:
        raise DumpValidationError("token metadata count != batch size")
    for seq in tokens:
        if len(seq) != dump.n_tokens:
            raise DumpValidationError("token list length != N_max")
        _validate_tokens(seq)
    if gt is not None and len(gt) != b:
        raise DumpValidationError("ground-truth count != batch size")

    header = bytearray()
    header += MAGIC
    header += struct.pack("<I", VERSION)
    header += struct.pack("<I", b)
    header += struct.pack("<I", len(dump.timesteps))
    header += struct.pack(f"<{len(dump.timesteps)}i", *dump.timesteps)
    header += struct.pack("<I", len(dump.layers))
    for info in dump.layers:
        header += struct.pack("<iII", info.layer_id, info.height, info.width)
        tag = info.resolution_level.encode("utf-8")
        header += struct.pack("<H", len(tag)) + tag
    header += struct.pack("<I", dump.n_tokens)
    header += struct.pack("<B", DTYPE_F32)

    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(bytes(header))
        for bi in range(b):
            for ti in range(len(dump.timesteps)):
                for v in dump.values:
                    block = np.ascontiguousarray(v[bi, ti], dtype="<f4")
                    f.write(block.tobytes())
    tmp.replace(path)

    doc = {
        "samples": [
            {
                "tokens": [asdict(t) for t in tokens[bi]],
                "ground_truth": (
                    None
                    if gt is None or gt[bi] is None
                    else {
                        "boxes": [list(box) for box in gt[bi].boxes],
                        "category": gt[bi].category,
                    }
                ),
            }
            for bi in range(b)
        ],
        "meta": dump.meta,
    }
    side_tmp = _sidecar_path(path).with_name(_sidecar_path(path).name + ".tmp")
    side_tmp.write_text(json.dumps(doc, indent=1))
    side_tmp.replace(_sidecar_path(path))


def read_dump(
    path: str | Path,
) -> tuple[AttentionDump, list[list[TokenMeta]], list[GroundTruthRegion | None]]:
    path = Path(path)
    raw = path.read_bytes()
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(raw):
            raise DumpFormatError(
                f"truncated dump: need {off + n} bytes, file has {len(raw)}"
            )
        out = raw[off : off + n]
        off += n
        return out

    if take(4) != MAGIC:
        raise DumpFormatError("bad magic bytes (not a GAMD file)")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise DumpFormatError(f"unsupported GAMD version {version}")
    (b,) = struct.unpack("<I", take(4))
    (t_len,) = struct.unpack("<I", take(4))
    timesteps = list(struct.unpack(f"<{t_len}i", take(4 * t_len)))
    (l_len,) = struct.unpack("<I", take(4))
    layers = []
    for _ in range(l_len):
        layer_id, h, w = struct.unpack("<iII", take(12))
        (tag_len,) = struct.unpack("<H", take(2))
        tag = take(tag_len).decode("utf-8")
        layers.append(LayerInfo(layer_id, h, w, tag))
    (n_max,) = struct.unpack("<I", take(4))
    (dtype_code,) = struct.unpack("<B", take(1))
    if dtype_code != DTYPE_F32:
        raise DumpFormatError(f"unknown dtype code {dtype_code}")

    values = [
        np.empty((b, t_len, n_max, info.height, info.width), dtype=np.float32)
        for info in layers
    ]
    for bi in range(b):
        for ti in range(t_len):
            for li, info in enumerate(layers):
                n = n_max * info.height * info.width
                block = np.frombuffer(take(4 * n), dtype="<f4")
                values[li][bi, ti] = block.reshape(n_max, info.height, info.width)
    if off != len(raw):
        raise DumpFormatError(f"trailing bytes: {len(raw) - off} past payload")

    side = _sidecar_path(path)
    tokens: list[list[TokenMeta]] = []
    gt: list[GroundTruthRegion | None] = [None] * b
    meta: dict = {}
    if side.exists():
        doc = json.loads(side.read_text())
        meta = doc.get("meta", {})
        for bi, sample in enumerate(doc["samples"]):
            tokens.append([TokenMeta(**tm) for tm in sample["tokens"]])
            g = sample.get("ground_truth")
            if g is not None:
                gt[bi] = GroundTruthRegion(
                    boxes=[tuple(box) for box in g["boxes"]],
                    category=g.get("category", ""),
                )
        if len(tokens) != b:
            raise DumpValidationError("sidecar sample count != batch size")
        for seq in tokens:
            _validate_tokens(seq)

    dump = AttentionDump(
        timesteps=timesteps, layers=layers, n_tokens=n_max, values=values, meta=meta
    )
    dump.validate()
    return dump, tokens, gt
