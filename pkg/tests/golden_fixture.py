"""Canonical cross-implementation GAMD fixture.

Every value is exactly representable in float32 (small integers over 8), so
any correct writer in any language produces byte-identical output:

- B=1 sample, timesteps [10, 5], N_max=4, dtype f32
- layers: id 0 at 4x4 (tag "4"), id 1 at 2x2 (tag "2")
- tokens: [start] / "patchy" (lexical+disease) / "lung" (lexical) / [end]
- ground truth: one box (0, 1, 2, 2), category "golden"
- values: pixel (r, c) of timestep index ti holds the token vector
  [1/8, 2/8, 2/8, 3/8] left-rotated by (r + c + ti) mod 4
- sidecar meta: {"fixture": "golden", "rev": 1}
"""

from pathlib import Path

import numpy as np

from groundattn.attnstore import (
    AttentionDump,
    GroundTruthRegion,
    LayerInfo,
    TokenMeta,
    write_dump,
)

GOLDEN_DIR = Path(__file__).parent / "golden"
BASE = (1.0 / 8.0, 2.0 / 8.0, 2.0 / 8.0, 3.0 / 8.0)


def golden_tokens() -> list[TokenMeta]:
    return [
        TokenMeta("[start]", is_start=True),
        TokenMeta("patchy", is_lexical=True, is_disease=True),
        TokenMeta("lung", is_lexical=True),
        TokenMeta("[end]", is_end=True),
    ]


def golden_ground_truth() -> GroundTruthRegion:
    return GroundTruthRegion(boxes=[(0, 1, 2, 2)], category="golden")


def golden_dump() -> AttentionDump:
    layers = [LayerInfo(0, 4, 4, "4"), LayerInfo(1, 2, 2, "2")]
    values = []
    for side in (4, 2):
        v = np.zeros((1, 2, 4, side, side), dtype=np.float32)
        for ti in range(2):
            for r in range(side):
                for c in range(side):
                    rot = (r + c + ti) % 4
                    v[0, ti, :, r, c] = np.roll(BASE, -rot)
        values.append(v)
    return AttentionDump(
        timesteps=[10, 5],
        layers=layers,
        n_tokens=4,
        values=values,
        meta={"fixture": "golden", "rev": 1},
    )


def write_golden(path: Path) -> None:
    write_dump(golden_dump(), [golden_tokens()], [golden_ground_truth()], path)


if __name__ == "__main__":
    GOLDEN_DIR.mkdir(exist_ok=True)
    write_golden(GOLDEN_DIR / "golden.gamd")
    print("wrote", GOLDEN_DIR / "golden.gamd")
