"""Scene generators for toy-model training and held-out evaluation.

Evaluation scenes put two same-shape objects at different anchor
positions and mark the first object's position word as the grounding
target (its is_disease flag), so localization must come from the
position embedding: with the degraded encoder all position words share
one embedding and the target is ambiguous by construction.
"""

from __future__ import annotations

import numpy as np

from ..attnstore import TokenMeta
from ..synthoracle import ARTICLES, POSITIONS, SHAPES, SceneObject, SceneSpec


def _caption(objects: list[SceneObject], rng, n_max: int,
             disease_object: int | None) -> tuple[list[TokenMeta], list[int]]:
    tokens = [TokenMeta("[start]", is_start=True)]
    owner = [-1]
    for i, obj in enumerate(objects):
        if i > 0:
            tokens.append(TokenMeta("and"))
            owner.append(-1)
        tokens.append(TokenMeta(ARTICLES[int(rng.integers(2))]))
        owner.append(-1)
        tokens.append(
            TokenMeta(obj.concept, is_lexical=True,
                      is_disease=(disease_object == i))
        )
        owner.append(i)
        tokens.append(
            TokenMeta(obj.position_word, is_lexical=True,
                      is_disease=(disease_object == i))
        )
        owner.append(i)
    tokens.append(TokenMeta("[end]", is_end=True))
    owner.append(-1)
    while len(tokens) < n_max:
        tokens.append(TokenMeta("[pad]", is_pad=True))
        owner.append(-1)
    return tokens, owner


def gen_train_scene(seed: int, n_max: int = 16) -> SceneSpec:
    """Half the corpus: paired same-shape scenes (position is the only
    disambiguator); the rest: 1-3 objects with mixed shapes."""
    rng = np.random.default_rng(np.random.SeedSequence([11, seed]))
    pos_names = list(POSITIONS)
    rng.shuffle(pos_names)
    if rng.random() < 0.5:
        shape = SHAPES[int(rng.integers(len(SHAPES)))]
        size = int(rng.integers(6, 9))
        objects = [
            SceneObject(shape, POSITIONS[pos_names[0]], size, shape, pos_names[0]),
            SceneObject(shape, POSITIONS[pos_names[1]], size, shape, pos_names[1]),
        ]
    else:
        n_obj = int(rng.integers(1, 4))
        objects = [
            SceneObject(
                SHAPES[int(rng.integers(len(SHAPES)))],
                POSITIONS[pos_names[i]],
                int(rng.integers(6, 9)),
                None,  # filled below
                pos_names[i],
            )
            for i in range(n_obj)
        ]
        for o in objects:
            o.concept = o.shape
    for o in objects:
        o.concept = o.shape
    tokens, owner = _caption(objects, rng, n_max, disease_object=None)
    return SceneSpec(seed, objects, tokens, 64, owner)


def gen_eval_scene(seed: int, n_max: int = 16) -> SceneSpec:
    """Two same-shape objects; ground truth is the first one only."""
    rng = np.random.default_rng(np.random.SeedSequence([13, seed]))
    pos_names = list(POSITIONS)
    rng.shuffle(pos_names)
    shape = SHAPES[int(rng.integers(len(SHAPES)))]
    size = int(rng.integers(6, 9))
    objects = [
        SceneObject(shape, POSITIONS[pos_names[0]], size, shape, pos_names[0]),
        SceneObject(shape, POSITIONS[pos_names[1]], size, shape, pos_names[1]),
    ]
    tokens, owner = _caption(objects, rng, n_max, disease_object=0)
    scene = SceneSpec(seed, objects, tokens, 64, owner)
    return scene


def eval_ground_truth(scene: SceneSpec):
    """Ground truth restricted to the grounding target (first object)."""
    from ..attnstore import GroundTruthRegion

    return GroundTruthRegion(boxes=[scene.objects[0].box()],
                             category=scene.objects[0].concept)
