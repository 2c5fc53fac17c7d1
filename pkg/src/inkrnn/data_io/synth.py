"""Synthetic glyph corpus for desk-scale experiments.

Each template is a handful of polylines in the unit square (y pointing
up).  Samples are drawn by resampling the polylines at a random point
spacing, applying a random scale and rotation about the centre, and adding
per-point Gaussian jitter.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfig
from ..ink import InkSequence
from .jsonl import Corpus


@dataclass(frozen=True)
class GlyphTemplate:
    class_id: int
    strokes: tuple
    name: str = ""

    def __post_init__(self):
        strokes = tuple(np.asarray(s, dtype=np.float64).reshape(-1, 2) for s in self.strokes)
        if not strokes or any(len(s) < 2 for s in strokes):
            raise InvalidConfig(f"template {self.name!r} needs >= 1 stroke of >= 2 points")
        object.__setattr__(self, "strokes", strokes)

    def to_ink(self):
        xy = np.vstack(self.strokes)
        ids = np.concatenate([np.full(len(s), k) for k, s in enumerate(self.strokes)])
        return InkSequence(xy, ids, self.class_id)


_SHAPES = [
    ("cross", [[(0.1, 0.5), (0.9, 0.5)], [(0.5, 0.9), (0.5, 0.1)]]),
    ("box", [[(0.1, 0.9), (0.9, 0.9), (0.9, 0.1), (0.1, 0.1), (0.1, 0.9)]]),
    ("zigzag", [[(0.05, 0.8), (0.3, 0.2), (0.5, 0.8), (0.7, 0.2), (0.95, 0.8)]]),
    ("T", [[(0.1, 0.9), (0.9, 0.9)], [(0.5, 0.9), (0.5, 0.1)]]),
    ("L", [[(0.2, 0.9), (0.2, 0.1), (0.8, 0.1)]]),
    ("H", [[(0.2, 0.9), (0.2, 0.1)], [(0.8, 0.9), (0.8, 0.1)], [(0.2, 0.5), (0.8, 0.5)]]),
    ("triangle", [[(0.5, 0.9), (0.1, 0.1), (0.9, 0.1), (0.5, 0.9)]]),
    ("X", [[(0.1, 0.9), (0.9, 0.1)], [(0.9, 0.9), (0.1, 0.1)]]),
    # F and E differ only by E's closing bottom bar: the confusable pair.
    ("F", [[(0.2, 0.9), (0.2, 0.1)], [(0.2, 0.9), (0.8, 0.9)], [(0.2, 0.5), (0.65, 0.5)]]),
    ("E", [[(0.2, 0.9), (0.2, 0.1)], [(0.2, 0.9), (0.8, 0.9)], [(0.2, 0.5), (0.65, 0.5)], [(0.2, 0.1), (0.8, 0.1)]]),
]

BUILTIN_TEMPLATES = tuple(GlyphTemplate(k, tuple(strokes), name) for k, (name, strokes) in enumerate(_SHAPES))
CONFUSABLE_PAIR = (8, 9)


def resample_polyline(points, spacing):
    """Points at (roughly) even arc-length spacing; both ends kept."""
    seg = np.hypot(*np.diff(points, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    n = max(int(round(total / spacing)), 1) + 1
    s = np.linspace(0.0, total, n)
    return np.column_stack([np.interp(s, cum, points[:, 0]), np.interp(s, cum, points[:, 1])])


def draw_sample(template, rng, noise=0.02, scale_range=(0.8, 1.2), max_rotation=10.0, spacing=(0.06, 0.1)):
    strokes = template.strokes
    if spacing is not None:
        step = rng.uniform(*spacing)
        strokes = [resample_polyline(s, step) for s in strokes]
    xy = np.vstack(strokes)
    ids = np.concatenate([np.full(len(s), k) for k, s in enumerate(strokes)])
    scale = rng.uniform(*scale_range)
    theta = np.deg2rad(rng.uniform(-max_rotation, max_rotation))
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    xy = (xy - 0.5) @ rot.T * scale + 0.5
    if noise > 0:
        xy = xy + rng.normal(0.0, noise, xy.shape)
    return InkSequence(xy, ids, template.class_id)


def synthesize_corpus(templates, per_class, noise, rng, split="train", **draw_kw):
    """``per_class`` jittered samples of every template, grouped by class."""
    templates = list(templates)
    if not templates:
        raise InvalidConfig("no templates given")
    if per_class < 1 or noise < 0:
        raise InvalidConfig("per_class must be >= 1 and noise >= 0")
    samples = [draw_sample(t, rng, noise, **draw_kw) for t in templates for _ in range(per_class)]
    return Corpus(samples, max(t.class_id for t in templates) + 1, split)
