"""Pen trajectories and the two sequence encodings built from them.

A character is a list of ``(x, y, stroke_id)`` points.  Preprocessing
drops redundant points and rescales the coordinates; afterwards the points
become either six-dimensional line features (recognition) or
direction/pen-state tokens (generation).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInk, EmptyInk, InvalidConfig

PEN_DOWN, PEN_UP, END_OF_CHAR = 0, 1, 2
DEGENERATE_EPS = 1e-6


@dataclass(frozen=True)
class PreprocessConfig:
    dist_factor: float
    cos_threshold: float

    def __post_init__(self):
        if not self.dist_factor > 0:
            raise InvalidConfig(f"dist_factor must be positive, got {self.dist_factor}")
        if not -1.0 < self.cos_threshold <= 1.0:
            raise InvalidConfig(f"cos_threshold must lie in (-1, 1], got {self.cos_threshold}")


RECOGNITION = PreprocessConfig(0.01, 0.99)
GENERATION = PreprocessConfig(0.05, 0.9)
PRESETS = {"recognition": RECOGNITION, "generation": GENERATION}


@dataclass(frozen=True)
class NormalizationStats:
    mu_x: float
    mu_y: float
    delta_x: float


@dataclass
class InkSequence:
    """One handwritten character.

    ``xy`` is an ``(n, 2)`` float64 array and ``strokes`` the matching
    non-decreasing stroke ids.  ``truncated`` marks generator output that
    hit the length cap before emitting end-of-char.
    """

    xy: np.ndarray
    strokes: np.ndarray
    label: int | None = None
    truncated: bool = False
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=np.float64).reshape(-1, 2)
        self.strokes = np.asarray(self.strokes, dtype=np.int64).reshape(-1)
        if len(self.xy) != len(self.strokes):
            raise ValueError("xy and strokes differ in length")
        if len(self.strokes) and np.any(np.diff(self.strokes) < 0):
            raise ValueError("stroke ids must be non-decreasing")

    @classmethod
    def from_points(cls, points, label=None):
        pts = list(points)
        xy = [(float(p[0]), float(p[1])) for p in pts]
        strokes = [int(p[2]) for p in pts]
        return cls(np.array(xy, dtype=np.float64).reshape(-1, 2), np.array(strokes, dtype=np.int64), label)

    @property
    def points(self):
        return [(float(x), float(y), int(s)) for (x, y), s in zip(self.xy, self.strokes)]

    def __len__(self):
        return len(self.xy)

    @property
    def n_strokes(self):
        return len(np.unique(self.strokes))

    def stroke_slices(self):
        """Index ranges ``(start, stop)`` of each stroke, in order."""
        if len(self.strokes) == 0:
            return []
        cuts = np.flatnonzero(np.diff(self.strokes)) + 1
        starts = np.concatenate([[0], cuts])
        stops = np.concatenate([cuts, [len(self.strokes)]])
        return list(zip(starts.tolist(), stops.tolist()))

    def replace(self, xy=None, strokes=None):
        return InkSequence(
            self.xy if xy is None else xy,
            self.strokes if strokes is None else strokes,
            self.label,
            self.truncated,
        )


def remove_redundant_points(seq, cfg):
    """Drop interior points that are too close to the last kept point or
    that continue almost straight on.

    Stroke endpoints always survive.  The scan runs once, left to right,
    comparing against the most recently kept point and the raw successor.
    """
    if len(seq) == 0:
        raise EmptyInk("cannot preprocess an empty sequence")
    xy = seq.xy
    height = xy[:, 1].max() - xy[:, 1].min()
    width = xy[:, 0].max() - xy[:, 0].min()
    t_dist = cfg.dist_factor * max(height, width)
    keep = np.zeros(len(xy), dtype=bool)
    for start, stop in seq.stroke_slices():
        keep[start] = True
        keep[stop - 1] = True
        last = xy[start]
        for i in range(start + 1, stop - 1):
            back = xy[i] - last
            ahead = xy[i + 1] - xy[i]
            dist = np.hypot(back[0], back[1])
            if dist < t_dist:
                continue
            norm = dist * np.hypot(ahead[0], ahead[1])
            if norm > 0 and (back @ ahead) / norm > cfg.cos_threshold:
                continue
            keep[i] = True
            last = xy[i]
    return seq.replace(xy[keep], seq.strokes[keep])


def _segments(seq):
    """Endpoints of all within-stroke consecutive-point segments."""
    same = seq.strokes[1:] == seq.strokes[:-1]
    return seq.xy[:-1][same], seq.xy[1:][same]


def normalization_stats(seq):
    """Length-weighted mean of both axes and standard deviation along x,
    integrating along every within-stroke segment."""
    p1, p2 = _segments(seq)
    lengths = np.hypot(*(p2 - p1).T)
    total = lengths.sum()
    if len(lengths) == 0 or total <= 0:
        raise EmptyInk("no within-stroke segment of nonzero length")
    mu_x = float((0.5 * lengths * (p1[:, 0] + p2[:, 0])).sum() / total)
    mu_y = float((0.5 * lengths * (p1[:, 1] + p2[:, 1])).sum() / total)
    a = p1[:, 0] - mu_x
    b = p2[:, 0] - mu_x
    dev = (lengths * (a * a + b * b + a * b) / 3.0).sum()
    return NormalizationStats(mu_x, mu_y, float(np.sqrt(dev / total)))


def normalize_coordinates(seq):
    stats = normalization_stats(seq)
    if stats.delta_x < DEGENERATE_EPS:
        raise DegenerateInk(f"horizontal deviation {stats.delta_x:.3g} is degenerate")
    xy = (seq.xy - [stats.mu_x, stats.mu_y]) / stats.delta_x
    return seq.replace(xy=xy), stats


def preprocess(seq, cfg):
    return normalize_coordinates(remove_redundant_points(seq, cfg))[0]


def to_line_features(seq):
    """``(n-1, 6)`` array of ``[x, y, dx, dy, pen_down, pen_up]`` rows."""
    if len(seq) < 2:
        raise EmptyInk("need at least two points for line features")
    xy = seq.xy
    same = (seq.strokes[1:] == seq.strokes[:-1]).astype(np.float64)
    return np.column_stack([xy[:-1], np.diff(xy, axis=0), same, 1.0 - same])


def to_gen_tokens(seq):
    """``(n, 5)`` array of ``[dx, dy, down, up, eoc]`` rows, closed by an
    end-of-char row with zero direction."""
    if len(seq) < 2:
        raise EmptyInk("need at least two points for generation tokens")
    n = len(seq)
    tokens = np.zeros((n, 5))
    tokens[:-1, :2] = np.diff(seq.xy, axis=0)
    crosses = seq.strokes[1:] != seq.strokes[:-1]
    tokens[np.arange(n - 1), 2 + crosses.astype(int)] = 1.0
    tokens[-1, 2 + END_OF_CHAR] = 1.0
    return tokens


def tokens_to_ink(tokens, start=(0.0, 0.0), label=None):
    """Redraw a token list by cumulative summation from ``start``.

    Pen-up moves open a new stroke; the first end-of-char row stops
    drawing.
    """
    tokens = np.asarray(tokens, dtype=np.float64).reshape(-1, 5)
    pens = tokens[:, 2:].argmax(axis=1)
    stop = np.flatnonzero(pens == END_OF_CHAR)
    k = stop[0] if len(stop) else len(tokens)
    steps = tokens[:k, :2]
    xy = np.vstack([np.asarray(start, dtype=np.float64)[None], np.asarray(start) + np.cumsum(steps, axis=0)])
    strokes = np.concatenate([[0], np.cumsum(pens[:k] == PEN_UP)])
    return InkSequence(xy, strokes, label)


def sequential_dropout(feats, p, rng, max_retries=100):
    """Delete each item independently with probability ``p``.

    Never returns an empty result: an all-deleted draw is retried, and
    after ``max_retries`` failures a single random item is kept.
    """
    if not 0.0 <= p < 1.0:
        raise InvalidConfig(f"dropout probability must lie in [0, 1), got {p}")
    k = len(feats)
    if p == 0.0 or k == 0:
        return feats
    for _ in range(max_retries):
        mask = rng.random(k) >= p
        if mask.any():
            break
    else:
        mask = np.zeros(k, dtype=bool)
        mask[rng.integers(k)] = True
    if isinstance(feats, np.ndarray):
        return feats[mask]
    return [f for f, m in zip(feats, mask) if m]
