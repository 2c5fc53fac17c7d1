"""Ink JSONL: one character per line,
``{"label": int|null, "points": [[x, y, stroke_id], ...]}``.

Generated characters may also carry ``"truncated": true``.
"""

import json
import math
from dataclasses import dataclass, field

from ..errors import LabelError, ParseError
from ..ink import InkSequence


@dataclass
class Corpus:
    samples: list
    class_count: int
    split: str = "train"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for s in self.samples:
            if s.label is not None and not 0 <= s.label < self.class_count:
                raise LabelError(f"label {s.label} outside [0, {self.class_count})")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def sample_to_record(seq):
    rec = {"label": seq.label, "points": [[x, y, s] for x, y, s in seq.points]}
    if seq.truncated:
        rec["truncated"] = True
    return rec


def record_to_sample(rec):
    if not isinstance(rec, dict) or "points" not in rec:
        raise ValueError('expected an object with a "points" array')
    label = rec.get("label")
    if label is not None and (not isinstance(label, int) or isinstance(label, bool)):
        raise ValueError(f"label must be an integer or null, got {label!r}")
    points = rec["points"]
    if not isinstance(points, list):
        raise ValueError('"points" must be an array')
    for p in points:
        if not isinstance(p, list) or len(p) != 3:
            raise ValueError("each point must be [x, y, stroke_id]")
        if not isinstance(p[2], int) or isinstance(p[2], bool) or p[2] < 0:
            raise ValueError(f"stroke id must be a non-negative integer, got {p[2]!r}")
        for c in p[:2]:
            if isinstance(c, bool) or not isinstance(c, (int, float)):
                raise ValueError(f"coordinate must be a number, got {c!r}")
            if not math.isfinite(c):
                raise ValueError("non-finite coordinate")
    seq = InkSequence.from_points(points, label)
    seq.truncated = bool(rec.get("truncated", False))
    return seq


def dumps(seq):
    for x, y, _ in seq.points:
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError("non-finite coordinate")
    return json.dumps(sample_to_record(seq), allow_nan=False)


def read_jsonl(path, class_count=None, split="train"):
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line, parse_constant=_reject_constant)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: malformed JSON ({exc.msg})", lineno) from None
            except ValueError as exc:
                raise ParseError(f"{path}: {exc}", lineno) from None
            try:
                samples.append(record_to_sample(rec))
            except ValueError as exc:
                raise ParseError(f"{path}: {exc}", lineno) from None
    if class_count is None:
        labels = [s.label for s in samples if s.label is not None]
        class_count = max(labels) + 1 if labels else 0
    return Corpus(samples, class_count, split)


def _reject_constant(name):
    raise ValueError(f"non-finite coordinate {name}")


def write_jsonl(corpus, path):
    samples = corpus.samples if isinstance(corpus, Corpus) else list(corpus)
    lines = [dumps(s) + "\n" for s in samples]
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(lines)
