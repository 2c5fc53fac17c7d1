"""File formats, synthetic data, rendering and the generator-quality loop."""

from .checkpoint import load_checkpoint, load_model, save_checkpoint, save_model
from .jsonl import Corpus, read_jsonl, write_jsonl
from .svg import render_svg
from .synth import BUILTIN_TEMPLATES, CONFUSABLE_PAIR, GlyphTemplate, synthesize_corpus

__all__ = [
    "BUILTIN_TEMPLATES",
    "CONFUSABLE_PAIR",
    "Corpus",
    "GlyphTemplate",
    "load_checkpoint",
    "load_model",
    "read_jsonl",
    "render_svg",
    "save_checkpoint",
    "save_model",
    "synthesize_corpus",
    "write_jsonl",
]
