"""Checkpoints: ``<name>.json`` manifest plus ``<name>.bin`` blob.

The blob holds every tensor as little-endian float32, row-major, in
manifest order.  Training runs in float64; saving truncates.
"""

import json
from pathlib import Path

import numpy as np

from ..classifier import ClassifierModel, NetSpec
from ..errors import ConfigError, ParseError
from ..generator import GenConfig, GeneratorModel

FORMAT_VERSION = 1


def _stem(path):
    path = Path(path)
    return path.with_suffix("") if path.suffix in (".json", ".bin") else path


def save_checkpoint(path, kind, config, params, extra=None):
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    tensors = [{"name": k, "shape": list(v.shape)} for k, v in params.items()]
    manifest = {"format": FORMAT_VERSION, "kind": kind, "config": config, "tensors": tensors}
    if extra:
        manifest["extra"] = extra
    blob = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for v in params.values())
    stem.with_suffix(".json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    stem.with_suffix(".bin").write_bytes(blob)
    return stem


def load_checkpoint(path):
    """Return ``(kind, config, params, extra)``; parameters come back as
    float64 arrays holding the stored float32 values exactly."""
    stem = _stem(path)
    manifest_path = stem.with_suffix(".json")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{manifest_path}: malformed manifest ({exc.msg})", exc.lineno) from None
    raw = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f4")
    names = [t["name"] for t in manifest["tensors"]]
    if len(set(names)) != len(names):
        raise ParseError(f"{manifest_path}: duplicate tensor names")
    sizes = [int(np.prod(t["shape"])) for t in manifest["tensors"]]
    if sum(sizes) != raw.size:
        raise ParseError(f"{stem}.bin holds {raw.size} values, manifest expects {sum(sizes)}")
    params = {}
    offset = 0
    for t, n in zip(manifest["tensors"], sizes):
        params[t["name"]] = raw[offset : offset + n].reshape(t["shape"]).astype(np.float64)
        offset += n
    return manifest["kind"], manifest["config"], params, manifest.get("extra", {})


def save_model(path, model, extra=None):
    if isinstance(model, ClassifierModel):
        return save_checkpoint(path, "classifier", model.spec.to_dict(), model.params, extra)
    if isinstance(model, GeneratorModel):
        return save_checkpoint(path, "generator", model.config.to_dict(), model.params, extra)
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def load_model(path, expect=None):
    kind, config, params, extra = load_checkpoint(path)
    if expect is not None and kind != expect:
        raise ConfigError(f"{path}: expected a {expect} checkpoint, found {kind}")
    if kind == "classifier":
        model = ClassifierModel(NetSpec(**config), params)
    elif kind == "generator":
        model = GeneratorModel(GenConfig.from_dict(config), params)
    else:
        raise ConfigError(f"{path}: unknown checkpoint kind {kind!r}")
    return model, extra
