"""Stacked bidirectional recurrent classifier over line-feature sequences.

Architecture ``A -> [B1, ..., Bn] -> C -> D``: ``n`` bidirectional layers
(the next layer sees ``[forward, backward]`` concatenated per timestep),
mean pooling of the top layer's states over both directions, a tanh full
layer, and a softmax over ``D`` classes.  Dropout sits on the pooled vector
and on the full layer's output.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import cells
from . import numcore as nc
from . import optim
from .errors import EmptyInput, InvalidConfig, LabelError
from .ink import sequential_dropout


@dataclass(frozen=True)
class NetSpec:
    input_dim: int = 6
    hidden: tuple = (32, 64)
    full: int = 64
    n_classes: int = 10
    kind: str = cells.GRU
    dropout_pool: float = 0.1
    dropout_full: float = 0.1
    dropout_input: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(b) for b in self.hidden))
        if not 1 <= len(self.hidden) <= 3:
            raise InvalidConfig("between one and three recurrent layers are supported")
        if min(self.input_dim, self.full, self.n_classes, *self.hidden) <= 0:
            raise InvalidConfig("all layer sizes must be positive")
        if self.kind not in (cells.LSTM, cells.GRU):
            raise InvalidConfig(f"unknown cell kind {self.kind!r}")
        for p in (self.dropout_pool, self.dropout_full, self.dropout_input):
            if not 0.0 <= p < 1.0:
                raise InvalidConfig(f"dropout probability {p} outside [0, 1)")

    def describe(self):
        inner = ", ".join(str(b) for b in self.hidden)
        return f"{self.input_dim} -> [{inner}] -> {self.full} -> {self.n_classes} ({self.kind.upper()})"

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


# Full-scale architectures plus the desk preset; the class count is filled in from the corpus.
ARCHITECTURES = {
    "net1": dict(hidden=(500,), full=200, kind=cells.LSTM),
    "net2": dict(hidden=(500,), full=200, kind=cells.GRU),
    "net3": dict(hidden=(100, 500), full=200, kind=cells.LSTM),
    "net4": dict(hidden=(100, 500), full=200, kind=cells.GRU),
    "net5": dict(hidden=(100, 300, 500), full=200, kind=cells.LSTM),
    "net6": dict(hidden=(100, 300, 500), full=200, kind=cells.GRU),
    "desk-clf": dict(hidden=(32, 64), full=64, kind=cells.GRU),
}


def preset(name, n_classes, **overrides):
    try:
        base = ARCHITECTURES[name]
    except KeyError:
        raise InvalidConfig(f"unknown classifier preset {name!r}") from None
    return NetSpec(n_classes=n_classes, **{**base, **overrides})


@dataclass
class ClassifierModel:
    spec: NetSpec
    params: dict = field(repr=False)

    @classmethod
    def init(cls, spec, rng, std=cells.INIT_STD):
        params = {}
        in_dim = spec.input_dim
        for layer, hidden in enumerate(spec.hidden):
            for direction in ("fwd", "bwd"):
                p = cells.init_params(in_dim, hidden, spec.kind, rng, std)
                params.update({f"rnn{layer}.{direction}.{k}": v for k, v in p.items()})
            in_dim = 2 * hidden
        params["full.W"] = rng.normal(0.0, std, (spec.full, spec.hidden[-1]))
        params["full.b"] = np.zeros(spec.full)
        params["out.W"] = rng.normal(0.0, std, (spec.n_classes, spec.full))
        params["out.b"] = np.zeros(spec.n_classes)
        return cls(spec, params)

    def cell_params(self, layer, direction, params=None):
        params = self.params if params is None else params
        prefix = f"rnn{layer}.{direction}."
        return {k[len(prefix) :]: v for k, v in params.items() if k.startswith(prefix)}


def pad_batch(seqs):
    """Left-aligned zero padding: ``(B, T, F)`` array plus lengths."""
    lengths = np.array([len(s) for s in seqs])
    if lengths.min() < 1:
        raise EmptyInput("feature sequence is empty")
    X = np.zeros((len(seqs), lengths.max(), seqs[0].shape[1]))
    for b, s in enumerate(seqs):
        X[b, : len(s)] = s
    return X, lengths


def _pooled(model, params, X, lengths):
    spec = model.spec
    B, T, _ = X.shape
    mask = (np.arange(T)[None, :] < lengths[:, None]).astype(np.float64)
    # Reversing the padded block puts the padding first; run_layer holds the
    # state at zero through it, so each row sees exactly its own reversed
    # sequence and the outputs line up with the original timesteps again.
    rmask = mask[:, ::-1]
    inputs = nc.as_var(X)
    for layer in range(len(spec.hidden)):
        fwd = cells.run_layer(model.cell_params(layer, "fwd", params), inputs, spec.kind)
        bwd = cells.run_layer(model.cell_params(layer, "bwd", params), inputs[:, ::-1], spec.kind, rmask)
        fwd = nc.stack(fwd, axis=1)
        bwd = nc.stack(bwd[::-1], axis=1)
        if layer + 1 < len(spec.hidden):
            inputs = nc.concat([fwd, bwd], axis=-1)
    total = fwd * mask[:, :, None] + bwd
    return nc.vsum(total, axis=1) * (1.0 / (2.0 * lengths))[:, None]


def logits(model, params, seqs, train=False, rng=None):
    X, lengths = pad_batch(seqs)
    spec = model.spec
    v = _pooled(model, params, X, lengths)
    if train:
        v = nc.dropout(v, spec.dropout_pool, rng)
    v = nc.tanh(nc.affine(v, params["full.W"], params["full.b"]))
    if train:
        v = nc.dropout(v, spec.dropout_full, rng)
    return nc.affine(v, params["out.W"], params["out.b"])


def pooled_vector(model, feats):
    X, lengths = pad_batch([np.asarray(feats, dtype=np.float64)])
    return _pooled(model, model.params, X, lengths).value[0]


def forward(model, feats, mode="eval", rng=None):
    """Class probabilities for one feature sequence."""
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or len(feats) == 0:
        raise EmptyInput("forward needs a nonempty (k, 6) feature sequence")
    return nc.softmax(logits(model, model.params, [feats], mode == "train", rng)).value[0]


def forward_batch(model, seqs, mode="eval", rng=None):
    if len(seqs) == 0:
        return np.zeros((0, model.spec.n_classes))
    return nc.softmax(logits(model, model.params, list(seqs), mode == "train", rng)).value


def _check_labels(model, labels):
    labels = np.asarray(labels)
    if labels.ndim != 1 or np.any(labels < 0) or np.any(labels >= model.spec.n_classes):
        raise LabelError(f"labels must lie in [0, {model.spec.n_classes})")
    if not np.issubdtype(labels.dtype, np.integer):
        raise LabelError("labels must be integers")
    return labels


def _nll(model, params, seqs, labels, mode, rng):
    logp = nc.log_softmax(logits(model, params, seqs, mode == "train", rng))
    picked = logp[np.arange(len(labels)), labels]
    return nc.vsum(picked) * (-1.0 / len(labels)), logp.value


def nll_loss(model, batch, rng=None, mode="eval", params=None):
    """Mean negative log-likelihood of ``batch``, a list of
    ``(features, label)`` pairs."""
    seqs = [np.asarray(f, dtype=np.float64) for f, _ in batch]
    labels = _check_labels(model, [y for _, y in batch])
    loss, _ = _nll(model, model.params if params is None else params, seqs, labels, mode, rng)
    return float(loss.value)


def loss_and_grad(model, batch, rng=None, mode="train", params=None):
    """Loss, parameter gradients and batch accuracy.

    Gradients are averaged over the batch, exactly as if every sequence had
    its own tape and the per-sequence gradients were averaged afterwards.
    """
    seqs = [np.asarray(f, dtype=np.float64) for f, _ in batch]
    labels = _check_labels(model, [y for _, y in batch])
    with nc.Tape() as tape:
        watched = tape.params(model.params if params is None else params)
        loss, logp = _nll(model, watched, seqs, labels, mode, rng)
    grads = nc.grad(tape, loss)
    accuracy = float(np.mean(logp.argmax(axis=1) == labels))
    return float(loss.value), grads, accuracy


def train(model, corpus, opt_config, rng, log=None):
    """Train on ``corpus`` (a list of ``(features, label)`` pairs).

    Every presentation of a sample draws a fresh sequential-dropout
    sub-sequence with ``spec.dropout_input``.
    """
    p_in = model.spec.dropout_input

    def step(params, batch, rng):
        if p_in > 0:
            batch = [(sequential_dropout(f, p_in, rng), y) for f, y in batch]
        return loss_and_grad(model, batch, rng, "train", params)

    params, history = optim.run_epochs(model.params, list(corpus), step, opt_config, rng, log=log)
    model.params = params
    return model, history


def predict_ensemble(model, feats, n_sub, p, rng):
    """Average class probabilities over ``n_sub`` sequential-dropout draws."""
    if n_sub < 1:
        raise InvalidConfig("n_sub must be at least 1")
    feats = np.asarray(feats, dtype=np.float64)
    if len(feats) == 0:
        raise EmptyInput("forward needs a nonempty feature sequence")
    subs = [sequential_dropout(feats, p, rng) for _ in range(n_sub)]
    return forward_batch(model, subs).mean(axis=0)


def evaluate(model, samples, n_sub=None, p=0.0, rng=None, batch_size=128):
    """Accuracy report for ``(features, label)`` pairs.

    With ``n_sub`` set, every sample is scored by the sub-sequence ensemble.
    """
    n = model.spec.n_classes
    labels = np.array([y for _, y in samples], dtype=int)
    preds = np.empty(len(samples), dtype=int)
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        if n_sub is None:
            probs = forward_batch(model, [f for f, _ in chunk])
        else:
            subs = [sequential_dropout(np.asarray(f, dtype=np.float64), p, rng) for f, _ in chunk for _ in range(n_sub)]
            probs = forward_batch(model, subs).reshape(len(chunk), n_sub, n).mean(axis=1)
        preds[start : start + len(chunk)] = probs.argmax(axis=1)
    confusion = np.zeros((n, n), dtype=int)
    np.add.at(confusion, (labels, preds), 1)
    support = confusion.sum(axis=1)
    per_class = np.where(support > 0, np.diag(confusion) / np.maximum(support, 1), np.nan)
    return {
        "accuracy": float(np.mean(preds == labels)) if len(labels) else float("nan"),
        "per_class_accuracy": [None if np.isnan(a) else float(a) for a in per_class],
        "confusion": confusion.tolist(),
    }
