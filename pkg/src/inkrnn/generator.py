"""Conditional GRU generator of pen trajectories.

At every step the network reads the previous pen direction and pen state
(each lifted through a tanh layer), its hidden state and the class
embedding, and emits an output vector.  Two heads read that vector: a
mixture of axis-aligned Gaussians for the next direction and a three-way
softmax for the next pen state.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import numcore as nc
from . import optim
from .cells import INIT_STD
from .errors import InvalidConfig, ShapeError, TokenError
from .ink import END_OF_CHAR, InkSequence, tokens_to_ink

SIGMA_FLOOR = 1e-8
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GenConfig:
    n_classes: int = 10
    embed_dim: int = 32
    transform_dim: int = 32
    hidden_dim: int = 128
    output_dim: int = 64
    n_mixtures: int = 5
    dropout: float = 0.3
    loss_weights: tuple = (1.0, 5.0, 100.0)
    max_len: int = 200
    terminal_direction: bool = False

    def __post_init__(self):
        object.__setattr__(self, "loss_weights", tuple(float(w) for w in self.loss_weights))
        dims = (self.n_classes, self.embed_dim, self.transform_dim, self.hidden_dim, self.output_dim, self.n_mixtures)
        if min(dims) <= 0 or self.max_len <= 0:
            raise InvalidConfig("generator dimensions and max_len must be positive")
        if len(self.loss_weights) != 3 or min(self.loss_weights) <= 0:
            raise InvalidConfig("loss_weights must be three positive numbers")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidConfig("dropout must lie in [0, 1)")

    def to_dict(self):
        d = asdict(self)
        d["loss_weights"] = list(self.loss_weights)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


PRESETS = {
    "gen-paper": dict(embed_dim=500, transform_dim=300, hidden_dim=1000, output_dim=300, n_mixtures=30, dropout=0.3),
    "desk-gen": dict(embed_dim=32, transform_dim=32, hidden_dim=128, output_dim=64, n_mixtures=5, dropout=0.0),
}


def preset(name, n_classes, **overrides):
    try:
        base = PRESETS[name]
    except KeyError:
        raise InvalidConfig(f"unknown generator preset {name!r}") from None
    return GenConfig(n_classes=n_classes, **{**base, **overrides})


@dataclass
class MixtureParams:
    """Arrays of shape ``(..., M)``."""

    pi: np.ndarray
    mu_x: np.ndarray
    mu_y: np.ndarray
    sigma_x: np.ndarray
    sigma_y: np.ndarray


@dataclass
class GenStepTrace:
    d_in: object
    s_in: object
    r: object
    z: object
    h_tilde: object
    h: object
    o: object


@dataclass
class GeneratorModel:
    config: GenConfig
    params: dict = field(repr=False)

    @classmethod
    def init(cls, config, rng, std=INIT_STD):
        c = config
        D, T, O, d, M = c.hidden_dim, c.transform_dim, c.output_dim, c.embed_dim, c.n_mixtures
        shapes = {
            "W_d": (T, 2), "b_d": (T,),
            "W_s": (T, 3), "b_s": (T,),
        }
        for g in ("_r", "_z", ""):
            shapes.update({f"W{g}": (D, D), f"U{g}": (D, T), f"V{g}": (D, T), f"M{g}": (D, d), f"b{g}": (D,)})
        shapes.update({"W_o": (O, D), "U_o": (O, T), "V_o": (O, T), "M_o": (O, d), "b_o": (O,)})
        shapes.update({"W_gmm": (5 * M, O), "b_gmm": (5 * M,), "W_softmax": (3, O), "b_softmax": (3,)})
        shapes["E"] = (d, c.n_classes)
        params = {
            k: (np.zeros(s) if k.startswith("b") else rng.normal(0.0, std, s)) for k, s in shapes.items()
        }
        return cls(config, params)

    @property
    def embedding(self):
        return self.params["E"]


# ---------------------------------------------------------------------------
# single step, written out gate by gate


def gen_step(p, h_prev, d_t, s_t, c, mode="eval", rng=None, dropout=0.0):
    """One step of the conditional GRU; returns ``(h_t, o_t, trace)``.

    Vectors may carry a leading batch axis.  ``dropout`` is applied to
    ``o_t`` in train mode only.
    """
    d_in = nc.tanh(nc.affine(d_t, p["W_d"], p["b_d"]))
    s_in = nc.tanh(nc.affine(s_t, p["W_s"], p["b_s"]))

    def pre(g, h):
        return nc.affine(h, p[f"W{g}"]) + nc.affine(d_in, p[f"U{g}"]) + nc.affine(s_in, p[f"V{g}"]) + nc.affine(
            c, p[f"M{g}"], p[f"b{g}"]
        )

    r = nc.sigm(pre("_r", h_prev))
    z = nc.sigm(pre("_z", h_prev))
    h_tilde = nc.tanh(pre("", r * h_prev))
    h = z * h_prev + (1.0 - z) * h_tilde
    o = nc.tanh(pre("_o", h))
    if mode == "train" and dropout > 0:
        o = nc.dropout(o, dropout, rng)
    return h, o, GenStepTrace(d_in, s_in, r, z, h_tilde, h, o)


def _split_mixture(raw, M):
    return raw[..., :M], raw[..., M : 2 * M], raw[..., 2 * M : 3 * M], raw[..., 3 * M : 4 * M], raw[..., 4 * M :]


def gmm_head(o_t, p, M=None):
    """Mixture parameters from the output vector (numpy in, numpy out)."""
    W = np.asarray(p["W_gmm"])
    M = W.shape[0] // 5 if M is None else M
    raw = nc.affine(o_t, p["W_gmm"], p["b_gmm"])
    pi_hat, mu_x, mu_y, sx_hat, sy_hat = _split_mixture(raw, M)
    sx = nc.maximum(nc.exp(sx_hat), SIGMA_FLOOR)
    sy = nc.maximum(nc.exp(sy_hat), SIGMA_FLOOR)
    return MixtureParams(nc.softmax(pi_hat).value, mu_x.value, mu_y.value, sx.value, sy.value)


def pen_head(o_t, p):
    return nc.softmax(nc.affine(o_t, p["W_softmax"], p["b_softmax"])).value


def _normal_pdf(x, mu, sigma):
    return np.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * np.sqrt(2.0 * np.pi))


def gmm_density(mix, dx, dy):
    """Mixture density at ``(dx, dy)``; broadcasts over leading axes."""
    dx = np.asarray(dx, dtype=np.float64)[..., None]
    dy = np.asarray(dy, dtype=np.float64)[..., None]
    comp = _normal_pdf(dx, mix.mu_x, mix.sigma_x) * _normal_pdf(dy, mix.mu_y, mix.sigma_y)
    return (mix.pi * comp).sum(axis=-1)


def gmm_log_density(mix, dx, dy):
    dx = np.asarray(dx, dtype=np.float64)[..., None]
    dy = np.asarray(dy, dtype=np.float64)[..., None]
    zx = (dx - mix.mu_x) / mix.sigma_x
    zy = (dy - mix.mu_y) / mix.sigma_y
    comp = np.log(mix.pi) - np.log(mix.sigma_x * mix.sigma_y) - LOG_2PI - 0.5 * (zx * zx + zy * zy)
    m = comp.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(comp - m).sum(axis=-1, keepdims=True)))[..., 0]


def gmm_sample(mix, rng, size=None):
    """Draw directions: pick a component by weight, then sample both axes
    independently.  ``mix`` arrays are ``(M,)`` (pass ``size``) or
    ``(B, M)``."""
    pi = np.asarray(mix.pi)
    if pi.ndim == 1:
        n = 1 if size is None else size
        rows = np.broadcast_to(pi, (n, pi.size))
        sel = lambda a: np.broadcast_to(a, (n, pi.size))  # noqa: E731
    else:
        rows = pi
        sel = lambda a: a  # noqa: E731
    cdf = np.cumsum(rows, axis=1)
    u = rng.random(len(rows)) * cdf[:, -1]
    j = np.minimum((cdf <= u[:, None]).sum(axis=1), rows.shape[1] - 1)
    idx = np.arange(len(rows))
    eps = rng.standard_normal((len(rows), 2))
    dx = sel(mix.mu_x)[idx, j] + sel(mix.sigma_x)[idx, j] * eps[:, 0]
    dy = sel(mix.mu_y)[idx, j] + sel(mix.sigma_y)[idx, j] * eps[:, 1]
    out = np.column_stack([dx, dy])
    return out[0] if pi.ndim == 1 and size is None else out


# ---------------------------------------------------------------------------
# teacher-forced loss


def validate_tokens(tokens):
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2 or tokens.shape[1] != 5 or len(tokens) == 0:
        raise TokenError("tokens must be a nonempty (k, 5) array")
    pens = tokens[:, 2:]
    if not np.all((pens == 0) | (pens == 1)) or not np.all(pens.sum(axis=1) == 1):
        raise TokenError("every pen state must be one-hot")
    eoc = pens[:, END_OF_CHAR] == 1
    if not eoc[-1] or eoc[:-1].any():
        raise TokenError("end-of-char must appear exactly once, as the final token")
    if not np.all(np.isfinite(tokens[:, :2])):
        raise TokenError("directions must be finite")
    return tokens


def _teacher_batch(token_seqs):
    """Inputs (zero token, then every token but the last), targets, mask."""
    lengths = np.array([len(t) for t in token_seqs])
    B, T = len(token_seqs), lengths.max()
    inputs = np.zeros((B, T, 5))
    targets = np.zeros((B, T, 5))
    for b, tok in enumerate(token_seqs):
        inputs[b, 1 : len(tok)] = tok[:-1]
        targets[b, : len(tok)] = tok
    mask = (np.arange(T)[None, :] < lengths[:, None]).astype(np.float64)
    return inputs, targets, mask


def _unroll(cfg, params, inputs, class_ids, train, rng):
    """Outputs ``o_t`` for every step, shaped ``(B, T, O)``, via stacked
    gate maps (arithmetic identical to :func:`gen_step`)."""
    B, T, _ = inputs.shape
    D = cfg.hidden_dim
    d_in = nc.tanh(nc.affine(inputs[..., :2], params["W_d"], params["b_d"]))
    s_in = nc.tanh(nc.affine(inputs[..., 2:], params["W_s"], params["b_s"]))
    gates = ("_r", "_z", "", "_o")
    U = nc.concat([params[f"U{g}"] for g in gates], axis=0)
    V = nc.concat([params[f"V{g}"] for g in gates], axis=0)
    Mc = nc.concat([params[f"M{g}"] for g in gates], axis=0)
    bc = nc.concat([params[f"b{g}"] for g in gates], axis=0)
    c = nc.transpose(params["E"][:, class_ids])
    static = nc.reshape(nc.affine(c, Mc, bc), (B, 1, -1))
    drive = nc.affine(d_in, U) + nc.affine(s_in, V) + static
    Wrz = nc.concat([params["W_r"], params["W_z"]], axis=0)
    W = params["W"]
    h = np.zeros((B, D))
    hs = []
    for t in range(T):
        a = drive[:, t]
        rz = nc.sigm(a[:, : 2 * D] + nc.affine(h, Wrz))
        r, z = rz[:, :D], rz[:, D:]
        h_tilde = nc.tanh(a[:, 2 * D : 3 * D] + nc.affine(r * h, W))
        h = z * h + (1.0 - z) * h_tilde
        hs.append(h)
    o = nc.tanh(nc.affine(nc.stack(hs, axis=1), params["W_o"]) + drive[..., 3 * D :])
    if train and cfg.dropout > 0:
        o = nc.dropout(o, cfg.dropout, rng)
    return o


def _batch_loss(cfg, params, token_seqs, class_ids, train, rng, weighted=True):
    """Summed per-character loss averaged over the batch, plus the pen-state
    accuracy of the predictions."""
    inputs, targets, mask = _teacher_batch(token_seqs)
    B = len(token_seqs)
    M = cfg.n_mixtures
    o = _unroll(cfg, params, inputs, np.asarray(class_ids), train, rng)

    raw = nc.affine(o, params["W_gmm"], params["b_gmm"])
    pi_hat, mu_x, mu_y, sx_hat, sy_hat = _split_mixture(raw, M)
    sx = nc.maximum(nc.exp(sx_hat), SIGMA_FLOOR)
    sy = nc.maximum(nc.exp(sy_hat), SIGMA_FLOOR)
    zx = nc.div(targets[..., 0:1] - mu_x, sx)
    zy = nc.div(targets[..., 1:2] - mu_y, sy)
    comp = nc.log_softmax(pi_hat) - nc.log(sx) - nc.log(sy) - LOG_2PI - 0.5 * (zx * zx + zy * zy)
    log_pd = nc.logsumexp(comp, axis=-1)
    dir_mask = mask if cfg.terminal_direction else mask * (1.0 - targets[..., 2 + END_OF_CHAR])

    pen_raw = nc.affine(o, params["W_softmax"], params["b_softmax"])
    pen_t = targets[..., 2:]
    if weighted:
        w = np.asarray(cfg.loss_weights)
        pen_term = nc.vsum(nc.log_softmax(pen_raw) * (pen_t * w), axis=-1)
    else:
        pen_term = nc.log(nc.vsum(nc.softmax(pen_raw) * pen_t, axis=-1))
    total = nc.vsum(log_pd * dir_mask) + nc.vsum(pen_term * mask)
    loss = total * (-1.0 / B)
    hits = (pen_raw.value.argmax(axis=-1) == pen_t.argmax(axis=-1)) * mask
    return loss, float(hits.sum() / mask.sum())


def _check_class(cfg, class_id):
    if not 0 <= int(class_id) < cfg.n_classes:
        raise InvalidConfig(f"class id {class_id} outside [0, {cfg.n_classes})")


def gen_loss(model, tokens, class_id, mode="eval", rng=None, weighted=True, params=None):
    """Cost-sensitive negative log-likelihood of one token sequence.

    ``weighted=False`` gives the plain cross-entropy form, which ignores
    ``loss_weights``.
    """
    tokens = validate_tokens(tokens)
    _check_class(model.config, class_id)
    params = model.params if params is None else params
    loss, _ = _batch_loss(model.config, params, [tokens], [class_id], mode == "train", rng, weighted)
    return float(loss.value)


def loss_and_grad(model, batch, rng=None, mode="train", params=None, weighted=True):
    """Batch of ``(tokens, class_id)`` pairs -> ``(loss, grads, pen_acc)``."""
    token_seqs = [validate_tokens(t) for t, _ in batch]
    class_ids = [int(c) for _, c in batch]
    for c in class_ids:
        _check_class(model.config, c)
    with nc.Tape() as tape:
        watched = tape.params(model.params if params is None else params)
        loss, acc = _batch_loss(model.config, watched, token_seqs, class_ids, mode == "train", rng, weighted)
    return float(loss.value), nc.grad(tape, loss), acc


def train(model, corpus, opt_config, rng, log=None):
    """``corpus``: list of ``(tokens, class_id)`` pairs."""

    def step(params, batch, rng):
        return loss_and_grad(model, batch, rng, "train", params)

    params, history = optim.run_epochs(model.params, list(corpus), step, opt_config, rng, log=log)
    model.params = params
    return model, history


# ---------------------------------------------------------------------------
# sampling


def sample_characters(model, class_ids, rng, max_len=None):
    """Draw one character per entry of ``class_ids`` (all in parallel).

    Every character starts from a zero hidden state and a zero input token;
    the pen state of each step is the hard-max of the pen head.  Returns
    :class:`~inkrnn.ink.InkSequence` objects, ``truncated`` set where the
    length cap was reached without end-of-char.
    """
    cfg = model.config
    max_len = cfg.max_len if max_len is None else max_len
    class_ids = np.asarray(class_ids, dtype=int).reshape(-1)
    for c in class_ids:
        _check_class(cfg, c)
    p = model.params
    B = len(class_ids)
    c = p["E"][:, class_ids].T
    h = np.zeros((B, cfg.hidden_dim))
    d = np.zeros((B, 2))
    s = np.zeros((B, 3))
    tokens = np.zeros((B, max_len, 5))
    done = np.zeros(B, dtype=bool)
    lengths = np.full(B, max_len)
    for t in range(max_len):
        h_var, o, _ = gen_step(p, h, d, s, c)
        h = h_var.value
        mix = gmm_head(o.value, p, cfg.n_mixtures)
        d = gmm_sample(mix, rng)
        pen = pen_head(o.value, p).argmax(axis=1)
        s = np.eye(3)[pen]
        tokens[:, t, :2] = d
        tokens[:, t, 2:] = s
        finished = (pen == END_OF_CHAR) & ~done
        lengths[finished] = t
        done |= finished
        if done.all():
            break
    out = []
    for b in range(B):
        seq = tokens_to_ink(tokens[b, : lengths[b]], label=int(class_ids[b]))
        seq.truncated = not done[b]
        out.append(seq)
    return out


def sample_character(model, class_id, rng, max_len=None):
    return sample_characters(model, [class_id], rng, max_len)[0]


def nearest_neighbors(E, class_id, k):
    """The ``k`` classes whose embedding columns are closest (Euclidean) to
    ``class_id``'s, nearest first; ties go to the lower index."""
    E = np.asarray(E)
    N = E.shape[1]
    if not 0 < k < N:
        raise InvalidConfig(f"k must lie in [1, {N})")
    if E.ndim != 2:
        raise ShapeError("embedding must be a (d, N) matrix")
    dist = np.sqrt(((E - E[:, [class_id]]) ** 2).sum(axis=0))
    order = [j for j in np.argsort(dist, kind="stable") if j != class_id]
    return [int(j) for j in order[:k]]
