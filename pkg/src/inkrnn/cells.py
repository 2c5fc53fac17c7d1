"""LSTM and GRU cells.

Parameters are plain dicts of arrays keyed by the usual gate names
(``W_i``, ``U_f``, ``b_c`` ... for LSTM; ``W_r``, ``U_z``, ``W``, ``U``,
``b`` ... for GRU).  Values may be numpy arrays or :class:`~inkrnn.numcore.Var`
so the same code runs with or without a tape.
"""

from dataclasses import dataclass

import numpy as np

from . import numcore as nc

LSTM, GRU = "lstm", "gru"
INIT_STD = 0.01
FORGET_BIAS = 5.0

LSTM_GATES = ("i", "f", "o", "c")
GRU_GATES = ("r", "z", "")


@dataclass
class CellState:
    h: object
    c: object = None

    @classmethod
    def zeros(cls, batch, hidden, kind):
        h = np.zeros((batch, hidden))
        return cls(h, np.zeros((batch, hidden)) if kind == LSTM else None)


@dataclass
class GateTrace:
    gates: dict
    candidate: object


def _suffix(g):
    return f"_{g}" if g else ""


def param_names(kind):
    gates = LSTM_GATES if kind == LSTM else GRU_GATES
    return [f"{m}{_suffix(g)}" for m in ("W", "U", "b") for g in gates]


def init_params(input_dim, hidden_dim, kind, rng, std=INIT_STD):
    """Gaussian(0, std^2) weights, zero biases, forget-gate bias of 5."""
    if kind not in (LSTM, GRU):
        raise ValueError(f"unknown cell kind {kind!r}")
    if input_dim <= 0 or hidden_dim <= 0:
        raise ValueError("cell dimensions must be positive")
    gates = LSTM_GATES if kind == LSTM else GRU_GATES
    p = {}
    for g in gates:
        p[f"W{_suffix(g)}"] = rng.normal(0.0, std, (hidden_dim, input_dim))
    for g in gates:
        p[f"U{_suffix(g)}"] = rng.normal(0.0, std, (hidden_dim, hidden_dim))
    for g in gates:
        p[f"b{_suffix(g)}"] = np.zeros(hidden_dim)
    if kind == LSTM:
        p["b_f"][:] = FORGET_BIAS
    return p


def lstm_step(p, x_t, s):
    h, c = s.h, s.c
    i = nc.sigm(nc.affine(x_t, p["W_i"], p["b_i"]) + nc.affine(h, p["U_i"]))
    f = nc.sigm(nc.affine(x_t, p["W_f"], p["b_f"]) + nc.affine(h, p["U_f"]))
    o = nc.sigm(nc.affine(x_t, p["W_o"], p["b_o"]) + nc.affine(h, p["U_o"]))
    c_tilde = nc.tanh(nc.affine(x_t, p["W_c"], p["b_c"]) + nc.affine(h, p["U_c"]))
    c_new = i * c_tilde + f * c
    h_new = o * nc.tanh(c_new)
    return CellState(h_new, c_new), GateTrace({"i": i, "f": f, "o": o}, c_tilde)


def gru_step(p, x_t, s):
    h = s.h
    r = nc.sigm(nc.affine(x_t, p["W_r"], p["b_r"]) + nc.affine(h, p["U_r"]))
    z = nc.sigm(nc.affine(x_t, p["W_z"], p["b_z"]) + nc.affine(h, p["U_z"]))
    h_tilde = nc.tanh(nc.affine(x_t, p["W"], p["b"]) + nc.affine(r * h, p["U"]))
    h_new = z * h + (1.0 - z) * h_tilde
    return CellState(h_new), GateTrace({"r": r, "z": z}, h_tilde)


def step(p, x_t, s, kind):
    return (lstm_step if kind == LSTM else gru_step)(p, x_t, s)


def run_layer(p, X, kind, masks=None):
    """Run a cell from a zero state over ``X``, shaped ``(B, T, in)``.

    The per-gate maps are stacked so the whole input projection is one
    affine and each step needs one recurrent product per gate group (same
    arithmetic as :func:`lstm_step`/:func:`gru_step`, fewer primitives).
    ``masks`` is an optional ``(B, T)`` 0/1 array; where it is 0 the state
    is reset to zero, so leading padding leaves the recurrence untouched.
    Returns the list of ``T`` hidden states.
    """
    gates = LSTM_GATES if kind == LSTM else GRU_GATES
    H = p["b_r" if kind == GRU else "b_i"].shape[0]
    B, T = X.shape[0], X.shape[1]
    Wx = nc.concat([p[f"W{_suffix(g)}"] for g in gates], axis=0)
    bx = nc.concat([p[f"b{_suffix(g)}"] for g in gates], axis=0)
    ax_all = nc.affine(X, Wx, bx)
    if kind == LSTM:
        Uh = nc.concat([p[f"U{_suffix(g)}"] for g in gates], axis=0)
    else:
        Urz = nc.concat([p["U_r"], p["U_z"]], axis=0)
        U = p["U"]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    out = []
    for t in range(T):
        ax = ax_all[:, t]
        if kind == LSTM:
            a = ax + nc.affine(h, Uh)
            sig = nc.sigm(a[:, : 3 * H])
            i, f, o = sig[:, :H], sig[:, H : 2 * H], sig[:, 2 * H :]
            c = i * nc.tanh(a[:, 3 * H :]) + f * c
            h = o * nc.tanh(c)
        else:
            rz = nc.sigm(ax[:, : 2 * H] + nc.affine(h, Urz))
            r, z = rz[:, :H], rz[:, H:]
            h_tilde = nc.tanh(ax[:, 2 * H :] + nc.affine(r * h, U))
            h = z * h + (1.0 - z) * h_tilde
        if masks is not None:
            m = masks[:, t : t + 1]
            if not m.all():
                h = h * m
                if kind == LSTM:
                    c = c * m
        out.append(h)
    return out
