"""Minimal double-precision neural kernel with hand-derived gradients.

Everything here operates on plain float64 numpy arrays and single samples;
batching is the caller's loop. The graph is small and fixed, so each
operation carries its own analytic backward pass instead of a general
autodiff layer, and ``grad_check`` verifies those derivations against
central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeMismatch(ValueError):
    pass


class TokenOutOfRange(IndexError):
    pass


class BadLabel(ValueError):
    pass


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# LSTM cell
# ---------------------------------------------------------------------------

@dataclass
class LstmParams:
    """Gate parameters stored as fused blocks in i|f|o|g order.

    ``w`` is (input, 4*hidden), ``u`` is (hidden, 4*hidden), ``b`` is
    (4*hidden,); the per-gate views below expose the conventional
    input x hidden / hidden x hidden matrices.
    """

    w: np.ndarray
    u: np.ndarray
    b: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.u.shape[0]

    def _gate(self, block: np.ndarray, k: int) -> np.ndarray:
        h = self.hidden_dim
        return block[..., k * h : (k + 1) * h]

    # per-gate views (i, f, o, g)
    @property
    def w_i(self): return self._gate(self.w, 0)
    @property
    def w_f(self): return self._gate(self.w, 1)
    @property
    def w_o(self): return self._gate(self.w, 2)
    @property
    def w_g(self): return self._gate(self.w, 3)
    @property
    def u_i(self): return self._gate(self.u, 0)
    @property
    def u_f(self): return self._gate(self.u, 1)
    @property
    def u_o(self): return self._gate(self.u, 2)
    @property
    def u_g(self): return self._gate(self.u, 3)
    @property
    def b_i(self): return self._gate(self.b, 0)
    @property
    def b_f(self): return self._gate(self.b, 1)
    @property
    def b_o(self): return self._gate(self.b, 2)
    @property
    def b_g(self): return self._gate(self.b, 3)


def init_lstm(input_dim: int, hidden_dim: int, rng: np.random.Generator,
              forget_bias: float = 1.0) -> LstmParams:
    """Uniform +-1/sqrt(fan_in) weights; forget-gate bias starts at 1."""
    sw = 1.0 / np.sqrt(input_dim)
    su = 1.0 / np.sqrt(hidden_dim)
    w = rng.uniform(-sw, sw, size=(input_dim, 4 * hidden_dim))
    u = rng.uniform(-su, su, size=(hidden_dim, 4 * hidden_dim))
    b = np.zeros(4 * hidden_dim)
    b[hidden_dim : 2 * hidden_dim] = forget_bias
    return LstmParams(w=w, u=u, b=b)


def _check_lstm_shapes(x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, p: LstmParams) -> None:
    if x.shape != (p.input_dim,):
        raise ShapeMismatch(f"x has shape {x.shape}, expected ({p.input_dim},)")
    if h_prev.shape != (p.hidden_dim,) or c_prev.shape != (p.hidden_dim,):
        raise ShapeMismatch(f"state shapes {h_prev.shape}/{c_prev.shape}, expected ({p.hidden_dim},)")


def lstm_step_forward(x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, p: LstmParams):
    """One LSTM step; returns (h, c, cache) with the cache needed by backward."""
    h_dim = p.hidden_dim
    gates = x @ p.w + h_prev @ p.u + p.b
    i = sigmoid(gates[:h_dim])
    f = sigmoid(gates[h_dim : 2 * h_dim])
    o = sigmoid(gates[2 * h_dim : 3 * h_dim])
    g = np.tanh(gates[3 * h_dim :])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = (x, h_prev, c_prev, i, f, o, g, tanh_c)
    return h, c, cache


def lstm_step(x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, p: LstmParams):
    """One LSTM step returning only the new (hidden, cell) state."""
    _check_lstm_shapes(x, h_prev, c_prev, p)
    h, c, _ = lstm_step_forward(x, h_prev, c_prev, p)
    return h, c


@dataclass
class LstmGrads:
    dw: np.ndarray
    du: np.ndarray
    db: np.ndarray

    @classmethod
    def zeros_like(cls, p: LstmParams) -> "LstmGrads":
        return cls(np.zeros_like(p.w), np.zeros_like(p.u), np.zeros_like(p.b))


def lstm_step_backward(dh: np.ndarray, dc: np.ndarray, cache, p: LstmParams, grads: LstmGrads):
    """Backward through one step; accumulates into ``grads`` and returns
    (dx, dh_prev, dc_prev)."""
    x, h_prev, c_prev, i, f, o, g, tanh_c = cache
    do = dh * tanh_c
    dc_total = dc + dh * o * (1.0 - tanh_c * tanh_c)
    di = dc_total * g
    df = dc_total * c_prev
    dg = dc_total * i
    dc_prev = dc_total * f
    d_gates = np.concatenate([
        di * i * (1.0 - i),
        df * f * (1.0 - f),
        do * o * (1.0 - o),
        dg * (1.0 - g * g),
    ])
    grads.dw += np.outer(x, d_gates)
    grads.du += np.outer(h_prev, d_gates)
    grads.db += d_gates
    dx = p.w @ d_gates
    dh_prev = p.u @ d_gates
    return dx, dh_prev, dc_prev


# ---------------------------------------------------------------------------
# Dense / embedding / loss
# ---------------------------------------------------------------------------

def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map x @ w + b with w of shape (in, out)."""
    if x.shape != (w.shape[0],) or b.shape != (w.shape[1],):
        raise ShapeMismatch(f"dense shapes x{x.shape} w{w.shape} b{b.shape}")
    return x @ w + b


def dense_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Returns (dx, dw, db) for a dense layer."""
    return w @ dy, np.outer(x, dy), dy.copy()


def embedding_lookup(table: np.ndarray, token: int) -> np.ndarray:
    """Row fetch; gradient is a sparse single-row update on the table."""
    if not 0 <= token < table.shape[0]:
        raise TokenOutOfRange(f"token {token} outside vocab {table.shape[0]}")
    return table[token]


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / np.sum(e)


def softmax_xent(logits: np.ndarray, label: int):
    """Max-shifted softmax cross-entropy; returns (loss, dlogits)."""
    if not 0 <= label < logits.shape[0]:
        raise BadLabel(f"label {label} outside [0, {logits.shape[0]})")
    p = softmax(logits)
    loss = -np.log(max(p[label], np.finfo(float).tiny))
    dlogits = p.copy()
    dlogits[label] -= 1.0
    return float(loss), dlogits


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict, lr: float) -> "AdamState":
        state = cls(lr=lr)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """Standard bias-corrected Adam update, applied in place."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name in grads:
        g = grads[name]
        p = params[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"grad {name} shape {g.shape} != param shape {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: str
    per_param: dict

    def ok(self, tolerance: float) -> bool:
        return self.max_rel_err < tolerance


def grad_check(model_fn, params: dict, tolerance: float = 1e-4, step: float = 1e-5) -> GradCheckReport:
    """Compare ``model_fn``'s analytic gradients with central differences.

    ``model_fn(params) -> (loss, grads)`` must be a deterministic scalar
    function of the parameter dict. Relative error uses a small absolute
    floor so near-zero gradients do not inflate the report.
    """
    _, analytic = model_fn(params)
    per_param: dict[str, float] = {}
    worst = ("", 0.0)
    for name in sorted(analytic):
        p = params[name]
        a = analytic[name]
        flat = p.reshape(-1)
        a_flat = np.asarray(a).reshape(-1)
        max_err = 0.0
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            lo_plus, _ = model_fn(params)
            flat[idx] = orig - step
            lo_minus, _ = model_fn(params)
            flat[idx] = orig
            numeric = (lo_plus - lo_minus) / (2.0 * step)
            denom = max(abs(a_flat[idx]), abs(numeric), 1e-4)
            max_err = max(max_err, abs(a_flat[idx] - numeric) / denom)
        per_param[name] = max_err
        if max_err >= worst[1]:
            worst = (name, max_err)
    return GradCheckReport(max_rel_err=worst[1], worst_param=worst[0], per_param=per_param)
