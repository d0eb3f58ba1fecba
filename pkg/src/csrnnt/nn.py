"""Deterministic neural-network kernels with explicit caches and manual backward passes.

Everything here is a pure function of its inputs (plus an explicit RNG where
randomness is involved). Matrices are plain numpy arrays, row-major, one row
per time step or per vector. 64-bit floats are used throughout the tests;
training may hold parameters in 32-bit and still computes in 64-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function via tanh."""
    return 0.5 * (np.tanh(0.5 * np.asarray(x, dtype=np.float64)) + 1.0)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Log of the softmax of a vector (or of each row of a matrix), max-shifted."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise DomainError("log_softmax: empty logits")
    if not np.all(np.isfinite(logits)):
        raise DomainError("log_softmax: non-finite logits")
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# LSTM cell
# ---------------------------------------------------------------------------

# Gate order along the fused axis: input, forget, output, cell candidate.
# The three sigmoid gates are contiguous so one call activates them all.


@dataclass
class LstmParams:
    """Parameters of one LSTM layer, fused over gates.

    ``w`` has shape (input_dim + hidden_dim, 4 * hidden_dim) and ``b`` shape
    (4 * hidden_dim,). Rows 0..input_dim of ``w`` multiply the input, the rest
    multiply the previous hidden state. Per-gate views are exposed for tests.
    """

    w: np.ndarray
    b: np.ndarray
    input_dim: int

    def __post_init__(self):
        rows, cols = self.w.shape
        if cols % 4 != 0 or rows != self.input_dim + cols // 4:
            raise ShapeError(f"LstmParams.w has shape {self.w.shape}, expected "
                             f"({self.input_dim} + hidden, 4 * hidden)")
        if self.b.shape != (cols,):
            raise ShapeError(f"LstmParams.b has shape {self.b.shape}, expected ({cols},)")

    @property
    def hidden_dim(self) -> int:
        return self.w.shape[1] // 4

    def _gate(self, k):
        h = self.hidden_dim
        return self.w[:, k * h:(k + 1) * h], self.b[k * h:(k + 1) * h]

    @property
    def input_gate(self):
        return self._gate(0)

    @property
    def forget_gate(self):
        return self._gate(1)

    @property
    def output_gate(self):
        return self._gate(2)

    @property
    def cell_gate(self):
        return self._gate(3)


def init_lstm(input_dim: int, hidden_dim: int, rng: np.random.Generator,
              dtype=np.float64) -> LstmParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init; forget-gate bias set to 1."""
    fan_in = input_dim + hidden_dim
    bound = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, 4 * hidden_dim)).astype(dtype)
    b = np.zeros(4 * hidden_dim, dtype=dtype)
    b[hidden_dim:2 * hidden_dim] = 1.0
    return LstmParams(w=w, b=b, input_dim=input_dim)


def zero_lstm(input_dim: int, hidden_dim: int, dtype=np.float64) -> LstmParams:
    w = np.zeros((input_dim + hidden_dim, 4 * hidden_dim), dtype=dtype)
    b = np.zeros(4 * hidden_dim, dtype=dtype)
    return LstmParams(w=w, b=b, input_dim=input_dim)


@dataclass
class LstmCache:
    """Every activation needed by lstm_backward, stored per step."""

    params: LstmParams
    inputs: np.ndarray      # (T, input_dim)
    h_all: np.ndarray       # (T + 1, hidden) including the initial state
    c_all: np.ndarray       # (T + 1, hidden)
    gates: np.ndarray       # (T, 4 * hidden) post-activation i, f, g, o
    tanh_c: np.ndarray      # (T, hidden)


def _check_state(state, hidden_dim, name):
    h, c = state
    h = np.asarray(h, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if h.shape != (hidden_dim,) or c.shape != (hidden_dim,):
        raise ShapeError(f"{name} state has shapes {h.shape}/{c.shape}, "
                         f"expected ({hidden_dim},)")
    return h, c


def lstm_forward(params: LstmParams, inputs: np.ndarray,
                 init_state=None) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray], LstmCache]:
    """Run the LSTM recurrence over a (T, input_dim) sequence.

    Returns the (T, hidden) outputs, the final (h, c) state, and a cache for
    the backward pass. An empty sequence returns empty outputs and the initial
    state unchanged.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != params.input_dim:
        raise ShapeError(f"lstm_forward inputs have shape {inputs.shape}, expected "
                         f"(T, {params.input_dim})")
    T = inputs.shape[0]
    hd = params.hidden_dim
    if init_state is None:
        init_state = (np.zeros(hd), np.zeros(hd))
    h0, c0 = _check_state(init_state, hd, "init")

    w = np.asarray(params.w, dtype=np.float64)
    b = np.asarray(params.b, dtype=np.float64)
    h_all = np.zeros((T + 1, hd))
    c_all = np.zeros((T + 1, hd))
    h_all[0] = h0
    c_all[0] = c0
    gates = np.zeros((T, 4 * hd))
    tanh_c = np.zeros((T, hd))

    w_h = w[params.input_dim:]
    xw = inputs @ w[:params.input_dim] + b  # input projection for all steps
    for t in range(T):
        z = xw[t] + h_all[t] @ w_h
        gates[t, :3 * hd] = sigmoid(z[:3 * hd])
        gates[t, 3 * hd:] = np.tanh(z[3 * hd:])
        i = gates[t, :hd]
        f = gates[t, hd:2 * hd]
        o = gates[t, 2 * hd:3 * hd]
        g = gates[t, 3 * hd:]
        c_all[t + 1] = f * c_all[t] + i * g
        np.tanh(c_all[t + 1], out=tanh_c[t])
        h_all[t + 1] = o * tanh_c[t]

    cache = LstmCache(params=params, inputs=inputs, h_all=h_all, c_all=c_all,
                      gates=gates, tanh_c=tanh_c)
    return h_all[1:], (h_all[T].copy(), c_all[T].copy()), cache


def lstm_step(params: LstmParams, x: np.ndarray, state):
    """Single recurrence step, for incremental decoding. Returns (h, c)."""
    h, c = lstm_step_batch(params, np.asarray(x, dtype=np.float64)[None, :], state)
    return h[0], c[0]


def lstm_step_batch(params: LstmParams, x: np.ndarray, state):
    """One recurrence step over a (B, input_dim) batch of independent states.

    ``state`` is (H, C) with rows per batch element, or None for zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    hd = params.hidden_dim
    if state is None:
        h = np.zeros((x.shape[0], hd))
        c = np.zeros((x.shape[0], hd))
    else:
        h = np.atleast_2d(np.asarray(state[0], dtype=np.float64))
        c = np.atleast_2d(np.asarray(state[1], dtype=np.float64))
    if x.shape[1] != params.input_dim or h.shape[1] != hd or c.shape[1] != hd:
        raise ShapeError(f"lstm_step_batch: inputs {x.shape} with state "
                         f"{h.shape}/{c.shape}, expected widths "
                         f"{params.input_dim}/{hd}")
    w = np.asarray(params.w, dtype=np.float64)
    z = x @ w[:params.input_dim] + h @ w[params.input_dim:] + params.b
    sig = sigmoid(z[:, :3 * hd])
    i = sig[:, :hd]
    f = sig[:, hd:2 * hd]
    o = sig[:, 2 * hd:]
    g = np.tanh(z[:, 3 * hd:])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def lstm_backward(cache: LstmCache, grad_outputs: np.ndarray,
                  grad_final_state=None):
    """Backprop through time over a cached lstm_forward call.

    ``grad_outputs`` is (T, hidden), the loss gradient w.r.t. each h_t.
    Returns (grad_params, grad_inputs, grad_init_state) where grad_params is
    an LstmParams-shaped pair dict {"w": ..., "b": ...}.
    """
    params = cache.params
    hd = params.hidden_dim
    T = cache.inputs.shape[0]
    grad_outputs = np.asarray(grad_outputs, dtype=np.float64)
    if grad_outputs.shape != (T, hd):
        raise ShapeError(f"grad_outputs has shape {grad_outputs.shape}, expected ({T}, {hd})")
    if grad_final_state is None:
        dh_next = np.zeros(hd)
        dc_next = np.zeros(hd)
    else:
        dh_next, dc_next = _check_state(grad_final_state, hd, "grad_final")
        dh_next = dh_next.copy()
        dc_next = dc_next.copy()

    w = np.asarray(params.w, dtype=np.float64)
    w_x = w[:params.input_dim]
    w_h = w[params.input_dim:]
    dz_all = np.zeros((T, 4 * hd))

    for t in range(T - 1, -1, -1):
        i = cache.gates[t, :hd]
        f = cache.gates[t, hd:2 * hd]
        o = cache.gates[t, 2 * hd:3 * hd]
        g = cache.gates[t, 3 * hd:]
        tc = cache.tanh_c[t]

        dh = dh_next + grad_outputs[t]
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dc_next = dc * f

        dz = dz_all[t]
        dz[:hd] = dc * g * i * (1.0 - i)
        dz[hd:2 * hd] = dc * cache.c_all[t] * f * (1.0 - f)
        dz[2 * hd:3 * hd] = do * o * (1.0 - o)
        dz[3 * hd:] = dc * i * (1.0 - g * g)
        dh_next = w_h @ dz

    # Weight and input gradients as whole-sequence matmuls.
    dw = np.empty_like(w)
    dw[:params.input_dim] = cache.inputs.T @ dz_all
    dw[params.input_dim:] = cache.h_all[:T].T @ dz_all
    db = dz_all.sum(axis=0)
    dx = dz_all @ w_x.T
    return {"w": dw, "b": db}, dx, (dh_next, dc_next)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Adam accumulators for a named set of parameter tensors."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = None
    v: dict = None

    def __post_init__(self):
        if self.step < 0:
            raise DomainError("AdamState.step must be >= 0")
        if self.m is None:
            self.m = {}
        if self.v is None:
            self.v = {}


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray]):
    """One bias-corrected Adam update, applied in place to every tensor.

    Moments are created lazily, shaped like each parameter, and kept in the
    parameter's dtype. Returns the same (params, state) pair.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"adam_step: gradient for '{name}' has shape {g.shape}, "
                             f"parameter has {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.beta1 * np.asarray(state.m[name], dtype=np.float64) + (1.0 - state.beta1) * g
        v = state.beta2 * np.asarray(state.v[name], dtype=np.float64) + (1.0 - state.beta2) * (g * g)
        state.m[name] = m.astype(p.dtype)
        state.v[name] = v.astype(p.dtype)
        update = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        p -= update.astype(p.dtype)
    return params, state


# ---------------------------------------------------------------------------
# Dropout
# ---------------------------------------------------------------------------


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability rate, 1/(1-rate) elsewhere."""
    if not 0.0 <= rate < 1.0:
        raise DomainError(f"dropout rate {rate} outside [0, 1)")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


def dropout_apply(x: np.ndarray, rate: float, rng: np.random.Generator,
                  training: bool) -> np.ndarray:
    """Apply dropout in training mode; identity at inference or rate 0."""
    if not 0.0 <= rate < 1.0:
        raise DomainError(f"dropout rate {rate} outside [0, 1)")
    if not training or rate == 0.0:
        return x
    return x * dropout_mask(x.shape, rate, rng)


def uniform_init(rows: int, cols: int, rng: np.random.Generator,
                 dtype=np.float64) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) matrix, fan_in = rows."""
    bound = 1.0 / np.sqrt(rows)
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype)
