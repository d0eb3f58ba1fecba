"""Independent reference computations used as test oracles.

Everything in this file is deliberately written in the most literal style
possible (scalar loops, direct formulas) and never calls into the package
code paths it is used to check.
"""

import math

import numpy as np


def scalar_sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def lstm_reference(w, b, input_dim, inputs, h0, c0):
    """Step-by-step scalar-loop LSTM recurrence.

    w is (input_dim + hidden, 4 * hidden) with gate order i, f, o, g along
    columns; everything is computed one scalar at a time.
    """
    hidden = w.shape[1] // 4
    T = len(inputs)
    h = [float(v) for v in h0]
    c = [float(v) for v in c0]
    outputs = []
    for t in range(T):
        xh = [float(v) for v in inputs[t]] + h
        z = []
        for j in range(4 * hidden):
            acc = float(b[j])
            for k in range(input_dim + hidden):
                acc += xh[k] * float(w[k, j])
            z.append(acc)
        new_c = []
        new_h = []
        for j in range(hidden):
            i_g = scalar_sigmoid(z[j])
            f_g = scalar_sigmoid(z[hidden + j])
            o_g = scalar_sigmoid(z[2 * hidden + j])
            g_g = math.tanh(z[3 * hidden + j])
            cj = f_g * c[j] + i_g * g_g
            new_c.append(cj)
            new_h.append(o_g * math.tanh(cj))
        h, c = new_h, new_c
        outputs.append(list(h))
    return np.array(outputs).reshape(T, hidden), np.array(h), np.array(c)


def central_difference(f, x, eps=1e-5):
    """Central finite differences of scalar f at flat array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + eps
        fp = f(x)
        xf[i] = orig - eps
        fm = f(x)
        xf[i] = orig
        flat[i] = (fp - fm) / (2.0 * eps)
    return grad


def max_relative_error(analytic, numeric, floor):
    """max over entries of |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    assert a.shape == n.shape
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def logsumexp_list(values):
    finite = [v for v in values if v != -math.inf]
    if not finite:
        return -math.inf
    mx = max(finite)
    return mx + math.log(sum(math.exp(v - mx) for v in finite))


def direct_log_softmax(xs):
    """log(exp(x_i) / sum exp) evaluated term by term in 64-bit."""
    total = sum(math.exp(x) for x in xs)
    return [math.log(math.exp(x) / total) for x in xs]
