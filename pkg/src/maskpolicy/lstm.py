"""LSTM cell and bidirectional layer on the autodiff tape.

Gate layout inside the fused weight matrix is fixed as rows
[input, forget, candidate, output], each block of `hidden` rows:

    z = W @ [x; h] + b
    i = sigmoid(z[0:H])     f = sigmoid(z[H:2H])
    g = tanh(z[2H:3H])      o = sigmoid(z[3H:4H])
    c' = f * c + i * g      h' = o * tanh(c')

The cell is a single tape op with a hand-derived backward rather than a
chain of primitives: one recurrent step would otherwise cost ~16 graph
nodes, which dominates training and gradient-check time. The packed
output [h'; c'] is one node; h' and c' are narrow views of it, so
downstream gradients of both accumulate into the same backward call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, _wrap, concat, narrow
from .errors import ShapeMismatchError


@dataclass
class LstmCellParams:
    W: Tensor  # (4*hidden, input_size + hidden)
    b: Tensor  # (4*hidden,)

    @property
    def hidden_size(self) -> int:
        return self.W.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.W.shape[1] - self.hidden_size

    def named(self, prefix: str):
        return [(f"{prefix}.W", self.W), (f"{prefix}.b", self.b)]


def init_lstm_params(rng: np.random.Generator, input_size: int, hidden_size: int) -> LstmCellParams:
    """Weights uniform in +-1/sqrt(input+hidden); biases zero."""
    bound = 1.0 / float(np.sqrt(input_size + hidden_size))
    W = Tensor(rng.uniform(-bound, bound, size=(4 * hidden_size, input_size + hidden_size)),
               requires_grad=True)
    b = Tensor(np.zeros(4 * hidden_size), requires_grad=True)
    return LstmCellParams(W=W, b=b)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # exp(-log(1+exp(-z))) is stable for both signs of z.
    return np.exp(-np.logaddexp(0.0, -z))


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, params: LstmCellParams) -> tuple[Tensor, Tensor]:
    """One step: (x_t, h_{t-1}, c_{t-1}) -> (h_t, c_t)."""
    hid = params.hidden_size
    if x.ndim != 1 or h.shape != (hid,) or c.shape != (hid,):
        raise ShapeMismatchError("lstm_cell(x,h,c)", x.shape, h.shape, c.shape)
    if x.size != params.input_size:
        raise ShapeMismatchError("lstm_cell(x vs W)", x.shape, params.W.shape)

    W, b = params.W, params.b
    xh = np.concatenate([x.data, h.data])
    z = W.data @ xh + b.data
    i_gate = _sigmoid(z[0:hid])
    f_gate = _sigmoid(z[hid:2 * hid])
    g_cand = np.tanh(z[2 * hid:3 * hid])
    o_gate = _sigmoid(z[3 * hid:4 * hid])
    c_next = f_gate * c.data + i_gate * g_cand
    t_next = np.tanh(c_next)
    h_next = o_gate * t_next

    n_in = x.size

    def backward(grad):
        # grad packs [dL/dh', dL/dc'] for the two views below.
        dh = grad[:hid]
        dc_total = grad[hid:] + dh * o_gate * (1.0 - t_next * t_next)
        d_o = dh * t_next
        d_f = dc_total * c.data
        d_i = dc_total * g_cand
        d_g = dc_total * i_gate
        dz = np.concatenate([
            d_i * i_gate * (1.0 - i_gate),
            d_f * f_gate * (1.0 - f_gate),
            d_g * (1.0 - g_cand * g_cand),
            d_o * o_gate * (1.0 - o_gate),
        ])
        dxh = W.data.T @ dz
        return (dxh[:n_in], dxh[n_in:], dc_total * f_gate,
                np.outer(dz, xh), dz)

    pair = _wrap(np.concatenate([h_next, c_next]), (x, h, c, W, b), backward)
    return narrow(pair, 0, hid), narrow(pair, hid, hid)


def run_lstm(xs: list[Tensor], params: LstmCellParams, reverse: bool = False) -> list[Tensor]:
    """Unroll one direction over a sequence; returns hidden state per position."""
    hid = params.hidden_size
    h = Tensor(np.zeros(hid))
    c = Tensor(np.zeros(hid))
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    out: list[Tensor | None] = [None] * len(xs)
    for t in order:
        h, c = lstm_cell(xs[t], h, c, params)
        out[t] = h
    return out  # type: ignore[return-value]


def run_bilstm_layer(xs: list[Tensor], fwd: LstmCellParams, bwd: LstmCellParams) -> list[Tensor]:
    """Bidirectional layer: per position, concat of forward and backward states."""
    hf = run_lstm(xs, fwd, reverse=False)
    hb = run_lstm(xs, bwd, reverse=True)
    return [concat([f, b]) for f, b in zip(hf, hb)]
