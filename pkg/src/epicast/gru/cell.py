"""Reference single-window GRU math (forward, loss, backprop through time).

These functions favour readability over speed; training goes through the
batched kernels in :mod:`epicast.gru.kernels`, which are checked against
this module.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError
from .params import PARAM_NAMES, GruParams


def sigmoid(a):
    return 1.0 / (1.0 + np.exp(-a))


def cell_forward(x, h_prev, params: GruParams) -> np.ndarray:
    z = sigmoid(params.W_z @ x + params.U_z @ h_prev + params.b_z)
    r = sigmoid(params.W_r @ x + params.U_r @ h_prev + params.b_r)
    h_cand = np.tanh(params.W_h @ x + params.U_h @ (r * h_prev) + params.b_h)
    return (1.0 - z) * h_prev + z * h_cand


def _check_window(window, params: GruParams) -> np.ndarray:
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2 or window.shape[1] != params.input_size or len(window) < 1:
        raise ShapeMismatchError(
            f"window must be (L, {params.input_size}) with L >= 1, got {window.shape}"
        )
    return window


def forward_window(window, params: GruParams) -> np.ndarray:
    window = _check_window(window, params)
    h = np.zeros(params.hidden_size)
    for x in window:
        h = cell_forward(x, h, params)
    return params.W_o @ h + params.b_o


def loss_mse(prediction, target) -> float:
    diff = np.asarray(prediction, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(diff * diff))


def backprop_window(window, target, params: GruParams) -> dict[str, np.ndarray]:
    """Exact gradients of ``loss_mse(forward_window(window), target)``."""
    window = _check_window(window, params)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (params.output_size,):
        raise ShapeMismatchError(f"target must have shape ({params.output_size},)")

    p = params
    hs = [np.zeros(p.hidden_size)]
    cache = []
    for x in window:
        h_prev = hs[-1]
        z = sigmoid(p.W_z @ x + p.U_z @ h_prev + p.b_z)
        r = sigmoid(p.W_r @ x + p.U_r @ h_prev + p.b_r)
        c = np.tanh(p.W_h @ x + p.U_h @ (r * h_prev) + p.b_h)
        hs.append((1.0 - z) * h_prev + z * c)
        cache.append((x, h_prev, z, r, c))

    pred = p.W_o @ hs[-1] + p.b_o
    d_pred = (2.0 / len(pred)) * (pred - target)

    g = {name: np.zeros_like(getattr(p, name)) for name in PARAM_NAMES}
    g["W_o"] = np.outer(d_pred, hs[-1])
    g["b_o"] = d_pred.copy()
    dh = p.W_o.T @ d_pred

    for x, h_prev, z, r, c in reversed(cache):
        dc = dh * z
        dz = dh * (c - h_prev)
        dh_prev = dh * (1.0 - z)

        da_h = dc * (1.0 - c * c)
        g["W_h"] += np.outer(da_h, x)
        g["U_h"] += np.outer(da_h, r * h_prev)
        g["b_h"] += da_h
        d_rh = p.U_h.T @ da_h
        dr = d_rh * h_prev
        dh_prev += d_rh * r

        da_z = dz * z * (1.0 - z)
        g["W_z"] += np.outer(da_z, x)
        g["U_z"] += np.outer(da_z, h_prev)
        g["b_z"] += da_z
        dh_prev += p.U_z.T @ da_z

        da_r = dr * r * (1.0 - r)
        g["W_r"] += np.outer(da_r, x)
        g["U_r"] += np.outer(da_r, h_prev)
        g["b_r"] += da_r
        dh_prev += p.U_r.T @ da_r

        dh = dh_prev
    return g
