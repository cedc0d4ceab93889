"""Pure-numpy batched GRU kernels (fallback when the extension is unavailable).

Same call signatures as the compiled ``_kernels`` module:

    forward_batch(tensors, windows) -> (B, O) predictions
    loss_and_grad_batch(tensors, windows, targets) -> (per-sample losses, grads)

``tensors`` is the parameter tuple in ``PARAM_NAMES`` order; the returned
gradients are batch means, in the same order.
"""

import numpy as np


def _sigmoid(a):
    return 1.0 / (1.0 + np.exp(-a))


def _forward(tensors, windows):
    Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh, Wo, bo = tensors
    B, L, _ = windows.shape
    h = np.zeros((B, Wz.shape[0]))
    cache = []
    for t in range(L):
        x = windows[:, t, :]
        z = _sigmoid(x @ Wz.T + h @ Uz.T + bz)
        r = _sigmoid(x @ Wr.T + h @ Ur.T + br)
        c = np.tanh(x @ Wh.T + (r * h) @ Uh.T + bh)
        cache.append((x, h, z, r, c))
        h = (1.0 - z) * h + z * c
    return h @ Wo.T + bo, h, cache


def forward_batch(tensors, windows):
    windows = np.asarray(windows, dtype=np.float64)
    return _forward(tensors, windows)[0]


def loss_and_grad_batch(tensors, windows, targets):
    windows = np.asarray(windows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh, Wo, bo = tensors
    B = len(windows)
    pred, h_last, cache = _forward(tensors, windows)
    diff = pred - targets
    losses = np.mean(diff * diff, axis=1)

    d_pred = (2.0 / pred.shape[1]) * diff
    gWz, gUz, gbz = np.zeros_like(Wz), np.zeros_like(Uz), np.zeros_like(bz)
    gWr, gUr, gbr = np.zeros_like(Wr), np.zeros_like(Ur), np.zeros_like(br)
    gWh, gUh, gbh = np.zeros_like(Wh), np.zeros_like(Uh), np.zeros_like(bh)
    gWo = d_pred.T @ h_last
    gbo = d_pred.sum(axis=0)
    dh = d_pred @ Wo

    for x, h_prev, z, r, c in reversed(cache):
        da_h = dh * z * (1.0 - c * c)
        da_z = dh * (c - h_prev) * z * (1.0 - z)
        dh_prev = dh * (1.0 - z)

        d_rh = da_h @ Uh
        da_r = d_rh * h_prev * r * (1.0 - r)
        dh_prev += d_rh * r + da_z @ Uz + da_r @ Ur

        gWh += da_h.T @ x
        gUh += da_h.T @ (r * h_prev)
        gbh += da_h.sum(axis=0)
        gWz += da_z.T @ x
        gUz += da_z.T @ h_prev
        gbz += da_z.sum(axis=0)
        gWr += da_r.T @ x
        gUr += da_r.T @ h_prev
        gbr += da_r.sum(axis=0)
        dh = dh_prev

    grads = (gWz, gUz, gbz, gWr, gUr, gbr, gWh, gUh, gbh, gWo, gbo)
    return losses, tuple(g / B for g in grads)
