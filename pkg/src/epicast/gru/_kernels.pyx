# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batched GRU kernels.

Mirrors ``_kernels_py``: same signatures, same parameter order.  Samples are
processed one at a time in index order and their gradients accumulated in
that order, so results are reproducible bit-for-bit.

Every inner loop walks a contiguous row and updates independent outputs
(no scalar reductions), which lets the C compiler vectorize it without
reassociating floating-point sums.  The forward pass therefore uses the
transposed recurrent matrices.
"""

import numpy as np
from libc.string cimport memset

cdef extern from *:
    """
    #include <math.h>
    #include <stdint.h>
    #include <string.h>

    /* exp() with Cody-Waite reduction and a degree-13 Taylor polynomial on
       |r| <= ln2/2 (truncation error < 1e-17 relative).  Branch-free so the
       elementwise loops below vectorize; no libm calls. */
    static inline double ek_exp(double x) {
        double kf, r, p, scale;
        int64_t bits;
        x = x < -708.0 ? -708.0 : x;
        x = x > 709.0 ? 709.0 : x;
        kf = floor(x * 1.4426950408889634 + 0.5);
        r = x - kf * 6.93147180369123816490e-01 - kf * 1.90821492927058770002e-10;
        p = 1.6059043836821613e-10;
        p = p * r + 2.08767569878681e-09;
        p = p * r + 2.505210838544172e-08;
        p = p * r + 2.755731922398589e-07;
        p = p * r + 2.7557319223985893e-06;
        p = p * r + 2.48015873015873e-05;
        p = p * r + 1.984126984126984e-04;
        p = p * r + 1.388888888888889e-03;
        p = p * r + 8.333333333333333e-03;
        p = p * r + 4.1666666666666664e-02;
        p = p * r + 1.6666666666666666e-01;
        p = p * r + 0.5;
        p = p * r + 1.0;
        p = p * r + 1.0;
        bits = ((int64_t)kf + 1023) << 52;
        memcpy(&scale, &bits, sizeof scale);
        return p * scale;
    }

    static void ek_sigmoid_inplace(double *a, Py_ssize_t n) {
        Py_ssize_t i;
        for (i = 0; i < n; i++) a[i] = 1.0 / (1.0 + ek_exp(-a[i]));
    }

    /* tanh(a) = sign(a) (1 - e) / (1 + e), e = exp(-2|a|); absolute error ~1e-16. */
    static void ek_tanh_inplace(double *a, Py_ssize_t n) {
        Py_ssize_t i;
        for (i = 0; i < n; i++) {
            double e = ek_exp(-2.0 * fabs(a[i]));
            a[i] = copysign((1.0 - e) / (1.0 + e), a[i]);
        }
    }
    """
    double ek_exp(double x) noexcept nogil
    void ek_sigmoid_inplace(double* a, Py_ssize_t n) noexcept nogil
    void ek_tanh_inplace(double* a, Py_ssize_t n) noexcept nogil


cdef struct Net:
    Py_ssize_t I, H, O
    const double* Wz
    const double* Wr
    const double* Wh
    const double* UzT
    const double* UrT
    const double* UhT
    const double* Uz
    const double* Ur
    const double* Uh
    const double* bz
    const double* br
    const double* bh
    const double* Wo
    const double* bo


cdef void _forward(Net* n, const double* xs, Py_ssize_t L,
                   double* Z, double* R, double* C, double* Hs, double* rh) noexcept nogil:
    # Z, R, C are (L, H); Hs is (L+1, H) with Hs[0] the zero initial state.
    # Pointers are copied to locals: extensions build with -fno-strict-aliasing,
    # so struct fields would otherwise be reloaded on every store.
    cdef Py_ssize_t I = n.I, H = n.H
    cdef const double* Wz = n.Wz
    cdef const double* Wr = n.Wr
    cdef const double* Wh = n.Wh
    cdef const double* UzT = n.UzT
    cdef const double* UrT = n.UrT
    cdef const double* UhT = n.UhT
    cdef const double* bz = n.bz
    cdef const double* br = n.br
    cdef const double* bh = n.bh
    cdef Py_ssize_t t, i, j
    cdef const double* x
    cdef const double* hp
    cdef const double* w
    cdef double* z
    cdef double* r
    cdef double* c
    cdef double* hn
    cdef double v

    memset(Hs, 0, H * sizeof(double))
    for t in range(L):
        x = xs + t * I
        hp = Hs + t * H
        z = Z + t * H
        r = R + t * H
        c = C + t * H
        hn = Hs + (t + 1) * H
        for i in range(H):
            z[i] = bz[i]
        for i in range(H):
            r[i] = br[i]
        for i in range(H):
            c[i] = bh[i]
        for i in range(H):
            for j in range(I):
                v = x[j]
                z[i] += Wz[i * I + j] * v
                r[i] += Wr[i * I + j] * v
                c[i] += Wh[i * I + j] * v
        for j in range(H):
            v = hp[j]
            w = UzT + j * H
            for i in range(H):
                z[i] += w[i] * v
        for j in range(H):
            v = hp[j]
            w = UrT + j * H
            for i in range(H):
                r[i] += w[i] * v
        ek_sigmoid_inplace(z, H)
        ek_sigmoid_inplace(r, H)
        for i in range(H):
            rh[i] = r[i] * hp[i]
        for j in range(H):
            v = rh[j]
            w = UhT + j * H
            for i in range(H):
                c[i] += w[i] * v
        ek_tanh_inplace(c, H)
        for i in range(H):
            hn[i] = (1.0 - z[i]) * hp[i] + z[i] * c[i]


cdef void _head(Net* n, const double* h, double* out) noexcept nogil:
    cdef Py_ssize_t o, j
    cdef double acc
    for o in range(n.O):
        acc = n.bo[o]
        for j in range(n.H):
            acc += n.Wo[o * n.H + j] * h[j]
        out[o] = acc


cdef class _Packed:
    # Keeps contiguous copies alive while raw pointers into them are used.
    cdef Net net
    cdef object keep

    def __init__(self, tuple tensors):
        Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh, Wo, bo = [
            np.ascontiguousarray(a, dtype=np.float64) for a in tensors
        ]
        UzT, UrT, UhT = [np.ascontiguousarray(a.T) for a in (Uz, Ur, Uh)]
        self.keep = (Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh, Wo, bo, UzT, UrT, UhT)
        self.net.H = Wz.shape[0]
        self.net.I = Wz.shape[1]
        self.net.O = Wo.shape[0]
        self.net.Wz = _ptr(Wz); self.net.Wr = _ptr(Wr); self.net.Wh = _ptr(Wh)
        self.net.Uz = _ptr(Uz); self.net.Ur = _ptr(Ur); self.net.Uh = _ptr(Uh)
        self.net.UzT = _ptr(UzT); self.net.UrT = _ptr(UrT); self.net.UhT = _ptr(UhT)
        self.net.bz = _ptr(bz); self.net.br = _ptr(br); self.net.bh = _ptr(bh)
        self.net.Wo = _ptr(Wo); self.net.bo = _ptr(bo)


cdef const double* _ptr(arr):
    cdef const double[::1] flat = arr.reshape(-1)
    return &flat[0]


cdef double* _wptr(arr):
    cdef double[::1] flat = arr.reshape(-1)
    return &flat[0]


def forward_batch(tuple tensors, windows):
    cdef _Packed pk = _Packed(tensors)
    cdef Net* n = &pk.net
    win = np.ascontiguousarray(windows, dtype=np.float64)
    if win.ndim != 3 or win.shape[2] != n.I:
        raise ValueError(f"windows must be (B, L, {n.I}), got {win.shape}")
    cdef Py_ssize_t B = win.shape[0], L = win.shape[1], H = n.H, b
    out = np.empty((B, n.O))
    if B == 0:
        return out
    buf = np.empty(3 * L * H + (L + 1) * H + H)
    cdef double* Z = _wptr(buf)
    cdef double* R = Z + L * H
    cdef double* C = R + L * H
    cdef double* Hs = C + L * H
    cdef double* rh = Hs + (L + 1) * H
    cdef const double* xs = _ptr(win)
    cdef double* po = _wptr(out)

    for b in range(B):
        _forward(n, xs + b * L * n.I, L, Z, R, C, Hs, rh)
        _head(n, Hs + L * H, po + b * n.O)
    return out


def loss_and_grad_batch(tuple tensors, windows, targets):
    cdef _Packed pk = _Packed(tensors)
    cdef Net* n = &pk.net
    win = np.ascontiguousarray(windows, dtype=np.float64)
    tgt = np.ascontiguousarray(targets, dtype=np.float64)
    if win.ndim != 3 or win.shape[2] != n.I or tgt.shape != (win.shape[0], n.O):
        raise ValueError("windows/targets shapes do not match the parameters")
    cdef Py_ssize_t B = win.shape[0], L = win.shape[1], I = n.I, H = n.H, O = n.O
    cdef Py_ssize_t b, t, i, j, o
    cdef double d, loss, z, c, hp, r, g, inv_o = 1.0 / O

    buf = np.empty(3 * L * H + (L + 1) * H + 8 * H + O)
    cdef double* Z = _wptr(buf)
    cdef double* R = Z + L * H
    cdef double* C = R + L * H
    cdef double* Hs = C + L * H
    cdef double* rh = Hs + (L + 1) * H
    cdef double* dh = rh + H
    cdef double* dhp = dh + H
    cdef double* drh = dhp + H
    cdef double* dah = drh + H
    cdef double* daz = dah + H
    cdef double* dar = daz + H
    cdef double* hr = dar + H
    cdef double* pred = hr + H

    grads = tuple(np.zeros(np.shape(a)) for a in tensors)
    cdef double* gWz = _wptr(grads[0])
    cdef double* gUz = _wptr(grads[1])
    cdef double* gbz = _wptr(grads[2])
    cdef double* gWr = _wptr(grads[3])
    cdef double* gUr = _wptr(grads[4])
    cdef double* gbr = _wptr(grads[5])
    cdef double* gWh = _wptr(grads[6])
    cdef double* gUh = _wptr(grads[7])
    cdef double* gbh = _wptr(grads[8])
    cdef double* gWo = _wptr(grads[9])
    cdef double* gbo = _wptr(grads[10])
    losses = np.empty(B)
    cdef double* pl = _wptr(losses)
    if B == 0:
        return losses, grads
    cdef const double* pwin = _ptr(win)
    cdef const double* ptgt = _ptr(tgt)
    cdef const double* xs
    cdef const double* x
    cdef const double* h_prev
    cdef const double* row
    cdef const double* row2

    for b in range(B):
        xs = pwin + b * L * I
        _forward(n, xs, L, Z, R, C, Hs, rh)
        _head(n, Hs + L * H, pred)

        loss = 0.0
        for o in range(O):
            d = pred[o] - ptgt[b * O + o]
            loss += d * d
            pred[o] = 2.0 * inv_o * d  # reuse as d loss / d prediction
        pl[b] = loss * inv_o

        memset(dh, 0, H * sizeof(double))
        for o in range(O):
            g = pred[o]
            gbo[o] += g
            row = n.Wo + o * H
            for j in range(H):
                gWo[o * H + j] += g * Hs[L * H + j]
                dh[j] += row[j] * g

        for t in range(L - 1, -1, -1):
            x = xs + t * I
            h_prev = Hs + t * H
            for i in range(H):
                z = Z[t * H + i]
                c = C[t * H + i]
                hp = h_prev[i]
                dah[i] = dh[i] * z * (1.0 - c * c)
                daz[i] = dh[i] * (c - hp) * z * (1.0 - z)
                dhp[i] = dh[i] * (1.0 - z)
                drh[i] = 0.0
                hr[i] = R[t * H + i] * hp
            for i in range(H):
                g = dah[i]
                row = n.Uh + i * H
                for j in range(H):
                    drh[j] += row[j] * g
            for j in range(H):
                r = R[t * H + j]
                dar[j] = drh[j] * h_prev[j] * r * (1.0 - r)
                dhp[j] += drh[j] * r
            for i in range(H):
                gbh[i] += dah[i]
                gbz[i] += daz[i]
                gbr[i] += dar[i]
                for j in range(I):
                    gWh[i * I + j] += dah[i] * x[j]
                    gWz[i * I + j] += daz[i] * x[j]
                    gWr[i * I + j] += dar[i] * x[j]
            for i in range(H):
                g = dah[i]
                for j in range(H):
                    gUh[i * H + j] += g * hr[j]
                g = daz[i]
                for j in range(H):
                    gUz[i * H + j] += g * h_prev[j]
                g = dar[i]
                for j in range(H):
                    gUr[i * H + j] += g * h_prev[j]
                row = n.Uz + i * H
                row2 = n.Ur + i * H
                z = daz[i]
                r = dar[i]
                for j in range(H):
                    dhp[j] += row[j] * z + row2[j] * r
            for j in range(H):
                dh[j] = dhp[j]

    for arr in grads:
        arr /= B
    return losses, grads
