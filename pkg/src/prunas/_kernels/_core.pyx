# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel core.

Mirrors ``py_ref`` exactly: same signatures, same loop and accumulation
order. Compiled with -ffp-contract=off so results match the pure-Python
backend bit for bit.
"""

from libc.math cimport exp, log, isfinite

ACT_RELU = 0
ACT_SWISH = 1
ACT_SIGMOID = 2


def mm_nn(double[::1] x, double[::1] w, double[::1] out, Py_ssize_t n, Py_ssize_t k, Py_ssize_t m):
    cdef Py_ssize_t i, j, kk, base, xi, wb
    cdef double a
    for i in range(n):
        base = i * m
        for j in range(m):
            out[base + j] = 0.0
        xi = i * k
        for kk in range(k):
            a = x[xi + kk]
            if a == 0.0:
                continue
            wb = kk * m
            for j in range(m):
                out[base + j] += a * w[wb + j]


def mm_nt(double[::1] g, double[::1] w, double[::1] gx, Py_ssize_t n, Py_ssize_t m, Py_ssize_t k):
    cdef Py_ssize_t i, j, kk, gb, xb, wb
    cdef double acc
    for i in range(n):
        gb = i * m
        xb = i * k
        for kk in range(k):
            wb = kk * m
            acc = 0.0
            for j in range(m):
                acc += g[gb + j] * w[wb + j]
            gx[xb + kk] += acc


def mm_tn(double[::1] x, double[::1] g, double[::1] gw, Py_ssize_t n, Py_ssize_t k, Py_ssize_t m):
    cdef Py_ssize_t i, j, kk, wb, gb
    cdef double a
    for kk in range(k):
        wb = kk * m
        for i in range(n):
            a = x[i * k + kk]
            if a == 0.0:
                continue
            gb = i * m
            for j in range(m):
                gw[wb + j] += a * g[gb + j]


def add_bias(double[::1] y, double[::1] b, Py_ssize_t n, Py_ssize_t m):
    cdef Py_ssize_t i, j, base
    for i in range(n):
        base = i * m
        for j in range(m):
            y[base + j] += b[j]


def colsum_acc(double[::1] g, double[::1] gb, Py_ssize_t n, Py_ssize_t m):
    cdef Py_ssize_t i, j, base
    for i in range(n):
        base = i * m
        for j in range(m):
            gb[j] += g[base + j]


def act_fwd(double[::1] x, double[::1] out, Py_ssize_t size, int kind):
    cdef Py_ssize_t i
    cdef double v
    if kind == 0:
        for i in range(size):
            v = x[i]
            out[i] = v if v > 0.0 else 0.0
    elif kind == 1:
        for i in range(size):
            v = x[i]
            out[i] = v / (1.0 + exp(-v))
    else:
        for i in range(size):
            out[i] = 1.0 / (1.0 + exp(-x[i]))


def act_bwd(double[::1] x, double[::1] g, double[::1] gx, Py_ssize_t size, int kind):
    cdef Py_ssize_t i
    cdef double v, s
    if kind == 0:
        for i in range(size):
            if x[i] > 0.0:
                gx[i] += g[i]
    elif kind == 1:
        for i in range(size):
            v = x[i]
            s = 1.0 / (1.0 + exp(-v))
            gx[i] += g[i] * s * (1.0 + v * (1.0 - s))
    else:
        for i in range(size):
            s = 1.0 / (1.0 + exp(-x[i]))
            gx[i] += g[i] * s * (1.0 - s)


def mask_fwd(double[::1] x, double[::1] out, Py_ssize_t n, Py_ssize_t c, Py_ssize_t width):
    cdef Py_ssize_t i, j, base
    for i in range(n):
        base = i * c
        for j in range(width):
            out[base + j] = x[base + j]
        for j in range(width, c):
            out[base + j] = 0.0


def mask_bwd(double[::1] g, double[::1] gx, Py_ssize_t n, Py_ssize_t c, Py_ssize_t width):
    cdef Py_ssize_t i, j, base
    for i in range(n):
        base = i * c
        for j in range(width):
            gx[base + j] += g[base + j]


def axpy(double a, double[::1] x, double[::1] y, Py_ssize_t size):
    cdef Py_ssize_t i
    for i in range(size):
        y[i] += a * x[i]


def dot(double[::1] x, double[::1] y, Py_ssize_t size):
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(size):
        acc += x[i] * y[i]
    return acc


def softmax_ce_fwd(double[::1] logits, long long[::1] labels, double[::1] probs, Py_ssize_t n, Py_ssize_t c):
    cdef Py_ssize_t i, j, base
    cdef double mx, z, e, total = 0.0
    for i in range(n):
        base = i * c
        mx = logits[base]
        for j in range(1, c):
            if logits[base + j] > mx:
                mx = logits[base + j]
        z = 0.0
        for j in range(c):
            e = exp(logits[base + j] - mx)
            probs[base + j] = e
            z += e
        for j in range(c):
            probs[base + j] /= z
        total += log(z) - (logits[base + labels[i]] - mx)
    return total / n


def softmax_ce_bwd(double[::1] probs, long long[::1] labels, double gscale, double[::1] glogits, Py_ssize_t n, Py_ssize_t c):
    cdef Py_ssize_t i, j, base, y
    cdef double inv = gscale / n
    cdef double d
    for i in range(n):
        base = i * c
        y = labels[i]
        for j in range(c):
            d = probs[base + j]
            if j == y:
                d -= 1.0
            glogits[base + j] += inv * d


def se_fwd(double[::1] h, double[::1] w, double[::1] b, double[::1] out, double[::1] gate,
           double[::1] mu, Py_ssize_t n, Py_ssize_t hid, Py_ssize_t width):
    cdef Py_ssize_t i, j, base
    cdef double inv = 1.0 / width
    cdef double acc, m, s
    for i in range(n):
        base = i * hid
        acc = 0.0
        for j in range(width):
            acc += h[base + j]
        m = acc * inv
        mu[i] = m
        for j in range(width):
            s = 1.0 / (1.0 + exp(-(w[j] * m + b[j])))
            gate[base + j] = s
            out[base + j] = h[base + j] * s
        for j in range(width, hid):
            gate[base + j] = 0.0
            out[base + j] = 0.0


def se_bwd(double[::1] h, double[::1] w, double[::1] gate, double[::1] mu, double[::1] g,
           double[::1] gh, double[::1] gw, double[::1] gb, Py_ssize_t n, Py_ssize_t hid, Py_ssize_t width):
    cdef Py_ssize_t i, j, base
    cdef double inv = 1.0 / width
    cdef double m, s, common, dmu
    for i in range(n):
        base = i * hid
        m = mu[i]
        dmu = 0.0
        for j in range(width):
            s = gate[base + j]
            common = g[base + j] * h[base + j] * s * (1.0 - s)
            gh[base + j] += g[base + j] * s
            dmu += common * w[j]
            gw[j] += common * m
            gb[j] += common
        dmu *= inv
        for j in range(width):
            gh[base + j] += dmu


def all_finite(double[::1] x, Py_ssize_t size):
    cdef Py_ssize_t i
    for i in range(size):
        if not isfinite(x[i]):
            return False
    return True
