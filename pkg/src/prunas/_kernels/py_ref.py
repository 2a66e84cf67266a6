"""Pure-Python reference kernels.

Every function here has a compiled twin in ``_core.pyx`` with identical
loop and accumulation order, so both backends produce the same floating
point results (the extension is built with FP contraction disabled).
Buffers are flat row-major float buffers (``array('d')``); label buffers
are ``array('q')``. Forward kernels overwrite their output, backward
kernels accumulate into the gradient buffer.
"""

from __future__ import annotations

import math

ACT_RELU = 0
ACT_SWISH = 1
ACT_SIGMOID = 2


def mm_nn(x, w, out, n, k, m):
    """out[n,m] = x[n,k] @ w[k,m] (out is zeroed first)."""
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


def mm_nt(g, w, gx, n, m, k):
    """gx[n,k] += g[n,m] @ w[k,m]^T."""
    for i in range(n):
        gb = i * m
        xb = i * k
        for kk in range(k):
            wb = kk * m
            acc = 0.0
            for j in range(m):
                acc += g[gb + j] * w[wb + j]
            gx[xb + kk] += acc


def mm_tn(x, g, gw, n, k, m):
    """gw[k,m] += x[n,k]^T @ g[n,m]."""
    for kk in range(k):
        wb = kk * m
        for i in range(n):
            a = x[i * k + kk]
            if a == 0.0:
                continue
            gb = i * m
            for j in range(m):
                gw[wb + j] += a * g[gb + j]


def add_bias(y, b, n, m):
    """y[i,j] += b[j] in place."""
    for i in range(n):
        base = i * m
        for j in range(m):
            y[base + j] += b[j]


def colsum_acc(g, gb, n, m):
    """gb[j] += sum_i g[i,j]."""
    for i in range(n):
        base = i * m
        for j in range(m):
            gb[j] += g[base + j]


def act_fwd(x, out, size, kind):
    if kind == ACT_RELU:
        for i in range(size):
            v = x[i]
            out[i] = v if v > 0.0 else 0.0
    elif kind == ACT_SWISH:
        for i in range(size):
            v = x[i]
            out[i] = v / (1.0 + math.exp(-v))
    else:
        for i in range(size):
            out[i] = 1.0 / (1.0 + math.exp(-x[i]))


def act_bwd(x, g, gx, size, kind):
    if kind == ACT_RELU:
        for i in range(size):
            if x[i] > 0.0:
                gx[i] += g[i]
    elif kind == ACT_SWISH:
        for i in range(size):
            v = x[i]
            s = 1.0 / (1.0 + math.exp(-v))
            gx[i] += g[i] * s * (1.0 + v * (1.0 - s))
    else:
        for i in range(size):
            s = 1.0 / (1.0 + math.exp(-x[i]))
            gx[i] += g[i] * s * (1.0 - s)


def mask_fwd(x, out, n, c, width):
    """Columns < width copied, the rest exactly zero."""
    for i in range(n):
        base = i * c
        for j in range(width):
            out[base + j] = x[base + j]
        for j in range(width, c):
            out[base + j] = 0.0


def mask_bwd(g, gx, n, c, width):
    for i in range(n):
        base = i * c
        for j in range(width):
            gx[base + j] += g[base + j]


def axpy(a, x, y, size):
    """y += a * x."""
    for i in range(size):
        y[i] += a * x[i]


def dot(x, y, size):
    acc = 0.0
    for i in range(size):
        acc += x[i] * y[i]
    return acc


def softmax_ce_fwd(logits, labels, probs, n, c):
    """Mean negative log-likelihood; row-stabilized softmax stored in probs."""
    total = 0.0
    for i in range(n):
        base = i * c
        mx = logits[base]
        for j in range(1, c):
            if logits[base + j] > mx:
                mx = logits[base + j]
        z = 0.0
        for j in range(c):
            e = math.exp(logits[base + j] - mx)
            probs[base + j] = e
            z += e
        for j in range(c):
            probs[base + j] /= z
        total += math.log(z) - (logits[base + labels[i]] - mx)
    return total / n


def softmax_ce_bwd(probs, labels, gscale, glogits, n, c):
    inv = gscale / n
    for i in range(n):
        base = i * c
        y = labels[i]
        for j in range(c):
            d = probs[base + j]
            if j == y:
                d -= 1.0
            glogits[base + j] += inv * d


def se_fwd(h, w, b, out, gate, mu, n, hid, width):
    """Mean-of-active-lanes sigmoid gate; inactive lanes are zeroed."""
    inv = 1.0 / width
    for i in range(n):
        base = i * hid
        acc = 0.0
        for j in range(width):
            acc += h[base + j]
        m = acc * inv
        mu[i] = m
        for j in range(width):
            s = 1.0 / (1.0 + math.exp(-(w[j] * m + b[j])))
            gate[base + j] = s
            out[base + j] = h[base + j] * s
        for j in range(width, hid):
            gate[base + j] = 0.0
            out[base + j] = 0.0


def se_bwd(h, w, gate, mu, g, gh, gw, gb, n, hid, width):
    inv = 1.0 / width
    for i in range(n):
        base = i * hid
        m = mu[i]
        # dL/dmu accumulated over lanes, then spread through the mean.
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


def all_finite(x, size):
    for i in range(size):
        if not math.isfinite(x[i]):
            return False
    return True
