"""Backend parity: the compiled core must match the pure-Python kernels."""

from __future__ import annotations

import math
import random
from array import array

import pytest

from prunas._kernels import BACKEND, py_ref

try:
    from prunas._kernels import _core
except ImportError:
    _core = None

needs_core = pytest.mark.skipif(_core is None, reason="compiled kernels not built")


def rnd(rng, n):
    return array("d", [rng.gauss(0.0, 1.0) for _ in range(n)])


def zeros(n):
    return array("d", bytes(8 * n))


@needs_core
class TestParity:
    """Same loop order + contraction disabled => results agree bit for bit."""

    def setup_method(self):
        self.rng = random.Random(0xC0FFEE)

    def _pair(self, fn_name, *build):
        args_py = build[0]()
        args_c = build[0]()
        getattr(py_ref, fn_name)(*args_py)
        getattr(_core, fn_name)(*args_c)
        return args_py, args_c

    def test_mm_nn(self):
        n, k, m = 5, 7, 4
        x, w = rnd(self.rng, n * k), rnd(self.rng, k * m)
        p, c = zeros(n * m), zeros(n * m)
        py_ref.mm_nn(x, w, p, n, k, m)
        _core.mm_nn(x, w, c, n, k, m)
        assert bytes(p) == bytes(c)

    def test_mm_nt_and_tn(self):
        n, k, m = 4, 6, 3
        g, w, x = rnd(self.rng, n * m), rnd(self.rng, k * m), rnd(self.rng, n * k)
        p1, c1 = rnd(self.rng, n * k), None
        c1 = array("d", p1)
        py_ref.mm_nt(g, w, p1, n, m, k)
        _core.mm_nt(g, w, c1, n, m, k)
        assert bytes(p1) == bytes(c1)
        p2 = rnd(self.rng, k * m)
        c2 = array("d", p2)
        py_ref.mm_tn(x, g, p2, n, k, m)
        _core.mm_tn(x, g, c2, n, k, m)
        assert bytes(p2) == bytes(c2)

    def test_bias_and_colsum(self):
        n, m = 6, 5
        y, b = rnd(self.rng, n * m), rnd(self.rng, m)
        yc = array("d", y)
        py_ref.add_bias(y, b, n, m)
        _core.add_bias(yc, b, n, m)
        assert bytes(y) == bytes(yc)
        g = rnd(self.rng, n * m)
        a1, a2 = zeros(m), zeros(m)
        py_ref.colsum_acc(g, a1, n, m)
        _core.colsum_acc(g, a2, n, m)
        assert bytes(a1) == bytes(a2)

    @pytest.mark.parametrize("kind", [0, 1, 2])
    def test_activations(self, kind):
        x = rnd(self.rng, 64)
        o1, o2 = zeros(64), zeros(64)
        py_ref.act_fwd(x, o1, 64, kind)
        _core.act_fwd(x, o2, 64, kind)
        assert bytes(o1) == bytes(o2)
        g = rnd(self.rng, 64)
        g1, g2 = zeros(64), zeros(64)
        py_ref.act_bwd(x, g, g1, 64, kind)
        _core.act_bwd(x, g, g2, 64, kind)
        assert bytes(g1) == bytes(g2)

    def test_mask(self):
        n, c, w = 3, 8, 5
        x = rnd(self.rng, n * c)
        o1, o2 = zeros(n * c), zeros(n * c)
        py_ref.mask_fwd(x, o1, n, c, w)
        _core.mask_fwd(x, o2, n, c, w)
        assert bytes(o1) == bytes(o2)

    def test_axpy_dot(self):
        x, y = rnd(self.rng, 32), rnd(self.rng, 32)
        y2 = array("d", y)
        py_ref.axpy(0.37, x, y, 32)
        _core.axpy(0.37, x, y2, 32)
        assert bytes(y) == bytes(y2)
        assert py_ref.dot(x, y, 32) == _core.dot(x, y, 32)

    def test_softmax_ce(self):
        n, c = 4, 5
        logits = rnd(self.rng, n * c)
        labels = array("q", [self.rng.randrange(c) for _ in range(n)])
        p1, p2 = zeros(n * c), zeros(n * c)
        l1 = py_ref.softmax_ce_fwd(logits, labels, p1, n, c)
        l2 = _core.softmax_ce_fwd(logits, labels, p2, n, c)
        assert l1 == pytest.approx(l2, rel=1e-15)
        assert bytes(p1) == bytes(p2)
        g1, g2 = zeros(n * c), zeros(n * c)
        py_ref.softmax_ce_bwd(p1, labels, 1.0, g1, n, c)
        _core.softmax_ce_bwd(p2, labels, 1.0, g2, n, c)
        assert bytes(g1) == bytes(g2)

    def test_se_gate(self):
        n, hid, width = 3, 8, 5
        h, w, b = rnd(self.rng, n * hid), rnd(self.rng, hid), rnd(self.rng, hid)
        o1, g1, m1 = zeros(n * hid), zeros(n * hid), zeros(n)
        o2, g2, m2 = zeros(n * hid), zeros(n * hid), zeros(n)
        py_ref.se_fwd(h, w, b, o1, g1, m1, n, hid, width)
        _core.se_fwd(h, w, b, o2, g2, m2, n, hid, width)
        assert bytes(o1) == bytes(o2) and bytes(g1) == bytes(g2)
        up = rnd(self.rng, n * hid)
        gh1, gw1, gb1 = zeros(n * hid), zeros(hid), zeros(hid)
        gh2, gw2, gb2 = zeros(n * hid), zeros(hid), zeros(hid)
        py_ref.se_bwd(h, w, g1, m1, up, gh1, gw1, gb1, n, hid, width)
        _core.se_bwd(h, w, g2, m2, up, gh2, gw2, gb2, n, hid, width)
        assert bytes(gh1) == bytes(gh2)
        assert bytes(gw1) == bytes(gw2)
        assert bytes(gb1) == bytes(gb2)

    def test_all_finite(self):
        x = rnd(self.rng, 16)
        assert py_ref.all_finite(x, 16) and _core.all_finite(x, 16)
        x[7] = float("nan")
        assert not py_ref.all_finite(x, 16)
        assert not _core.all_finite(x, 16)
        x[7] = float("inf")
        assert not py_ref.all_finite(x, 16)
        assert not _core.all_finite(x, 16)


def test_backend_selected():
    assert BACKEND in ("c", "py")
