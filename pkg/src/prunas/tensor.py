"""Dense reverse-mode autodiff engine over flat float64 buffers.

Deliberately small: row-major 2D matrices, 1D vectors and scalars, double
precision throughout, no views and no broadcasting beyond the fused bias
add in :func:`linear`. Heavy loops are delegated to the kernel backend
(compiled or pure Python, chosen at import in ``prunas._kernels``).

Every operation checks its output for NaN/Inf and fails fast with
:class:`EngineError`; backward verifies gradients the same way.
"""

from __future__ import annotations

import math
from array import array

from . import _kernels as K
from .errors import (
    ConfigurationError,
    DataError,
    DimensionError,
    DomainError,
    EngineError,
)

ACTIVATION_CODES = {
    "relu": K.ACT_RELU,
    "swish": K.ACT_SWISH,
    "sigmoid": K.ACT_SIGMOID,
}


def _zeros(n: int) -> array:
    return array("d", bytes(8 * n))


def _size(shape: tuple[int, ...]) -> int:
    n = 1
    for d in shape:
        n *= d
    return n


class Tensor:
    """A dense tensor node in the compute graph.

    ``shape`` is a tuple (``()`` for scalars), ``data`` a flat row-major
    ``array('d')``. ``grad`` is allocated lazily on the first backward
    pass. Tensors with ``requires_grad=False`` never record graph edges
    and are safe to share across threads once created.
    """

    __slots__ = ("shape", "data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, shape, data=None, requires_grad=False, _parents=(), _op="leaf"):
        self.shape = tuple(int(d) for d in shape)
        for d in self.shape:
            if d <= 0:
                raise DimensionError(f"non-positive dimension in shape {self.shape}")
        n = _size(self.shape)
        if data is None:
            self.data = _zeros(n)
        elif isinstance(data, array) and data.typecode == "d":
            self.data = data
        else:
            self.data = array("d", (float(v) for v in data))
        if len(self.data) != n:
            raise DimensionError(
                f"shape {self.shape} needs {n} values, got {len(self.data)}"
            )
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._backward = None
        self._op = _op
        if _op == "leaf" and not K.all_finite(self.data, n):
            raise EngineError("non-finite values in tensor literal")

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def matrix(rows, requires_grad=False) -> "Tensor":
        n = len(rows)
        m = len(rows[0])
        flat = array("d", (float(v) for row in rows for v in row))
        if len(flat) != n * m:
            raise DimensionError("ragged matrix literal")
        return Tensor((n, m), flat, requires_grad)

    @staticmethod
    def vector(values, requires_grad=False) -> "Tensor":
        vals = [float(v) for v in values]
        return Tensor((len(vals),), array("d", vals), requires_grad)

    @staticmethod
    def scalar(value, requires_grad=False) -> "Tensor":
        return Tensor((), array("d", [float(value)]), requires_grad)

    # -- basics ----------------------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.data)

    def item(self) -> float:
        if self.size != 1:
            raise DimensionError(f"item() on tensor of shape {self.shape}")
        return self.data[0]

    def tolist(self):
        if len(self.shape) == 2:
            n, m = self.shape
            return [list(self.data[i * m:(i + 1) * m]) for i in range(n)]
        return list(self.data)

    def _grad_buf(self) -> array:
        if self.grad is None:
            self.grad = _zeros(self.size)
        return self.grad

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad = _zeros(self.size)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # -- backward --------------------------------------------------------------

    def backward(self) -> None:
        """Reverse pass from a scalar root, each node visited exactly once."""
        if self.size != 1:
            raise DimensionError("backward() requires a scalar root")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        root_grad = self._grad_buf()
        root_grad[0] += 1.0
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()
        for node in topo:
            if node.grad is not None and not K.all_finite(node.grad, node.size):
                raise EngineError(f"non-finite gradient at op {node._op!r}")

    # -- scalar arithmetic -------------------------------------------------

    def _require_scalar(self, op: str) -> None:
        if self.shape != ():
            raise DimensionError(f"{op} is defined on scalar tensors, got shape {self.shape}")

    def log(self) -> "Tensor":
        self._require_scalar("log")
        v = self.data[0]
        if v <= 0.0:
            raise DomainError(f"log of non-positive value {v}")
        out = _node((), [math.log(v)], (self,), "log")
        if out.requires_grad:
            def _bw():
                self._grad_buf()[0] += out.grad[0] / v
            out._backward = _bw
        return out

    def pow(self, exponent: float) -> "Tensor":
        self._require_scalar("pow")
        v = self.data[0]
        p = float(exponent)
        if v < 0.0 and p != int(p):
            raise DomainError(f"pow of negative base {v} with non-integer exponent {p}")
        out = _node((), [v ** p], (self,), "pow")
        if out.requires_grad:
            def _bw():
                self._grad_buf()[0] += out.grad[0] * p * v ** (p - 1.0)
            out._backward = _bw
        return out

    def __add__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            self._require_scalar("add")
            other._require_scalar("add")
            out = _node((), [self.data[0] + other.data[0]], (self, other), "add")
            if out.requires_grad:
                def _bw():
                    if self.requires_grad:
                        self._grad_buf()[0] += out.grad[0]
                    if other.requires_grad:
                        other._grad_buf()[0] += out.grad[0]
                out._backward = _bw
            return out
        return self.add_const(float(other))

    __radd__ = __add__

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            self._require_scalar("mul")
            other._require_scalar("mul")
            a, b = self.data[0], other.data[0]
            out = _node((), [a * b], (self, other), "mul")
            if out.requires_grad:
                def _bw():
                    if self.requires_grad:
                        self._grad_buf()[0] += out.grad[0] * b
                    if other.requires_grad:
                        other._grad_buf()[0] += out.grad[0] * a
                out._backward = _bw
            return out
        return self.mul_const(float(other))

    __rmul__ = __mul__

    def add_const(self, c: float) -> "Tensor":
        self._require_scalar("add_const")
        out = _node((), [self.data[0] + c], (self,), "add_const")
        if out.requires_grad:
            def _bw():
                self._grad_buf()[0] += out.grad[0]
            out._backward = _bw
        return out

    def mul_const(self, c: float) -> "Tensor":
        self._require_scalar("mul_const")
        out = _node((), [self.data[0] * c], (self,), "mul_const")
        if out.requires_grad:
            def _bw():
                self._grad_buf()[0] += out.grad[0] * c
            out._backward = _bw
        return out


def _node(shape, data, parents, op) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    out = Tensor(shape, data, requires_grad=requires,
                 _parents=parents if requires else (), _op=op)
    if not K.all_finite(out.data, out.size):
        raise EngineError(f"non-finite values produced by op {op!r}")
    return out


def _shape2(t: Tensor, op: str) -> tuple[int, int]:
    if len(t.shape) != 2:
        raise DimensionError(f"{op}: expected a matrix, got shape {t.shape}")
    return t.shape


def _shape1(t: Tensor, op: str) -> int:
    if len(t.shape) != 1:
        raise DimensionError(f"{op}: expected a vector, got shape {t.shape}")
    return t.shape[0]


# -- matrix ops ------------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w + b with gradients to all three inputs."""
    n, k = _shape2(x, "linear")
    k2, m = _shape2(w, "linear")
    m2 = _shape1(b, "linear")
    if k != k2 or m != m2:
        raise DimensionError(f"linear: x{x.shape} w{w.shape} b{b.shape} do not agree")
    out = _zeros(n * m)
    K.mm_nn(x.data, w.data, out, n, k, m)
    K.add_bias(out, b.data, n, m)
    node = _node((n, m), out, (x, w, b), "linear")
    if node.requires_grad:
        def _bw():
            g = node.grad
            if x.requires_grad:
                K.mm_nt(g, w.data, x._grad_buf(), n, m, k)
            if w.requires_grad:
                K.mm_tn(x.data, g, w._grad_buf(), n, k, m)
            if b.requires_grad:
                K.colsum_acc(g, b._grad_buf(), n, m)
        node._backward = _bw
    return node


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise relu / swish (x * sigmoid(x)) / sigmoid."""
    code = ACTIVATION_CODES.get(kind)
    if code is None:
        raise ConfigurationError(f"unknown activation {kind!r}; expected one of {sorted(ACTIVATION_CODES)}")
    out = _zeros(x.size)
    K.act_fwd(x.data, out, x.size, code)
    node = _node(x.shape, out, (x,), f"activation:{kind}")
    if node.requires_grad:
        def _bw():
            K.act_bwd(x.data, node.grad, x._grad_buf(), x.size, code)
        node._backward = _bw
    return node


def channel_mask(x: Tensor, mask_width: int) -> Tensor:
    """Pass columns < mask_width through; zero the rest (values and grads)."""
    n, c = _shape2(x, "channel_mask")
    if not 0 < mask_width <= c:
        raise DimensionError(f"channel_mask: width {mask_width} out of range (0, {c}]")
    out = _zeros(n * c)
    K.mask_fwd(x.data, out, n, c, mask_width)
    node = _node((n, c), out, (x,), "channel_mask")
    if node.requires_grad:
        def _bw():
            K.mask_bwd(node.grad, x._grad_buf(), n, c, mask_width)
        node._backward = _bw
    return node


def add(x: Tensor, y: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors (residual connections)."""
    if x.shape != y.shape:
        raise DimensionError(f"add: shapes {x.shape} and {y.shape} differ")
    out = array("d", x.data)
    K.axpy(1.0, y.data, out, len(out))
    node = _node(x.shape, out, (x, y), "add")
    if node.requires_grad:
        def _bw():
            if x.requires_grad:
                K.axpy(1.0, node.grad, x._grad_buf(), x.size)
            if y.requires_grad:
                K.axpy(1.0, node.grad, y._grad_buf(), y.size)
        node._backward = _bw
    return node


def weighted_sum(tensors, coeffs, scales=None) -> Tensor:
    """out = sum_i scales[i] * coeffs[i] * tensors[i].

    ``coeffs`` is either a 1D Tensor (differentiable mixing weights) or a
    plain float sequence. ``scales`` are fixed per-entry multipliers (the
    skip-injection phi/lambda factors).
    """
    if not tensors:
        raise DimensionError("weighted_sum of no tensors")
    shape = tensors[0].shape
    for t in tensors:
        if t.shape != shape:
            raise DimensionError(f"weighted_sum: mixed shapes {shape} and {t.shape}")
    k = len(tensors)
    if scales is None:
        scales = [1.0] * k
    coeff_tensor = coeffs if isinstance(coeffs, Tensor) else None
    if coeff_tensor is not None:
        if coeff_tensor.shape != (k,):
            raise DimensionError(f"weighted_sum: {k} tensors but coeffs shape {coeff_tensor.shape}")
        cvals = list(coeff_tensor.data)
        parents = (*tensors, coeff_tensor)
    else:
        cvals = [float(c) for c in coeffs]
        if len(cvals) != k:
            raise DimensionError(f"weighted_sum: {k} tensors but {len(cvals)} coefficients")
        parents = tuple(tensors)
    size = _size(shape)
    out = _zeros(size)
    for c, s, t in zip(cvals, scales, tensors):
        K.axpy(c * s, t.data, out, size)
    node = _node(shape, out, parents, "weighted_sum")
    if node.requires_grad:
        def _bw():
            g = node.grad
            for i, t in enumerate(tensors):
                if t.requires_grad:
                    K.axpy(cvals[i] * scales[i], g, t._grad_buf(), size)
            if coeff_tensor is not None and coeff_tensor.requires_grad:
                gc = coeff_tensor._grad_buf()
                for i, t in enumerate(tensors):
                    gc[i] += scales[i] * K.dot(g, t.data, size)
        node._backward = _bw
    return node


def se_gate(h: Tensor, mask_width: int, w: Tensor, b: Tensor) -> Tensor:
    """Squeeze-excitation analog: sigmoid gate from the mean of the active lanes.

    For lane j < mask_width: out = h * sigmoid(w[j] * mean + b[j]); lanes
    beyond the mask are zeroed.
    """
    n, hid = _shape2(h, "se_gate")
    if not 0 < mask_width <= hid:
        raise DimensionError(f"se_gate: width {mask_width} out of range (0, {hid}]")
    if _shape1(w, "se_gate") != hid or _shape1(b, "se_gate") != hid:
        raise DimensionError(f"se_gate: gate parameters must have {hid} lanes")
    out = _zeros(n * hid)
    gate = _zeros(n * hid)
    mu = _zeros(n)
    K.se_fwd(h.data, w.data, b.data, out, gate, mu, n, hid, mask_width)
    node = _node((n, hid), out, (h, w, b), "se_gate")
    if node.requires_grad:
        def _bw():
            K.se_bwd(h.data, w.data, gate, mu, node.grad,
                     h._grad_buf(), w._grad_buf(), b._grad_buf(), n, hid, mask_width)
        node._backward = _bw
    return node


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean NLL over the batch, max-subtraction stabilized."""
    n, c = _shape2(logits, "softmax_cross_entropy")
    lab = array("q", (int(v) for v in labels))
    if len(lab) != n:
        raise DimensionError(f"softmax_cross_entropy: {n} rows but {len(lab)} labels")
    for i, y in enumerate(lab):
        if not 0 <= y < c:
            raise DataError(f"label {y} at row {i} outside [0, {c})")
    probs = _zeros(n * c)
    loss = K.softmax_ce_fwd(logits.data, lab, probs, n, c)
    node = _node((), [loss], (logits,), "softmax_cross_entropy")
    if node.requires_grad:
        def _bw():
            K.softmax_ce_bwd(probs, lab, node.grad[0], logits._grad_buf(), n, c)
        node._backward = _bw
    return node


# -- small vector ops (architecture coefficients) ---------------------------


def softmax1d(v: Tensor) -> Tensor:
    """Softmax of a 1D tensor with the exact Jacobian on backward."""
    k = _shape1(v, "softmax1d")
    mx = max(v.data)
    exps = [math.exp(x - mx) for x in v.data]
    z = sum(exps)
    probs = [e / z for e in exps]
    node = _node((k,), probs, (v,), "softmax1d")
    if node.requires_grad:
        def _bw():
            g = node.grad
            inner = sum(g[i] * probs[i] for i in range(k))
            gv = v._grad_buf()
            for i in range(k):
                gv[i] += probs[i] * (g[i] - inner)
        node._backward = _bw
    return node


def affine1d(v: Tensor, scale: float, shift) -> Tensor:
    """out[i] = v[i] * scale + shift[i]."""
    k = _shape1(v, "affine1d")
    sh = [float(s) for s in shift]
    if len(sh) != k:
        raise DimensionError(f"affine1d: vector length {k} but {len(sh)} shifts")
    node = _node((k,), [v.data[i] * scale + sh[i] for i in range(k)], (v,), "affine1d")
    if node.requires_grad:
        def _bw():
            gv = v._grad_buf()
            K.axpy(scale, node.grad, gv, k)
        node._backward = _bw
    return node


def dot_const(v: Tensor, consts) -> Tensor:
    """Scalar <v, consts> with d/dv[i] = consts[i]; the latency inner product."""
    k = _shape1(v, "dot_const")
    cs = [float(c) for c in consts]
    if len(cs) != k:
        raise DimensionError(f"dot_const: vector length {k} but {len(cs)} constants")
    node = _node((), [sum(v.data[i] * cs[i] for i in range(k))], (v,), "dot_const")
    if node.requires_grad:
        def _bw():
            gv = v._grad_buf()
            g = node.grad[0]
            for i in range(k):
                gv[i] += cs[i] * g
        node._backward = _bw
    return node
