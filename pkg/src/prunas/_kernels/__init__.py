"""Kernel backend selection.

The compiled Cython core is preferred; the pure-Python reference is the
fallback. Set PRUNAS_KERNELS=c or PRUNAS_KERNELS=py to force a backend
(``c`` raises if the extension is not built).
"""

from __future__ import annotations

import os

_forced = os.environ.get("PRUNAS_KERNELS", "").strip().lower()
if _forced not in ("", "c", "py"):
    raise RuntimeError(f"PRUNAS_KERNELS must be 'c' or 'py', got {_forced!r}")

if _forced == "py":
    from . import py_ref as _impl

    BACKEND = "py"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "c"
    except ImportError:
        if _forced == "c":
            raise
        from . import py_ref as _impl

        BACKEND = "py"

ACT_RELU = _impl.ACT_RELU
ACT_SWISH = _impl.ACT_SWISH
ACT_SIGMOID = _impl.ACT_SIGMOID

mm_nn = _impl.mm_nn
mm_nt = _impl.mm_nt
mm_tn = _impl.mm_tn
add_bias = _impl.add_bias
colsum_acc = _impl.colsum_acc
act_fwd = _impl.act_fwd
act_bwd = _impl.act_bwd
mask_fwd = _impl.mask_fwd
mask_bwd = _impl.mask_bwd
axpy = _impl.axpy
dot = _impl.dot
softmax_ce_fwd = _impl.softmax_ce_fwd
softmax_ce_bwd = _impl.softmax_ce_bwd
se_fwd = _impl.se_fwd
se_bwd = _impl.se_bwd
all_finite = _impl.all_finite
