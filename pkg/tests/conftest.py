"""Shared test helpers: finite-difference oracles and small configs."""

from __future__ import annotations

import random

from prunas import tensor as T
from prunas.supernet import StageSpec, SuperNetConfig
from prunas.tensor import Tensor


def rand_matrix(rng: random.Random, n: int, m: int, scale: float = 1.0,
                requires_grad: bool = True) -> Tensor:
    return Tensor((n, m), [rng.gauss(0.0, scale) for _ in range(n * m)],
                  requires_grad=requires_grad)


def rand_vector(rng: random.Random, n: int, scale: float = 1.0,
                requires_grad: bool = True) -> Tensor:
    return Tensor((n,), [rng.gauss(0.0, scale) for _ in range(n)],
                  requires_grad=requires_grad)


class MatrixProbe:
    """Fixed random linear functional turning a matrix into a scalar loss.

    Built from engine ops only (two linear reductions), so finite
    differences exercise the真 op under test plus nothing exotic.
    """

    def __init__(self, rng: random.Random, n: int, m: int):
        self.col = Tensor((m, 1), [rng.gauss(0.0, 1.0) for _ in range(m)])
        self.row = Tensor((1, n), [rng.gauss(0.0, 1.0) for _ in range(n)])
        self.b1 = Tensor((1,), [0.0])

    def __call__(self, t: Tensor) -> Tensor:
        reduced = T.linear(t, self.col, self.b1)          # [n,1]
        return T.linear(self.row, reduced, self.b1)       # [1,1] scalar-sized


def fd_check(make_loss, tensors: dict[str, Tensor], tol: float = 1e-4,
             h_rel: float = 1e-6) -> int:
    """Compare analytic gradients against central finite differences.

    ``make_loss`` rebuilds the graph from the (possibly mutated) tensor
    data on every call. Returns the number of scalar entries checked.
    """
    loss = make_loss()
    loss.backward()
    checked = 0
    for name, t in tensors.items():
        grad = list(t.grad) if t.grad is not None else [0.0] * t.size
        for i in range(t.size):
            orig = t.data[i]
            h = h_rel * max(1.0, abs(orig))
            t.data[i] = orig + h
            fp = make_loss().item()
            t.data[i] = orig - h
            fm = make_loss().item()
            t.data[i] = orig
            fd = (fp - fm) / (2.0 * h)
            rel = abs(grad[i] - fd) / max(abs(grad[i]), abs(fd), 1e-6)
            assert rel < tol, f"{name}[{i}]: analytic={grad[i]} fd={fd} rel={rel}"
            checked += 1
    return checked


# -- shared desk-scale configurations ----------------------------------------


def tiny_config(**overrides) -> SuperNetConfig:
    """3 stochastic layers x 4 variants: two skippable, one transition."""
    base = dict(
        input_width=8, classes=3,
        stages=(StageSpec("ib", 8, 2, "swish"),
                StageSpec("ib", 12, 1, "swish")),
        granularity=4, expansion=4.0)
    base.update(overrides)
    return SuperNetConfig(**base)


def enum_config(**overrides) -> SuperNetConfig:
    """Small enough to enumerate exactly (17 * 17 * 16 = 4624 candidates)."""
    base = dict(
        input_width=8, classes=3,
        stages=(StageSpec("ib", 8, 2, "swish", kernels=("k3", "k5"), se_options=(False,)),
                StageSpec("ib", 12, 1, "swish", kernels=("k3", "k5"), se_options=(False,))),
        granularity=4, expansion=4.0)
    base.update(overrides)
    return SuperNetConfig(**base)


KERNEL_COSTS = {"k3": 1.0, "k5": 2.0}


def enumerate_space(config: SuperNetConfig):
    """All sampleable architectures of a config as (choice, hidden) tuples."""
    from itertools import product

    from prunas.supernet import build_layer_plans

    plans = build_layer_plans(config)
    per_layer = []
    for plan in plans:
        options = []
        if plan.skippable:
            options.append(("skip", None))
        for variant in plan.variants:
            if plan.kind == "ib":
                for width in range(config.granularity, plan.max_hidden + 1,
                                   config.granularity):
                    options.append((variant.variant_id, width))
            else:
                options.append((variant.variant_id, None))
        per_layer.append(options)
    return plans, list(product(*per_layer))
