"""Latency lookup table and the differentiable total-latency term.

Two table modes:

* ``analytic`` - unit_cost x multiply-accumulate count + per-block
  overhead. Deterministic and bit-reproducible across hosts; used by all
  tests. Optional per-kernel-tag cost factors let variants that differ
  only by tag have distinguishable latencies (as they do on hardware).
* ``measured`` - median wall-clock of repeated single-sample forwards on
  the current host.

Keys are (layer index, variant id, hidden width); width is 0 for entries
without a searchable hidden dimension (conv variants, skip, stem, head).
The stem uses layer index -1 and the head comes after the last layer.
"""

from __future__ import annotations

import json
import platform
import random
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

from . import tensor as T
from .errors import ConfigurationError, LatencyTableError
from .supernet import BlockWeights, LayerPlan, SuperNetConfig, VariantSpec, build_layer_plans
from .tensor import Tensor

STEM_LAYER = -1
SKIP_VARIANT = "skip"


def fmt9(x: float) -> float:
    """Round-trip through 9 significant digits (the on-disk float format)."""
    return float(f"{x:.9g}")


@dataclass
class LatencyTable:
    entries: dict[tuple[int, str, int], float]
    metadata: dict = field(default_factory=dict)

    def lookup(self, layer: int, variant_id: str, hidden: int) -> float:
        key = (layer, variant_id, hidden)
        try:
            return self.entries[key]
        except KeyError:
            raise LatencyTableError(
                f"no latency entry for layer={layer} variant={variant_id!r} hidden={hidden}"
            ) from None

    def to_json(self) -> str:
        rows = [
            {"layer": k[0], "variant": k[1], "hidden": k[2], "lat_us": fmt9(v)}
            for k, v in sorted(self.entries.items())
        ]
        return json.dumps({"metadata": self.metadata, "entries": rows},
                          sort_keys=True, indent=1)

    @staticmethod
    def from_json(text: str) -> "LatencyTable":
        doc = json.loads(text)
        entries = {(int(r["layer"]), str(r["variant"]), int(r["hidden"])): float(r["lat_us"])
                   for r in doc["entries"]}
        return LatencyTable(entries=entries, metadata=doc.get("metadata", {}))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @staticmethod
    def load(path) -> "LatencyTable":
        with open(path) as fh:
            return LatencyTable.from_json(fh.read())


def head_layer_index(config: SuperNetConfig) -> int:
    return len(build_layer_plans(config))


def block_macs(plan: LayerPlan, variant: VariantSpec, hidden: int) -> int:
    """Multiply-accumulate count of one block at the given hidden width.

    The SE gate costs ~3 ops per active lane (mean, affine, scale)."""
    if plan.kind == "ib":
        macs = plan.in_channels * hidden + hidden * plan.out_channels
        if variant.se:
            macs += 3 * hidden
        return macs
    return plan.in_channels * plan.out_channels


def _hidden_widths(plan: LayerPlan, granularity: int) -> list[int]:
    if plan.kind != "ib":
        return [0]
    return list(range(granularity, plan.max_hidden + 1, granularity))


def build_analytic(config: SuperNetConfig, unit_cost: float, *,
                   overhead: float = 1.0, kernel_costs: dict[str, float] | None = None) -> LatencyTable:
    """latency = unit_cost * tag_factor * MACs + overhead; skip = 0."""
    if unit_cost <= 0:
        raise ConfigurationError(f"unit_cost must be positive, got {unit_cost}")
    kernel_costs = kernel_costs or {}
    plans = build_layer_plans(config)
    entries: dict[tuple[int, str, int], float] = {}
    first = config.stages[0].filters
    entries[(STEM_LAYER, "stem", 0)] = unit_cost * config.input_width * first + overhead
    for plan in plans:
        for variant in plan.variants:
            factor = float(kernel_costs.get(variant.kernel, 1.0))
            for hidden in _hidden_widths(plan, config.granularity):
                macs = block_macs(plan, variant, hidden)
                entries[(plan.index, variant.variant_id, hidden)] = \
                    unit_cost * factor * macs + overhead
        if plan.skippable:
            entries[(plan.index, SKIP_VARIANT, 0)] = 0.0
    last = config.stages[-1].filters
    if config.head_hidden > 0:
        head_macs = last * config.head_hidden + config.head_hidden * config.classes
    else:
        head_macs = last * config.classes
    entries[(head_layer_index(config), "head", 0)] = unit_cost * head_macs + overhead
    meta = {
        "mode": "analytic",
        "host": "analytic",
        "timestamp": "",
        "granularity": config.granularity,
        "unit_cost": unit_cost,
        "overhead": overhead,
        "kernel_costs": {k: float(v) for k, v in sorted(kernel_costs.items())},
    }
    return LatencyTable(entries=entries, metadata=meta)


def _median(values: list[float]) -> float:
    vs = sorted(values)
    n = len(vs)
    return vs[n // 2] if n % 2 else 0.5 * (vs[n // 2 - 1] + vs[n // 2])


def _time_us(fn, repeats: int, warmup: int = 3) -> float:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        samples.append((time.perf_counter_ns() - t0) / 1000.0)
    return _median(samples)


def build_measured(config: SuperNetConfig, repeats: int) -> LatencyTable:
    """Median wall-clock microseconds of single-sample block forwards."""
    if repeats < 3:
        raise ConfigurationError(f"repeats must be >= 3, got {repeats}")
    plans = build_layer_plans(config)
    rng = random.Random(0x5EED)
    entries: dict[tuple[int, str, int], float] = {}
    warnings: list[str] = []
    res_us = time.get_clock_info("perf_counter").resolution * 1e6

    def record(key, fn):
        med = _time_us(fn, repeats)
        if med < 10.0 * res_us:
            warnings.append(f"entry {key}: median {med:.3f}us below 10x clock resolution")
        entries[key] = med

    def rand_input(width):
        return Tensor((1, width), [rng.gauss(0.0, 1.0) for _ in range(width)])

    first = config.stages[0].filters
    stem = BlockWeights(config.input_width, first, 0, False, rng)
    x0 = rand_input(config.input_width)
    record((STEM_LAYER, "stem", 0), lambda: stem.forward(x0, config.stem_activation))
    for plan in plans:
        x = rand_input(plan.in_channels)
        for variant in plan.variants:
            hidden_max = plan.max_hidden if plan.kind == "ib" else 0
            weights = BlockWeights(plan.in_channels, plan.out_channels, hidden_max,
                                   variant.se, rng)
            for hidden in _hidden_widths(plan, config.granularity):
                if plan.kind == "ib":
                    fn = lambda w=weights, h=hidden, xx=x: w.forward(xx, plan.activation, h)
                else:
                    fn = lambda w=weights, xx=x: w.forward(xx, plan.activation)
                record((plan.index, variant.variant_id, hidden), fn)
        if plan.skippable:
            record((plan.index, SKIP_VARIANT, 0), lambda xx=x: xx)
    last = config.stages[-1].filters
    xh = rand_input(last)
    if config.head_hidden > 0:
        h1 = BlockWeights(last, config.head_hidden, 0, False, rng)
        h2 = BlockWeights(config.head_hidden, config.classes, 0, False, rng)
        record((head_layer_index(config), "head", 0),
               lambda: h2.forward(h1.forward(xh, "relu"), "relu"))
    else:
        head = BlockWeights(last, config.classes, 0, False, rng)
        record((head_layer_index(config), "head", 0), lambda: head.forward(xh, "relu"))
    meta = {
        "mode": "measured",
        "host": f"{platform.node()} {platform.machine()} py{platform.python_version()}",
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "granularity": config.granularity,
        "repeats": repeats,
        "warnings": warnings,
    }
    return LatencyTable(entries=entries, metadata=meta)


# -- completeness and evaluation ---------------------------------------------


def missing_keys(config: SuperNetConfig, lut: LatencyTable) -> list[tuple[int, str, int]]:
    """Every key the search may ever ask for; empty list means complete."""
    missing = []
    if (STEM_LAYER, "stem", 0) not in lut.entries:
        missing.append((STEM_LAYER, "stem", 0))
    for plan in build_layer_plans(config):
        for variant in plan.variants:
            for hidden in _hidden_widths(plan, config.granularity):
                key = (plan.index, variant.variant_id, hidden)
                if key not in lut.entries:
                    missing.append(key)
        if plan.skippable and (plan.index, SKIP_VARIANT, 0) not in lut.entries:
            missing.append((plan.index, SKIP_VARIANT, 0))
    head_key = (head_layer_index(config), "head", 0)
    if head_key not in lut.entries:
        missing.append(head_key)
    return missing


def check_complete(config: SuperNetConfig, lut: LatencyTable) -> None:
    missing = missing_keys(config, lut)
    if missing:
        listing = ", ".join(f"(layer={k[0]}, variant={k[1]}, hidden={k[2]})" for k in missing)
        raise LatencyTableError(f"latency table incomplete; missing {len(missing)} entries: {listing}")


def candidate_latency(layer_index: int, cand, lut: LatencyTable) -> float:
    if cand.role == "skip":
        return lut.lookup(layer_index, SKIP_VARIANT, 0)
    width = cand.mask_width
    return lut.lookup(layer_index, cand.variant_id, width if width is not None else 0)


def fixed_latency(net, lut: LatencyTable) -> float:
    cfg = net.config
    return lut.lookup(STEM_LAYER, "stem", 0) + lut.lookup(head_layer_index(cfg), "head", 0)


def total_latency(net, a_per_layer, lut: LatencyTable) -> Tensor:
    """Differentiable expected latency: sum_l sum_i a_{l,i} * LAT(B_{l,i}).

    ``a_per_layer[i]`` is the layer's coefficient Tensor (or None for
    singleton layers, which contribute their constant latency). Gradient
    w.r.t. each coefficient is exactly that candidate's table latency.
    """
    const = fixed_latency(net, lut)
    terms: list[Tensor] = []
    for layer, a in zip(net.layers, a_per_layer):
        lats = [candidate_latency(layer.plan.index, c, lut) for c in layer.candidates]
        if len(layer.candidates) == 1:
            const += lats[0]
            continue
        if a is None:
            raise LatencyTableError(
                f"layer {layer.plan.index} has {len(lats)} candidates but no coefficients")
        if isinstance(a, Tensor):
            terms.append(T.dot_const(a, lats))
        else:
            const += sum(float(ai) * li for ai, li in zip(a, lats))
    if not terms:
        return Tensor.scalar(const)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total.add_const(const)


def final_latency(arch, lut: LatencyTable) -> float:
    """Plain sum of the chosen blocks' latencies plus the fixed stem/head."""
    total = lut.lookup(STEM_LAYER, "stem", 0)
    for choice in arch.layers:
        if choice.choice == SKIP_VARIANT:
            total += lut.lookup(choice.index, SKIP_VARIANT, 0)
        else:
            total += lut.lookup(choice.index, choice.choice,
                                choice.hidden if choice.hidden is not None else 0)
    total += lut.lookup(arch.head_index, "head", 0)
    return total
