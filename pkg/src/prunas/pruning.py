"""Coarse pruning: threshold-scheduled block removal and skip injection.

Probabilities are a noise-free softmax over the live architecture weights
(temperature 1); a prunode's probability is the sum of its two
candidates'. At the end of each post-warmup epoch every block whose
probability is strictly below the scheduled threshold is marked and then
removed in ascending-probability order. A layer never loses its last
block; in a skippable layer the penultimate removal is converted into a
skip-connection injection, after which the skip output is scaled by phi
and the surviving block's by lambda until one of the two goes as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError, ScheduleError
from .supernet import Candidate, StochasticLayer
from .tensor import Tensor


@dataclass(frozen=True)
class ThresholdPolicy:
    kind: str                 # "linear" | "constant"
    t_initial: float
    t_final: float
    e_warmup: int
    e_total: int

    def validate(self, max_blocks: int | None = None) -> None:
        if self.kind not in ("linear", "constant"):
            raise ConfigurationError(f"unknown threshold kind {self.kind!r}")
        if not 0 <= self.e_warmup < self.e_total:
            raise ConfigurationError(
                f"e_warmup {self.e_warmup} must be below e_total {self.e_total}")
        if self.kind == "linear" and self.t_final < 0.5:
            raise ConfigurationError(
                f"t_final {self.t_final} below 0.5 cannot drive layers to singletons")
        if max_blocks is not None and self.t_initial > 1.0 / max_blocks:
            raise ConfigurationError(
                f"t_initial {self.t_initial} above 1/{max_blocks}; blocks would be "
                "removed immediately after warmup")


@dataclass(frozen=True)
class SkipInjection:
    """Fixed multipliers active while a layer holds {one block, one skip}."""

    phi: float
    lam: float


def threshold_at(policy: ThresholdPolicy, e: int) -> float:
    """t(e) on the linear ramp from (e_warmup, t_initial) to (e_total, t_final)."""
    if e < policy.e_warmup:
        raise ScheduleError(
            f"threshold queried at epoch {e} before warmup end {policy.e_warmup}")
    if policy.kind == "constant":
        return policy.t_initial
    span = policy.e_total - policy.e_warmup
    return policy.t_initial + (policy.t_final - policy.t_initial) * (e - policy.e_warmup) / span


def candidate_probabilities(layer: StochasticLayer) -> list[float]:
    """Noise-free softmax over the live candidates' theta."""
    thetas = layer.theta_values()
    mx = max(thetas)
    exps = [math.exp(t - mx) for t in thetas]
    z = sum(exps)
    return [e / z for e in exps]


def _blocks(layer: StochasticLayer) -> list[tuple[object, list[int]]]:
    groups: dict[object, list[int]] = {}
    for i, c in enumerate(layer.candidates):
        groups.setdefault(c.block_key(), []).append(i)
    return list(groups.items())


def block_probabilities(layer: StochasticLayer) -> list[float]:
    """Per-block choice probabilities; prunode candidates are summed."""
    probs = candidate_probabilities(layer)
    return [sum(probs[i] for i in idxs) for _, idxs in _blocks(layer)]


def skip_forward(x: Tensor, plan=None) -> Tensor:
    """A skip block is the identity; phi is applied by the layer mixing."""
    if plan is not None and plan.in_channels != plan.out_channels:
        raise ConfigurationError(
            f"layer {plan.index} is not skip-eligible "
            f"({plan.in_channels} -> {plan.out_channels})")
    return x


def _logsumexp(values: list[float]) -> float:
    mx = max(values)
    return mx + math.log(sum(math.exp(v - mx) for v in values))


@dataclass
class PruneReport:
    layer_index: int
    removed: list[str]
    injected: bool = False
    collapsed: list[str] | None = None


def prune_layer(layer: StochasticLayer, t: float, skip: SkipInjection) -> PruneReport:
    """One end-of-epoch pruning pass over a layer.

    Blocks strictly below ``t`` at entry are removed lowest-first; the
    ties-to-first order is deterministic. A skip injection replaces the
    penultimate removal in an eligible layer and ends the pass for this
    epoch. The injected skip inherits the removed block's probability
    mass (log-sum-exp of its candidates' theta).
    """
    report = PruneReport(layer_index=layer.plan.index, removed=[])
    probs = block_probabilities(layer)
    blocks = _blocks(layer)
    marked = sorted(
        (i for i, p in enumerate(probs) if p < t),
        key=lambda i: (probs[i], i),
    )
    marked_keys = [blocks[i][0] for i in marked]
    for key in marked_keys:
        live = _blocks(layer)
        if len(live) <= 1:
            break
        idxs = dict(live).get(key)
        if idxs is None:
            continue
        cands = [layer.candidates[i] for i in idxs]
        if (len(live) == 2 and layer.plan.skippable
                and not any(c.role == "skip" for c in layer.candidates)):
            inherited = _logsumexp([c.theta for c in cands])
            for c in cands:
                layer.candidates.remove(c)
            layer.candidates.append(Candidate(role="skip", variant_id="skip", theta=inherited))
            layer.skip_state = "injected"
            layer.phi = skip.phi
            layer.lam = skip.lam
            report.removed.append(_block_label(cands))
            report.injected = True
            break
        for c in cands:
            layer.candidates.remove(c)
        report.removed.append(_block_label(cands))
    _refresh_skip_state(layer)
    return report


def forced_collapse(layer: StochasticLayer) -> list[str]:
    """Terminal cleanup: keep only the argmax-probability block (tie: first)."""
    blocks = _blocks(layer)
    if len(blocks) <= 1:
        return []
    probs = block_probabilities(layer)
    best = max(range(len(blocks)), key=lambda i: (probs[i], -i))
    removed = []
    keep = set(blocks[best][1])
    for i, c in list(enumerate(layer.candidates))[::-1]:
        if i not in keep:
            removed.append(c.variant_id if c.role == "block" else "skip")
            layer.candidates.pop(i)
    _refresh_skip_state(layer)
    return removed[::-1]


def _refresh_skip_state(layer: StochasticLayer) -> None:
    has_skip = any(c.role == "skip" for c in layer.candidates)
    n_blocks = len(_blocks(layer))
    if not has_skip:
        layer.skip_state = "none"
    elif n_blocks == 1:
        layer.skip_state = "sole"
    else:
        layer.skip_state = "injected"


def _block_label(cands: list[Candidate]) -> str:
    if cands[0].role == "skip":
        return "skip"
    return cands[0].variant_id
