"""Stochastic SuperNet: search-space schema, candidate blocks, layer mixing.

The desk-scale block is a two-linear inverted bottleneck

    expand -> channel mask -> activation -> optional SE gate -> project
    (+ residual when input and output widths match)

which preserves the one structural property the search touches: a
maskable inner hidden dimension whose weights are shared between the two
prunode candidates. ``conv``-kind stages use a single linear + activation
per block and have no searchable hidden dimension.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from . import tensor as T
from .errors import ConfigurationError, DimensionError, InvariantViolation
from .prunode import MaskState, init_mask_state
from .tensor import Tensor

BLOCK_KINDS = ("conv", "ib")


@dataclass(frozen=True)
class VariantSpec:
    """One candidate flavour of a layer: opaque kernel tag + SE flag."""

    kernel: str
    se: bool
    prunable: bool

    @property
    def variant_id(self) -> str:
        return self.kernel + ("-se" if self.se else "")


@dataclass(frozen=True)
class StageSpec:
    kind: str                      # "conv" | "ib"
    filters: int
    layers: int
    activation: str
    kernels: tuple[str, ...] = ("k3", "k5")
    se_options: tuple[bool, ...] = (False, True)
    allow_skip: bool = True


@dataclass(frozen=True)
class SuperNetConfig:
    input_width: int
    classes: int
    stages: tuple[StageSpec, ...]
    granularity: int = 32
    expansion: float = 8.0
    tau: float = 1.0
    stem_activation: str = "swish"
    head_hidden: int = 0

    def validate(self) -> None:
        if self.input_width <= 0 or self.classes <= 0:
            raise ConfigurationError("input_width and classes must be positive")
        if self.granularity <= 0:
            raise ConfigurationError("granularity must be positive")
        if self.expansion <= 0:
            raise ConfigurationError("expansion must be positive")
        if self.tau <= 0:
            raise ConfigurationError("tau must be positive")
        if not self.stages:
            raise ConfigurationError("at least one stage is required")
        for i, st in enumerate(self.stages):
            if st.kind not in BLOCK_KINDS:
                raise ConfigurationError(f"stage {i}: unknown kind {st.kind!r}")
            if st.filters <= 0 or st.layers <= 0:
                raise ConfigurationError(f"stage {i}: filters and layers must be positive")
            if not st.kernels:
                raise ConfigurationError(f"stage {i}: at least one kernel variant required")
            if st.kind == "ib" and not st.se_options:
                raise ConfigurationError(f"stage {i}: at least one SE option required")
        for plan in build_layer_plans(self):
            if plan.kind == "ib" and plan.max_hidden < self.granularity:
                raise ConfigurationError(
                    f"stage {plan.stage_index} layer {plan.layer_in_stage}: "
                    f"expansion*{plan.in_channels} rounds below one granularity step")


def variants_for(stage: StageSpec) -> tuple[VariantSpec, ...]:
    if stage.kind == "conv":
        return tuple(VariantSpec(k, False, False) for k in stage.kernels)
    return tuple(VariantSpec(k, se, True) for k in stage.kernels for se in stage.se_options)


@dataclass(frozen=True)
class LayerPlan:
    """Static description of one stochastic layer derived from the config."""

    index: int                     # global position among stochastic layers
    stage_index: int
    layer_in_stage: int
    kind: str
    in_channels: int
    out_channels: int
    activation: str
    skippable: bool
    variants: tuple[VariantSpec, ...]
    max_hidden: int                # 0 for conv layers
    hidden_count: int              # number of admissible mask widths (1 for conv)


def build_layer_plans(config: SuperNetConfig) -> list[LayerPlan]:
    """Channel flow: the stem feeds the first stage at its own filter count;
    the first layer of every later stage is the (never skippable) transition
    from the previous stage's width."""
    plans: list[LayerPlan] = []
    prev = config.stages[0].filters
    idx = 0
    for s_idx, stage in enumerate(config.stages):
        variants = variants_for(stage)
        for j in range(stage.layers):
            in_ch = prev if j == 0 else stage.filters
            out_ch = stage.filters
            if stage.kind == "ib":
                max_hidden = int(math.floor(config.expansion * in_ch / config.granularity)) * config.granularity
                hidden_count = max_hidden // config.granularity
            else:
                max_hidden = 0
                hidden_count = 1
            skippable = stage.allow_skip and in_ch == out_ch
            plans.append(LayerPlan(
                index=idx, stage_index=s_idx, layer_in_stage=j, kind=stage.kind,
                in_channels=in_ch, out_channels=out_ch, activation=stage.activation,
                skippable=skippable, variants=variants,
                max_hidden=max_hidden, hidden_count=hidden_count))
            idx += 1
        prev = stage.filters
    return plans


def layer_factor(plan: LayerPlan) -> int:
    """Candidate count of one layer: variants x admissible widths (+1 for skip)."""
    return len(plan.variants) * plan.hidden_count + (1 if plan.skippable else 0)


def per_layer_factors(config: SuperNetConfig) -> list[tuple[int, int, int]]:
    return [(p.stage_index, p.layer_in_stage, layer_factor(p)) for p in build_layer_plans(config)]


def count_search_space(config: SuperNetConfig) -> int:
    """Exact number of sampleable architectures (big-integer product)."""
    total = 1
    for _, _, f in per_layer_factors(config):
        total *= f
    return total


# -- gumbel-softmax ----------------------------------------------------------


def sample_gumbel(rng: random.Random, k: int) -> list[float]:
    """k independent Gumbel(0,1) draws."""
    out = []
    for _ in range(k):
        u = rng.random()
        if u <= 0.0:
            u = 1e-300
        out.append(-math.log(-math.log(u)))
    return out


def gumbel_softmax(theta: Tensor, tau: float, noise) -> Tensor:
    """a_i = exp((theta_i + g_i)/tau) / sum_j exp((theta_j + g_j)/tau).

    Differentiable w.r.t. theta; the noise is a fixed per-entry sequence.
    """
    if theta.shape == () or theta.size == 0:
        raise ConfigurationError("gumbel_softmax needs a non-empty 1D theta")
    if tau <= 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    g = [float(x) for x in noise]
    if len(g) != theta.size:
        raise DimensionError(f"{theta.size} weights but {len(g)} noise draws")
    shifted = T.affine1d(theta, 1.0 / tau, [x / tau for x in g])
    return T.softmax1d(shifted)


# -- weights -----------------------------------------------------------------


def _uniform(rng: random.Random, n: int, bound: float) -> list[float]:
    return [(rng.random() * 2.0 - 1.0) * bound for _ in range(n)]


class BlockWeights:
    """Trainable parameter set for one variant of one layer.

    ``hidden > 0`` builds the inverted bottleneck (expand/project plus the
    optional SE gate); ``hidden == 0`` builds the single-linear conv
    analog. The same object is shared by both candidates of a prunode.
    """

    def __init__(self, in_ch: int, out_ch: int, hidden: int, se: bool, rng: random.Random):
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.hidden = hidden
        self.se = se
        ps: list[Tensor] = []
        if hidden > 0:
            b1 = math.sqrt(1.0 / in_ch)
            b2 = math.sqrt(1.0 / hidden)
            self.w1 = Tensor((in_ch, hidden), _uniform(rng, in_ch * hidden, b1), requires_grad=True)
            self.b1 = Tensor((hidden,), [0.0] * hidden, requires_grad=True)
            self.w2 = Tensor((hidden, out_ch), _uniform(rng, hidden * out_ch, b2), requires_grad=True)
            self.b2 = Tensor((out_ch,), [0.0] * out_ch, requires_grad=True)
            ps += [self.w1, self.b1, self.w2, self.b2]
            if se:
                self.wse = Tensor((hidden,), _uniform(rng, hidden, 1.0), requires_grad=True)
                self.bse = Tensor((hidden,), [0.0] * hidden, requires_grad=True)
                ps += [self.wse, self.bse]
        else:
            b1 = math.sqrt(1.0 / in_ch)
            self.w = Tensor((in_ch, out_ch), _uniform(rng, in_ch * out_ch, b1), requires_grad=True)
            self.b = Tensor((out_ch,), [0.0] * out_ch, requires_grad=True)
            ps += [self.w, self.b]
        self.params = ps

    def forward(self, x: Tensor, activation: str, mask_width: int | None = None,
                hidden_pre: Tensor | None = None) -> Tensor:
        """Run the block; ``hidden_pre`` lets prunode candidates share the
        expand product, which is what keeps the bi-path cost at ~1.5 blocks."""
        if self.hidden > 0:
            if mask_width is None:
                mask_width = self.hidden
            if mask_width % 1 != 0 or mask_width <= 0:
                raise InvariantViolation(f"bad mask width {mask_width}")
            h = hidden_pre if hidden_pre is not None else T.linear(x, self.w1, self.b1)
            h = T.channel_mask(h, mask_width)
            h = T.activation(h, activation)
            if self.se:
                h = T.se_gate(h, mask_width, self.wse, self.bse)
            y = T.linear(h, self.w2, self.b2)
        else:
            y = T.activation(T.linear(x, self.w, self.b), activation)
        if self.in_ch == self.out_ch:
            y = T.add(y, x)
        return y

    def expand(self, x: Tensor) -> Tensor:
        if self.hidden == 0:
            raise InvariantViolation("expand() on a block without a hidden dimension")
        return T.linear(x, self.w1, self.b1)


# -- candidates and layers ---------------------------------------------------


class PrunodeUnit:
    """Shared state of a bi-path candidate pair: one weight set, one mask walk."""

    def __init__(self, weights: BlockWeights, mask_state: MaskState, variant: VariantSpec):
        self.weights = weights
        self.mask_state = mask_state
        self.variant = variant


@dataclass
class Candidate:
    role: str                      # "block" | "skip"
    variant_id: str
    variant: VariantSpec | None = None
    weights: BlockWeights | None = None
    unit: PrunodeUnit | None = None
    path: str | None = None        # "small" | "large" for prunode candidates
    theta: float = 0.0
    adam_m: float = 0.0
    adam_v: float = 0.0
    adam_t: int = 0

    @property
    def mask_width(self) -> int | None:
        if self.unit is None:
            return None
        st = self.unit.mask_state
        return st.small_mask if self.path == "small" else st.large_mask

    def block_key(self):
        """Candidates sharing a key form one block for pruning purposes."""
        if self.role == "skip":
            return ("skip",)
        if self.unit is not None:
            return ("unit", id(self.unit))
        return ("var", self.variant_id)


class StochasticLayer:
    """One searchable layer: candidates, architecture weights, skip state."""

    def __init__(self, plan: LayerPlan, config: SuperNetConfig, rng: random.Random):
        self.plan = plan
        self.skip_state = "none"   # none | injected | sole
        self.phi = 1.0             # multipliers set by the pruning controller
        self.lam = 1.0             # at skip injection, inert otherwise
        self.candidates: list[Candidate] = []
        for variant in plan.variants:
            if variant.prunable and plan.hidden_count >= 2:
                weights = BlockWeights(plan.in_channels, plan.out_channels,
                                       plan.max_hidden, variant.se, rng)
                unit = PrunodeUnit(weights, init_mask_state(plan.max_hidden, config.granularity), variant)
                for path in ("small", "large"):
                    self.candidates.append(Candidate(
                        role="block", variant_id=variant.variant_id, variant=variant,
                        weights=weights, unit=unit, path=path))
            else:
                hidden = plan.max_hidden if plan.kind == "ib" else 0
                weights = BlockWeights(plan.in_channels, plan.out_channels,
                                       hidden, variant.se, rng)
                self.candidates.append(Candidate(
                    role="block", variant_id=variant.variant_id, variant=variant,
                    weights=weights))
        n_blocks = len({c.block_key() for c in self.candidates})
        for c in self.candidates:
            c.theta = 1.0 / n_blocks
        if not self.candidates:
            raise ConfigurationError(f"layer {plan.index}: no candidates")

    # -- views ----------------------------------------------------------------

    def prunode_units(self) -> list[PrunodeUnit]:
        seen: list[PrunodeUnit] = []
        for c in self.candidates:
            if c.unit is not None and c.unit not in seen:
                seen.append(c.unit)
        return seen

    def unit_candidates(self, unit: PrunodeUnit) -> tuple[Candidate, Candidate]:
        small = large = None
        for c in self.candidates:
            if c.unit is unit:
                if c.path == "small":
                    small = c
                else:
                    large = c
        if small is None or large is None:
            raise InvariantViolation("prunode must keep exactly two candidates")
        return small, large

    def theta_values(self) -> list[float]:
        return [c.theta for c in self.candidates]

    def parameters(self) -> list[Tensor]:
        ps: list[Tensor] = []
        seen: set[int] = set()
        for c in self.candidates:
            if c.weights is not None and id(c.weights) not in seen:
                seen.add(id(c.weights))
                ps.extend(c.weights.params)
        return ps

    def multipliers(self) -> list[float]:
        """Per-candidate output scales; phi/lambda only while {block, skip}."""
        if self.skip_state != "injected":
            return [1.0] * len(self.candidates)
        return [self.phi if c.role == "skip" else self.lam for c in self.candidates]

    def forward(self, x: Tensor, coeffs) -> Tensor:
        """Gumbel-weighted mixture of candidate outputs (the layer relaxation)."""
        if len(self.candidates) == 1:
            return self._candidate_output(self.candidates[0], x, {})
        outs: list[Tensor] = []
        expand_cache: dict[int, Tensor] = {}
        for c in self.candidates:
            outs.append(self._candidate_output(c, x, expand_cache))
        shape = outs[0].shape
        for o in outs:
            if o.shape != shape:
                raise ConfigurationError(
                    f"layer {self.plan.index}: candidate output shapes disagree "
                    f"({shape} vs {o.shape})")
        return T.weighted_sum(outs, coeffs, self.multipliers())

    def _candidate_output(self, c: Candidate, x: Tensor, expand_cache: dict) -> Tensor:
        if c.role == "skip":
            from .pruning import skip_forward

            return skip_forward(x, self.plan)
        if c.unit is not None:
            key = id(c.unit)
            if key not in expand_cache:
                expand_cache[key] = c.weights.expand(x)
            width = c.mask_width
            if width % self.plan_granularity != 0:
                raise InvariantViolation(f"mask width {width} not a granularity multiple")
            return c.weights.forward(x, self.plan.activation, width, hidden_pre=expand_cache[key])
        return c.weights.forward(x, self.plan.activation)

    @property
    def plan_granularity(self) -> int:
        # granularity is recoverable from any prunode mask state
        for c in self.candidates:
            if c.unit is not None:
                return c.unit.mask_state.granularity
        return 1


class SuperNet:
    """The full stochastic network: fixed stem/head plus stochastic layers."""

    def __init__(self, config: SuperNetConfig, seed: int):
        config.validate()
        self.config = config
        self.plans = build_layer_plans(config)
        rng = random.Random(f"{seed}:init")
        first = config.stages[0].filters
        b = math.sqrt(1.0 / config.input_width)
        self.stem_w = Tensor((config.input_width, first), _uniform(rng, config.input_width * first, b),
                             requires_grad=True)
        self.stem_b = Tensor((first,), [0.0] * first, requires_grad=True)
        self.layers = [StochasticLayer(p, config, rng) for p in self.plans]
        last = config.stages[-1].filters
        if config.head_hidden > 0:
            bh = math.sqrt(1.0 / last)
            bo = math.sqrt(1.0 / config.head_hidden)
            self.head_w1 = Tensor((last, config.head_hidden),
                                  _uniform(rng, last * config.head_hidden, bh), requires_grad=True)
            self.head_b1 = Tensor((config.head_hidden,), [0.0] * config.head_hidden, requires_grad=True)
            self.head_w2 = Tensor((config.head_hidden, config.classes),
                                  _uniform(rng, config.head_hidden * config.classes, bo), requires_grad=True)
            self.head_b2 = Tensor((config.classes,), [0.0] * config.classes, requires_grad=True)
            self._head_params = [self.head_w1, self.head_b1, self.head_w2, self.head_b2]
        else:
            bo = math.sqrt(1.0 / last)
            self.head_w = Tensor((last, config.classes), _uniform(rng, last * config.classes, bo),
                                 requires_grad=True)
            self.head_b = Tensor((config.classes,), [0.0] * config.classes, requires_grad=True)
            self._head_params = [self.head_w, self.head_b]

    def parameters(self) -> list[Tensor]:
        ps = [self.stem_w, self.stem_b]
        for layer in self.layers:
            ps.extend(layer.parameters())
        ps.extend(self._head_params)
        return ps

    def stem(self, x: Tensor) -> Tensor:
        return T.activation(T.linear(x, self.stem_w, self.stem_b), self.config.stem_activation)

    def head(self, x: Tensor) -> Tensor:
        if self.config.head_hidden > 0:
            h = T.activation(T.linear(x, self.head_w1, self.head_b1), "relu")
            return T.linear(h, self.head_w2, self.head_b2)
        return T.linear(x, self.head_w, self.head_b)

    def forward(self, x: Tensor, coeffs_per_layer) -> Tensor:
        """coeffs_per_layer[i] is a Tensor or float list for multi-candidate
        layers and is ignored for singletons (pass None there)."""
        h = self.stem(x)
        for layer, coeffs in zip(self.layers, coeffs_per_layer):
            h = layer.forward(h, coeffs)
        return self.head(h)

    def live_candidates(self) -> int:
        return sum(len(layer.candidates) for layer in self.layers)
