"""Bilevel search driver: two-phase training, pruning, sampling, retrain.

Phase 1 (epochs 1..e_warmup) trains only the network weights on the full
training split with the architecture weights frozen. Phase 2 trains the
network weights on 80% of the training rows and the architecture weights
on the remaining 20%; each architecture step also advances every live
prunode's mask walk, and each epoch ends with a threshold-pruning pass.
At e_total every layer is a singleton (a forced argmax collapse covers
exact ties) and the final architecture is sampled.

All randomness is derived from the single config seed; phase 2 streams
are keyed by (seed, alpha, lambda) so grid variants are reproducible
independently of scheduling.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from array import array
from dataclasses import dataclass, field, replace

from . import tensor as T
from .data import Dataset
from .errors import ConfigurationError, DomainError, EngineError, InvariantViolation
from .latency import (
    LatencyTable,
    candidate_latency,
    check_complete,
    final_latency,
    fixed_latency,
    fmt9,
    head_layer_index,
    total_latency,
)
from .pruning import (
    SkipInjection,
    ThresholdPolicy,
    block_probabilities,
    candidate_probabilities,
    forced_collapse,
    prune_layer,
    threshold_at,
)
from .prunode import reset_candidate_weights, update_masks, weight_signal
from .supernet import SuperNet, SuperNetConfig, gumbel_softmax, sample_gumbel
from .tensor import Tensor

LOG_COLUMNS = ("epoch", "phase", "ce", "lat_us", "loss", "live_candidates", "threshold")


@dataclass(frozen=True)
class SearchConfig:
    alpha: float = 1.0
    beta: float = 0.6
    phi: float = 1.1
    lam: float = 0.55
    loss_form: str = "log-power"      # "log-power" | "power"
    threshold_kind: str = "linear"
    t_initial: float = 0.15
    t_final: float = 0.55
    e_warmup: int = 70
    e_total: int = 200
    batch_size: int = 256
    theta_split: float = 0.2
    lr_theta: float = 0.01
    lr_psi: float = 0.002
    tau: float = 1.0
    seed: int = 0

    def policy(self) -> ThresholdPolicy:
        return ThresholdPolicy(self.threshold_kind, self.t_initial, self.t_final,
                               self.e_warmup, self.e_total)

    def validate(self) -> None:
        if not 0.0 < self.theta_split < 1.0:
            raise ConfigurationError(f"theta_split {self.theta_split} outside (0, 1)")
        if self.lr_theta <= 0 or self.lr_psi <= 0:
            raise ConfigurationError("learning rates must be positive")
        if self.alpha < 0 or self.beta <= 0:
            raise ConfigurationError("alpha must be >= 0 and beta > 0")
        if self.batch_size <= 0:
            raise ConfigurationError("batch_size must be positive")
        if self.loss_form not in ("log-power", "power"):
            raise ConfigurationError(f"unknown loss form {self.loss_form!r}")
        self.policy().validate()


@dataclass(frozen=True)
class LayerChoice:
    index: int
    stage: int
    layer: int
    choice: str                    # variant id or "skip"
    hidden: int | None


@dataclass
class SampledArchitecture:
    layers: list[LayerChoice]
    lat_us: float
    ce: float
    lat_term: float                # the alpha * f(LAT) loss component
    config_hash: str
    head_index: int

    @property
    def active_layers(self) -> int:
        return sum(1 for c in self.layers if c.choice != "skip")

    @property
    def total_loss(self) -> float:
        return self.ce + self.lat_term

    def to_json(self) -> str:
        doc = {
            "layers": [
                {"stage": c.stage, "layer": c.layer, "choice": c.choice,
                 "hidden": c.hidden}
                for c in self.layers
            ],
            "lat_us": fmt9(self.lat_us),
            "loss": {"ce": fmt9(self.ce), "lat": fmt9(self.lat_term)},
            "config_hash": self.config_hash,
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    @staticmethod
    def from_json(text: str, config: SuperNetConfig) -> "SampledArchitecture":
        from .supernet import build_layer_plans

        doc = json.loads(text)
        plans = build_layer_plans(config)
        by_pos = {(p.stage_index, p.layer_in_stage): p.index for p in plans}
        layers = []
        for row in doc["layers"]:
            pos = (int(row["stage"]), int(row["layer"]))
            if pos not in by_pos:
                raise ConfigurationError(f"architecture names unknown layer {pos}")
            hidden = row.get("hidden")
            layers.append(LayerChoice(by_pos[pos], pos[0], pos[1], str(row["choice"]),
                                      None if hidden is None else int(hidden)))
        layers.sort(key=lambda c: c.index)
        return SampledArchitecture(
            layers=layers, lat_us=float(doc["lat_us"]),
            ce=float(doc["loss"]["ce"]), lat_term=float(doc["loss"]["lat"]),
            config_hash=str(doc["config_hash"]), head_index=len(plans))


def config_fingerprint(config: SuperNetConfig) -> str:
    doc = {
        "input_width": config.input_width, "classes": config.classes,
        "granularity": config.granularity, "expansion": config.expansion,
        "tau": config.tau, "stem_activation": config.stem_activation,
        "head_hidden": config.head_hidden,
        "stages": [
            [s.kind, s.filters, s.layers, s.activation, list(s.kernels),
             list(s.se_options), s.allow_skip]
            for s in config.stages
        ],
    }
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# -- loss ----------------------------------------------------------------


def loss(ce: Tensor, lat: Tensor, alpha: float, beta: float, form: str = "log-power") -> Tensor:
    """Inference-aware loss: CE + alpha * (ln LAT)^beta, or the power form
    CE + alpha * LAT^beta."""
    if form == "log-power":
        if lat.item() <= 1.0:
            raise DomainError(
                f"log-power loss needs latency > 1 us, got {lat.item()}")
        return ce + lat.log().pow(beta).mul_const(alpha)
    if form == "power":
        return ce + lat.pow(beta).mul_const(alpha)
    raise ConfigurationError(f"unknown loss form {form!r}")


def loss_value(ce: float, lat_us: float, alpha: float, beta: float, form: str) -> float:
    if form == "log-power":
        if lat_us <= 1.0:
            raise DomainError(f"log-power loss needs latency > 1 us, got {lat_us}")
        return ce + alpha * math.log(lat_us) ** beta
    return ce + alpha * lat_us ** beta


def latency_term(lat_us: float, alpha: float, beta: float, form: str) -> float:
    return loss_value(0.0, lat_us, alpha, beta, form)


# -- optimizers ----------------------------------------------------------


class RMSprop:
    """Standard RMSprop over engine tensors (the network-weight optimizer)."""

    def __init__(self, params: list[Tensor], lr: float, rho: float = 0.9, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.sq = [array("d", bytes(8 * p.size)) for p in params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for p, s in zip(self.params, self.sq):
            if p.grad is None:
                continue
            g = p.grad
            d = p.data
            for i in range(p.size):
                gi = g[i]
                s[i] = self.rho * s[i] + (1.0 - self.rho) * gi * gi
                d[i] -= self.lr * gi / (math.sqrt(s[i]) + self.eps)

    def state(self) -> list[array]:
        return [array("d", s) for s in self.sq]

    def load_state(self, state: list[array]) -> None:
        self.sq = [array("d", s) for s in state]


ADAM_B1 = 0.9
ADAM_B2 = 0.999
ADAM_EPS = 1e-8


def adam_step(cand, grad: float, lr: float) -> None:
    """Bias-corrected Adam on one candidate's architecture weight."""
    cand.adam_t += 1
    cand.adam_m = ADAM_B1 * cand.adam_m + (1.0 - ADAM_B1) * grad
    cand.adam_v = ADAM_B2 * cand.adam_v + (1.0 - ADAM_B2) * grad * grad
    mhat = cand.adam_m / (1.0 - ADAM_B1 ** cand.adam_t)
    vhat = cand.adam_v / (1.0 - ADAM_B2 ** cand.adam_t)
    cand.theta -= lr * mhat / (math.sqrt(vhat) + ADAM_EPS)


# -- warmup checkpoint -----------------------------------------------------


@dataclass
class WarmupCheckpoint:
    """Full state at the end of phase 1: psi, theta, masks, RNG, optimizer."""

    psi: list[array]
    thetas: list[list[tuple[float, float, float, int]]]
    mask_states: list[list]
    rms_state: list[array]
    rng_state: object
    log_rows: list[dict]

    @staticmethod
    def snapshot(net: SuperNet, rms: RMSprop, rng: random.Random,
                 log_rows: list[dict]) -> "WarmupCheckpoint":
        return WarmupCheckpoint(
            psi=[array("d", p.data) for p in net.parameters()],
            thetas=[[(c.theta, c.adam_m, c.adam_v, c.adam_t) for c in layer.candidates]
                    for layer in net.layers],
            mask_states=[[u.mask_state for u in layer.prunode_units()]
                         for layer in net.layers],
            rms_state=rms.state(),
            rng_state=rng.getstate(),
            log_rows=[dict(r) for r in log_rows],
        )

    def apply(self, net: SuperNet, rms: RMSprop) -> None:
        for p, saved in zip(net.parameters(), self.psi):
            p.data[:] = saved
        for layer, saved in zip(net.layers, self.thetas):
            for c, (th, m, v, t) in zip(layer.candidates, saved):
                c.theta, c.adam_m, c.adam_v, c.adam_t = th, m, v, t
        for layer, states in zip(net.layers, self.mask_states):
            for unit, st in zip(layer.prunode_units(), states):
                unit.mask_state = st
        rms.load_state(self.rms_state)


# -- training steps ---------------------------------------------------------


def _layer_coeffs_float(layer, rng: random.Random, tau: float) -> list[float] | None:
    k = len(layer.candidates)
    if k == 1:
        return None
    g = sample_gumbel(rng, k)
    z = [(c.theta + gi) / tau for c, gi in zip(layer.candidates, g)]
    mx = max(z)
    exps = [math.exp(v - mx) for v in z]
    s = sum(exps)
    return [e / s for e in exps]


def _psi_step(net, x, labels, rms, rng, cfg) -> float:
    rms.zero_grad()
    coeffs = [_layer_coeffs_float(layer, rng, cfg.tau) for layer in net.layers]
    logits = net.forward(x, coeffs)
    ce = T.softmax_cross_entropy(logits, labels)
    ce.backward()
    rms.step()
    return ce.item()


def _theta_step(net, x, labels, lut, rng, cfg, progress, mask_log, iteration) -> tuple[float, float]:
    theta_tensors = []
    a_list = []
    for layer in net.layers:
        k = len(layer.candidates)
        if k == 1:
            theta_tensors.append(None)
            a_list.append(None)
            continue
        th = Tensor((k,), layer.theta_values(), requires_grad=True)
        a = gumbel_softmax(th, cfg.tau, sample_gumbel(rng, k))
        theta_tensors.append(th)
        a_list.append(a)
    logits = net.forward(x, a_list)
    ce = T.softmax_cross_entropy(logits, labels)
    lat = total_latency(net, a_list, lut)
    total = loss(ce, lat, cfg.alpha, cfg.beta, cfg.loss_form)
    total.backward()
    for layer, th in zip(net.layers, theta_tensors):
        if th is None:
            continue
        for i, cand in enumerate(layer.candidates):
            adam_step(cand, th.grad[i], cfg.lr_theta)
    for layer in net.layers:
        for unit in layer.prunode_units():
            small, large = layer.unit_candidates(unit)
            signal = weight_signal(small.theta, large.theta)
            new_state, reset = update_masks(unit.mask_state, progress, signal)
            unit.mask_state = new_state
            if reset:
                small.theta, large.theta = reset_candidate_weights(small.theta, large.theta)
            mask_log.setdefault((layer.plan.index, unit.variant.variant_id), []).append(
                (iteration, new_state.s, new_state.l,
                 new_state.small_mask, new_state.large_mask))
    # psi gradients from this backward are discarded (gradient isolation);
    # the next psi step zeroes them before use.
    return ce.item(), total.item()


def expected_latency(net, lut: LatencyTable) -> float:
    """Noise-free expectation of Eq.-style total latency."""
    total = fixed_latency(net, lut)
    for layer in net.layers:
        lats = [candidate_latency(layer.plan.index, c, lut) for c in layer.candidates]
        if len(lats) == 1:
            total += lats[0]
        else:
            probs = candidate_probabilities(layer)
            total += sum(p * l for p, l in zip(probs, lats))
    return total


def _batches(rows: list[int], batch_size: int, rng: random.Random) -> list[list[int]]:
    order = list(rows)
    rng.shuffle(order)
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]


def split_train_rows(dataset: Dataset, cfg: SearchConfig) -> tuple[list[int], list[int]]:
    """Fixed psi/theta split of the training rows (seeded, per search)."""
    rows = list(dataset.train_idx)
    random.Random(f"{cfg.seed}:psisplit").shuffle(rows)
    n_theta = max(1, round(len(rows) * cfg.theta_split))
    if n_theta >= len(rows):
        raise ConfigurationError("dataset too small for the theta split")
    return rows[n_theta:], rows[:n_theta]


# -- results ----------------------------------------------------------------


@dataclass
class SearchResult:
    arch: SampledArchitecture
    final_loss: float
    log_rows: list[dict]
    prune_events: list[dict]
    mask_log: dict = field(default_factory=dict)
    net: object | None = None      # final SuperNet state, for inspection


def run_warmup(cfg: SearchConfig, net_cfg: SuperNetConfig, dataset: Dataset,
               lut: LatencyTable) -> WarmupCheckpoint:
    """Phase 1 only; the result seeds every (alpha, lambda) phase-2 variant."""
    cfg.validate()
    net = SuperNet(net_cfg, cfg.seed)
    check_complete(net_cfg, lut)
    rms = RMSprop(net.parameters(), cfg.lr_psi)
    rng = random.Random(f"{cfg.seed}:phase1")
    rows = list(dataset.train_idx)
    log_rows: list[dict] = []
    for epoch in range(1, cfg.e_warmup + 1):
        ce_sum = 0.0
        n_steps = 0
        for batch in _batches(rows, cfg.batch_size, rng):
            x, labels = dataset.batch(batch)
            ce_sum += _psi_step(net, x, labels, rms, rng, cfg)
            n_steps += 1
        lat = expected_latency(net, lut)
        ce_mean = ce_sum / max(1, n_steps)
        log_rows.append({
            "epoch": epoch, "phase": 1, "ce": ce_mean, "lat_us": lat,
            "loss": loss_value(ce_mean, lat, cfg.alpha, cfg.beta, cfg.loss_form),
            "live_candidates": net.live_candidates(), "threshold": "",
        })
    return WarmupCheckpoint.snapshot(net, rms, rng, log_rows)


def run_search(cfg: SearchConfig, net_cfg: SuperNetConfig, dataset: Dataset,
               lut: LatencyTable, warm: WarmupCheckpoint | None = None) -> SearchResult:
    """Full two-phase search; returns the sampled architecture and logs."""
    cfg.validate()
    net_cfg.validate()
    net = SuperNet(net_cfg, cfg.seed)
    check_complete(net_cfg, lut)
    policy = cfg.policy()
    from .pruning import _blocks  # block view shared with the controller

    policy.validate(max(len(_blocks(layer)) for layer in net.layers))
    rms = RMSprop(net.parameters(), cfg.lr_psi)

    if warm is None:
        warm = run_warmup(cfg, net_cfg, dataset, lut)
    warm.apply(net, rms)
    log_rows = [dict(r) for r in warm.log_rows]

    rng = random.Random(f"{cfg.seed}:phase2:alpha={cfg.alpha!r}:lambda={cfg.lam!r}")
    psi_rows, theta_rows = split_train_rows(dataset, cfg)
    skip = SkipInjection(cfg.phi, cfg.lam)
    prune_events: list[dict] = []
    mask_log: dict = {}

    theta_batches_per_epoch = max(1, math.ceil(len(theta_rows) / cfg.batch_size))
    total_theta_iters = theta_batches_per_epoch * (cfg.e_total - cfg.e_warmup)
    theta_iter = 0

    try:
        for epoch in range(cfg.e_warmup + 1, cfg.e_total + 1):
            ce_sum, n_steps = 0.0, 0
            for batch in _batches(psi_rows, cfg.batch_size, rng):
                x, labels = dataset.batch(batch)
                ce_sum += _psi_step(net, x, labels, rms, rng, cfg)
                n_steps += 1
            for batch in _batches(theta_rows, cfg.batch_size, rng):
                x, labels = dataset.batch(batch)
                theta_iter += 1
                progress = theta_iter / total_theta_iters
                _theta_step(net, x, labels, lut, rng, cfg, progress, mask_log, theta_iter)
            t = threshold_at(policy, epoch)
            for layer in net.layers:
                report = prune_layer(layer, t, skip)
                for name in report.removed:
                    prune_events.append({"epoch": epoch, "threshold": t,
                                         "event": "removed", "layer": layer.plan.index,
                                         "block": name})
                if report.injected:
                    prune_events.append({"epoch": epoch, "threshold": t,
                                         "event": "injected", "layer": layer.plan.index,
                                         "block": "skip"})
            lat = expected_latency(net, lut)
            ce_mean = ce_sum / max(1, n_steps)
            log_rows.append({
                "epoch": epoch, "phase": 2, "ce": ce_mean, "lat_us": lat,
                "loss": loss_value(ce_mean, lat, cfg.alpha, cfg.beta, cfg.loss_form),
                "live_candidates": net.live_candidates(), "threshold": t,
            })
    except EngineError as exc:
        raise EngineError(
            f"search aborted at a non-finite value: {exc}; "
            f"diagnostic: {diagnostic_snapshot(net)}") from exc

    for layer in net.layers:
        removed = forced_collapse(layer)
        for name in removed:
            prune_events.append({"epoch": cfg.e_total, "threshold": cfg.t_final,
                                 "event": "collapsed", "layer": layer.plan.index,
                                 "block": name})

    arch = sample_final(net, lut, cfg, dataset)
    final = loss_value(arch.ce, arch.lat_us, cfg.alpha, cfg.beta, cfg.loss_form)
    return SearchResult(arch=arch, final_loss=final, log_rows=log_rows,
                        prune_events=prune_events, mask_log=mask_log, net=net)


def diagnostic_snapshot(net: SuperNet) -> str:
    doc = {
        "theta": [layer.theta_values() for layer in net.layers],
        "masks": [[(u.mask_state.s, u.mask_state.l, u.mask_state.small_mask,
                    u.mask_state.large_mask) for u in layer.prunode_units()]
                  for layer in net.layers],
    }
    return json.dumps(doc)


def sample_final(net: SuperNet, lut: LatencyTable, cfg: SearchConfig,
                 dataset: Dataset | None = None) -> SampledArchitecture:
    """Collapse each layer to its sole survivor (argmax within a frozen
    prunode pair; theta ties break toward the smaller width)."""
    choices: list[LayerChoice] = []
    for layer in net.layers:
        plan = layer.plan
        cands = layer.candidates
        if len(cands) > 2:
            raise InvariantViolation(
                f"layer {plan.index} still has {len(cands)} candidates; pruning did not terminate")
        if len(cands) == 2:
            if cands[0].unit is None or cands[0].unit is not cands[1].unit:
                raise InvariantViolation(
                    f"layer {plan.index} has two candidates that are not a prunode pair")
            small, large = layer.unit_candidates(cands[0].unit)
            chosen = large if large.theta > small.theta else small
            choices.append(LayerChoice(plan.index, plan.stage_index, plan.layer_in_stage,
                                       chosen.variant_id, chosen.mask_width))
        else:
            c = cands[0]
            if c.role == "skip":
                choices.append(LayerChoice(plan.index, plan.stage_index,
                                           plan.layer_in_stage, "skip", None))
            else:
                hidden = plan.max_hidden if plan.kind == "ib" else None
                if c.unit is not None:
                    hidden = c.mask_width
                choices.append(LayerChoice(plan.index, plan.stage_index,
                                           plan.layer_in_stage, c.variant_id, hidden))
    arch = SampledArchitecture(
        layers=choices, lat_us=0.0, ce=0.0, lat_term=0.0,
        config_hash=config_fingerprint(net.config),
        head_index=head_layer_index(net.config))
    arch.lat_us = final_latency(arch, lut)
    if dataset is not None:
        arch.ce = _sampled_ce(net, arch, dataset, cfg)
    arch.lat_term = latency_term(arch.lat_us, cfg.alpha, cfg.beta, cfg.loss_form)
    return arch


def _sampled_ce(net: SuperNet, arch: SampledArchitecture, dataset: Dataset,
                cfg: SearchConfig) -> float:
    """CE of the sampled network (one-hot mixing) on the theta split."""
    _, theta_rows = split_train_rows(dataset, cfg)
    coeffs = []
    for layer, choice in zip(net.layers, arch.layers):
        if len(layer.candidates) == 1:
            coeffs.append(None)
            continue
        one_hot = [0.0] * len(layer.candidates)
        for i, c in enumerate(layer.candidates):
            if c.variant_id == choice.choice and c.mask_width == choice.hidden:
                one_hot[i] = 1.0
                break
        else:
            raise InvariantViolation(f"sampled choice missing from layer {choice.index}")
        coeffs.append(one_hot)
    total, count = 0.0, 0
    for start in range(0, len(theta_rows), cfg.batch_size):
        batch = theta_rows[start:start + cfg.batch_size]
        x, labels = dataset.batch(batch)
        ce = T.softmax_cross_entropy(net.forward(x, coeffs), labels)
        total += ce.item() * len(batch)
        count += len(batch)
    return total / max(1, count)


# -- retraining --------------------------------------------------------------


class SampledNet:
    """Deterministic network rebuilt from a sampled architecture."""

    def __init__(self, arch: SampledArchitecture, config: SuperNetConfig, seed: int):
        from .supernet import BlockWeights, build_layer_plans, variants_for

        config.validate()
        plans = build_layer_plans(config)
        rng = random.Random(f"{seed}:retrain-init")
        self.config = config
        first = config.stages[0].filters
        self.stem = BlockWeights(config.input_width, first, 0, False, rng)
        self.blocks: list[tuple[object, str] | None] = []
        if len(arch.layers) != len(plans):
            raise ConfigurationError(
                f"architecture has {len(arch.layers)} layers, config defines {len(plans)}")
        for plan, choice in zip(plans, arch.layers):
            if choice.choice == "skip":
                if not plan.skippable:
                    raise ConfigurationError(
                        f"layer {plan.index} marked skipped but is not skippable")
                self.blocks.append(None)
                continue
            variant = next((v for v in plan.variants if v.variant_id == choice.choice), None)
            if variant is None:
                raise ConfigurationError(
                    f"layer {plan.index}: choice {choice.choice!r} not in the search space")
            if plan.kind == "ib":
                hidden = choice.hidden
                if hidden is None or hidden <= 0 or hidden % config.granularity != 0 \
                        or hidden > plan.max_hidden:
                    raise ConfigurationError(
                        f"layer {plan.index}: hidden width {choice.hidden} incompatible "
                        f"with granularity {config.granularity} (max {plan.max_hidden})")
            else:
                hidden = 0
            self.blocks.append((BlockWeights(plan.in_channels, plan.out_channels,
                                             hidden or 0, variant.se, rng),
                                plan.activation))
        last = config.stages[-1].filters
        if config.head_hidden > 0:
            self.head = (BlockWeights(last, config.head_hidden, 0, False, rng),
                         BlockWeights(config.head_hidden, config.classes, 0, False, rng))
        else:
            self.head = (BlockWeights(last, config.classes, 0, False, rng),)

    def parameters(self) -> list[Tensor]:
        ps = list(self.stem.params)
        for blk in self.blocks:
            if blk is not None:
                ps.extend(blk[0].params)
        for h in self.head:
            ps.extend(h.params)
        return ps

    def forward(self, x: Tensor) -> Tensor:
        h = T.activation(T.linear(x, self.stem.w, self.stem.b), self.config.stem_activation)
        for blk in self.blocks:
            if blk is None:
                continue
            weights, act = blk
            h = weights.forward(h, act)
        if len(self.head) == 2:
            h1, h2 = self.head
            h = T.activation(T.linear(h, h1.w, h1.b), "relu")
            return T.linear(h, h2.w, h2.b)
        (hw,) = self.head
        return T.linear(h, hw.w, hw.b)


def top1_accuracy(net, dataset: Dataset, rows: list[int], batch_size: int = 256) -> float:
    correct = 0
    for start in range(0, len(rows), batch_size):
        batch = rows[start:start + batch_size]
        x, labels = dataset.batch(batch)
        logits = net.forward(x)
        n, c = logits.shape
        for i in range(n):
            row = logits.data[i * c:(i + 1) * c]
            pred = max(range(c), key=lambda j: row[j])
            correct += pred == labels[i]
    return correct / max(1, len(rows))


@dataclass(frozen=True)
class RetrainResult:
    top1: float
    epochs: int
    seed: int


def retrain(arch: SampledArchitecture, config: SuperNetConfig, dataset: Dataset,
            epochs: int, seed: int, lr: float = 0.002, batch_size: int = 64) -> RetrainResult:
    """Fresh-weight supervised training of the sampled network."""
    net = SampledNet(arch, config, seed)
    rms = RMSprop(net.parameters(), lr)
    rng = random.Random(f"{seed}:retrain")
    rows = list(dataset.train_idx)
    for _ in range(epochs):
        for batch in _batches(rows, batch_size, rng):
            x, labels = dataset.batch(batch)
            rms.zero_grad()
            ce = T.softmax_cross_entropy(net.forward(x), labels)
            ce.backward()
            rms.step()
    return RetrainResult(top1=top1_accuracy(net, dataset, dataset.val_idx),
                         epochs=epochs, seed=seed)


# -- grid search -------------------------------------------------------------


@dataclass
class GridRow:
    alpha: float
    lam: float
    phi: float
    loss: float
    layers: int
    lat_us: float
    top1: float | None
    best_for_alpha: bool = False


@dataclass
class GridResult:
    rows: list[GridRow]
    results: dict              # (alpha, lam) -> SearchResult


def _grid_variant(args):
    cfg, net_cfg, dataset, lut, warm, retrain_epochs = args
    res = run_search(cfg, net_cfg, dataset, lut, warm=warm)
    res.net = None  # keep grid results lean (and picklable for pool workers)
    top1 = None
    if retrain_epochs > 0:
        top1 = retrain(res.arch, net_cfg, dataset, retrain_epochs, cfg.seed).top1
    return cfg.alpha, cfg.lam, res, top1


def grid_search(alphas, lams, phi: float, base_cfg: SearchConfig,
                net_cfg: SuperNetConfig, dataset: Dataset, lut: LatencyTable,
                retrain_epochs: int = 0, workers: int = 1) -> GridResult:
    """One shared warmup, then a phase-2 branch per (alpha, lambda).

    For each alpha the variant with the lowest final search loss is
    flagged (the paper-style zero-cost filter).
    """
    if not alphas or not lams:
        raise ConfigurationError("alpha and lambda grids must be non-empty")
    warm = run_warmup(base_cfg, net_cfg, dataset, lut)
    tasks = [(replace(base_cfg, alpha=float(a), lam=float(l), phi=float(phi)),
              net_cfg, dataset, lut, warm, retrain_epochs)
             for a in alphas for l in lams]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_grid_variant, tasks))
    else:
        outcomes = [_grid_variant(t) for t in tasks]
    rows: list[GridRow] = []
    results: dict = {}
    for alpha, lam, res, top1 in outcomes:
        results[(alpha, lam)] = res
        rows.append(GridRow(alpha=alpha, lam=lam, phi=phi, loss=res.final_loss,
                            layers=res.arch.active_layers, lat_us=res.arch.lat_us,
                            top1=top1))
    for alpha in {r.alpha for r in rows}:
        group = [r for r in rows if r.alpha == alpha]
        best = min(group, key=lambda r: r.loss)
        best.best_for_alpha = True
    return GridResult(rows=rows, results=results)
