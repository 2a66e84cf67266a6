"""Latency tables: analytic values, measured smoke, totals, persistence."""

from __future__ import annotations

import random

import pytest

from conftest import KERNEL_COSTS, enum_config, tiny_config
from prunas import tensor as T
from prunas.errors import ConfigurationError, LatencyTableError
from prunas.latency import (
    LatencyTable,
    build_analytic,
    build_measured,
    check_complete,
    final_latency,
    missing_keys,
    total_latency,
)
from prunas.search import LayerChoice, SampledArchitecture, config_fingerprint
from prunas.supernet import StageSpec, SuperNet, SuperNetConfig
from prunas.tensor import Tensor


class TestAnalytic:
    def test_hand_mac_count(self):
        # one ib layer, no SE: 8*16 + 16*8 MACs at hidden=16
        cfg = SuperNetConfig(
            input_width=4, classes=2,
            stages=(StageSpec("ib", 8, 1, "relu", kernels=("k3",),
                              se_options=(False,), allow_skip=False),),
            granularity=8, expansion=2.0)
        lut = build_analytic(cfg, 0.001, overhead=1.0)
        assert lut.lookup(0, "k3", 16) == pytest.approx(0.001 * (8 * 16 + 16 * 8) + 1.0, abs=1e-12)

    def test_doubling_hidden_doubles_mac_term(self):
        cfg = tiny_config()
        lut = build_analytic(cfg, 0.01, overhead=1.0)
        l8 = lut.lookup(0, "k3", 8) - 1.0
        l16 = lut.lookup(0, "k3", 16) - 1.0
        assert l16 == pytest.approx(2.0 * l8, rel=1e-12)

    def test_strictly_increasing_in_width(self):
        cfg = tiny_config()
        lut = build_analytic(cfg, 0.01)
        for plan_index in range(3):
            widths = sorted(h for (l, v, h) in lut.entries if l == plan_index and v == "k3-se")
            lats = [lut.lookup(plan_index, "k3-se", h) for h in widths]
            assert all(b > a for a, b in zip(lats, lats[1:]))

    def test_skip_and_fixed_entries(self):
        cfg = tiny_config()
        lut = build_analytic(cfg, 0.01)
        assert lut.lookup(0, "skip", 0) == 0.0
        assert lut.lookup(1, "skip", 0) == 0.0
        with pytest.raises(LatencyTableError):
            lut.lookup(2, "skip", 0)  # transition layer is not skippable
        assert lut.lookup(-1, "stem", 0) > 0
        assert lut.lookup(3, "head", 0) > 0

    def test_kernel_cost_factor(self):
        cfg = enum_config()
        lut = build_analytic(cfg, 0.01, overhead=0.5, kernel_costs=KERNEL_COSTS)
        assert lut.lookup(0, "k5", 8) - 0.5 == pytest.approx(2.0 * (lut.lookup(0, "k3", 8) - 0.5))

    def test_bad_unit_cost(self):
        with pytest.raises(ConfigurationError):
            build_analytic(tiny_config(), 0.0)

    def test_byte_reproducible(self):
        cfg = tiny_config()
        a = build_analytic(cfg, 0.001, overhead=1.0).to_json()
        b = build_analytic(cfg, 0.001, overhead=1.0).to_json()
        assert a == b

    def test_json_roundtrip(self, tmp_path):
        cfg = tiny_config()
        lut = build_analytic(cfg, 0.001)
        path = tmp_path / "lut.json"
        lut.save(path)
        again = LatencyTable.load(path)
        assert again.entries == {k: float(f"{v:.9g}") for k, v in lut.entries.items()}
        assert again.metadata["mode"] == "analytic"


class TestCompleteness:
    def test_missing_keys_listed(self):
        cfg = tiny_config()
        lut = build_analytic(cfg, 0.01)
        del lut.entries[(0, "k3", 8)]
        del lut.entries[(1, "skip", 0)]
        missing = missing_keys(cfg, lut)
        assert (0, "k3", 8) in missing and (1, "skip", 0) in missing
        with pytest.raises(LatencyTableError) as err:
            check_complete(cfg, lut)
        assert "k3" in str(err.value) and "skip" in str(err.value)

    def test_complete_table_passes(self):
        cfg = tiny_config()
        check_complete(cfg, build_analytic(cfg, 0.01))


class TestTotalLatency:
    def _setup(self):
        cfg = tiny_config()
        net = SuperNet(cfg, seed=0)
        lut = build_analytic(cfg, 0.01, overhead=0.5)
        return cfg, net, lut

    def test_single_layer_weighted(self):
        lut = LatencyTable(entries={(0, "x", 0): 100.0, (0, "y", 0): 200.0})
        a = Tensor.vector([0.3, 0.7], requires_grad=True)
        out = T.dot_const(a, [100.0, 200.0])
        assert out.item() == pytest.approx(170.0, abs=1e-12)

    def test_additivity_and_gradient(self):
        cfg, net, lut = self._setup()
        a_list = []
        for layer in net.layers:
            k = len(layer.candidates)
            a_list.append(Tensor((k,), [1.0 / k] * k, requires_grad=True))
        total = total_latency(net, a_list, lut)
        total.backward()
        # gradient w.r.t. each coefficient equals that candidate's latency
        from prunas.latency import candidate_latency

        for layer, a in zip(net.layers, a_list):
            for i, cand in enumerate(layer.candidates):
                expect = candidate_latency(layer.plan.index, cand, lut)
                assert a.grad[i] == pytest.approx(expect, rel=1e-12)

    def test_gradient_matches_fd(self):
        cfg, net, lut = self._setup()
        rng = random.Random(4)

        def build(vals_list):
            a_list = [Tensor((len(v),), v, requires_grad=True) for v in vals_list]
            return total_latency(net, a_list, lut), a_list

        vals = [[rng.random() for _ in layer.candidates] for layer in net.layers]
        total, a_list = build(vals)
        total.backward()
        for li, v in enumerate(vals):
            for i in range(len(v)):
                h = 1e-6
                up = [list(x) for x in vals]
                dn = [list(x) for x in vals]
                up[li][i] += h
                dn[li][i] -= h
                fd = (build(up)[0].item() - build(dn)[0].item()) / (2 * h)
                assert abs(a_list[li].grad[i] - fd) / max(abs(fd), 1e-9) < 1e-6

    def test_linearity_exact(self):
        cfg, net, lut = self._setup()
        rng = random.Random(5)
        va = [[rng.random() for _ in layer.candidates] for layer in net.layers]
        vb = [[rng.random() for _ in layer.candidates] for layer in net.layers]
        alpha = 0.375  # exactly representable
        mix = [[alpha * a + (1 - alpha) * b for a, b in zip(ra, rb)]
               for ra, rb in zip(va, vb)]
        t = lambda vals: total_latency(net, [list(v) for v in vals], lut).item()
        assert t(mix) == pytest.approx(alpha * t(va) + (1 - alpha) * t(vb), rel=1e-12)

    def test_missing_entry_named(self):
        cfg, net, lut = self._setup()
        del lut.entries[(0, "k3", 16)]
        unit = next(u for u in net.layers[0].prunode_units()
                    if u.variant.variant_id == "k3")
        from dataclasses import replace

        unit.mask_state = replace(unit.mask_state, small_mask=16)
        a_list = [[1.0 / len(l.candidates)] * len(l.candidates) for l in net.layers]
        with pytest.raises(LatencyTableError) as err:
            total_latency(net, a_list, lut)
        assert "k3" in str(err.value) and "16" in str(err.value)


class TestFinalLatency:
    def _arch(self, cfg, choices):
        from prunas.supernet import build_layer_plans

        plans = build_layer_plans(cfg)
        layers = [LayerChoice(p.index, p.stage_index, p.layer_in_stage, c, h)
                  for p, (c, h) in zip(plans, choices)]
        return SampledArchitecture(layers=layers, lat_us=0.0, ce=0.0, lat_term=0.0,
                                   config_hash=config_fingerprint(cfg),
                                   head_index=len(plans))

    def test_all_skip_leaves_fixed_only(self):
        cfg = SuperNetConfig(
            input_width=8, classes=2,
            stages=(StageSpec("ib", 8, 2, "swish"),),
            granularity=4, expansion=4.0)
        lut = build_analytic(cfg, 0.01, overhead=0.5)
        arch = self._arch(cfg, [("skip", None), ("skip", None)])
        fixed = lut.lookup(-1, "stem", 0) + lut.lookup(2, "head", 0)
        assert final_latency(arch, lut) == pytest.approx(fixed, abs=1e-12)

    def test_matches_one_hot_total(self):
        cfg = tiny_config()
        net = SuperNet(cfg, seed=1)
        lut = build_analytic(cfg, 0.01, overhead=0.5)
        # choose candidate 0 of every layer via one-hot coefficients
        a_list = []
        choices = []
        for layer in net.layers:
            one_hot = [0.0] * len(layer.candidates)
            one_hot[0] = 1.0
            a_list.append(one_hot)
            c = layer.candidates[0]
            choices.append((c.variant_id, c.mask_width))
        total = total_latency(net, a_list, lut).item()
        arch = self._arch(cfg, choices)
        assert final_latency(arch, lut) == pytest.approx(total, rel=1e-12)


class TestMeasured:
    def test_repeats_guard(self):
        with pytest.raises(ConfigurationError):
            build_measured(tiny_config(), repeats=2)

    def test_measured_complete_and_stable(self):
        cfg = SuperNetConfig(
            input_width=16, classes=4,
            stages=(StageSpec("ib", 32, 1, "swish", kernels=("k3",),
                              se_options=(False,)),),
            granularity=16, expansion=2.0)
        lut1 = build_measured(cfg, repeats=15)
        assert not missing_keys(cfg, lut1)
        assert lut1.metadata["mode"] == "measured"
        lut2 = build_measured(cfg, repeats=15)
        key = (0, "k3", 64)
        a, b = lut1.entries[key], lut2.entries[key]
        assert abs(a - b) / max(a, b) < 0.2  # stability smoke check
