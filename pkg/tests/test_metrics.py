"""Layer/model metric aggregation and its invariants."""

import numpy as np
import pytest

from vwa.metrics import evaluate_layer, evaluate_model
from vwa.model import LayerDescriptor, parse_model
from vwa.pe_array import reconfigure
from vwa.simulate import dataflow_conv
from vwa.tensors import FixedTensor

from tests.conftest import load_model_text


def conv(c, f, h, w, k=3, s=1, pad=1, name="t", kind="conv"):
    return LayerDescriptor(name, kind, c, f, h, w, k, k, s, pad)


def test_vgg_interior_layer_full_utilization():
    lm = evaluate_layer(conv(64, 64, 224, 224), reconfigure(8))
    assert lm.utilization == pytest.approx(1.0)
    assert round(lm.utilization, 2) == 1.00


def test_resnet_mid_stride2_layer_near_80():
    lm = evaluate_layer(conv(64, 128, 56, 56, s=2), reconfigure(8))
    assert abs(lm.utilization - 0.80) <= 0.02


def test_gops_proportional_to_utilization():
    lm = evaluate_layer(conv(64, 64, 224, 224), reconfigure(8))
    assert lm.gops == pytest.approx(lm.utilization * 168.0)
    lm2 = evaluate_layer(conv(64, 128, 56, 56, s=2), reconfigure(8))
    assert lm2.gops == pytest.approx(lm2.utilization * 168.0)


def test_peak_168_gops_at_full_utilization():
    # 24 channels, pixel count divisible by the row count: exactly peak
    lm = evaluate_layer(conv(24, 8, 7, 8, k=1, pad=0), reconfigure(8))
    assert lm.utilization == 1.0
    assert lm.gops == pytest.approx(168.0, abs=1e-9)


def test_latency_includes_drain():
    lm = evaluate_layer(conv(8, 8, 7, 7), reconfigure(8))
    assert lm.latency_ms == pytest.approx((lm.cycles + 3) / 500e6 * 1e3)


def test_pool_layers_zero_cycles():
    pool = LayerDescriptor("p", "pool_max", 4, 4, 8, 8, 2, 2, 2, 0)
    lm = evaluate_layer(pool, reconfigure(8))
    assert lm.cycles == 0 and lm.useful_macs == 0 and lm.gops == 0.0


def test_utilization_identity_against_functional_run():
    """Sum of per-cycle useful MACs over 168x cycles equals the reported
    utilization: the analytical count must equal the functional one."""
    rng = np.random.default_rng(21)
    for layer in (conv(5, 4, 9, 10), conv(5, 4, 11, 12, s=2),
                  conv(26, 5, 8, 9, k=1, pad=0),
                  conv(6, 3, 10, 9, k=4, pad=0), conv(4, 3, 12, 11, k=5, pad=2)):
        inp = FixedTensor.from_array(
            rng.integers(-20, 20, (layer.in_channels, layer.in_height, layer.in_width)), 4)
        wshape = (layer.out_channels, layer.in_channels, layer.kernel_h, layer.kernel_w)
        w = FixedTensor.from_array(rng.integers(-10, 10, wshape), 4)
        cfg = reconfigure(8)
        _, counts = dataflow_conv(inp, w, None, layer, cfg)
        lm = evaluate_layer(layer, cfg)
        assert lm.cycles == counts.cycles
        assert lm.useful_macs == counts.useful_macs
        assert lm.total_mac_slots == counts.mac_slots


@pytest.mark.parametrize("name,target", [("vgg16", 0.99), ("resnet34", 0.97),
                                         ("mobilenet", 0.937), ("googlenet", 0.94)])
def test_overall_utilization_anchors(name, target):
    model = parse_model(load_model_text(name))
    mm = evaluate_model(model, "adaptive")
    assert abs(mm.overall_utilization - target) <= 0.03


def test_model_totals_are_sums():
    model = parse_model(load_model_text("vgg16"))
    mm = evaluate_model(model, "adaptive")
    assert mm.total_cycles == sum(l.cycles for l in mm.layers)
    assert mm.total_useful_macs == sum(l.useful_macs for l in mm.layers)
    t = mm.traffic_totals()
    assert t.total_bytes == sum(l.dram.total_bytes for l in mm.layers)


def test_adaptive_dominates_fixed_per_layer():
    model = parse_model(load_model_text("resnet34"))
    ad = evaluate_model(model, "adaptive")
    f8 = evaluate_model(model, "fixed8")
    f4 = evaluate_model(model, "fixed4")
    for a, b, c in zip(ad.layers, f8.layers, f4.layers):
        assert a.utilization >= b.utilization - 1e-9
        assert a.utilization >= c.utilization - 1e-9
