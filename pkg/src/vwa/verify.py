"""Oracle verification and end-to-end functional inference.

`verify_model` runs every convolution layer of a model through the
dataflow at desk scale (dims clipped) against the direct-convolution
oracle with seeded random tensors and reports exact-match status.
`run_network` chains a whole model functionally, pooling included.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import ShapeError
from .model import LayerDescriptor, NetworkModel
from .pe_array import reconfigure
from .scheduler import choose_config
from .simulate import dataflow_conv
from .tensors import FixedTensor, depthwise_conv, direct_conv, pool

VERIFY_MAX_CH = 32
VERIFY_MAX_FILT = 16


def _clipped_layer(layer: LayerDescriptor, max_dims: int) -> LayerDescriptor:
    lo = layer.kernel_h + layer.stride   # keep at least a couple of windows
    h = max(min(layer.in_height, max_dims), lo)
    w = max(min(layer.in_width, max_dims), lo)
    c = min(layer.in_channels, VERIFY_MAX_CH)
    f = c if layer.kind == "depthwise_conv" else min(layer.out_channels, VERIFY_MAX_FILT)
    return replace(layer, in_height=h, in_width=w, in_channels=c, out_channels=f)


def random_tensors(layer: LayerDescriptor, rng, frac=4):
    c = layer.in_channels
    inp = FixedTensor.from_array(
        rng.integers(-48, 48, (c, layer.in_height, layer.in_width)), frac)
    if layer.kind == "depthwise_conv":
        wshape = (c, 1, layer.kernel_h, layer.kernel_w)
        nb = c
    else:
        wshape = (layer.out_channels, c, layer.kernel_h, layer.kernel_w)
        nb = layer.out_channels
    w = FixedTensor.from_array(rng.integers(-32, 32, wshape), frac)
    bias = FixedTensor.from_array(rng.integers(-1000, 1000, (nb,)), 2 * frac) \
        if layer.has_bias else None
    return inp, w, bias


def _config_for(layer, policy: str):
    if policy == "fixed8":
        return reconfigure(8)
    if policy == "fixed4":
        return reconfigure(4)
    return choose_config(layer)


def verify_layer(layer: LayerDescriptor, seed: int, max_dims: int = 16,
                 policy: str = "adaptive", fault_hook=None) -> dict:
    """Dataflow vs oracle for one layer; returns a result record with the
    first mismatching coordinate on failure."""
    lay = _clipped_layer(layer, max_dims)
    rng = np.random.default_rng(seed)
    inp, w, bias = random_tensors(lay, rng)
    oracle = depthwise_conv if lay.kind == "depthwise_conv" else direct_conv
    expect = oracle(inp, w, bias, lay)
    config = _config_for(lay, policy)
    got, counts = dataflow_conv(inp, w, bias, lay, config, fault_hook=fault_hook)
    record = {
        "layer": layer.name,
        "mode_config": f"({config.blocks},{config.rows_per_block},3)",
        "dims": f"{lay.in_height}x{lay.in_width}x{lay.in_channels}->{lay.out_channels}",
        "cycles": counts.cycles,
        "status": "pass",
    }
    if not np.array_equal(expect.data, got.data):
        bad = np.argwhere(expect.data != got.data)[0]
        f, r, c = (int(v) for v in bad)
        record["status"] = "fail"
        record["first_mismatch"] = {
            "coord": [f, r, c],
            "got": int(got.data[f, r, c]),
            "expected": int(expect.data[f, r, c]),
        }
    return record


def verify_model(model: NetworkModel, seed: int = 42, max_dims: int = 16,
                 policy: str = "adaptive", fault_hook=None) -> list:
    results = []
    for i, layer in enumerate(model.layers):
        if not layer.is_conv:
            continue
        results.append(verify_layer(layer, seed + i, max_dims, policy,
                                    fault_hook=fault_hook))
    return results


def run_network(model: NetworkModel, inp: FixedTensor, weights: dict,
                biases: dict | None = None, policy: str = "adaptive",
                use_dataflow: bool = True):
    """Chain a model end to end; activations keep the input's frac_bits.

    weights/biases map layer names to FixedTensors.  Returns the final
    tensor and a per-layer cycle/useful list (dataflow path only).
    """
    biases = biases or {}
    cur = inp
    stats = []
    for layer in model.layers:
        if not layer.chained:
            raise ShapeError(f"{layer.name}: branching models cannot run as a chain")
        if layer.is_pool:
            cur = pool(cur, layer.kind[5:], layer.kernel_h, layer.stride, layer.padding)
            stats.append({"layer": layer.name, "cycles": 0, "useful_macs": 0})
            continue
        if layer.name not in weights:
            raise ShapeError(f"missing weights for layer {layer.name}")
        w = weights[layer.name]
        b = biases.get(layer.name)
        if layer.has_bias and b is None:
            raise ShapeError(f"missing bias for layer {layer.name}")
        if b is not None and b.frac_bits != cur.frac_bits + w.frac_bits:
            raise ShapeError(f"{layer.name}: bias frac_bits must equal "
                             f"input+weight frac ({cur.frac_bits + w.frac_bits})")
        if use_dataflow:
            config = _config_for(layer, policy)
            cur, counts = dataflow_conv(cur, w, b, layer, config)
            stats.append({"layer": layer.name, "cycles": counts.cycles,
                          "useful_macs": counts.useful_macs,
                          "mac_slots": counts.mac_slots})
        else:
            oracle = depthwise_conv if layer.kind == "depthwise_conv" else direct_conv
            cur = oracle(cur, w, b, layer)
            stats.append({"layer": layer.name, "cycles": 0, "useful_macs": 0})
    return cur, stats
