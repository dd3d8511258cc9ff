"""Per-layer and whole-model metrics: cycles, utilization, GOPS, DRAM.

The analytical path drives the same schedule generators as the functional
simulator, so reported utilization is the per-cycle useful-MAC count by
construction.  Channel groups and filters replay identical plans and are
multiplied in, which keeps full ImageNet-scale models in the seconds
range.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import ScheduleError
from .memory import DramTraffic, SramSpec, layer_traffic, plan_tiles
from .model import LayerDescriptor, NetworkModel, decompose_layer
from .pe_array import PEArrayConfig, reconfigure
from .scheduler import (channels_per_pass, choose_config, layer_mode,
                        predict_utilization, schedule_for, strip_tops,
                        units_per_array)

DEFAULT_CLOCK_HZ = 500_000_000
PIPELINE_DRAIN_CYCLES = 3
PEAK_GOPS = 168.0


@dataclass(frozen=True)
class LayerMetrics:
    name: str
    kind: str
    mode: str
    config_used: PEArrayConfig
    cycles: int
    useful_macs: int
    total_mac_slots: int
    dram: DramTraffic
    clock_hz: int = DEFAULT_CLOCK_HZ
    predicted_util_8: float = 0.0
    predicted_util_4: float = 0.0

    @property
    def utilization(self) -> float:
        return self.useful_macs / self.total_mac_slots if self.total_mac_slots else 0.0

    @property
    def gops(self) -> float:
        if not self.cycles:
            return 0.0
        seconds = self.cycles / self.clock_hz
        return 2.0 * self.useful_macs / seconds / 1e9

    @property
    def latency_ms(self) -> float:
        return (self.cycles + (PIPELINE_DRAIN_CYCLES if self.cycles else 0)) \
            / self.clock_hz * 1e3


@dataclass
class ModelMetrics:
    model_name: str
    policy: str
    clock_hz: int
    layers: list = field(default_factory=list)

    @property
    def total_cycles(self) -> int:
        return sum(l.cycles for l in self.layers)

    @property
    def total_useful_macs(self) -> int:
        return sum(l.useful_macs for l in self.layers)

    @property
    def total_mac_slots(self) -> int:
        return sum(l.total_mac_slots for l in self.layers)

    @property
    def overall_utilization(self) -> float:
        slots = self.total_mac_slots
        return self.total_useful_macs / slots if slots else 0.0

    @property
    def overall_gops(self) -> float:
        if not self.total_cycles:
            return 0.0
        return 2.0 * self.total_useful_macs / (self.total_cycles / self.clock_hz) / 1e9

    @property
    def total_latency_ms(self) -> float:
        return sum(l.latency_ms for l in self.layers)

    def traffic_totals(self) -> DramTraffic:
        return DramTraffic(
            input_bytes=sum(l.dram.input_bytes for l in self.layers),
            weight_bytes=sum(l.dram.weight_bytes for l in self.layers),
            output_bytes=sum(l.dram.output_bytes for l in self.layers),
        )


def _count_sub_layer(sub: LayerDescriptor, config: PEArrayConfig,
                     sram: SramSpec, tile_cols_hint):
    """Cycles/useful for one schedulable sub-layer across all passes."""
    mode = layer_mode(sub)
    plan = plan_tiles(sub, sram, tile_cols_hint)
    C = sub.in_channels
    depthwise = sub.kind == "depthwise_conv"
    F = 1 if depthwise else sub.out_channels
    cycles = 0
    useful = 0
    if mode == "k1":
        cpp = channels_per_pass(config, "k1")
        groups = -(-C // cpp)
        sched = schedule_for(plan, sub, config)
        cycles = sched.n_cycles * groups * F
        # every scheduled pixel-channel product is useful: C per pixel
        useful = sum(len(c.pixels) for c in sched.cycles) * C * F
        return cycles, useful
    units = units_per_array(config, mode)
    groups = -(-C // units)
    for col_tile in range(plan.col_tiles):
        for strip_index in range(len(strip_tops(sub, config, mode))):
            sched = schedule_for(plan, sub, config, strip_index, col_tile)
            cycles += sched.n_cycles * groups * F
            useful += sched.useful_per_unit * C * F
    return cycles, useful


def evaluate_layer(layer: LayerDescriptor, config: PEArrayConfig,
                   clock_hz: int = DEFAULT_CLOCK_HZ,
                   sram: SramSpec = SramSpec(),
                   tile_cols_hint=None) -> LayerMetrics:
    """Drive the scheduler over all tiles/groups/filters of one layer."""
    plan = plan_tiles(layer, sram, tile_cols_hint) if layer.is_conv else None
    traffic = layer_traffic(layer, plan, sram) if layer.is_conv else DramTraffic(0, 0, 0)
    if not layer.is_conv:
        return LayerMetrics(layer.name, layer.kind, "post", config, 0, 0, 0, traffic,
                            clock_hz)
    cycles = 0
    useful = 0
    modes = []
    for sub, _ in decompose_layer(layer):
        c, u = _count_sub_layer(sub, config, sram, tile_cols_hint)
        cycles += c
        useful += u
        modes.append(layer_mode(sub))
    mode = modes[0] if len(set(modes)) == 1 else "+".join(sorted(set(modes)))
    return LayerMetrics(
        name=layer.name, kind=layer.kind, mode=mode, config_used=config,
        cycles=cycles, useful_macs=useful,
        total_mac_slots=config.mac_slots * cycles, dram=traffic, clock_hz=clock_hz,
        predicted_util_8=predict_utilization(layer, reconfigure(8)),
        predicted_util_4=predict_utilization(layer, reconfigure(4)),
    )


POLICIES = ("fixed8", "fixed4", "adaptive")


def evaluate_model(model: NetworkModel, policy: str = "adaptive",
                   clock_hz: int = DEFAULT_CLOCK_HZ,
                   sram: SramSpec = SramSpec(),
                   tile_hints: dict | None = None) -> ModelMetrics:
    if policy not in POLICIES:
        raise ScheduleError(f"unknown policy {policy!r}")
    out = ModelMetrics(model.name, policy, clock_hz)
    for layer in model.layers:
        if not layer.is_conv:
            out.layers.append(evaluate_layer(layer, reconfigure(8), clock_hz, sram))
            continue
        if policy == "fixed8":
            config = reconfigure(8)
        elif policy == "fixed4":
            config = reconfigure(4)
        else:
            config = choose_config(layer)
        hint = (tile_hints or {}).get(layer.name)
        out.layers.append(evaluate_layer(layer, config, clock_hz, sram, hint))
    return out
