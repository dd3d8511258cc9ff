"""Tiling plans, SRAM capacity checks, DRAM access counts and energy.

External traffic model: inputs and outputs move once, weights move once
per input tile unless the whole filter set fits the weight SRAM.  Energy
follows the DDR3 figure of 70 pJ/bit; the headline numbers use the byte
count expressed in MiB with a 1e6 bits-per-MiB unit convention (the only
reading consistent with the published per-layer table), the physically
literal bytes*8 figure is reported alongside.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from . import ScheduleError
from .model import LayerDescriptor

MIB = 1 << 20
TILE_ROWS = 7
BYTES_PER_VALUE = 2
ENERGY_PJ_PER_BIT = 70.0


@dataclass(frozen=True)
class SramSpec:
    input_bytes: int = 99 * 1024
    weight_bytes: int = 36 * 1024
    boundary_bytes: int = 56 * 1024
    input_banks: int = 24
    weight_banks: int = 8


@dataclass(frozen=True)
class TilePlan:
    tile_rows: int
    tile_cols: int
    row_tiles: int
    col_tiles: int
    channel_group_size: int
    halo_cols: int

    @property
    def tiles(self) -> int:
        return self.row_tiles * self.col_tiles

    def input_tile_bytes(self) -> int:
        return self.tile_rows * self.tile_cols * self.channel_group_size * BYTES_PER_VALUE

    def out_col_range(self, layer: LayerDescriptor, col_tile: int):
        """Output columns owned by one column tile (anchored on the
        leftmost in-image input column of each window)."""
        lo = None
        hi = 0
        for w in range(layer.out_width):
            x0 = max(0, w * layer.stride - layer.padding)
            t = min(x0 // self.tile_cols, self.col_tiles - 1)
            if t == col_tile:
                lo = w if lo is None else lo
                hi = w + 1
        if lo is None:
            return (0, 0)
        return (lo, hi)


def plan_tiles(layer: LayerDescriptor, sram: SramSpec = SramSpec(),
               tile_cols_hint: int | None = None) -> TilePlan:
    """Choose the 7xn strip geometry and the resident channel-group size.

    Uses the hint when given; otherwise the widest n that keeps all
    channels resident, balanced across column tiles.  When even the full
    image width cannot hold all channels, n stays at the image width and
    the channels split into groups.
    """
    if layer.in_height <= 0 or layer.in_width <= 0:
        raise ScheduleError(f"{layer.name}: empty input")
    W, C = layer.in_width, layer.in_channels
    kernel = layer.kernel_w
    budget = sram.input_bytes

    def group_size(n):
        return min(C, budget // (TILE_ROWS * n * BYTES_PER_VALUE))

    if tile_cols_hint is not None:
        n = min(tile_cols_hint, W)
    else:
        n_full = budget // (TILE_ROWS * C * BYTES_PER_VALUE)
        if n_full >= W:
            n = W
        elif n_full >= kernel:
            col_tiles = -(-W // n_full)
            n = -(-W // col_tiles)
        else:
            n = W   # keep full rows, split channels instead
    if n < kernel or n > W:
        raise ScheduleError(f"{layer.name}: no feasible tile width (n={n}, kernel={kernel})")
    cgs = group_size(n)
    if cgs < 1:
        raise ScheduleError(f"{layer.name}: tile width {n} does not fit input SRAM")
    plan = TilePlan(
        tile_rows=TILE_ROWS,
        tile_cols=n,
        row_tiles=-(-layer.in_height // TILE_ROWS),
        col_tiles=-(-W // n),
        channel_group_size=cgs,
        halo_cols=kernel - 1,
    )
    assert plan.input_tile_bytes() <= budget
    return plan


@dataclass(frozen=True)
class DramTraffic:
    input_bytes: int
    weight_bytes: int
    output_bytes: int

    @property
    def total_bytes(self) -> int:
        return self.input_bytes + self.weight_bytes + self.output_bytes

    @property
    def energy_mj(self) -> float:
        return dram_energy_mj(self.total_bytes)

    @property
    def energy_mj_literal(self) -> float:
        return self.total_bytes * 8 * ENERGY_PJ_PER_BIT * 1e-9


def mib(nbytes: float, places: int = 3) -> float:
    """Bytes to MiB with decimal half-up rounding (table convention)."""
    q = Decimal(nbytes) / Decimal(MIB)
    return float(q.quantize(Decimal(10) ** -places, rounding=ROUND_HALF_UP))


def dram_input_access(layer: LayerDescriptor) -> int:
    return layer.in_channels * layer.in_height * layer.in_width * BYTES_PER_VALUE


def dram_weight_access(layer: LayerDescriptor, plan: TilePlan,
                       sram: SramSpec = SramSpec()) -> int:
    if not layer.is_conv:
        return 0
    ch = 1 if layer.kind == "depthwise_conv" else layer.in_channels
    one_copy = layer.out_channels * ch * layer.kernel_h * layer.kernel_w * BYTES_PER_VALUE
    if one_copy <= sram.weight_bytes:
        return one_copy
    return plan.tiles * one_copy


def dram_output_access(layer: LayerDescriptor) -> int:
    return layer.out_channels * layer.out_height * layer.out_width * BYTES_PER_VALUE


def layer_traffic(layer: LayerDescriptor, plan: TilePlan,
                  sram: SramSpec = SramSpec()) -> DramTraffic:
    if not layer.is_conv:
        return DramTraffic(0, 0, 0)
    return DramTraffic(
        input_bytes=dram_input_access(layer),
        weight_bytes=dram_weight_access(layer, plan, sram),
        output_bytes=dram_output_access(layer),
    )


def dram_energy_mj(total_bytes: float, access_mib: float | None = None) -> float:
    """Energy in mJ under the table's unit convention: the MiB figure
    times 1e6 is treated as a bit count."""
    amount = mib(total_bytes) if access_mib is None else access_mib
    return amount * 1e6 * ENERGY_PJ_PER_BIT * 1e-12 * 1e3
