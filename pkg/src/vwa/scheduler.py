"""Cycle-indexed operand plans for every supported convolution mode.

Each schedule covers one (row strip, column tile) pass of one channel
group and one filter; groups and filters replay the identical plan, so
callers multiply counts rather than regenerate.

Mode summary:

* k3s1 / depthwise: one input column and one kernel column per cycle;
  cycles are grouped by input column so consecutive cycles reuse the
  column (and SRAM addressing stays sequential).  Anti-diagonal sums of
  the block give one kernel-column partial per output row, including the
  partial rows at the strip top/bottom.
* k4 / k5: two blocks pair up; the lead block carries kernel rows 0-2 of
  the current column, the tail block rows 3(-4) with its spare MAC
  columns idle.  Both consume the same input column.
* k3s2: interleaved input.  Each PE row hosts one output-row slot; the
  row's three candidates are the slot's input window, so a single cycle
  packs slots from up to three neighbouring output columns.  Slots whose
  window straddles the strip produce boundary partials.
* k1: elementwise input.  Every MAC row holds a distinct output pixel,
  the three MAC columns hold three input channels, rows sum
  horizontally; a block covers 3 channels, the array 3*blocks per cycle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import ScheduleError
from .model import LayerDescriptor
from .pe_array import COLS, PEArrayConfig, reconfigure

# Stride-2 slot streaming is wired per physical 7-row block; a merged
# 14-row block cannot extend it, so s2 passes never use more than 7 rows.
S2_ROW_CAP = 7
S2_MAX_COLS_PER_CYCLE = 3   # one input SRAM bank per candidate column


@dataclass(frozen=True)
class RoleOps:
    """One block's share of a spatial cycle.

    tap_base: first kernel row this block carries (0 lead, 3 tail)
    ntaps:    kernel rows on this block (1..3)
    emits:    tuple of (diag_index, out_row, scheduled_taps)
    useful:   scheduled MAC count for this block this cycle
    """

    tap_base: int
    ntaps: int
    emits: tuple
    useful: int


@dataclass(frozen=True)
class Slot:
    """One output-row window computed by one PE row in a stride-2 cycle."""

    out_row: int
    out_col: int
    in_col: int
    taps: tuple            # kernel-row indices scheduled this strip
    boundary: bool


@dataclass(frozen=True)
class CycleDescriptor:
    weight_col: int = -1
    input_col: int = -1           # spatial modes: the broadcast column
    out_col: int = -1             # spatial modes: the output column served
    roles: tuple = ()             # spatial modes: RoleOps per paired block
    slots: tuple = ()             # k3s2: Slot per occupied PE row
    pixels: tuple = ()            # k1: flat output-pixel indices
    useful_per_unit: int = 0      # useful MACs in one active unit (block/pair)

    @property
    def input_cols(self) -> tuple:
        if self.slots:
            return tuple(sorted({s.in_col for s in self.slots}))
        if self.input_col >= 0:
            return (self.input_col,)
        return ()


@dataclass
class Schedule:
    mode: str
    layer: LayerDescriptor
    config: PEArrayConfig
    strip_top: int
    strip_rows: int
    col_lo: int
    col_hi: int
    cycles: list = field(default_factory=list)
    stage1_counts: dict = field(default_factory=dict)  # (o, w) -> contributions per pass
    channel_group: int = 0
    filter_index: int = 0

    @property
    def n_cycles(self) -> int:
        return len(self.cycles)

    @property
    def useful_per_unit(self) -> int:
        return sum(c.useful_per_unit for c in self.cycles)

    @property
    def unit(self) -> str:
        return "pair" if self.mode in ("k4", "k5") else "block"

    def dump_lines(self) -> list:
        lines = []
        for t, c in enumerate(self.cycles):
            cols = "/".join(str(x) for x in c.input_cols) or "-"
            if self.mode == "k1":
                lines.append(f"t={t} block=* in_col={cols} w_col=0 useful={c.useful_per_unit}")
                continue
            nroles = max(1, len(c.roles))
            for b in range(nroles):
                u = c.roles[b].useful if c.roles else c.useful_per_unit
                lines.append(f"t={t} block={b} in_col={cols} w_col={c.weight_col} useful={u}")
        return lines


def layer_mode(layer: LayerDescriptor) -> str:
    """Dataflow mode for a (possibly decomposition-produced) layer.

    Pairing keys on the active tap support: a zero-extended sub-kernel
    whose live rows fit the three MAC columns runs the single-block path.
    """
    if not layer.is_conv:
        raise ScheduleError(f"{layer.name}: pooling has no array schedule")
    k, s, ak = layer.kernel_h, layer.stride, layer.active_kh
    if layer.kind == "depthwise_conv":
        if k == 3 and s == 1:
            return "depthwise"
        if k == 3 and s == 2:
            return "k3s2"
        raise ScheduleError(f"{layer.name}: depthwise supports 3x3 stride 1/2 only")
    if k == 1 and s in (1, 2):
        return "k1"
    if k == 3 and s == 2:
        return "k3s2"
    if k in (3, 4, 5) and s == 1:
        if ak <= COLS:
            return "k3s1"
        return "k4" if ak == 4 else "k5"
    raise ScheduleError(f"{layer.name}: kernel {k} / stride {s} outside the supported set")


def sched_rows(config: PEArrayConfig, mode: str) -> int:
    if mode == "k3s2":
        return min(config.rows_per_block, S2_ROW_CAP)
    return config.rows_per_block


def strip_tops(layer: LayerDescriptor, config: PEArrayConfig, mode: str) -> list:
    rows = sched_rows(config, mode)
    return list(range(0, layer.in_height, rows))


def units_per_array(config: PEArrayConfig, mode: str) -> int:
    if mode in ("k4", "k5"):
        if config.blocks < 2:
            raise ScheduleError("4/5-tap columns need at least two blocks to pair")
        return config.blocks // 2
    return config.blocks


def channels_per_pass(config: PEArrayConfig, mode: str) -> int:
    if mode == "k1":
        return COLS * config.blocks
    return units_per_array(config, mode)


# ---------------------------------------------------------------------------
# spatial modes (k3s1, depthwise, k4, k5)

def _spatial_roles(layer: LayerDescriptor):
    kh = layer.active_kh
    if kh <= COLS:
        return [(0, kh)]
    return [(0, COLS), (COLS, kh - COLS)]


def _spatial_cycle(layer, strip_top, rows, ic, j, w):
    """Build RoleOps for one (input column, kernel column) cycle.

    A MAC is counted busy whenever it multiplies a real input row; the
    few products whose diagonal falls outside the output range at the
    image edge still occupy their MAC and are discarded downstream.
    """
    P = layer.padding
    H, H_out = layer.in_height, layer.out_height
    roles = []
    useful_total = 0
    for tap_base, ntaps in _spatial_roles(layer):
        emits = {}
        useful = 0
        for r in range(rows):
            x = strip_top + r
            if x >= H:
                continue
            useful += ntaps
            for c in range(ntaps):
                o = x - (tap_base + c) + P
                if 0 <= o < H_out:
                    d = r - c + 2
                    emits[d] = (d, o, emits.get(d, (d, o, 0))[2] + 1)
        roles.append(RoleOps(tap_base, ntaps, tuple(emits.values()), useful))
        useful_total += useful
    return CycleDescriptor(weight_col=j, input_col=ic, out_col=w,
                           roles=tuple(roles), useful_per_unit=useful_total)


def _schedule_spatial(tile, layer, config, strip_index, col_tile, mode) -> Schedule:
    if layer.active_kw > layer.in_width + 2 * layer.padding:
        raise ScheduleError(f"{layer.name}: tile narrower than kernel")
    rows = sched_rows(config, mode)
    strip_top = strip_index * rows
    col_lo, col_hi = tile.out_col_range(layer, col_tile)
    P, W = layer.padding, layer.in_width
    sched = Schedule(mode, layer, config.with_mode(mode), strip_top, rows, col_lo, col_hi)
    ic_lo = max(0, col_lo - P)
    ic_hi = min(W - 1, col_hi - 1 + layer.active_kw - 1 - P)
    for ic in range(ic_lo, ic_hi + 1):
        for j in range(layer.active_kw):
            w = ic - j + P
            if not (col_lo <= w < col_hi):
                continue
            cyc = _spatial_cycle(layer, strip_top, rows, ic, j, w)
            sched.cycles.append(cyc)
            for role in cyc.roles:
                for _, o, _ in role.emits:
                    sched.stage1_counts[(o, w)] = sched.stage1_counts.get((o, w), 0) + 1
    return sched


def schedule_k3s1(tile, layer, config, strip_index=0, col_tile=0) -> Schedule:
    if layer_mode(layer) != "k3s1":
        raise ScheduleError(f"{layer.name}: not a 3x3 stride-1 layer")
    return _schedule_spatial(tile, layer, config, strip_index, col_tile, "k3s1")


def schedule_k4_k5(tile, layer, config, strip_index=0, col_tile=0) -> Schedule:
    mode = layer_mode(layer)
    if mode not in ("k4", "k5"):
        raise ScheduleError(f"{layer.name}: kernel outside {{4,5}}")
    units_per_array(config, mode)   # validates pairing
    return _schedule_spatial(tile, layer, config, strip_index, col_tile, mode)


def schedule_depthwise(tile, layer, config, strip_index=0, col_tile=0) -> Schedule:
    if layer.kind != "depthwise_conv" or layer.kernel_h != 3 or layer.stride != 1:
        raise ScheduleError(f"{layer.name}: not a 3x3 stride-1 depthwise layer")
    return _schedule_spatial(tile, layer, config, strip_index, col_tile, "depthwise")


# ---------------------------------------------------------------------------
# stride-2 interleaved mode

def _s2_slots_for_strip(layer, strip_top, rows, w, j):
    """Output-row slots of column w whose windows touch this strip."""
    P, S = layer.padding, layer.stride
    H, H_out, W = layer.in_height, layer.out_height, layer.in_width
    x_col = S * w + j - P
    if not (0 <= x_col < W):
        return []
    slots = []
    o_lo = max(0, -(-(strip_top - 2 + P) // S))          # ceil((s-2+P)/S)
    o_hi = min(H_out - 1, (strip_top + rows - 1 + P) // S)
    for o in range(o_lo, o_hi + 1):
        taps = []
        straddles = False
        for i in range(layer.active_kh):
            x = S * o + i - P
            if x < 0 or x >= H:
                continue                                  # zero padding
            if strip_top <= x < strip_top + rows:
                taps.append(i)
            else:
                straddles = True
        if taps:
            slots.append(Slot(o, w, x_col, tuple(taps), straddles))
    return slots


def schedule_k3s2(tile, layer, config, strip_index=0, col_tile=0) -> Schedule:
    if layer.kernel_h != 3 or layer.stride != 2:
        raise ScheduleError(f"{layer.name}: not a 3x3 stride-2 layer")
    rows = sched_rows(config, "k3s2")
    strip_top = strip_index * rows
    if tile.tile_cols < layer.kernel_w + layer.stride - 1 and tile.col_tiles > 1:
        raise ScheduleError(f"{layer.name}: tile too small for one stride-2 output")
    col_lo, col_hi = tile.out_col_range(layer, col_tile)
    # a narrow column tile may own no stride-2 outputs; its pass is empty
    sched = Schedule("k3s2", layer, config.with_mode("k3s2"), strip_top, rows, col_lo, col_hi)
    for j in range(layer.active_kw):
        pending = []
        for w in range(col_lo, col_hi):
            pending.extend(_s2_slots_for_strip(layer, strip_top, rows, w, j))
        pos = 0
        while pos < len(pending):
            batch = []
            cols = set()
            while pos < len(pending) and len(batch) < rows:
                slot = pending[pos]
                if slot.in_col not in cols and len(cols) == S2_MAX_COLS_PER_CYCLE:
                    break
                cols.add(slot.in_col)
                batch.append(slot)
                pos += 1
            useful = sum(len(s.taps) for s in batch)
            sched.cycles.append(CycleDescriptor(weight_col=j, slots=tuple(batch),
                                                useful_per_unit=useful))
            for s in batch:
                key = (s.out_row, s.out_col)
                sched.stage1_counts[key] = sched.stage1_counts.get(key, 0) + 1
    return sched


# ---------------------------------------------------------------------------
# elementwise (1x1) mode

def schedule_k1(tile, layer, config, channels_per_pass_hint=None,
                strip_index=0, col_tile=0) -> Schedule:
    if layer.kernel_h != 1:
        raise ScheduleError(f"{layer.name}: not a 1x1 layer")
    if layer.padding != 0:
        raise ScheduleError(f"{layer.name}: 1x1 layers must use zero padding")
    rows = config.rows_per_block
    n_pix = layer.out_height * layer.out_width
    sched = Schedule("k1", layer, config.with_mode("k1"), 0, rows, 0, layer.out_width)
    cpp = channels_per_pass_hint or channels_per_pass(config, "k1")
    assert cpp <= COLS * config.blocks
    for lo in range(0, n_pix, rows):
        batch = tuple(range(lo, min(lo + rows, n_pix)))
        sched.cycles.append(CycleDescriptor(weight_col=0, pixels=batch,
                                            useful_per_unit=len(batch) * COLS))
        for p in batch:
            sched.stage1_counts[p] = sched.stage1_counts.get(p, 0) + 1
    return sched


def schedule_for(tile, layer, config, strip_index=0, col_tile=0) -> Schedule:
    mode = layer_mode(layer)
    if mode == "k1":
        return schedule_k1(tile, layer, config, strip_index=strip_index, col_tile=col_tile)
    if mode == "k3s2":
        return schedule_k3s2(tile, layer, config, strip_index, col_tile)
    if mode == "depthwise":
        return schedule_depthwise(tile, layer, config, strip_index, col_tile)
    if mode in ("k4", "k5"):
        return schedule_k4_k5(tile, layer, config, strip_index, col_tile)
    return schedule_k3s1(tile, layer, config, strip_index, col_tile)


# ---------------------------------------------------------------------------
# layer-adaptive configuration

KERNEL_EFF = {"k3s1": 1.0, "depthwise": 1.0, "k1": 1.0,
              "k3s2": 2.0 / 3.0, "k4": 4.0 / 6.0, "k5": 5.0 / 6.0}


def _fill(n, capacity):
    if n <= 0 or capacity <= 0:
        return 0.0
    passes = -(-n // capacity)
    return n / (capacity * passes)


def predict_utilization(layer: LayerDescriptor, config: PEArrayConfig) -> float:
    """Analytical utilization estimate used by the adaptive policy.

    min(channel fill, per-mode MAC efficiency) x row occupancy; the row
    term uses the layer's own input height against the strip height.
    """
    if not layer.is_conv:
        return 0.0
    k, s = layer.kernel_h, layer.stride
    if k == 7:
        # polyphase mix: tap count over slot-cycles of the native sub-shapes
        if s == 2:
            eff = 49.0 / 63.0
        elif s == 4:
            eff = 49.0 / 84.0
        else:
            raise ScheduleError(f"{layer.name}: 7x7 supports stride 2 or 4")
        ch_fill = _fill(layer.in_channels, config.blocks)
        row_fill = _fill(layer.in_height, config.rows_per_block)
        return min(ch_fill, eff) * row_fill
    mode = layer_mode(layer)
    eff = KERNEL_EFF[mode]
    if mode == "k1":
        ch_fill = _fill(layer.in_channels, COLS * config.blocks)
        pix_fill = _fill(layer.out_height * layer.out_width, config.rows_per_block)
        return min(ch_fill, eff) * pix_fill
    if mode == "depthwise" or layer.kind == "depthwise_conv":
        ch_fill = _fill(layer.in_channels, config.blocks)
    elif mode in ("k4", "k5"):
        ch_fill = _fill(layer.in_channels, units_per_array(config, mode))
    else:
        ch_fill = _fill(layer.in_channels, config.blocks)
    rows = sched_rows(config, mode)
    row_fill = _fill(layer.in_height, rows) * (rows / config.rows_per_block)
    return min(ch_fill, eff) * row_fill


def choose_config(layer: LayerDescriptor) -> PEArrayConfig:
    """Pick the block layout with the higher predicted utilization
    (ties go to the 8-block layout)."""
    cfg8, cfg4 = reconfigure(8), reconfigure(4)
    u8 = predict_utilization(layer, cfg8)
    u4 = predict_utilization(layer, cfg4)
    return cfg4 if u4 > u8 + 1e-12 else cfg8
