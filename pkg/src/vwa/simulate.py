"""Functional execution of layers through the scheduled dataflow.

Walks the cycle plans strip by strip, accumulates through the staged
adders and the boundary SRAM, and produces outputs that must equal the
direct-convolution oracle bit for bit.  Filters ride through the
identical schedule as a batched leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ShapeError
from .accumulator import AccumulatorState, BoundaryBuffer, stage2_tree_add, stage3_group_accumulate
from .memory import SramSpec, plan_tiles
from .model import decompose_layer, phase_subsample, phase_weights
from .pe_array import COLS, PEArrayConfig
from .scheduler import (channels_per_pass, layer_mode, sched_rows,
                        schedule_for, strip_tops, units_per_array)
from .tensors import FixedTensor, apply_activation, check_acc_range, requantize


@dataclass
class PassCounts:
    cycles: int = 0
    useful_macs: int = 0
    mac_slots: int = 0
    boundary_diagnostics: list = field(default_factory=list)
    peak_boundary_entries: int = 0

    def add(self, other: "PassCounts"):
        self.cycles += other.cycles
        self.useful_macs += other.useful_macs
        self.mac_slots += other.mac_slots
        self.boundary_diagnostics.extend(other.boundary_diagnostics)
        self.peak_boundary_entries = max(self.peak_boundary_entries,
                                         other.peak_boundary_entries)


def _straddles(layer, o, strip_top, rows):
    for i in range(layer.active_kh):
        x = layer.stride * o + i - layer.padding
        if 0 <= x < layer.in_height and not (strip_top <= x < strip_top + rows):
            return True
    return False


def _strip_operand(inp, ch_lo, n_ch, strip_top, rows, ic):
    """(n_ch, rows) column slice, zero-filled past the image bottom."""
    H = inp.shape[1]
    out = np.zeros((n_ch, rows), dtype=np.int64)
    hi = min(H, strip_top + rows)
    if hi > strip_top:
        out[:, : hi - strip_top] = inp[ch_lo : ch_lo + n_ch, strip_top:hi, ic]
    return out


def _run_spatial_sub(inp, weights, layer, config, plan, out_acc, counts, fault_hook=None):
    """One spatial sub-layer (k3s1/k4/k5/depthwise) over all tiles/groups."""
    mode = layer_mode(layer)
    depthwise = layer.kind == "depthwise_conv"
    C = layer.in_channels
    F = weights.shape[0]
    units = units_per_array(config, mode)
    groups = -(-C // units)
    rows = sched_rows(config, mode)
    boundary = BoundaryBuffer()
    n_filters = C if depthwise else F
    for col_tile in range(plan.col_tiles):
        for strip_index, strip_top in enumerate(strip_tops(layer, config, mode)):
            sched = schedule_for(plan, layer, config, strip_index, col_tile)
            if fault_hook is not None:
                fault_hook(sched)
            state = AccumulatorState(mode="stage1_only" if depthwise else "full")
            n_cyc = len(sched.cycles)
            counts.cycles += n_cyc * groups * (1 if depthwise else F)
            counts.mac_slots += config.mac_slots * n_cyc * groups * (1 if depthwise else F)
            for g in range(groups):
                ch_lo = g * units
                n_act = min(units, C - ch_lo)
                counts.useful_macs += sched.useful_per_unit * n_act * (1 if depthwise else F)
                for cyc in sched.cycles:
                    ic, j, w = cyc.input_col, cyc.weight_col, cyc.out_col
                    operand = _strip_operand(inp, ch_lo, n_act, strip_top, rows, ic)
                    for role in cyc.roles:
                        if role.useful == 0:
                            continue
                        taps = np.arange(role.tap_base, role.tap_base + role.ntaps)
                        if depthwise:
                            ch = np.arange(ch_lo, ch_lo + n_act)
                            wsel = weights[ch, 0][:, taps, j]          # (n_act, ntaps)
                            wsel = wsel[None, :, :]
                        else:
                            wsel = weights[:, ch_lo : ch_lo + n_act][:, :, taps, j]
                        diag = np.zeros(wsel.shape[:2] + (rows + COLS - 1,), dtype=np.int64)
                        for c in range(role.ntaps):
                            contrib = operand[None, :, :] * wsel[:, :, c : c + 1]
                            diag[:, :, COLS - 1 - c : COLS - 1 - c + rows] += contrib
                        for d, o, _ in role.emits:
                            released = state.stage1_accumulate(
                                "pass", (o, w), diag[:, :, d],
                                expected=sched.stage1_counts[(o, w)])
                            if released is None:
                                continue
                            if depthwise:
                                val = released[0]        # per-channel finals
                            else:
                                val = stage2_tree_add([released[:, u] for u in range(n_act)])
                            _route_final(state, boundary, layer, out_acc, val, o, w,
                                         strip_top, rows, g, groups, depthwise, ch_lo,
                                         n_act, n_filters)
            assert state.stage1_pending() == 0, "stage1 slots left pending at strip end"
    leftovers = boundary.drain()
    assert not leftovers, "boundary partials left unmerged at layer end"
    counts.boundary_diagnostics.extend(boundary.diagnostics)
    counts.peak_boundary_entries = max(counts.peak_boundary_entries, boundary.peak_entries)


def _route_final(state, boundary, layer, out_acc, val, o, w, strip_top, rows,
                 g, groups, depthwise, ch_lo, n_act, n_filters):
    """Send a stage-2 result through stage 3 (or straight out for
    depthwise), then through the boundary SRAM when the row straddles."""
    if depthwise:
        # val holds the per-channel finals for channels [ch_lo, ch_lo+n_act)
        if _straddles(layer, o, strip_top, rows):
            merged = boundary.store_or_merge((ch_lo, o, w), val, n_filters)
            if merged is None:
                return
            val = merged
        out_acc[ch_lo : ch_lo + n_act, o, w] += val
        return
    final = stage3_group_accumulate(state, val, (o, w), g, groups)
    if final is None:
        return
    if _straddles(layer, o, strip_top, rows):
        merged = boundary.store_or_merge((o, w), final, n_filters)
        if merged is None:
            return
        final = merged
    out_acc[:, o, w] += final


def _run_s2_sub(inp, weights, layer, config, plan, out_acc, counts, fault_hook=None):
    """3x3 stride-2 sub-layer via the interleaved slot schedule."""
    depthwise = layer.kind == "depthwise_conv"
    C = layer.in_channels
    F = weights.shape[0]
    units = config.blocks
    groups = -(-C // units)
    rows = sched_rows(config, "k3s2")
    boundary = BoundaryBuffer()
    n_filters = C if depthwise else F
    H = layer.in_height
    for col_tile in range(plan.col_tiles):
        for strip_index, strip_top in enumerate(strip_tops(layer, config, "k3s2")):
            sched = schedule_for(plan, layer, config, strip_index, col_tile)
            if fault_hook is not None:
                fault_hook(sched)
            state = AccumulatorState(mode="stage1_only" if depthwise else "full")
            n_cyc = len(sched.cycles)
            counts.cycles += n_cyc * groups * (1 if depthwise else F)
            counts.mac_slots += config.mac_slots * n_cyc * groups * (1 if depthwise else F)
            for g in range(groups):
                ch_lo = g * units
                n_act = min(units, C - ch_lo)
                counts.useful_macs += sched.useful_per_unit * n_act * (1 if depthwise else F)
                for cyc in sched.cycles:
                    for slot in cyc.slots:
                        o, w, j = slot.out_row, slot.out_col, cyc.weight_col
                        val = None
                        for i in slot.taps:
                            x = layer.stride * o + i - layer.padding
                            assert 0 <= x < H and strip_top <= x < strip_top + rows
                            pix = inp[ch_lo : ch_lo + n_act, x, slot.in_col]
                            if depthwise:
                                ch = np.arange(ch_lo, ch_lo + n_act)
                                term = pix[None, :] * weights[ch, 0, i, j][None, :]
                            else:
                                term = pix[None, :] * weights[:, ch_lo : ch_lo + n_act, i, j]
                            val = term if val is None else val + term
                        released = state.stage1_accumulate(
                            "pass", (o, w), val,
                            expected=sched.stage1_counts[(o, w)])
                        if released is None:
                            continue
                        if depthwise:
                            merged = released[0]
                        else:
                            merged = stage2_tree_add([released[:, u] for u in range(n_act)])
                        _route_final(state, boundary, layer, out_acc, merged, o, w,
                                     strip_top, rows, g, groups, depthwise, ch_lo,
                                     n_act, n_filters)
            assert state.stage1_pending() == 0
    leftovers = boundary.drain()
    assert not leftovers, "boundary partials left unmerged at layer end"
    counts.boundary_diagnostics.extend(boundary.diagnostics)
    counts.peak_boundary_entries = max(counts.peak_boundary_entries, boundary.peak_entries)


def _run_k1_sub(inp, weights, layer, config, plan, out_acc, counts, fault_hook=None):
    """1x1 layer with elementwise input; stage 3 bypassed."""
    C = layer.in_channels
    F = weights.shape[0]
    S = layer.stride
    Ho, Wo = layer.out_height, layer.out_width
    cpp = channels_per_pass(config, "k1")
    groups = -(-C // cpp)
    sched = schedule_for(plan, layer, config)
    if fault_hook is not None:
        fault_hook(sched)
    oo, ww = np.divmod(np.arange(Ho * Wo), Wo)
    gathered = inp[:, oo * S, ww * S]                       # (C, n_pix)
    acc = np.zeros((F, Ho * Wo), dtype=np.int64)
    n_cyc = len(sched.cycles)
    counts.cycles += n_cyc * groups * F
    counts.mac_slots += config.mac_slots * n_cyc * groups * F
    wk = weights[:, :, 0, 0]
    for g in range(groups):
        ch_lo = g * cpp
        n_act = min(cpp, C - ch_lo)
        for cyc in sched.cycles:
            counts.useful_macs += len(cyc.pixels) * n_act * F
            px = np.asarray(cyc.pixels)
            part = np.einsum("cp,fc->fp", gathered[ch_lo : ch_lo + n_act][:, px],
                             wk[:, ch_lo : ch_lo + n_act])
            acc[:, px] += part
        check_acc_range(acc)
    out_acc += acc.reshape(F, Ho, Wo)


def run_conv_layer(inp_arr, weights_arr, bias_arr, layer, config,
                   sram: SramSpec = SramSpec(), tile_cols_hint=None,
                   fault_hook=None):
    """Execute one convolution layer through the dataflow.

    Returns (pre_activation int64 (F, Ho, Wo), PassCounts).  Kernel
    decomposition happens here: sub-layer outputs accumulate into the
    parent grid before bias/requantization.
    """
    C, H, W = inp_arr.shape
    if (C, H, W) != (layer.in_channels, layer.in_height, layer.in_width):
        raise ShapeError(f"{layer.name}: input {inp_arr.shape} does not match layer")
    depthwise = layer.kind == "depthwise_conv"
    F = C if depthwise else layer.out_channels
    out_acc = np.zeros((F, layer.out_height, layer.out_width), dtype=np.int64)
    counts = PassCounts()
    subs = decompose_layer(layer)
    if len(subs) == 1:
        sub, _ = subs[0]
        plan = plan_tiles(sub, sram, tile_cols_hint)
        _dispatch_sub(inp_arr, weights_arr, sub, config, plan, out_acc, counts, fault_hook)
    else:
        P, S = layer.padding, layer.stride
        padded = np.zeros((C, H + 2 * P, W + 2 * P), dtype=np.int64)
        padded[:, P : P + H, P : P + W] = inp_arr
        for sub, (pi, pj) in subs:
            sub_in = phase_subsample(padded, S, pi, pj, sub.in_height, sub.in_width)
            sub_w = phase_weights(weights_arr, S, pi, pj, sub.kernel_h)
            plan = plan_tiles(sub, sram, tile_cols_hint)
            _dispatch_sub(sub_in, sub_w, sub, config, plan, out_acc, counts, fault_hook)
    check_acc_range(out_acc)
    if bias_arr is not None:
        out_acc += bias_arr.reshape(-1, 1, 1)
        check_acc_range(out_acc)
    return out_acc, counts


def _dispatch_sub(inp, weights, sub, config, plan, out_acc, counts, fault_hook):
    mode = layer_mode(sub)
    if mode == "k1":
        _run_k1_sub(inp, weights, sub, config, plan, out_acc, counts, fault_hook)
    elif mode == "k3s2":
        _run_s2_sub(inp, weights, sub, config, plan, out_acc, counts, fault_hook)
    else:
        _run_spatial_sub(inp, weights, sub, config, plan, out_acc, counts, fault_hook)


def finalize_layer(pre_act, layer, in_frac, w_frac, out_frac):
    q = requantize(pre_act, in_frac, w_frac, out_frac)
    return apply_activation(q, layer.activation)


def dataflow_conv(inp: FixedTensor, weights: FixedTensor, bias, layer,
                  config: PEArrayConfig, out_frac=None, sram=SramSpec(),
                  tile_cols_hint=None, fault_hook=None):
    """Full dataflow counterpart of tensors.direct_conv / depthwise_conv."""
    out_frac = inp.frac_bits if out_frac is None else out_frac
    bias_arr = bias.data if bias is not None else None
    pre, counts = run_conv_layer(inp.data, weights.data, bias_arr, layer, config,
                                 sram, tile_cols_hint, fault_hook)
    out = finalize_layer(pre, layer, inp.frac_bits, weights.frac_bits, out_frac)
    return FixedTensor.from_array(out, frac_bits=out_frac), counts
