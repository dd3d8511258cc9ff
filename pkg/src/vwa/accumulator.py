"""Three-stage pipelined accumulation and the boundary partial-sum SRAM.

Stage 1 collects the kernel-column partials of one block (one channel)
per output coordinate and releases a slot once the expected number of
contributions arrived.  Stage 2 tree-adds the released values of all
blocks in the channel group.  Stage 3 accumulates across channel groups.
Depthwise layers take the stage-1 release as the final value; 1x1 layers
fold the group accumulation into the stage-1/2 loop and skip stage 3.

Values travel as int64 arrays (an optional leading filter axis batches
filters through an identical schedule) and are range-checked against the
32-bit accumulator domain on every release.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import VwaError
from .tensors import check_acc_range

BOUNDARY_CAPACITY_BYTES = 56 * 1024
# Boundary occupancy is modeled per the weight-buffer banking: up to eight
# filters' partials of one strip edge are outstanding at a time.
FILTER_BATCH = 8
BYTES_PER_ENTRY = 4


class AccumulatorError(VwaError):
    pass


@dataclass
class AccumulatorState:
    """Per-layer accumulation state for one (strip, column-tile) pass."""

    mode: str = "full"        # full | skip_stage3 | stage1_only
    stage1: dict = field(default_factory=dict)   # (block, key) -> [value, count]
    stage3: dict = field(default_factory=dict)   # key -> value
    stage3_counts: dict = field(default_factory=dict)

    def stage1_accumulate(self, block: int, key, value, expected: int):
        """Add one kernel-column partial; returns the released value once
        `expected` contributions arrived, else None."""
        slot = self.stage1.get((block, key))
        if slot is None:
            slot = [np.asarray(value, dtype=np.int64).copy(), 1]
            self.stage1[(block, key)] = slot
        else:
            slot[0] = slot[0] + value
            slot[1] += 1
        if slot[1] > expected:
            raise AccumulatorError(f"stage1 slot {key} over-contributed ({slot[1]} > {expected})")
        if slot[1] == expected:
            del self.stage1[(block, key)]
            check_acc_range(slot[0])
            return slot[0]
        return None

    def stage1_pending(self) -> int:
        return len(self.stage1)


def stage2_tree_add(per_block_values) -> np.ndarray:
    """Sum the released per-block (per-channel) values of one coordinate."""
    vals = [np.asarray(v, dtype=np.int64) for v in per_block_values]
    shapes = {v.shape for v in vals}
    if len(shapes) != 1:
        raise AccumulatorError("stage2 operands have mismatched shapes")
    out = np.zeros(vals[0].shape, dtype=np.int64) if vals[0].ndim else np.int64(0)
    for v in vals:
        out = out + v
    check_acc_range(out)
    return out


def stage3_group_accumulate(state: AccumulatorState, value, key,
                            group_index: int, total_groups: int):
    """Accumulate one channel group's contribution; returns the final
    pre-activation sum after the last group, else None."""
    if state.mode == "skip_stage3":
        raise AccumulatorError("stage3 is bypassed in this mode")
    if not (0 <= group_index < total_groups):
        raise AccumulatorError(f"group index {group_index} out of range")
    cur = state.stage3.get(key)
    state.stage3[key] = value if cur is None else cur + value
    state.stage3_counts[key] = state.stage3_counts.get(key, 0) + 1
    if state.stage3_counts[key] == total_groups:
        out = state.stage3.pop(key)
        del state.stage3_counts[key]
        check_acc_range(out)
        return out
    return None


@dataclass
class BoundaryBuffer:
    """SRAM for output rows straddling adjacent row strips.

    Entries are keyed by absolute output coordinates; the first-arriving
    partial is stored, the second merges and frees the entry.  Occupancy
    is tracked against the 56 KB budget using the 8-filter batching the
    weight buffer imposes.
    """

    capacity_bytes: int = BOUNDARY_CAPACITY_BYTES
    entries: dict = field(default_factory=dict)
    peak_entries: int = 0
    diagnostics: list = field(default_factory=list)

    def occupancy_bytes(self, n_filters: int = 1) -> int:
        return len(self.entries) * min(n_filters, FILTER_BATCH) * BYTES_PER_ENTRY

    def store_or_merge(self, key, partial, n_filters: int = 1):
        """Returns the merged full sum when the counterpart was present,
        else stores the partial and returns None."""
        if key in self.entries:
            merged = self.entries.pop(key) + np.asarray(partial, dtype=np.int64)
            check_acc_range(merged)
            return merged
        self.entries[key] = np.asarray(partial, dtype=np.int64).copy()
        self.peak_entries = max(self.peak_entries, len(self.entries))
        occ = self.occupancy_bytes(n_filters)
        if occ > self.capacity_bytes:
            msg = (f"boundary SRAM over capacity: {occ} B of {self.capacity_bytes} B "
                   f"({len(self.entries)} entries)")
            if msg not in self.diagnostics:
                self.diagnostics.append(msg)
        return None

    def drain(self):
        """Layer end: any still-stored partial is a complete edge output
        (its counterpart rows were padding); hand them all out."""
        items = sorted(self.entries.items())
        self.entries.clear()
        return items
