"""Staged accumulation and boundary partial-sum handling."""

import numpy as np
import pytest

from vwa.accumulator import (AccumulatorError, AccumulatorState,
                             BoundaryBuffer, stage2_tree_add,
                             stage3_group_accumulate)
from vwa.model import LayerDescriptor
from vwa.pe_array import reconfigure
from vwa.simulate import dataflow_conv
from vwa.tensors import FixedTensor, direct_conv


def test_stage1_releases_after_three_contributions():
    st = AccumulatorState()
    assert st.stage1_accumulate(0, (2, 5), 10, expected=3) is None
    assert st.stage1_accumulate(0, (2, 5), 20, expected=3) is None
    out = st.stage1_accumulate(0, (2, 5), 12, expected=3)
    assert int(out) == 42
    assert st.stage1_pending() == 0


def test_stage1_releases_after_five_for_5x5():
    st = AccumulatorState()
    for k in range(4):
        assert st.stage1_accumulate(1, (0, 0), 1, expected=5) is None
    assert int(st.stage1_accumulate(1, (0, 0), 1, expected=5)) == 5


def test_stage1_overcontribution_is_an_error():
    st = AccumulatorState()
    st.stage1_accumulate(0, (0, 0), 1, expected=1)
    st.stage1_accumulate(0, (0, 0), 1, expected=1)   # fresh slot, releases again
    with pytest.raises(AccumulatorError):
        slot_key = (0, (1, 1))
        st.stage1[slot_key] = [np.int64(0), 2]
        st.stage1_accumulate(0, (1, 1), 1, expected=2)


def test_depthwise_release_is_final_value():
    """Stage-1 output is the per-channel result: one release carries the
    full 3-column accumulation, nothing goes to stages 2/3."""
    rng = np.random.default_rng(9)
    layer = LayerDescriptor("d", "depthwise_conv", 4, 4, 9, 9, 3, 3, 1, 1)
    inp = FixedTensor.from_array(rng.integers(-30, 30, (4, 9, 9)), 0)
    w = FixedTensor.from_array(rng.integers(-10, 10, (4, 1, 3, 3)), 0)
    from vwa.tensors import depthwise_conv
    ref = depthwise_conv(inp, w, None, layer)
    got, _ = dataflow_conv(inp, w, None, layer, reconfigure(8))
    assert np.array_equal(ref.data, got.data)


def test_stage2_zero_and_onehot_and_random():
    assert int(stage2_tree_add([0] * 8)) == 0
    vals = [0, 0, 7, 0, 0, 0, 0, 0]
    assert int(stage2_tree_add(vals)) == 7
    rng = np.random.default_rng(1)
    r = rng.integers(-1000, 1000, 8)
    assert int(stage2_tree_add(list(r))) == int(r.sum())


def test_stage2_shape_mismatch():
    with pytest.raises(AccumulatorError):
        stage2_tree_add([np.zeros(2), np.zeros(3)])


def test_stage3_single_group_immediate():
    st = AccumulatorState()
    out = stage3_group_accumulate(st, 5, (0, 0), 0, 1)
    assert int(out) == 5


def test_stage3_two_groups_matches_oracle():
    rng = np.random.default_rng(12)
    layer = LayerDescriptor("c", "conv", 16, 4, 8, 8, 3, 3, 1, 1)  # 2 groups of 8
    inp = FixedTensor.from_array(rng.integers(-25, 25, (16, 8, 8)), 4)
    w = FixedTensor.from_array(rng.integers(-10, 10, (4, 16, 3, 3)), 4)
    ref = direct_conv(inp, w, None, layer)
    got, _ = dataflow_conv(inp, w, None, layer, reconfigure(8))
    assert np.array_equal(ref.data, got.data)


def test_stage3_bypassed_in_k1_mode():
    st = AccumulatorState(mode="skip_stage3")
    with pytest.raises(AccumulatorError):
        stage3_group_accumulate(st, 1, (0, 0), 0, 1)
    # and a 1x1 layer with several channel groups still matches the oracle
    rng = np.random.default_rng(13)
    layer = LayerDescriptor("k", "conv", 30, 4, 7, 8, 1, 1, 1, 0)
    inp = FixedTensor.from_array(rng.integers(-25, 25, (30, 7, 8)), 4)
    w = FixedTensor.from_array(rng.integers(-10, 10, (4, 30, 1, 1)), 4)
    ref = direct_conv(inp, w, None, layer)
    got, _ = dataflow_conv(inp, w, None, layer, reconfigure(8))
    assert np.array_equal(ref.data, got.data)


def test_stage3_group_index_out_of_range():
    st = AccumulatorState()
    with pytest.raises(AccumulatorError):
        stage3_group_accumulate(st, 1, (0, 0), 3, 2)


# --- boundary buffer ---------------------------------------------------------

def test_boundary_interior_passthrough_semantics():
    buf = BoundaryBuffer()
    assert buf.store_or_merge((5, 5), np.int64(10)) is None
    out = buf.store_or_merge((5, 5), np.int64(32))
    assert int(out) == 42
    assert not buf.entries


def test_boundary_rows_routed_for_strip_edges():
    """A 7-row interior strip of a 3x3 layer leaves two partial rows at
    its top and two at its bottom, all routed through the buffer."""
    from vwa.memory import plan_tiles
    from vwa.scheduler import schedule_k3s1
    layer = LayerDescriptor("b", "conv", 1, 1, 21, 8, 3, 3, 1, 1)
    s = schedule_k3s1(plan_tiles(layer), layer, reconfigure(8), strip_index=1)
    tops = set()
    bottoms = set()
    for (o, w) in s.stage1_counts:
        xs = [o + i - 1 for i in range(3) if 0 <= o + i - 1 < 21]
        if any(x < s.strip_top for x in xs):
            tops.add(o)
        if any(x >= s.strip_top + 7 for x in xs):
            bottoms.add(o)
    assert len(tops) == 2 and len(bottoms) == 2


def test_two_strip_split_equals_unsplit():
    """14-row image split across two 7-row strips merges to exactly the
    oracle result."""
    rng = np.random.default_rng(14)
    layer = LayerDescriptor("m", "conv", 3, 2, 14, 9, 3, 3, 1, 1)
    inp = FixedTensor.from_array(rng.integers(-30, 30, (3, 14, 9)), 4)
    w = FixedTensor.from_array(rng.integers(-12, 12, (2, 3, 3, 3)), 4)
    ref = direct_conv(inp, w, None, layer)
    got, counts = dataflow_conv(inp, w, None, layer, reconfigure(8))
    assert np.array_equal(ref.data, got.data)
    assert counts.peak_boundary_entries > 0          # the split really happened
    assert counts.boundary_diagnostics == []


def test_boundary_capacity_diagnostic():
    buf = BoundaryBuffer(capacity_bytes=8)
    buf.store_or_merge((0, 0), np.int64(1), n_filters=8)
    buf.store_or_merge((0, 1), np.int64(1), n_filters=8)
    assert buf.diagnostics and "over capacity" in buf.diagnostics[0]
