"""Cycle-stepped MAC array: blocks, broadcast operands, mux, summation.

A block is rows x 3 MACs.  Inputs arrive as three candidates per row and a
per-MAC 3-to-1 selector; three weights broadcast down the columns.  Spatial
modes sum along anti-diagonals (rows + 2 sums per block), 1x1 mode sums each
row horizontally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ScheduleError, ShapeError

TOTAL_MACS = 168
COLS = 3
MODES = ("k3s1", "k4", "k5", "k3s2", "k1", "depthwise")
STANDARD_GEOMETRIES = {8: (8, 7, 3), 4: (4, 14, 3)}


@dataclass(frozen=True)
class PEArrayConfig:
    blocks: int
    rows_per_block: int
    cols_per_block: int = COLS
    mode: str = "k3s1"
    custom_geometry: bool = False   # worked-example geometries only

    def __post_init__(self):
        if self.mode not in MODES:
            raise ShapeError(f"unknown mode {self.mode!r}")
        if not self.custom_geometry:
            geom = (self.blocks, self.rows_per_block, self.cols_per_block)
            if geom not in ((8, 7, 3), (4, 14, 3)):
                raise ShapeError(f"geometry {geom} is not one of (8,7,3) / (4,14,3)")
            assert self.blocks * self.rows_per_block * self.cols_per_block == TOTAL_MACS

    @property
    def mac_slots(self) -> int:
        return self.blocks * self.rows_per_block * self.cols_per_block

    @property
    def diagonals(self) -> int:
        return self.rows_per_block + COLS - 1

    def with_mode(self, mode: str) -> "PEArrayConfig":
        return PEArrayConfig(self.blocks, self.rows_per_block, self.cols_per_block,
                             mode, self.custom_geometry)


def reconfigure(blocks: int) -> PEArrayConfig:
    """Array-level reconfiguration; only 8 and 4 block layouts exist."""
    if blocks not in STANDARD_GEOMETRIES:
        raise ScheduleError(f"unsupported block count {blocks}; choose 4 or 8")
    b, r, c = STANDARD_GEOMETRIES[blocks]
    return PEArrayConfig(b, r, c)


@dataclass(frozen=True)
class CycleInputs:
    """Operands for one cycle of one block.

    input_rows: (rows, 3) candidate operands per MAC row
    weight_cols: (3,) or (nf, 3) weights broadcast down the columns
                 (an extra leading axis batches filters through the
                 same schedule)
    mux_select: (rows, 3) selector in {0,1,2}: which candidate each MAC uses
    valid:      (rows, 3) bool, which products feed a real output (useful)
    """

    input_rows: np.ndarray
    weight_cols: np.ndarray
    mux_select: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        r, c = self.input_rows.shape
        if c != COLS or self.mux_select.shape != (r, c) or self.valid.shape != (r, c):
            raise ShapeError("CycleInputs arrays must be (rows, 3)")
        if self.weight_cols.shape[-1] != COLS:
            raise ShapeError("weight_cols last axis must be 3")


@dataclass(frozen=True)
class BlockOutputs:
    """Per-block sums: diagonal partial sums in spatial modes (rows+2 of
    them), per-row horizontal sums in k1 mode.  32-bit domain values
    (int64 storage, range-checked downstream)."""

    sums: np.ndarray          # (..., diagonals) or (..., rows)
    useful_macs: int


def _effective_operands(inputs: CycleInputs) -> np.ndarray:
    rows = np.arange(inputs.input_rows.shape[0])[:, None]
    eff = inputs.input_rows[rows, inputs.mux_select]
    return np.where(inputs.valid, eff, 0)


def step(config: PEArrayConfig, inputs: CycleInputs) -> BlockOutputs:
    """One cycle of one block: multiply mux-selected operands by the
    broadcast weights and reduce along the mode's summation direction."""
    rows = config.rows_per_block
    if inputs.input_rows.shape[0] != rows:
        raise ShapeError(f"expected {rows} input rows, got {inputs.input_rows.shape[0]}")
    eff = _effective_operands(inputs)                      # (rows, 3)
    w = np.asarray(inputs.weight_cols, dtype=np.int64)
    prod = eff[None, :, :] * w.reshape(-1, 1, COLS)        # (nf, rows, 3)
    useful = int(inputs.valid.sum())
    if config.mode == "k1":
        sums = prod.sum(axis=2)                            # (nf, rows)
    else:
        nf = prod.shape[0]
        sums = np.zeros((nf, config.diagonals), dtype=np.int64)
        for c in range(COLS):
            # MAC (r, c) feeds diagonal d = r - c + 2
            sums[:, COLS - 1 - c : COLS - 1 - c + rows] += prod[:, :, c]
    if inputs.weight_cols.ndim == 1:
        sums = sums[0]
    return BlockOutputs(sums=sums, useful_macs=useful)
