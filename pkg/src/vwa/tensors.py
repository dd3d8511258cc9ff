"""Signed 16-bit fixed-point tensors and the direct-convolution oracle.

Everything downstream (the dataflow simulation included) is checked for
exact integer equality against `direct_conv` / `depthwise_conv`, so this
module deliberately stays independent of the scheduler and accumulator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import AccumulatorOverflow, ShapeError

INT16_MIN = -(1 << 15)
INT16_MAX = (1 << 15) - 1
ACC_BITS = 32
ACC_MIN = -(1 << (ACC_BITS - 1))
ACC_MAX = (1 << (ACC_BITS - 1)) - 1


@dataclass(frozen=True)
class FixedTensor:
    """N-dimensional signed 16-bit fixed-point tensor.

    Activations use (channel, height, width) order, weights
    (filter, channel, kh, kw).  `frac_bits` is the binary point position.
    """

    dims: tuple
    data: np.ndarray = field(repr=False)
    frac_bits: int = 0

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.int64).reshape(self.dims)
        if arr.size != int(np.prod(self.dims)):
            raise ShapeError(f"data length {arr.size} != prod(dims) {self.dims}")
        if arr.size and (arr.max() > INT16_MAX or arr.min() < INT16_MIN):
            raise ShapeError("values outside signed 16-bit range")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "data", arr)
        arr.setflags(write=False)

    @classmethod
    def from_array(cls, arr, frac_bits: int = 0) -> "FixedTensor":
        arr = np.asarray(arr, dtype=np.int64)
        return cls(dims=arr.shape, data=arr, frac_bits=frac_bits)

    def to_text(self) -> str:
        head = "tensor " + " ".join(str(d) for d in self.dims) + f" frac={self.frac_bits}"
        body = " ".join(str(int(v)) for v in self.data.reshape(-1))
        return head + "\n" + body + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FixedTensor":
        from . import ParseError

        toks = text.split()
        if not toks or toks[0] != "tensor":
            raise ParseError("tensor file must start with 'tensor'")
        dims = []
        i = 1
        while i < len(toks) and not toks[i].startswith("frac="):
            dims.append(int(toks[i]))
            i += 1
        if i == len(toks):
            raise ParseError("tensor header missing frac=<n>")
        frac = int(toks[i].split("=", 1)[1])
        vals = [int(t) for t in toks[i + 1 :]]
        n = int(np.prod(dims)) if dims else 0
        if len(vals) != n:
            raise ParseError(f"expected {n} values, got {len(vals)}")
        return cls(dims=tuple(dims), data=np.array(vals, dtype=np.int64), frac_bits=frac)


def check_acc_range(arr) -> None:
    """Raise if any partial sum left the signed 32-bit accumulator range."""
    arr = np.asarray(arr)
    if arr.size and (arr.max() > ACC_MAX or arr.min() < ACC_MIN):
        raise AccumulatorOverflow(
            f"partial sum outside 32-bit range: max |value| = {max(abs(int(arr.max())), abs(int(arr.min())))}"
        )


def requantize(acc, in_frac: int, w_frac: int, out_frac: int):
    """Rescale a 32-bit accumulator value to 16 bits.

    Arithmetic shift by (in_frac + w_frac - out_frac) with round-half-up
    (ties toward +inf), then saturation to int16.  Works elementwise on
    arrays; scalars come back as python ints.
    """
    shift = in_frac + w_frac - out_frac
    a = np.asarray(acc, dtype=np.int64)
    check_acc_range(a)
    if shift > 0:
        out = (a + (1 << (shift - 1))) >> shift
    elif shift == 0:
        out = a.copy()
    else:
        out = a << (-shift)
    out = np.clip(out, INT16_MIN, INT16_MAX)
    if np.isscalar(acc) or getattr(acc, "ndim", 1) == 0:
        return int(out)
    return out


def apply_activation(arr, activation: str):
    if activation == "relu":
        return np.maximum(arr, 0)
    if activation == "none":
        return arr
    raise ShapeError(f"unknown activation {activation!r}")


def _conv_accumulate(inp: np.ndarray, w: np.ndarray, stride: int, pad: int,
                     out_h: int, out_w: int, depthwise: bool) -> np.ndarray:
    """Integer accumulation of a convolution, int64 internally."""
    C, H, W = inp.shape
    if depthwise:
        F, kh, kw = w.shape[0], w.shape[2], w.shape[3]
        acc = np.zeros((C, out_h, out_w), dtype=np.int64)
    else:
        F, _, kh, kw = w.shape
        acc = np.zeros((F, out_h, out_w), dtype=np.int64)
    for r in range(out_h):
        for c in range(out_w):
            y0 = r * stride - pad
            x0 = c * stride - pad
            ylo, yhi = max(0, y0), min(H, y0 + kh)
            xlo, xhi = max(0, x0), min(W, x0 + kw)
            if ylo >= yhi or xlo >= xhi:
                continue
            patch = inp[:, ylo:yhi, xlo:xhi]
            wk = w[..., ylo - y0 : yhi - y0, xlo - x0 : xhi - x0]
            if depthwise:
                acc[:, r, c] = np.einsum("chw,chw->c", patch, wk[:, 0] if wk.ndim == 4 else wk)
            else:
                acc[:, r, c] = np.einsum("chw,fchw->f", patch, wk)
    return acc


def conv_output_dims(in_h: int, in_w: int, kernel: int, stride: int, pad: int):
    oh = (in_h + 2 * pad - kernel) // stride + 1
    ow = (in_w + 2 * pad - kernel) // stride + 1
    return oh, ow


def direct_conv(inp: FixedTensor, weights: FixedTensor, bias: FixedTensor | None,
                layer) -> FixedTensor:
    """Reference convolution, bit-exact contract for the whole simulator.

    out[f][r][c] = Act(sum_u sum_i sum_j in[u][S*r+i-P][S*w+j-P] * w[f][u][i][j]
    + bias[f]) accumulated in 32 bits, requantized with round-half-up and
    saturation.  Out-of-image taps read as zero.
    """
    C, H, W = inp.dims
    if layer.in_channels != C or (H, W) != (layer.in_height, layer.in_width):
        raise ShapeError(f"input dims {inp.dims} do not match layer {layer.name}")
    F, Cw, kh, kw = weights.dims
    if Cw != C or kh != layer.kernel_h or kw != layer.kernel_w or F != layer.out_channels:
        raise ShapeError(f"weight dims {weights.dims} do not match layer {layer.name}")
    oh, ow = conv_output_dims(H, W, layer.kernel_h, layer.stride, layer.padding)
    acc = _conv_accumulate(inp.data, weights.data, layer.stride, layer.padding, oh, ow, False)
    if bias is not None:
        if bias.dims != (F,):
            raise ShapeError("bias must have dims (out_channels,)")
        acc = acc + bias.data.reshape(F, 1, 1)
    check_acc_range(acc)
    out_frac = getattr(layer, "out_frac", inp.frac_bits)
    q = requantize(acc, inp.frac_bits, weights.frac_bits, out_frac)
    q = apply_activation(q, layer.activation)
    return FixedTensor.from_array(q, frac_bits=out_frac)


def depthwise_conv(inp: FixedTensor, weights: FixedTensor, bias: FixedTensor | None,
                   layer) -> FixedTensor:
    """Per-channel convolution: as direct_conv with no cross-channel sum."""
    C, H, W = inp.dims
    if layer.in_channels != C:
        raise ShapeError("channel mismatch")
    if weights.dims[0] != C or weights.dims[1] != 1:
        raise ShapeError("depthwise weights must have dims (C, 1, kh, kw)")
    oh, ow = conv_output_dims(H, W, layer.kernel_h, layer.stride, layer.padding)
    acc = _conv_accumulate(inp.data, weights.data, layer.stride, layer.padding, oh, ow, True)
    if bias is not None:
        acc = acc + bias.data.reshape(C, 1, 1)
    check_acc_range(acc)
    out_frac = getattr(layer, "out_frac", inp.frac_bits)
    q = requantize(acc, inp.frac_bits, weights.frac_bits, out_frac)
    q = apply_activation(q, layer.activation)
    return FixedTensor.from_array(q, frac_bits=out_frac)


def pool(inp: FixedTensor, kind: str, kernel: int, stride: int, pad: int = 0) -> FixedTensor:
    """Max/average pooling on int16 (average uses round-half-up)."""
    C, H, W = inp.dims
    oh, ow = conv_output_dims(H, W, kernel, stride, pad)
    out = np.zeros((C, oh, ow), dtype=np.int64)
    for r in range(oh):
        for c in range(ow):
            y0, x0 = r * stride - pad, c * stride - pad
            ylo, yhi = max(0, y0), min(H, y0 + kernel)
            xlo, xhi = max(0, x0), min(W, x0 + kernel)
            patch = inp.data[:, ylo:yhi, xlo:xhi]
            if kind == "max":
                out[:, r, c] = patch.max(axis=(1, 2))
            else:
                n = kernel * kernel
                out[:, r, c] = (patch.sum(axis=(1, 2)) + n // 2) // n
    return FixedTensor.from_array(out, frac_bits=inp.frac_bits)
