"""Network descriptions: parsing, validation, and kernel decomposition.

The model file is line oriented: a `model <name>` header, then one layer
per line (`conv`, `dwconv`, `pool`), whitespace separated `key=value`
fields, `#` comments.  A layer line may carry `chain=0` to mark a branch
input (residual shortcuts, inception branches); chain validation skips
the link from the previous layer in that case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ParseError, ShapeError
from .tensors import conv_output_dims

SUPPORTED_KERNELS_PARSED = {1, 3, 4, 5, 7}
SUPPORTED_KERNELS_SCHED = {1, 3, 4, 5}


@dataclass(frozen=True)
class LayerDescriptor:
    name: str
    kind: str                      # conv | depthwise_conv | pool_max | pool_avg
    in_channels: int
    out_channels: int
    in_height: int
    in_width: int
    kernel_h: int
    kernel_w: int
    stride: int
    padding: int
    activation: str = "none"      # none | relu
    has_bias: bool = False
    chained: bool = True          # False: input comes from an earlier branch point
    # Active tap support inside a (possibly zero-extended) square kernel.
    # Equal to (kernel_h, kernel_w) except for decomposition sub-layers.
    active_kh: int = 0
    active_kw: int = 0

    def __post_init__(self):
        if self.active_kh == 0:
            object.__setattr__(self, "active_kh", self.kernel_h)
        if self.active_kw == 0:
            object.__setattr__(self, "active_kw", self.kernel_w)
        if self.kind not in ("conv", "depthwise_conv", "pool_max", "pool_avg"):
            raise ShapeError(f"{self.name}: unsupported kind {self.kind!r}")
        if self.is_conv:
            if self.kernel_h != self.kernel_w:
                raise ShapeError(f"{self.name}: only square kernels supported")
            if self.kernel_h not in SUPPORTED_KERNELS_PARSED:
                raise ShapeError(f"{self.name}: kernel {self.kernel_h} not in {sorted(SUPPORTED_KERNELS_PARSED)}")
        if self.out_height <= 0 or self.out_width <= 0:
            raise ShapeError(f"{self.name}: non-positive output dims")

    @property
    def is_conv(self) -> bool:
        return self.kind in ("conv", "depthwise_conv")

    @property
    def is_pool(self) -> bool:
        return self.kind.startswith("pool")

    @property
    def out_height(self) -> int:
        return conv_output_dims(self.in_height, self.in_width, self.kernel_h,
                                self.stride, self.padding)[0]

    @property
    def out_width(self) -> int:
        return conv_output_dims(self.in_height, self.in_width, self.kernel_h,
                                self.stride, self.padding)[1]

    @property
    def macs(self) -> int:
        """Algorithmic multiply-accumulates (pooling: 0)."""
        if not self.is_conv:
            return 0
        per_out = self.active_kh * self.active_kw
        ch = 1 if self.kind == "depthwise_conv" else self.in_channels
        return per_out * ch * self.out_channels * self.out_height * self.out_width

    def to_line(self) -> str:
        if self.kind == "pool_max" or self.kind == "pool_avg":
            s = f"pool {self.kind[5:]} k={self.kernel_h} s={self.stride}"
            if self.padding:
                s += f" pad={self.padding}"
            if not self.chained:
                s += f" in={self.in_height}x{self.in_width}x{self.in_channels} chain=0"
            return s
        tag = "conv" if self.kind == "conv" else "dwconv"
        s = (f"{tag} {self.name} in={self.in_height}x{self.in_width}x{self.in_channels}")
        if self.kind == "conv":
            s += f" out={self.out_channels}"
        s += (f" k={self.kernel_h} s={self.stride} pad={self.padding}"
              f" act={self.activation} bias={1 if self.has_bias else 0}")
        if not self.chained:
            s += " chain=0"
        return s


@dataclass(frozen=True)
class NetworkModel:
    name: str
    layers: tuple

    def serialize(self) -> str:
        lines = [f"model {self.name}"]
        lines += [l.to_line() for l in self.layers]
        return "\n".join(lines) + "\n"

    @property
    def conv_layers(self) -> tuple:
        return tuple(l for l in self.layers if l.is_conv)


def _parse_fields(tokens, lineno):
    fields = {}
    for tok in tokens:
        if "=" not in tok:
            raise ParseError(f"line {lineno}: expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        fields[k] = v
    return fields


def _parse_in(value, lineno):
    parts = value.split("x")
    if len(parts) != 3:
        raise ParseError(f"line {lineno}: in= must be <H>x<W>x<C>")
    try:
        h, w, c = (int(p) for p in parts)
    except ValueError:
        raise ParseError(f"line {lineno}: in= must be integers") from None
    return h, w, c


def parse_model(source: str) -> NetworkModel:
    """Parse a model description document into a validated NetworkModel."""
    name = None
    layers = []
    prev = None
    pool_count = 0
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        head = toks[0]
        if head == "model":
            if len(toks) != 2:
                raise ParseError(f"line {lineno}: model header needs exactly one name")
            name = toks[1]
            continue
        if name is None:
            raise ParseError(f"line {lineno}: missing 'model <name>' header")
        if head in ("conv", "dwconv"):
            if len(toks) < 2 or "=" in toks[1]:
                raise ParseError(f"line {lineno}: {head} needs a layer name")
            lname = toks[1]
            f = _parse_fields(toks[2:], lineno)
            try:
                h, w, c = _parse_in(f["in"], lineno)
                k = int(f["k"])
                s = int(f["s"])
                pad = int(f.get("pad", "0"))
                act = f.get("act", "none")
                bias = f.get("bias", "0") == "1"
                chained = f.get("chain", "1") != "0"
                if head == "conv":
                    out = int(f["out"])
                else:
                    out = c
            except KeyError as e:
                raise ParseError(f"line {lineno}: missing field {e.args[0]}") from None
            except ValueError:
                raise ParseError(f"line {lineno}: malformed integer field") from None
            if act not in ("relu", "none"):
                raise ParseError(f"line {lineno}: act must be relu|none")
            kind = "conv" if head == "conv" else "depthwise_conv"
            try:
                layer = LayerDescriptor(lname, kind, c, out, h, w, k, k, s, pad,
                                        act, bias, chained)
            except ShapeError as e:
                raise ParseError(f"line {lineno}: {e}") from None
            layers.append(layer)
            prev = layer
        elif head == "pool":
            if len(toks) < 2 or toks[1] not in ("max", "avg"):
                raise ParseError(f"line {lineno}: pool needs max|avg")
            f = _parse_fields(toks[2:], lineno)
            if prev is None and "in" not in f:
                raise ParseError(f"line {lineno}: pool cannot be the first layer")
            try:
                k = int(f["k"])
                s = int(f["s"])
                pad = int(f.get("pad", "0"))
                chained = f.get("chain", "1") != "0"
                if "in" in f:
                    h, w, c = _parse_in(f["in"], lineno)
                else:
                    h, w, c = prev.out_height, prev.out_width, prev.out_channels
            except (KeyError, ValueError):
                raise ParseError(f"line {lineno}: pool needs integer k= and s=") from None
            pool_count += 1
            layer = LayerDescriptor(f"pool{pool_count}", f"pool_{toks[1]}", c, c,
                                    h, w, k, k, s, pad, chained=chained)
            layers.append(layer)
            prev = layer
        else:
            raise ParseError(f"line {lineno}: unsupported kind {head!r}")
    if name is None:
        raise ParseError("missing 'model <name>' header")
    if not layers:
        raise ParseError("empty model")
    model = NetworkModel(name=name, layers=tuple(layers))
    diags = validate_chain(model)
    if diags:
        raise ParseError("shape-chain mismatch: " + "; ".join(diags))
    return model


def validate_chain(model: NetworkModel) -> list:
    """One diagnostic per inter-layer shape violation; empty when clean."""
    diags = []
    prev = None
    for layer in model.layers:
        if prev is not None and layer.chained:
            expect = (prev.out_channels, prev.out_height, prev.out_width)
            got = (layer.in_channels, layer.in_height, layer.in_width)
            if expect != got:
                diags.append(
                    f"{layer.name}: input {got[1]}x{got[2]}x{got[0]} does not match "
                    f"{prev.name} output {expect[1]}x{expect[2]}x{expect[0]}"
                )
        prev = layer
    return diags


def decompose_layer(layer: LayerDescriptor):
    """Split unsupported kernels into schedulable sub-layers.

    Returns a list of (sub_layer, (row_phase, col_phase)) pairs.  Supported
    kernels pass through unchanged.  A 7x7 kernel of stride S in {2, 4} is
    split polyphase: taps are grouped by (i mod S, j mod S), each group
    convolves the phase-subsampled input with unit stride, and the group
    outputs sum elementwise to the original result.  Sub-kernels are
    zero-extended to 4x4 so every phase runs the 4-tap path; the real tap
    support is carried in active_kh/active_kw.
    """
    if not layer.is_conv:
        return [(layer, (0, 0))]
    k, s = layer.kernel_h, layer.stride
    if k in SUPPORTED_KERNELS_SCHED and s in (1, 2):
        return [(layer, (0, 0))]
    if k == 7 and s in (2, 4):
        sub_k = 4
        out_h, out_w = layer.out_height, layer.out_width
        subs = []
        for pi in range(s):
            for pj in range(s):
                n_i = (k - pi + s - 1) // s   # taps in this row phase
                n_j = (k - pj + s - 1) // s
                # Phase input is the (pi, pj) subsample of the padded image,
                # extended so every output row/col sees sub_k taps.
                ph = out_h + sub_k - 1
                pw = out_w + sub_k - 1
                sub = LayerDescriptor(
                    name=f"{layer.name}@p{pi}{pj}",
                    kind=layer.kind,
                    in_channels=layer.in_channels,
                    out_channels=layer.out_channels,
                    in_height=ph,
                    in_width=pw,
                    kernel_h=sub_k,
                    kernel_w=sub_k,
                    stride=1,
                    padding=0,
                    activation="none",
                    has_bias=False,
                    active_kh=n_i,
                    active_kw=n_j,
                )
                subs.append((sub, (pi, pj)))
        return subs
    raise ShapeError(f"{layer.name}: kernel {k} / stride {s} outside the supported set")


def phase_subsample(padded: np.ndarray, stride: int, pi: int, pj: int,
                    rows: int, cols: int) -> np.ndarray:
    """Extract phase (pi, pj) of a padded (C, H, W) array, zero-extended
    to exactly (rows, cols) in the spatial dims."""
    sub = padded[:, pi::stride, pj::stride]
    c = sub.shape[0]
    out = np.zeros((c, rows, cols), dtype=padded.dtype)
    h = min(rows, sub.shape[1])
    w = min(cols, sub.shape[2])
    out[:, :h, :w] = sub[:, :h, :w]
    return out


def phase_weights(weights: np.ndarray, stride: int, pi: int, pj: int,
                  sub_k: int = 4) -> np.ndarray:
    """Tap group (i mod S, j mod S) of (F, C, 7, 7) weights, zero-extended
    to a (F, C, sub_k, sub_k) kernel."""
    w = weights[:, :, pi::stride, pj::stride]
    out = np.zeros(w.shape[:2] + (sub_k, sub_k), dtype=weights.dtype)
    out[:, :, : w.shape[2], : w.shape[3]] = w
    return out
